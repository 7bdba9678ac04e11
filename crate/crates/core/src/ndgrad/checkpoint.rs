//! Binary container for named parameter tensors.
//!
//! Layout (all integers `u64` little-endian, all values `f64` little-endian):
//!
//! ```text
//! magic      8 bytes  b"AVSEPCK1"
//! count      u64      number of records
//! record*    name_len u64 | name bytes (UTF-8) | rank u64 | extents rank*u64 | values prod(extents)*f64
//! ```
//!
//! Records are written in name order. Scalars of any [`Real`] type are
//! widened to `f64` on write and narrowed on read.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 8] = b"AVSEPCK1";

// Guards against allocating absurd buffers from a corrupt header.
const MAX_NAME: u64 = 4096;
const MAX_RANK: u64 = 16;

pub fn write_params<T: Real, W: Write>(params: &ParamStore<T>, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(params.len() as u64).to_le_bytes())?;
    for (name, t) in params.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(t.rank() as u64).to_le_bytes())?;
        for &e in t.shape() {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for v in t.data() {
            w.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    w.flush()
}

fn bad(msg: impl Into<String>) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.into())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

pub fn read_params<T: Real, R: Read>(mut r: R) -> std::io::Result<ParamStore<T>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let count = read_u64(&mut r)?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = read_u64(&mut r)?;
        if name_len > MAX_NAME {
            return Err(bad(format!("parameter name length {name_len} too large")));
        }
        let mut name = vec![0u8; name_len as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| bad("parameter name is not UTF-8"))?;
        let rank = read_u64(&mut r)?;
        if rank > MAX_RANK {
            return Err(bad(format!("rank {rank} of `{name}` too large")));
        }
        let shape = (0..rank)
            .map(|_| read_u64(&mut r).map(|v| v as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            let v = f64::from_le_bytes(read_u64(&mut r)?.to_le_bytes());
            data.push(T::from_f64(v).ok_or_else(|| bad("value not representable"))?);
        }
        let t = Tensor::new(shape, data).map_err(|e| bad(format!("`{name}`: {e}")))?;
        params.insert(name, t);
    }
    Ok(params)
}

pub fn save<T: Real>(params: &ParamStore<T>, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_params(params, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load<T: Real>(path: &Path) -> Result<ParamStore<T>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_params(BufReader::new(f)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_of_single_record() {
        let mut p = ParamStore::<f64>::new();
        p.insert("ab", Tensor::new([2], vec![1.5, -2.0]).unwrap());
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        let mut want = MAGIC.to_vec();
        want.extend(1u64.to_le_bytes());
        want.extend(2u64.to_le_bytes());
        want.extend(b"ab");
        want.extend(1u64.to_le_bytes());
        want.extend(2u64.to_le_bytes());
        want.extend(1.5f64.to_le_bytes());
        want.extend((-2.0f64).to_le_bytes());
        assert_eq!(buf, want);
        let back: ParamStore<f64> = read_params(buf.as_slice()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn rejects_truncated_and_foreign_files() {
        assert!(read_params::<f64, _>(&b"NOTACKPT"[..]).is_err());
        let mut p = ParamStore::<f64>::new();
        p.insert("w", Tensor::zeros([3, 3]));
        let mut buf = Vec::new();
        write_params(&p, &mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(read_params::<f64, _>(buf.as_slice()).is_err());
    }
}
