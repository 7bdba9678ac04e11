//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use avsep::ndgrad::{Graph, Tensor, Var};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Build = dyn Fn(&mut Graph<f64>, &[Var]) -> avsep::Result<Var>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Scalar objective `sum(r * f(inputs))` with a fixed random projection `r`,
/// evaluated by a plain forward pass.
fn objective(build: &Build, inputs: &[Tensor<f64>], proj: &[f64]) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    g.value(out).data().iter().zip(proj).map(|(a, b)| a * b).sum()
}

/// Central finite differences of the projected objective for every input.
pub fn finite_difference(build: &Build, inputs: &[Tensor<f64>], proj: &[f64], h: f64) -> Vec<Vec<f64>> {
    (0..inputs.len())
        .map(|which| {
            (0..inputs[which].numel())
                .map(|j| {
                    let bump = |delta: f64| {
                        let mut xs = inputs.to_vec();
                        let mut d = xs[which].data().to_vec();
                        d[j] += delta;
                        xs[which] = Tensor::new(xs[which].shape().to_vec(), d).unwrap();
                        objective(build, &xs, proj)
                    };
                    (bump(h) - bump(-h)) / (2.0 * h)
                })
                .collect()
        })
        .collect()
}

/// Analytic gradients of the same projected objective through the tape.
pub fn analytic(build: &Build, inputs: &[Tensor<f64>], proj: &[f64]) -> Vec<Vec<f64>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    let shape = g.value(out).shape().to_vec();
    let r = g.constant(Tensor::new(shape, proj.to_vec()).unwrap()).unwrap();
    let prod = g.mul(out, r).unwrap();
    let loss = g.sum(prod).unwrap();
    let grads = g.backward(loss).unwrap();
    vars.iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .get(v)
                .map(|g| g.into_data())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// Worst relative error over all inputs between tape gradients and central
/// differences (h = 1e-4).
pub fn gradcheck(build: &Build, inputs: &[Tensor<f64>], seed: u64) -> f64 {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
    let out = build(&mut g, &vars).unwrap();
    let n = g.value(out).numel();
    let mut r = rng(seed ^ 0x9e37_79b9);
    let proj: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let an = analytic(build, inputs, &proj);
    let fd = finite_difference(build, inputs, &proj, 1e-4);
    an.iter()
        .zip(&fd)
        .map(|(a, f)| rel_err(a, f))
        .fold(0.0, f64::max)
}

/// Named gradient-check cases covering every differentiable op, parameterized
/// by seed. Inputs are kept away from the kinks of leaky_relu and |.|.
pub fn op_cases(seed: u64) -> Vec<(&'static str, Box<Build>, Vec<Tensor<f64>>)> {
    let mut r = rng(seed);
    let mut t = |shape: &[usize]| rand_tensor(&mut r, shape, -1.0, 1.0);
    let away_from_zero = |x: Tensor<f64>| x.map(|v| if v.abs() < 0.05 { v + 0.1f64.copysign(v) } else { v });
    let mut cases: Vec<(&'static str, Box<Build>, Vec<Tensor<f64>>)> = Vec::new();
    cases.push((
        "conv2d",
        Box::new(|g, v| g.conv2d(v[0], v[1], 1, 1)),
        vec![t(&[2, 3, 8, 8]), t(&[4, 3, 3, 3])],
    ));
    cases.push((
        "conv2d_stride2",
        Box::new(|g, v| g.conv2d(v[0], v[1], 2, 1)),
        vec![t(&[2, 3, 8, 8]), t(&[4, 3, 4, 4])],
    ));
    cases.push((
        "conv_transpose2d",
        Box::new(|g, v| g.conv_transpose2d(v[0], v[1], 2, 1)),
        vec![t(&[2, 4, 4, 4]), t(&[4, 3, 4, 4])],
    ));
    cases.push((
        "leaky_relu",
        Box::new(|g, v| g.leaky_relu(v[0], 0.2)),
        vec![away_from_zero(t(&[3, 5]))],
    ));
    cases.push(("sigmoid", Box::new(|g, v| g.sigmoid(v[0])), vec![t(&[4, 3])]));
    cases.push(("add", Box::new(|g, v| g.add(v[0], v[1])), vec![t(&[2, 3]), t(&[2, 3])]));
    cases.push(("sub", Box::new(|g, v| g.sub(v[0], v[1])), vec![t(&[2, 3]), t(&[2, 3])]));
    cases.push(("mul", Box::new(|g, v| g.mul(v[0], v[1])), vec![t(&[2, 3]), t(&[2, 3])]));
    cases.push(("affine", Box::new(|g, v| g.affine(v[0], -1.7, 0.3)), vec![t(&[5])]));
    cases.push((
        "concat_channels",
        Box::new(|g, v| g.concat_channels(v[0], v[1])),
        vec![t(&[2, 2, 3, 3]), t(&[2, 3, 3, 3])],
    ));
    let a = t(&[2, 6]);
    let b = t(&[2, 6]);
    let sep: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| if (x - y).abs() < 0.05 { y + 0.2 } else { *y })
        .collect();
    cases.push((
        "l1_loss",
        Box::new(|g, v| g.l1_loss(v[0], v[1])),
        vec![a, Tensor::new([2, 6], sep).unwrap()],
    ));
    cases.push((
        "linear",
        Box::new(|g, v| g.linear(v[0], v[1], v[2])),
        vec![t(&[3, 5]), t(&[4, 5]), t(&[4])],
    ));
    cases.push(("global_avg_pool", Box::new(|g, v| g.global_avg_pool(v[0])), vec![t(&[2, 3, 4, 4])]));
    cases.push((
        "batch_norm",
        Box::new(|g, v| g.batch_norm(v[0], v[1], v[2])),
        vec![t(&[3, 2, 3, 3]), t(&[2]), t(&[2])],
    ));
    cases.push((
        "cosine_similarity",
        Box::new(|g, v| g.cosine_similarity(v[0], v[1])),
        vec![t(&[7]), t(&[7])],
    ));
    cases.push((
        "cosine_similarity_rows",
        Box::new(|g, v| g.cosine_similarity(v[0], v[1])),
        vec![t(&[3, 5]), t(&[3, 5])],
    ));
    cases.push(("tile", Box::new(|g, v| g.tile(v[0], 2, 3)), vec![t(&[2, 4])]));
    cases.push((
        "channel_weighted_sum",
        Box::new(|g, v| g.channel_weighted_sum(v[0], v[1])),
        vec![t(&[2, 3, 4, 4]), t(&[2, 3])],
    ));
    cases.push((
        "channel_bias",
        Box::new(|g, v| g.channel_bias(v[0], v[1])),
        vec![t(&[2, 3, 2, 2]), t(&[3])],
    ));
    cases.push(("gather_rows", Box::new(|g, v| g.gather_rows(v[0], &[1, 0, 1])), vec![t(&[2, 3])]));
    cases.push(("mean", Box::new(|g, v| g.mean(v[0])), vec![t(&[3, 3])]));
    cases.push(("sum", Box::new(|g, v| g.sum(v[0])), vec![t(&[3, 3])]));
    cases.push(("reshape", Box::new(|g, v| g.reshape(v[0], [6])), vec![t(&[2, 3])]));
    cases
}

/// A small network touching every op: conv -> BN -> leaky -> concat(tile) ->
/// convT -> channel weighting -> sigmoid -> L1 + cosine head.
pub fn composite_case(seed: u64) -> (Box<Build>, Vec<Tensor<f64>>) {
    let mut r = rng(seed.wrapping_add(1000));
    let mut t = |shape: &[usize]| rand_tensor(&mut r, shape, -1.0, 1.0);
    let inputs = vec![
        t(&[2, 1, 8, 8]),  // 0 spectrogram
        t(&[4, 1, 4, 4]),  // 1 enc kernel
        t(&[4]),           // 2 gamma
        t(&[4]),           // 3 beta
        t(&[2, 3]),        // 4 embedding
        t(&[3, 3]),        // 5 proj2 w
        t(&[3]),           // 6 proj2 b
        t(&[7, 5, 4, 4]),  // 7 dec kernel
        t(&[5, 3]),        // 8 proj1 w
        t(&[5]),           // 9 proj1 b
        t(&[2, 1, 8, 8]),  // 10 target
        t(&[6, 4]),        // 11 head w
        t(&[6]),           // 12 head b
        t(&[2, 6]),        // 13 clap
        t(&[5]),           // 14 dec bias
    ];
    let build: Box<Build> = Box::new(|g, v| {
        let h = g.conv2d(v[0], v[1], 2, 1)?;
        let h = g.batch_norm(h, v[2], v[3])?;
        let h = g.leaky_relu(h, 0.2)?;
        let p2 = g.linear(v[4], v[5], v[6])?;
        let tiled = g.tile(p2, 4, 4)?;
        let fused = g.concat_channels(h, tiled)?;
        let d = g.conv_transpose2d(fused, v[7], 2, 1)?;
        let d = g.channel_bias(d, v[14])?;
        let p1 = g.linear(v[4], v[8], v[9])?;
        let logits = g.channel_weighted_sum(d, p1)?;
        let mask = g.sigmoid(logits)?;
        let est = g.mul(mask, v[0])?;
        let sep = g.l1_loss(est, v[10])?;
        let pooled = g.global_avg_pool(h)?;
        let z = g.linear(pooled, v[11], v[12])?;
        let z = g.gather_rows(z, &[0, 1])?;
        let cos = g.cosine_similarity(z, v[13])?;
        let cm = g.mean(cos)?;
        let align = g.affine(cm, -1.0, 1.0)?;
        let sub = g.sub(sep, align)?;
        let tot = g.add(sep, align)?;
        let both = g.mul(sub, tot)?;
        g.reshape(both, [1])
    });
    (build, inputs)
}

/// `<conv2d(x,k), y> - <x, conv_transpose2d(y,k)>` relative to the product of norms.
pub fn adjoint_gap(seed: u64, n: usize, c: usize, k: usize, hw: usize, ks: usize, stride: usize, pad: usize) -> f64 {
    let mut r = rng(seed);
    let x = rand_tensor(&mut r, &[n, c, hw, hw], -1.0, 1.0);
    let kern = rand_tensor(&mut r, &[k, c, ks, ks], -1.0, 1.0);
    let mut g = Graph::new();
    let xv = g.constant(x.clone()).unwrap();
    let kv = g.constant(kern).unwrap();
    let cx = g.conv2d(xv, kv, stride, pad).unwrap();
    let ys = g.value(cx).shape().to_vec();
    let y = rand_tensor(&mut r, &ys, -1.0, 1.0);
    let yv = g.constant(y.clone()).unwrap();
    let ty = g.conv_transpose2d(yv, kv, stride, pad).unwrap();
    let lhs = g.value(cx).dot(&y);
    let rhs = x.dot(g.value(ty));
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

/// Brute-force O(N^2) DFT of a real frame, bins `0..=N/2` as (re, im).
pub fn naive_dft(frame: &[f64]) -> Vec<(f64, f64)> {
    let n = frame.len();
    (0..=n / 2)
        .map(|k| {
            frame.iter().enumerate().fold((0.0, 0.0), |(re, im), (t, &x)| {
                let ang = -2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64;
                (re + x * ang.cos(), im + x * ang.sin())
            })
        })
        .collect()
}

/// Periodic Hann from its closed form, independent of the library.
pub fn hann_ref(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

pub fn rel_l2(est: &[f64], reference: &[f64]) -> f64 {
    let num: f64 = est.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = reference.iter().map(|b| b * b).sum();
    (num / den).sqrt()
}

pub fn white_noise(rng: &mut ChaCha8Rng, len: usize, amp: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-amp..amp)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a)
}

/// Orthonormal basis (two-pass Gram-Schmidt) of the delays `0..flen` of
/// every signal, truncated to the signal length.
pub fn delay_basis(signals: &[&[f64]], flen: usize) -> Vec<Vec<f64>> {
    let n = signals[0].len();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for s in signals {
        for d in 0..flen {
            let mut v = vec![0.0; n];
            v[d..].copy_from_slice(&s[..n - d]);
            for _ in 0..2 {
                for b in &basis {
                    let p = dot(&v, b);
                    v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
                }
            }
            let nv = norm2(&v).sqrt();
            if nv > 1e-8 {
                basis.push(v.into_iter().map(|x| x / nv).collect());
            }
        }
    }
    basis
}

pub fn orthogonalize(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut v = v.to_vec();
    for _ in 0..2 {
        for b in basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
    }
    v
}

pub fn rescale(v: &[f64], energy: f64) -> Vec<f64> {
    let g = (energy / norm2(v)).sqrt();
    v.iter().map(|x| g * x).collect()
}
