use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{draw_classes, make_mixture, BatchSampler, Clip, MixturePair, Split};
use crate::dsp::{read_wav, write_wav};
use crate::error::{input_err, Error, Result};

/// One frozen test mixture: which classes, rendered with which seeds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestItem {
    pub pair: usize,
    pub class_ids: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// Fixed list of (class, seed) tuples shared by every evaluated model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestSet {
    pub items: Vec<TestItem>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    path: String,
    class_id: usize,
    seed: u64,
    split: String,
    pair: usize,
}

const MANIFEST: &str = "manifest.csv";

impl TestSet {
    /// With two sources per mixture, class pairs are dealt round-robin
    /// (reshuffled every round) so every pair is equally represented;
    /// otherwise classes are drawn at random.
    pub fn generate(n_classes: usize, n_sources: usize, n_items: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut items = Vec::with_capacity(n_items);
        if n_sources == 2 {
            draw_classes(&mut rng, n_classes, 2)?;
            let mut pairs: Vec<[usize; 2]> = (0..n_classes)
                .flat_map(|a| (a + 1..n_classes).map(move |b| [a, b]))
                .collect();
            while items.len() < n_items {
                pairs.shuffle(&mut rng);
                for &[a, b] in pairs.iter().take(n_items - items.len()) {
                    let class_ids = if rng.random::<bool>() { vec![a, b] } else { vec![b, a] };
                    let seeds = vec![rng.random(), rng.random()];
                    items.push(TestItem {
                        pair: items.len(),
                        class_ids,
                        seeds,
                    });
                }
            }
        } else {
            for pair in 0..n_items {
                let class_ids = draw_classes(&mut rng, n_classes, n_sources)?;
                let seeds = class_ids.iter().map(|_| rng.random()).collect();
                items.push(TestItem {
                    pair,
                    class_ids,
                    seeds,
                });
            }
        }
        Ok(TestSet { items })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Render every item with the fixed centre crop.
    pub fn render(&self, sampler: &BatchSampler) -> Result<Vec<MixturePair>> {
        // centre crops never consume randomness
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        self.items
            .iter()
            .map(|it| sampler.mixture(&it.class_ids, &it.seeds, Split::Test, &mut unused))
            .collect()
    }

    /// Write one WAV per source and per mixture plus `manifest.csv`
    /// (source rows only). Returns the rendered mixtures.
    pub fn write(&self, dir: &Path, sampler: &BatchSampler) -> Result<Vec<MixturePair>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mixtures = self.render(sampler)?;
        let manifest = dir.join(MANIFEST);
        let mut w = csv::Writer::from_path(&manifest).map_err(|e| Error::io(&manifest, e.into()))?;
        for (it, mix) in self.items.iter().zip(&mixtures) {
            // sources are stored unscaled so each file sits on the PCM grid
            for (j, (&c, &s)) in it.class_ids.iter().zip(&it.seeds).enumerate() {
                let name = format!("pair{:04}_src{j}.wav", it.pair);
                let unscaled = mix.sources[j].waveform.scaled(1.0 / mix.gain);
                write_wav(&dir.join(&name), &unscaled)?;
                w.serialize(ManifestRow {
                    path: name,
                    class_id: c,
                    seed: s,
                    split: Split::Test.as_str().into(),
                    pair: it.pair,
                })?;
            }
            write_wav(&dir.join(format!("pair{:04}_mix.wav", it.pair)), &mix.mixture)?;
        }
        w.flush().map_err(|e| Error::io(&manifest, e))?;
        Ok(mixtures)
    }

    /// Read a directory written by [`TestSet::write`]; mixtures are rebuilt
    /// from the stored sources.
    pub fn load(dir: &Path) -> Result<(TestSet, Vec<MixturePair>)> {
        let manifest = dir.join(MANIFEST);
        let mut r = csv::Reader::from_path(&manifest).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(&manifest, io),
            other => Error::Parse {
                path: manifest.clone(),
                message: format!("{other:?}"),
            },
        })?;
        let mut by_pair: BTreeMap<usize, Vec<Clip>> = BTreeMap::new();
        for row in r.deserialize() {
            let row: ManifestRow = row?;
            let waveform = read_wav(&dir.join(&row.path))?;
            by_pair.entry(row.pair).or_default().push(Clip {
                waveform,
                class_id: row.class_id,
                seed: row.seed,
                f0_hz: None,
            });
        }
        if by_pair.is_empty() {
            return Err(input_err!("{} lists no clips", manifest.display()));
        }
        let mut items = Vec::with_capacity(by_pair.len());
        let mut mixtures = Vec::with_capacity(by_pair.len());
        for (pair, clips) in by_pair {
            items.push(TestItem {
                pair,
                class_ids: clips.iter().map(|c| c.class_id).collect(),
                seeds: clips.iter().map(|c| c.seed).collect(),
            });
            mixtures.push(make_mixture(clips)?);
        }
        Ok((TestSet { items }, mixtures))
    }

    /// SHA-256 over class ids, seeds and source samples, as hex.
    pub fn fingerprint(&self, mixtures: &[MixturePair]) -> String {
        let mut h = Sha256::new();
        for (it, mix) in self.items.iter().zip(mixtures) {
            for ((&c, &s), src) in it.class_ids.iter().zip(&it.seeds).zip(&mix.sources) {
                h.update((c as u64).to_le_bytes());
                h.update(s.to_le_bytes());
                for v in src.waveform.samples() {
                    // +0.0 folds the sign of zero
                    h.update((v + 0.0).to_le_bytes());
                }
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
