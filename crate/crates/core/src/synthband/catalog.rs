use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};

/// Shipped 8-class catalog.
pub const DEFAULT_CATALOG: &str = include_str!("../../data/catalog.toml");

/// Amplitude envelope family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Envelope {
    /// Exponential decay, re-struck every `period_s` (drawn per clip).
    Pluck { decay_s: f64, period_s: [f64; 2] },
    /// Linear attack and release around a flat body.
    Sustain { attack_s: f64, release_s: f64 },
    /// Struck like a pluck, with low-passed noise of relative level `noise`.
    Burst {
        decay_s: f64,
        period_s: [f64; 2],
        noise: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vibrato {
    pub rate_hz: f64,
    pub depth_cents: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstrumentSpec {
    pub class_id: usize,
    pub name: String,
    pub harmonics: Vec<f64>,
    pub f0_range: [f64; 2],
    pub envelope: Envelope,
    #[serde(default)]
    pub vibrato: Option<Vibrato>,
}

impl InstrumentSpec {
    fn validate(&self, sample_rate: u32) -> Result<()> {
        let who = &self.name;
        let h = &self.harmonics;
        if h.is_empty() || h.len() > 8 {
            return Err(config_err!("{who}: need 1 to 8 harmonic amplitudes"));
        }
        if h.iter().any(|a| !(a.is_finite() && *a >= 0.0)) || h[0] <= 0.0 {
            return Err(config_err!(
                "{who}: harmonic amplitudes must be >= 0 with a positive fundamental"
            ));
        }
        let [lo, hi] = self.f0_range;
        let ceiling = sample_rate as f64 / 2.0 / 8.0;
        if !(lo > 20.0 && lo <= hi && hi < ceiling) {
            return Err(config_err!(
                "{who}: f0 range [{lo}, {hi}] must lie in (20, {ceiling}) Hz"
            ));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let period_ok = |p: [f64; 2]| positive(p[0]) && p[0] <= p[1];
        let ok = match self.envelope {
            Envelope::Pluck { decay_s, period_s } => positive(decay_s) && period_ok(period_s),
            Envelope::Sustain {
                attack_s,
                release_s,
            } => attack_s >= 0.0 && release_s >= 0.0,
            Envelope::Burst {
                decay_s,
                period_s,
                noise,
            } => positive(decay_s) && period_ok(period_s) && noise >= 0.0,
        };
        if !ok {
            return Err(config_err!("{who}: invalid envelope {:?}", self.envelope));
        }
        if let Some(v) = self.vibrato {
            if !(v.rate_hz >= 0.0 && v.depth_cents >= 0.0 && v.depth_cents < 100.0) {
                return Err(config_err!("{who}: invalid vibrato {v:?}"));
            }
        }
        Ok(())
    }
}

/// Ordered instrument list; `instruments[i].class_id == i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    #[serde(rename = "instrument")]
    pub instruments: Vec<InstrumentSpec>,
}

impl Catalog {
    pub fn parse(text: &str, sample_rate: u32) -> Result<Self> {
        let cat: Catalog = toml::from_str(text).map_err(|e| Error::Parse {
            path: "<catalog>".into(),
            message: e.to_string(),
        })?;
        cat.validate(sample_rate)?;
        Ok(cat)
    }

    pub fn load(path: &Path, sample_rate: u32) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Catalog::parse(&text, sample_rate).map_err(|e| match e {
            Error::Parse { message, .. } => Error::Parse {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn default_for(sample_rate: u32) -> Result<Self> {
        Catalog::parse(DEFAULT_CATALOG, sample_rate)
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        for (i, spec) in self.instruments.iter().enumerate() {
            if spec.class_id != i {
                return Err(config_err!(
                    "instrument {:?} has class_id {} but sits at position {i}",
                    spec.name,
                    spec.class_id
                ));
            }
            spec.validate(sample_rate)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.instruments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instruments.is_empty()
    }

    pub fn get(&self, class_id: usize) -> Option<&InstrumentSpec> {
        self.instruments.get(class_id)
    }

    pub fn names(&self) -> Vec<&str> {
        self.instruments.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("catalog serializes")
    }
}
