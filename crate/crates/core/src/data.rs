//! Synthetic beam-SNR-like data, CSV I/O and session-based splitting.
//!
//! Rows carry 36 real features, a class label in `0..8` and a recording
//! session in `0..7`. Sessions `0..4` train, `4..7` test.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_FEATURES: usize = 36;
pub const N_CLASSES: usize = 8;
pub const N_SESSIONS: usize = 7;
pub const TRAIN_SESSIONS: usize = 4;

pub type Features = [f64; N_FEATURES];

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Features,
    pub label: u8,
    pub session: u8,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if s.label as usize >= N_CLASSES || s.session as usize >= N_SESSIONS {
                return Err(Error::Config(format!(
                    "row {i}: label {} / session {} out of range",
                    s.label, s.session
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    fn select(&self, idx: impl IntoIterator<Item = usize>) -> Dataset {
        Dataset {
            samples: idx.into_iter().map(|i| self.samples[i].clone()).collect(),
        }
    }

    /// Seeded random partition; `fraction` of the rows (rounded) go to the
    /// second part. Row order within each part follows the original order.
    pub fn random_split(&self, fraction: f64, seed: u64) -> (Dataset, Dataset) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let k = ((self.len() as f64) * fraction.clamp(0.0, 1.0)).round() as usize;
        let (second, first) = idx.split_at(k);
        let (mut first, mut second) = (first.to_vec(), second.to_vec());
        first.sort_unstable();
        second.sort_unstable();
        (self.select(first), self.select(second))
    }

    /// Seeded subset of `rows` rows (all rows if `rows >= len`), original order kept.
    pub fn subsample(&self, rows: usize, seed: u64) -> Dataset {
        if rows >= self.len() {
            return self.clone();
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(rows);
        idx.sort_unstable();
        self.select(idx)
    }

    pub fn class_counts(&self) -> [usize; N_CLASSES] {
        let mut c = [0; N_CLASSES];
        for s in &self.samples {
            c[s.label as usize] += 1;
        }
        c
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub per_class_per_session: usize,
    /// Std-dev of the class prototypes.
    pub separation: f64,
    /// Within-class std-dev.
    pub noise: f64,
    /// Std-dev of the per-session offset.
    pub session_shift: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            per_class_per_session: 200,
            separation: 3.0,
            noise: 1.0,
            session_shift: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("separation", self.separation),
            ("noise", self.noise),
            ("session shift", self.session_shift),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

fn gaussian_vector(rng: &mut ChaCha8Rng, scale: f64) -> Features {
    let mut v = [0.0; N_FEATURES];
    for x in v.iter_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *x = scale * z;
    }
    v
}

/// Class prototype + session offset + isotropic noise, all drawn from one seeded stream.
pub fn generate_synthetic(config: &SynthConfig) -> Result<Dataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let prototypes: Vec<Features> = (0..N_CLASSES)
        .map(|_| gaussian_vector(&mut rng, config.separation))
        .collect();
    let offsets: Vec<Features> = (0..N_SESSIONS)
        .map(|_| gaussian_vector(&mut rng, config.session_shift))
        .collect();
    let mut samples = Vec::with_capacity(N_CLASSES * N_SESSIONS * config.per_class_per_session);
    for (session, offset) in offsets.iter().enumerate() {
        for (label, proto) in prototypes.iter().enumerate() {
            for _ in 0..config.per_class_per_session {
                let noise = gaussian_vector(&mut rng, config.noise);
                let mut features = [0.0; N_FEATURES];
                for k in 0..N_FEATURES {
                    features[k] = proto[k] + offset[k] + noise[k];
                }
                samples.push(Sample {
                    features,
                    label: label as u8,
                    session: session as u8,
                });
            }
        }
    }
    Ok(Dataset { samples })
}

/// `(train, test)` = sessions `0..4` and `4..7`.
pub fn split_by_session(dataset: &Dataset) -> Result<(Dataset, Dataset)> {
    let mut seen = [false; N_SESSIONS];
    for s in dataset {
        seen[s.session as usize] = true;
    }
    if let Some(missing) = seen.iter().position(|&p| !p) {
        return Err(Error::MissingSession(missing as u8));
    }
    let (train, test): (Vec<Sample>, Vec<Sample>) = dataset
        .samples
        .iter()
        .cloned()
        .partition(|s| (s.session as usize) < TRAIN_SESSIONS);
    Ok((Dataset { samples: train }, Dataset { samples: test }))
}

pub fn write_csv<W: Write>(out: W, dataset: &Dataset, seed: Option<u64>) -> Result<()> {
    let mut out = BufWriter::new(out);
    if let Some(seed) = seed {
        writeln!(out, "# seed={seed}")?;
    }
    write!(out, "label,session")?;
    for k in 0..N_FEATURES {
        write!(out, ",f{k}")?;
    }
    writeln!(out)?;
    for s in dataset {
        write!(out, "{},{}", s.label, s.session)?;
        for v in &s.features {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn save_csv(path: impl AsRef<Path>, dataset: &Dataset, seed: Option<u64>) -> Result<()> {
    write_csv(File::create(path)?, dataset, seed)
}

pub fn read_csv<R: Read>(input: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r?,
        None => return Err(Error::EmptyDataset),
    };
    let line_of = |r: &csv::StringRecord| r.position().map_or(0, |p| p.line());
    let expected: Vec<String> = ["label".to_string(), "session".to_string()]
        .into_iter()
        .chain((0..N_FEATURES).map(|k| format!("f{k}")))
        .collect();
    if header.iter().ne(expected.iter().map(String::as_str)) {
        return Err(Error::Parse {
            line: line_of(&header),
            msg: "header must be label,session,f0,...,f35".into(),
        });
    }
    let mut samples = Vec::new();
    for record in records {
        let record = record?;
        let line = line_of(&record);
        if record.len() != N_FEATURES + 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected {} columns, found {}", N_FEATURES + 2, record.len()),
            });
        }
        let int_cell = |i: usize, name: &str, limit: usize| -> Result<u8> {
            let v: i64 = record[i].parse().map_err(|_| Error::Parse {
                line,
                msg: format!("{name} `{}` is not an integer", &record[i]),
            })?;
            if v < 0 || v as usize >= limit {
                return Err(Error::Parse {
                    line,
                    msg: format!("{name} {v} out of range 0..{limit}"),
                });
            }
            Ok(v as u8)
        };
        let label = int_cell(0, "label", N_CLASSES)?;
        let session = int_cell(1, "session", N_SESSIONS)?;
        let mut features = [0.0; N_FEATURES];
        for (k, f) in features.iter_mut().enumerate() {
            let cell = &record[k + 2];
            *f = cell.parse().map_err(|_| Error::Parse {
                line,
                msg: format!("f{k} `{cell}` is not a number"),
            })?;
        }
        samples.push(Sample {
            features,
            label,
            session,
        });
    }
    Ok(Dataset { samples })
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    read_csv(File::open(path)?)
}

/// Per-feature standardization with statistics from one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; N_FEATURES],
            scale: vec![1.0; N_FEATURES],
        }
    }

    pub fn fit(dataset: &Dataset) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let m = dataset.len() as f64;
        let mut mean = vec![0.0; N_FEATURES];
        for s in dataset {
            for (acc, v) in mean.iter_mut().zip(&s.features) {
                *acc += v;
            }
        }
        mean.iter_mut().for_each(|v| *v /= m);
        let mut var = vec![0.0; N_FEATURES];
        for s in dataset {
            for k in 0..N_FEATURES {
                let d = s.features[k] - mean[k];
                var[k] += d * d;
            }
        }
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / m).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Self { mean, scale })
    }

    pub fn transform(&self, x: &Features) -> Features {
        let mut z = [0.0; N_FEATURES];
        for k in 0..N_FEATURES {
            z[k] = (x[k] - self.mean[k]) / self.scale[k];
        }
        z
    }
}
