//! Classical reference classifiers: a residual Mish MLP, k-nearest
//! neighbours, and Gaussian naive Bayes.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Features, Sample, Standardizer, N_CLASSES, N_FEATURES};
use crate::error::{Error, Result};
use crate::model::{argmax, softmax, Logits};
use crate::train::{Classifier, Trainable};

pub const HIDDEN: usize = 100;
pub const RESIDUAL_BLOCKS: usize = 3;
pub const DEFAULT_K: usize = 5;
pub const VAR_FLOOR: f64 = 1e-9;

pub fn mish(x: f64) -> f64 {
    x * softplus(x).tanh()
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn mish_grad(x: f64) -> f64 {
    let t = softplus(x).tanh();
    let sigmoid = 1.0 / (1.0 + (-x).exp());
    t + x * (1.0 - t * t) * sigmoid
}

pub fn mlp_param_count() -> usize {
    (N_FEATURES * HIDDEN + HIDDEN) + RESIDUAL_BLOCKS * (HIDDEN * HIDDEN + HIDDEN) + (HIDDEN * N_CLASSES + N_CLASSES)
}

/// Dense layer, row-major `out x in` weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn glorot<R: Rng>(n_in: usize, n_out: usize, rng: &mut R) -> Self {
        let a = (6.0 / (n_in + n_out) as f64).sqrt();
        Self {
            n_in,
            n_out,
            w: (0..n_in * n_out).map(|_| rng.gen_range(-a..a)).collect(),
            b: vec![0.0; n_out],
        }
    }

    fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.w
            .chunks_exact(self.n_in)
            .zip(&self.b)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates parameter gradients into `gw`/`gb` and returns dL/dx.
    fn backward(&self, x: &[f64], gy: &[f64], gw: &mut [f64], gb: &mut [f64]) -> Vec<f64> {
        let mut gx = vec![0.0; self.n_in];
        for (o, &g) in gy.iter().enumerate() {
            gb[o] += g;
            let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
            let grow = &mut gw[o * self.n_in..(o + 1) * self.n_in];
            for i in 0..self.n_in {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
        gx
    }

    fn len(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// `h0 = mish(W0 x + b0)`, then `h <- h + mish(W h + b)` per block, then a
/// linear read-out to the 8 logits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub standardizer: Standardizer,
    pub input: Linear,
    pub blocks: Vec<Linear>,
    pub output: Linear,
    pub seed: u64,
}

struct Trace {
    z: Features,
    pre: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    logits: Logits,
}

impl MlpModel {
    pub fn init(standardizer: Standardizer, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = Linear::glorot(N_FEATURES, HIDDEN, &mut rng);
        let blocks = (0..RESIDUAL_BLOCKS)
            .map(|_| Linear::glorot(HIDDEN, HIDDEN, &mut rng))
            .collect();
        let output = Linear::glorot(HIDDEN, N_CLASSES, &mut rng);
        Self {
            standardizer,
            input,
            blocks,
            output,
            seed,
        }
    }

    pub fn param_count(&self) -> usize {
        self.input.len() + self.blocks.iter().map(Linear::len).sum::<usize>() + self.output.len()
    }

    fn layers(&self) -> impl Iterator<Item = &Linear> {
        std::iter::once(&self.input)
            .chain(self.blocks.iter())
            .chain(std::iter::once(&self.output))
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Linear> {
        std::iter::once(&mut self.input)
            .chain(self.blocks.iter_mut())
            .chain(std::iter::once(&mut self.output))
    }

    fn trace(&self, x: &Features) -> Result<Trace> {
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        let z = self.standardizer.transform(x);
        let p0 = self.input.forward(&z);
        let mut h: Vec<f64> = p0.iter().map(|&v| mish(v)).collect();
        let mut pre = vec![p0];
        let mut hidden = vec![h.clone()];
        for block in &self.blocks {
            let p = block.forward(&h);
            h = h.iter().zip(&p).map(|(a, &b)| a + mish(b)).collect();
            pre.push(p);
            hidden.push(h.clone());
        }
        let out = self.output.forward(&h);
        let mut logits = [0.0; N_CLASSES];
        logits.copy_from_slice(&out);
        Ok(Trace {
            z,
            pre,
            hidden,
            logits,
        })
    }

    pub fn forward(&self, x: &Features) -> Result<Logits> {
        Ok(self.trace(x)?.logits)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

impl Classifier for MlpModel {
    fn logits(&self, x: &Features) -> Result<Logits> {
        self.forward(x)
    }
}

impl Trainable for MlpModel {
    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in self.layers() {
            p.extend_from_slice(&l.w);
            p.extend_from_slice(&l.b);
        }
        p
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::SlotCountMismatch {
                what: "mlp parameters",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        let mut off = 0;
        for l in self.layers_mut() {
            let nw = l.w.len();
            l.w.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn batch_gradient(&self, batch: &[&Sample]) -> Result<(Vec<f64>, f64)> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let mut gw: Vec<Vec<f64>> = self.layers().map(|l| vec![0.0; l.w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.layers().map(|l| vec![0.0; l.b.len()]).collect();
        let last = gw.len() - 1;
        let mut total = 0.0;
        for s in batch {
            let t = self.trace(&s.features)?;
            let p = softmax(&t.logits);
            total += crate::model::loss(&t.logits, s.label);
            let mut g: Vec<f64> = p.to_vec();
            g[s.label as usize] -= 1.0;
            let mut gh = self
                .output
                .backward(&t.hidden[RESIDUAL_BLOCKS], &g, &mut gw[last], &mut gb[last]);
            for k in (0..RESIDUAL_BLOCKS).rev() {
                let gp: Vec<f64> = gh
                    .iter()
                    .zip(&t.pre[k + 1])
                    .map(|(g, &v)| g * mish_grad(v))
                    .collect();
                let through = self.blocks[k].backward(&t.hidden[k], &gp, &mut gw[k + 1], &mut gb[k + 1]);
                gh.iter_mut().zip(&through).for_each(|(a, b)| *a += b);
            }
            let gp: Vec<f64> = gh.iter().zip(&t.pre[0]).map(|(g, &v)| g * mish_grad(v)).collect();
            self.input.backward(&t.z, &gp, &mut gw[0], &mut gb[0]);
        }
        let m = batch.len() as f64;
        let mut flat = Vec::with_capacity(self.param_count());
        for (w, b) in gw.iter().zip(&gb) {
            flat.extend(w.iter().map(|v| v / m));
            flat.extend(b.iter().map(|v| v / m));
        }
        Ok((flat, total / m))
    }
}

// ---------------------------------------------------------------- kNN

/// Majority label of the `k` Euclidean-nearest rows; equal distances go to
/// the lower row index, tied votes to the smaller label.
pub fn knn_predict(train: &Dataset, x: &Features, k: usize) -> Result<u8> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > train.len() {
        return Err(Error::Config(format!(
            "k must be in 1..={}, got {k}",
            train.len()
        )));
    }
    let mut d: Vec<(f64, usize)> = train
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let dist: f64 = s.features.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            (dist, i)
        })
        .collect();
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = [0usize; N_CLASSES];
    for &(_, i) in &d[..k] {
        votes[train.samples()[i].label as usize] += 1;
    }
    let best = *votes.iter().max().unwrap();
    Ok(votes.iter().position(|&v| v == best).unwrap() as u8)
}

pub fn knn_accuracy(train: &Dataset, test: &Dataset, k: usize) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut correct = 0;
    for s in test {
        if knn_predict(train, &s.features, k)? == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

// ---------------------------------------------------------------- GNB

#[derive(Clone, Debug, PartialEq)]
pub struct GnbModel {
    pub mean: Vec<[f64; N_FEATURES]>,
    /// Population variance, floored at `VAR_FLOOR`.
    pub var: Vec<[f64; N_FEATURES]>,
    pub prior: [f64; N_CLASSES],
}

pub fn gnb_fit(dataset: &Dataset) -> Result<GnbModel> {
    let counts = dataset.class_counts();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(c as u8));
    }
    let mut mean = vec![[0.0; N_FEATURES]; N_CLASSES];
    let mut var = vec![[0.0; N_FEATURES]; N_CLASSES];
    for s in dataset {
        let m = &mut mean[s.label as usize];
        m.iter_mut().zip(&s.features).for_each(|(a, b)| *a += b);
    }
    for (m, &n) in mean.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    for s in dataset {
        let c = s.label as usize;
        for f in 0..N_FEATURES {
            var[c][f] += (s.features[f] - mean[c][f]).powi(2);
        }
    }
    for (v, &n) in var.iter_mut().zip(&counts) {
        v.iter_mut().for_each(|x| *x = (*x / n as f64).max(VAR_FLOOR));
    }
    let total = dataset.len() as f64;
    let mut prior = [0.0; N_CLASSES];
    prior.iter_mut().zip(&counts).for_each(|(p, &n)| *p = n as f64 / total);
    Ok(GnbModel { mean, var, prior })
}

impl GnbModel {
    /// Unnormalized log posterior per class.
    pub fn log_joint(&self, x: &Features) -> Logits {
        let mut out = [0.0; N_CLASSES];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.prior[c].ln()
                + (0..N_FEATURES)
                    .map(|f| {
                        let v = self.var[c][f];
                        -0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x[f] - self.mean[c][f]).powi(2) / v)
                    })
                    .sum::<f64>();
        }
        out
    }

    pub fn predict(&self, x: &Features) -> u8 {
        argmax(&self.log_joint(x))
    }
}

impl Classifier for GnbModel {
    fn logits(&self, x: &Features) -> Result<Logits> {
        Ok(self.log_joint(x))
    }
}
