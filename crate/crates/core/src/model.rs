//! Hybrid classifier: standardized 36 features → linear layer → embedding
//! angles → ansatz → Pauli-Z readout → linear layer → 8 logits.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{build_circuit, iqp_pair_slot, AnsatzSpec, EmbeddingKind};
use crate::data::{Features, Sample, Standardizer, N_CLASSES, N_FEATURES};
use crate::error::{Error, Result};
use crate::gradients::{adjoint_vjp_with, param_shift_grad, GradientRequest, Which};
use crate::statevector::{run_circuit, Circuit};
use crate::train::{Classifier, Trainable};

pub type Logits = [f64; N_CLASSES];

/// How circuit-angle derivatives are obtained during `backward`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GradientMethod {
    /// Reverse sweep; about three forward passes per sample.
    #[default]
    Adjoint,
    /// Two shifted evaluations per parameterized gate occurrence.
    ParameterShift,
}

pub fn softmax(logits: &Logits) -> Logits {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p = [0.0; N_CLASSES];
    let mut sum = 0.0;
    for (pi, &l) in p.iter_mut().zip(logits) {
        *pi = (l - max).exp();
        sum += *pi;
    }
    p.iter_mut().for_each(|v| *v /= sum);
    p
}

/// Softmax cross-entropy `-log softmax(logits)[label]`.
pub fn loss(logits: &Logits, label: u8) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label as usize]
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax(logits: &Logits) -> u8 {
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate() {
        if l > logits[best] {
            best = i;
        }
    }
    best as u8
}

pub fn trainable_count(spec: &AnsatzSpec) -> usize {
    let n = spec.n_qubits;
    (N_FEATURES * n + n) + spec.param_count() + (N_CLASSES * n + N_CLASSES)
}

#[derive(Clone, Debug, PartialEq)]
pub struct QnnGradients {
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    pub theta: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
    /// Mean loss over the batch.
    pub loss: f64,
}

impl QnnGradients {
    fn zeros(n: usize, p: usize) -> Self {
        Self {
            w_in: vec![0.0; n * N_FEATURES],
            b_in: vec![0.0; n],
            theta: vec![0.0; p],
            w_out: vec![0.0; N_CLASSES * n],
            b_out: vec![0.0; N_CLASSES],
            loss: 0.0,
        }
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 5] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.theta,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    /// Same layout as [`QnnModel::params`].
    pub fn flatten(&self) -> Vec<f64> {
        [&self.w_in, &self.b_in, &self.theta, &self.w_out, &self.b_out]
            .into_iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct QnnModel {
    spec: AnsatzSpec,
    circuit: Circuit,
    standardizer: Standardizer,
    /// Row-major `n x 36`.
    w_in: Vec<f64>,
    b_in: Vec<f64>,
    theta: Vec<f64>,
    /// Row-major `8 x n`.
    w_out: Vec<f64>,
    b_out: Vec<f64>,
    seed: u64,
    gradient_method: GradientMethod,
}

impl PartialEq for QnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.standardizer == other.standardizer
            && self.w_in == other.w_in
            && self.b_in == other.b_in
            && self.theta == other.theta
            && self.w_out == other.w_out
            && self.b_out == other.b_out
            && self.seed == other.seed
    }
}

impl QnnModel {
    /// All weights zero, identity preprocessing.
    pub fn zeros(spec: AnsatzSpec) -> Result<Self> {
        let circuit = build_circuit(&spec)?;
        let n = spec.n_qubits;
        Ok(Self {
            spec,
            standardizer: Standardizer::identity(),
            w_in: vec![0.0; n * N_FEATURES],
            b_in: vec![0.0; n],
            theta: vec![0.0; circuit.variational_slots()],
            w_out: vec![0.0; N_CLASSES * n],
            b_out: vec![0.0; N_CLASSES],
            circuit,
            seed: 0,
            gradient_method: GradientMethod::default(),
        })
    }

    /// Glorot-uniform linear layers, `theta ~ U[0, 2pi)`, zero biases.
    pub fn init(spec: AnsatzSpec, standardizer: Standardizer, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        m.standardizer = standardizer;
        m.seed = seed;
        let n = spec.n_qubits;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let lim_in = (6.0 / (N_FEATURES + n) as f64).sqrt();
        let lim_out = (6.0 / (n + N_CLASSES) as f64).sqrt();
        m.w_in.iter_mut().for_each(|w| *w = rng.gen_range(-lim_in..lim_in));
        m.theta.iter_mut().for_each(|t| *t = rng.gen_range(0.0..TAU));
        m.w_out.iter_mut().for_each(|w| *w = rng.gen_range(-lim_out..lim_out));
        Ok(m)
    }

    pub fn spec(&self) -> &AnsatzSpec {
        &self.spec
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn trainable_count(&self) -> usize {
        trainable_count(&self.spec)
    }

    pub fn set_gradient_method(&mut self, method: GradientMethod) {
        self.gradient_method = method;
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn theta_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn w_in_mut(&mut self) -> &mut [f64] {
        &mut self.w_in
    }

    pub fn b_in_mut(&mut self) -> &mut [f64] {
        &mut self.b_in
    }

    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn w_out_mut(&mut self) -> &mut [f64] {
        &mut self.w_out
    }

    pub fn b_out_mut(&mut self) -> &mut [f64] {
        &mut self.b_out
    }

    fn check_finite(x: &Features) -> Result<()> {
        match x.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFiniteInput(i)),
            None => Ok(()),
        }
    }

    /// Standardized features and the `n` raw pre-embedding values `a = W_in z + b_in`.
    fn input_layer(&self, x: &Features) -> (Features, Vec<f64>) {
        let z = self.standardizer.transform(x);
        let a = self
            .w_in
            .chunks_exact(N_FEATURES)
            .zip(&self.b_in)
            .map(|(row, b)| row.iter().zip(&z).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        (z, a)
    }

    /// Circuit embedding-slot values for pre-embedding values `a`.
    pub fn embedding_angles(&self, a: &[f64]) -> Vec<f64> {
        match self.spec.embedding {
            EmbeddingKind::Angle => a.to_vec(),
            EmbeddingKind::Iqp => {
                let n = a.len();
                let mut e = a.to_vec();
                for i in 0..n {
                    for j in i + 1..n {
                        e.push(a[i] * a[j]);
                    }
                }
                e
            }
        }
    }

    fn output_layer(&self, r: &[f64]) -> Logits {
        let n = self.spec.n_qubits;
        let mut logits = [0.0; N_CLASSES];
        for (c, l) in logits.iter_mut().enumerate() {
            *l = self.w_out[c * n..(c + 1) * n]
                .iter()
                .zip(r)
                .map(|(w, v)| w * v)
                .sum::<f64>()
                + self.b_out[c];
        }
        logits
    }

    pub fn readout(&self, x: &Features) -> Result<Vec<f64>> {
        Self::check_finite(x)?;
        let (_, a) = self.input_layer(x);
        run_circuit(&self.circuit, &self.theta, &self.embedding_angles(&a))
    }

    pub fn forward(&self, x: &Features) -> Result<Logits> {
        Ok(self.output_layer(&self.readout(x)?))
    }

    /// Mean loss and mean gradients over `batch`.
    pub fn backward(&self, batch: &[&Sample]) -> Result<QnnGradients> {
        if batch.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let n = self.spec.n_qubits;
        let mut g = QnnGradients::zeros(n, self.theta.len());
        for sample in batch {
            Self::check_finite(&sample.features)?;
            let (z, a) = self.input_layer(&sample.features);
            let e = self.embedding_angles(&a);

            let mut dlogits = [0.0; N_CLASSES];
            let mut sample_loss = 0.0;
            let mut readout_weights = |r: &[f64]| -> Vec<f64> {
                let logits = self.output_layer(r);
                sample_loss = loss(&logits, sample.label);
                dlogits = softmax(&logits);
                dlogits[sample.label as usize] -= 1.0;
                (0..n)
                    .map(|i| (0..N_CLASSES).map(|c| dlogits[c] * self.w_out[c * n + i]).sum())
                    .collect()
            };

            let (r, g_theta, g_emb) = match self.gradient_method {
                GradientMethod::Adjoint => {
                    let res = adjoint_vjp_with(&self.circuit, &self.theta, &e, readout_weights)?;
                    (res.readout, res.grad_variational, res.grad_embedding)
                }
                GradientMethod::ParameterShift => {
                    let r = run_circuit(&self.circuit, &self.theta, &e)?;
                    let w = readout_weights(&r);
                    let jac = param_shift_grad(&GradientRequest::new(
                        &self.circuit,
                        &self.theta,
                        &e,
                        Which::Both,
                    ))?;
                    let mut flat = jac.contract(&w);
                    let g_emb = flat.split_off(self.theta.len());
                    (r, flat, g_emb)
                }
            };

            // chain embedding-slot gradients back to the pre-embedding values
            let mut g_a = g_emb[..n].to_vec();
            if self.spec.embedding == EmbeddingKind::Iqp {
                for i in 0..n {
                    for j in i + 1..n {
                        let gp = g_emb[iqp_pair_slot(n, i, j)];
                        g_a[i] += gp * a[j];
                        g_a[j] += gp * a[i];
                    }
                }
            }

            g.loss += sample_loss;
            for (acc, v) in g.theta.iter_mut().zip(&g_theta) {
                *acc += v;
            }
            for i in 0..n {
                g.b_in[i] += g_a[i];
                for k in 0..N_FEATURES {
                    g.w_in[i * N_FEATURES + k] += g_a[i] * z[k];
                }
            }
            for c in 0..N_CLASSES {
                g.b_out[c] += dlogits[c];
                for i in 0..n {
                    g.w_out[c * n + i] += dlogits[c] * r[i];
                }
            }
        }
        let inv = 1.0 / batch.len() as f64;
        for part in g.parts_mut() {
            part.iter_mut().for_each(|v| *v *= inv);
        }
        g.loss *= inv;
        Ok(g)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let n = self.spec.n_qubits;
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            spec: self.spec,
            seed: self.seed,
            standardizer: self.standardizer.clone(),
            w_in: self.w_in.chunks(N_FEATURES).map(<[f64]>::to_vec).collect(),
            b_in: self.b_in.clone(),
            theta: self.theta.clone(),
            w_out: self.w_out.chunks(n).map(<[f64]>::to_vec).collect(),
            b_out: self.b_out.clone(),
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("unsupported checkpoint format `{}`", ck.format)));
        }
        let mut m = Self::zeros(ck.spec)?;
        let n = ck.spec.n_qubits;
        let shape_ok = ck.w_in.len() == n
            && ck.w_in.iter().all(|r| r.len() == N_FEATURES)
            && ck.b_in.len() == n
            && ck.theta.len() == m.theta.len()
            && ck.w_out.len() == N_CLASSES
            && ck.w_out.iter().all(|r| r.len() == n)
            && ck.b_out.len() == N_CLASSES
            && ck.standardizer.mean.len() == N_FEATURES
            && ck.standardizer.scale.len() == N_FEATURES;
        if !shape_ok {
            return Err(Error::ShapeMismatch("checkpoint weights do not match spec".into()));
        }
        m.seed = ck.seed;
        m.standardizer = ck.standardizer;
        m.w_in = ck.w_in.concat();
        m.b_in = ck.b_in;
        m.theta = ck.theta;
        m.w_out = ck.w_out.concat();
        m.b_out = ck.b_out;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(&self.to_checkpoint())?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

pub const CHECKPOINT_FORMAT: &str = "autoansatz-qnn/1";

/// Self-describing on-disk model. Floats are written in shortest
/// round-trip form, so save → load is bit-exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub spec: AnsatzSpec,
    pub seed: u64,
    pub standardizer: Standardizer,
    pub w_in: Vec<Vec<f64>>,
    pub b_in: Vec<f64>,
    pub theta: Vec<f64>,
    pub w_out: Vec<Vec<f64>>,
    pub b_out: Vec<f64>,
}

impl Classifier for QnnModel {
    fn logits(&self, x: &Features) -> Result<Logits> {
        self.forward(x)
    }
}

impl Trainable for QnnModel {
    fn params(&self) -> Vec<f64> {
        [&self.w_in, &self.b_in, &self.theta, &self.w_out, &self.b_out]
            .into_iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.trainable_count() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                self.trainable_count(),
                params.len()
            )));
        }
        let mut rest = params;
        for part in [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.theta,
            &mut self.w_out,
            &mut self.b_out,
        ] {
            let (head, tail) = rest.split_at(part.len());
            part.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn batch_gradient(&self, batch: &[&Sample]) -> Result<(Vec<f64>, f64)> {
        let g = self.backward(batch)?;
        Ok((g.flatten(), g.loss))
    }
}
