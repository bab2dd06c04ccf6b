//! AutoAnsatz search: a tree-structured Parzen estimator proposes
//! (embedding, ansatz, n, L, lr0) configurations, successive halving prunes
//! hopeless or diverging trials at geometric epoch rungs, and every finished
//! trial is appended to a JSON-lines store that can be replayed later.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::ansatz::{AnsatzSpec, EmbeddingKind, VariationalKind};
use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::model::{trainable_count, QnnModel};
use crate::train::{evaluate, train, Decision, TrainConfig, TrainStatus};

pub const N_STARTUP: usize = 10;
pub const GAMMA: f64 = 0.25;
pub const N_CANDIDATES: usize = 24;
pub const MIN_BANDWIDTH: f64 = 0.1;
pub const ETA: usize = 3;
pub const DEFAULT_RUNGS: [usize; 5] = [1, 3, 9, 27, 81];

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub embeddings: Vec<EmbeddingKind>,
    pub variationals: Vec<VariationalKind>,
    /// Inclusive.
    pub n: (usize, usize),
    /// Inclusive.
    pub layers: (usize, usize),
    /// Sampled log-uniformly.
    pub lr0: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            embeddings: EmbeddingKind::ALL.to_vec(),
            variationals: VariationalKind::ALL.to_vec(),
            n: (5, 15),
            layers: (1, 5),
            lr0: (1e-3, 1e-1),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        if self.embeddings.is_empty() || self.variationals.is_empty() {
            return Err(Error::Config("search space has an empty categorical".into()));
        }
        if self.n.0 > self.n.1 || self.layers.0 > self.layers.1 || self.layers.0 == 0 {
            return Err(Error::Config("search space has an empty integer range".into()));
        }
        if !(self.lr0.0 > 0.0 && self.lr0.0 < self.lr0.1 && self.lr0.1.is_finite()) {
            return Err(Error::Config("lr0 range must satisfy 0 < lo < hi".into()));
        }
        Ok(())
    }

    pub fn contains(&self, c: &TrialConfig) -> bool {
        self.embeddings.contains(&c.embedding)
            && self.variationals.contains(&c.variational)
            && (self.n.0..=self.n.1).contains(&c.n)
            && (self.layers.0..=self.layers.1).contains(&c.layers)
            && c.lr0 >= self.lr0.0
            && c.lr0 <= self.lr0.1
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialConfig {
        let (lo, hi) = (self.lr0.0.ln(), self.lr0.1.ln());
        TrialConfig {
            embedding: *self.embeddings.choose(rng).unwrap(),
            variational: *self.variationals.choose(rng).unwrap(),
            n: rng.gen_range(self.n.0..=self.n.1),
            layers: rng.gen_range(self.layers.0..=self.layers.1),
            lr0: rng.gen_range(lo..=hi).exp().clamp(self.lr0.0, self.lr0.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub embedding: EmbeddingKind,
    pub variational: VariationalKind,
    pub n: usize,
    #[serde(rename = "L")]
    pub layers: usize,
    pub lr0: f64,
}

impl TrialConfig {
    pub fn spec(&self, structure_seed: u64) -> AnsatzSpec {
        AnsatzSpec::new(self.embedding, self.variational, self.n, self.layers)
            .with_structure_seed(structure_seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialStatus {
    Running,
    Completed,
    Pruned,
    Diverged,
}

/// Absent values (no epochs, non-finite loss, test accuracy of a trial
/// that did not complete) are `null` on disk.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FinalMetrics {
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub id: u64,
    pub config: TrialConfig,
    pub seed: u64,
    /// Validation loss per finished epoch.
    #[serde(with = "nullable_vec")]
    pub epochs: Vec<f64>,
    pub status: TrialStatus,
    #[serde(rename = "final")]
    pub final_metrics: FinalMetrics,
    pub param_count: usize,
    pub wall_s: Option<f64>,
}

impl TrialRecord {
    /// Last observed validation loss; infinite when missing or non-finite.
    pub fn objective(&self) -> f64 {
        match self.epochs.last() {
            Some(&v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }
}

/// Non-finite losses are written as `null` and read back as NaN.
mod nullable_vec {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.is_finite().then_some(*x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Option<f64>>::deserialize(d)?;
        Ok(raw.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

/// Minimum objective among completed trials, lowest id on ties.
pub fn best_completed(records: &[TrialRecord]) -> Option<&TrialRecord> {
    records
        .iter()
        .filter(|r| r.status == TrialStatus::Completed)
        .min_by(|a, b| {
            a.objective()
                .total_cmp(&b.objective())
                .then(a.id.cmp(&b.id))
        })
}

/// Append-only trial log, one JSON document per line.
#[derive(Debug)]
pub struct TrialStore {
    path: Option<PathBuf>,
    file: Option<File>,
    records: Vec<TrialRecord>,
}

impl TrialStore {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            file: None,
            records: Vec::new(),
        }
    }

    /// Creates or truncates the file.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path).map_err(|e| store_err(&path, e))?;
        Ok(Self {
            path: Some(path),
            file: Some(file),
            records: Vec::new(),
        })
    }

    /// Replays an existing file (or starts an empty one) and appends after
    /// it. A torn final line left by an interrupted write is cut off.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        if !path.exists() {
            return Self::create(path);
        }
        let text = fs::read_to_string(&path).map_err(|e| store_err(&path, e))?;
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        let records = parse_records(&text[..complete], &path)?;
        let mut file = OpenOptions::new()
            .write(true)
            .open(&path)
            .map_err(|e| store_err(&path, e))?;
        file.set_len(complete as u64)
            .and_then(|_| file.seek(SeekFrom::End(0)))
            .map_err(|e| store_err(&path, e))?;
        Ok(Self {
            path: Some(path),
            file: Some(file),
            records,
        })
    }

    pub fn replay(path: impl AsRef<Path>) -> Result<Vec<TrialRecord>> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| store_err(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line.map_err(|e| store_err(path, e))?);
            text.push('\n');
        }
        parse_records(&text, path)
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn next_id(&self) -> u64 {
        self.records.last().map_or(0, |r| r.id + 1)
    }

    pub fn append(&mut self, record: TrialRecord) -> Result<()> {
        if record.id != self.next_id() {
            return Err(Error::Config(format!(
                "trial id {} out of sequence (expected {})",
                record.id,
                self.next_id()
            )));
        }
        if let (Some(file), Some(path)) = (self.file.as_mut(), self.path.as_ref()) {
            let mut line = serde_json::to_string(&record)?;
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|e| store_err(path, e))?;
        }
        self.records.push(record);
        Ok(())
    }

    pub fn best(&self) -> Option<&TrialRecord> {
        best_completed(&self.records)
    }
}

fn store_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Store {
        path: path.to_path_buf(),
        msg: e.to_string(),
    }
}

fn parse_records(text: &str, path: &Path) -> Result<Vec<TrialRecord>> {
    let mut out: Vec<TrialRecord> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TrialRecord = serde_json::from_str(line)
            .map_err(|e| store_err(path, format!("line {}: {e}", i + 1)))?;
        if let Some(prev) = out.last() {
            if rec.id <= prev.id {
                return Err(store_err(path, format!("line {}: id {} not increasing", i + 1, rec.id)));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Per-trial seed from the master seed and trial id (splitmix64 finalizer).
pub fn trial_seed(master: u64, id: u64) -> u64 {
    let mut z = master ^ id.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// ---------------------------------------------------------------- TPE

/// Mixture of Gaussians truncated to `[lo, hi]`, one per observation, all
/// sharing one bandwidth.
#[derive(Clone, Debug, PartialEq)]
pub struct ParzenEstimator {
    centers: Vec<f64>,
    sigma: f64,
    lo: f64,
    hi: f64,
}

fn phi(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

impl ParzenEstimator {
    pub fn fit(points: &[f64], lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let share = if points.is_empty() {
            1.0
        } else {
            MIN_BANDWIDTH.max(1.0 / points.len() as f64)
        };
        let centers = if points.is_empty() {
            vec![0.5 * (lo + hi)]
        } else {
            points.iter().map(|p| p.clamp(lo, hi)).collect()
        };
        Self {
            centers,
            sigma: range * share,
            lo,
            hi,
        }
    }

    pub fn bandwidth(&self) -> f64 {
        self.sigma
    }

    fn truncation(&self, mu: f64) -> f64 {
        phi((self.hi - mu) / self.sigma) - phi((self.lo - mu) / self.sigma)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let norm = 1.0 / (self.sigma * (2.0 * std::f64::consts::PI).sqrt());
        let total: f64 = self
            .centers
            .iter()
            .map(|&mu| {
                let z = (x - mu) / self.sigma;
                norm * (-0.5 * z * z).exp() / self.truncation(mu)
            })
            .sum();
        total / self.centers.len() as f64
    }

    /// Probability of `[a, b]` under the mixture.
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let (a, b) = (a.max(self.lo), b.min(self.hi));
        if a >= b {
            return 0.0;
        }
        let total: f64 = self
            .centers
            .iter()
            .map(|&mu| {
                (phi((b - mu) / self.sigma) - phi((a - mu) / self.sigma)) / self.truncation(mu)
            })
            .sum();
        total / self.centers.len() as f64
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mu = *self.centers.choose(rng).unwrap();
        let normal = Normal::new(mu, self.sigma).unwrap();
        for _ in 0..1000 {
            let x = normal.sample(rng);
            if (self.lo..=self.hi).contains(&x) {
                return x;
            }
        }
        mu
    }
}

/// Add-one smoothed frequencies over `k` categories.
pub fn categorical_weights(observed: &[usize], k: usize) -> Vec<f64> {
    let mut w = vec![1.0; k];
    for &c in observed {
        w[c] += 1.0;
    }
    let total = (observed.len() + k) as f64;
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// One side (good or bad) of the TPE split.
#[derive(Clone, Debug, PartialEq)]
pub struct ParzenDensity {
    pub embedding: Vec<f64>,
    pub variational: Vec<f64>,
    pub n: ParzenEstimator,
    pub layers: ParzenEstimator,
    /// Over ln(lr0).
    pub lr0: ParzenEstimator,
}

impl ParzenDensity {
    fn fit(configs: &[&TrialConfig], space: &SearchSpace) -> Self {
        let idx_e: Vec<usize> = configs
            .iter()
            .filter_map(|c| space.embeddings.iter().position(|&e| e == c.embedding))
            .collect();
        let idx_v: Vec<usize> = configs
            .iter()
            .filter_map(|c| space.variationals.iter().position(|&v| v == c.variational))
            .collect();
        let ns: Vec<f64> = configs.iter().map(|c| c.n as f64).collect();
        let ls: Vec<f64> = configs.iter().map(|c| c.layers as f64).collect();
        let lrs: Vec<f64> = configs.iter().map(|c| c.lr0.ln()).collect();
        Self {
            embedding: categorical_weights(&idx_e, space.embeddings.len()),
            variational: categorical_weights(&idx_v, space.variationals.len()),
            n: ParzenEstimator::fit(&ns, space.n.0 as f64 - 0.5, space.n.1 as f64 + 0.5),
            layers: ParzenEstimator::fit(
                &ls,
                space.layers.0 as f64 - 0.5,
                space.layers.1 as f64 + 0.5,
            ),
            lr0: ParzenEstimator::fit(&lrs, space.lr0.0.ln(), space.lr0.1.ln()),
        }
    }

    fn sample<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> TrialConfig {
        let pick = |w: &[f64], rng: &mut R| {
            let u: f64 = rng.gen();
            let mut acc = 0.0;
            for (i, p) in w.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            w.len() - 1
        };
        let e = pick(&self.embedding, rng);
        let v = pick(&self.variational, rng);
        let round = |x: f64, lo: usize, hi: usize| (x.round().max(0.0) as usize).clamp(lo, hi);
        TrialConfig {
            embedding: space.embeddings[e],
            variational: space.variationals[v],
            n: round(self.n.sample(rng), space.n.0, space.n.1),
            layers: round(self.layers.sample(rng), space.layers.0, space.layers.1),
            lr0: self.lr0.sample(rng).exp().clamp(space.lr0.0, space.lr0.1),
        }
    }

    fn log_density(&self, c: &TrialConfig, space: &SearchSpace) -> f64 {
        let e = space.embeddings.iter().position(|&x| x == c.embedding).unwrap_or(0);
        let v = space.variationals.iter().position(|&x| x == c.variational).unwrap_or(0);
        let int_mass = |k: &ParzenEstimator, x: usize| k.mass(x as f64 - 0.5, x as f64 + 0.5);
        self.embedding[e].ln()
            + self.variational[v].ln()
            + int_mass(&self.n, c.n).ln()
            + int_mass(&self.layers, c.layers).ln()
            + self.lr0.pdf(c.lr0.ln()).ln()
    }
}

/// Good (`l`) and bad (`g`) densities fitted to a history.
#[derive(Clone, Debug, PartialEq)]
pub struct TpeModel {
    pub good: ParzenDensity,
    pub bad: ParzenDensity,
}

impl TpeModel {
    /// Splits `(config, objective)` pairs at the `GAMMA` quantile; NaN counts
    /// as worst, ties go to the earlier entry.
    pub fn fit(observations: &[(TrialConfig, f64)], space: &SearchSpace) -> Self {
        let mut order: Vec<usize> = (0..observations.len()).collect();
        let key = |i: usize| {
            let v = observations[i].1;
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        order.sort_by(|&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        let n_good = ((GAMMA * observations.len() as f64).ceil() as usize).max(1);
        let n_good = n_good.min(observations.len());
        let good: Vec<&TrialConfig> = order[..n_good].iter().map(|&i| &observations[i].0).collect();
        let bad: Vec<&TrialConfig> = order[n_good..].iter().map(|&i| &observations[i].0).collect();
        Self {
            good: ParzenDensity::fit(&good, space),
            bad: ParzenDensity::fit(&bad, space),
        }
    }

    /// Draws `N_CANDIDATES` from `l` and keeps the one maximizing `l/g`.
    pub fn suggest<R: Rng + ?Sized>(&self, space: &SearchSpace, rng: &mut R) -> TrialConfig {
        let mut best: Option<(f64, TrialConfig)> = None;
        for _ in 0..N_CANDIDATES {
            let c = self.good.sample(space, rng);
            let score = self.good.log_density(&c, space) - self.bad.log_density(&c, space);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, c));
            }
        }
        best.unwrap().1
    }
}

/// TPE over raw observations: uniform until `N_STARTUP` exist.
pub fn tpe_suggest_observed<R: Rng + ?Sized>(
    observations: &[(TrialConfig, f64)],
    space: &SearchSpace,
    rng: &mut R,
) -> TrialConfig {
    if observations.len() < N_STARTUP {
        return space.sample_uniform(rng);
    }
    TpeModel::fit(observations, space).suggest(space, rng)
}

/// TPE over a trial history. Completed trials count toward the startup
/// threshold; pruned and diverged trials still join the split with their
/// last observed loss.
pub fn tpe_suggest<R: Rng + ?Sized>(
    history: &[TrialRecord],
    space: &SearchSpace,
    rng: &mut R,
) -> TrialConfig {
    let completed = history
        .iter()
        .filter(|r| r.status == TrialStatus::Completed)
        .count();
    if completed < N_STARTUP {
        return space.sample_uniform(rng);
    }
    let obs: Vec<(TrialConfig, f64)> = history
        .iter()
        .filter(|r| r.status != TrialStatus::Running)
        .map(|r| (r.config.clone(), r.objective()))
        .collect();
    TpeModel::fit(&obs, space).suggest(space, rng)
}

// ---------------------------------------------------------------- pruning

/// Single-bracket successive halving.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessiveHalving {
    pub eta: usize,
    pub rungs: Vec<usize>,
}

impl Default for SuccessiveHalving {
    fn default() -> Self {
        Self {
            eta: ETA,
            rungs: DEFAULT_RUNGS.to_vec(),
        }
    }
}

impl SuccessiveHalving {
    /// `losses` are the trial's validation losses so far; `peers` are other
    /// trials' records (an entry with the same id is ignored).
    pub fn should_prune(&self, id: u64, losses: &[f64], peers: &[TrialRecord]) -> bool {
        let Some(&last) = losses.last() else {
            return false;
        };
        if !last.is_finite() {
            return true;
        }
        let epoch = losses.len();
        if !self.rungs.contains(&epoch) {
            return false;
        }
        let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
        let mut at_rung: Vec<(f64, u64)> = peers
            .iter()
            .filter(|p| p.id != id && p.epochs.len() >= epoch)
            .map(|p| (key(p.epochs[epoch - 1]), p.id))
            .collect();
        at_rung.push((last, id));
        at_rung.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let keep = at_rung.len().div_ceil(self.eta.max(1));
        let rank = at_rung.iter().position(|&(_, i)| i == id).unwrap();
        rank >= keep
    }
}

pub fn hyperband_should_prune(trial: &TrialRecord, peers: &[TrialRecord], rungs: &[usize]) -> bool {
    if trial.status == TrialStatus::Diverged {
        return true;
    }
    let sh = SuccessiveHalving {
        eta: ETA,
        rungs: rungs.to_vec(),
    };
    sh.should_prune(trial.id, &trial.epochs, peers)
}

// ---------------------------------------------------------------- driver

/// Fixed data for one search: a single train/validation split plus the
/// held-out test set; the standardizer is fitted on `train`.
#[derive(Clone, Debug)]
pub struct SearchData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
    pub standardizer: Standardizer,
}

impl SearchData {
    pub fn new(train: Dataset, val: Dataset, test: Dataset) -> Result<Self> {
        let standardizer = Standardizer::fit(&train)?;
        Ok(Self {
            train,
            val,
            test,
            standardizer,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Total trials the store should hold when the search returns.
    pub n_trials: usize,
    pub master_seed: u64,
    /// `lr0` and `seed` are replaced per trial.
    pub train: TrainConfig,
    pub pruner: SuccessiveHalving,
    pub workers: usize,
    /// Wall time makes stores differ between reruns, so it is opt-in.
    pub record_wall_time: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            n_trials: 60,
            master_seed: 0,
            train: TrainConfig::default(),
            pruner: SuccessiveHalving::default(),
            workers: 1,
            record_wall_time: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchSummary {
    pub n_trials: usize,
    pub completed: usize,
    pub pruned: usize,
    pub diverged: usize,
    pub best: Option<TrialRecord>,
}

impl SearchSummary {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let count = |s| records.iter().filter(|r| r.status == s).count();
        Self {
            n_trials: records.len(),
            completed: count(TrialStatus::Completed),
            pruned: count(TrialStatus::Pruned),
            diverged: count(TrialStatus::Diverged),
            best: best_completed(records).cloned(),
        }
    }

    /// Pruned plus diverged, over all trials.
    pub fn pruned_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            return 0.0;
        }
        (self.pruned + self.diverged) as f64 / self.n_trials as f64
    }
}

/// Trains one suggested configuration. `peers` is the snapshot of finished
/// trials the pruner compares against.
pub fn run_trial(
    id: u64,
    config: TrialConfig,
    data: &SearchData,
    options: &SearchOptions,
    peers: &[TrialRecord],
) -> Result<TrialRecord> {
    let start = Instant::now();
    let seed = trial_seed(options.master_seed, id);
    let spec = config.spec(seed);
    let mut model = QnnModel::init(spec, data.standardizer.clone(), seed)?;
    let tc = TrainConfig {
        lr0: config.lr0,
        seed,
        ..options.train.clone()
    };
    let mut losses = Vec::new();
    let outcome = train(&mut model, &data.train, &data.val, &tc, |m| {
        losses.push(m.val_loss);
        if options.pruner.should_prune(id, &losses, peers) {
            Decision::Prune
        } else {
            Decision::Continue
        }
    })?;
    let epochs: Vec<f64> = outcome.history.iter().map(|m| m.val_loss).collect();
    let last = outcome.history.last();
    let status = match outcome.status {
        TrainStatus::Completed => TrialStatus::Completed,
        TrainStatus::Pruned => TrialStatus::Pruned,
        TrainStatus::Diverged => TrialStatus::Diverged,
    };
    let test_acc = if status == TrialStatus::Completed && !outcome.history.is_empty() {
        Some(evaluate(&model, &data.test)?.1)
    } else {
        None
    };
    let finite = |v: f64| v.is_finite().then_some(v);
    Ok(TrialRecord {
        id,
        config,
        seed,
        epochs,
        status,
        final_metrics: FinalMetrics {
            val_loss: last.and_then(|m| finite(m.val_loss)),
            val_acc: last.and_then(|m| finite(m.val_acc)),
            test_acc,
        },
        param_count: trainable_count(&spec),
        wall_s: options
            .record_wall_time
            .then(|| start.elapsed().as_secs_f64()),
    })
}

/// Suggest → train → append until the store holds `n_trials` records.
/// With `workers > 1`, trials run in batches that share one history
/// snapshot, so results depend on the worker count but not on timing.
pub fn run_search<F>(
    space: &SearchSpace,
    data: &SearchData,
    options: &SearchOptions,
    store: &mut TrialStore,
    mut on_trial: F,
) -> Result<SearchSummary>
where
    F: FnMut(&TrialRecord),
{
    space.validate()?;
    options.train.validate()?;
    if options.n_trials == 0 {
        return Err(Error::Config("need at least one trial".into()));
    }
    let workers = options.workers.max(1);
    while store.len() < options.n_trials {
        let first = store.next_id();
        let batch = workers.min(options.n_trials - store.len());
        let snapshot = store.records().to_vec();
        let configs: Vec<(u64, TrialConfig)> = (0..batch as u64)
            .map(|k| {
                let id = first + k;
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(options.master_seed ^ 0x5EED, id));
                (id, tpe_suggest(&snapshot, space, &mut rng))
            })
            .collect();
        let results: Vec<Result<TrialRecord>> = if batch == 1 {
            let (id, c) = configs.into_iter().next().unwrap();
            vec![run_trial(id, c, data, options, &snapshot)]
        } else {
            std::thread::scope(|s| {
                let handles: Vec<_> = configs
                    .into_iter()
                    .map(|(id, c)| {
                        let snapshot = &snapshot;
                        s.spawn(move || run_trial(id, c, data, options, snapshot))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("trial worker panicked"))
                    .collect()
            })
        };
        for r in results {
            let rec = r?;
            on_trial(&rec);
            store.append(rec)?;
        }
    }
    Ok(SearchSummary::from_records(store.records()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: u64, epochs: Vec<f64>, status: TrialStatus) -> TrialRecord {
        TrialRecord {
            id,
            config: SearchSpace::default().sample_uniform(&mut ChaCha8Rng::seed_from_u64(id)),
            seed: id,
            epochs,
            status,
            final_metrics: FinalMetrics::default(),
            param_count: 0,
            wall_s: None,
        }
    }

    #[test]
    fn categorical_weights_are_smoothed() {
        let w = categorical_weights(&[2, 2, 2], 7);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[2] - 0.4).abs() < 1e-15);
        assert!((w[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn parzen_mass_integrates_to_one() {
        let k = ParzenEstimator::fit(&[0.0, 0.2, 0.9], 0.0, 1.0);
        assert!((k.mass(0.0, 1.0) - 1.0).abs() < 1e-12);
        assert!((k.bandwidth() - 1.0 / 3.0).abs() < 1e-15);
        let many: Vec<f64> = (0..40).map(|i| i as f64 / 40.0).collect();
        assert!((ParzenEstimator::fit(&many, 0.0, 2.0).bandwidth() - 0.2).abs() < 1e-15);
        // trapezoid check of the pdf against mass
        let steps = 2000;
        let integral: f64 = (0..steps)
            .map(|i| {
                let a = i as f64 / steps as f64;
                let b = (i + 1) as f64 / steps as f64;
                0.5 * (k.pdf(a) + k.pdf(b)) * (b - a)
            })
            .sum();
        assert!((integral - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rung_ranking_uses_ids_for_ties() {
        let sh = SuccessiveHalving::default();
        let peers = vec![rec(0, vec![1.0], TrialStatus::Pruned), rec(1, vec![1.0], TrialStatus::Pruned)];
        // three at rung 1 keep one; id 0 wins the tie
        assert!(sh.should_prune(2, &[1.0], &peers));
        assert!(!sh.should_prune(2, &[0.5], &peers));
        // off-rung epochs never prune
        assert!(!sh.should_prune(2, &[9.0, 9.0], &peers));
    }

    #[test]
    fn seeds_differ_per_trial() {
        assert_ne!(trial_seed(1, 0), trial_seed(1, 1));
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
        assert_eq!(trial_seed(5, 9), trial_seed(5, 9));
    }

    #[test]
    fn nulls_round_trip_as_nan() {
        let mut r = rec(0, vec![0.5, f64::INFINITY], TrialStatus::Diverged);
        r.final_metrics.val_acc = Some(0.25);
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains("\"epochs\":[0.5,null]"));
        assert!(line.contains("\"final\":{\"val_loss\":null"));
        assert!(line.contains("\"L\":"));
        let back: TrialRecord = serde_json::from_str(&line).unwrap();
        assert!(back.epochs[1].is_nan());
        assert_eq!(back.objective(), f64::INFINITY);
    }
}
