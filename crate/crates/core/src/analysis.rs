//! Post-search analytics over a trial store: slices, contour grids,
//! accuracy-vs-size scatter, and first-order fANOVA importances.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::Serialize;

use crate::ansatz::{EmbeddingKind, VariationalKind};
use crate::automl::{TrialRecord, TrialStatus};
use crate::error::{Error, Result};
use crate::forest::{Forest, LeafBox};

pub const N_TREES: usize = 32;
pub const MAX_DEPTH: usize = 8;
pub const MIN_TRIALS: usize = 20;
pub const DEFAULT_RADIUS: f64 = 0.75;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Param {
    Embedding,
    Variational,
    N,
    Layers,
    Lr0,
}

impl Param {
    pub const ALL: [Param; 5] = [
        Param::Embedding,
        Param::Variational,
        Param::N,
        Param::Layers,
        Param::Lr0,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::Embedding => "embedding",
            Param::Variational => "variational",
            Param::N => "n",
            Param::Layers => "L",
            Param::Lr0 => "lr0",
        }
    }

    fn is_categorical(self) -> bool {
        matches!(self, Param::Embedding | Param::Variational)
    }

    /// Sort/plot coordinate: category index, integer value, or log10(lr0).
    fn coord(self, r: &TrialRecord) -> f64 {
        let c = &r.config;
        match self {
            Param::Embedding => EmbeddingKind::ALL.iter().position(|&e| e == c.embedding).unwrap() as f64,
            Param::Variational => {
                VariationalKind::ALL.iter().position(|&v| v == c.variational).unwrap() as f64
            }
            Param::N => c.n as f64,
            Param::Layers => c.layers as f64,
            Param::Lr0 => c.lr0.log10(),
        }
    }

    fn label(self, r: &TrialRecord) -> String {
        let c = &r.config;
        match self {
            Param::Embedding => c.embedding.name().to_string(),
            Param::Variational => c.variational.name().to_string(),
            Param::N => c.n.to_string(),
            Param::Layers => c.layers.to_string(),
            Param::Lr0 => c.lr0.to_string(),
        }
    }

    fn category_names(self) -> Vec<&'static str> {
        match self {
            Param::Embedding => EmbeddingKind::ALL.iter().map(|e| e.name()).collect(),
            Param::Variational => VariationalKind::ALL.iter().map(|v| v.name()).collect(),
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" => Ok(Param::Embedding),
            "variational" | "ansatz" => Ok(Param::Variational),
            "n" | "qubits" => Ok(Param::N),
            "L" | "layers" => Ok(Param::Layers),
            "lr0" | "lr" => Ok(Param::Lr0),
            _ => Err(Error::UnknownParameter(s.to_string())),
        }
    }
}

fn finite_trials(trials: &[TrialRecord]) -> Vec<&TrialRecord> {
    trials
        .iter()
        .filter(|r| r.status != TrialStatus::Running && r.objective().is_finite())
        .collect()
}

// ---------------------------------------------------------------- slice

#[derive(Clone, Debug, PartialEq)]
pub struct SliceRow {
    pub value: String,
    pub objective: f64,
    pub trial_id: u64,
    pub pruned: bool,
}

/// One row per trial with a finite objective, sorted by the parameter
/// (categories in serialization order, lr0 ascending), then by id.
pub fn slice_export(trials: &[TrialRecord], param: Param) -> Vec<SliceRow> {
    let mut rows = finite_trials(trials);
    rows.sort_by(|a, b| {
        param
            .coord(a)
            .total_cmp(&param.coord(b))
            .then(a.id.cmp(&b.id))
    });
    rows.into_iter()
        .map(|r| SliceRow {
            value: param.label(r),
            objective: r.objective(),
            trial_id: r.id,
            pruned: r.status != TrialStatus::Completed,
        })
        .collect()
}

pub fn write_slice_csv<W: Write>(mut out: W, param: Param, rows: &[SliceRow]) -> Result<()> {
    writeln!(out, "{param},objective,trial_id,pruned")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.value, r.objective, r.trial_id, r.pruned)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- scatter

#[derive(Clone, Debug, PartialEq)]
pub struct ScatterRow {
    pub trial_id: u64,
    pub param_count: usize,
    pub test_acc: Option<f64>,
    pub variational: VariationalKind,
    pub embedding: EmbeddingKind,
}

/// Completed trials only, in id order.
pub fn scatter_export(trials: &[TrialRecord]) -> Vec<ScatterRow> {
    trials
        .iter()
        .filter(|r| r.status == TrialStatus::Completed)
        .map(|r| ScatterRow {
            trial_id: r.id,
            param_count: r.param_count,
            test_acc: r.final_metrics.test_acc,
            variational: r.config.variational,
            embedding: r.config.embedding,
        })
        .collect()
}

pub fn write_scatter_csv<W: Write>(mut out: W, rows: &[ScatterRow]) -> Result<()> {
    writeln!(out, "param_count,test_acc,variational,embedding,trial_id")?;
    for r in rows {
        let acc = r.test_acc.map_or(String::new(), |a| a.to_string());
        writeln!(
            out,
            "{},{},{},{},{}",
            r.param_count, acc, r.variational, r.embedding, r.trial_id
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- contour

#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub param: Param,
    /// Cell centers as labels (category names, integers, lr0 values).
    pub labels: Vec<String>,
    coords: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Axis {
    fn new(param: Param, trials: &[&TrialRecord], resolution: usize) -> Self {
        if param.is_categorical() {
            let names = param.category_names();
            return Self {
                param,
                labels: names.iter().map(|s| s.to_string()).collect(),
                coords: (0..names.len()).map(|i| i as f64).collect(),
                lo: 0.0,
                hi: 0.0,
            };
        }
        let (lo, hi) = trials.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
            let c = param.coord(r);
            (a.min(c), b.max(c))
        });
        let coords: Vec<f64> = (0..resolution)
            .map(|k| lo + (hi - lo) * k as f64 / (resolution - 1) as f64)
            .collect();
        let labels = coords
            .iter()
            .map(|&c| match param {
                Param::Lr0 => 10f64.powf(c).to_string(),
                _ => c.to_string(),
            })
            .collect();
        Self {
            param,
            labels,
            coords,
            lo,
            hi,
        }
    }

    fn normalized(&self, c: f64) -> f64 {
        if self.hi > self.lo {
            (c - self.lo) / (self.hi - self.lo)
        } else {
            0.0
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourGrid {
    pub a: Axis,
    pub b: Axis,
    /// Row-major over (a, b); `None` marks an empty cell.
    pub values: Vec<Option<f64>>,
}

impl ContourGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values[i * self.b.labels.len() + j]
    }
}

/// Inverse-squared-distance smoothing in coordinates normalized to the
/// trials' range; a categorical axis only admits trials of the cell's own
/// category. Cells with no trial within `radius` are empty.
pub fn contour_export(
    trials: &[TrialRecord],
    a: Param,
    b: Param,
    resolution: usize,
    radius: f64,
) -> Result<ContourGrid> {
    if a == b {
        return Err(Error::Config(format!("contour needs two distinct parameters, got {a} twice")));
    }
    if resolution < 2 {
        return Err(Error::Config("contour resolution must be >= 2".into()));
    }
    let pts = finite_trials(trials);
    if pts.is_empty() {
        return Err(Error::TooFewTrials { need: 1, have: 0 });
    }
    let ax = Axis::new(a, &pts, resolution);
    let bx = Axis::new(b, &pts, resolution);
    let mut values = Vec::with_capacity(ax.coords.len() * bx.coords.len());
    for &ca in &ax.coords {
        for &cb in &bx.coords {
            values.push(smooth_cell(&pts, &ax, ca, &bx, cb, radius));
        }
    }
    Ok(ContourGrid { a: ax, b: bx, values })
}

fn axis_gap(axis: &Axis, cell: f64, r: &TrialRecord) -> Option<f64> {
    let c = axis.param.coord(r);
    if axis.param.is_categorical() {
        (c == cell).then_some(0.0)
    } else {
        Some(axis.normalized(c) - axis.normalized(cell))
    }
}

fn smooth_cell(
    pts: &[&TrialRecord],
    ax: &Axis,
    ca: f64,
    bx: &Axis,
    cb: f64,
    radius: f64,
) -> Option<f64> {
    let mut exact = (0.0, 0usize);
    let mut weighted = (0.0, 0.0);
    for r in pts {
        let (Some(da), Some(db)) = (axis_gap(ax, ca, r), axis_gap(bx, cb, r)) else {
            continue;
        };
        let d2 = da * da + db * db;
        if d2 > radius * radius {
            continue;
        }
        if d2 < 1e-24 {
            exact.0 += r.objective();
            exact.1 += 1;
        } else {
            weighted.0 += r.objective() / d2;
            weighted.1 += 1.0 / d2;
        }
    }
    if exact.1 > 0 {
        Some(exact.0 / exact.1 as f64)
    } else if weighted.1 > 0.0 {
        Some(weighted.0 / weighted.1)
    } else {
        None
    }
}

pub fn write_contour_csv<W: Write>(mut out: W, grid: &ContourGrid) -> Result<()> {
    writeln!(out, "{},{},objective", grid.a.param, grid.b.param)?;
    for (i, la) in grid.a.labels.iter().enumerate() {
        for (j, lb) in grid.b.labels.iter().enumerate() {
            let v = grid.get(i, j).map_or(String::new(), |v| v.to_string());
            writeln!(out, "{la},{lb},{v}")?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- fANOVA

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImportanceReport {
    /// In `Param::ALL` order.
    pub scores: Vec<(String, f64)>,
    pub residual: f64,
    pub n_trials: usize,
    /// Trees with non-zero total variance.
    pub trees_used: usize,
}

impl ImportanceReport {
    pub fn score(&self, param: Param) -> f64 {
        self.scores
            .iter()
            .find(|(n, _)| n == param.name())
            .map_or(0.0, |s| s.1)
    }

    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut v = self.scores.clone();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }
}

pub fn write_importance_csv<W: Write>(mut out: W, report: &ImportanceReport) -> Result<()> {
    writeln!(out, "parameter,importance")?;
    for (n, s) in &report.scores {
        writeln!(out, "{n},{s}")?;
    }
    writeln!(out, "residual,{}", report.residual)?;
    Ok(())
}

/// `{"importance": {param: share, ...}, "residual": .., "n_trials": .., "trees_used": ..}`
pub fn write_importance_json<W: Write>(mut out: W, report: &ImportanceReport) -> Result<()> {
    let scores: serde_json::Map<String, serde_json::Value> = report
        .scores
        .iter()
        .map(|(n, s)| (n.clone(), serde_json::json!(s)))
        .collect();
    let doc = serde_json::json!({
        "importance": scores,
        "residual": report.residual,
        "n_trials": report.n_trials,
        "trees_used": report.trees_used,
    });
    serde_json::to_writer_pretty(&mut out, &doc)?;
    writeln!(out)?;
    Ok(())
}

/// Column layout of the encoded features.
const EMB_COLS: usize = 2;
const VAR_COLS: usize = 7;
const COL_N: usize = EMB_COLS + VAR_COLS;
const COL_L: usize = COL_N + 1;
const COL_LR: usize = COL_N + 2;
const N_COLS: usize = COL_N + 3;

fn encode(r: &TrialRecord) -> Vec<f64> {
    let mut x = vec![0.0; N_COLS];
    x[Param::Embedding.coord(r) as usize] = 1.0;
    x[EMB_COLS + Param::Variational.coord(r) as usize] = 1.0;
    x[COL_N] = r.config.n as f64;
    x[COL_L] = r.config.layers as f64;
    x[COL_LR] = r.config.lr0.log10();
    x
}

/// Uniform measure over one hyperparameter's values.
enum Domain {
    /// One-hot block starting at `first` with `k` columns.
    Categories { first: usize, k: usize },
    /// Finite set of values in one column.
    Points { col: usize, values: Vec<f64> },
    /// Continuous range in one column.
    Interval { col: usize, lo: f64, hi: f64 },
}

impl Domain {
    /// Fraction of the domain inside the leaf.
    fn fraction(&self, leaf: &LeafBox) -> f64 {
        match self {
            Domain::Categories { k, .. } => {
                (0..*k).filter(|&c| self.category_in(leaf, c)).count() as f64 / *k as f64
            }
            Domain::Points { col, values } => {
                values.iter().filter(|&&v| leaf.contains(*col, v)).count() as f64
                    / values.len() as f64
            }
            Domain::Interval { col, lo, hi } => {
                let a = leaf.lo[*col].max(*lo);
                let b = leaf.hi[*col].min(*hi);
                ((b - a) / (hi - lo)).max(0.0)
            }
        }
    }

    fn category_in(&self, leaf: &LeafBox, c: usize) -> bool {
        let Domain::Categories { first, k } = self else {
            return false;
        };
        (0..*k).all(|i| leaf.contains(first + i, if i == c { 1.0 } else { 0.0 }))
    }

    /// Weighted points `(weight, membership test)` covering the domain.
    fn cells(&self, leaves: &[LeafBox]) -> Vec<(f64, Box<dyn Fn(&LeafBox) -> bool + '_>)> {
        match self {
            Domain::Categories { k, .. } => (0..*k)
                .map(|c| {
                    let f: Box<dyn Fn(&LeafBox) -> bool> = Box::new(move |l| self.category_in(l, c));
                    (1.0 / *k as f64, f)
                })
                .collect(),
            Domain::Points { col, values } => values
                .iter()
                .map(|&v| {
                    let col = *col;
                    let f: Box<dyn Fn(&LeafBox) -> bool> = Box::new(move |l| l.contains(col, v));
                    (1.0 / values.len() as f64, f)
                })
                .collect(),
            Domain::Interval { col, lo, hi } => {
                let col = *col;
                let mut cuts = vec![*lo, *hi];
                for l in leaves {
                    for c in [l.lo[col], l.hi[col]] {
                        if c > *lo && c < *hi {
                            cuts.push(c);
                        }
                    }
                }
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                cuts.windows(2)
                    .map(|w| {
                        let mid = 0.5 * (w[0] + w[1]);
                        let f: Box<dyn Fn(&LeafBox) -> bool> = Box::new(move |l| l.contains(col, mid));
                        ((w[1] - w[0]) / (hi - lo), f)
                    })
                    .collect()
            }
        }
    }
}

fn domains(trials: &[&TrialRecord]) -> Vec<Domain> {
    let ints = |col: usize| {
        let lo = trials.iter().map(|r| encode(r)[col]).fold(f64::INFINITY, f64::min);
        let hi = trials.iter().map(|r| encode(r)[col]).fold(f64::NEG_INFINITY, f64::max);
        Domain::Points {
            col,
            values: (lo as i64..=hi as i64).map(|v| v as f64).collect(),
        }
    };
    let lrs: Vec<f64> = trials.iter().map(|r| encode(r)[COL_LR]).collect();
    let lo = lrs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lrs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lr = if hi > lo {
        Domain::Interval { col: COL_LR, lo, hi }
    } else {
        Domain::Points {
            col: COL_LR,
            values: vec![lo],
        }
    };
    vec![
        Domain::Categories {
            first: 0,
            k: EMB_COLS,
        },
        Domain::Categories {
            first: EMB_COLS,
            k: VAR_COLS,
        },
        ints(COL_N),
        ints(COL_L),
        lr,
    ]
}

/// Per-parameter first-order variance shares for one tree, or `None` when
/// the tree is constant over the domain.
fn tree_shares(leaves: &[LeafBox], doms: &[Domain]) -> Option<Vec<f64>> {
    let fracs: Vec<Vec<f64>> = leaves
        .iter()
        .map(|l| doms.iter().map(|d| d.fraction(l)).collect())
        .collect();
    let (mut m1, mut m2) = (0.0, 0.0);
    for (l, f) in leaves.iter().zip(&fracs) {
        let vol: f64 = f.iter().product();
        m1 += vol * l.value;
        m2 += vol * l.value * l.value;
    }
    let total = m2 - m1 * m1;
    if !(total > 1e-14 * (1.0 + m1 * m1)) {
        return None;
    }
    let shares = doms
        .iter()
        .enumerate()
        .map(|(p, d)| {
            let (mut e1, mut e2) = (0.0, 0.0);
            for (w, inside) in d.cells(leaves) {
                let fp: f64 = leaves
                    .iter()
                    .zip(&fracs)
                    .filter(|(l, _)| inside(l))
                    .map(|(l, f)| {
                        let others: f64 = f
                            .iter()
                            .enumerate()
                            .filter(|&(q, _)| q != p)
                            .map(|(_, v)| v)
                            .product();
                        l.value * others
                    })
                    .sum();
                e1 += w * fp;
                e2 += w * fp * fp;
            }
            ((e2 - e1 * e1) / total).clamp(0.0, 1.0)
        })
        .collect();
    Some(shares)
}

/// First-order fANOVA importances from a seeded random forest over
/// (embedding, variational one-hot; n; L; log10 lr0) → objective. Pruned
/// trials enter with their last observed loss.
pub fn fanova_importance(trials: &[TrialRecord], seed: u64) -> Result<ImportanceReport> {
    let pts = finite_trials(trials);
    if pts.len() < MIN_TRIALS {
        return Err(Error::TooFewTrials {
            need: MIN_TRIALS,
            have: pts.len(),
        });
    }
    let xs: Vec<Vec<f64>> = pts.iter().map(|r| encode(r)).collect();
    let ys: Vec<f64> = pts.iter().map(|r| r.objective()).collect();
    let forest = Forest::fit(&xs, &ys, N_TREES, MAX_DEPTH, seed);
    let doms = domains(&pts);
    let mut sums = vec![0.0; Param::ALL.len()];
    let mut used = 0;
    for tree in &forest.trees {
        if let Some(s) = tree_shares(&tree.leaves(N_COLS), &doms) {
            // round-off guard; exact shares sum to at most 1
            let total: f64 = s.iter().sum();
            let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
            sums.iter_mut().zip(&s).for_each(|(a, b)| *a += b * scale);
            used += 1;
        }
    }
    if used > 0 {
        sums.iter_mut().for_each(|v| *v /= used as f64);
    }
    let scores: Vec<(String, f64)> = Param::ALL
        .iter()
        .zip(&sums)
        .map(|(p, &s)| (p.name().to_string(), s))
        .collect();
    let residual = 1.0 - sums.iter().sum::<f64>();
    Ok(ImportanceReport {
        scores,
        residual,
        n_trials: pts.len(),
        trees_used: used,
    })
}
