//! Circuit templates: two input embeddings followed by one of seven
//! variational families, plus their exact slot counts.
//!
//! Layer constructions (per layer, `n` qubits):
//!
//! | family | gates | angles |
//! |---|---|---|
//! | `s2d` | CZ on (0,1),(2,3).. then RY on both wires; CZ on (1,2),(3,4).. then RY on both | `2(n-1)` |
//! | `qaoa` | ZZ ring on (i, i+1 mod n), then RX on every wire | `2n` |
//! | `ttn` | binary tree of RY⊗RY + CNOT blocks, odd wire carried up a level | `2(n-1)` |
//! | `mps` | staircase of RY⊗RY + CNOT blocks on (i, i+1) | `2(n-1)` |
//! | `strong` | RZ·RY·RZ on every wire, CNOT ring with range `1 + l mod (n-1)` | `3n` |
//! | `basic` | RY on every wire, CNOT ring | `n` |
//! | `random` | `n` seeded RX/RY/RZ rotations shuffled with `n/2` seeded CNOTs | `n` |

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevector::{Circuit, Gate, Slot, MAX_QUBITS};

pub const MAX_LAYERS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Angle,
    Iqp,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 2] = [EmbeddingKind::Angle, EmbeddingKind::Iqp];

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingKind::Angle => "angle",
            EmbeddingKind::Iqp => "iqp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariationalKind {
    #[serde(rename = "s2d")]
    S2d,
    #[serde(rename = "qaoa")]
    Qaoa,
    #[serde(rename = "ttn")]
    Ttn,
    #[serde(rename = "mps")]
    Mps,
    #[serde(rename = "strong")]
    StronglyEntangling,
    #[serde(rename = "basic")]
    BasicEntangler,
    #[serde(rename = "random")]
    Random,
}

impl VariationalKind {
    pub const ALL: [VariationalKind; 7] = [
        VariationalKind::S2d,
        VariationalKind::Qaoa,
        VariationalKind::Ttn,
        VariationalKind::Mps,
        VariationalKind::StronglyEntangling,
        VariationalKind::BasicEntangler,
        VariationalKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariationalKind::S2d => "s2d",
            VariationalKind::Qaoa => "qaoa",
            VariationalKind::Ttn => "ttn",
            VariationalKind::Mps => "mps",
            VariationalKind::StronglyEntangling => "strong",
            VariationalKind::BasicEntangler => "basic",
            VariationalKind::Random => "random",
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for VariationalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown embedding `{s}`")))
    }
}

impl FromStr for VariationalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown ansatz `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub embedding: EmbeddingKind,
    pub variational: VariationalKind,
    pub n_qubits: usize,
    pub layers: usize,
    /// Only consulted by [`VariationalKind::Random`].
    pub structure_seed: u64,
}

impl AnsatzSpec {
    pub fn new(
        embedding: EmbeddingKind,
        variational: VariationalKind,
        n_qubits: usize,
        layers: usize,
    ) -> Self {
        Self {
            embedding,
            variational,
            n_qubits,
            layers,
            structure_seed: 0,
        }
    }

    pub fn with_structure_seed(mut self, seed: u64) -> Self {
        self.structure_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=MAX_QUBITS).contains(&self.n_qubits) {
            return Err(Error::InvalidSpec(format!(
                "qubit count {} outside 2..={MAX_QUBITS}",
                self.n_qubits
            )));
        }
        if !(1..=MAX_LAYERS).contains(&self.layers) {
            return Err(Error::InvalidSpec(format!(
                "layer count {} outside 1..={MAX_LAYERS}",
                self.layers
            )));
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        count_params(self.variational, self.n_qubits, self.layers)
    }

    pub fn embed_count(&self) -> usize {
        embed_count(self.embedding, self.n_qubits)
    }
}

/// Number of trainable angles of a variational family.
pub fn count_params(kind: VariationalKind, n: usize, layers: usize) -> usize {
    let per_layer = match kind {
        VariationalKind::S2d | VariationalKind::Mps | VariationalKind::Ttn => 2 * (n - 1),
        VariationalKind::Qaoa => qaoa_couplers(n).len() + n,
        VariationalKind::BasicEntangler | VariationalKind::Random => n,
        VariationalKind::StronglyEntangling => 3 * n,
    };
    per_layer * layers
}

/// Angle: one RY per qubit. IQP: one RZ per qubit plus one ZZ per unordered pair.
pub fn embed_count(kind: EmbeddingKind, n: usize) -> usize {
    match kind {
        EmbeddingKind::Angle => n,
        EmbeddingKind::Iqp => n + n * (n - 1) / 2,
    }
}

/// Embedding-slot index of the ZZ product term for wires `i < j` in the IQP layout.
pub fn iqp_pair_slot(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    // pairs enumerated (0,1),(0,2),..,(0,n-1),(1,2),..
    n + i * (2 * n - i - 1) / 2 + (j - i - 1)
}

fn qaoa_couplers(n: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        vec![(0, 1)]
    } else {
        (0..n).map(|i| (i, (i + 1) % n)).collect()
    }
}

fn ring(n: usize, range: usize) -> Vec<(usize, usize)> {
    if n == 2 {
        vec![(0, 1)]
    } else {
        (0..n).map(|i| (i, (i + range) % n)).collect()
    }
}

struct Builder {
    circuit: Circuit,
    next: usize,
}

impl Builder {
    fn fresh(&mut self) -> Slot {
        let s = Slot::Variational(self.next);
        self.next += 1;
        s
    }

    fn push(&mut self, gate: Gate) {
        self.circuit.push(gate).expect("template wires and slots are in range");
    }

    fn ry_pair_cnot(&mut self, a: usize, b: usize) {
        let (sa, sb) = (self.fresh(), self.fresh());
        self.push(Gate::ry(a, sa));
        self.push(Gate::ry(b, sb));
        self.push(Gate::cnot(a, b));
    }
}

pub fn build_circuit(spec: &AnsatzSpec) -> Result<Circuit> {
    spec.validate()?;
    let n = spec.n_qubits;
    let mut b = Builder {
        circuit: Circuit::new(n, spec.param_count(), spec.embed_count())?,
        next: 0,
    };

    match spec.embedding {
        EmbeddingKind::Angle => {
            for q in 0..n {
                b.push(Gate::ry(q, Slot::Embedding(q)));
            }
        }
        EmbeddingKind::Iqp => {
            for q in 0..n {
                b.push(Gate::h(q));
            }
            for q in 0..n {
                b.push(Gate::rz(q, Slot::Embedding(q)));
            }
            for i in 0..n {
                for j in i + 1..n {
                    b.push(Gate::zz(i, j, Slot::Embedding(iqp_pair_slot(n, i, j))));
                }
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.structure_seed);
    for layer in 0..spec.layers {
        match spec.variational {
            VariationalKind::S2d => {
                for start in [0, 1] {
                    let mut a = start;
                    while a + 1 < n {
                        b.push(Gate::cz(a, a + 1));
                        let (sa, sb) = (b.fresh(), b.fresh());
                        b.push(Gate::ry(a, sa));
                        b.push(Gate::ry(a + 1, sb));
                        a += 2;
                    }
                }
            }
            VariationalKind::Qaoa => {
                for (i, j) in qaoa_couplers(n) {
                    let s = b.fresh();
                    b.push(Gate::zz(i, j, s));
                }
                for q in 0..n {
                    let s = b.fresh();
                    b.push(Gate::rx(q, s));
                }
            }
            VariationalKind::Ttn => {
                let mut active: Vec<usize> = (0..n).collect();
                while active.len() > 1 {
                    let mut next = Vec::with_capacity(active.len().div_ceil(2));
                    for pair in active.chunks(2) {
                        match *pair {
                            [upper, lower] => {
                                b.ry_pair_cnot(upper, lower);
                                next.push(lower);
                            }
                            [odd] => next.push(odd),
                            _ => unreachable!(),
                        }
                    }
                    active = next;
                }
            }
            VariationalKind::Mps => {
                for q in 0..n - 1 {
                    b.ry_pair_cnot(q, q + 1);
                }
            }
            VariationalKind::StronglyEntangling => {
                for q in 0..n {
                    let (s0, s1, s2) = (b.fresh(), b.fresh(), b.fresh());
                    b.push(Gate::rz(q, s0));
                    b.push(Gate::ry(q, s1));
                    b.push(Gate::rz(q, s2));
                }
                for (c, t) in ring(n, 1 + layer % (n - 1)) {
                    b.push(Gate::cnot(c, t));
                }
            }
            VariationalKind::BasicEntangler => {
                for q in 0..n {
                    let s = b.fresh();
                    b.push(Gate::ry(q, s));
                }
                for (c, t) in ring(n, 1) {
                    b.push(Gate::cnot(c, t));
                }
            }
            VariationalKind::Random => {
                #[derive(Clone, Copy)]
                enum Op {
                    Rot(u8, usize),
                    Cnot(usize, usize),
                }
                let mut ops = Vec::with_capacity(n + n / 2);
                for _ in 0..n {
                    ops.push(Op::Rot(rng.gen_range(0..3), rng.gen_range(0..n)));
                }
                for _ in 0..n / 2 {
                    let c = rng.gen_range(0..n);
                    let mut t = rng.gen_range(0..n - 1);
                    if t >= c {
                        t += 1;
                    }
                    ops.push(Op::Cnot(c, t));
                }
                ops.shuffle(&mut rng);
                for op in ops {
                    match op {
                        Op::Rot(axis, q) => {
                            let s = b.fresh();
                            b.push(match axis {
                                0 => Gate::rx(q, s),
                                1 => Gate::ry(q, s),
                                _ => Gate::rz(q, s),
                            });
                        }
                        Op::Cnot(c, t) => b.push(Gate::cnot(c, t)),
                    }
                }
            }
        }
    }
    debug_assert_eq!(b.next, spec.param_count());
    Ok(b.circuit)
}
