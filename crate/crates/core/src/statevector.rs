//! Dense noiseless statevector simulation.
//!
//! Wire 0 is the most significant bit of the amplitude index, so on a
//! 3-qubit register the basis state `|100>` has index 4. Gates are applied
//! in place by pairwise amplitude mixing; no `2^n x 2^n` matrix is ever
//! built.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_QUBITS: usize = 20;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    Rx,
    Ry,
    Rz,
    H,
    Cz,
    Cnot,
    Zz,
}

impl GateKind {
    pub const ALL: [GateKind; 7] = [
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Rz,
        GateKind::H,
        GateKind::Cz,
        GateKind::Cnot,
        GateKind::Zz,
    ];

    pub fn is_parameterized(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::Zz)
    }

    pub fn arity(self) -> usize {
        match self {
            GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::H => 1,
            GateKind::Cz | GateKind::Cnot | GateKind::Zz => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::H => "H",
            GateKind::Cz => "CZ",
            GateKind::Cnot => "CNOT",
            GateKind::Zz => "ZZ",
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Reference into a circuit's parameter-slot table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Slot {
    /// Trainable angle, index into the variational vector.
    Variational(usize),
    /// Input-bound angle, index into the embedding vector.
    Embedding(usize),
}

/// One gate instance. For CNOT the first wire is the control.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gate {
    kind: GateKind,
    wires: [usize; 2],
    slot: Option<Slot>,
}

impl Gate {
    pub fn new(kind: GateKind, wires: &[usize], slot: Option<Slot>) -> Result<Self> {
        if wires.len() != kind.arity() {
            return Err(Error::ShapeMismatch(format!(
                "{kind} acts on {} wire(s), got {}",
                kind.arity(),
                wires.len()
            )));
        }
        if wires.len() == 2 && wires[0] == wires[1] {
            return Err(Error::DuplicateWire(wires[0]));
        }
        match (kind.is_parameterized(), slot.is_some()) {
            (true, false) => {
                return Err(Error::AngleMismatch {
                    kind: kind.name(),
                    detail: "requires a parameter slot",
                })
            }
            (false, true) => {
                return Err(Error::AngleMismatch {
                    kind: kind.name(),
                    detail: "takes no parameter",
                })
            }
            _ => {}
        }
        let second = if wires.len() == 2 { wires[1] } else { wires[0] };
        Ok(Self {
            kind,
            wires: [wires[0], second],
            slot,
        })
    }

    pub fn rx(wire: usize, slot: Slot) -> Self {
        Self::one(GateKind::Rx, wire, Some(slot))
    }

    pub fn ry(wire: usize, slot: Slot) -> Self {
        Self::one(GateKind::Ry, wire, Some(slot))
    }

    pub fn rz(wire: usize, slot: Slot) -> Self {
        Self::one(GateKind::Rz, wire, Some(slot))
    }

    pub fn h(wire: usize) -> Self {
        Self::one(GateKind::H, wire, None)
    }

    /// Panics if `a == b`.
    pub fn cz(a: usize, b: usize) -> Self {
        Self::two(GateKind::Cz, a, b, None)
    }

    /// Panics if `control == target`.
    pub fn cnot(control: usize, target: usize) -> Self {
        Self::two(GateKind::Cnot, control, target, None)
    }

    /// Panics if `a == b`.
    pub fn zz(a: usize, b: usize, slot: Slot) -> Self {
        Self::two(GateKind::Zz, a, b, Some(slot))
    }

    fn one(kind: GateKind, wire: usize, slot: Option<Slot>) -> Self {
        Self {
            kind,
            wires: [wire, wire],
            slot,
        }
    }

    fn two(kind: GateKind, a: usize, b: usize, slot: Option<Slot>) -> Self {
        assert_ne!(a, b, "{kind} wires must be distinct");
        Self {
            kind,
            wires: [a, b],
            slot,
        }
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn wires(&self) -> &[usize] {
        &self.wires[..self.kind.arity()]
    }

    pub fn slot(&self) -> Option<Slot> {
        self.slot
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    /// `|0...0>` on `n` qubits.
    pub fn zero_state(n: usize) -> Result<Self> {
        check_qubits(n)?;
        let mut amps = vec![ZERO; 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    /// Computational basis state `|index>`.
    pub fn basis_state(n: usize, index: usize) -> Result<Self> {
        let mut s = Self::zero_state(n)?;
        if index >= s.amps.len() {
            return Err(Error::ShapeMismatch(format!(
                "basis index {index} outside {n}-qubit register"
            )));
        }
        s.amps[0] = ZERO;
        s.amps[index] = Complex64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn from_amplitudes(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_qubits(n)?;
        if amps.len() != 1 << n {
            return Err(Error::SlotCountMismatch {
                what: "amplitudes",
                expected: 1 << n,
                got: amps.len(),
            });
        }
        Ok(Self { n, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// Applies `gate` with the bound `angle` (required iff the gate is parameterized).
    pub fn apply_gate(&mut self, gate: &Gate, angle: Option<f64>) -> Result<()> {
        for &w in gate.wires() {
            self.check_wire(w)?;
        }
        match (gate.kind.is_parameterized(), angle) {
            (true, None) => Err(Error::AngleMismatch {
                kind: gate.kind.name(),
                detail: "requires an angle",
            }),
            (false, Some(_)) => Err(Error::AngleMismatch {
                kind: gate.kind.name(),
                detail: "takes no angle",
            }),
            _ => {
                self.apply_raw(gate.kind, gate.wires, angle.unwrap_or(0.0));
                Ok(())
            }
        }
    }

    /// Applies the inverse of `gate` at `angle`.
    pub fn apply_inverse(&mut self, gate: &Gate, angle: Option<f64>) -> Result<()> {
        self.apply_gate(gate, angle.map(|a| -a))
    }

    /// `<Z_wire>`.
    pub fn expect_z(&self, wire: usize) -> Result<f64> {
        self.check_wire(wire)?;
        let m = self.mask(wire);
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(k, a)| if k & m == 0 { a.norm_sqr() } else { -a.norm_sqr() })
            .sum())
    }

    /// `(<Z_0>, ..., <Z_{n-1}>)` in one pass over the amplitudes.
    pub fn expect_z_all(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, a) in self.amps.iter().enumerate() {
            let p = a.norm_sqr();
            for (w, o) in out.iter_mut().enumerate() {
                if k & (1 << (self.n - 1 - w)) == 0 {
                    *o += p;
                } else {
                    *o -= p;
                }
            }
        }
        out
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    fn check_wire(&self, wire: usize) -> Result<()> {
        if wire >= self.n {
            Err(Error::WireOutOfRange { wire, n: self.n })
        } else {
            Ok(())
        }
    }

    #[inline]
    fn mask(&self, wire: usize) -> usize {
        1 << (self.n - 1 - wire)
    }

    /// Unchecked kernel dispatch; wires must already be validated.
    pub(crate) fn apply_raw(&mut self, kind: GateKind, wires: [usize; 2], angle: f64) {
        let ma = self.mask(wires[0]);
        let mb = self.mask(wires[1]);
        match kind {
            GateKind::Ry => {
                let (s, c) = (angle / 2.0).sin_cos();
                self.mix_pairs(ma, |a, b| (a * c - b * s, a * s + b * c));
            }
            GateKind::Rx => {
                let (s, c) = (angle / 2.0).sin_cos();
                let mis = Complex64::new(0.0, -s);
                self.mix_pairs(ma, |a, b| (a * c + b * mis, a * mis + b * c));
            }
            GateKind::Rz => {
                let (s, c) = (angle / 2.0).sin_cos();
                let lo = Complex64::new(c, -s);
                let hi = Complex64::new(c, s);
                self.mix_pairs(ma, |a, b| (a * lo, b * hi));
            }
            GateKind::H => {
                self.mix_pairs(ma, |a, b| ((a + b) * FRAC_1_SQRT_2, (a - b) * FRAC_1_SQRT_2));
            }
            GateKind::Cz => {
                let both = ma | mb;
                for (k, a) in self.amps.iter_mut().enumerate() {
                    if k & both == both {
                        *a = -*a;
                    }
                }
            }
            GateKind::Cnot => {
                for k in 0..self.amps.len() {
                    if k & ma != 0 && k & mb == 0 {
                        self.amps.swap(k, k | mb);
                    }
                }
            }
            GateKind::Zz => {
                let (s, c) = (angle / 2.0).sin_cos();
                let even = Complex64::new(c, -s);
                let odd = Complex64::new(c, s);
                for (k, a) in self.amps.iter_mut().enumerate() {
                    let parity = ((k & ma) != 0) ^ ((k & mb) != 0);
                    *a *= if parity { odd } else { even };
                }
            }
        }
    }

    #[inline]
    fn mix_pairs<F>(&mut self, m: usize, f: F)
    where
        F: Fn(Complex64, Complex64) -> (Complex64, Complex64),
    {
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            let (lo, hi) = self.amps[base..base + 2 * m].split_at_mut(m);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (na, nb) = f(*a, *b);
                *a = na;
                *b = nb;
            }
            base += 2 * m;
        }
    }

    /// `<self| G |ket>` where `G` is the Pauli generator of a rotation gate
    /// (`R(t) = exp(-i t/2 G)`): X for RX, Y for RY, Z for RZ, Z⊗Z for ZZ.
    pub(crate) fn generator_overlap(
        &self,
        ket: &StateVector,
        kind: GateKind,
        wires: [usize; 2],
    ) -> Complex64 {
        let ma = self.mask(wires[0]);
        let mb = self.mask(wires[1]);
        let bra = &self.amps;
        let ket = &ket.amps;
        match kind {
            GateKind::Rx => {
                let mut acc = ZERO;
                for k in 0..bra.len() {
                    acc += bra[k].conj() * ket[k ^ ma];
                }
                acc
            }
            GateKind::Ry => {
                // Y|0> = i|1>, Y|1> = -i|0>
                let mut acc = ZERO;
                for k in 0..bra.len() {
                    let t = bra[k].conj() * ket[k ^ ma];
                    if k & ma == 0 {
                        acc -= t;
                    } else {
                        acc += t;
                    }
                }
                acc * Complex64::new(0.0, 1.0)
            }
            GateKind::Rz => {
                let mut acc = ZERO;
                for k in 0..bra.len() {
                    let t = bra[k].conj() * ket[k];
                    if k & ma == 0 {
                        acc += t;
                    } else {
                        acc -= t;
                    }
                }
                acc
            }
            GateKind::Zz => {
                let mut acc = ZERO;
                for k in 0..bra.len() {
                    let t = bra[k].conj() * ket[k];
                    if ((k & ma) != 0) ^ ((k & mb) != 0) {
                        acc -= t;
                    } else {
                        acc += t;
                    }
                }
                acc
            }
            GateKind::H | GateKind::Cz | GateKind::Cnot => ZERO,
        }
    }

    /// Multiplies each amplitude by the diagonal observable `sum_w c_w Z_w`.
    pub(crate) fn apply_weighted_z(&mut self, weights: &[f64]) {
        let n = self.n;
        for (k, a) in self.amps.iter_mut().enumerate() {
            let mut d = 0.0;
            for (w, c) in weights.iter().enumerate() {
                if k & (1 << (n - 1 - w)) == 0 {
                    d += c;
                } else {
                    d -= c;
                }
            }
            *a *= d;
        }
    }
}

fn check_qubits(n: usize) -> Result<()> {
    if n == 0 || n > MAX_QUBITS {
        Err(Error::InvalidSpec(format!(
            "qubit count {n} outside 1..={MAX_QUBITS}"
        )))
    } else {
        Ok(())
    }
}

/// Ordered gate list over a parameter-slot table split into variational
/// (trainable) and embedding (input-bound) slots. A slot may be referenced
/// by several gates.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    n: usize,
    gates: Vec<Gate>,
    n_variational: usize,
    n_embedding: usize,
}

impl Circuit {
    pub fn new(n: usize, n_variational: usize, n_embedding: usize) -> Result<Self> {
        check_qubits(n)?;
        Ok(Self {
            n,
            gates: Vec::new(),
            n_variational,
            n_embedding,
        })
    }

    pub fn push(&mut self, gate: Gate) -> Result<()> {
        for &w in gate.wires() {
            if w >= self.n {
                return Err(Error::WireOutOfRange { wire: w, n: self.n });
            }
        }
        match gate.slot {
            Some(Slot::Variational(i)) if i >= self.n_variational => {
                return Err(Error::SlotCountMismatch {
                    what: "variational slot index",
                    expected: self.n_variational,
                    got: i,
                })
            }
            Some(Slot::Embedding(i)) if i >= self.n_embedding => {
                return Err(Error::SlotCountMismatch {
                    what: "embedding slot index",
                    expected: self.n_embedding,
                    got: i,
                })
            }
            _ => {}
        }
        self.gates.push(gate);
        Ok(())
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn variational_slots(&self) -> usize {
        self.n_variational
    }

    pub fn embedding_slots(&self) -> usize {
        self.n_embedding
    }

    pub(crate) fn check_inputs(&self, variational: &[f64], embedding: &[f64]) -> Result<()> {
        if variational.len() != self.n_variational {
            return Err(Error::SlotCountMismatch {
                what: "variational angles",
                expected: self.n_variational,
                got: variational.len(),
            });
        }
        if embedding.len() != self.n_embedding {
            return Err(Error::SlotCountMismatch {
                what: "embedding angles",
                expected: self.n_embedding,
                got: embedding.len(),
            });
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn bound_angle(gate: &Gate, variational: &[f64], embedding: &[f64]) -> f64 {
        match gate.slot {
            Some(Slot::Variational(i)) => variational[i],
            Some(Slot::Embedding(i)) => embedding[i],
            None => 0.0,
        }
    }

    /// Final state from `|0...0>`, optionally offsetting the angle of one gate occurrence.
    pub(crate) fn simulate_shifted(
        &self,
        variational: &[f64],
        embedding: &[f64],
        shift: Option<(usize, f64)>,
    ) -> StateVector {
        let mut state = StateVector::zero_state(self.n).expect("qubit count validated");
        for (idx, gate) in self.gates.iter().enumerate() {
            let mut angle = Self::bound_angle(gate, variational, embedding);
            if let Some((at, delta)) = shift {
                if at == idx {
                    angle += delta;
                }
            }
            state.apply_raw(gate.kind, gate.wires, angle);
        }
        state
    }

    pub fn simulate(&self, variational: &[f64], embedding: &[f64]) -> Result<StateVector> {
        self.check_inputs(variational, embedding)?;
        Ok(self.simulate_shifted(variational, embedding, None))
    }
}

/// Binds the slots, runs the circuit from `|0...0>` and returns `(<Z_0>, ..., <Z_{n-1}>)`.
pub fn run_circuit(circuit: &Circuit, variational: &[f64], embedding: &[f64]) -> Result<Vec<f64>> {
    Ok(circuit.simulate(variational, embedding)?.expect_z_all())
}
