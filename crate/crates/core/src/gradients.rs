//! Derivatives of Pauli-Z readouts with respect to circuit angles.
//!
//! [`param_shift_grad`] is the reference path: every rotation in the gate
//! alphabet is `exp(-i t/2 G)` with `G` squaring to identity, so each gate
//! occurrence contributes `(f(t + pi/2) - f(t - pi/2)) / 2`. A slot shared by
//! several gates sums its per-occurrence terms.
//!
//! [`adjoint_vjp`] computes the same derivatives contracted against a weight
//! vector over the readouts, at roughly the cost of three forward passes.
//! Training uses it; tests hold it to the shift rule.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};
use crate::statevector::{Circuit, Slot};

/// Which slot families form the Jacobian columns. With `Both` the
/// variational columns come first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Variational,
    Embedding,
    Both,
}

#[derive(Clone, Copy, Debug)]
pub struct GradientRequest<'a> {
    pub circuit: &'a Circuit,
    pub variational: &'a [f64],
    pub embedding: &'a [f64],
    pub which: Which,
}

impl<'a> GradientRequest<'a> {
    pub fn new(
        circuit: &'a Circuit,
        variational: &'a [f64],
        embedding: &'a [f64],
        which: Which,
    ) -> Self {
        Self {
            circuit,
            variational,
            embedding,
            which,
        }
    }

    fn n_columns(&self) -> usize {
        match self.which {
            Which::Variational => self.circuit.variational_slots(),
            Which::Embedding => self.circuit.embedding_slots(),
            Which::Both => self.circuit.variational_slots() + self.circuit.embedding_slots(),
        }
    }

    fn column(&self, slot: Slot) -> Option<usize> {
        match (self.which, slot) {
            (Which::Variational | Which::Both, Slot::Variational(i)) => Some(i),
            (Which::Embedding, Slot::Embedding(i)) => Some(i),
            (Which::Both, Slot::Embedding(i)) => Some(self.circuit.variational_slots() + i),
            _ => None,
        }
    }

    fn slot_of(&self, column: usize) -> Slot {
        let nv = self.circuit.variational_slots();
        match self.which {
            Which::Variational => Slot::Variational(column),
            Which::Embedding => Slot::Embedding(column),
            Which::Both if column < nv => Slot::Variational(column),
            Which::Both => Slot::Embedding(column - nv),
        }
    }
}

fn set_slot(var: &mut [f64], emb: &mut [f64], slot: Slot, value: f64) {
    match slot {
        Slot::Variational(i) => var[i] = value,
        Slot::Embedding(i) => emb[i] = value,
    }
}

/// Row-major `readouts x slots` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Jacobian {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, readout: usize, column: usize) -> f64 {
        self.data[readout * self.cols + column]
    }

    fn add(&mut self, readout: usize, column: usize, v: f64) {
        self.data[readout * self.cols + column] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `weights^T J`.
    pub fn contract(&self, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, w) in weights.iter().enumerate().take(self.rows) {
            for (c, o) in out.iter_mut().enumerate() {
                *o += w * self.get(r, c);
            }
        }
        out
    }
}

pub fn param_shift_grad(req: &GradientRequest<'_>) -> Result<Jacobian> {
    let c = req.circuit;
    c.check_inputs(req.variational, req.embedding)?;
    let mut jac = Jacobian::zeros(c.n_qubits(), req.n_columns());
    for (idx, gate) in c.gates().iter().enumerate() {
        let Some(col) = gate.slot().and_then(|s| req.column(s)) else {
            continue;
        };
        let plus = c
            .simulate_shifted(req.variational, req.embedding, Some((idx, FRAC_PI_2)))
            .expect_z_all();
        let minus = c
            .simulate_shifted(req.variational, req.embedding, Some((idx, -FRAC_PI_2)))
            .expect_z_all();
        for (r, (p, m)) in plus.iter().zip(&minus).enumerate() {
            jac.add(r, col, 0.5 * (p - m));
        }
    }
    Ok(jac)
}

/// Central differences `(f(s + h) - f(s - h)) / 2h` per slot.
pub fn finite_diff_grad(req: &GradientRequest<'_>, h: f64) -> Result<Jacobian> {
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be > 0, got {h}")));
    }
    let c = req.circuit;
    c.check_inputs(req.variational, req.embedding)?;
    let mut jac = Jacobian::zeros(c.n_qubits(), req.n_columns());
    let mut var = req.variational.to_vec();
    let mut emb = req.embedding.to_vec();
    for col in 0..req.n_columns() {
        let slot = req.slot_of(col);
        let orig = match slot {
            Slot::Variational(i) => var[i],
            Slot::Embedding(i) => emb[i],
        };
        set_slot(&mut var, &mut emb, slot, orig + h);
        let plus = c.simulate_shifted(&var, &emb, None).expect_z_all();
        set_slot(&mut var, &mut emb, slot, orig - h);
        let minus = c.simulate_shifted(&var, &emb, None).expect_z_all();
        set_slot(&mut var, &mut emb, slot, orig);
        for (r, (p, m)) in plus.iter().zip(&minus).enumerate() {
            jac.add(r, col, (p - m) / (2.0 * h));
        }
    }
    Ok(jac)
}

/// Readouts plus the gradient of `sum_w weights[w] * <Z_w>` with respect to
/// every variational and embedding slot, by reverse sweep over the gates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointResult {
    pub readout: Vec<f64>,
    pub grad_variational: Vec<f64>,
    pub grad_embedding: Vec<f64>,
}

pub fn adjoint_vjp(
    circuit: &Circuit,
    variational: &[f64],
    embedding: &[f64],
    weights: &[f64],
) -> Result<AdjointResult> {
    adjoint_vjp_with(circuit, variational, embedding, |_| weights.to_vec())
}

/// Like [`adjoint_vjp`], with the readout weights computed from the forward
/// readout (e.g. a loss gradient) so the circuit is simulated only once.
pub fn adjoint_vjp_with<F>(
    circuit: &Circuit,
    variational: &[f64],
    embedding: &[f64],
    weights_for: F,
) -> Result<AdjointResult>
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    circuit.check_inputs(variational, embedding)?;
    let mut psi = circuit.simulate_shifted(variational, embedding, None);
    let readout = psi.expect_z_all();
    let weights = weights_for(&readout);
    if weights.len() != circuit.n_qubits() {
        return Err(Error::SlotCountMismatch {
            what: "readout weights",
            expected: circuit.n_qubits(),
            got: weights.len(),
        });
    }
    let mut lam = psi.clone();
    lam.apply_weighted_z(&weights);

    let mut grad_variational = vec![0.0; variational.len()];
    let mut grad_embedding = vec![0.0; embedding.len()];
    let gates = circuit.gates();
    for (idx, gate) in gates.iter().enumerate().rev() {
        let wires = [gate.wires()[0], *gate.wires().last().unwrap()];
        let angle = Circuit::bound_angle(gate, variational, embedding);
        if let Some(slot) = gate.slot() {
            // d/dt <psi|O|psi> = Im <lam| G |psi> with psi taken after the gate
            let d = lam.generator_overlap(&psi, gate.kind(), wires).im;
            match slot {
                Slot::Variational(i) => grad_variational[i] += d,
                Slot::Embedding(i) => grad_embedding[i] += d,
            }
        }
        if idx > 0 {
            psi.apply_raw(gate.kind(), wires, -angle);
            lam.apply_raw(gate.kind(), wires, -angle);
        }
    }
    Ok(AdjointResult {
        readout,
        grad_variational,
        grad_embedding,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statevector::Gate;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn single_ry() -> Circuit {
        let mut c = Circuit::new(1, 1, 0).unwrap();
        c.push(Gate::ry(0, Slot::Variational(0))).unwrap();
        c
    }

    #[test]
    fn shift_rule_on_single_ry() {
        let c = single_ry();
        let j = param_shift_grad(&GradientRequest::new(&c, &[0.0], &[], Which::Variational))
            .unwrap();
        assert!(j.get(0, 0).abs() < 1e-15);
        let j = param_shift_grad(&GradientRequest::new(
            &c,
            &[FRAC_PI_2],
            &[],
            Which::Variational,
        ))
        .unwrap();
        assert!((j.get(0, 0) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn finite_diff_on_single_ry() {
        let c = single_ry();
        let j = finite_diff_grad(
            &GradientRequest::new(&c, &[PI / 3.0], &[], Which::Variational),
            1e-4,
        )
        .unwrap();
        assert!((j.get(0, 0) + (PI / 3.0).sin()).abs() <= 1e-7);
    }

    #[test]
    fn zero_gate_circuit_has_zero_jacobian() {
        let c = Circuit::new(2, 3, 1).unwrap();
        let req = GradientRequest::new(&c, &[0.1, 0.2, 0.3], &[0.4], Which::Both);
        for j in [param_shift_grad(&req).unwrap(), finite_diff_grad(&req, 1e-4).unwrap()] {
            assert_eq!((j.rows(), j.cols()), (2, 4));
            assert!(j.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn unused_slot_is_exactly_zero() {
        let mut c = Circuit::new(2, 2, 0).unwrap();
        c.push(Gate::ry(0, Slot::Variational(0))).unwrap();
        c.push(Gate::cnot(0, 1)).unwrap();
        let j = param_shift_grad(&GradientRequest::new(&c, &[0.7, 1.3], &[], Which::Variational))
            .unwrap();
        assert_eq!(j.get(0, 1), 0.0);
        assert_eq!(j.get(1, 1), 0.0);
    }

    #[test]
    fn bad_step_rejected() {
        let c = single_ry();
        let req = GradientRequest::new(&c, &[0.0], &[], Which::Variational);
        assert!(finite_diff_grad(&req, 0.0).is_err());
        assert!(finite_diff_grad(&req, f64::NAN).is_err());
    }

    #[test]
    fn shared_slot_uses_product_rule() {
        // RY(t) RY(t) = RY(2t): d cos(2t)/dt = -2 sin(2t)
        let mut c = Circuit::new(1, 0, 1).unwrap();
        c.push(Gate::ry(0, Slot::Embedding(0))).unwrap();
        c.push(Gate::ry(0, Slot::Embedding(0))).unwrap();
        let t = 0.4;
        let j = param_shift_grad(&GradientRequest::new(&c, &[], &[t], Which::Embedding)).unwrap();
        assert!((j.get(0, 0) + 2.0 * (2.0 * t).sin()).abs() < 1e-12);
    }

    #[test]
    fn adjoint_on_single_ry() {
        let c = single_ry();
        let r = adjoint_vjp(&c, &[0.9], &[], &[1.0]).unwrap();
        assert!((r.readout[0] - 0.9f64.cos()).abs() < 1e-14);
        assert!((r.grad_variational[0] + 0.9f64.sin()).abs() < 1e-14);
    }
}
