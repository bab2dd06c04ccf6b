//! Test-only oracles, independent of the stride kernels under test.
#![allow(dead_code)]

use autoansatz::statevector::{Circuit, Gate, GateKind, Slot};
use num_complex::Complex64;
use rand::Rng;

pub type Matrix = Vec<Vec<Complex64>>;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn identity(dim: usize) -> Matrix {
    (0..dim)
        .map(|i| (0..dim).map(|j| if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect())
        .collect()
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (ra, rb) = (a.len(), b.len());
    let mut out = vec![vec![c(0.0, 0.0); ra * rb]; ra * rb];
    for i in 0..ra {
        for j in 0..ra {
            for k in 0..rb {
                for l in 0..rb {
                    out[i * rb + k][j * rb + l] = a[i][j] * b[k][l];
                }
            }
        }
    }
    out
}

pub fn add(a: &Matrix, b: &Matrix) -> Matrix {
    a.iter()
        .zip(b)
        .map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| x + y).collect())
        .collect()
}

pub fn scale(a: &Matrix, s: Complex64) -> Matrix {
    a.iter().map(|r| r.iter().map(|x| x * s).collect()).collect()
}

pub fn matvec(m: &Matrix, v: &[Complex64]) -> Vec<Complex64> {
    m.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

/// Kronecker product over wires, wire 0 leftmost (most significant).
fn embed(n: usize, factors: &[(usize, Matrix)]) -> Matrix {
    let mut m = vec![vec![c(1.0, 0.0)]];
    for w in 0..n {
        let f = factors
            .iter()
            .find(|(fw, _)| *fw == w)
            .map(|(_, f)| f.clone())
            .unwrap_or_else(|| identity(2));
        m = kron(&m, &f);
    }
    m
}

fn m2(a: [[Complex64; 2]; 2]) -> Matrix {
    a.iter().map(|r| r.to_vec()).collect()
}

pub fn single_qubit(kind: GateKind, t: f64) -> Matrix {
    let (s, co) = (t / 2.0).sin_cos();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match kind {
        GateKind::Rx => m2([[c(co, 0.0), c(0.0, -s)], [c(0.0, -s), c(co, 0.0)]]),
        GateKind::Ry => m2([[c(co, 0.0), c(-s, 0.0)], [c(s, 0.0), c(co, 0.0)]]),
        GateKind::Rz => m2([[c(co, -s), c(0.0, 0.0)], [c(0.0, 0.0), c(co, s)]]),
        GateKind::H => m2([[c(h, 0.0), c(h, 0.0)], [c(h, 0.0), c(-h, 0.0)]]),
        _ => unreachable!(),
    }
}

fn p0() -> Matrix {
    m2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]])
}
fn p1() -> Matrix {
    m2([[c(0.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(1.0, 0.0)]])
}
fn pauli_x() -> Matrix {
    m2([[c(0.0, 0.0), c(1.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]])
}
pub fn pauli_z() -> Matrix {
    m2([[c(1.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(-1.0, 0.0)]])
}

/// Full `2^n x 2^n` unitary of one gate.
pub fn gate_matrix(n: usize, gate: &Gate, t: f64) -> Matrix {
    let w = gate.wires();
    match gate.kind() {
        k @ (GateKind::Rx | GateKind::Ry | GateKind::Rz | GateKind::H) => {
            embed(n, &[(w[0], single_qubit(k, t))])
        }
        GateKind::Cnot => add(
            &embed(n, &[(w[0], p0())]),
            &embed(n, &[(w[0], p1()), (w[1], pauli_x())]),
        ),
        GateKind::Cz => add(
            &embed(n, &[(w[0], p0())]),
            &embed(n, &[(w[0], p1()), (w[1], pauli_z())]),
        ),
        GateKind::Zz => {
            let (s, co) = (t / 2.0).sin_cos();
            add(
                &scale(&identity(1 << n), c(co, 0.0)),
                &scale(&embed(n, &[(w[0], pauli_z()), (w[1], pauli_z())]), c(0.0, -s)),
            )
        }
    }
}

pub fn angle(gate: &Gate, var: &[f64], emb: &[f64]) -> f64 {
    match gate.slot() {
        Some(Slot::Variational(i)) => var[i],
        Some(Slot::Embedding(i)) => emb[i],
        None => 0.0,
    }
}

/// Final state by explicit matrix-vector products.
pub fn dense_state(circuit: &Circuit, var: &[f64], emb: &[f64]) -> Vec<Complex64> {
    let n = circuit.n_qubits();
    let mut psi = vec![c(0.0, 0.0); 1 << n];
    psi[0] = c(1.0, 0.0);
    for g in circuit.gates() {
        psi = matvec(&gate_matrix(n, g, angle(g, var, emb)), &psi);
    }
    psi
}

pub fn dense_expect_z(n: usize, psi: &[Complex64]) -> Vec<f64> {
    (0..n)
        .map(|w| {
            let z = embed(n, &[(w, pauli_z())]);
            let zpsi = matvec(&z, psi);
            psi.iter().zip(&zpsi).map(|(a, b)| (a.conj() * b).re).sum()
        })
        .collect()
}

pub fn dense_readout(circuit: &Circuit, var: &[f64], emb: &[f64]) -> Vec<f64> {
    dense_expect_z(circuit.n_qubits(), &dense_state(circuit, var, emb))
}

/// Random circuit over every gate kind; slots drawn from `n_var` variational
/// and `n_emb` embedding entries.
pub fn random_circuit<R: Rng>(
    rng: &mut R,
    n: usize,
    n_gates: usize,
    n_var: usize,
    n_emb: usize,
) -> Circuit {
    let mut circuit = Circuit::new(n, n_var, n_emb).unwrap();
    for _ in 0..n_gates {
        let kind = if n == 1 {
            [GateKind::Rx, GateKind::Ry, GateKind::Rz, GateKind::H][rng.gen_range(0..4)]
        } else {
            GateKind::ALL[rng.gen_range(0..GateKind::ALL.len())]
        };
        let a = rng.gen_range(0..n);
        let wires: Vec<usize> = if kind.arity() == 2 {
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            vec![a, b]
        } else {
            vec![a]
        };
        let slot = kind.is_parameterized().then(|| {
            if n_emb == 0 || (n_var > 0 && rng.gen_bool(0.5)) {
                Slot::Variational(rng.gen_range(0..n_var))
            } else {
                Slot::Embedding(rng.gen_range(0..n_emb))
            }
        });
        circuit.push(Gate::new(kind, &wires, slot).unwrap()).unwrap();
    }
    circuit
}

pub fn random_angles<R: Rng>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}
