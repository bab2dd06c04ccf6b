mod common;

use autoansatz::ansatz::{build_circuit, AnsatzSpec, EmbeddingKind, VariationalKind};
use autoansatz::gradients::{
    adjoint_vjp, finite_diff_grad, param_shift_grad, GradientRequest, Jacobian, Which,
};
use autoansatz::statevector::{Circuit, Slot};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn max_rel_err(shift: &Jacobian, fd: &Jacobian) -> f64 {
    shift
        .as_slice()
        .iter()
        .zip(fd.as_slice())
        .map(|(s, f)| (s - f).abs() / f.abs().max(1.0))
        .fold(0.0, f64::max)
}

/// Finite differences straight off the dense oracle, bypassing the simulator.
fn dense_fd(circuit: &Circuit, var: &[f64], emb: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = circuit.n_qubits();
    let mut cols = Vec::new();
    for i in 0..var.len() {
        let (mut p, mut m) = (var.to_vec(), var.to_vec());
        p[i] += h;
        m[i] -= h;
        let (fp, fm) = (dense_readout(circuit, &p, emb), dense_readout(circuit, &m, emb));
        cols.push((0..n).map(|r| (fp[r] - fm[r]) / (2.0 * h)).collect());
    }
    cols
}

#[test]
fn shift_rule_matches_finite_differences_on_every_template() {
    for emb_kind in EmbeddingKind::ALL {
        for kind in VariationalKind::ALL {
            let spec = AnsatzSpec::new(emb_kind, kind, 5, 2).with_structure_seed(3);
            let c = build_circuit(&spec).unwrap();
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let var = random_angles(&mut rng, c.variational_slots());
                let emb = random_angles(&mut rng, c.embedding_slots());
                let req = GradientRequest::new(&c, &var, &emb, Which::Both);
                let shift = param_shift_grad(&req).unwrap();
                let fd = finite_diff_grad(&req, 1e-4).unwrap();
                let err = max_rel_err(&shift, &fd);
                assert!(err <= 1e-5, "{emb_kind}/{kind} seed {seed}: {err:e}");
            }
        }
    }
}

#[test]
fn shift_rule_matches_dense_oracle_differences() {
    let spec = AnsatzSpec::new(EmbeddingKind::Angle, VariationalKind::S2d, 4, 2);
    let c = build_circuit(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let var = random_angles(&mut rng, c.variational_slots());
    let emb = random_angles(&mut rng, c.embedding_slots());
    let shift = param_shift_grad(&GradientRequest::new(&c, &var, &emb, Which::Variational)).unwrap();
    let oracle = dense_fd(&c, &var, &emb, 1e-4);
    for (s, col) in oracle.iter().enumerate() {
        for (r, v) in col.iter().enumerate() {
            assert!((shift.get(r, s) - v).abs() <= 1e-5 * v.abs().max(1.0));
        }
    }
}

#[test]
fn column_families_are_consistent() {
    let spec = AnsatzSpec::new(EmbeddingKind::Iqp, VariationalKind::Mps, 4, 1);
    let c = build_circuit(&spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let var = random_angles(&mut rng, c.variational_slots());
    let emb = random_angles(&mut rng, c.embedding_slots());
    let both = param_shift_grad(&GradientRequest::new(&c, &var, &emb, Which::Both)).unwrap();
    let v = param_shift_grad(&GradientRequest::new(&c, &var, &emb, Which::Variational)).unwrap();
    let e = param_shift_grad(&GradientRequest::new(&c, &var, &emb, Which::Embedding)).unwrap();
    let nv = c.variational_slots();
    assert_eq!(both.cols(), nv + c.embedding_slots());
    for r in 0..4 {
        for s in 0..nv {
            assert_eq!(both.get(r, s), v.get(r, s));
        }
        for s in 0..c.embedding_slots() {
            assert_eq!(both.get(r, nv + s), e.get(r, s));
        }
    }
}

#[test]
fn adjoint_agrees_with_shift_rule() {
    for emb_kind in EmbeddingKind::ALL {
        for kind in VariationalKind::ALL {
            let spec = AnsatzSpec::new(emb_kind, kind, 5, 2).with_structure_seed(17);
            let c = build_circuit(&spec).unwrap();
            for seed in 0..5 {
                let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
                let var = random_angles(&mut rng, c.variational_slots());
                let emb = random_angles(&mut rng, c.embedding_slots());
                let w: Vec<f64> = (0..5).map(|_| rng.gen_range(-2.0..2.0)).collect();
                let adj = adjoint_vjp(&c, &var, &emb, &w).unwrap();
                let jac = param_shift_grad(&GradientRequest::new(&c, &var, &emb, Which::Both))
                    .unwrap();
                let expected = jac.contract(&w);
                let got: Vec<f64> =
                    adj.grad_variational.iter().chain(&adj.grad_embedding).copied().collect();
                for (a, b) in got.iter().zip(&expected) {
                    assert!((a - b).abs() <= 1e-10, "{emb_kind}/{kind}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn random_s2d_cross_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for n in 2..=6 {
        let c = build_circuit(&AnsatzSpec::new(EmbeddingKind::Angle, VariationalKind::S2d, n, 2))
            .unwrap();
        let var = random_angles(&mut rng, c.variational_slots());
        let emb = random_angles(&mut rng, c.embedding_slots());
        let req = GradientRequest::new(&c, &var, &emb, Which::Variational);
        let err = max_rel_err(&param_shift_grad(&req).unwrap(), &finite_diff_grad(&req, 1e-4).unwrap());
        assert!(err <= 1e-5);
    }
}

fn occurrences(c: &Circuit) -> Vec<usize> {
    let mut occ = vec![0; c.variational_slots() + c.embedding_slots()];
    for g in c.gates() {
        match g.slot() {
            Some(Slot::Variational(i)) => occ[i] += 1,
            Some(Slot::Embedding(i)) => occ[c.variational_slots() + i] += 1,
            None => {}
        }
    }
    occ
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn shift_and_fd_agree_for_all_templates(
        seed in any::<u64>(),
        n in 2usize..=6,
        layers in 1usize..=2,
        kind in 0usize..7,
        emb_kind in 0usize..2,
    ) {
        let spec = AnsatzSpec::new(EmbeddingKind::ALL[emb_kind], VariationalKind::ALL[kind], n, layers)
            .with_structure_seed(seed);
        let c = build_circuit(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let var = random_angles(&mut rng, c.variational_slots());
        let emb = random_angles(&mut rng, c.embedding_slots());
        let req = GradientRequest::new(&c, &var, &emb, Which::Both);
        let shift = param_shift_grad(&req).unwrap();
        let fd = finite_diff_grad(&req, 1e-4).unwrap();
        for (s, f) in shift.as_slice().iter().zip(fd.as_slice()) {
            prop_assert!((s - f).abs() <= 1e-5 * f.abs().max(1.0));
        }
        let occ = occurrences(&c);
        for r in 0..shift.rows() {
            for (col, &k) in occ.iter().enumerate() {
                prop_assert!(shift.get(r, col).abs() <= k as f64 + 1e-12);
            }
        }
    }
}
