use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use nare_core::probe::random_matrix;
use nare_core::structured::{
    gamma_select, make_base_operators, residual_norm, FlopModel, ImplicitIterate, LowRankBilinear, Shifted, ShiftedSolver,
};
use nare_core::transport::{
    assemble_dense, balance, gauss_legendre, unbalance_solution, NareInstance, Quadrature, TransportParams, TransportStructure,
};
use proptest::prelude::*;

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Random admissible instance: `n` strictly decreasing nodes in (0, 1), positive
/// weights summing to 1.
fn instance() -> impl Strategy<Value = NareInstance<f64>> {
    (1usize..20)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0.05f64..1.0, n + 1),
                prop::collection::vec(0.05f64..1.0, n),
                0.05f64..0.99,
                0.0f64..0.95,
            )
        })
        .prop_map(|(gaps, w, c, alpha)| {
            let span: f64 = gaps.iter().sum();
            let mut omega: Vec<f64> = gaps[..gaps.len() - 1]
                .iter()
                .scan(0.0, |acc, g| {
                    *acc += g;
                    Some(*acc / span)
                })
                .collect();
            omega.reverse();
            let total: f64 = w.iter().sum();
            let weights = w.iter().map(|x| x / total).collect::<Vec<_>>();
            let n = omega.len();
            let quad = Quadrature::new(omega, weights).unwrap();
            let params = TransportParams::new(c, alpha, n).unwrap();
            NareInstance::build(&params, &quad).unwrap()
        })
}

fn low_rank(n: usize, r: usize, seed: u64) -> LowRankBilinear<f64> {
    let l = random_matrix::<f64>(n, r, seed);
    let m = random_matrix::<f64>(r, r, seed + 1);
    let rt = random_matrix::<f64>(n, r, seed + 2);
    LowRankBilinear::from_factors(&l, &m, &rt, 0.0, &mut FlopModel::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gauss_legendre_nodes_and_weights(n in 1usize..400) {
        let q = gauss_legendre::<f64>(n);
        prop_assert_eq!(q.len(), n);
        prop_assert!(q.omega().iter().all(|&w| w > 0.0 && w < 1.0));
        prop_assert!(q.weights().iter().all(|&w| w > 0.0));
        let sum: f64 = q.weights().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-14);

        let mut nodes = q.omega().to_vec();
        nodes.sort_by(f64::total_cmp);
        for i in 0..n {
            prop_assert!((nodes[i] + nodes[n - 1 - i] - 1.0).abs() <= 1e-14);
        }
        // Exact for polynomials of degree ≤ 2n − 1 on [0, 1].
        let deg = (2 * n - 1).min(9) as i32;
        let integral: f64 = q.omega().iter().zip(q.weights()).map(|(x, w)| w * x.powi(deg)).sum();
        prop_assert!((integral - 1.0 / (deg as f64 + 1.0)).abs() <= 1e-13);
    }

    #[test]
    fn delta_below_d_and_positive_q(inst in instance()) {
        for i in 0..inst.n() {
            prop_assert!(inst.delta()[i] > 0.0);
            prop_assert!(inst.delta()[i] <= inst.d()[i]);
            prop_assert!(inst.q()[i] > 0.0);
        }
        prop_assert!(gamma_select(&inst) > 0.0);
    }

    #[test]
    fn balancing_is_a_diagonal_similarity(inst in instance()) {
        let n = inst.n();
        let b = balance(&inst).unwrap();
        let orig = assemble_dense(&inst, 64).unwrap();
        let bal = assemble_dense(&b, 64).unwrap();
        let phi = DMatrix::from_diagonal(b.phi());
        let inv = DMatrix::from_diagonal(&b.phi().map(|p| 1.0 / p));

        prop_assert!(rel(&bal.a, &(&phi * &orig.a * &inv)) <= 1e-13);
        prop_assert!(rel(&bal.b, &(&phi * &orig.b * &phi)) <= 1e-13);
        prop_assert!(rel(&bal.c, &(&inv * &orig.c * &inv)) <= 1e-13);
        prop_assert!(rel(&bal.e, &(&inv * &orig.e * &phi)) <= 1e-13);
        prop_assert!(rel(&bal.b, &bal.c) <= 1e-15);
        prop_assert!(rel(&bal.a, &bal.a.transpose()) <= 1e-15);

        let xb = low_rank(n, n.min(3), n as u64);
        let x = unbalance_solution(&xb, b.phi()).unwrap();
        prop_assert!(x.check_invariants(1e-12));
        prop_assert!(rel(&x.to_dense(), &(&inv * xb.to_dense() * &inv)) <= 1e-12);
        let lhs = orig.residual(&x.to_dense());
        let rhs = &inv * {
            let xd = xb.to_dense();
            &xd * &bal.c * &xd - &xd * &bal.e - &bal.a * &xd + &bal.b
        } * &inv;
        prop_assert!((lhs - rhs.norm()).abs() <= 1e-11 * rhs.norm().max(1.0));
    }

    #[test]
    fn shifted_solves_round_trip(inst in instance(), seed in 0u64..1000, m in 1usize..4) {
        let n = inst.n();
        let gamma = gamma_select(&inst);
        let solver = ShiftedSolver::new(&inst, gamma).unwrap();
        let rhs = random_matrix::<f64>(n, m, seed);
        for which in [Shifted::E, Shifted::A, Shifted::W, Shifted::V] {
            for transpose in [false, true] {
                let y = solver.solve(which, &rhs, transpose);
                let back = solver.apply(which, &y, transpose);
                prop_assert!(rel(&back, &rhs) <= 1e-12, "{:?} {}", which, transpose);
                let dense = solver.operator(which).to_dense();
                let dense = if transpose { dense.transpose() } else { dense };
                prop_assert!(rel(&(dense * &y), &rhs) <= 1e-12);
            }
        }
    }

    #[test]
    fn balanced_operators_are_self_transpose(inst in instance(), seed in 0u64..1000) {
        let b = balance(&inst).unwrap();
        let solver = ShiftedSolver::new(&b, gamma_select(&b)).unwrap();
        let rhs = random_matrix::<f64>(b.n(), 2, seed);
        for which in [Shifted::E, Shifted::A, Shifted::W, Shifted::V] {
            let plain = solver.solve(which, &rhs, false);
            let trans = solver.solve(which, &rhs, true);
            prop_assert!(rel(&trans, &plain) <= 1e-13);
        }
        let (e0, f0) = make_base_operators(&solver);
        prop_assert!(rel(&e0.apply(&rhs, true), &e0.apply(&rhs, false)) <= 1e-13);
        prop_assert!(rel(&f0.apply(&rhs, true), &f0.apply(&rhs, false)) <= 1e-13);
    }

    #[test]
    fn factored_residual_matches_dense(inst in instance(), r in 0usize..4, seed in 0u64..1000) {
        let n = inst.n();
        let x = if r == 0 { LowRankBilinear::zero(n) } else { low_rank(n, r.min(n), seed) };
        let dense = assemble_dense(&inst, 64).unwrap();
        let expect = dense.residual(&x.to_dense());
        let got = residual_norm(&inst, &x, &mut FlopModel::default()).unwrap();
        prop_assert!((got.absolute - expect).abs() <= 1e-10 * expect.max(1.0));
        prop_assert!((got.normalized * inst.b_norm() - got.absolute).abs() <= 1e-12 * got.absolute.max(1.0));
    }

    #[test]
    fn implicit_iterate_doubles_base_work(inst in instance(), levels in 0usize..5, m in 1usize..4, seed in 0u64..1000) {
        let n = inst.n();
        let solver = ShiftedSolver::new(&inst, gamma_select(&inst)).unwrap();
        let (e0, _) = make_base_operators(&solver);
        let mut dense = e0.apply(&DMatrix::identity(n, n), false);
        let mut imp = ImplicitIterate::new(Arc::new(e0));
        for j in 0..levels {
            let u = random_matrix::<f64>(n, 2, seed + 10 * j as u64) * 0.1;
            let v = random_matrix::<f64>(n, 2, seed + 10 * j as u64 + 1) * 0.1;
            dense = &dense * &dense + &u * v.transpose();
            imp.push_update(u, v);
        }
        let block = random_matrix::<f64>(n, m, seed + 999);
        let mut flops = FlopModel::default();
        let y = imp.apply(&block, false, &mut flops);
        let yt = imp.apply(&block, true, &mut flops);
        prop_assert_eq!(flops.totals().base_applications, 2 * m as u64 * (1u64 << levels));
        prop_assert_eq!(flops.totals().implicit_block_products, 2);
        prop_assert!(rel(&y, &(&dense * &block)) <= 1e-10);
        prop_assert!(rel(&yt, &(dense.transpose() * &block)) <= 1e-10);
    }

    #[test]
    fn low_rank_canonical_form(n in 1usize..40, r in 1usize..6, seed in 0u64..1000, trunc in prop::sample::select(vec![0.0, 1e-14, 1e-3])) {
        let r = r.min(n);
        let l = random_matrix::<f64>(n, r, seed);
        let m = random_matrix::<f64>(r, r, seed + 1);
        let rt = random_matrix::<f64>(n, r, seed + 2);
        let x = LowRankBilinear::from_factors(&l, &m, &rt, trunc, &mut FlopModel::default()).unwrap();
        prop_assert!(x.check_invariants(1e-12));
        prop_assert!(x.rank() <= r);
        let dense = &l * &m * rt.transpose();
        let bound = if trunc == 0.0 { 1e-12 } else { trunc * (r as f64).sqrt() + 1e-12 };
        prop_assert!(rel(&x.to_dense(), &dense) <= bound);
        prop_assert!(rel(&x.transpose().to_dense(), &x.to_dense().transpose()) <= 1e-14);
        prop_assert!((x.norm() - x.to_dense().norm()).abs() <= 1e-12 * x.norm());
        let min = x.to_dense().min();
        prop_assert!((x.min_entry() - min).abs() <= 1e-12 * x.norm().max(1.0));
        let twice = LowRankBilinear::from_factors(&x.scaled_left(), &DMatrix::identity(x.rank(), x.rank()), x.right(), 0.0, &mut FlopModel::default()).unwrap();
        prop_assert!((DVector::from(twice.core().clone()) - x.core()).norm() <= 1e-12 * x.norm());
    }
}
