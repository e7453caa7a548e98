use std::sync::Arc;

use dp_iadmm::analysis::{
    derivation_rhs, estimate_bound_constants, noise_recovery, penalized_subproblem_solve, theorem_rhs,
    AveragedIterates, BoundConstants, BoundDims, Regime, ToyKind, ToyProblem,
};
use dp_iadmm::model::{AgentShard, LogisticLoss, ModelConfig, Sample};
use dp_iadmm::optimizer::{run_training, BoxConstraint, Mechanism, RhoSchedule, Schedules, Subproblem, TrainerConfig};
use dp_iadmm::ParamMatrix;
use proptest::prelude::*;

const REGIMES: [Regime; 3] = [
    Regime::Smooth { lipschitz: 2.0 },
    Regime::Nonsmooth,
    Regime::Strong { alpha: 0.5 },
];

fn matrix(rows: usize, cols: usize, scale: f64) -> impl Strategy<Value = ParamMatrix> {
    prop::collection::vec(-scale..scale, rows * cols).prop_map(move |v| ParamMatrix::from_vec(rows, cols, v).unwrap())
}

fn consts() -> BoundConstants {
    BoundConstants {
        u1: 1.5,
        u2: 4.0,
        u3: 0.7,
        u3_sampled: 0.5,
        u3_upper: 0.7,
        lipschitz_h: 1.5,
        constraint_count: 8,
        gamma: 2.0,
        rho1: 1.0,
        rho_max: 3.0,
        lambda1_norm: 0.3,
        estimated: true,
    }
}

fn dims(rounds: usize, local_updates: usize) -> BoundDims {
    BoundDims {
        rounds,
        local_updates,
        agents: 3,
        rows: 2,
        cols: 2,
    }
}

fn scalar(v: f64) -> ParamMatrix {
    ParamMatrix::filled(1, 1, v)
}

#[test]
fn averaging_weights_sum_to_one_over_a_run() {
    let toy = ToyProblem::random(
        ToyKind::Strong { beta: 0.5 },
        3,
        4,
        (2, 2),
        1.0,
        BoxConstraint::new(2.0).unwrap(),
        3,
    )
    .unwrap();
    for regime in REGIMES {
        let rounds = 37;
        let mut avg = AveragedIterates::new(regime, rounds, 3, (2, 2)).unwrap();
        let cfg = TrainerConfig {
            schedules: Schedules {
                rho: RhoSchedule::constant(1.0),
                eta: regime.eta_rule(),
                eps_bar: 1.0,
                local_updates: 3,
                rounds,
            },
            feasible: toy.feasible,
            mechanism: Mechanism::ObjectivePerturbation,
            seed: 5,
            threads: 1,
        };
        run_training(toy.agents.clone(), cfg, |r| avg.observe(r)).unwrap();
        assert!(avg.is_complete());
        assert!(
            (avg.weight_sum() - 1.0).abs() <= 1e-12,
            "{}: {}",
            regime.name(),
            avg.weight_sum()
        );
    }
}

#[test]
fn rhs_without_privacy() {
    let c = consts();
    let d = dims(100, 2);
    let dual = (c.gamma + c.lambda1_norm).powi(2) / c.rho1;
    let smooth = theorem_rhs(Regime::Smooth { lipschitz: 2.0 }, &c, &d, f64::INFINITY);
    let want = (16.0 * (3.0 + 2.0 / 2.0) + dual) / 200.0;
    assert!((smooth - want).abs() <= 1e-14 * want);
    // only the privacy-free part of the 1/sqrt(T) term survives
    let ns = theorem_rhs(Regime::Nonsmooth, &c, &d, f64::INFINITY);
    let rns = (3.0 * 1.5 * 1.5 + 16.0 / 4.0) / 10.0;
    let want = rns + (16.0 * 3.0 + dual + 2.0 * 2.0 * 4.0) / 200.0;
    assert!((ns - want).abs() <= 1e-14 * want);
    for r in REGIMES {
        assert_eq!(
            derivation_rhs(r, &c, &d, f64::INFINITY),
            theorem_rhs(r, &c, &d, f64::INFINITY)
        );
    }
}

#[test]
fn doubling_local_updates_lowers_every_bound() {
    let c = consts();
    for r in REGIMES {
        for e in [1, 2, 5, 10] {
            for eps in [0.1, 1.0, f64::INFINITY] {
                assert!(theorem_rhs(r, &c, &dims(500, 2 * e), eps) < theorem_rhs(r, &c, &dims(500, e), eps));
            }
        }
    }
}

#[test]
fn rhs_is_monotone_over_a_grid() {
    let c = consts();
    let ts = [1, 10, 100, 1000, 10_000];
    let es = [1, 2, 5, 10, 20];
    let epss = [0.05, 0.1, 1.0, 10.0, f64::INFINITY];
    for r in REGIMES {
        for &t in &ts {
            for &e in &es {
                for w in epss.windows(2) {
                    assert!(theorem_rhs(r, &c, &dims(t, e), w[1]) <= theorem_rhs(r, &c, &dims(t, e), w[0]));
                }
            }
        }
        for &e in &es {
            for &eps in &epss {
                for w in ts.windows(2) {
                    assert!(theorem_rhs(r, &c, &dims(w[1], e), eps) < theorem_rhs(r, &c, &dims(w[0], e), eps));
                }
            }
        }
        for &t in &ts {
            for &eps in &epss {
                for w in es.windows(2) {
                    assert!(theorem_rhs(r, &c, &dims(t, w[1]), eps) < theorem_rhs(r, &c, &dims(t, w[0]), eps));
                }
            }
        }
    }
}

#[test]
fn diameter_of_the_unit_scalar_box() {
    let toy = ToyProblem::from_points(
        ToyKind::Smooth,
        vec![vec![scalar(0.3)]],
        BoxConstraint::new(1.0).unwrap(),
    )
    .unwrap();
    let c = estimate_bound_constants(&toy.agents, &toy.feasible, 10, 1).unwrap();
    assert_eq!(c.u2, 2.0);
}

#[test]
fn zero_features_have_zero_sensitivity() {
    let shard = AgentShard::new(0, vec![Sample::new(vec![0.0; 3], 1, 2).unwrap(); 5]).unwrap();
    let cfg = ModelConfig::for_shards(0.0, std::slice::from_ref(&shard));
    let loss = LogisticLoss::new(Arc::new(shard), cfg);
    let c = estimate_bound_constants(&[loss], &BoxConstraint::new(3.0).unwrap(), 50, 2).unwrap();
    assert_eq!(c.u3_sampled, 0.0);
    assert_eq!(c.u3, 0.0);
}

#[test]
fn penalized_solution_matches_interior_closed_form() {
    let (zp, g, w, l, x) = (scalar(0.2), scalar(0.1), scalar(-0.3), scalar(0.05), scalar(0.02));
    let sub = Subproblem {
        z_prev: &zp,
        grad: &g,
        w: &w,
        lambda: &l,
        xi: &x,
        rho: 2.0,
        eta: 0.5,
    };
    let b = BoxConstraint::new(1.0).unwrap();
    let u = sub.unconstrained_minimizer();
    assert!(u.max_abs() < 1.0);
    let z = penalized_subproblem_solve(&sub, &b, 1e4).unwrap();
    assert!(z.dist(&u) <= 1e-6);
}

#[test]
fn penalized_ladder_outside_the_box() {
    // curvature 10, unconstrained minimizer 3, clamped solution 1
    let (zp, w, zero) = (scalar(3.0), scalar(3.0), scalar(0.0));
    let sub = Subproblem {
        z_prev: &zp,
        grad: &zero,
        w: &w,
        lambda: &zero,
        xi: &zero,
        rho: 5.0,
        eta: 0.2,
    };
    let b = BoxConstraint::new(1.0).unwrap();
    let clamp = sub.solve(&b);
    assert_eq!(clamp[(0, 0)], 1.0);
    let d: Vec<f64> = [1.0, 10.0, 100.0, 1000.0]
        .iter()
        .map(|&ell| penalized_subproblem_solve(&sub, &b, ell).unwrap().dist(&clamp))
        .collect();
    assert!(d.windows(2).all(|p| p[1] < p[0]), "{d:?}");
}

#[test]
fn weak_penalty_stays_near_the_unconstrained_minimizer() {
    let (zp, w, zero) = (scalar(3.0), scalar(3.0), scalar(0.0));
    let sub = Subproblem {
        z_prev: &zp,
        grad: &zero,
        w: &w,
        lambda: &zero,
        xi: &zero,
        rho: 5.0,
        eta: 0.2,
    };
    let b = BoxConstraint::new(1.0).unwrap();
    let u = sub.unconstrained_minimizer();
    let z = penalized_subproblem_solve(&sub, &b, 0.01).unwrap();
    assert!(z.dist(&u) <= 0.01 / sub.curvature() + 1e-12);
    assert!(z.dist(&u) < z.dist(&sub.solve(&b)));
    assert!(z[(0, 0)] < u[(0, 0)]);
}

#[test]
fn zero_noise_is_recovered_as_zero() {
    let (zp, g, w, l, zero) = (scalar(0.4), scalar(-0.2), scalar(0.1), scalar(0.3), scalar(0.0));
    let b = BoxConstraint::new(5.0).unwrap();
    let sub = Subproblem {
        z_prev: &zp,
        grad: &g,
        w: &w,
        lambda: &l,
        xi: &zero,
        rho: 3.0,
        eta: 0.25,
    };
    let z = sub.solve(&b);
    let rec = noise_recovery(&z, &zp, &g, &w, &l, 3.0, 0.25, &b).unwrap();
    assert!(rec.excluded.is_empty());
    assert!(rec.xi.max_abs() <= 1e-14);
}

#[test]
fn clamped_coordinates_are_excluded() {
    let zp = ParamMatrix::from_vec(1, 2, vec![0.1, 50.0]).unwrap();
    let g = ParamMatrix::from_vec(1, 2, vec![0.2, -0.1]).unwrap();
    let w = ParamMatrix::from_vec(1, 2, vec![-0.3, 40.0]).unwrap();
    let l = ParamMatrix::zeros(1, 2);
    let xi = ParamMatrix::from_vec(1, 2, vec![0.7, -0.4]).unwrap();
    let b = BoxConstraint::new(1.0).unwrap();
    let sub = Subproblem {
        z_prev: &zp,
        grad: &g,
        w: &w,
        lambda: &l,
        xi: &xi,
        rho: 1.0,
        eta: 1.0,
    };
    let z = sub.solve(&b);
    assert_eq!(z[(0, 1)], 1.0);
    let rec = noise_recovery(&z, &zp, &g, &w, &l, 1.0, 1.0, &b).unwrap();
    assert_eq!(rec.excluded, vec![(0, 1)]);
    assert!(rec.xi[(0, 1)].is_nan());
    assert!(rec.max_error(&xi) <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn weights_sum_to_one(t in 1usize..5000) {
        for r in REGIMES {
            let avg = AveragedIterates::new(r, t, 2, (1, 1)).unwrap();
            let sum: f64 = (1..=t).map(|s| avg.weight(s)).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
        }
        let strong = AveragedIterates::new(Regime::Strong { alpha: 1.0 }, t, 1, (1, 1)).unwrap();
        for s in [1, t / 2 + 1, t] {
            prop_assert_eq!(strong.weight(s), 2.0 * s as f64 / (t as f64 * (t as f64 + 1.0)));
        }
    }

    #[test]
    fn sampled_sensitivity_is_inside_the_bracket(
        rows in prop::collection::vec((prop::collection::vec(0.0..1.0f64, 4), 0usize..3), 1..12),
        b in 0.1..5.0f64,
        seed in any::<u64>(),
    ) {
        let samples = rows.into_iter().map(|(x, c)| Sample::new(x, c, 3).unwrap()).collect();
        let shard = AgentShard::new(0, samples).unwrap();
        let cfg = ModelConfig::for_shards(1e-3, std::slice::from_ref(&shard));
        let loss = LogisticLoss::new(Arc::new(shard), cfg);
        let c = estimate_bound_constants(&[loss], &BoxConstraint::new(b).unwrap(), 50, seed).unwrap();
        prop_assert!(c.u3_sampled <= c.u3_upper, "{} > {}", c.u3_sampled, c.u3_upper);
        prop_assert!(c.u3 >= c.u3_sampled);
    }

    #[test]
    fn noise_round_trip_on_interior_solutions(
        zp in matrix(3, 2, 3.0), g in matrix(3, 2, 3.0), w in matrix(3, 2, 3.0),
        l in matrix(3, 2, 3.0), xi in matrix(3, 2, 3.0),
        rho in 0.05..20.0f64, eta in 0.05..20.0f64,
    ) {
        let b = BoxConstraint::new(1e6).unwrap();
        let sub = Subproblem { z_prev: &zp, grad: &g, w: &w, lambda: &l, xi: &xi, rho, eta };
        let z = sub.solve(&b);
        let rec = noise_recovery(&z, &zp, &g, &w, &l, rho, eta, &b).unwrap();
        prop_assert!(rec.excluded.is_empty());
        prop_assert!(rec.max_error(&xi) <= 1e-8);
    }

    #[test]
    fn penalized_solutions_converge_to_the_projection(
        n in 1usize..=2, vals in prop::collection::vec(-3.0..3.0f64, 10), rho in 0.1..10.0f64, eta in 0.1..10.0f64,
    ) {
        let m = |i: usize| ParamMatrix::from_vec(n, 1, vals[2 * i..2 * i + n].to_vec()).unwrap();
        let (zp, g, w, l, x) = (m(0), m(1), m(2), m(3), m(4));
        let sub = Subproblem { z_prev: &zp, grad: &g, w: &w, lambda: &l, xi: &x, rho, eta };
        let b = BoxConstraint::new(1.0).unwrap();
        let target = sub.solve(&b);
        let d = |ell: f64| penalized_subproblem_solve(&sub, &b, ell).unwrap().dist(&target);
        // per coordinate the penalized and projected solutions differ by at
        // most about ln(ell^2 / c) / ell near a box face
        let slack = n as f64 * (4.0 * 1e8 / sub.curvature() + 1.0f64.exp()).ln() / 1e4;
        prop_assert!(d(1e4) <= slack, "{} > {}", d(1e4), slack);
    }
}
