use std::sync::{Arc, OnceLock};

use hilfer_core::monotone::{
    check_conditions, iterate_extremal, uniqueness_certificate, verify_lower_upper, Discretization, Impulse,
    ImpulsiveProblem, MildOperator, Side, VectorField, WeightedTrajectory,
};
use hilfer_core::operators::Generator;
use hilfer_core::specialfn::{gamma_fn, mittag_leffler, FractionalOrder, SeriesControl};
use hilfer_core::Error;
use nalgebra::DVector;
use proptest::prelude::*;

fn field<F: Fn(f64, f64) -> f64 + Send + Sync + 'static>(f: F) -> VectorField {
    Arc::new(move |t, x: &DVector<f64>| x.map(|v| f(t, v)))
}

fn constant_jump(c: f64) -> Impulse {
    constant_jump_at(0.0, c)
}

fn constant_jump_at(time: f64, c: f64) -> Impulse {
    Impulse { time, jump: Arc::new(move |x: &DVector<f64>| DVector::from_element(x.len(), c)) }
}

fn scalar(ord: FractionalOrder, a: f64, c: f64, g: VectorField, impulses: Vec<Impulse>, x0: f64) -> ImpulsiveProblem {
    ImpulsiveProblem::new(ord, Generator::scalar(a, c).unwrap(), g, impulses, DVector::from_element(1, x0), 1.0)
        .unwrap()
}

fn constant(op: &MildOperator, v: f64) -> WeightedTrajectory {
    op.trajectory_from_raw(|_| DVector::from_element(op.dim(), v)).unwrap()
}

/// `t^{lambda-1} E_{mu,lambda}(-a t^mu)` from the scalar series.
fn s_scalar(ord: &FractionalOrder, a: f64, t: f64) -> f64 {
    t.powf(ord.lambda() - 1.0)
        * mittag_leffler(ord.mu(), ord.lambda(), -a * t.powf(ord.mu()), &SeriesControl::default()).unwrap()
}

#[test]
fn pure_initial_term() {
    let ord = FractionalOrder::new(0.6, 0.3).unwrap();
    let p = scalar(ord, 0.0, 0.0, field(|_, _| 0.0), vec![], 1.0);
    let op = MildOperator::new(&p, Discretization::new(64, 3.0).unwrap()).unwrap();
    let out = op.apply(&op.trajectory_from_raw(|t| DVector::from_element(1, 5.0 * t)).unwrap()).unwrap();
    let g = gamma_fn(ord.lambda()).unwrap();
    for (k, j, t, _) in out.iter() {
        let want = t.powf(ord.lambda() - 1.0) / g;
        assert!((out.raw(k, j)[0] - want).abs() <= 1e-12 * want);
    }
}

#[test]
fn impulse_terms_enter_only_after_their_time() {
    let ord = FractionalOrder::new(0.5, 0.4).unwrap();
    let a = 0.8;
    let jumps = [(0.25, 0.5), (0.5, -0.2), (0.75, 1.5)];
    let imps = jumps.iter().map(|&(t, c)| constant_jump_at(t, c)).collect();
    let p = scalar(ord, a, 0.0, field(|_, _| 0.0), imps, 1.0);
    let op = MildOperator::new(&p, Discretization::new(48, 2.0).unwrap()).unwrap();
    let out = op.apply(&constant(&op, 0.0)).unwrap();
    for (k, j, t, _) in out.iter() {
        let mut want = s_scalar(&ord, a, t);
        for &(ti, c) in jumps.iter().take(k) {
            want += s_scalar(&ord, a, t - ti) * c;
        }
        let got = out.raw(k, j)[0];
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "t={t}: {got} vs {want}");
    }
}

#[test]
fn zero_jump_leaves_solution_unchanged() {
    let ord = FractionalOrder::new(0.7, 0.5).unwrap();
    let zero = Impulse { time: 0.4, jump: Arc::new(|x: &DVector<f64>| DVector::zeros(x.len())) };
    for imps in [vec![], vec![zero]] {
        let p = scalar(ord, 1.3, 0.0, field(|_, _| 0.0), imps, 2.0);
        let op = MildOperator::new(&p, Discretization::new(32, 2.0).unwrap()).unwrap();
        let out = op.apply(&constant(&op, 0.0)).unwrap();
        for (k, j, t, _) in out.iter() {
            let want = 2.0 * s_scalar(&ord, 1.3, t);
            assert!((out.raw(k, j)[0] - want).abs() <= 1e-12 * want);
        }
    }
}

#[test]
fn general_type_linear_problem_matches_closed_form() {
    let ord = FractionalOrder::new(0.6, 0.5).unwrap();
    let a = 1.0;
    let p = scalar(ord, a, 1.0, field(|_, _| 0.0), vec![], 1.0);
    let op = MildOperator::new(&p, Discretization::default_for(&ord)).unwrap();
    let z0 =
        op.trajectory_from_weighted(|_, _| DVector::from_element(1, 1.0 / gamma_fn(ord.lambda()).unwrap())).unwrap();
    let enc = iterate_extremal(&op, &constant(&op, 0.0), &z0, 1e-10, 200).unwrap();
    for (k, j, t, w) in enc.lower.iter() {
        let want = t.powf(1.0 - ord.lambda()) * s_scalar(&ord, a, t);
        assert!((w[0] - want).abs() <= 1e-4 * want, "{k} {j} {t}");
    }
    assert!(enc.report.uniqueness_gap <= 1e-9);
}

#[test]
fn solution_as_both_seeds_converges_at_once() {
    let ord = FractionalOrder::caputo(0.5).unwrap();
    let p = scalar(ord, 1.0, 0.0, field(|_, _| 0.0), vec![constant_jump_at(0.5, 0.0)], 1.0);
    let op = MildOperator::new(&p, Discretization::new(32, 2.0).unwrap()).unwrap();
    let exact = op.apply(&constant(&op, 0.0)).unwrap();
    let enc = iterate_extremal(&op, &exact, &exact, 1e-8, 200).unwrap();
    assert_eq!(enc.report.iterations, 1);
    assert!(enc.report.uniqueness_gap <= 1e-8);
    assert_eq!(enc.report.chain_violation, 0.0);
}

#[test]
fn crossed_seeds_are_rejected() {
    let ord = FractionalOrder::caputo(0.5).unwrap();
    let p = scalar(ord, 1.0, 0.0, field(|_, _| 0.0), vec![], 1.0);
    let op = MildOperator::new(&p, Discretization::new(16, 2.0).unwrap()).unwrap();
    let low = op.trajectory_from_raw(|t| DVector::from_element(1, if t > 0.5 { 2.0 } else { 0.0 })).unwrap();
    let err = iterate_extremal(&op, &low, &constant(&op, 1.0), 1e-8, 10).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

fn logistic(c: f64, impulses: Vec<Impulse>, nodes: usize) -> MildOperator {
    let ord = FractionalOrder::caputo(0.6).unwrap();
    let p = scalar(ord, 0.0, c, field(|_, x| x * (1.0 - x)), impulses, 0.5);
    MildOperator::new(&p, Discretization::default_for(&ord).with_nodes(nodes)).unwrap()
}

fn quarter_jump() -> Impulse {
    Impulse { time: 0.3, jump: Arc::new(|x: &DVector<f64>| x / 4.0) }
}

#[test]
fn iteration_budget_exhaustion_carries_report() {
    let op = logistic(1.0, vec![quarter_jump()], 32);
    match iterate_extremal(&op, &constant(&op, 0.0), &constant(&op, 1.0), 1e-12, 2) {
        Err(Error::NotConverged { iterations, report }) => {
            assert_eq!(iterations, 2);
            assert_eq!(report.lower_steps.len(), 2);
            assert!(!report.converged);
        }
        other => panic!("expected non-convergence, got {other:?}"),
    }
}

#[test]
fn logistic_enclosure_is_ordered_and_unique() {
    let op = logistic(1.0, vec![quarter_jump()], 96);
    let tol = 1e-8;
    let enc = iterate_extremal(&op, &constant(&op, 0.0), &constant(&op, 1.0), tol, 200).unwrap();
    let r = &enc.report;
    assert!(r.chain_violation <= 10.0 * tol);
    assert!(r.fixed_point_residual_lower <= 10.0 * tol);
    assert!(r.fixed_point_residual_upper <= 10.0 * tol);
    assert!(r.ordering_warnings.is_empty());
    let cert = uniqueness_certificate(&op, &enc.lower, &enc.upper, 1.0, tol).unwrap();
    assert!(cert.unique_within_tolerance && cert.gronwall_consistent);
}

#[test]
fn shift_does_not_change_the_solution() {
    let tol = 1e-8;
    let solve = |c: f64| {
        let ord = FractionalOrder::caputo(0.6).unwrap();
        let p = scalar(ord, 0.0, c, field(|_, x| x * (1.0 - x)), vec![], 0.5);
        let op = MildOperator::new(&p, Discretization::new(1024, 2.0).unwrap()).unwrap();
        iterate_extremal(&op, &constant(&op, 0.0), &constant(&op, 1.0), tol, 200).unwrap()
    };
    let one = solve(1.0);
    let two = solve(2.0);
    assert!(one.lower.pc_distance(&two.lower).unwrap() <= 10.0 * tol);
    assert!(one.upper.pc_distance(&two.upper).unwrap() <= 10.0 * tol);
}

#[test]
fn identical_extremals_certify_trivially() {
    let op = logistic(1.0, vec![], 32);
    let x = constant(&op, 0.5);
    let cert = uniqueness_certificate(&op, &x, &x, 1.0, 1e-8).unwrap();
    assert_eq!(cert.gap, 0.0);
    assert!(cert.unique_within_tolerance);
}

#[test]
fn non_lipschitz_growth_keeps_extremals_apart() {
    // g = sqrt(x) from zero data: zero is the minimal solution, the maximal
    // one is c t^{2 mu}.
    let ord = FractionalOrder::caputo(0.7).unwrap();
    let p = scalar(ord, 0.0, 0.0, field(|_, x| x.max(0.0).sqrt()), vec![], 0.0);
    let op = MildOperator::new(&p, Discretization::default_for(&ord).with_nodes(128)).unwrap();
    let enc = iterate_extremal(&op, &constant(&op, 0.0), &constant(&op, 4.0), 1e-6, 200).unwrap();
    let c = (gamma_fn(1.7).unwrap() / gamma_fn(2.4).unwrap()).powi(2);
    assert!(enc.lower.pc_norm() == 0.0);
    assert!((enc.report.uniqueness_gap - c).abs() < 1e-2 * c, "{}", enc.report.uniqueness_gap);
    let cert = uniqueness_certificate(&op, &enc.lower, &enc.upper, 1.0, 1e-6).unwrap();
    assert!(!cert.unique_within_tolerance);
}

#[test]
fn exact_solution_passes_both_sides() {
    let ord = FractionalOrder::new(0.5, 0.5).unwrap();
    let p = scalar(ord, 1.0, 0.0, field(|_, _| 0.0), vec![constant_jump_at(0.6, 0.3)], 1.0);
    let op = MildOperator::new(&p, Discretization::new(64, 2.0).unwrap()).unwrap();
    let exact = op.trajectory_from_raw(|t| {
        let mut v = s_scalar(&ord, 1.0, t);
        if t > 0.6 {
            v += 0.3 * s_scalar(&ord, 1.0, t - 0.6);
        }
        DVector::from_element(1, v)
    });
    // Raw samples at the impulse time belong to the left interval.
    let exact = exact.unwrap();
    for side in [Side::Lower, Side::Upper] {
        let rep = verify_lower_upper(&op, &exact, side, 1e-9).unwrap();
        assert!(rep.passes, "{side:?}: {}", rep.mild_margin);
        assert!(rep.mild_margin.abs() < 1e-9);
        assert!(rep.initial_margin.abs() < 1e-3);
        assert!(rep.impulse_margins[0].abs() < 1e-2);
    }
}

#[test]
fn dropping_the_decay_gives_an_upper_solution() {
    let ord = FractionalOrder::new(0.6, 0.4).unwrap();
    let x0 = 1.5;
    let p = scalar(ord, 2.0, 0.0, field(|_, _| 0.0), vec![], x0);
    let op = MildOperator::new(&p, Discretization::new(64, 3.0).unwrap()).unwrap();
    let g = gamma_fn(ord.lambda()).unwrap();
    let z0 = op.trajectory_from_weighted(|_, _| DVector::from_element(1, x0 / g)).unwrap();
    let rep = verify_lower_upper(&op, &z0, Side::Upper, 1e-9).unwrap();
    assert!(rep.passes);
    assert!(rep.mild_margin > 0.0);
    assert!(rep.initial_margin.abs() < 1e-12);
    let iv = &rep.intervals[0];
    assert!(iv.derivative_satisfied_nodes > iv.derivative_violated_nodes);
    assert!(!verify_lower_upper(&op, &z0, Side::Lower, 1e-9).unwrap().passes);
}

#[test]
fn zero_is_a_lower_solution_for_nonnegative_forcing() {
    let ord = FractionalOrder::new(0.7, 0.2).unwrap();
    let p = scalar(ord, 0.5, 0.3, field(|t, x| 1.0 + t + x * x), vec![constant_jump_at(0.5, 0.1)], 1.0);
    let op = MildOperator::new(&p, Discretization::new(48, 2.0).unwrap()).unwrap();
    let rep = verify_lower_upper(&op, &constant(&op, 0.0), Side::Lower, 1e-9).unwrap();
    assert!(rep.passes && rep.mild_margin > 0.0);
}

fn conditions_for(
    g: VectorField,
    jump: Impulse,
    lo: f64,
    hi: f64,
    c: f64,
    c_star: f64,
) -> hilfer_core::monotone::ConditionReport {
    let ord = FractionalOrder::caputo(0.5).unwrap();
    let p = scalar(ord, 0.0, c, g, vec![jump], 1.0);
    let op = MildOperator::new(&p, Discretization::new(16, 2.0).unwrap()).unwrap();
    check_conditions(&p, &constant(&op, lo), &constant(&op, hi), c, c_star, 2000, 42).unwrap()
}

#[test]
fn linear_decay_conditions() {
    let k = 1.5;
    let half = || Impulse { time: 0.5, jump: Arc::new(|x: &DVector<f64>| x / 2.0) };
    let ok = conditions_for(field(move |_, x| -k * x), half(), -1.0, 2.0, k, 0.0);
    assert!(ok.shifted_monotone_margin >= 0.0 && ok.lipschitz_margin >= 0.0 && ok.jump_monotone_violations == 0);
    assert!(ok.all_hold());
    assert_eq!(ok.lipschitz_constant, 2.0 * k);
    let bad = conditions_for(field(move |_, x| -k * x), half(), -1.0, 2.0, k - 0.1, 0.0);
    assert!(bad.shifted_monotone_margin < 0.0);
}

#[test]
fn decreasing_jump_is_flagged() {
    let flip = Impulse { time: 0.5, jump: Arc::new(|x: &DVector<f64>| -x) };
    let rep = conditions_for(field(|_, _| 0.0), flip, 0.0, 1.0, 0.0, 0.0);
    assert!(rep.jump_monotone_violations > 0);
    assert!(!rep.monotone_conditions_hold());
}

#[test]
fn sine_forcing_on_zero_to_pi() {
    let rep =
        conditions_for(field(|_, x| x.sin()), constant_jump(0.0).with_time(0.5), 0.0, std::f64::consts::PI, 1.0, 1.0);
    assert!(rep.shifted_monotone_margin >= 0.0 && rep.lipschitz_margin >= 0.0);
    // Dense sweep of the difference quotient as an independent check.
    let n = 400;
    let xs: Vec<f64> = (0..=n).map(|i| std::f64::consts::PI * i as f64 / n as f64).collect();
    for (i, &x1) in xs.iter().enumerate() {
        for &x2 in &xs[i + 1..] {
            let q = (x2.sin() - x1.sin()) / (x2 - x1);
            assert!((-1.0..=1.0).contains(&q));
        }
    }
}

#[test]
fn condition_sampling_is_deterministic() {
    let run = || conditions_for(field(|_, x| x * (1.0 - x)), quarter_jump().with_time(0.5), 0.0, 1.0, 1.0, 1.0);
    assert_eq!(run(), run());
}

trait WithTime {
    fn with_time(self, t: f64) -> Self;
}

impl WithTime for Impulse {
    fn with_time(mut self, t: f64) -> Self {
        self.time = t;
        self
    }
}

fn shared_logistic() -> &'static MildOperator {
    static OP: OnceLock<MildOperator> = OnceLock::new();
    OP.get_or_init(|| logistic(1.0, vec![quarter_jump()], 48))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn mild_operator_preserves_order(seed in any::<u64>(), amp in 0.0f64..0.5, freq in 0.5f64..8.0) {
        let op = shared_logistic();
        let phase = (seed % 1000) as f64 / 1000.0 * std::f64::consts::TAU;
        let low = op.trajectory_from_raw(|t| DVector::from_element(1, amp * (0.5 + 0.5 * (freq * t + phase).sin()))).unwrap();
        let high = op.trajectory_from_raw(|t| DVector::from_element(1, 1.0 - amp * (0.5 + 0.5 * (freq * t).cos()))).unwrap();
        prop_assume!(low.excess_over(&high).unwrap() == 0.0);
        let gl = op.apply(&low).unwrap();
        let gh = op.apply(&high).unwrap();
        prop_assert!(gl.excess_over(&gh).unwrap() <= 1e-12);
    }
}
