use hilfer_core::operators::{operator_bound_check, operator_norm, Backend, Generator, OperatorFamily};
use hilfer_core::specialfn::{gamma_fn, FractionalOrder};
use hilfer_core::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn family(mu: f64, nu: f64, a: DMatrix<f64>, c: f64, backend: Backend) -> OperatorFamily {
    OperatorFamily::new(FractionalOrder::new(mu, nu).unwrap(), Generator::new(a, c).unwrap(), backend, 2.0).unwrap()
}

fn scalar(mu: f64, nu: f64, a: f64, backend: Backend) -> OperatorFamily {
    family(mu, nu, DMatrix::from_element(1, 1, a), 0.0, backend)
}

// E_{1/2,1/2}(-a) = 1/sqrt(pi) - a exp(a^2) erfc(a)
#[allow(clippy::excessive_precision)]
const HALF_HALF: [(f64, f64); 4] = [
    (0.5, 0.256_344_411_451_293_35),
    (1.0, 0.136_606_007_391_949_28),
    (2.0, 0.053_398_230_926_744_80),
    (3.0, 0.027_186_130_003_586_436),
];

#[test]
fn zero_generator_gives_gamma_multiples() {
    for backend in [Backend::ClosedForm, Backend::DensityQuadrature] {
        let fam = family(0.6, 0.3, DMatrix::zeros(2, 2), 0.0, backend);
        let t = 0.7;
        let p = fam.p_operator(t).unwrap();
        let s = fam.s_operator(t).unwrap();
        let lam = fam.order().lambda();
        let pe = DMatrix::identity(2, 2) / gamma_fn(0.6).unwrap();
        let se = DMatrix::identity(2, 2) * (t.powf(lam - 1.0) / gamma_fn(lam).unwrap());
        assert!((p - pe).amax() < 1e-6);
        assert!((s - se).amax() < 1e-6);
    }
}

#[test]
fn scalar_p_matches_erfc_closed_form_and_density() {
    for &(a, expected) in &HALF_HALF {
        let closed = scalar(0.5, 0.0, a, Backend::ClosedForm).p_operator(1.0).unwrap()[(0, 0)];
        let dens = scalar(0.5, 0.0, a, Backend::DensityQuadrature).p_operator(1.0).unwrap()[(0, 0)];
        assert!((closed - expected).abs() < 1e-12, "a={a}: {closed}");
        assert!((dens - expected).abs() < 1e-6, "a={a}: {dens}");
    }
}

#[test]
fn near_one_order_approaches_exponential() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.2, 2.0]);
    let fam = family(0.999, 1.0, a.clone(), 0.5, Backend::ClosedForm);
    let x = &a + DMatrix::identity(2, 2) * 0.5;
    for &t in &[0.3, 1.0] {
        let e = (&x * -t).exp();
        assert!((fam.p_operator(t).unwrap() - &e).amax() < 1e-2);
        assert!((fam.s_operator(t).unwrap() - &e).amax() < 1e-2);
    }
}

/// `E_{mu,1}(-a t^mu)` obtained by integrating the series of
/// `s^{mu-1} E_{mu,mu}(-a s^mu)` term by term with `I^{1-mu}`.
fn caputo_oracle(mu: f64, a: f64, t: f64) -> f64 {
    let mut sum = 0.0;
    for k in 0..120 {
        let k = k as f64;
        let coef = (-a).powf(k) / gamma_fn(k * mu + mu).unwrap();
        // I^{1-mu} s^{k mu + mu - 1} = Gamma(k mu + mu)/Gamma(k mu + 1) t^{k mu}
        sum += coef * gamma_fn(k * mu + mu).unwrap() / gamma_fn(k * mu + 1.0).unwrap() * t.powf(k * mu);
    }
    sum
}

#[test]
fn caputo_s_operator_against_termwise_oracle() {
    for &(mu, a, t) in &[(0.5, 0.8, 1.0), (0.7, 1.5, 0.6), (0.3, 0.5, 1.2)] {
        let v = scalar(mu, 1.0, a, Backend::ClosedForm).s_operator(t).unwrap()[(0, 0)];
        let o = caputo_oracle(mu, a, t);
        assert!((v - o).abs() < 1e-10, "mu={mu}: {v} vs {o}");
    }
}

#[test]
fn rl_s_operator_is_scaled_p() {
    let a = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, 0.1, 1.0]);
    let fam = family(0.4, 0.0, a, 0.3, Backend::ClosedForm);
    for &t in &[0.1, 0.5, 1.7] {
        let s = fam.s_operator(t).unwrap();
        let p = fam.p_operator(t).unwrap() * t.powf(0.4 - 1.0);
        assert_eq!(s, p);
    }
}

#[test]
fn density_s_operator_agrees() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.0, 2.5]);
    for &nu in &[0.0, 0.5, 1.0] {
        let closed = family(0.6, nu, a.clone(), 0.0, Backend::ClosedForm).s_operator(0.8).unwrap();
        let dens = family(0.6, nu, a.clone(), 0.0, Backend::DensityQuadrature).s_operator(0.8).unwrap();
        assert!((closed - dens).amax() < 1e-5, "nu={nu}");
    }
}

#[test]
fn weighted_limit_at_start() {
    // deviation is about ||X|| t^mu / Gamma(lambda + mu)
    let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, 0.1, 0.4]);
    let fam = family(0.8, 0.4, a, 0.2, Backend::ClosedForm);
    let t = 1e-4;
    let lam = fam.order().lambda();
    let w = fam.s_operator(t).unwrap() * t.powf(1.0 - lam);
    let target = DMatrix::identity(2, 2) / gamma_fn(lam).unwrap();
    assert!((w - target).amax() < 1e-3);
}

#[test]
fn cross_check_reports_disagreement() {
    let fam = scalar(0.5, 1.0, 1.0, Backend::ClosedForm);
    assert!(fam.cross_check(1.0, 1e-5).is_ok());
    assert!(matches!(fam.cross_check(1.0, 0.0), Err(Error::BackendDisagreement { .. })));
}

#[test]
fn bound_check_equality_at_zero_generator() {
    let fam = family(0.5, 0.5, DMatrix::zeros(3, 3), 0.0, Backend::ClosedForm);
    let rep = operator_bound_check(&fam, &[0.1, 0.5, 1.0, 2.0], 8, 1).unwrap();
    assert!(rep.violations.is_empty());
    assert!((rep.max_ratio_s - 1.0).abs() < 1e-10);
    assert!((rep.max_ratio_p - 1.0).abs() < 1e-10);
}

#[test]
fn bound_check_positive_diagonal() {
    let a = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0, 4.0]));
    let fam = family(0.7, 0.2, a, 0.0, Backend::ClosedForm);
    let rep = operator_bound_check(&fam, &[0.05, 0.5, 1.0, 2.0], 16, 2).unwrap();
    assert!(rep.violations.is_empty());
    assert!(rep.max_ratio_s <= 1.0 && rep.max_ratio_p <= 1.0);
}

#[test]
fn coarse_grid_with_rotation_records_violation() {
    // exp(-A tau) rotates; its max-norm peaks at sqrt(2) between grid samples.
    let w = std::f64::consts::PI;
    let a = DMatrix::from_row_slice(2, 2, &[0.0, -w, w, 0.0]);
    let fam = family(0.9, 1.0, a, 0.0, Backend::ClosedForm).with_bound_constant(1.0).unwrap();
    let rep = operator_bound_check(&fam, &[0.25, 0.5, 1.0], 4, 3).unwrap();
    assert!(!rep.violations.is_empty());
    assert!(rep.violations.iter().all(|v| v.ratio > 1.0));
}

fn random_diagonalizable(eig: &[f64], basis: &[f64]) -> DMatrix<f64> {
    let n = eig.len();
    let v = DMatrix::from_row_slice(n, n, basis) + DMatrix::identity(n, n) * 2.0;
    let inv = v.clone().try_inverse().unwrap();
    &v * DMatrix::from_diagonal(&DVector::from_row_slice(eig)) * inv
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn backends_agree_on_diagonalizable_generators(
        eig in proptest::collection::vec(0.0..5.0f64, 3),
        basis in proptest::collection::vec(-0.5..0.5f64, 9),
        t in 0.1..2.0f64,
        mu_idx in 0usize..2,
    ) {
        let mu = [0.4, 0.6][mu_idx];
        let a = random_diagonalizable(&eig, &basis);
        let fam = family(mu, 1.0, a, 0.0, Backend::ClosedForm);
        let closed = fam.p_operator(t).unwrap();
        let dens = fam.clone().with_backend(Backend::DensityQuadrature).p_operator(t).unwrap();
        prop_assert!((closed - dens).amax() < 1e-5);
    }

    #[test]
    fn positivity_for_z_matrices(
        diag in proptest::collection::vec(0.0..4.0f64, 3),
        off in proptest::collection::vec(0.0..1.0f64, 6),
        t in 0.05..2.0f64,
        nu in 0.0..1.0f64,
    ) {
        let mut a = DMatrix::from_diagonal(&DVector::from_row_slice(&diag));
        let mut k = 0;
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    a[(i, j)] = -off[k];
                    k += 1;
                }
            }
        }
        let fam = family(0.6, nu, a, 0.0, Backend::ClosedForm);
        let v = DVector::from_vec(vec![1.0, 0.3, 0.0]);
        let p = fam.p_operator(t).unwrap() * &v;
        let s = fam.s_operator(t).unwrap() * &v;
        let scale = operator_norm(&fam.p_operator(t).unwrap()).max(1.0);
        prop_assert!(p.iter().all(|x| *x >= -1e-10 * scale));
        prop_assert!(s.iter().all(|x| *x >= -1e-10 * scale * t.powf(fam.order().lambda() - 1.0)));
    }
}
