//! Solution-operator families for a matrix generator.
//!
//! With `X = A + C I` the families are
//! `P(t) = E_{mu,mu}(-X t^mu)` and `S(t) = t^{lambda-1} E_{mu,lambda}(-X t^mu)`,
//! the latter being `I^{nu(1-mu)}` applied to `s^{mu-1} P(s)`; at `nu = 0` it is
//! `t^{mu-1} P(t)` and at `nu = 1` it is `E_{mu,1}(-X t^mu)`. The closed-form
//! backend uses an eigendecomposition of `X` computed once per family. The
//! density backend integrates `mu theta xi(theta) exp(-X t^mu theta)` directly
//! and exists to cross-check the first.

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gauss::GaussLegendre;
use crate::specialfn::{
    density_tail_bound, gamma_unchecked, integrate_many_against_density, mittag_leffler_complex, FractionalOrder,
    SeriesControl, ML_RELIABLE_RADIUS,
};

type C64 = Complex<f64>;

/// Induced max-norm (largest absolute row sum).
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// `A` together with the nonnegative shift `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    a: DMatrix<f64>,
    shift: f64,
}

impl Generator {
    pub fn new(a: DMatrix<f64>, shift: f64) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Domain(format!("generator must be square, got {}x{}", a.nrows(), a.ncols())));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("generator entries must be finite".into()));
        }
        if !(shift >= 0.0) || !shift.is_finite() {
            return Err(Error::Domain(format!("shift constant must be >= 0, got {shift}")));
        }
        Ok(Self { a, shift })
    }

    pub fn scalar(a: f64, shift: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, a), shift)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `A + C I`.
    pub fn shifted(&self) -> DMatrix<f64> {
        &self.a + DMatrix::identity(self.dim(), self.dim()) * self.shift
    }

    /// `exp(-(A + C I) t)`.
    pub fn semigroup(&self, t: f64) -> Result<DMatrix<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("semigroup time must be >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(DMatrix::identity(self.dim(), self.dim()));
        }
        Ok((self.shifted() * -t).exp())
    }
}

/// `e^{-Ct} e^{-At} v`.
pub fn semigroup_apply(gen: &Generator, t: f64, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != gen.dim() {
        return Err(Error::DimensionMismatch { expected: gen.dim(), got: v.len() });
    }
    Ok(gen.semigroup(t)? * v)
}

/// `sup ||exp(-X tau)||` over `samples` uniform points of `[0, horizon]`.
pub fn estimate_bound_constant(gen: &Generator, horizon: f64, samples: usize) -> Result<f64> {
    if !(horizon > 0.0) || samples < 2 {
        return Err(Error::Domain("bound-constant grid needs a positive horizon and >= 2 samples".into()));
    }
    let mut sup: f64 = 1.0;
    for k in 0..samples {
        let tau = horizon * k as f64 / (samples - 1) as f64;
        sup = sup.max(operator_norm(&gen.semigroup(tau)?));
    }
    Ok(sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    ClosedForm,
    DensityQuadrature,
}

#[derive(Debug, Clone)]
enum Spectrum {
    Diagonalizable { eig: Vec<C64>, vecs: DMatrix<C64>, inv: DMatrix<C64> },
    Defective,
}

const MAX_EIGVEC_CONDITION: f64 = 1e6;

fn decompose(x: &DMatrix<f64>) -> Spectrum {
    let n = x.nrows();
    let eig: Vec<C64> = x.complex_eigenvalues().iter().copied().collect();
    let scale = operator_norm(x).max(1.0);
    let xc = x.map(|v| C64::new(v, 0.0));
    let mut vecs = DMatrix::<C64>::zeros(n, n);
    let mut assigned = vec![false; n];
    let mut col = 0;
    for i in 0..n {
        if assigned[i] {
            continue;
        }
        let cluster: Vec<usize> =
            (i..n).filter(|&j| !assigned[j] && (eig[j] - eig[i]).norm() <= 1e-7 * scale).collect();
        let shifted = &xc - DMatrix::<C64>::identity(n, n) * eig[i];
        let svd = shifted.svd(false, true);
        let Some(v_t) = svd.v_t else { return Spectrum::Defective };
        for (k, &j) in cluster.iter().enumerate() {
            assigned[j] = true;
            let row = n - cluster.len() + k;
            vecs.set_column(col, &v_t.row(row).adjoint());
            col += 1;
        }
    }
    let sv = vecs.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > MAX_EIGVEC_CONDITION {
        return Spectrum::Defective;
    }
    let Some(inv) = vecs.clone().try_inverse() else { return Spectrum::Defective };
    // Order eigenvalues to match columns.
    let mut ordered = Vec::with_capacity(n);
    let mut used = vec![false; n];
    for i in 0..n {
        if used[i] {
            continue;
        }
        for j in i..n {
            if !used[j] && (eig[j] - eig[i]).norm() <= 1e-7 * scale {
                used[j] = true;
                ordered.push(eig[j]);
            }
        }
    }
    let lam = DMatrix::from_diagonal(&DVector::from_vec(ordered.clone()));
    let resid = (&xc * &vecs - &vecs * lam).iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    if resid > 1e-9 * scale {
        return Spectrum::Defective;
    }
    Spectrum::Diagonalizable { eig: ordered, vecs, inv }
}

/// `sum_k M^k / Gamma(alpha k + beta)` with the same cancellation guard as the
/// scalar series.
fn matrix_ml_series(alpha: f64, beta: f64, m: &DMatrix<f64>, ctl: &SeriesControl) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    let norm = operator_norm(m);
    if norm > ML_RELIABLE_RADIUS {
        return Err(Error::OutOfRange { value: norm, limit: format!("matrix series norm <= {ML_RELIABLE_RADIUS}") });
    }
    let mut power = DMatrix::<f64>::identity(n, n);
    let mut sum = DMatrix::<f64>::zeros(n, n);
    let mut abs_sum = 0.0;
    let mut small_run = 0;
    for k in 0..ctl.max_terms() {
        let g = gamma_unchecked(alpha * k as f64 + beta);
        let term = &power / g;
        let tn = operator_norm(&term);
        sum += &term;
        abs_sum += norm.powi(k as i32) / g.abs();
        if tn <= ctl.rel_tol() * operator_norm(&sum).max(f64::MIN_POSITIVE) {
            small_run += 1;
            if small_run == 2 {
                let loss = f64::EPSILON * abs_sum / operator_norm(&sum).max(f64::MIN_POSITIVE);
                if loss > 1e-8 {
                    return Err(Error::PrecisionLoss { what: "matrix Mittag-Leffler series", estimate: loss });
                }
                return Ok(sum);
            }
        } else {
            small_run = 0;
        }
        power = &power * m;
    }
    Err(Error::NonConvergence { what: "matrix Mittag-Leffler series", terms: ctl.max_terms() })
}

/// Operator families for one order and generator.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    ord: FractionalOrder,
    gen: Generator,
    backend: Backend,
    bound_constant: f64,
    ctl: SeriesControl,
    spectrum: Spectrum,
}

/// Samples used for the bound-constant grid.
pub const BOUND_GRID_SAMPLES: usize = 1024;

impl OperatorFamily {
    /// Estimates the bound constant on `[0, horizon]`.
    pub fn new(ord: FractionalOrder, gen: Generator, backend: Backend, horizon: f64) -> Result<Self> {
        let bound_constant = estimate_bound_constant(&gen, horizon, BOUND_GRID_SAMPLES)?;
        let spectrum = decompose(&gen.shifted());
        Ok(Self { ord, gen, backend, bound_constant, ctl: SeriesControl::default(), spectrum })
    }

    pub fn with_bound_constant(mut self, m: f64) -> Result<Self> {
        if !(m >= 1.0) || !m.is_finite() {
            return Err(Error::Domain(format!("bound constant must be >= 1, got {m}")));
        }
        self.bound_constant = m;
        Ok(self)
    }

    pub fn with_backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn with_series_control(mut self, ctl: SeriesControl) -> Self {
        self.ctl = ctl;
        self
    }

    pub fn order(&self) -> &FractionalOrder {
        &self.ord
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn backend(&self) -> Backend {
        self.backend
    }

    pub fn bound_constant(&self) -> f64 {
        self.bound_constant
    }

    pub fn dim(&self) -> usize {
        self.gen.dim()
    }

    pub fn is_diagonalizable(&self) -> bool {
        matches!(self.spectrum, Spectrum::Diagonalizable { .. })
    }

    /// `E_{mu,beta}(-X r)` in closed form.
    pub fn mittag_leffler_at(&self, beta: f64, r: f64) -> Result<DMatrix<f64>> {
        let mu = self.ord.mu();
        match &self.spectrum {
            Spectrum::Diagonalizable { eig, vecs, inv } => {
                let d: Vec<C64> =
                    eig.iter().map(|&l| mittag_leffler_complex(mu, beta, -l * r, &self.ctl)).collect::<Result<_>>()?;
                let m = vecs * DMatrix::from_diagonal(&DVector::from_vec(d)) * inv;
                Ok(m.map(|z| z.re))
            }
            Spectrum::Defective => matrix_ml_series(mu, beta, &(self.gen.shifted() * -r), &self.ctl),
        }
    }

    fn check_time(t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("operator time must be > 0, got {t}")));
        }
        Ok(())
    }

    pub fn p_operator(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        match self.backend {
            Backend::ClosedForm => self.mittag_leffler_at(self.ord.mu(), t.powf(self.ord.mu())),
            Backend::DensityQuadrature => self.p_density(t),
        }
    }

    pub fn s_operator(&self, t: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let lam = self.ord.lambda();
        match self.backend {
            Backend::ClosedForm => Ok(self.mittag_leffler_at(lam, t.powf(self.ord.mu()))? * t.powf(lam - 1.0)),
            Backend::DensityQuadrature => self.s_density(t),
        }
    }

    /// Closed-form and density `P(t)`; fails when they differ by more than `tol`
    /// in any entry.
    pub fn cross_check(&self, t: f64, tol: f64) -> Result<DMatrix<f64>> {
        Self::check_time(t)?;
        let closed = self.mittag_leffler_at(self.ord.mu(), t.powf(self.ord.mu()))?;
        let density = self.p_density(t)?;
        let diff = (&closed - density).amax();
        if diff > tol {
            return Err(Error::BackendDisagreement { diff, tol });
        }
        Ok(closed)
    }

    /// `int xi(theta) sum_k c_k mu theta exp(-X r_k theta) d theta`.
    fn density_sum(&self, terms: &[(f64, f64)]) -> Result<DMatrix<f64>> {
        let n = self.dim();
        let mu = self.ord.mu();
        let x = self.gen.shifted();
        let (flat, theta_max) = integrate_many_against_density(mu, &self.ctl, n * n, |theta, out| {
            out.fill(0.0);
            for &(c, r) in terms {
                let e = (&x * (-r * theta)).exp();
                for (o, v) in out.iter_mut().zip(e.iter()) {
                    *o += c * mu * theta * v;
                }
            }
        })?;
        let weight: f64 = terms.iter().map(|(c, _)| c.abs()).sum();
        let tail = mu * self.bound_constant * weight * density_tail_bound(mu, 1, theta_max);
        if tail > 1e-6 {
            return Err(Error::Quadrature(format!(
                "density tail beyond theta = {theta_max:.2} bounded only by {tail:.2e}"
            )));
        }
        Ok(DMatrix::from_column_slice(n, n, &flat))
    }

    fn p_density(&self, t: f64) -> Result<DMatrix<f64>> {
        self.density_sum(&[(1.0, t.powf(self.ord.mu()))])
    }

    /// `S(t) = t^{lambda-1}/Gamma(g) int_0^1 (1-u)^{g-1} u^{mu-1} P(tu) du`,
    /// `g = nu(1-mu)`, with endpoint singularities removed by substitution.
    fn s_density(&self, t: f64) -> Result<DMatrix<f64>> {
        let mu = self.ord.mu();
        let lam = self.ord.lambda();
        let g = self.ord.outer_order();
        if g == 0.0 {
            return Ok(self.p_density(t)? * t.powf(mu - 1.0));
        }
        let rule = GaussLegendre::new(20);
        let tm = t.powf(mu);
        let mut terms = Vec::with_capacity(40);
        // u = v^{1/mu} on [0, 1/2]
        for (v, w) in rule.mapped(0.0, 0.5_f64.powf(mu)) {
            let u = v.powf(1.0 / mu);
            terms.push((w * (1.0 - u).powf(g - 1.0) / mu, tm * v));
        }
        // 1 - u = w^{1/g} on [1/2, 1]
        for (s, w) in rule.mapped(0.0, 0.5_f64.powf(g)) {
            let u = 1.0 - s.powf(1.0 / g);
            terms.push((w * u.powf(mu - 1.0) / g, tm * u.powf(mu)));
        }
        Ok(self.density_sum(&terms)? * (t.powf(lam - 1.0) / gamma_unchecked(g)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FamilyKind {
    S,
    P,
}

/// A sampled direction where an operator exceeded its norm bound.
#[derive(Debug, Clone)]
pub struct BoundViolation {
    pub t: f64,
    pub family: FamilyKind,
    pub direction: DVector<f64>,
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub bound_constant: f64,
    pub checks: usize,
    pub max_ratio_s: f64,
    pub max_ratio_p: f64,
    pub violations: Vec<BoundViolation>,
}

/// Unit directions: coordinate axes, the all-ones vector, the sign pattern of
/// every row (which attains the induced max-norm) and `random` seeded draws.
fn probe_directions(m: &[&DMatrix<f64>], n: usize, random: usize, rng: &mut ChaCha8Rng) -> Vec<DVector<f64>> {
    let mut dirs: Vec<DVector<f64>> = (0..n)
        .map(|i| {
            let mut e = DVector::zeros(n);
            e[i] = 1.0;
            e
        })
        .collect();
    dirs.push(DVector::from_element(n, 1.0));
    for mat in m {
        for r in mat.row_iter() {
            dirs.push(DVector::from_iterator(n, r.iter().map(|x| if *x < 0.0 { -1.0 } else { 1.0 })));
        }
    }
    for _ in 0..random {
        let v = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0));
        let s = v.amax();
        if s > 0.0 {
            dirs.push(v / s);
        }
    }
    dirs
}

/// Checks `||S(t)v|| <= M t^{lambda-1}/Gamma(lambda) ||v||` and
/// `||P(t)v|| <= M/Gamma(mu) ||v||` on probe directions.
pub fn operator_bound_check(
    fam: &OperatorFamily,
    times: &[f64],
    random_probes: usize,
    seed: u64,
) -> Result<BoundReport> {
    let mu = fam.order().mu();
    let lam = fam.order().lambda();
    let m = fam.bound_constant();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report =
        BoundReport { bound_constant: m, checks: 0, max_ratio_s: 0.0, max_ratio_p: 0.0, violations: Vec::new() };
    for &t in times {
        let s = fam.s_operator(t)?;
        let p = fam.p_operator(t)?;
        let s_bound = m * t.powf(lam - 1.0) / gamma_unchecked(lam);
        let p_bound = m / gamma_unchecked(mu);
        for v in probe_directions(&[&s, &p], fam.dim(), random_probes, &mut rng) {
            let vn = v.amax();
            for (family, op, bound) in [(FamilyKind::S, &s, s_bound), (FamilyKind::P, &p, p_bound)] {
                let ratio = (op * &v).amax() / (bound * vn);
                report.checks += 1;
                match family {
                    FamilyKind::S => report.max_ratio_s = report.max_ratio_s.max(ratio),
                    FamilyKind::P => report.max_ratio_p = report.max_ratio_p.max(ratio),
                }
                if ratio > 1.0 + 1e-12 {
                    report.violations.push(BoundViolation { t, family, direction: v.clone(), ratio });
                }
            }
        }
    }
    Ok(report)
}
