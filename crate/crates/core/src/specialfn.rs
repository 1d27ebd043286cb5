//! Scalar special functions: gamma, two-parameter Mittag-Leffler, the
//! one-sided stable series and the Wright-type probability density that
//! subordinates the solution operators.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::gauss::GaussLegendre;

type C64 = Complex<f64>;

/// Truncation control for the infinite series in this module.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesControl {
    rel_tol: f64,
    max_terms: usize,
}

impl SeriesControl {
    pub fn new(rel_tol: f64, max_terms: usize) -> Result<Self> {
        if !(rel_tol > 0.0) || !rel_tol.is_finite() {
            return Err(Error::Domain(format!("rel_tol must be positive, got {rel_tol}")));
        }
        if max_terms == 0 {
            return Err(Error::Domain("max_terms must be at least 1".into()));
        }
        Ok(Self { rel_tol, max_terms })
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self { rel_tol: 1e-12, max_terms: 400 }
    }
}

/// Order `mu` and type `nu` of a Hilfer derivative together with the
/// derived type parameter `lambda = mu + nu - mu * nu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FractionalOrder {
    mu: f64,
    nu: f64,
    lambda: f64,
}

impl FractionalOrder {
    pub fn new(mu: f64, nu: f64) -> Result<Self> {
        if !(mu > 0.0 && mu < 1.0) {
            return Err(Error::Domain(format!("order mu must lie in (0,1), got {mu}")));
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(Error::Domain(format!("type nu must lie in [0,1], got {nu}")));
        }
        let lambda = mu + nu - mu * nu;
        Ok(Self { mu, nu, lambda })
    }

    /// Caputo case, `nu = 1`.
    pub fn caputo(mu: f64) -> Result<Self> {
        Self::new(mu, 1.0)
    }

    /// Riemann-Liouville case, `nu = 0`.
    pub fn riemann_liouville(mu: f64) -> Result<Self> {
        Self::new(mu, 0.0)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Order of the outer integral `I^{nu(1-mu)}` in the Hilfer derivative.
    pub fn outer_order(&self) -> f64 {
        self.nu * (1.0 - self.mu)
    }

    /// Order of the inner integral `I^{(1-nu)(1-mu)}`.
    pub fn inner_order(&self) -> f64 {
        (1.0 - self.nu) * (1.0 - self.mu)
    }
}

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(x: f64) -> f64 {
    // x is the shifted argument (Gamma(x + 1)).
    let mut a = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    a
}

/// Gamma function for positive arguments.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::Domain(format!("gamma requires x > 0, got {x}")));
    }
    if x > 171.6 {
        return Err(Error::Overflow(format!("gamma({x}) exceeds f64 range")));
    }
    Ok(gamma_unchecked(x))
}

pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Reflection keeps the Lanczos sum in its accurate region.
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    if x == x.floor() && x <= 23.0 {
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    let half = t.powf(0.5 * (z + 0.5));
    (2.0 * PI).sqrt() * half * (half * (-t).exp()) * lanczos_sum(z)
}

/// Natural logarithm of the gamma function for positive arguments.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    if x < 30.0 {
        return gamma_unchecked(x).ln();
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

fn inv_gamma(x: f64) -> f64 {
    if x <= 170.0 {
        1.0 / gamma_unchecked(x)
    } else {
        (-ln_gamma(x)).exp()
    }
}

/// Largest |z| accepted by the Mittag-Leffler evaluators.
pub const ML_RELIABLE_RADIUS: f64 = 50.0;

/// Relative rounding error above which a cancelling series is refused.
const MAX_CANCELLATION_LOSS: f64 = 1e-8;

/// Two-parameter Mittag-Leffler function `E_{alpha,beta}(z)` for real `z`.
///
/// For `z >= 0`, for `|z| <= 1` and whenever `alpha >= 1` the power series is
/// summed directly. For `z < -1` and `alpha < 1` the series cancels
/// catastrophically, so the function is evaluated from its branch-cut
/// integral representation instead. Arguments with `|z| > 50` are refused.
pub fn mittag_leffler(alpha: f64, beta: f64, z: f64, ctl: &SeriesControl) -> Result<f64> {
    check_ml_params(alpha, beta)?;
    if !z.is_finite() {
        return Err(Error::Domain(format!("non-finite argument {z}")));
    }
    Ok(mittag_leffler_complex(alpha, beta, C64::new(z, 0.0), ctl)?.re)
}

fn check_ml_params(alpha: f64, beta: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 2.0) {
        return Err(Error::Domain(format!("alpha must lie in (0,2], got {alpha}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Domain(format!("beta must be positive, got {beta}")));
    }
    Ok(())
}

/// Complex-argument variant used for matrix functions with complex spectra.
pub fn mittag_leffler_complex(alpha: f64, beta: f64, z: C64, ctl: &SeriesControl) -> Result<C64> {
    check_ml_params(alpha, beta)?;
    let r = z.norm();
    if r > ML_RELIABLE_RADIUS {
        return Err(Error::OutOfRange { value: r, limit: format!("|z| <= {ML_RELIABLE_RADIUS}") });
    }
    if r == 0.0 {
        return Ok(C64::new(inv_gamma(beta), 0.0));
    }
    if alpha < 1.0 && r > 1.0 {
        if let Some(strip) = cut_strip_width(alpha, -z) {
            return ml_cut_integral(alpha, beta, z, strip);
        }
    }
    let (sum, abs_sum) = ml_series(alpha, beta, z, ctl)?;
    let loss = abs_sum * f64::EPSILON * 4.0 / sum.norm().max(f64::MIN_POSITIVE);
    if loss > MAX_CANCELLATION_LOSS {
        return Err(Error::PrecisionLoss { what: "Mittag-Leffler series", estimate: loss });
    }
    Ok(sum)
}

/// Power series with the two-in-a-row stopping rule. Returns the sum and the
/// sum of term magnitudes (for cancellation estimates).
pub(crate) fn ml_series(alpha: f64, beta: f64, z: C64, ctl: &SeriesControl) -> Result<(C64, f64)> {
    let mut sum = C64::new(0.0, 0.0);
    let mut abs_sum = 0.0;
    let mut zpow = C64::new(1.0, 0.0);
    let (ln_r, arg) = (z.norm().ln(), z.arg());
    let mut small = 0;
    for k in 0..ctl.max_terms {
        let g = alpha * k as f64 + beta;
        let term = if g <= 170.0 && zpow.norm() < 1e290 {
            zpow * inv_gamma(g)
        } else {
            let kf = k as f64;
            C64::from_polar((kf * ln_r - ln_gamma(g)).exp(), kf * arg)
        };
        sum += term;
        abs_sum += term.norm();
        if !sum.re.is_finite() || !sum.im.is_finite() {
            return Err(Error::Overflow("Mittag-Leffler series".into()));
        }
        if term.norm() < ctl.rel_tol * sum.norm() {
            small += 1;
            if small >= 2 {
                return Ok((sum, abs_sum));
            }
        } else {
            small = 0;
        }
        zpow *= z;
    }
    Err(Error::NonConvergence { what: "Mittag-Leffler series", terms: ctl.max_terms })
}

/// Half-width of the analyticity strip of the cut integrand in the log
/// variable, or `None` when `x` is too close to the rays where the integral
/// representation breaks down.
fn cut_strip_width(alpha: f64, x: C64) -> Option<f64> {
    let margin = PI * (1.0 - alpha) - x.arg().abs();
    let d = margin.min(0.5 * PI * alpha) * 0.9;
    (d >= 0.02).then_some(d)
}

/// `E_{alpha,beta}(-x)` from the collapsed Bromwich integral
///
/// `(1/(alpha pi)) int e^{-u^{1/alpha}} u^{(1+alpha-beta)/alpha}
///    [u sin(beta pi) - x sin((alpha-beta) pi)] / (u^2 + 2 x u cos(alpha pi) + x^2) dw`
///
/// with `u = e^w`, summed by the trapezoidal rule (exponentially convergent
/// for integrands analytic in a strip).
fn ml_cut_integral(alpha: f64, beta: f64, z: C64, strip: f64) -> Result<C64> {
    if beta >= 1.0 + alpha {
        // E_{a,b}(z) = (E_{a,b-a}(z) - 1/Gamma(b-a)) / z lowers beta into range.
        let lower = ml_cut_integral(alpha, beta - alpha, z, strip)?;
        return Ok((lower - inv_gamma(beta - alpha)) / z);
    }
    let x = -z;
    let p = (1.0 + alpha - beta) / alpha;
    let h = 2.0 * PI * strip / 36.0;
    let w_hi = alpha * 60f64.ln();
    let w_lo = x.norm().ln().min(0.0) - 40.0 / p - 2.0;
    let n = ((w_hi - w_lo) / h).ceil() as usize + 1;
    if n > 400_000 {
        return Err(Error::Quadrature(format!("Mittag-Leffler cut integral needs {n} nodes")));
    }
    let (sb, sab, ca) = ((beta * PI).sin(), ((alpha - beta) * PI).sin(), (alpha * PI).cos());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        let w = w_lo + i as f64 * h;
        let u = w.exp();
        let damp = (-(w / alpha).exp()).exp();
        if damp == 0.0 {
            break;
        }
        let num = C64::new(u * sb, 0.0) - x * sab;
        let den = C64::new(u * u, 0.0) + x * (2.0 * u * ca) + x * x;
        acc += num / den * ((p * w).exp() * damp);
    }
    Ok(acc * (h / (alpha * PI)))
}

/// Error estimate paired with a series value.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Estimate {
    pub value: f64,
    pub abs_err: f64,
}

/// Largest rounding error (measured on the density scale) tolerated in
/// `wright_series` and `xi_density`.
pub const DENSITY_ABS_TOL: f64 = 1e-9;

/// One-sided stable series
/// `(1/pi) sum_{n>=1} (-1)^{n-1} theta^{-n mu - 1} Gamma(n mu + 1)/n! sin(n pi mu)`.
///
/// The series converges for every `theta > 0` but cancels for small `theta`;
/// values whose rounding error would exceed [`DENSITY_ABS_TOL`] on the scale
/// of the associated density are refused. The reliable region starts around
/// `theta = 0.05` for moderate `mu`.
pub fn wright_series(mu: f64, theta: f64, ctl: &SeriesControl) -> Result<f64> {
    check_mu(mu)?;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let est = wright_series_raw(mu, theta, ctl)?;
    let density_scale = theta.powf(1.0 + mu) / mu;
    if est.abs_err * density_scale > DENSITY_ABS_TOL {
        return Err(Error::PrecisionLoss {
            what: "stable series",
            estimate: est.abs_err / est.value.abs().max(f64::MIN_POSITIVE),
        });
    }
    Ok(est.value)
}

fn check_mu(mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Domain(format!("mu must lie in (0,1), got {mu}")));
    }
    Ok(())
}

pub(crate) fn wright_series_raw(mu: f64, theta: f64, ctl: &SeriesControl) -> Result<Estimate> {
    let ln_t = theta.ln();
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    let mut small = 0;
    for n in 1..=ctl.max_terms {
        let nf = n as f64;
        let envelope = (-(nf * mu + 1.0) * ln_t + ln_gamma(nf * mu + 1.0) - ln_gamma(nf + 1.0)).exp() / PI;
        let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * envelope * (nf * PI * mu).sin();
        sum += term;
        abs_sum += term.abs();
        if !sum.is_finite() {
            return Err(Error::Overflow("stable series".into()));
        }
        // The sine factor can vanish, so truncation looks at the envelope.
        if envelope < ctl.rel_tol * sum.abs() {
            small += 1;
            if small >= 2 {
                return Ok(Estimate { value: sum, abs_err: 4.0 * f64::EPSILON * abs_sum });
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence { what: "stable series", terms: ctl.max_terms })
}

/// Wright-type probability density
/// `xi(theta) = (1/mu) theta^{-1-1/mu} varpi(theta^{-1/mu})`.
pub fn xi_density(mu: f64, theta: f64, ctl: &SeriesControl) -> Result<f64> {
    let est = xi_density_estimate(mu, theta, ctl)?;
    if est.abs_err > DENSITY_ABS_TOL {
        return Err(Error::PrecisionLoss {
            what: "density series",
            estimate: est.abs_err / est.value.abs().max(f64::MIN_POSITIVE),
        });
    }
    Ok(est.value)
}

pub(crate) fn xi_density_estimate(mu: f64, theta: f64, ctl: &SeriesControl) -> Result<Estimate> {
    check_mu(mu)?;
    if !(theta > 0.0) || !theta.is_finite() {
        return Err(Error::Domain(format!("theta must be positive, got {theta}")));
    }
    let tau = theta.powf(-1.0 / mu);
    let scale = theta.powf(-1.0 - 1.0 / mu) / mu;
    let series =
        wright_series_raw(mu, tau, ctl).map(|w| Estimate { value: w.value * scale, abs_err: w.abs_err * scale });
    if let Ok(est) = &series {
        if est.abs_err <= 1e-3 * DENSITY_ABS_TOL {
            return series;
        }
    }
    let coarse = stable_density_integral(mu, tau, 128) * scale;
    let fine = stable_density_integral(mu, tau, 256) * scale;
    let integral = Estimate { value: fine, abs_err: (fine - coarse).abs() + 4.0 * f64::EPSILON * fine.abs() };
    match series {
        Ok(est) if est.abs_err < integral.abs_err => Ok(est),
        _ => Ok(integral),
    }
}

/// One-sided stable density from the positive integral
/// `varpi(x) = mu/((1-mu) pi) x^{-1/(1-mu)} int_0^pi U(phi) exp(-x^{-mu/(1-mu)} U(phi)) dphi`,
/// `U(phi) = (sin(mu phi)/sin phi)^{1/(1-mu)} sin((1-mu) phi)/sin(mu phi)`.
/// The integrand is even in `phi` and flat at `pi`, so the midpoint rule
/// converges geometrically. Accurate where the series cancels (small `x`).
fn stable_density_integral(mu: f64, x: f64, n: usize) -> f64 {
    let inv = 1.0 / (1.0 - mu);
    let k = x.powf(-mu * inv);
    let h = PI / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let phi = (i as f64 + 0.5) * h;
        let smp = (mu * phi).sin();
        let u = (smp / phi.sin()).powf(inv) * ((1.0 - mu) * phi).sin() / smp;
        acc += u * (-k * u).exp();
    }
    mu * inv / PI * x.powf(-inv) * acc * h
}

/// Moments of the density, `m_q = Gamma(1+q)/Gamma(1+q mu)`.
pub(crate) fn exact_moment(mu: f64, q: f64) -> f64 {
    (ln_gamma(1.0 + q) - ln_gamma(1.0 + q * mu)).exp()
}

/// Upper bound on `int_T^inf theta^k xi(theta) d theta` from the Markov
/// inequality `1{theta > T} <= (theta/T)^m e^{s(theta - T)}`, minimised over
/// `m >= 0` and `s >= 0`.
pub fn density_tail_bound(mu: f64, k: u32, cutoff: f64) -> f64 {
    type TailCache = Mutex<HashMap<(u64, u32, u64), f64>>;
    static CACHE: OnceLock<TailCache> = OnceLock::new();
    let key = (mu.to_bits(), k, cutoff.to_bits());
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(v) = cache.lock().map(|c| c.get(&key).copied()).ok().flatten() {
        return v;
    }
    let v = tail_bound_uncached(mu, k, cutoff);
    if let Ok(mut c) = cache.lock() {
        c.insert(key, v);
    }
    v
}

fn tail_bound_uncached(mu: f64, k: u32, cutoff: f64) -> f64 {
    let kf = k as f64;
    let mut best = exact_moment(mu, kf);
    for m in 0..=40 {
        let q = kf + m as f64;
        let mut s: f64 = 1e-2;
        while s < 1e4 {
            // ln sum_j s^j m_{j+q} / j!
            let mut terms: Vec<f64> = Vec::new();
            let mut peak = f64::NEG_INFINITY;
            let mut settled = false;
            for j in 0..5000 {
                let jf = j as f64;
                let lt = if j == 0 { 0.0 } else { jf * s.ln() } - ln_gamma(jf + 1.0) + ln_gamma(1.0 + jf + q)
                    - ln_gamma(1.0 + (jf + q) * mu);
                peak = peak.max(lt);
                terms.push(lt);
                if j > 10 && lt < peak - 50.0 {
                    settled = true;
                    break;
                }
            }
            if !settled {
                break;
            }
            let ln_mgf = peak + terms.iter().map(|t| (t - peak).exp()).sum::<f64>().ln();
            let bound = (ln_mgf - s * cutoff - m as f64 * cutoff.ln()).exp();
            if bound.is_finite() {
                best = best.min(bound);
            }
            s *= 1.25;
        }
    }
    best
}

/// Point beyond which `theta^4 xi(theta)` is below `1e-16`.
pub(crate) fn density_support(mu: f64, ctl: &SeriesControl) -> f64 {
    let mut theta: f64 = 1.0;
    while theta < 200.0 {
        match xi_density_estimate(mu, theta, ctl) {
            Ok(e) if theta.powi(4) * (e.value.abs() + e.abs_err) <= 1e-16 => return theta,
            Ok(_) => theta += 0.5,
            Err(_) => return theta,
        }
    }
    theta
}

/// Composite Gauss-Legendre integral of `f(theta) xi(theta)` over the trusted
/// window `[0, theta_max]`, with panel doubling until two successive results
/// agree. Returns the value and the window end.
pub(crate) fn integrate_against_density<F>(mu: f64, ctl: &SeriesControl, mut f: F) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let (v, theta_max) = integrate_many_against_density(mu, ctl, 1, |x, out| out[0] = f(x))?;
    Ok((v[0], theta_max))
}

/// Componentwise `int_0^theta_max f(theta) xi(theta) d theta` for `f` with
/// `dim` outputs, refining panels until every component settles.
pub(crate) fn integrate_many_against_density<F>(
    mu: f64,
    ctl: &SeriesControl,
    dim: usize,
    mut f: F,
) -> Result<(Vec<f64>, f64)>
where
    F: FnMut(f64, &mut [f64]),
{
    let theta_max = density_support(mu, ctl);
    let rule = GaussLegendre::new(16);
    let mut prev: Option<Vec<f64>> = None;
    let mut panels = ((theta_max / 0.5).ceil() as usize).max(4);
    let mut buf = vec![0.0; dim];
    for _ in 0..5 {
        let width = theta_max / panels as f64;
        let mut acc = vec![0.0; dim];
        for p in 0..panels {
            let (a, b) = (p as f64 * width, (p + 1) as f64 * width);
            for (x, w) in rule.mapped(a, b) {
                let wx = w * xi_density_estimate(mu, x, ctl)?.value;
                f(x, &mut buf);
                for (a, v) in acc.iter_mut().zip(&buf) {
                    *a += wx * v;
                }
            }
        }
        if let Some(pv) = &prev {
            // Rounding noise of the series near theta_max sets the floor.
            let scale = acc.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
            if acc.iter().zip(pv).all(|(a, b)| (a - b).abs() <= DENSITY_ABS_TOL * scale) {
                return Ok((acc, theta_max));
            }
        }
        prev = Some(acc);
        panels *= 2;
    }
    Err(Error::Quadrature("density quadrature did not settle under panel refinement".into()))
}

/// Numerical moment `int_0^inf theta^k xi(theta) d theta`, `k <= 4`.
pub fn density_moment(mu: f64, k: u32, ctl: &SeriesControl) -> Result<f64> {
    check_mu(mu)?;
    if k > 4 {
        return Err(Error::Domain(format!("moment order {k} outside supported range 0..=4")));
    }
    let (value, theta_max) = integrate_against_density(mu, ctl, |t| t.powi(k as i32))?;
    let tail = density_tail_bound(mu, k, theta_max);
    if tail > 1e-6 {
        return Err(Error::Quadrature(format!("tail mass beyond theta = {theta_max:.2} bounded only by {tail:.2e}")));
    }
    Ok(value)
}
