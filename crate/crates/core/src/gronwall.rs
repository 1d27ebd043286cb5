//! Fractional Gronwall inequality with a `(t - s)^{beta - 1}` kernel.
//!
//! If `x(t) <= a(t) + b int_0^t (t-s)^{beta-1} x(s) ds` then
//! `x(t) <= a(t) + sum_{n>=1} (b Gamma(beta))^n I^{n beta} a(t)`. The bound is
//! summed term by term, each fractional integral taken by product
//! integration of the sampled forcing.

use crate::error::{Error, Result};
use crate::fracquad::{interpolate, power_kernel_integral, rl_integral_any_order, SampledFunction};
use crate::specialfn::{gamma_unchecked, SeriesControl};

/// Scalar nonnegative forcing `a`, coefficient `b >= 0` and order `beta > 0`.
#[derive(Debug, Clone)]
pub struct GronwallData {
    forcing: SampledFunction,
    coefficient: f64,
    order: f64,
}

impl GronwallData {
    pub fn new(forcing: SampledFunction, coefficient: f64, order: f64) -> Result<Self> {
        if forcing.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: forcing.dim() });
        }
        if !(coefficient >= 0.0) || !coefficient.is_finite() {
            return Err(Error::Domain(format!("coefficient must be >= 0, got {coefficient}")));
        }
        if !(order > 0.0) || !order.is_finite() {
            return Err(Error::Domain(format!("order must be > 0, got {order}")));
        }
        if forcing.values().iter().any(|v| v[0] < 0.0) {
            return Err(Error::Domain("forcing must be nonnegative at every node".into()));
        }
        Ok(Self { forcing, coefficient, order })
    }

    pub fn forcing(&self) -> &SampledFunction {
        &self.forcing
    }

    pub fn coefficient(&self) -> f64 {
        self.coefficient
    }

    pub fn order(&self) -> f64 {
        self.order
    }
}

/// The Mittag-Leffler-type bound at `t`.
pub fn ml_kernel_bound(data: &GronwallData, t: f64, ctl: &SeriesControl) -> Result<f64> {
    let a_t = interpolate(&data.forcing, t)?[0];
    let rate = data.coefficient * gamma_unchecked(data.order);
    if rate == 0.0 {
        return Ok(a_t);
    }
    let mut bound = a_t;
    let mut factor = 1.0;
    let mut small = 0;
    for n in 1..=ctl.max_terms() {
        factor *= rate;
        let order = n as f64 * data.order;
        if order > 170.0 {
            break;
        }
        let term = factor * rl_integral_any_order(order, &data.forcing, t)?[0];
        if !term.is_finite() {
            return Err(Error::Overflow("Gronwall series".into()));
        }
        bound += term;
        if term <= ctl.rel_tol() * bound {
            small += 1;
            if small == 2 {
                return Ok(bound);
            }
        } else {
            small = 0;
        }
    }
    Err(Error::NonConvergence { what: "Gronwall series", terms: ctl.max_terms() })
}

/// Outcome of checking the hypothesis and, where it holds, the bound.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityReport {
    /// Smallest `a + b int (t-s)^{beta-1} x - x` over the nodes.
    pub hypothesis_margin: f64,
    pub hypothesis_holds: bool,
    /// Smallest `bound - x`; absent when the hypothesis fails.
    pub bound_margin: Option<f64>,
    pub bound_holds: Option<bool>,
}

/// Checks the hypothesis at every node of `x` (which must share the forcing's
/// mesh) and then that `x` stays below the bound, each up to `tol`.
pub fn verify_inequality(
    x: &SampledFunction,
    data: &GronwallData,
    tol: f64,
    ctl: &SeriesControl,
) -> Result<InequalityReport> {
    if x.mesh() != data.forcing.mesh() {
        return Err(Error::Domain("trajectory and forcing must share one mesh".into()));
    }
    if x.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: x.dim() });
    }
    let nodes = x.mesh().nodes();
    let mut hyp = f64::INFINITY;
    for (j, &t) in nodes.iter().enumerate() {
        let rhs = data.forcing.values()[j][0] + data.coefficient * power_kernel_integral(data.order, x, t)?[0];
        hyp = hyp.min(rhs - x.values()[j][0]);
    }
    let hypothesis_holds = hyp >= -tol;
    if !hypothesis_holds {
        return Ok(InequalityReport {
            hypothesis_margin: hyp,
            hypothesis_holds,
            bound_margin: None,
            bound_holds: None,
        });
    }
    let mut margin = f64::INFINITY;
    for (j, &t) in nodes.iter().enumerate() {
        margin = margin.min(ml_kernel_bound(data, t, ctl)? - x.values()[j][0]);
    }
    Ok(InequalityReport {
        hypothesis_margin: hyp,
        hypothesis_holds,
        bound_margin: Some(margin),
        bound_holds: Some(margin >= -tol),
    })
}
