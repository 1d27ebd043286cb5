use nalgebra::DVector;
use serde::Serialize;

use super::{MildOperator, WeightedTrajectory};
use crate::error::{Error, Result};
use crate::fracquad::{IntervalMesh, SampledFunction};
use crate::gronwall::{ml_kernel_bound, GronwallData};
use crate::par;
use crate::specialfn::{gamma_unchecked, mittag_leffler, SeriesControl};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;

/// Iteration at which the chain ordering broke by more than the slack.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingWarning {
    pub iteration: usize,
    pub violation: f64,
}

/// Diagnostics of one monotone iteration run. All distances are weighted
/// sup norms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnclosureReport {
    pub iterations: usize,
    pub converged: bool,
    pub tolerance: f64,
    /// Worst breach of `y_{p-1} <= y_p <= z_p <= z_{p-1}` over all steps,
    /// clipped below at zero.
    pub chain_violation: f64,
    pub fixed_point_residual_lower: f64,
    pub fixed_point_residual_upper: f64,
    /// Distance between the final upper and lower iterates.
    pub uniqueness_gap: f64,
    pub ordering_warnings: Vec<OrderingWarning>,
    pub lower_steps: Vec<f64>,
    pub upper_steps: Vec<f64>,
}

/// Final lower and upper iterates with their report.
#[derive(Debug, Clone)]
pub struct Enclosure {
    pub lower: WeightedTrajectory,
    pub upper: WeightedTrajectory,
    pub report: EnclosureReport,
}

/// Runs `y_p = G y_{p-1}` and `z_p = G z_{p-1}` until both steps drop below
/// `tol`. Ordering breaches beyond `10 tol` are recorded, not fatal.
pub fn iterate_extremal(
    op: &MildOperator,
    y0: &WeightedTrajectory,
    z0: &WeightedTrajectory,
    tol: f64,
    max_iter: usize,
) -> Result<Enclosure> {
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    if max_iter == 0 {
        return Err(Error::Domain("max_iter must be at least 1".into()));
    }
    let excess = y0.excess_over(z0)?;
    if excess > 0.0 {
        return Err(Error::Precondition(format!("lower seed exceeds upper seed by {excess:.3e}")));
    }
    let slack = 10.0 * tol;
    let mut y = y0.clone();
    let mut z = z0.clone();
    let mut chain_violation: f64 = 0.0;
    let mut ordering_warnings = Vec::new();
    let mut lower_steps = Vec::new();
    let mut upper_steps = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let (yn, zn) = par::join(|| op.apply(&y), || op.apply(&z));
        let (yn, zn) = (yn?, zn?);
        let violation = y.excess_over(&yn)?.max(yn.excess_over(&zn)?).max(zn.excess_over(&z)?);
        chain_violation = chain_violation.max(violation);
        if violation > slack {
            ordering_warnings.push(OrderingWarning { iteration: iterations, violation });
        }
        let dy = yn.pc_distance(&y)?;
        let dz = zn.pc_distance(&z)?;
        lower_steps.push(dy);
        upper_steps.push(dz);
        y = yn;
        z = zn;
        if dy < tol && dz < tol {
            converged = true;
            break;
        }
    }
    let (gy, gz) = par::join(|| op.apply(&y), || op.apply(&z));
    let report = EnclosureReport {
        iterations,
        converged,
        tolerance: tol,
        chain_violation,
        fixed_point_residual_lower: gy?.pc_distance(&y)?,
        fixed_point_residual_upper: gz?.pc_distance(&z)?,
        uniqueness_gap: z.pc_distance(&y)?,
        ordering_warnings,
        lower_steps,
        upper_steps,
    };
    if !converged {
        return Err(Error::NotConverged { iterations, report: Box::new(report) });
    }
    Ok(Enclosure { lower: y, upper: z, report })
}

/// Outcome of the uniqueness test between two extremal iterates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessReport {
    pub gap: f64,
    pub c_star: f64,
    /// `b = M* (C* + C) / Gamma(mu)`
    pub coefficient: f64,
    /// `E_mu(M* (C* + C) T^mu)`
    pub amplification: f64,
    pub threshold: f64,
    pub unique_within_tolerance: bool,
    /// Largest value of the Gronwall bound fed with the observed defect.
    pub gronwall_ceiling: f64,
    /// Whether the gap stays below that bound at every node.
    pub gronwall_consistent: bool,
}

/// Certifies that the extremal iterates coincide up to the amplified solver
/// tolerance. The defect fed to the Gronwall bound is the sum of both
/// fixed-point residuals plus the propagated jump differences, all in
/// weighted form on the concatenated mesh.
pub fn uniqueness_certificate(
    op: &MildOperator,
    lower: &WeightedTrajectory,
    upper: &WeightedTrajectory,
    c_star: f64,
    tol: f64,
) -> Result<UniquenessReport> {
    if !(c_star >= 0.0) || !c_star.is_finite() {
        return Err(Error::Domain(format!("C* must be >= 0, got {c_star}")));
    }
    let order_excess = lower.excess_over(upper)?;
    if order_excess > 10.0 * tol {
        return Err(Error::Precondition(format!("lower iterate exceeds upper by {order_excess:.3e}")));
    }
    let problem = op.problem();
    let ord = problem.order();
    let mu = ord.mu();
    let shift = problem.generator().shift();
    let m_star = op.family().bound_constant();
    let coefficient = m_star * (c_star + shift) / gamma_unchecked(mu);
    let ctl = SeriesControl::default();
    let amplification = mittag_leffler(mu, 1.0, m_star * (c_star + shift) * problem.horizon().powf(mu), &ctl)?;
    let gap = upper.pc_distance(lower)?;
    let threshold = tol * amplification;

    let gl = op.apply(lower)?;
    let gu = op.apply(upper)?;
    let mut nodes = Vec::new();
    let mut defect = Vec::new();
    let mut gaps = Vec::new();
    let lambda = op.lambda();
    for (k, mesh) in op.meshes().iter().enumerate() {
        let a = mesh.t_start();
        for (j, &t) in mesh.nodes().iter().enumerate() {
            let mut d = (&gl.weighted(k)[j] - &lower.weighted(k)[j]).amax()
                + (&gu.weighted(k)[j] - &upper.weighted(k)[j]).amax();
            for (i, imp) in problem.impulses().iter().take(k).enumerate() {
                let jump_gap: DVector<f64> =
                    (imp.jump)(&upper.left_limit_at_end(i)) - (imp.jump)(&lower.left_limit_at_end(i));
                let s = op.family().s_operator(t - imp.time)?;
                let scale = (t - a).powf(1.0 - lambda);
                d += scale * (s * jump_gap).amax();
            }
            nodes.push(t);
            defect.push(d);
            gaps.push((&upper.weighted(k)[j] - &lower.weighted(k)[j]).amax());
        }
    }
    let mesh = IntervalMesh::from_nodes(0.0, nodes)?;
    let forcing =
        SampledFunction::new(mesh.clone(), defect.into_iter().map(|d| DVector::from_element(1, d)).collect())?;
    let data = GronwallData::new(forcing, coefficient, mu)?;
    let bounds = par::map_indices(mesh.len(), |j| ml_kernel_bound(&data, mesh.nodes()[j], &ctl));
    let mut gronwall_ceiling: f64 = 0.0;
    let mut gronwall_consistent = true;
    for (b, g) in bounds.into_iter().zip(&gaps) {
        let b = b?;
        gronwall_ceiling = gronwall_ceiling.max(b);
        if *g > b + tol {
            gronwall_consistent = false;
        }
    }
    Ok(UniquenessReport {
        gap,
        c_star,
        coefficient,
        amplification,
        threshold,
        unique_within_tolerance: gap <= threshold,
        gronwall_ceiling,
        gronwall_consistent,
    })
}
