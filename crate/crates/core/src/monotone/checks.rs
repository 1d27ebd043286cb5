use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ImpulsiveProblem, MildOperator, WeightedTrajectory};
use crate::error::{Error, Result};
use crate::fracquad::hilfer_derivative_sampled;
use crate::specialfn::gamma_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Lower,
    Upper,
}

impl Side {
    /// `+1` when the candidate should dominate, `-1` when it should be
    /// dominated.
    fn sign(self) -> f64 {
        match self {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            other => Err(Error::Domain(format!("side must be lower or upper, got {other:?}"))),
        }
    }
}

/// Worst margins on one impulse interval; positive means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntervalMargin {
    pub interval: usize,
    pub mild_margin: f64,
    /// Differential residual margin over well-conditioned nodes, measured
    /// with the derivative based at the interval start.
    pub derivative_margin: Option<f64>,
    pub derivative_satisfied_nodes: usize,
    pub derivative_violated_nodes: usize,
    pub derivative_skipped_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionCheck {
    pub side: Side,
    pub slack: f64,
    pub passes: bool,
    pub mild_margin: f64,
    pub intervals: Vec<IntervalMargin>,
    /// Margin of `jump - phi_k(x(t_k))` per impulse.
    pub impulse_margins: Vec<f64>,
    /// Margin of `Gamma(lambda) w(0+) - x0`.
    pub initial_margin: f64,
}

/// Checks `G(c) <= c` (upper) or `G(c) >= c` (lower) at every node, the
/// primary criterion, and reports the differential, jump and initial
/// inequalities as diagnostics.
pub fn verify_lower_upper(
    op: &MildOperator,
    candidate: &WeightedTrajectory,
    side: Side,
    slack: f64,
) -> Result<SolutionCheck> {
    let problem = op.problem();
    let image = op.apply(candidate)?;
    let sign = side.sign();
    let ord = problem.order();
    let lambda = ord.lambda();
    let a_mat = problem.generator().matrix();
    let signed_min = |v: DVector<f64>| v.iter().map(|x| sign * x).fold(f64::INFINITY, f64::min);

    let mut intervals = Vec::with_capacity(op.meshes().len());
    for (k, mesh) in op.meshes().iter().enumerate() {
        let mild_margin = candidate
            .weighted(k)
            .iter()
            .zip(image.weighted(k))
            .map(|(c, g)| signed_min(c - g))
            .fold(f64::INFINITY, f64::min);
        let mut derivative_margin: Option<f64> = None;
        let (mut ok, mut bad, mut skipped) = (0, 0, 0);
        if mesh.len() >= 3 {
            let f = candidate.interval_function(k)?;
            for (j, est) in hilfer_derivative_sampled(ord, &f)?.into_iter().enumerate() {
                if est.ill_conditioned {
                    skipped += 1;
                    continue;
                }
                let t = mesh.nodes()[j];
                let x = &f.values()[j];
                let residual = est.value + a_mat * x - problem.nonlinearity(t, x);
                let m = signed_min(residual);
                if m >= 0.0 {
                    ok += 1;
                } else {
                    bad += 1;
                }
                derivative_margin = Some(derivative_margin.map_or(m, |d| d.min(m)));
            }
        }
        intervals.push(IntervalMargin {
            interval: k,
            mild_margin,
            derivative_margin,
            derivative_satisfied_nodes: ok,
            derivative_violated_nodes: bad,
            derivative_skipped_nodes: skipped,
        });
    }

    // Near an interval start the weighted values behave like
    // `c0 + c1 (t - t_k)^{1-lambda} + c2 (t - t_k)^mu`.
    let start_limit = |k: usize| -> DVector<f64> {
        let mesh = &op.meshes()[k];
        let w = candidate.weighted(k);
        let tau: Vec<f64> = mesh.nodes().iter().take(3).map(|t| t - mesh.t_start()).collect();
        let mut exps = vec![ord.mu()];
        if k > 0 && lambda < 1.0 && (1.0 - lambda - ord.mu()).abs() > 0.05 {
            exps.push(1.0 - lambda);
        }
        exps.truncate(tau.len().saturating_sub(1));
        let m = exps.len() + 1;
        let basis = DMatrix::from_fn(m, m, |i, j| if j == 0 { 1.0 } else { tau[i].powf(exps[j - 1]) });
        let Some(inv) = basis.try_inverse() else {
            return w[0].clone();
        };
        (0..m).fold(DVector::zeros(w[0].len()), |acc, i| acc + &w[i] * inv[(0, i)])
    };
    let gl = gamma_unchecked(lambda);
    let mut impulse_margins = Vec::with_capacity(problem.impulses().len());
    for (i, imp) in problem.impulses().iter().enumerate() {
        let before = candidate.left_limit_at_end(i);
        let mut jump = start_limit(i + 1) * gl;
        if lambda == 1.0 {
            jump -= &before;
        }
        impulse_margins.push(signed_min(jump - (imp.jump)(&before)));
    }
    let initial_margin = signed_min(start_limit(0) * gl - problem.initial());
    let mild_margin = intervals.iter().map(|m| m.mild_margin).fold(f64::INFINITY, f64::min);
    Ok(SolutionCheck {
        side,
        slack,
        passes: mild_margin >= -slack,
        mild_margin,
        intervals,
        impulse_margins,
        initial_margin,
    })
}

/// Sampled margins of the monotonicity and one-sided Lipschitz conditions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub samples: usize,
    pub seed: u64,
    pub c: f64,
    pub c_star: f64,
    /// Worst `g(t,x2) - g(t,x1) + C (x2 - x1)`.
    pub shifted_monotone_margin: f64,
    pub jump_monotone_violations: usize,
    /// Worst `C* (x2 - x1) - (g(t,x2) - g(t,x1))`.
    pub lipschitz_margin: f64,
    /// `L = D C* + D C + C` with `D = 1`.
    pub lipschitz_constant: f64,
}

impl ConditionReport {
    pub fn monotone_conditions_hold(&self) -> bool {
        self.shifted_monotone_margin >= 0.0 && self.jump_monotone_violations == 0
    }

    pub fn all_hold(&self) -> bool {
        self.monotone_conditions_hold() && self.lipschitz_margin >= 0.0
    }
}

/// Draws `samples` ordered pairs `x1 <= x2` inside `[y0(t), z0(t)]` at random
/// nodes (and as many at each impulse time) from a seeded ChaCha8 stream.
pub fn check_conditions(
    problem: &ImpulsiveProblem,
    y0: &WeightedTrajectory,
    z0: &WeightedTrajectory,
    c: f64,
    c_star: f64,
    samples: usize,
    seed: u64,
) -> Result<ConditionReport> {
    if samples == 0 {
        return Err(Error::Domain("need at least one sample".into()));
    }
    if y0.dim() != problem.dim() {
        return Err(Error::DimensionMismatch { expected: problem.dim(), got: y0.dim() });
    }
    let excess = y0.excess_over(z0)?;
    if excess > 0.0 {
        return Err(Error::Precondition(format!("lower bound exceeds upper bound by {excess:.3e}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes: Vec<(usize, usize, f64)> = y0.iter().map(|(k, j, t, _)| (k, j, t)).collect();
    let draw_pair = |rng: &mut ChaCha8Rng, lo: &DVector<f64>, hi: &DVector<f64>| {
        let mut x1 = lo.clone();
        let mut x2 = lo.clone();
        for i in 0..lo.len() {
            let u: f64 = rng.random();
            let v: f64 = rng.random();
            let (u, v) = if u <= v { (u, v) } else { (v, u) };
            x1[i] = lo[i] + u * (hi[i] - lo[i]);
            x2[i] = lo[i] + v * (hi[i] - lo[i]);
        }
        (x1, x2)
    };

    let mut shifted_monotone_margin = f64::INFINITY;
    let mut lipschitz_margin = f64::INFINITY;
    for _ in 0..samples {
        let (k, j, t) = nodes[rng.random_range(0..nodes.len())];
        let (x1, x2) = draw_pair(&mut rng, &y0.raw(k, j), &z0.raw(k, j));
        let g1 = problem.nonlinearity(t, &x1);
        let g2 = problem.nonlinearity(t, &x2);
        for i in 0..x1.len() {
            let (dg, dx) = (g2[i] - g1[i], x2[i] - x1[i]);
            let scale = g1[i].abs() + g2[i].abs() + x1[i].abs().max(x2[i].abs()) * c.abs().max(c_star.abs());
            shifted_monotone_margin = shifted_monotone_margin.min(beyond_rounding(dg + c * dx, scale));
            lipschitz_margin = lipschitz_margin.min(beyond_rounding(c_star * dx - dg, scale));
        }
    }
    let mut jump_monotone_violations = 0;
    for (i, imp) in problem.impulses().iter().enumerate() {
        let lo = y0.left_limit_at_end(i);
        let hi = z0.left_limit_at_end(i);
        for _ in 0..samples {
            let (x1, x2) = draw_pair(&mut rng, &lo, &hi);
            let p1 = (imp.jump)(&x1);
            let p2 = (imp.jump)(&x2);
            if p1.iter().zip(p2.iter()).any(|(a, b)| beyond_rounding(b - a, a.abs() + b.abs()) < 0.0) {
                jump_monotone_violations += 1;
            }
        }
    }
    Ok(ConditionReport {
        samples,
        seed,
        c,
        c_star,
        shifted_monotone_margin,
        jump_monotone_violations,
        lipschitz_margin,
        lipschitz_constant: c_star + 2.0 * c,
    })
}

/// Zero when `margin` is within a few roundings of quantities of size
/// `scale`.
fn beyond_rounding(margin: f64, scale: f64) -> f64 {
    if margin.abs() <= 8.0 * f64::EPSILON * scale {
        0.0
    } else {
        margin
    }
}
