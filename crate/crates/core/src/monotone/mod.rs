//! Impulsive problems, the mild-solution operator and the monotone iteration
//! that brackets extremal solutions between a lower and an upper solution.
//!
//! Order relations are componentwise (the nonnegative orthant, whose normal
//! constant is 1). Trajectories are stored in weighted form
//! `(t - t_k)^{1-lambda} x(t)` on each impulse interval `(t_k, t_{k+1}]`.

mod checks;
mod iteration;
mod mild;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fracquad::IntervalMesh;
use crate::operators::Generator;
use crate::specialfn::FractionalOrder;

pub use checks::{check_conditions, verify_lower_upper, ConditionReport, IntervalMargin, Side, SolutionCheck};
pub use iteration::{
    iterate_extremal, uniqueness_certificate, Enclosure, EnclosureReport, OrderingWarning, UniquenessReport,
    DEFAULT_MAX_ITER, DEFAULT_TOL,
};
pub use mild::MildOperator;
pub use trajectory::WeightedTrajectory;

/// Right-hand side `g(t, x)`. Must be pure: equal inputs give equal outputs.
pub type VectorField = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Jump map applied to the state just before an impulse time.
pub type JumpMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

#[derive(Clone)]
pub struct Impulse {
    pub time: f64,
    pub jump: JumpMap,
}

impl fmt::Debug for Impulse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Impulse").field("time", &self.time).finish_non_exhaustive()
    }
}

/// `D^{mu,nu} x + A x = g(t, x)` on `(0, T]` with jumps
/// `x(t_k^+) - x(t_k) = jump_k(x(t_k))` and weighted initial datum
/// `I^{1-lambda} x(0^+) = x0`. The generator's shift `C` moves `C x` from
/// the nonlinearity to the linear part; the mild solution does not depend on
/// it.
#[derive(Clone)]
pub struct ImpulsiveProblem {
    order: FractionalOrder,
    generator: Generator,
    nonlinearity: VectorField,
    impulses: Vec<Impulse>,
    initial: DVector<f64>,
    horizon: f64,
}

impl fmt::Debug for ImpulsiveProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImpulsiveProblem")
            .field("order", &self.order)
            .field("generator", &self.generator)
            .field("impulses", &self.impulses)
            .field("initial", &self.initial)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl ImpulsiveProblem {
    pub fn new(
        order: FractionalOrder,
        generator: Generator,
        nonlinearity: VectorField,
        impulses: Vec<Impulse>,
        initial: DVector<f64>,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if initial.len() != generator.dim() {
            return Err(Error::DimensionMismatch { expected: generator.dim(), got: initial.len() });
        }
        if initial.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("initial datum must be finite".into()));
        }
        let mut prev = 0.0;
        for imp in &impulses {
            if !(imp.time > prev) || !(imp.time < horizon) {
                return Err(Error::Domain(format!(
                    "impulse times must increase strictly inside (0, {horizon}); got {}",
                    imp.time
                )));
            }
            prev = imp.time;
        }
        Ok(Self { order, generator, nonlinearity, impulses, initial, horizon })
    }

    /// Same problem with a different shift constant `C`.
    pub fn with_shift(&self, shift: f64) -> Result<Self> {
        let generator = Generator::new(self.generator.matrix().clone(), shift)?;
        Ok(Self { generator, ..self.clone() })
    }

    pub fn order(&self) -> &FractionalOrder {
        &self.order
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn impulses(&self) -> &[Impulse] {
        &self.impulses
    }

    pub fn initial(&self) -> &DVector<f64> {
        &self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.generator.dim()
    }

    pub fn nonlinearity(&self, t: f64, x: &DVector<f64>) -> DVector<f64> {
        (self.nonlinearity)(t, x)
    }

    /// `0 = t_0 < t_1 < ... < t_l < t_{l+1} = T`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b = vec![0.0];
        b.extend(self.impulses.iter().map(|i| i.time));
        b.push(self.horizon);
        b
    }

    pub fn meshes(&self, disc: &Discretization) -> Result<Vec<IntervalMesh>> {
        self.breakpoints()
            .windows(2)
            .map(|w| IntervalMesh::graded(w[0], w[1], disc.nodes_per_interval, disc.grading))
            .collect()
    }
}

/// Nodes per impulse interval and the grading exponent of each mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub nodes_per_interval: usize,
    pub grading: f64,
}

impl Discretization {
    pub const DEFAULT_NODES: usize = 256;

    pub fn new(nodes_per_interval: usize, grading: f64) -> Result<Self> {
        if nodes_per_interval < 3 {
            return Err(Error::Domain(format!("need at least 3 nodes per interval, got {nodes_per_interval}")));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(Error::Domain(format!("grading must be >= 1, got {grading}")));
        }
        Ok(Self { nodes_per_interval, grading })
    }

    pub fn with_nodes(self, nodes_per_interval: usize) -> Self {
        Self { nodes_per_interval, ..self }
    }

    /// `r = max(2, ceil(1/lambda))` with the default node count.
    pub fn default_for(order: &FractionalOrder) -> Self {
        Self { nodes_per_interval: Self::DEFAULT_NODES, grading: default_grading(order) }
    }
}

pub fn default_grading(order: &FractionalOrder) -> f64 {
    (1.0 / order.lambda()).ceil().max(2.0)
}
