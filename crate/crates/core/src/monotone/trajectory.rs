use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fracquad::{IntervalMesh, SampledFunction};

/// Piecewise trajectory stored as `w_j = (t_j - t_k)^{1-lambda} x(t_j)` on
/// each interval mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedTrajectory {
    lambda: f64,
    meshes: Vec<IntervalMesh>,
    weighted: Vec<Vec<DVector<f64>>>,
}

impl WeightedTrajectory {
    pub fn new(lambda: f64, meshes: Vec<IntervalMesh>, weighted: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Domain(format!("lambda must lie in (0,1], got {lambda}")));
        }
        if meshes.is_empty() || meshes.len() != weighted.len() {
            return Err(Error::DimensionMismatch { expected: meshes.len(), got: weighted.len() });
        }
        for w in meshes.windows(2) {
            if w[0].t_end() != w[1].t_start() {
                return Err(Error::Domain("interval meshes must partition the horizon".into()));
            }
        }
        let dim = weighted[0].first().map_or(0, |v| v.len());
        for (m, w) in meshes.iter().zip(&weighted) {
            if m.len() != w.len() {
                return Err(Error::DimensionMismatch { expected: m.len(), got: w.len() });
            }
            for v in w {
                if v.len() != dim {
                    return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Domain("weighted samples must be finite".into()));
                }
            }
        }
        Ok(Self { lambda, meshes, weighted })
    }

    /// Samples `x(t)` and stores its weighted form.
    pub fn from_raw_fn<F: FnMut(f64) -> DVector<f64>>(
        lambda: f64,
        meshes: Vec<IntervalMesh>,
        mut f: F,
    ) -> Result<Self> {
        let weighted = meshes
            .iter()
            .map(|m| m.nodes().iter().map(|&t| f(t) * (t - m.t_start()).powf(1.0 - lambda)).collect())
            .collect();
        Self::new(lambda, meshes, weighted)
    }

    /// Builds from weighted values `f(k, t)` given per interval index.
    pub fn from_weighted_fn<F: FnMut(usize, f64) -> DVector<f64>>(
        lambda: f64,
        meshes: Vec<IntervalMesh>,
        mut f: F,
    ) -> Result<Self> {
        let weighted = meshes.iter().enumerate().map(|(k, m)| m.nodes().iter().map(|&t| f(k, t)).collect()).collect();
        Self::new(lambda, meshes, weighted)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn meshes(&self) -> &[IntervalMesh] {
        &self.meshes
    }

    pub fn dim(&self) -> usize {
        self.weighted[0][0].len()
    }

    pub fn interval_count(&self) -> usize {
        self.meshes.len()
    }

    pub fn weighted(&self, interval: usize) -> &[DVector<f64>] {
        &self.weighted[interval]
    }

    pub fn raw(&self, interval: usize, node: usize) -> DVector<f64> {
        let m = &self.meshes[interval];
        &self.weighted[interval][node] * (m.nodes()[node] - m.t_start()).powf(self.lambda - 1.0)
    }

    /// Raw value at the last node of an interval, the left limit at the next
    /// impulse time.
    pub fn left_limit_at_end(&self, interval: usize) -> DVector<f64> {
        self.raw(interval, self.meshes[interval].len() - 1)
    }

    /// `(interval, node, t, weighted value)` in time order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64, &DVector<f64>)> + '_ {
        self.meshes
            .iter()
            .zip(&self.weighted)
            .enumerate()
            .flat_map(|(k, (m, w))| m.nodes().iter().zip(w).enumerate().map(move |(j, (&t, v))| (k, j, t, v)))
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.lambda == other.lambda && self.meshes == other.meshes && self.dim() == other.dim()
    }

    fn require_same_grid(&self, other: &Self) -> Result<()> {
        if !self.same_grid(other) {
            return Err(Error::Domain("trajectories live on different grids".into()));
        }
        Ok(())
    }

    /// Weighted sup norm.
    pub fn pc_norm(&self) -> f64 {
        self.iter().map(|(_, _, _, v)| v.amax()).fold(0.0, f64::max)
    }

    /// Weighted sup distance.
    pub fn pc_distance(&self, other: &Self) -> Result<f64> {
        self.require_same_grid(other)?;
        Ok(self.iter().zip(other.iter()).map(|((_, _, _, a), (_, _, _, b))| (a - b).amax()).fold(0.0, f64::max))
    }

    /// Largest weighted amount by which `self` exceeds `other` in any
    /// component, clipped below at zero.
    pub fn excess_over(&self, other: &Self) -> Result<f64> {
        self.require_same_grid(other)?;
        Ok(self
            .iter()
            .zip(other.iter())
            .flat_map(|((_, _, _, a), (_, _, _, b))| a.iter().zip(b.iter()).map(|(x, y)| x - y).collect::<Vec<_>>())
            .fold(0.0, f64::max))
    }

    /// Raw samples on one interval with the declared `(t - t_k)^{lambda-1}`
    /// singularity.
    pub fn interval_function(&self, interval: usize) -> Result<SampledFunction> {
        let values = (0..self.meshes[interval].len()).map(|j| self.raw(interval, j)).collect();
        SampledFunction::new(self.meshes[interval].clone(), values)?.with_singular_exponent(self.lambda - 1.0)
    }
}
