//! Fractional integrals and weakly singular convolutions on per-interval
//! meshes, by product integration against piecewise-linear interpolants.
//!
//! A [`SampledFunction`] lives on an [`IntervalMesh`] whose nodes exclude the
//! interval start `a`, where the sampled function may blow up like
//! `(s - a)^kappa`. Between nodes the samples are interpolated linearly. On the
//! leading panel `[a, s_0]` the regular part `(s - a)^{-kappa} f(s)` is
//! extrapolated linearly from the first two nodes and the `(s - a)^kappa`
//! factor is integrated exactly.
//!
//! Kernel moments `int (t - s)^{gamma-1} {1, s - p} ds` are taken in closed
//! form on panels within four panel widths of `t`; farther panels, where the
//! kernel is smooth and the closed forms cancel, use an 8-point Gauss rule.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gauss::GaussLegendre;
use crate::specialfn::{gamma_unchecked, FractionalOrder};

/// Sample times on `(t_start, t_end]`, clustered towards `t_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalMesh {
    t_start: f64,
    t_end: f64,
    grading: Option<f64>,
    nodes: Vec<f64>,
}

impl IntervalMesh {
    /// `n` nodes at `t_start + (j/n)^grading (t_end - t_start)`, `j = 1..=n`.
    pub fn graded(t_start: f64, t_end: f64, n: usize, grading: f64) -> Result<Self> {
        if !(t_end > t_start) || !t_start.is_finite() || !t_end.is_finite() {
            return Err(Error::Domain(format!("empty interval ({t_start}, {t_end}]")));
        }
        if n == 0 {
            return Err(Error::Domain("a mesh needs at least one node".into()));
        }
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(Error::Domain(format!("grading must be >= 1, got {grading}")));
        }
        let len = t_end - t_start;
        let mut nodes: Vec<f64> = (1..=n).map(|j| t_start + (j as f64 / n as f64).powf(grading) * len).collect();
        nodes[n - 1] = t_end;
        Ok(Self { t_start, t_end, grading: Some(grading), nodes })
    }

    /// Mesh from explicit nodes; the last node is the interval end.
    pub fn from_nodes(t_start: f64, nodes: Vec<f64>) -> Result<Self> {
        let Some(&t_end) = nodes.last() else {
            return Err(Error::Domain("a mesh needs at least one node".into()));
        };
        if !(nodes[0] > t_start) {
            return Err(Error::Domain(format!("first node {} must lie after the interval start {t_start}", nodes[0])));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("mesh nodes must be finite and strictly increasing".into()));
        }
        Ok(Self { t_start, t_end, grading: None, nodes })
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn grading(&self) -> Option<f64> {
        self.grading
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Every other node, always keeping the last one.
    pub fn coarsened(&self) -> Option<(Self, Vec<usize>)> {
        if self.nodes.len() < 4 {
            return None;
        }
        let n = self.nodes.len();
        let idx: Vec<usize> = (0..n).filter(|j| (n - 1 - j).is_multiple_of(2)).collect();
        let nodes = idx.iter().map(|&j| self.nodes[j]).collect();
        Some((Self { t_start: self.t_start, t_end: self.t_end, grading: self.grading, nodes }, idx))
    }
}

/// Vector-valued samples on a mesh. The function may carry a declared
/// singularity `(s - t_start)^kappa`, `-1 < kappa <= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    mesh: IntervalMesh,
    values: Vec<DVector<f64>>,
    singular_exponent: f64,
}

impl SampledFunction {
    pub fn new(mesh: IntervalMesh, values: Vec<DVector<f64>>) -> Result<Self> {
        if values.len() != mesh.len() {
            return Err(Error::DimensionMismatch { expected: mesh.len(), got: values.len() });
        }
        let dim = values[0].len();
        for v in &values {
            if v.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.len() });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("sampled values must be finite".into()));
            }
        }
        Ok(Self { mesh, values, singular_exponent: 0.0 })
    }

    pub fn from_fn<F: FnMut(f64) -> DVector<f64>>(mesh: IntervalMesh, mut f: F) -> Result<Self> {
        let values = mesh.nodes().iter().map(|&t| f(t)).collect();
        Self::new(mesh, values)
    }

    pub fn scalar_from_fn<F: FnMut(f64) -> f64>(mesh: IntervalMesh, mut f: F) -> Result<Self> {
        Self::from_fn(mesh, |t| DVector::from_element(1, f(t)))
    }

    /// Declares that the function behaves like `(s - t_start)^kappa`.
    pub fn with_singular_exponent(mut self, kappa: f64) -> Result<Self> {
        if !(kappa > -1.0 && kappa <= 0.0) {
            return Err(Error::Domain(format!("singular exponent must lie in (-1, 0], got {kappa}")));
        }
        self.singular_exponent = kappa;
        Ok(self)
    }

    pub fn mesh(&self) -> &IntervalMesh {
        &self.mesh
    }

    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn singular_exponent(&self) -> f64 {
        self.singular_exponent
    }

    fn restricted(&self, mesh: IntervalMesh, idx: &[usize]) -> Self {
        Self {
            mesh,
            values: idx.iter().map(|&j| self.values[j].clone()).collect(),
            singular_exponent: self.singular_exponent,
        }
    }

    fn apply_weights(&self, w: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        for (wj, v) in w.iter().zip(&self.values) {
            if *wj != 0.0 {
                out.axpy(*wj, v, 1.0);
            }
        }
        out
    }
}

fn beta_fn(a: f64, b: f64) -> f64 {
    gamma_unchecked(a) * gamma_unchecked(b) / gamma_unchecked(a + b)
}

/// `(B^g - A^g)` without cancellation when `A` is close to `B`.
fn pow_diff(b: f64, a: f64, g: f64) -> f64 {
    if a > 0.0 {
        a.powf(g) * (g * ((b - a) / a).ln_1p()).exp_m1()
    } else {
        b.powf(g)
    }
}

/// Weights `(w_p, w_q)` with `int_p^q (t-s)^{g-1} l(s) ds = w_p l(p) + w_q l(q)`
/// for `l` linear and `t >= q`.
fn linear_panel_weights(g: f64, t: f64, p: f64, q: f64, rule: &GaussLegendre) -> (f64, f64) {
    let h = q - p;
    let a = t - q;
    let b = t - p;
    if a >= 4.0 * h {
        let mut wp = 0.0;
        let mut wq = 0.0;
        for (s, w) in rule.mapped(p, q) {
            let k = w * (t - s).powf(g - 1.0);
            wp += k * (q - s) / h;
            wq += k * (s - p) / h;
        }
        return (wp, wq);
    }
    let m0 = pow_diff(b, a, g) / g;
    let m1 = (b * m0 - pow_diff(b, a, g + 1.0) / (g + 1.0)) / h;
    (m0 - m1, m1)
}

/// Panel weights on `f(p), f(q)`. With a declared singularity and a kernel
/// smooth on the panel, the regular part `(s-a)^{-kappa} f` is interpolated
/// and the `(s-a)^kappa` factor goes into the Gauss rule.
fn full_panel_weights(g: f64, t: f64, p: f64, q: f64, a: f64, kappa: f64, rule: &GaussLegendre) -> (f64, f64) {
    let h = q - p;
    if kappa == 0.0 || t - q < 4.0 * h {
        return linear_panel_weights(g, t, p, q, rule);
    }
    let mut wp = 0.0;
    let mut wq = 0.0;
    for (s, w) in rule.mapped(p, q) {
        let k = w * (t - s).powf(g - 1.0) * (s - a).powf(kappa);
        wp += k * (q - s) / h;
        wq += k * (s - p) / h;
    }
    (wp * (p - a).powf(-kappa), wq * (q - a).powf(-kappa))
}

/// Product-integration weights over the node values of a function on `mesh`
/// such that `int_{t_start}^t (t-s)^{g-1} f(s) ds ~ sum_j w_j f_j`.
/// `g > 0` may exceed one.
pub(crate) fn power_kernel_weights(g: f64, mesh: &IntervalMesh, kappa: f64, t: f64) -> Result<Vec<f64>> {
    let a = mesh.t_start();
    let nodes = mesh.nodes();
    let tol = 1e-12 * (mesh.t_end() - a).abs().max(1.0);
    if !(t > a) || t > mesh.t_end() + tol {
        return Err(Error::Domain(format!("evaluation time {t} outside mesh span ({a}, {}]", mesh.t_end())));
    }
    let t = t.min(mesh.t_end());
    let rule = GaussLegendre::new(8);
    let n = nodes.len();
    let mut w = vec![0.0; n];

    // Leading panel: regular part L(s) = (s-a)^{-kappa} f(s), linear through
    // L(a) (extrapolated) and L(s_0).
    let s0 = nodes[0];
    let h0 = s0 - a;
    // L(a) = c0 * L_0 + c1 * L_1
    let (c0, c1) = if n >= 2 {
        let r = h0 / (nodes[1] - s0);
        (1.0 + r, -r)
    } else {
        (1.0, 0.0)
    };
    // L_j = scale_j f_j
    let scale0 = h0.powf(-kappa);
    let scale1 = if n >= 2 { (nodes[1] - a).powf(-kappa) } else { 0.0 };
    let end0 = t.min(s0);
    // Coefficients of L(a) and L(end0) in the leading-panel integral.
    let (ca, cend) = if kappa == 0.0 {
        linear_panel_weights(g, t, a, end0, &rule)
    } else if t <= s0 {
        // int_a^t (t-s)^{g-1} (s-a)^kappa [L_a + (L_t - L_a)(s-a)/(t-a)] ds
        let len = t - a;
        let b1 = len.powf(g + kappa) * beta_fn(kappa + 1.0, g);
        let b2 = len.powf(g + kappa) * beta_fn(kappa + 2.0, g);
        (b1 - b2, b2)
    } else {
        // Kernel smooth on the panel: linearise (t-s)^{g-1} L(s) instead and
        // integrate (s-a)^kappa exactly.
        let i0 = h0.powf(1.0 + kappa) / (1.0 + kappa);
        let i1 = h0.powf(1.0 + kappa) / (2.0 + kappa);
        let ka = (t - a).powf(g - 1.0);
        let k0 = (t - s0).powf(g - 1.0);
        (ka * (i0 - i1), k0 * i1)
    };
    // L(end0) in terms of L(a), L_0
    let theta = (end0 - a) / h0;
    let coef_a = ca + cend * (1.0 - theta);
    let coef_0 = cend * theta;
    w[0] += (coef_a * c0 + coef_0) * scale0;
    if n >= 2 {
        w[1] += coef_a * c1 * scale1;
    }
    if t <= s0 {
        return Ok(w);
    }

    for j in 0..n - 1 {
        let (p, q) = (nodes[j], nodes[j + 1]);
        if p >= t {
            break;
        }
        if q <= t {
            let (wp, wq) = full_panel_weights(g, t, p, q, a, kappa, &rule);
            w[j] += wp;
            w[j + 1] += wq;
        } else {
            // Partial panel [p, t]; f(t) interpolated between nodes j, j+1.
            let (wp, wt) = linear_panel_weights(g, t, p, t, &rule);
            let th = (t - p) / (q - p);
            w[j] += wp + wt * (1.0 - th);
            w[j + 1] += wt * th;
            break;
        }
    }
    Ok(w)
}

/// `int_{t_start}^t (t-s)^{g-1} f(s) ds` for any order `g > 0`.
pub(crate) fn power_kernel_integral(g: f64, f: &SampledFunction, t: f64) -> Result<DVector<f64>> {
    let w = power_kernel_weights(g, f.mesh(), f.singular_exponent(), t)?;
    Ok(f.apply_weights(&w))
}

/// Riemann-Liouville integral `I^g f(t) = (1/Gamma(g)) int (t-s)^{g-1} f(s) ds`,
/// `g` in `(0, 1]`, taken from the start of `f`'s mesh.
pub fn rl_integral(gamma_ord: f64, f: &SampledFunction, t: f64) -> Result<DVector<f64>> {
    if !(gamma_ord > 0.0 && gamma_ord <= 1.0) {
        return Err(Error::Domain(format!("integral order must lie in (0,1], got {gamma_ord}")));
    }
    Ok(power_kernel_integral(gamma_ord, f, t)? / gamma_unchecked(gamma_ord))
}

/// Riemann-Liouville integral of arbitrary positive order (used for iterated
/// kernels).
pub fn rl_integral_any_order(order: f64, f: &SampledFunction, t: f64) -> Result<DVector<f64>> {
    if !(order > 0.0) || !order.is_finite() {
        return Err(Error::Domain(format!("integral order must be positive, got {order}")));
    }
    Ok(power_kernel_integral(order, f, t)? / gamma_unchecked(order))
}

/// `I^g f` at every node of `f`'s mesh, as a new sampled function.
pub fn rl_integral_sampled(order: f64, f: &SampledFunction) -> Result<SampledFunction> {
    let values = f.mesh().nodes().iter().map(|&t| rl_integral_any_order(order, f, t)).collect::<Result<Vec<_>>>()?;
    SampledFunction::new(f.mesh().clone(), values)
}

/// Weakly singular convolution `int_0^t (t-s)^{mu-1} F(s) ds`.
pub fn singular_convolution(mu: f64, f: &SampledFunction, t: f64) -> Result<DVector<f64>> {
    if !(mu > 0.0 && mu <= 1.0) {
        return Err(Error::Domain(format!("kernel order must lie in (0,1], got {mu}")));
    }
    power_kernel_integral(mu, f, t)
}

/// Same convolution over consecutive pieces (impulse intervals); the pieces'
/// meshes must tile `(t_start of first, t]`.
pub fn singular_convolution_piecewise(mu: f64, pieces: &[SampledFunction], t: f64) -> Result<DVector<f64>> {
    let Some(first) = pieces.first() else {
        return Err(Error::Domain("no pieces supplied".into()));
    };
    let mut acc = DVector::zeros(first.dim());
    for (i, piece) in pieces.iter().enumerate() {
        if i > 0 {
            let prev_end = pieces[i - 1].mesh().t_end();
            if (piece.mesh().t_start() - prev_end).abs() > 1e-12 * prev_end.abs().max(1.0) {
                return Err(Error::Domain("piece meshes must be contiguous".into()));
            }
        }
        let a = piece.mesh().t_start();
        if t <= a {
            break;
        }
        let upper = t.min(piece.mesh().t_end());
        let w = if upper < t {
            // whole piece lies before t
            piece_weights_at(mu, piece, t)?
        } else {
            power_kernel_weights(mu, piece.mesh(), piece.singular_exponent(), t)?
        };
        acc += piece.apply_weights(&w);
    }
    Ok(acc)
}

/// Weights for a piece lying entirely before `t`.
fn piece_weights_at(g: f64, piece: &SampledFunction, t: f64) -> Result<Vec<f64>> {
    let mesh = piece.mesh();
    // Shift: integrate over the full piece with kernel (t-s)^{g-1}, t > t_end.
    let rule = GaussLegendre::new(8);
    let nodes = mesh.nodes();
    let n = nodes.len();
    let a = mesh.t_start();
    let kappa = piece.singular_exponent();
    let mut w = vec![0.0; n];
    let s0 = nodes[0];
    let h0 = s0 - a;
    let (c0, c1) = if n >= 2 {
        let r = h0 / (nodes[1] - s0);
        (1.0 + r, -r)
    } else {
        (1.0, 0.0)
    };
    let scale0 = h0.powf(-kappa);
    let scale1 = if n >= 2 { (nodes[1] - a).powf(-kappa) } else { 0.0 };
    let (ca, c0w) = if kappa == 0.0 {
        linear_panel_weights(g, t, a, s0, &rule)
    } else {
        let i0 = h0.powf(1.0 + kappa) / (1.0 + kappa);
        let i1 = h0.powf(1.0 + kappa) / (2.0 + kappa);
        ((t - a).powf(g - 1.0) * (i0 - i1), (t - s0).powf(g - 1.0) * i1)
    };
    w[0] += (ca * c0 + c0w) * scale0;
    if n >= 2 {
        w[1] += ca * c1 * scale1;
    }
    for j in 0..n - 1 {
        let (wp, wq) = full_panel_weights(g, t, nodes[j], nodes[j + 1], a, kappa, &rule);
        w[j] += wp;
        w[j + 1] += wq;
    }
    Ok(w)
}

/// Convolution value with a Richardson-style error estimate obtained by
/// repeating the computation on every other node.
#[derive(Debug, Clone)]
pub struct CheckedConvolution {
    pub value: DVector<f64>,
    pub error_estimate: f64,
    pub within_budget: bool,
}

pub fn singular_convolution_checked(mu: f64, f: &SampledFunction, t: f64, budget: f64) -> Result<CheckedConvolution> {
    let value = singular_convolution(mu, f, t)?;
    let error_estimate = match f.mesh().coarsened() {
        Some((mesh, idx)) if t >= mesh.nodes()[0] => {
            let coarse = f.restricted(mesh, &idx);
            (singular_convolution(mu, &coarse, t)? - &value).amax()
        }
        _ => f64::INFINITY,
    };
    Ok(CheckedConvolution { value, within_budget: error_estimate <= budget, error_estimate })
}

/// Numerical Hilfer derivative, a diagnostic for lower/upper solutions.
#[derive(Debug, Clone)]
pub struct HilferEstimate {
    pub value: DVector<f64>,
    /// Set when `t` sits within the first two nodes, where differencing a
    /// possibly singular function is unreliable.
    pub ill_conditioned: bool,
}

/// `D^{mu,nu} f = I^{nu(1-mu)} d/dt I^{(1-nu)(1-mu)} f` with three-point
/// differences on the mesh for the inner classical derivative.
pub fn hilfer_derivative(ord: &FractionalOrder, f: &SampledFunction, t: f64) -> Result<HilferEstimate> {
    let mesh = f.mesh();
    if mesh.len() < 3 {
        return Err(Error::Domain("Hilfer derivative needs at least three nodes".into()));
    }
    let inner_order = ord.inner_order();
    let inner = if inner_order > 0.0 { rl_integral_sampled(inner_order, f)? } else { f.clone() };
    let deriv = SampledFunction::new(mesh.clone(), nodal_derivative(&inner))?;
    let outer_order = ord.outer_order();
    let value =
        if outer_order > 0.0 { rl_integral_any_order(outer_order, &deriv, t)? } else { interpolate(&deriv, t)? };
    let ill_conditioned = t < mesh.nodes()[2];
    Ok(HilferEstimate { value, ill_conditioned })
}

/// Hilfer derivative at every node of `f`'s mesh, sharing the inner
/// integral and the differences across nodes.
pub fn hilfer_derivative_sampled(ord: &FractionalOrder, f: &SampledFunction) -> Result<Vec<HilferEstimate>> {
    let mesh = f.mesh();
    if mesh.len() < 3 {
        return Err(Error::Domain("Hilfer derivative needs at least three nodes".into()));
    }
    let inner = if ord.inner_order() > 0.0 { rl_integral_sampled(ord.inner_order(), f)? } else { f.clone() };
    let deriv = SampledFunction::new(mesh.clone(), nodal_derivative(&inner))?;
    let third = mesh.nodes()[2];
    mesh.nodes()
        .iter()
        .enumerate()
        .map(|(j, &t)| {
            let value = if ord.outer_order() > 0.0 {
                rl_integral_any_order(ord.outer_order(), &deriv, t)?
            } else {
                deriv.values()[j].clone()
            };
            Ok(HilferEstimate { value, ill_conditioned: t < third })
        })
        .collect()
}

fn nodal_derivative(f: &SampledFunction) -> Vec<DVector<f64>> {
    let x = f.mesh().nodes();
    let y = f.values();
    let n = x.len();
    let three_point = |i0: usize, i1: usize, i2: usize, at: f64| -> DVector<f64> {
        let (x0, x1, x2) = (x[i0], x[i1], x[i2]);
        let l0 = (2.0 * at - x1 - x2) / ((x0 - x1) * (x0 - x2));
        let l1 = (2.0 * at - x0 - x2) / ((x1 - x0) * (x1 - x2));
        let l2 = (2.0 * at - x0 - x1) / ((x2 - x0) * (x2 - x1));
        &y[i0] * l0 + &y[i1] * l1 + &y[i2] * l2
    };
    (0..n)
        .map(|i| {
            if i == 0 {
                three_point(0, 1, 2, x[0])
            } else if i == n - 1 {
                three_point(n - 3, n - 2, n - 1, x[n - 1])
            } else {
                three_point(i - 1, i, i + 1, x[i])
            }
        })
        .collect()
}

/// Linear interpolation between nodes (constant before the first node).
pub(crate) fn interpolate(f: &SampledFunction, t: f64) -> Result<DVector<f64>> {
    let x = f.mesh().nodes();
    let y = f.values();
    if !(t > f.mesh().t_start()) || t > f.mesh().t_end() * (1.0 + 1e-12) + 1e-300 {
        return Err(Error::Domain(format!("time {t} outside mesh span")));
    }
    if t <= x[0] {
        return Ok(y[0].clone());
    }
    let j = x.partition_point(|&s| s < t).min(x.len() - 1);
    let (p, q) = (x[j - 1], x[j]);
    let th = (t - p) / (q - p);
    Ok(&y[j - 1] * (1.0 - th) + &y[j] * th)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specialfn::gamma_fn;

    fn mesh(n: usize, r: f64) -> IntervalMesh {
        IntervalMesh::graded(0.0, 1.0, n, r).unwrap()
    }

    #[test]
    fn graded_mesh_layout() {
        let m = IntervalMesh::graded(2.0, 3.0, 4, 2.0).unwrap();
        assert_eq!(m.nodes(), &[2.0625, 2.25, 2.5625, 3.0]);
        assert!(IntervalMesh::graded(1.0, 1.0, 4, 2.0).is_err());
        assert!(IntervalMesh::graded(0.0, 1.0, 4, 0.5).is_err());
        assert!(IntervalMesh::from_nodes(0.0, vec![0.0, 1.0]).is_err());
        assert!(IntervalMesh::from_nodes(0.0, vec![0.5, 0.4]).is_err());
    }

    #[test]
    fn plain_integral_of_one() {
        let f = SampledFunction::scalar_from_fn(mesh(16, 1.0), |_| 1.0).unwrap();
        let v = rl_integral(1.0, &f, 1.0).unwrap()[0];
        assert!((v - 1.0).abs() < 1e-14);
    }

    #[test]
    fn half_integral_of_constant_is_exact() {
        let f = SampledFunction::scalar_from_fn(mesh(32, 2.0), |_| 1.0).unwrap();
        for &t in &[0.01, 0.3, 0.77, 1.0] {
            let v = rl_integral(0.5, &f, t).unwrap()[0];
            let exact = t.sqrt() / gamma_fn(1.5).unwrap();
            assert!((v - exact).abs() < 1e-13, "t={t}: {v} vs {exact}");
        }
    }

    #[test]
    fn half_integral_of_identity() {
        // I^g s = s^{1+g} Gamma(2)/Gamma(2+g)
        let f = SampledFunction::scalar_from_fn(mesh(32, 2.0), |s| s).unwrap();
        let v = rl_integral(0.5, &f, 1.0).unwrap()[0];
        let exact = 1.0 / gamma_fn(2.5).unwrap();
        assert!((v - exact).abs() < 1e-13);
        assert!((exact - 0.752_252_778_063_675).abs() < 1e-12);
    }

    #[test]
    fn rl_integral_rejects_bad_inputs() {
        let f = SampledFunction::scalar_from_fn(mesh(8, 1.0), |_| 1.0).unwrap();
        assert!(rl_integral(0.0, &f, 0.5).is_err());
        assert!(rl_integral(1.5, &f, 0.5).is_err());
        assert!(rl_integral(0.5, &f, 0.0).is_err());
        assert!(rl_integral(0.5, &f, 1.5).is_err());
    }

    #[test]
    fn convolution_of_constants() {
        let f = SampledFunction::scalar_from_fn(mesh(8, 2.0), |_| 1.0).unwrap();
        assert!((singular_convolution(0.5, &f, 1.0).unwrap()[0] - 2.0).abs() < 1e-14);
        let k = 3.5;
        let f = SampledFunction::scalar_from_fn(mesh(8, 2.0), |_| k).unwrap();
        for &mu in &[0.2, 0.6, 0.9] {
            let t = 0.7;
            let v = singular_convolution(mu, &f, t).unwrap()[0];
            assert!((v - k * t.powf(mu) / mu).abs() < 1e-13);
        }
    }

    #[test]
    fn declared_singularity_is_integrated_exactly_on_leading_panel() {
        // (1-s)^{-0.4} s^{-0.3} has Beta(0.7, 0.6) as its integral on (0,1).
        let m = IntervalMesh::graded(0.0, 1.0, 1, 1.0).unwrap();
        let f = SampledFunction::scalar_from_fn(m, |s| s.powf(-0.3)).unwrap().with_singular_exponent(-0.3).unwrap();
        let v = singular_convolution(0.6, &f, 1.0).unwrap()[0];
        assert!((v - beta_fn(0.7, 0.6)).abs() < 1e-13);
    }

    #[test]
    fn piecewise_matches_single_mesh_for_smooth_data() {
        let whole = SampledFunction::scalar_from_fn(mesh(64, 1.0), |s| 1.0 + s * s).unwrap();
        let left =
            SampledFunction::scalar_from_fn(IntervalMesh::graded(0.0, 0.5, 32, 1.0).unwrap(), |s| 1.0 + s * s).unwrap();
        let right =
            SampledFunction::scalar_from_fn(IntervalMesh::graded(0.5, 1.0, 32, 1.0).unwrap(), |s| 1.0 + s * s).unwrap();
        let a = singular_convolution(0.4, &whole, 1.0).unwrap()[0];
        let b = singular_convolution_piecewise(0.4, &[left, right], 1.0).unwrap()[0];
        assert!((a - b).abs() < 1e-4, "{a} vs {b}");
    }

    #[test]
    fn checked_convolution_flags_budget() {
        let f = SampledFunction::scalar_from_fn(mesh(64, 2.0), |s| s.sqrt()).unwrap();
        let c = singular_convolution_checked(0.5, &f, 1.0, 1e-14).unwrap();
        assert!(!c.within_budget);
        let c = singular_convolution_checked(0.5, &f, 1.0, 1e-2).unwrap();
        assert!(c.within_budget && c.error_estimate > 0.0);
    }

    #[test]
    fn hilfer_zero_function() {
        let ord = FractionalOrder::new(0.5, 0.3).unwrap();
        let f = SampledFunction::scalar_from_fn(mesh(32, 2.0), |_| 0.0).unwrap();
        let d = hilfer_derivative(&ord, &f, 0.8).unwrap();
        assert_eq!(d.value[0], 0.0);
        assert!(!d.ill_conditioned);
        let early = hilfer_derivative(&ord, &f, f.mesh().nodes()[1]).unwrap();
        assert!(early.ill_conditioned);
    }
}
