//! The mild-solution operator on a fixed discretization.
//!
//! On interval `k` the weighted forcing `(s - t_k)^{1-lambda} [g(s, x) + C x]`
//! is interpolated linearly between nodes (constant on the leading panel).
//! Every output node gets precomputed matrix weights for the convolution,
//! the initial term and each earlier jump, so one application costs a dense
//! matrix-vector sweep. The kernel `E_{mu,mu}(-X u)` is smooth in
//! `u = (t - s)^mu`, so it is tabulated once as a Chebyshev expansion; the
//! endpoint singularities are removed by the substitutions `v = (t - s)^mu`
//! and `sigma = (s - t_k)^lambda`. All weights are nonnegative whenever the
//! kernel is, which keeps the discrete operator order preserving.

use nalgebra::{DMatrix, DVector};

use super::{Discretization, ImpulsiveProblem, WeightedTrajectory};
use crate::error::{Error, Result};
use crate::fracquad::IntervalMesh;
use crate::gauss::GaussLegendre;
use crate::operators::{Backend, OperatorFamily};
use crate::par;

const MAX_CHEB_POINTS: usize = 1024;
const CHEB_TAIL_TOL: f64 = 1e-13;
const GEOMETRIC_LEVELS: i32 = 14;
const MAX_SPLIT_DEPTH: u32 = 60;

/// Entrywise Chebyshev expansion of `u -> E_{mu,beta}(-X u)` on `[0, hi]`.
#[derive(Debug, Clone)]
struct KernelTable {
    entries: usize,
    hi: f64,
    len: usize,
    coeffs: Vec<f64>,
}

impl KernelTable {
    fn fit(family: &OperatorFamily, beta: f64, hi: f64) -> Result<Self> {
        let n = family.dim();
        let entries = n * n;
        let mut len = 16;
        loop {
            let samples: Vec<DMatrix<f64>> = (0..len)
                .map(|j| {
                    let x = (std::f64::consts::PI * (j as f64 + 0.5) / len as f64).cos();
                    family.mittag_leffler_at(beta, 0.5 * hi * (x + 1.0))
                })
                .collect::<Result<_>>()?;
            let mut coeffs = vec![0.0; entries * len];
            for e in 0..entries {
                let (r, c) = (e / n, e % n);
                for k in 0..len {
                    let mut acc = 0.0;
                    for (j, m) in samples.iter().enumerate() {
                        acc += m[(r, c)] * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / len as f64).cos();
                    }
                    coeffs[e * len + k] = acc * 2.0 / len as f64;
                }
                coeffs[e * len] *= 0.5;
            }
            let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs())).max(f64::MIN_POSITIVE);
            let tail = (0..entries)
                .flat_map(|e| coeffs[e * len + len - 4..(e + 1) * len].iter())
                .fold(0.0_f64, |m, c| m.max(c.abs()));
            if tail <= CHEB_TAIL_TOL * scale {
                return Ok(Self { entries, hi, len, coeffs });
            }
            if len >= MAX_CHEB_POINTS {
                return Err(Error::NonConvergence { what: "kernel Chebyshev table", terms: len });
            }
            len *= 2;
        }
    }

    fn eval_into(&self, u: f64, out: &mut [f64]) {
        let x = (2.0 * u / self.hi - 1.0).clamp(-1.0, 1.0);
        for (e, o) in out.iter_mut().enumerate().take(self.entries) {
            let c = &self.coeffs[e * self.len..(e + 1) * self.len];
            let (mut b1, mut b2) = (0.0, 0.0);
            for &ck in c[1..].iter().rev() {
                let b0 = 2.0 * x * b1 - b2 + ck;
                b2 = b1;
                b1 = b0;
            }
            *o = x * b1 - b2 + c[0];
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Point {
    s: f64,
    /// `(t - s)^mu`
    u: f64,
    w: f64,
}

/// Quadrature for `int_p^q f(s) (t-s)^{mu-1} (s-a)^{lambda-1} ds`.
struct PanelRule {
    mu: f64,
    lambda: f64,
    gl: GaussLegendre,
}

impl PanelRule {
    fn push(&self, t: f64, a: f64, p: f64, q: f64, depth: u32, out: &mut Vec<Point>) {
        let h = q - p;
        let singular_start = self.lambda < 1.0;
        let at_t = q >= t;
        let at_a = singular_start && p <= a;
        let split = depth < MAX_SPLIT_DEPTH
            && match (at_t, at_a) {
                (true, true) => true,
                (true, false) => singular_start && p - a < h,
                (false, true) => t - q < h,
                (false, false) => t - q < h || (singular_start && p - a < h),
            };
        if split {
            let m = 0.5 * (p + q);
            self.push(t, a, p, m, depth + 1, out);
            self.push(t, a, m, q, depth + 1, out);
        } else if at_t {
            self.toward_t(t, a, p, out);
        } else if at_a {
            self.toward_a(t, a, q, out);
        } else {
            for (s, gw) in self.gl.mapped(p, q) {
                let d = t - s;
                let u = d.powf(self.mu);
                out.push(Point { s, u, w: gw * u / d * self.start_factor(s - a) });
            }
        }
    }

    fn start_factor(&self, d: f64) -> f64 {
        if self.lambda == 1.0 {
            1.0
        } else {
            d.powf(self.lambda - 1.0)
        }
    }

    /// Geometric pieces in `v = (t - s)^mu` towards `v = 0`.
    fn toward_t(&self, t: f64, a: f64, p: f64, out: &mut Vec<Point>) {
        let top = (t - p).powf(self.mu);
        for (lo, hi) in geometric_pieces(top) {
            for (v, gw) in self.gl.mapped(lo, hi) {
                let s = t - v.powf(1.0 / self.mu);
                out.push(Point { s, u: v, w: gw / self.mu * self.start_factor(s - a) });
            }
        }
    }

    /// Geometric pieces in `sigma = (s - a)^lambda` towards `sigma = 0`.
    fn toward_a(&self, t: f64, a: f64, q: f64, out: &mut Vec<Point>) {
        let top = (q - a).powf(self.lambda);
        for (lo, hi) in geometric_pieces(top) {
            for (sig, gw) in self.gl.mapped(lo, hi) {
                let s = a + sig.powf(1.0 / self.lambda);
                let d = t - s;
                let u = d.powf(self.mu);
                out.push(Point { s, u, w: gw / self.lambda * u / d });
            }
        }
    }
}

fn geometric_pieces(top: f64) -> impl Iterator<Item = (f64, f64)> {
    (0..=GEOMETRIC_LEVELS).map(move |l| {
        let hi = top * 2f64.powi(-l);
        let lo = if l == GEOMETRIC_LEVELS { 0.0 } else { 0.5 * hi };
        (lo, hi)
    })
}

/// Precomputed weights for one output node, all multiplied by the output
/// weight `(t - t_k)^{1-lambda}`. Blocks are row-major `n x n`.
#[derive(Debug, Clone)]
struct Row {
    initial: Vec<f64>,
    jumps: Vec<f64>,
    convolution: Vec<f64>,
}

/// `x -> S(t) x0 + sum_{t_i < t} S(t - t_i) phi_i(x(t_i))
///        + int_0^t (t-s)^{mu-1} P(t-s) [g(s, x(s)) + C x(s)] ds`
/// on a fixed set of interval meshes.
#[derive(Debug, Clone)]
pub struct MildOperator {
    problem: ImpulsiveProblem,
    discretization: Discretization,
    family: OperatorFamily,
    meshes: Vec<IntervalMesh>,
    offsets: Vec<usize>,
    rows: Vec<Row>,
}

impl MildOperator {
    pub fn new(problem: &ImpulsiveProblem, discretization: Discretization) -> Result<Self> {
        let ord = *problem.order();
        let family = OperatorFamily::new(ord, problem.generator().clone(), Backend::ClosedForm, problem.horizon())?;
        let meshes = problem.meshes(&discretization)?;
        let mut offsets = Vec::with_capacity(meshes.len() + 1);
        let mut total = 0;
        for m in &meshes {
            offsets.push(total);
            total += m.len();
        }
        offsets.push(total);

        let hi = problem.horizon().powf(ord.mu());
        let conv_table = KernelTable::fit(&family, ord.mu(), hi)?;
        let s_table =
            if ord.lambda() == ord.mu() { conv_table.clone() } else { KernelTable::fit(&family, ord.lambda(), hi)? };
        let mut node_index = Vec::with_capacity(total);
        for (k, m) in meshes.iter().enumerate() {
            node_index.extend((0..m.len()).map(|j| (k, j)));
        }
        let builder = RowBuilder {
            problem,
            meshes: &meshes,
            offsets: &offsets,
            conv_table: &conv_table,
            s_table: &s_table,
            rule: PanelRule { mu: ord.mu(), lambda: ord.lambda(), gl: GaussLegendre::new(8) },
        };
        let rows = par::map_indices(total, |i| builder.row(node_index[i].0, node_index[i].1));
        Ok(Self { problem: problem.clone(), discretization, family, meshes, offsets, rows })
    }

    pub fn problem(&self) -> &ImpulsiveProblem {
        &self.problem
    }

    pub fn discretization(&self) -> Discretization {
        self.discretization
    }

    /// Closed-form operator family of `X = A + C I`, including the bound
    /// constant `M*`.
    pub fn family(&self) -> &OperatorFamily {
        &self.family
    }

    pub fn meshes(&self) -> &[IntervalMesh] {
        &self.meshes
    }

    pub fn lambda(&self) -> f64 {
        self.problem.order().lambda()
    }

    pub fn dim(&self) -> usize {
        self.problem.dim()
    }

    pub fn node_count(&self) -> usize {
        self.rows.len()
    }

    /// Trajectory on this operator's grid from raw values `x(t)`.
    pub fn trajectory_from_raw<F: FnMut(f64) -> DVector<f64>>(&self, f: F) -> Result<WeightedTrajectory> {
        WeightedTrajectory::from_raw_fn(self.lambda(), self.meshes.clone(), f)
    }

    /// Trajectory on this operator's grid from weighted values
    /// `(t - t_k)^{1-lambda} x(t)` given as `f(k, t)`.
    pub fn trajectory_from_weighted<F: FnMut(usize, f64) -> DVector<f64>>(&self, f: F) -> Result<WeightedTrajectory> {
        WeightedTrajectory::from_weighted_fn(self.lambda(), self.meshes.clone(), f)
    }

    pub fn apply(&self, x: &WeightedTrajectory) -> Result<WeightedTrajectory> {
        let n = self.dim();
        if x.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.dim() });
        }
        if x.lambda() != self.lambda() || x.meshes() != self.meshes.as_slice() {
            return Err(Error::Domain("trajectory is not on the operator's grid".into()));
        }
        let lambda = self.lambda();
        let shift = self.problem.generator().shift();
        let mut forcing = Vec::with_capacity(self.rows.len() * n);
        for (k, mesh) in self.meshes.iter().enumerate() {
            let a = mesh.t_start();
            for (&s, w) in mesh.nodes().iter().zip(x.weighted(k)) {
                let d = s - a;
                let raw = w * d.powf(lambda - 1.0);
                let g = self.problem.nonlinearity(s, &raw);
                check_output(&g, n, "nonlinearity")?;
                let factor = d.powf(1.0 - lambda);
                forcing.extend(g.iter().zip(w.iter()).map(|(gv, wv)| factor * gv + shift * wv));
            }
        }
        let mut jumps = Vec::with_capacity(self.problem.impulses().len() * n);
        for (i, imp) in self.problem.impulses().iter().enumerate() {
            let v = (imp.jump)(&x.left_limit_at_end(i));
            check_output(&v, n, "jump map")?;
            jumps.extend(v.iter());
        }
        let x0 = self.problem.initial().as_slice();

        let values = par::map_indices(self.rows.len(), |i| {
            let row = &self.rows[i];
            let mut out = vec![0.0; n];
            block_sweep(&row.initial, x0, n, &mut out);
            block_sweep(&row.jumps, &jumps[..row.jumps.len() / n], n, &mut out);
            block_sweep(&row.convolution, &forcing[..row.convolution.len() / n], n, &mut out);
            DVector::from_vec(out)
        });
        let mut weighted = Vec::with_capacity(self.meshes.len());
        for (k, _) in self.meshes.iter().enumerate() {
            weighted.push(values[self.offsets[k]..self.offsets[k + 1]].to_vec());
        }
        WeightedTrajectory::new(lambda, self.meshes.clone(), weighted)
    }
}

fn check_output(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("{what} returned a non-finite value")));
    }
    Ok(())
}

/// `out += sum_b blocks[b] * inputs[b*n..(b+1)*n]`.
fn block_sweep(blocks: &[f64], inputs: &[f64], n: usize, out: &mut [f64]) {
    let nn = n * n;
    for (blk, inp) in blocks.chunks_exact(nn).zip(inputs.chunks_exact(n)) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &blk[r * n..(r + 1) * n];
            *o += row.iter().zip(inp).map(|(a, b)| a * b).sum::<f64>();
        }
    }
}

struct RowBuilder<'a> {
    problem: &'a ImpulsiveProblem,
    meshes: &'a [IntervalMesh],
    offsets: &'a [usize],
    conv_table: &'a KernelTable,
    s_table: &'a KernelTable,
    rule: PanelRule,
}

impl RowBuilder<'_> {
    fn row(&self, k: usize, j: usize) -> Row {
        let n = self.problem.dim();
        let nn = n * n;
        let ord = self.problem.order();
        let (mu, lambda) = (ord.mu(), ord.lambda());
        let mesh = &self.meshes[k];
        let t = mesh.nodes()[j];
        let omega = (t - mesh.t_start()).powf(1.0 - lambda);
        let mut kbuf = vec![0.0; nn];

        // S(tau) = tau^{lambda-1} E_{mu,lambda}(-X tau^mu), scaled by omega;
        // when tau is the distance to the current interval start the two
        // powers cancel exactly.
        let propagator = |tau: f64, exact_cancel: bool, out: &mut [f64]| {
            self.s_table.eval_into(tau.powf(mu), out);
            if !exact_cancel {
                let f = omega * tau.powf(lambda - 1.0);
                out.iter_mut().for_each(|v| *v *= f);
            }
        };

        let mut initial = vec![0.0; nn];
        propagator(t, k == 0, &mut initial);
        let mut jumps = vec![0.0; k * nn];
        for (i, imp) in self.problem.impulses().iter().take(k).enumerate() {
            propagator(t - imp.time, i + 1 == k, &mut jumps[i * nn..(i + 1) * nn]);
        }

        let mut conv = vec![0.0; (self.offsets[k] + j + 1) * nn];
        let mut pts = Vec::new();
        for (kap, m) in self.meshes.iter().enumerate().take(k + 1) {
            let a = m.t_start();
            let nodes = m.nodes();
            let base = self.offsets[kap];
            let last = if kap == k { j } else { nodes.len() - 1 };
            pts.clear();
            self.rule.push(t, a, a, nodes[0], 0, &mut pts);
            for p in &pts {
                self.conv_table.eval_into(p.u, &mut kbuf);
                axpy(&mut conv[base * nn..(base + 1) * nn], p.w, &kbuf);
            }
            for idx in 0..last {
                let (p0, q0) = (nodes[idx], nodes[idx + 1]);
                let h = q0 - p0;
                pts.clear();
                self.rule.push(t, a, p0, q0, 0, &mut pts);
                let blk = &mut conv[(base + idx) * nn..(base + idx + 2) * nn];
                let (left, right) = blk.split_at_mut(nn);
                for p in &pts {
                    self.conv_table.eval_into(p.u, &mut kbuf);
                    axpy(left, p.w * (q0 - p.s) / h, &kbuf);
                    axpy(right, p.w * (p.s - p0) / h, &kbuf);
                }
            }
        }
        conv.iter_mut().for_each(|v| *v *= omega);
        Row { initial, jumps, convolution: conv }
    }
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
