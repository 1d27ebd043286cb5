#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! WebAssembly bindings behind `www/index.html`.
//!
//! Each operation has a plain Rust function returning [`DemoError`] and a
//! `#[wasm_bindgen]` export that turns the error into a JS exception.

use std::sync::Arc;

use hilfer_core::fracquad::{IntervalMesh, SampledFunction};
use hilfer_core::gronwall::{ml_kernel_bound, GronwallData};
use hilfer_core::monotone::{iterate_extremal, Discretization, Impulse, ImpulsiveProblem, MildOperator};
use hilfer_core::operators::Generator;
use hilfer_core::specialfn::{gamma_fn, mittag_leffler, xi_density, FractionalOrder, SeriesControl};
use nalgebra::DVector;
use thiserror::Error;
use wasm_bindgen::prelude::*;

pub const MAX_POINTS: usize = 2000;
pub const MAX_NODES: usize = 256;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error(transparent)]
    Numerics(#[from] hilfer_core::Error),
    #[error("{0}")]
    Input(String),
}

/// Abscissae with one or more value columns of the same length.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct Curves {
    x: Vec<f64>,
    columns: Vec<Vec<f64>>,
}

#[wasm_bindgen]
impl Curves {
    pub fn x(&self) -> Vec<f64> {
        self.x.clone()
    }

    pub fn column(&self, i: usize) -> Vec<f64> {
        self.columns.get(i).cloned().unwrap_or_default()
    }

    #[wasm_bindgen(js_name = columnCount)]
    pub fn column_count(&self) -> usize {
        self.columns.len()
    }
}

impl Curves {
    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }
}

/// Lower and upper extremal solutions with the iteration history.
#[wasm_bindgen]
#[derive(Debug, Clone)]
pub struct EnclosureView {
    curves: Curves,
    iterations: usize,
    gap: f64,
    lower_steps: Vec<f64>,
    upper_steps: Vec<f64>,
}

#[wasm_bindgen]
impl EnclosureView {
    pub fn t(&self) -> Vec<f64> {
        self.curves.x()
    }

    pub fn lower(&self) -> Vec<f64> {
        self.curves.column(0)
    }

    pub fn upper(&self) -> Vec<f64> {
        self.curves.column(1)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    #[wasm_bindgen(js_name = lowerSteps)]
    pub fn lower_steps(&self) -> Vec<f64> {
        self.lower_steps.clone()
    }

    #[wasm_bindgen(js_name = upperSteps)]
    pub fn upper_steps(&self) -> Vec<f64> {
        self.upper_steps.clone()
    }
}

fn grid(end: f64, points: usize) -> Result<Vec<f64>, DemoError> {
    if !(2..=MAX_POINTS).contains(&points) {
        return Err(DemoError::Input(format!("points must be in 2..={MAX_POINTS}, got {points}")));
    }
    if !(end > 0.0) || !end.is_finite() {
        return Err(DemoError::Input(format!("range end must be positive, got {end}")));
    }
    Ok((0..points).map(|i| end * i as f64 / (points - 1) as f64).collect())
}

/// `E_{mu,1}(-x)`, `E_{mu,mu}(-x)` and the density `xi_mu(x)` on `[0, x_max]`.
pub fn special_curves(mu: f64, x_max: f64, points: usize) -> Result<Curves, DemoError> {
    if !(mu > 0.0 && mu < 1.0) {
        return Err(DemoError::Input(format!("mu must lie in (0, 1), got {mu}")));
    }
    let ctl = SeriesControl::default();
    let x = grid(x_max, points)?;
    let mut columns: Vec<Vec<f64>> = (0..3).map(|_| Vec::with_capacity(points)).collect();
    for &v in &x {
        columns[0].push(mittag_leffler(mu, 1.0, -v, &ctl)?);
        columns[1].push(mittag_leffler(mu, mu, -v, &ctl)?);
        columns[2].push(if v == 0.0 { 1.0 / gamma_fn(1.0 - mu)? } else { xi_density(mu, v, &ctl)? });
    }
    Ok(Curves { x, columns })
}

/// Monotone iteration for the Caputo-type problem `D^mu x = x (1 - x)` on
/// `(0, 1]` with `x(0) = x0` and `x(t+) = keep * x(t)` at `jump_time`.
/// Seeds are the constants 0 and 1, and the shift is 1.
pub fn logistic_enclosure(
    mu: f64,
    x0: f64,
    keep: f64,
    jump_time: f64,
    nodes: usize,
) -> Result<EnclosureView, DemoError> {
    if !(0.0..=1.0).contains(&x0) {
        return Err(DemoError::Input(format!("initial value must lie in [0, 1], got {x0}")));
    }
    if !(0.0..=1.0).contains(&keep) {
        return Err(DemoError::Input(format!("kept fraction must lie in [0, 1], got {keep}")));
    }
    if !(8..=MAX_NODES).contains(&nodes) {
        return Err(DemoError::Input(format!("nodes must be in 8..={MAX_NODES}, got {nodes}")));
    }
    let ord = FractionalOrder::caputo(mu)?;
    let g = Arc::new(|_: f64, x: &DVector<f64>| x.map(|v| v * (1.0 - v)));
    let jump = Impulse { time: jump_time, jump: Arc::new(move |x: &DVector<f64>| x * (keep - 1.0)) };
    let problem =
        ImpulsiveProblem::new(ord, Generator::scalar(0.0, 1.0)?, g, vec![jump], DVector::from_element(1, x0), 1.0)?;
    let op = MildOperator::new(&problem, Discretization::default_for(&ord).with_nodes(nodes))?;
    let lower = op.trajectory_from_raw(|_| DVector::zeros(1))?;
    let upper = op.trajectory_from_raw(|_| DVector::from_element(1, 1.0))?;
    let enc = iterate_extremal(&op, &lower, &upper, 1e-8, 200)?;
    let mut curves = Curves { x: Vec::new(), columns: vec![Vec::new(), Vec::new()] };
    for (k, j, t, _) in enc.lower.iter() {
        curves.x.push(t);
        curves.columns[0].push(enc.lower.raw(k, j)[0]);
        curves.columns[1].push(enc.upper.raw(k, j)[0]);
    }
    Ok(EnclosureView {
        curves,
        iterations: enc.report.iterations,
        gap: enc.report.uniqueness_gap,
        lower_steps: enc.report.lower_steps,
        upper_steps: enc.report.upper_steps,
    })
}

/// Gronwall bound for the constant forcing `a` next to the closed form
/// `a E_beta(b Gamma(beta) t^beta)`, on `points` uniform times in `(0, horizon]`.
pub fn gronwall_curve(a: f64, b: f64, beta: f64, horizon: f64, points: usize) -> Result<Curves, DemoError> {
    grid(horizon, points)?;
    let mesh = IntervalMesh::graded(0.0, horizon, points, 1.0)?;
    let x = mesh.nodes().to_vec();
    let forcing = SampledFunction::scalar_from_fn(mesh, |_| a)?;
    let data = GronwallData::new(forcing, b, beta)?;
    let ctl = SeriesControl::default();
    let rate = b * gamma_fn(beta)?;
    let mut columns: Vec<Vec<f64>> = (0..2).map(|_| Vec::with_capacity(points)).collect();
    for &t in &x {
        columns[0].push(ml_kernel_bound(&data, t, &ctl)?);
        columns[1].push(a * mittag_leffler(beta, 1.0, rate * t.powf(beta), &ctl)?);
    }
    Ok(Curves { x, columns })
}

#[wasm_bindgen(js_name = specialCurves)]
pub fn special_curves_js(mu: f64, x_max: f64, points: usize) -> Result<Curves, JsError> {
    special_curves(mu, x_max, points).map_err(JsError::from)
}

#[wasm_bindgen(js_name = logisticEnclosure)]
pub fn logistic_enclosure_js(
    mu: f64,
    x0: f64,
    keep: f64,
    jump_time: f64,
    nodes: usize,
) -> Result<EnclosureView, JsError> {
    logistic_enclosure(mu, x0, keep, jump_time, nodes).map_err(JsError::from)
}

#[wasm_bindgen(js_name = gronwallCurve)]
pub fn gronwall_curve_js(a: f64, b: f64, beta: f64, horizon: f64, points: usize) -> Result<Curves, JsError> {
    gronwall_curve(a, b, beta, horizon, points).map_err(JsError::from)
}
