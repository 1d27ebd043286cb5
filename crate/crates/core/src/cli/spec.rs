//! TOML problem documents.
//!
//! Parsing fills every default, so a parsed spec renders to a complete
//! document and parses back to an equal value.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::catalog::CatalogEntry;
use super::expr::Expr;
use crate::monotone::{
    default_grading, Discretization, Impulse, ImpulsiveProblem, MildOperator, WeightedTrajectory, DEFAULT_MAX_ITER,
    DEFAULT_TOL,
};
use crate::operators::Generator;
use crate::specialfn::FractionalOrder;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SpecError {
    SpecError::Invalid { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Solve,
    Verify,
    Conditions,
    Gronwall,
    SpecialTable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub x0: Vec<f64>,
    pub horizon: f64,
    #[serde(default = "default_tasks")]
    pub tasks: Vec<Task>,
    pub orders: Orders,
    #[serde(default)]
    pub operator: OperatorSpec,
    pub nonlinearity: MapSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub impulses: Vec<ImpulseSpec>,
    #[serde(default)]
    pub mesh: MeshSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsSpec>,
    #[serde(default)]
    pub conditions: ConditionsSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gronwall: Option<GronwallSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub special: Option<SpecialSpec>,
}

fn default_tasks() -> Vec<Task> {
    vec![Task::Solve]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Orders {
    pub mu: f64,
    pub nu: f64,
}

/// Generator `A` (row-major, zero when omitted) and shift `C`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    #[serde(default)]
    pub a: Vec<Vec<f64>>,
    #[serde(default)]
    pub shift: f64,
}

/// Either one expression per component or a catalog entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

/// Jump at `time`; expressions see `x1..xn` only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSpec {
    pub time: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expr: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default = "default_nodes")]
    pub nodes_per_interval: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grading: Option<f64>,
}

fn default_nodes() -> usize {
    Discretization::DEFAULT_NODES
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self { nodes_per_interval: default_nodes(), grading: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_max_iter() -> usize {
    DEFAULT_MAX_ITER
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// Seeds of the iteration as functions of `t`. With `weighted = true` the
/// expressions give `(t - t_k)^{1-lambda} x(t)` on each interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsSpec {
    pub lower: Vec<String>,
    pub upper: Vec<String>,
    #[serde(default)]
    pub weighted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c_star: Option<f64>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_samples() -> usize {
    1000
}

impl Default for ConditionsSpec {
    fn default() -> Self {
        Self { c_star: None, samples: default_samples(), seed: 0 }
    }
}

/// Bound for `x <= a + b int_0^t (t-s)^{beta-1} x ds` with `a` given in `t`
/// on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GronwallSpec {
    pub forcing: String,
    pub b: f64,
    pub beta: f64,
    #[serde(default = "default_gronwall_nodes")]
    pub nodes: usize,
}

fn default_gronwall_nodes() -> usize {
    128
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Table {
    Ml,
    Xi,
}

impl std::str::FromStr for Table {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ml" => Ok(Table::Ml),
            "xi" => Ok(Table::Xi),
            other => Err(format!("table must be ml or xi, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecialSpec {
    pub table: Table,
    pub mu: f64,
    /// `start:end:points`
    pub range: String,
}

/// `points` equally spaced values from `start` to `end` inclusive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRange {
    pub start: f64,
    pub end: f64,
    pub points: usize,
}

impl SampleRange {
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let step = if self.points > 1 { (self.end - self.start) / (self.points - 1) as f64 } else { 0.0 };
        (0..self.points).map(move |i| if i + 1 == self.points { self.end } else { self.start + step * i as f64 })
    }
}

impl std::str::FromStr for SampleRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, n] = parts.as_slice() else {
            return Err(format!("expected start:end:points, got {s:?}"));
        };
        let start: f64 = a.trim().parse().map_err(|_| format!("bad range start {a:?}"))?;
        let end: f64 = b.trim().parse().map_err(|_| format!("bad range end {b:?}"))?;
        let points: usize = n.trim().parse().map_err(|_| format!("bad point count {n:?}"))?;
        if !start.is_finite() || !end.is_finite() || end < start {
            return Err(format!("range needs finite start <= end, got {start}:{end}"));
        }
        if points == 0 || (points == 1 && end != start) {
            return Err("range needs at least 2 points unless start == end".into());
        }
        Ok(Self { start, end, points })
    }
}

/// CLI-level replacements for spec values.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
    pub mesh_n: Option<usize>,
    pub grading: Option<f64>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

pub fn parse_spec(text: &str) -> Result<ProblemSpec, SpecError> {
    let raw: ProblemSpec = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        SpecError::Syntax { line, column, message: e.message().to_string() }
    })?;
    raw.complete()
}

pub fn render_spec(spec: &ProblemSpec) -> String {
    toml::to_string(spec).expect("spec values are always representable in TOML")
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn finite(path: &str, v: f64) -> Result<f64, SpecError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(path, format!("must be finite, got {v}")))
    }
}

fn complete_params(
    path: &str,
    expr: &Option<Vec<String>>,
    catalog: &Option<String>,
    params: &mut BTreeMap<String, f64>,
) -> Result<(), SpecError> {
    match (expr, catalog) {
        (Some(_), Some(_)) => Err(invalid(path, "give either expr or catalog, not both")),
        (None, None) => Err(invalid(path, "needs expr or catalog")),
        (Some(_), None) if !params.is_empty() => Err(invalid(format!("{path}.params"), "only used with catalog")),
        (Some(_), None) => Ok(()),
        (None, Some(name)) => {
            let entry = CatalogEntry::from_name(name).ok_or_else(|| {
                invalid(
                    format!("{path}.catalog"),
                    format!("unknown entry {name:?}; known: {}", CatalogEntry::NAMES.join(", ")),
                )
            })?;
            let defaults = entry.defaults();
            for (key, value) in params.iter() {
                if !defaults.iter().any(|(k, _)| k == key) {
                    return Err(invalid(format!("{path}.params.{key}"), format!("not a parameter of {name}")));
                }
                finite(&format!("{path}.params.{key}"), *value)?;
            }
            for (k, v) in defaults {
                params.entry(k.to_string()).or_insert(*v);
            }
            if entry == CatalogEntry::Logistic && params["capacity"] == 0.0 {
                return Err(invalid(format!("{path}.params.capacity"), "must be nonzero"));
            }
            Ok(())
        }
    }
}

fn compile_map(
    path: &str,
    expr: &Option<Vec<String>>,
    catalog: &Option<String>,
    params: &BTreeMap<String, f64>,
    dim: usize,
    allow_time: bool,
) -> Result<Vec<Expr>, SpecError> {
    if let Some(srcs) = expr {
        if srcs.len() != dim {
            return Err(invalid(format!("{path}.expr"), format!("expected {dim} expression(s), got {}", srcs.len())));
        }
        return srcs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Expr::parse(s, dim, allow_time).map_err(|e| invalid(format!("{path}.expr[{i}]"), e.to_string()))
            })
            .collect();
    }
    let name = catalog.as_deref().unwrap_or_default();
    let entry = CatalogEntry::from_name(name).ok_or_else(|| invalid(format!("{path}.catalog"), "unknown entry"))?;
    Ok((0..dim).map(|i| entry.expand(params, i)).collect())
}

fn compile_time_exprs(path: &str, srcs: &[String], dim: usize) -> Result<Vec<Expr>, SpecError> {
    if srcs.len() != dim {
        return Err(invalid(path, format!("expected {dim} expression(s), got {}", srcs.len())));
    }
    srcs.iter()
        .enumerate()
        .map(|(i, s)| Expr::parse(s, 0, true).map_err(|e| invalid(format!("{path}[{i}]"), e.to_string())))
        .collect()
}

fn eval_vector(exprs: &[Expr], t: f64, x: &[f64]) -> DVector<f64> {
    DVector::from_iterator(exprs.len(), exprs.iter().map(|e| e.eval(t, x).unwrap_or(f64::NAN)))
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Fills defaults and validates every field. Idempotent.
    pub fn complete(mut self) -> Result<Self, SpecError> {
        let n = self.x0.len();
        if n == 0 {
            return Err(invalid("x0", "must have at least one component"));
        }
        for (i, v) in self.x0.iter().enumerate() {
            finite(&format!("x0[{i}]"), *v)?;
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(invalid("horizon", format!("must be positive and finite, got {}", self.horizon)));
        }
        if self.tasks.is_empty() {
            return Err(invalid("tasks", "must list at least one task"));
        }
        let Orders { mu, nu } = self.orders;
        if !(mu > 0.0 && mu < 1.0) {
            return Err(invalid("orders.mu", format!("must lie in (0, 1), got {mu}")));
        }
        if !(0.0..=1.0).contains(&nu) {
            return Err(invalid("orders.nu", format!("must lie in [0, 1], got {nu}")));
        }
        let order = FractionalOrder::new(mu, nu).map_err(|e| invalid("orders", e.to_string()))?;

        if self.operator.a.is_empty() {
            self.operator.a = vec![vec![0.0; n]; n];
        }
        if self.operator.a.len() != n {
            return Err(invalid("operator.a", format!("expected {n} rows to match x0, got {}", self.operator.a.len())));
        }
        for (i, row) in self.operator.a.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!("operator.a[{i}]"), format!("expected {n} entries, got {}", row.len())));
            }
            for (j, v) in row.iter().enumerate() {
                finite(&format!("operator.a[{i}][{j}]"), *v)?;
            }
        }
        if !(self.operator.shift >= 0.0) || !self.operator.shift.is_finite() {
            return Err(invalid("operator.shift", format!("must be finite and >= 0, got {}", self.operator.shift)));
        }

        let nl = &mut self.nonlinearity;
        complete_params("nonlinearity", &nl.expr, &nl.catalog, &mut nl.params)?;
        compile_map("nonlinearity", &nl.expr, &nl.catalog, &nl.params, n, true)?;

        let mut prev = 0.0;
        for (i, imp) in self.impulses.iter_mut().enumerate() {
            let path = format!("impulses[{i}]");
            if !(imp.time > 0.0 && imp.time < self.horizon) {
                return Err(invalid(
                    format!("{path}.time"),
                    format!("must lie strictly inside (0, {}), got {}", self.horizon, imp.time),
                ));
            }
            if !(imp.time > prev) {
                return Err(invalid(format!("{path}.time"), "impulse times must increase strictly"));
            }
            prev = imp.time;
            complete_params(&path, &imp.expr, &imp.catalog, &mut imp.params)?;
            compile_map(&path, &imp.expr, &imp.catalog, &imp.params, n, false)?;
        }

        if self.mesh.nodes_per_interval < 3 {
            return Err(invalid(
                "mesh.nodes_per_interval",
                format!("must be >= 3, got {}", self.mesh.nodes_per_interval),
            ));
        }
        let grading = *self.mesh.grading.get_or_insert_with(|| default_grading(&order));
        if !(grading >= 1.0) || !grading.is_finite() {
            return Err(invalid("mesh.grading", format!("must be finite and >= 1, got {grading}")));
        }
        if !(self.solver.tol > 0.0) || !self.solver.tol.is_finite() {
            return Err(invalid("solver.tol", format!("must be positive, got {}", self.solver.tol)));
        }
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be >= 1"));
        }

        if let Some(b) = &self.bounds {
            compile_time_exprs("bounds.lower", &b.lower, n)?;
            compile_time_exprs("bounds.upper", &b.upper, n)?;
        }
        for (task, what) in [(Task::Conditions, "conditions"), (Task::Verify, "verify")] {
            if self.tasks.contains(&task) && self.bounds.is_none() {
                return Err(invalid("bounds", format!("required by the {what} task")));
            }
        }
        if let Some(c) = self.conditions.c_star {
            if !(c >= 0.0) || !c.is_finite() {
                return Err(invalid("conditions.c_star", format!("must be finite and >= 0, got {c}")));
            }
        } else if self.tasks.contains(&Task::Conditions) {
            return Err(invalid("conditions.c_star", "required by the conditions task"));
        }
        if self.conditions.samples == 0 {
            return Err(invalid("conditions.samples", "must be >= 1"));
        }

        match &self.gronwall {
            Some(g) => {
                Expr::parse(&g.forcing, 0, true).map_err(|e| invalid("gronwall.forcing", e.to_string()))?;
                if !(g.b >= 0.0) || !g.b.is_finite() {
                    return Err(invalid("gronwall.b", format!("must be finite and >= 0, got {}", g.b)));
                }
                if !(g.beta > 0.0) || !g.beta.is_finite() {
                    return Err(invalid("gronwall.beta", format!("must be positive, got {}", g.beta)));
                }
                if g.nodes < 3 {
                    return Err(invalid("gronwall.nodes", "must be >= 3"));
                }
            }
            None if self.tasks.contains(&Task::Gronwall) => {
                return Err(invalid("gronwall", "required by the gronwall task"));
            }
            None => {}
        }
        match &self.special {
            Some(s) => {
                if !(s.mu > 0.0 && s.mu < 1.0) {
                    return Err(invalid("special.mu", format!("must lie in (0, 1), got {}", s.mu)));
                }
                s.range.parse::<SampleRange>().map_err(|e| invalid("special.range", e))?;
            }
            None if self.tasks.contains(&Task::SpecialTable) => {
                return Err(invalid("special", "required by the special-table task"));
            }
            None => {}
        }
        Ok(self)
    }

    /// Replaces spec values and revalidates.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self, SpecError> {
        if let Some(v) = o.tol {
            self.solver.tol = v;
        }
        if let Some(v) = o.max_iter {
            self.solver.max_iter = v;
        }
        if let Some(v) = o.mesh_n {
            self.mesh.nodes_per_interval = v;
        }
        if let Some(v) = o.grading {
            self.mesh.grading = Some(v);
        }
        if let Some(v) = o.samples {
            self.conditions.samples = v;
        }
        if let Some(v) = o.seed {
            self.conditions.seed = v;
        }
        self.complete()
    }

    pub fn order(&self) -> Result<FractionalOrder, SpecError> {
        FractionalOrder::new(self.orders.mu, self.orders.nu).map_err(|e| invalid("orders", e.to_string()))
    }

    pub fn discretization(&self) -> Result<Discretization, SpecError> {
        let order = self.order()?;
        let grading = self.mesh.grading.unwrap_or_else(|| default_grading(&order));
        Discretization::new(self.mesh.nodes_per_interval, grading).map_err(|e| invalid("mesh", e.to_string()))
    }

    pub fn problem(&self) -> Result<ImpulsiveProblem, SpecError> {
        let n = self.dim();
        let order = self.order()?;
        let a = DMatrix::from_fn(n, n, |i, j| self.operator.a[i][j]);
        let generator = Generator::new(a, self.operator.shift).map_err(|e| invalid("operator", e.to_string()))?;
        let nl = &self.nonlinearity;
        let g = Arc::new(compile_map("nonlinearity", &nl.expr, &nl.catalog, &nl.params, n, true)?);
        let field: crate::monotone::VectorField = Arc::new(move |t, x: &DVector<f64>| eval_vector(&g, t, x.as_slice()));
        let mut impulses = Vec::with_capacity(self.impulses.len());
        for (i, imp) in self.impulses.iter().enumerate() {
            let path = format!("impulses[{i}]");
            let map = Arc::new(compile_map(&path, &imp.expr, &imp.catalog, &imp.params, n, false)?);
            let time = imp.time;
            impulses
                .push(Impulse { time, jump: Arc::new(move |x: &DVector<f64>| eval_vector(&map, time, x.as_slice())) });
        }
        ImpulsiveProblem::new(order, generator, field, impulses, DVector::from_column_slice(&self.x0), self.horizon)
            .map_err(|e| invalid("problem", e.to_string()))
    }

    /// Lower and upper seeds on the operator's meshes.
    pub fn seeds(&self, op: &MildOperator) -> Result<Option<(WeightedTrajectory, WeightedTrajectory)>, SpecError> {
        let Some(b) = &self.bounds else {
            return Ok(None);
        };
        let n = self.dim();
        let lower = compile_time_exprs("bounds.lower", &b.lower, n)?;
        let upper = compile_time_exprs("bounds.upper", &b.upper, n)?;
        let build = |exprs: &[Expr], path: &str| {
            let traj = if b.weighted {
                op.trajectory_from_weighted(|_, t| eval_vector(exprs, t, &[]))
            } else {
                op.trajectory_from_raw(|t| eval_vector(exprs, t, &[]))
            };
            traj.map_err(|e| invalid(path, e.to_string()))
        };
        Ok(Some((build(&lower, "bounds.lower")?, build(&upper, "bounds.upper")?)))
    }

    pub fn gronwall_forcing(&self) -> Option<Expr> {
        self.gronwall.as_ref().and_then(|g| Expr::parse(&g.forcing, 0, true).ok())
    }
}
