use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

use super::spec::{ProblemSpec, SampleRange, SpecError, Table, Task};
use crate::fracquad::{IntervalMesh, SampledFunction};
use crate::gronwall::{ml_kernel_bound, GronwallData};
use crate::monotone::{
    check_conditions, iterate_extremal, uniqueness_certificate, verify_lower_upper, ConditionReport, EnclosureReport,
    MildOperator, Side, SolutionCheck, UniquenessReport, WeightedTrajectory,
};
use crate::specialfn::{mittag_leffler, xi_density, SeriesControl};

pub const SOLUTION_FILE: &str = "solution.csv";
pub const REPORT_FILE: &str = "report.json";
pub const REPORT_FORMAT_VERSION: u32 = 1;

/// Rows with `t - t_k` below this fraction of the interval length carry
/// weighted values when `lambda < 1`.
pub const WEIGHTED_ZONE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Numerics(#[from] crate::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Input(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    ConditionFailure,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Error => 1,
            Status::ConditionFailure => 2,
        }
    }

    fn worsen(&mut self, other: Status) {
        if other.exit_code() != 0 && *self != Status::Error {
            *self = other;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSummary {
    pub dimension: usize,
    pub mu: f64,
    pub nu: f64,
    pub lambda: f64,
    pub horizon: f64,
    pub shift: f64,
    pub impulse_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshSummary {
    pub nodes_per_interval: usize,
    pub grading: f64,
    pub intervals: usize,
    pub total_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSummary {
    pub tol: f64,
    pub max_iter: usize,
    /// Whether the chains started from the spec's bounds or both from `G(0)`.
    pub seeded_from_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedChecks {
    pub lower: SolutionCheck,
    pub upper: SolutionCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GronwallSummary {
    pub b: f64,
    pub beta: f64,
    pub nodes: usize,
    pub max_bound: f64,
    pub file: String,
}

/// Contents of `report.json`. Field names are stable; absent sections are
/// `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub format_version: u32,
    pub status: Status,
    pub tasks: Vec<Task>,
    pub problem: ProblemSummary,
    pub mesh: MeshSummary,
    pub solver: SolverSummary,
    pub bound_constant: Option<f64>,
    pub enclosure: Option<EnclosureReport>,
    pub uniqueness: Option<UniquenessReport>,
    pub seeds: Option<SeedChecks>,
    pub conditions: Option<ConditionReport>,
    pub gronwall: Option<GronwallSummary>,
    pub special_table: Option<String>,
    pub messages: Vec<String>,
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let target = dir.join(name);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(&target))?;
    tmp.as_file().sync_all().map_err(io_err(&target))?;
    tmp.persist(&target).map_err(|e| CliError::Io { path: target.clone(), source: e.error })?;
    Ok(())
}

fn fmt_num(v: f64) -> String {
    format!("{v:?}")
}

fn weighted_row(lambda: f64, mesh: &IntervalMesh, t: f64) -> bool {
    lambda < 1.0 && t - mesh.t_start() < WEIGHTED_ZONE * (mesh.t_end() - mesh.t_start())
}

/// `interval_index,t,weighted,lower_x_1..,upper_x_1..`.
pub fn solution_csv(lower: &WeightedTrajectory, upper: &WeightedTrajectory) -> Result<String, CliError> {
    let n = lower.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["interval_index".to_string(), "t".into(), "weighted".into()];
    header.extend((1..=n).map(|i| format!("lower_x_{i}")));
    header.extend((1..=n).map(|i| format!("upper_x_{i}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, mesh) in lower.meshes().iter().enumerate() {
        for (j, &t) in mesh.nodes().iter().enumerate() {
            let weighted = weighted_row(lower.lambda(), mesh, t);
            let pick = |x: &WeightedTrajectory| if weighted { x.weighted(k)[j].clone() } else { x.raw(k, j) };
            let mut rec = vec![k.to_string(), fmt_num(t), u8::from(weighted).to_string()];
            rec.extend(pick(lower).iter().copied().map(fmt_num));
            rec.extend(pick(upper).iter().copied().map(fmt_num));
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Input(format!("CSV: {e}"))
}

/// Reads a trajectory on `op`'s meshes. Value columns are `x_1..x_n`, or
/// `lower_x_i` / `upper_x_i` as written by [`solution_csv`] (picked by `side`).
pub fn read_candidate(op: &MildOperator, text: &str, side: Side) -> Result<WeightedTrajectory, CliError> {
    let n = op.dim();
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let need = |name: &str| col(name).ok_or_else(|| CliError::Input(format!("candidate CSV lacks column {name:?}")));
    let (ci, ct, cw) = (need("interval_index")?, need("t")?, need("weighted")?);
    let prefix = match side {
        Side::Lower => "lower_",
        Side::Upper => "upper_",
    };
    let value_cols: Vec<usize> = (1..=n)
        .map(|i| col(&format!("x_{i}")).or_else(|| col(&format!("{prefix}x_{i}"))))
        .collect::<Option<_>>()
        .ok_or_else(|| {
            CliError::Input(format!("candidate CSV needs columns x_1..x_{n} or {prefix}x_1..{prefix}x_{n}"))
        })?;

    let lambda = op.lambda();
    let mut weighted: Vec<Vec<DVector<f64>>> = op.meshes().iter().map(|m| Vec::with_capacity(m.len())).collect();
    let mut cursor = (0usize, 0usize);
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = row + 2;
        let num = |c: usize| -> Result<f64, CliError> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse().map_err(|_| CliError::Input(format!("line {line}: cannot read {s:?} as a number")))
        };
        let k: usize = rec
            .get(ci)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| CliError::Input(format!("line {line}: bad interval_index")))?;
        let (ek, ej) = cursor;
        let Some(mesh) = op.meshes().get(ek) else {
            return Err(CliError::Input(format!("line {line}: more rows than mesh nodes")));
        };
        let node = mesh.nodes()[ej];
        let t = num(ct)?;
        if k != ek || (t - node).abs() > 1e-9 * op.problem().horizon() {
            return Err(CliError::Input(format!(
                "line {line}: expected interval {ek} at t = {node}, found interval {k} at t = {t}; \
                 candidates must be sampled on the spec's mesh"
            )));
        }
        let flag = num(cw)? != 0.0;
        let vals = DVector::from_iterator(n, value_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>, _>>()?);
        let w = if flag { vals } else { vals * (node - mesh.t_start()).powf(1.0 - lambda) };
        weighted[ek].push(w);
        cursor = if ej + 1 == mesh.len() { (ek + 1, 0) } else { (ek, ej + 1) };
    }
    if cursor.0 != op.meshes().len() {
        return Err(CliError::Input(format!("candidate has too few rows; stopped in interval {}", cursor.0)));
    }
    Ok(WeightedTrajectory::new(lambda, op.meshes().to_vec(), weighted)?)
}

/// Builds the mild operator for a validated spec.
pub fn operator_for(spec: &ProblemSpec) -> Result<MildOperator, CliError> {
    Ok(MildOperator::new(&spec.problem()?, spec.discretization()?)?)
}

fn seeds_required(spec: &ProblemSpec, op: &MildOperator) -> Result<(WeightedTrajectory, WeightedTrajectory), CliError> {
    spec.seeds(op)?.ok_or_else(|| CliError::Input("the spec has no [bounds] section".into()))
}

pub fn verify_candidate(spec: &ProblemSpec, side: Side, candidate_csv: &str) -> Result<SolutionCheck, CliError> {
    let op = operator_for(spec)?;
    let candidate = read_candidate(&op, candidate_csv, side)?;
    Ok(verify_lower_upper(&op, &candidate, side, 10.0 * spec.solver.tol)?)
}

/// Condition margins over the spec's order interval.
pub fn conditions_report(spec: &ProblemSpec) -> Result<ConditionReport, CliError> {
    let c_star = spec
        .conditions
        .c_star
        .ok_or_else(|| CliError::Input("conditions.c_star is required for condition sampling".into()))?;
    let op = operator_for(spec)?;
    let (y0, z0) = seeds_required(spec, &op)?;
    let c = spec.operator.shift;
    Ok(check_conditions(op.problem(), &y0, &z0, c, c_star, spec.conditions.samples, spec.conditions.seed)?)
}

/// Rows `t,a,bound` for forcing samples read from `t,a` CSV text.
pub fn gronwall_table(forcing_csv: &str, b: f64, beta: f64) -> Result<String, CliError> {
    let mut r = csv::Reader::from_reader(forcing_csv.as_bytes());
    let header = r.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::Input(format!("forcing CSV lacks column {name:?}")))
    };
    let (ct, ca) = (col("t")?, col("a")?);
    let (mut ts, mut avals) = (Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let num = |c: usize| -> Result<f64, CliError> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse().map_err(|_| CliError::Input(format!("line {}: cannot read {s:?} as a number", row + 2)))
        };
        ts.push(num(ct)?);
        avals.push(num(ca)?);
    }
    let mesh = IntervalMesh::from_nodes(0.0, ts)?;
    gronwall_rows(mesh, avals, b, beta).map(|(csv, _)| csv)
}

fn gronwall_rows(mesh: IntervalMesh, avals: Vec<f64>, b: f64, beta: f64) -> Result<(String, f64), CliError> {
    let forcing = SampledFunction::new(mesh.clone(), avals.iter().map(|&a| DVector::from_element(1, a)).collect())?;
    let data = GronwallData::new(forcing, b, beta)?;
    let ctl = SeriesControl::default();
    let bounds: Vec<f64> = crate::par::map_indices(mesh.len(), |j| ml_kernel_bound(&data, mesh.nodes()[j], &ctl))
        .into_iter()
        .collect::<Result<_, _>>()?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "a", "bound"]).map_err(csv_err)?;
    for ((t, a), bound) in mesh.nodes().iter().zip(&avals).zip(&bounds) {
        w.write_record([fmt_num(*t), fmt_num(*a), fmt_num(*bound)]).map_err(csv_err)?;
    }
    let max_bound = bounds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok((String::from_utf8(bytes).expect("CSV output is ASCII"), max_bound))
}

/// `ml`: `x, E_{mu,1}(-x), E_{mu,mu}(-x)`; `xi`: `theta, xi_mu(theta)`.
pub fn special_table(table: Table, mu: f64, range: &SampleRange) -> Result<String, CliError> {
    let ctl = SeriesControl::default();
    let mut w = csv::Writer::from_writer(Vec::new());
    match table {
        Table::Ml => {
            w.write_record(["x", "ml_one", "ml_mu"]).map_err(csv_err)?;
            for x in range.values() {
                let e1 = mittag_leffler(mu, 1.0, -x, &ctl)?;
                let em = mittag_leffler(mu, mu, -x, &ctl)?;
                w.write_record([fmt_num(x), fmt_num(e1), fmt_num(em)]).map_err(csv_err)?;
            }
        }
        Table::Xi => {
            w.write_record(["theta", "density"]).map_err(csv_err)?;
            for theta in range.values() {
                w.write_record([fmt_num(theta), fmt_num(xi_density(mu, theta, &ctl)?)]).map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is ASCII"))
}

/// Runs the spec's tasks, writing `report.json` (always) and
/// `solution.csv` (when solving) into `out_dir`. Numerical failures are
/// recorded in the report with status `error`; only I/O problems and
/// invalid specs return `Err`.
pub fn run(spec: &ProblemSpec, out_dir: &Path) -> Result<RunReport, CliError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let problem = spec.problem()?;
    let disc = spec.discretization()?;
    let order = problem.order();
    let mut report = RunReport {
        format_version: REPORT_FORMAT_VERSION,
        status: Status::Ok,
        tasks: spec.tasks.clone(),
        problem: ProblemSummary {
            dimension: problem.dim(),
            mu: order.mu(),
            nu: order.nu(),
            lambda: order.lambda(),
            horizon: problem.horizon(),
            shift: problem.generator().shift(),
            impulse_times: problem.impulses().iter().map(|i| i.time).collect(),
        },
        mesh: MeshSummary {
            nodes_per_interval: disc.nodes_per_interval,
            grading: disc.grading,
            intervals: problem.impulses().len() + 1,
            total_nodes: (problem.impulses().len() + 1) * disc.nodes_per_interval,
        },
        solver: SolverSummary {
            tol: spec.solver.tol,
            max_iter: spec.solver.max_iter,
            seeded_from_bounds: spec.bounds.is_some(),
        },
        bound_constant: None,
        enclosure: None,
        uniqueness: None,
        seeds: None,
        conditions: None,
        gronwall: None,
        special_table: None,
        messages: Vec::new(),
    };
    if let Err(e) = run_tasks(spec, out_dir, &mut report) {
        if let CliError::Io { .. } = e {
            return Err(e);
        }
        report.status = Status::Error;
        report.messages.push(e.to_string());
    }
    let json = serde_json::to_string_pretty(&report).map_err(|e| CliError::Input(e.to_string()))? + "\n";
    write_atomic(out_dir, REPORT_FILE, json.as_bytes())?;
    Ok(report)
}

fn run_tasks(spec: &ProblemSpec, out_dir: &Path, report: &mut RunReport) -> Result<(), CliError> {
    let tol = spec.solver.tol;
    let needs_op = [Task::Solve, Task::Verify, Task::Conditions].iter().any(|t| spec.tasks.contains(t));
    let op = if needs_op { Some(operator_for(spec)?) } else { None };
    let seeds = match &op {
        Some(op) => spec.seeds(op)?,
        None => None,
    };
    if let Some(op) = &op {
        report.bound_constant = Some(op.family().bound_constant());
    }

    if spec.tasks.contains(&Task::Conditions) {
        let (y0, z0) = seeds.as_ref().ok_or_else(|| CliError::Input("conditions need [bounds]".into()))?;
        let c_star = spec.conditions.c_star.unwrap_or_default();
        let op = op.as_ref().expect("operator built for conditions");
        let rep = check_conditions(
            op.problem(),
            y0,
            z0,
            spec.operator.shift,
            c_star,
            spec.conditions.samples,
            spec.conditions.seed,
        )?;
        if !rep.all_hold() {
            report.status.worsen(Status::ConditionFailure);
            report.messages.push("sampled conditions failed; see conditions".into());
        }
        report.conditions = Some(rep);
    }

    if spec.tasks.contains(&Task::Verify) {
        let (y0, z0) = seeds.as_ref().ok_or_else(|| CliError::Input("verify needs [bounds]".into()))?;
        let op = op.as_ref().expect("operator built for verify");
        let lower = verify_lower_upper(op, y0, Side::Lower, 10.0 * tol)?;
        let upper = verify_lower_upper(op, z0, Side::Upper, 10.0 * tol)?;
        if !lower.passes || !upper.passes {
            report.status.worsen(Status::ConditionFailure);
            report.messages.push("a bound is not a lower/upper solution; see seeds".into());
        }
        report.seeds = Some(SeedChecks { lower, upper });
    }

    if spec.tasks.contains(&Task::Solve) {
        let op = op.as_ref().expect("operator built for solve");
        let (y0, z0) = match &seeds {
            Some((y, z)) => (y.clone(), z.clone()),
            None => {
                let zero = op.trajectory_from_weighted(|_, _| DVector::zeros(op.dim()))?;
                let start = op.apply(&zero)?;
                (start.clone(), start)
            }
        };
        let enclosure = match iterate_extremal(op, &y0, &z0, tol, spec.solver.max_iter) {
            Ok(e) => e,
            Err(crate::Error::NotConverged { iterations, report: partial }) => {
                report.enclosure = Some(*partial);
                return Err(CliError::Input(format!("monotone iteration did not converge in {iterations} iterations")));
            }
            Err(e) => return Err(e.into()),
        };
        if seeds.is_none() {
            report.messages.push("no [bounds]: both chains started from G(0); ordering is not checked".into());
        } else if !enclosure.report.ordering_warnings.is_empty() {
            report.status.worsen(Status::ConditionFailure);
            report.messages.push("iteration chains lost their ordering; see enclosure.ordering_warnings".into());
        }
        if let Some(c_star) = spec.conditions.c_star {
            report.uniqueness = Some(uniqueness_certificate(op, &enclosure.lower, &enclosure.upper, c_star, tol)?);
        }
        let csv = solution_csv(&enclosure.lower, &enclosure.upper)?;
        report.enclosure = Some(enclosure.report);
        write_atomic(out_dir, SOLUTION_FILE, csv.as_bytes())?;
    }

    if spec.tasks.contains(&Task::Gronwall) {
        let g = spec.gronwall.as_ref().ok_or_else(|| CliError::Input("gronwall task needs [gronwall]".into()))?;
        let forcing = spec.gronwall_forcing().ok_or_else(|| CliError::Input("bad gronwall.forcing".into()))?;
        let mesh = IntervalMesh::graded(0.0, spec.horizon, g.nodes, 2.0)?;
        let avals = mesh
            .nodes()
            .iter()
            .map(|&t| forcing.eval(t, &[]).map_err(|e| CliError::Input(format!("gronwall.forcing at t = {t}: {e}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let (csv, max_bound) = gronwall_rows(mesh, avals, g.b, g.beta)?;
        let file = "gronwall.csv".to_string();
        write_atomic(out_dir, &file, csv.as_bytes())?;
        report.gronwall = Some(GronwallSummary { b: g.b, beta: g.beta, nodes: g.nodes, max_bound, file });
    }

    if spec.tasks.contains(&Task::SpecialTable) {
        let s = spec.special.as_ref().ok_or_else(|| CliError::Input("special-table task needs [special]".into()))?;
        let range: SampleRange = s.range.parse().map_err(CliError::Input)?;
        let csv = special_table(s.table, s.mu, &range)?;
        let file = match s.table {
            Table::Ml => "special_ml.csv",
            Table::Xi => "special_xi.csv",
        };
        write_atomic(out_dir, file, csv.as_bytes())?;
        report.special_table = Some(file.to_string());
    }
    Ok(())
}
