//! Batch front end: TOML problem documents, a small expression language for
//! right-hand sides and jump maps, and the task runner behind the `hilfer`
//! binary.

mod catalog;
mod expr;
mod run;
mod spec;

pub use catalog::CatalogEntry;
pub use expr::{BinaryOp, Expr, ExprError, Function};
pub use run::{
    conditions_report, gronwall_table, operator_for, read_candidate, run, solution_csv, special_table,
    verify_candidate, write_atomic, CliError, GronwallSummary, MeshSummary, ProblemSummary, RunReport, SeedChecks,
    SolverSummary, Status, REPORT_FILE, REPORT_FORMAT_VERSION, SOLUTION_FILE, WEIGHTED_ZONE,
};
pub use spec::{
    parse_spec, render_spec, BoundsSpec, ConditionsSpec, GronwallSpec, ImpulseSpec, MapSpec, MeshSpec, OperatorSpec,
    Orders, Overrides, ProblemSpec, SampleRange, SolverSpec, SpecError, SpecialSpec, Table, Task,
};
