use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;

use hilfer_core::cli::{
    parse_spec, read_candidate, render_spec, run, special_table, CliError, Expr, ExprError, MapSpec, Orders, Overrides,
    ProblemSpec, SampleRange, Status, Table, Task, REPORT_FILE, SOLUTION_FILE,
};
use hilfer_core::monotone::Side;
use hilfer_core::specialfn::{mittag_leffler, SeriesControl};
use proptest::prelude::*;

fn corpus() -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/specs");
    let mut out: Vec<(String, String)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn corpus_spec(name: &str) -> ProblemSpec {
    let (_, text) = corpus().into_iter().find(|(n, _)| n == name).unwrap();
    parse_spec(&text).unwrap()
}

#[test]
fn corpus_round_trips() {
    let specs = corpus();
    assert_eq!(specs.len(), 20);
    for (name, text) in specs {
        let spec = parse_spec(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let rendered = render_spec(&spec);
        assert_eq!(parse_spec(&rendered).unwrap(), spec, "{name}\n{rendered}");
        assert_eq!(render_spec(&parse_spec(&rendered).unwrap()), rendered, "{name}");
    }
}

#[test]
fn caputo_decay_solution_matches_mittag_leffler() {
    let dir = tempfile::tempdir().unwrap();
    let spec = corpus_spec("caputo_decay.toml");
    let report = run(&spec, dir.path()).unwrap();
    assert_eq!(report.status, Status::Ok);
    let csv = fs::read_to_string(dir.path().join(SOLUTION_FILE)).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "interval_index,t,weighted,lower_x_1,upper_x_1");
    let ctl = SeriesControl::default();
    let mut rows = 0;
    for line in lines {
        let f: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        let exact = mittag_leffler(0.7, 1.0, -2.0 * f[1].powf(0.7), &ctl).unwrap();
        assert_eq!(f[2], 0.0);
        for v in &f[3..] {
            assert!((v - exact).abs() <= 1e-4 * exact, "t={} {v} vs {exact}", f[1]);
        }
        rows += 1;
    }
    assert_eq!(rows, 128);
}

#[test]
fn conditions_only_writes_no_solution() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&corpus_spec("conditions_only.toml"), dir.path()).unwrap();
    assert_eq!(report.status, Status::Ok);
    let cond = report.conditions.unwrap();
    assert!(cond.shifted_monotone_margin >= 0.0 && cond.lipschitz_margin >= 0.0);
    assert!(report.enclosure.is_none());
    assert!(dir.path().join(REPORT_FILE).exists());
    assert!(!dir.path().join(SOLUTION_FILE).exists());
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join(REPORT_FILE)).unwrap()).unwrap();
    assert_eq!(json["conditions"]["samples"], 500);
    assert_eq!(json["status"], "ok");
    assert!(json.get("timestamp").is_none());
}

#[test]
fn unwritable_output_is_an_io_error() {
    let file = tempfile::NamedTempFile::new().unwrap();
    let out = file.path().join("sub");
    let err = run(&corpus_spec("caputo_decay.toml"), &out).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }), "{err}");
}

#[test]
fn condition_failures_still_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(&corpus_spec("two_species.toml"), dir.path()).unwrap();
    assert_eq!(report.status, Status::ConditionFailure);
    assert_eq!(report.status.exit_code(), 2);
    assert!(dir.path().join(REPORT_FILE).exists());
    assert!(dir.path().join(SOLUTION_FILE).exists());
}

#[test]
fn exhausted_iterations_report_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let spec = corpus_spec("logistic_impulse.toml")
        .with_overrides(&Overrides { max_iter: Some(2), mesh_n: Some(24), ..Default::default() })
        .unwrap();
    let report = run(&spec, dir.path()).unwrap();
    assert_eq!(report.status, Status::Error);
    assert_eq!(report.enclosure.as_ref().map(|e| e.iterations), Some(2));
    assert!(!report.messages.is_empty());
}

#[test]
fn solver_output_verifies_as_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let spec = corpus_spec("hilfer_general.toml");
    run(&spec, dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join(SOLUTION_FILE)).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.split(',').nth(2) == Some("1")), "lambda < 1 flags rows near the start");
    let op = hilfer_core::cli::operator_for(&spec).unwrap();
    for side in [Side::Lower, Side::Upper] {
        let cand = read_candidate(&op, &csv, side).unwrap();
        let check = hilfer_core::monotone::verify_lower_upper(&op, &cand, side, 10.0 * spec.solver.tol).unwrap();
        assert!(check.passes, "{side:?}: {}", check.mild_margin);
    }
    let coarse = spec.with_overrides(&Overrides { mesh_n: Some(32), ..Default::default() }).unwrap();
    let op = hilfer_core::cli::operator_for(&coarse).unwrap();
    assert!(read_candidate(&op, &csv, Side::Lower).is_err());
}

#[test]
fn overrides_are_validated() {
    let spec = corpus_spec("caputo_decay.toml");
    let o =
        Overrides { tol: Some(1e-6), max_iter: Some(5), mesh_n: Some(10), grading: Some(3.0), ..Default::default() };
    let s = spec.clone().with_overrides(&o).unwrap();
    assert_eq!((s.solver.tol, s.solver.max_iter, s.mesh.nodes_per_interval, s.mesh.grading), (1e-6, 5, 10, Some(3.0)));
    assert!(spec.with_overrides(&Overrides { grading: Some(0.5), ..Default::default() }).is_err());
}

#[test]
fn special_tables() {
    let r: SampleRange = "0:1:3".parse().unwrap();
    let ml = special_table(Table::Ml, 0.5, &r).unwrap();
    let first: Vec<&str> = ml.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(first[..2], ["0.0", "1.0"]);
    let xi = special_table(Table::Xi, 0.5, &"0.5:2:4".parse().unwrap()).unwrap();
    assert_eq!(xi.lines().count(), 5);
}

#[test]
fn expression_examples() {
    let e = Expr::parse("x1*(1-x1)", 1, true).unwrap();
    assert_eq!(e.eval(0.0, &[0.5]).unwrap(), 0.25);
    assert!(matches!(Expr::parse("sin(t)+x2", 1, true), Err(ExprError::UnknownIdentifier { .. })));
    assert_eq!(Expr::parse("2^3^2", 0, true).unwrap().eval(0.0, &[]).unwrap(), 512.0);
}

/// Independent tree used to cross-check the parser and evaluator.
#[derive(Debug, Clone)]
enum Tree {
    Num(f64),
    T,
    X(usize),
    Neg(Box<Tree>),
    Bin(char, Box<Tree>, Box<Tree>),
    Call(&'static str, Vec<Tree>),
}

impl Tree {
    fn render(&self) -> String {
        match self {
            Tree::Num(v) => format!("{v:?}"),
            Tree::T => "t".into(),
            Tree::X(i) => format!("x{}", i + 1),
            Tree::Neg(a) => format!("-({})", a.render()),
            Tree::Bin(op, a, b) => format!("({}) {op} ({})", a.render(), b.render()),
            Tree::Call(f, args) => format!("{f}({})", args.iter().map(Tree::render).collect::<Vec<_>>().join(", ")),
        }
    }

    fn eval(&self, t: f64, x: &[f64]) -> Option<f64> {
        Some(match self {
            Tree::Num(v) => *v,
            Tree::T => t,
            Tree::X(i) => x[*i],
            Tree::Neg(a) => -a.eval(t, x)?,
            Tree::Bin(op, a, b) => {
                let (a, b) = (a.eval(t, x)?, b.eval(t, x)?);
                match op {
                    '+' => a + b,
                    '-' => a - b,
                    '*' => a * b,
                    '/' if b == 0.0 => return None,
                    '/' => a / b,
                    _ => a.powf(b),
                }
            }
            Tree::Call(f, args) => {
                let a = args[0].eval(t, x)?;
                match *f {
                    "sin" => a.sin(),
                    "cos" => a.cos(),
                    "exp" => a.exp(),
                    "abs" => a.abs(),
                    "min" => a.min(args[1].eval(t, x)?),
                    _ => a.max(args[1].eval(t, x)?),
                }
            }
        })
    }
}

fn tree() -> impl Strategy<Value = Tree> {
    let leaf = prop_oneof![
        (0.0f64..10.0).prop_map(Tree::Num),
        (0u32..20).prop_map(|n| Tree::Num(f64::from(n))),
        Just(Tree::T),
        (0usize..3).prop_map(Tree::X),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Tree::Neg(Box::new(a))),
            (prop::sample::select(vec!['+', '-', '*', '/', '^']), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Tree::Bin(op, Box::new(a), Box::new(b))),
            (prop::sample::select(vec!["sin", "cos", "exp", "abs"]), inner.clone())
                .prop_map(|(f, a)| Tree::Call(f, vec![a])),
            (prop::sample::select(vec!["min", "max"]), inner.clone(), inner)
                .prop_map(|(f, a, b)| Tree::Call(f, vec![a, b])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn evaluation_matches_reference(tree in tree(), t in -2.0f64..2.0, x in prop::array::uniform3(-3.0f64..3.0)) {
        let src = tree.render();
        let parsed = Expr::parse(&src, 3, true).unwrap();
        let display = Expr::parse(&parsed.to_string(), 3, true).unwrap();
        prop_assert_eq!(&display, &parsed);
        match (tree.eval(t, &x), parsed.eval(t, &x)) {
            (None, Err(ExprError::DivisionByZero)) => {}
            (Some(want), Ok(got)) if want.is_nan() => prop_assert!(got.is_nan()),
            (Some(want), Ok(got)) => {
                let scale = want.abs().max(f64::MIN_POSITIVE);
                prop_assert!((want - got).abs() <= 4.0 * f64::EPSILON * scale || want == got, "{src}: {want} vs {got}");
            }
            (want, got) => prop_assert!(false, "{src}: {want:?} vs {got:?}"),
        }
    }
}

fn spec_strategy() -> impl Strategy<Value = ProblemSpec> {
    let base = (
        1usize..=3,
        0.05f64..0.95,
        0.0f64..=1.0,
        0.1f64..10.0,
        0.0f64..3.0,
        prop::collection::vec(0.01f64..0.99, 0..3),
        prop::option::of(3usize..300),
        prop::option::of(1.0f64..4.0),
        1e-12f64..1e-4,
        1usize..500,
    );
    let extras = (
        prop::option::of(0.0f64..5.0),
        1usize..5000,
        any::<u64>(),
        prop::bool::ANY,
        prop::sample::subsequence(vec![Task::Solve, Task::Verify, Task::Conditions], 1..=3),
    );
    (base, extras).prop_map(|((n, mu, nu, horizon, shift, mut fr, nodes, grading, tol, max_iter), (c_star, samples, seed, use_catalog, tasks))| {
        fr.sort_by(f64::total_cmp);
        fr.dedup();
        let comps = |f: &dyn Fn(usize) -> String| (0..n).map(f).collect::<Vec<_>>();
        let nonlinearity = if use_catalog {
            let mut params = BTreeMap::new();
            params.insert("rate".to_string(), shift);
            MapSpec { expr: None, catalog: Some("logistic".into()), params }
        } else {
            MapSpec { expr: Some(comps(&|i| format!("sin(t) * x{} - {shift:?}", i + 1))), catalog: None, params: BTreeMap::new() }
        };
        let mut text = format!(
            "x0 = {:?}\nhorizon = {horizon:?}\ntasks = {:?}\n[orders]\nmu = {mu:?}\nnu = {nu:?}\n[operator]\nshift = {shift:?}\n[solver]\ntol = {tol:?}\nmax_iter = {max_iter}\n[bounds]\nlower = {:?}\nupper = {:?}\n[conditions]\nsamples = {samples}\nseed = {seed}\n",
            vec![0.5; n],
            tasks.iter().map(|t| serde_json::to_value(t).unwrap().as_str().unwrap().to_string()).collect::<Vec<_>>(),
            vec!["0"; n],
            vec!["1 + t"; n],
        );
        if let Some(c) = c_star {
            text += &format!("c_star = {c:?}\n");
        } else if tasks.contains(&Task::Conditions) {
            text += "c_star = 1.0\n";
        }
        text += &format!("[nonlinearity]\nexpr = {:?}\n[mesh]\n", vec!["0"; n]);
        if let Some(m) = nodes {
            text += &format!("nodes_per_interval = {m}\n");
        }
        if let Some(g) = grading {
            text += &format!("grading = {g:?}\n");
        }
        for f in &fr {
            text += &format!("[[impulses]]\ntime = {:?}\nexpr = {:?}\n", f * horizon, comps(&|i| format!("x{} / 2", i + 1)));
        }
        let mut spec = parse_spec(&text).unwrap();
        spec.nonlinearity = nonlinearity;
        spec.orders = Orders { mu, nu };
        spec.complete().unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rendered_specs_parse_back(spec in spec_strategy()) {
        prop_assert_eq!(parse_spec(&render_spec(&spec)).unwrap(), spec);
    }
}
