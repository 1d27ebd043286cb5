//! Named componentwise right-hand sides, expanded into expression trees.

use std::collections::BTreeMap;

use super::expr::{BinaryOp, Expr, Function};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CatalogEntry {
    /// `rate * x + offset`
    Linear,
    /// `rate * x * (1 - x / capacity)`
    Logistic,
    /// `value`
    Constant,
    /// `amplitude * sin(frequency * x + phase)`
    Sinusoidal,
}

impl CatalogEntry {
    pub const NAMES: [&'static str; 4] = ["linear", "logistic", "constant", "sinusoidal"];

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "linear" => Self::Linear,
            "logistic" => Self::Logistic,
            "constant" => Self::Constant,
            "sinusoidal" => Self::Sinusoidal,
            _ => return None,
        })
    }

    /// Parameter names with their defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            Self::Linear => &[("rate", 1.0), ("offset", 0.0)],
            Self::Logistic => &[("rate", 1.0), ("capacity", 1.0)],
            Self::Constant => &[("value", 0.0)],
            Self::Sinusoidal => &[("amplitude", 1.0), ("frequency", 1.0), ("phase", 0.0)],
        }
    }

    /// Expression for component `i` using already-completed parameters.
    pub fn expand(self, params: &BTreeMap<String, f64>, i: usize) -> Expr {
        let p = |name: &str| Expr::Number(params[name]);
        let x = || Expr::State(i);
        let bin = |op, l, r| Expr::Binary(op, Box::new(l), Box::new(r));
        match self {
            Self::Linear => bin(BinaryOp::Add, bin(BinaryOp::Mul, p("rate"), x()), p("offset")),
            Self::Logistic => bin(
                BinaryOp::Mul,
                bin(BinaryOp::Mul, p("rate"), x()),
                bin(BinaryOp::Sub, Expr::Number(1.0), bin(BinaryOp::Div, x(), p("capacity"))),
            ),
            Self::Constant => p("value"),
            Self::Sinusoidal => bin(
                BinaryOp::Mul,
                p("amplitude"),
                Expr::Call(
                    Function::Sin,
                    vec![bin(BinaryOp::Add, bin(BinaryOp::Mul, p("frequency"), x()), p("phase"))],
                ),
            ),
        }
    }
}
