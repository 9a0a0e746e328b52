//! JSON problem descriptions and the built-in example problems.
//!
//! ```json
//! {
//!   "name": "ex1",
//!   "interval": { "a": 0.0, "T": 1.0 },
//!   "equations": [ { "alpha": -2.0, "rhs": "2*u - u^2 + 1" } ],
//!   "initial": [0.0],
//!   "exact": ["1 + sqrt(2)*tanh(sqrt(2)*t + 0.5*log((sqrt(2)-1)/(sqrt(2)+1)))"]
//! }
//! ```
//!
//! Right-hand sides may use `t` and `u1..uk` (`u` as well when `k = 1`).
//! `exact` and `initial_guess` are functions of `t` only, one per equation.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsl::{
    binary, split_linear, validate_vars, BinaryOp, Bindings, DslError, Expr, Variable,
};
use crate::engine::{Equation, IvpSystem};
use crate::error::{Error, Result};
use crate::oracle::Builtin;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interval {
    pub a: f64,
    #[serde(rename = "T")]
    pub t_end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    pub alpha: f64,
    pub rhs: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub interval: Interval,
    pub equations: Vec<EquationSpec>,
    pub initial: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<Vec<String>>,
    /// Starting iterate in the original variables; defaults to the initial values.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_guess: Option<Vec<String>>,
}

/// A DSL text that failed to parse or validate, with the field it came from.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{field}: {source}")]
pub struct FieldError {
    pub field: String,
    pub source: DslError,
}

impl From<FieldError> for Error {
    fn from(e: FieldError) -> Self {
        Error::Problem(e.to_string())
    }
}

struct Compiled {
    rhs: Vec<Expr>,
    exact: Option<Vec<Expr>>,
    initial_guess: Option<Vec<Expr>>,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile =
            serde_json::from_str(text).map_err(|e| Error::Problem(format!("invalid JSON: {e}")))?;
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialize")
    }

    pub fn builtin(which: Builtin) -> Self {
        let eq = |alpha: f64, rhs: &str| EquationSpec {
            alpha,
            rhs: rhs.to_string(),
        };
        let (a, t_end) = which.interval();
        let interval = Interval { a, t_end };
        match which {
            Builtin::Ex1 => ProblemFile {
                name: "ex1".into(),
                interval,
                equations: vec![eq(-2.0, "2*u - u^2 + 1")],
                initial: vec![0.0],
                exact: Some(vec![
                    "1 + sqrt(2)*tanh(sqrt(2)*t + 0.5*log((sqrt(2) - 1)/(sqrt(2) + 1)))".into(),
                ]),
                initial_guess: None,
            },
            Builtin::Ex2 => ProblemFile {
                name: "ex2".into(),
                interval,
                equations: vec![eq(0.0, "5/3*nthroot(u^2, 5)*cos(t)")],
                initial: vec![0.0],
                exact: Some(vec!["sin(t)*nthroot(sin(t)^2, 3)".into()]),
                // u = 0 is itself a fixed point of this iteration
                initial_guess: Some(vec!["t".into()]),
            },
            Builtin::Ex3 => ProblemFile {
                name: "ex3".into(),
                interval,
                equations: vec![
                    eq(0.0, "u2"),
                    eq(1.0, "-u2 + 2*u2^2 - u1 + t + 2*sin(t/2)^2 - 8*sin(t/2)^4"),
                ],
                initial: vec![0.0, 0.0],
                exact: Some(vec!["t - sin(t)".into(), "1 - cos(t)".into()]),
                initial_guess: None,
            },
        }
    }

    /// Built-in name or path to a JSON file.
    pub fn load(source: &str) -> Result<Self> {
        if let Ok(which) = source.parse::<Builtin>() {
            return Ok(Self::builtin(which));
        }
        let text = std::fs::read_to_string(source)
            .map_err(|e| Error::Problem(format!("cannot read {source}: {e}")))?;
        Self::from_json(&text)
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    /// Names usable in right-hand sides.
    pub fn state_names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        names.extend((1..=self.len()).map(|j| format!("u{j}")));
        if self.len() == 1 {
            names.push("u".to_string());
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        self.compile_exprs().map(|_| ())
    }

    fn compile_exprs(&self) -> Result<Compiled> {
        if self.equations.is_empty() {
            return Err(Error::Problem("equations must not be empty".into()));
        }
        if self.initial.len() != self.equations.len() {
            return Err(Error::Problem(format!(
                "initial has {} values for {} equations",
                self.initial.len(),
                self.equations.len()
            )));
        }
        if !(self.interval.a.is_finite() && self.interval.t_end.is_finite())
            || self.interval.t_end <= self.interval.a
        {
            return Err(Error::InvalidInterval {
                a: self.interval.a,
                t_end: self.interval.t_end,
            });
        }
        let state_vars: BTreeSet<String> = self.state_names().into_iter().collect();
        let time_only: BTreeSet<String> = ["t".to_string()].into_iter().collect();
        let compile = |field: String, src: &str, allowed: &BTreeSet<String>| {
            Expr::parse(src)
                .and_then(|e| validate_vars(&e, allowed).map(|_| e))
                .map_err(|source| FieldError { field, source })
        };
        let rhs = self
            .equations
            .iter()
            .enumerate()
            .map(|(j, eq)| {
                if !eq.alpha.is_finite() {
                    return Err(Error::NonFiniteAlpha(eq.alpha));
                }
                Ok(compile(
                    format!("equations[{j}].rhs"),
                    &eq.rhs,
                    &state_vars,
                )?)
            })
            .collect::<Result<Vec<_>>>()?;
        let per_component = |key: &str, list: &Option<Vec<String>>| -> Result<Option<Vec<Expr>>> {
            let Some(list) = list else {
                return Ok(None);
            };
            if list.len() != self.len() {
                return Err(Error::Problem(format!(
                    "{key} has {} entries for {} equations",
                    list.len(),
                    self.len()
                )));
            }
            list.iter()
                .enumerate()
                .map(|(j, src)| Ok(compile(format!("{key}[{j}]"), src, &time_only)?))
                .collect::<Result<Vec<_>>>()
                .map(Some)
        };
        Ok(Compiled {
            rhs,
            exact: per_component("exact", &self.exact)?,
            initial_guess: per_component("initial_guess", &self.initial_guess)?,
        })
    }

    /// Build the solver-facing system. Evaluation failures inside a
    /// right-hand side surface as NaN, which the solver reports as divergence.
    pub fn compile(&self) -> Result<IvpSystem> {
        let compiled = self.compile_exprs()?;
        let names: Arc<[String]> = self.state_names().into();
        let scalar = self.len() == 1;
        let equations = compiled
            .rhs
            .into_iter()
            .zip(&self.equations)
            .enumerate()
            .map(|(j, (expr, spec))| {
                let own = format!("u{}", j + 1);
                let mut aliases = vec![own.as_str()];
                if scalar {
                    aliases.push("u");
                }
                let residual = residual_expr(&expr, spec.alpha, &own, &aliases);
                let eq = Equation::new(spec.alpha, state_function(expr, names.clone(), scalar));
                match residual {
                    Some(r) => eq.with_residual(state_function(r, names.clone(), scalar)),
                    None => eq,
                }
            })
            .collect();
        let mut sys = IvpSystem::new(
            self.interval.a,
            self.interval.t_end,
            equations,
            self.initial.clone(),
        )?;
        if let Some(exprs) = compiled.exact {
            sys = sys.with_exact(time_functions(exprs));
        }
        if let Some(exprs) = compiled.initial_guess {
            sys = sys.with_initial_guess(time_functions(exprs));
        }
        Ok(sys)
    }
}

/// `alpha u_k + rhs_k` with the linear `u_k` terms combined symbolically, or
/// `None` when the rhs has no such term to combine.
fn residual_expr(rhs: &Expr, alpha: f64, own: &str, aliases: &[&str]) -> Option<Expr> {
    let (coeff, rest) = split_linear(rhs, aliases);
    if coeff == 0.0 {
        return None;
    }
    let lead = alpha + coeff;
    let var = Expr::Var(Variable {
        name: own.to_string(),
        pos: 0,
    });
    Some(match (lead == 0.0, rest) {
        (true, rest) => rest.unwrap_or(Expr::Const(0.0)),
        (false, None) => binary(BinaryOp::Mul, Expr::Const(lead), var),
        (false, Some(rest)) => binary(
            BinaryOp::Add,
            binary(BinaryOp::Mul, Expr::Const(lead), var),
            rest,
        ),
    })
}

/// Evaluate `expr` over `(t, u1..uk[, u])`; evaluation failures become NaN.
fn state_function(
    expr: Expr,
    names: Arc<[String]>,
    scalar: bool,
) -> impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static {
    move |t, u| {
        let mut values = Vec::with_capacity(u.len() + 2);
        values.push(t);
        values.extend_from_slice(u);
        if scalar {
            values.push(u[0]);
        }
        expr.eval(&Bindings {
            names: &names,
            values: &values,
        })
        .unwrap_or(f64::NAN)
    }
}

fn time_functions(exprs: Vec<Expr>) -> impl Fn(f64) -> Vec<f64> + Send + Sync + 'static {
    let names = vec!["t".to_string()];
    move |t| {
        let values = [t];
        let env = Bindings {
            names: &names,
            values: &values,
        };
        exprs
            .iter()
            .map(|e| e.eval(&env).unwrap_or(f64::NAN))
            .collect()
    }
}
