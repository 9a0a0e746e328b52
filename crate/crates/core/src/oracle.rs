//! Reference solutions and error analytics: classical RK4, closed-form
//! solutions of the built-in problems, nodal error metrics and empirical
//! convergence orders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::engine::{IvpSystem, SolveReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    /// Riccati equation `u' = 2u - u^2 + 1` on `[0, 1]`.
    Ex1,
    /// `u' = (5/3) (u^2)^{1/5} cos t` on `[0, 3]`.
    Ex2,
    /// Second-order problem as a first-order pair on `[0, 1.5]`.
    Ex3,
}

impl Builtin {
    pub const ALL: [Builtin; 3] = [Builtin::Ex1, Builtin::Ex2, Builtin::Ex3];

    pub fn name(self) -> &'static str {
        match self {
            Builtin::Ex1 => "ex1",
            Builtin::Ex2 => "ex2",
            Builtin::Ex3 => "ex3",
        }
    }

    pub fn interval(self) -> (f64, f64) {
        match self {
            Builtin::Ex1 => (0.0, 1.0),
            Builtin::Ex2 => (0.0, 3.0),
            Builtin::Ex3 => (0.0, 1.5),
        }
    }

    pub fn components(self) -> usize {
        match self {
            Builtin::Ex3 => 2,
            _ => 1,
        }
    }

    /// Closed-form solution at `t`.
    pub fn exact(self, t: f64) -> Result<Vec<f64>> {
        let (a, t_end) = self.interval();
        if !(t >= a && t <= t_end) {
            return Err(Error::OutOfDomain { t, a, t_end });
        }
        Ok(match self {
            Builtin::Ex1 => {
                let r2 = std::f64::consts::SQRT_2;
                let phase = 0.5 * ((r2 - 1.0) / (r2 + 1.0)).ln();
                vec![1.0 + r2 * (r2 * t + phase).tanh()]
            }
            Builtin::Ex2 => {
                // sin(t) * cbrt(sin(t)^2), nonnegative on [0, 3]
                let s = t.sin();
                vec![s * (s * s).cbrt()]
            }
            Builtin::Ex3 => vec![t - t.sin(), 1.0 - t.cos()],
        })
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Builtin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Builtin::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownProblem(s.to_string()))
    }
}

pub fn exact_builtin_eval(name: &str, t: f64) -> Result<Vec<f64>> {
    name.parse::<Builtin>()?.exact(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceSource {
    Rk4 { step: f64 },
    ClosedForm { name: String },
    Ivim { n: usize, iterations: usize },
}

/// A sampled trajectory: `values[node][component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub nodes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub source: ReferenceSource,
}

impl ReferenceSolution {
    pub fn closed_form(name: &str, nodes: &[f64]) -> Result<Self> {
        let builtin: Builtin = name.parse()?;
        let values = nodes
            .iter()
            .map(|&t| builtin.exact(t))
            .collect::<Result<_>>()?;
        Ok(ReferenceSolution {
            nodes: nodes.to_vec(),
            values,
            source: ReferenceSource::ClosedForm {
                name: builtin.name().to_string(),
            },
        })
    }

    pub fn from_report(report: &SolveReport) -> Self {
        ReferenceSolution {
            nodes: report.grid.nodes().to_vec(),
            values: report.node_rows(),
            source: ReferenceSource::Ivim {
                n: report.grid.len(),
                iterations: report.iterations_run,
            },
        }
    }

    pub fn components(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Linear interpolation between stored nodes.
    pub fn sample(&self, t: f64) -> Result<Vec<f64>> {
        let (first, last) = (self.nodes[0], *self.nodes.last().expect("nonempty"));
        let slack = 1e-12 * (last - first).abs().max(1.0);
        if !(t >= first - slack && t <= last + slack) {
            return Err(Error::OutOfDomain {
                t,
                a: first,
                t_end: last,
            });
        }
        let j = self.nodes.partition_point(|&x| x <= t);
        if j == 0 {
            return Ok(self.values[0].clone());
        }
        if j == self.nodes.len() {
            return Ok(self.values[j - 1].clone());
        }
        let (t0, t1) = (self.nodes[j - 1], self.nodes[j]);
        if t == t0 {
            return Ok(self.values[j - 1].clone());
        }
        let theta = (t - t0) / (t1 - t0);
        Ok(self.values[j - 1]
            .iter()
            .zip(&self.values[j])
            .map(|(a, b)| a + theta * (b - a))
            .collect())
    }
}

/// Classical four-stage Runge-Kutta from the system's own initial values.
pub fn rk4_reference(sys: &IvpSystem, step: f64) -> Result<ReferenceSolution> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "rk4 step must be positive, got {step}"
        )));
    }
    let span = sys.t_end() - sys.a();
    let ratio = span / step;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 || steps < 1.0 {
        return Err(Error::Config(format!(
            "rk4 step {step} does not divide the interval length {span}"
        )));
    }
    let steps = steps as usize;
    let h = span / steps as f64;
    let k = sys.len();

    let mut nodes = Vec::with_capacity(steps + 1);
    let mut values = Vec::with_capacity(steps + 1);
    let mut y = sys.initial().to_vec();
    nodes.push(sys.a());
    values.push(y.clone());

    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; k], vec![0.0; k], vec![0.0; k], vec![0.0; k]);
    let mut tmp = vec![0.0; k];
    for s in 0..steps {
        let t = sys.a() + s as f64 * h;
        sys.rhs_into(t, &y, &mut k1);
        for j in 0..k {
            tmp[j] = y[j] + 0.5 * h * k1[j];
        }
        sys.rhs_into(t + 0.5 * h, &tmp, &mut k2);
        for j in 0..k {
            tmp[j] = y[j] + 0.5 * h * k2[j];
        }
        sys.rhs_into(t + 0.5 * h, &tmp, &mut k3);
        for j in 0..k {
            tmp[j] = y[j] + h * k3[j];
        }
        sys.rhs_into(t + h, &tmp, &mut k4);
        for j in 0..k {
            y[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = if s + 1 == steps {
            sys.t_end()
        } else {
            sys.a() + (s + 1) as f64 * h
        };
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Rk4Divergence { t: t_next });
        }
        nodes.push(t_next);
        values.push(y.clone());
    }
    Ok(ReferenceSolution {
        nodes,
        values,
        source: ReferenceSource::Rk4 { step: h },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMetrics {
    pub max_abs: f64,
    /// Max over components of the absolute difference at each node.
    pub per_node_abs: Vec<f64>,
    /// `log10` of `per_node_abs`; exact agreement gives negative infinity.
    pub per_node_log10: Vec<f64>,
}

/// Compare `a` against `b` at the nodes of `a`, interpolating `b` linearly.
/// `b` must have at least as many nodes as `a`.
pub fn trajectory_error(a: &ReferenceSolution, b: &ReferenceSolution) -> Result<ErrorMetrics> {
    if b.nodes.len() < a.nodes.len() {
        return Err(Error::GridMismatch {
            reference: b.nodes.len(),
            solution: a.nodes.len(),
        });
    }
    if a.components() != b.components() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} components",
            a.components(),
            b.components()
        )));
    }
    let same_nodes = a.nodes == b.nodes;
    let mut per_node_abs = Vec::with_capacity(a.nodes.len());
    for (r, &t) in a.nodes.iter().enumerate() {
        let other = if same_nodes {
            b.values[r].clone()
        } else {
            b.sample(t)?
        };
        let gap = a.values[r]
            .iter()
            .zip(&other)
            .fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()));
        per_node_abs.push(gap);
    }
    let per_node_log10 = per_node_abs.iter().map(|e| e.log10()).collect();
    let max_abs = per_node_abs.iter().fold(0.0, |acc: f64, e| acc.max(*e));
    Ok(ErrorMetrics {
        max_abs,
        per_node_abs,
        per_node_log10,
    })
}

pub fn error_metrics(sol: &SolveReport, reference: &ReferenceSolution) -> Result<ErrorMetrics> {
    trajectory_error(&ReferenceSolution::from_report(sol), reference)
}

/// `log2(err_coarse / err_fine)` for a pair of grids whose cell counts differ by 2x.
pub fn empirical_order(err_coarse: f64, err_fine: f64) -> Result<f64> {
    if !(err_coarse > 0.0 && err_fine > 0.0) {
        return Err(Error::NonPositiveError {
            coarse: err_coarse,
            fine: err_fine,
        });
    }
    Ok((err_coarse / err_fine).log2())
}
