//! The interpolated variational iteration itself.
//!
//! Each iterate lives in the piecewise-linear space that vanishes at `a`. One
//! step maps the current iterate to the next through
//!
//! ```text
//! u_{m+1}(t_i) = G(t_i) - h * sum_{r=2}^{i-1} H(t_r, t_i) - h/2 * H(t_i, t_i)
//! ```
//!
//! with `H(s, t) = dlambda/ds(s, t) u(s) + lambda(s, t) f(s, u(s))`. In
//! full-trapezoid mode the `s = a` endpoint `- h/2 * H(t_1, t_i)` is added.

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, PiecewiseLinear};
use crate::multiplier::Multiplier;

pub type RhsFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type TrajectoryFn = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Largest `|alpha| (T - a)` for which the prefix-sum path is used.
pub const PREFIX_EXPONENT_LIMIT: f64 = 30.0;

/// One first-order equation `u_k' = f_k(t, u)` with linear part `u_k' + alpha u_k`.
#[derive(Clone)]
pub struct Equation {
    pub alpha: f64,
    pub rhs: RhsFn,
    /// Optional closed form of `alpha u_k + f_k(t, u)`, the only combination
    /// the exponential multiplier needs. When the linear part cancels
    /// symbolically it avoids the rounding of `alpha u + f` computed term by
    /// term, so an rhs with no nonlinear part yields a kernel independent of `u`.
    pub residual: Option<RhsFn>,
}

impl Equation {
    pub fn new<F>(alpha: f64, rhs: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Equation {
            alpha,
            rhs: Arc::new(rhs),
            residual: None,
        }
    }

    /// Attach a closed form of `alpha u_k + f_k`; it must agree with `rhs`.
    pub fn with_residual<F>(mut self, residual: F) -> Self
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        self.residual = Some(Arc::new(residual));
        self
    }
}

#[derive(Clone)]
pub struct IvpSystem {
    equations: Vec<Equation>,
    a: f64,
    t_end: f64,
    initial: Vec<f64>,
    exact: Option<TrajectoryFn>,
    initial_guess: Option<TrajectoryFn>,
}

impl fmt::Debug for IvpSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvpSystem")
            .field("alphas", &self.alphas())
            .field("a", &self.a)
            .field("t_end", &self.t_end)
            .field("initial", &self.initial)
            .field("exact", &self.exact.is_some())
            .field("initial_guess", &self.initial_guess.is_some())
            .finish()
    }
}

impl IvpSystem {
    pub fn new(a: f64, t_end: f64, equations: Vec<Equation>, initial: Vec<f64>) -> Result<Self> {
        if !(a.is_finite() && t_end.is_finite()) || t_end <= a {
            return Err(Error::InvalidInterval { a, t_end });
        }
        if equations.is_empty() {
            return Err(Error::Config("a system needs at least one equation".into()));
        }
        if initial.len() != equations.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} initial values for {} equations",
                initial.len(),
                equations.len()
            )));
        }
        if let Some(bad) = equations.iter().find(|eq| !eq.alpha.is_finite()) {
            return Err(Error::NonFiniteAlpha(bad.alpha));
        }
        Ok(IvpSystem {
            equations,
            a,
            t_end,
            initial,
            exact: None,
            initial_guess: None,
        })
    }

    /// Closed-form solution used for error reporting.
    pub fn with_exact<F>(mut self, exact: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.exact = Some(Arc::new(exact));
        self
    }

    /// Starting iterate `u_0` in the original variables; its value at `a` is
    /// ignored. Without one the iteration starts from `u_0 = u_a`.
    pub fn with_initial_guess<F>(mut self, guess: F) -> Self
    where
        F: Fn(f64) -> Vec<f64> + Send + Sync + 'static,
    {
        self.initial_guess = Some(Arc::new(guess));
        self
    }

    pub fn len(&self) -> usize {
        self.equations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.equations.is_empty()
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn equations(&self) -> &[Equation] {
        &self.equations
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.equations.iter().map(|e| e.alpha).collect()
    }

    pub fn exact(&self) -> Option<&TrajectoryFn> {
        self.exact.as_ref()
    }

    pub fn initial_guess(&self) -> Option<&TrajectoryFn> {
        self.initial_guess.as_ref()
    }

    /// Evaluate every right-hand side at `(t, state)` into `out`.
    pub fn rhs_into(&self, t: f64, state: &[f64], out: &mut [f64]) {
        for (slot, eq) in out.iter_mut().zip(&self.equations) {
            *slot = (eq.rhs)(t, state);
        }
    }

    /// Change of variable `w = u - u_a`, giving a system with zero initial
    /// values. The receiver is left untouched.
    pub fn shift_to_zero(&self) -> IvpSystem {
        if self.initial.iter().all(|&v| v == 0.0) {
            return self.clone();
        }
        let offset: Arc<[f64]> = self.initial.clone().into();
        let equations = self
            .equations
            .iter()
            .enumerate()
            .map(|(j, eq)| {
                let unshift = |f: &RhsFn| -> RhsFn {
                    let f = f.clone();
                    let offset = offset.clone();
                    Arc::new(move |t: f64, w: &[f64]| {
                        let u: Vec<f64> = w.iter().zip(offset.iter()).map(|(w, o)| w + o).collect();
                        f(t, &u)
                    })
                };
                // alpha w + f(u_a + w) = (alpha u + f(u)) - alpha u_a
                let shift = eq.alpha * self.initial[j];
                Equation {
                    alpha: eq.alpha,
                    rhs: unshift(&eq.rhs),
                    residual: eq.residual.as_ref().map(|g| {
                        let g = unshift(g);
                        Arc::new(move |t: f64, w: &[f64]| g(t, w) - shift) as RhsFn
                    }),
                }
            })
            .collect();
        let shift = |f: &TrajectoryFn| -> TrajectoryFn {
            let f = f.clone();
            let offset = offset.clone();
            Arc::new(move |t: f64| f(t).iter().zip(offset.iter()).map(|(v, o)| v - o).collect())
        };
        IvpSystem {
            equations,
            a: self.a,
            t_end: self.t_end,
            initial: vec![0.0; self.initial.len()],
            exact: self.exact.as_ref().map(shift),
            initial_guess: self.initial_guess.as_ref().map(shift),
        }
    }

    pub fn multipliers(&self) -> Result<Vec<Multiplier>> {
        self.equations
            .iter()
            .map(|eq| Multiplier::exponential(eq.alpha))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureMode {
    /// The discrete update exactly as derived: no `s = a` endpoint term.
    #[default]
    Paper,
    /// Standard composite trapezoid, including the `s = a` endpoint.
    FullTrapezoid,
}

impl QuadratureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            QuadratureMode::Paper => "paper",
            QuadratureMode::FullTrapezoid => "full_trapezoid",
        }
    }
}

impl fmt::Display for QuadratureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Summation {
    /// Prefix sums for exponential multipliers with `|alpha| (T - a)` at most
    /// [`PREFIX_EXPONENT_LIMIT`], direct summation otherwise.
    #[default]
    Auto,
    /// O(n^2) left-to-right sum per node.
    Direct,
    /// O(n) running sum of `exp(alpha (t_r - a)) c_r`; exponential multipliers only.
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOptions {
    pub mode: QuadratureMode,
    pub summation: Summation,
    /// Compute nodes of the direct path on the rayon pool.
    pub parallel: bool,
}

impl Default for StepOptions {
    fn default() -> Self {
        StepOptions {
            mode: QuadratureMode::Paper,
            summation: Summation::Auto,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub n: usize,
    pub m_max: usize,
    pub mode: QuadratureMode,
    /// Early exit once the successive-difference max-norm drops to this; 0 disables.
    pub stop_tol: f64,
    pub divergence_cap: f64,
    pub keep_history: bool,
    pub summation: Summation,
    pub parallel: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            n: 41,
            m_max: 10,
            mode: QuadratureMode::Paper,
            stop_tol: 0.0,
            divergence_cap: 1e12,
            keep_history: false,
            summation: Summation::Auto,
            parallel: false,
        }
    }
}

impl SolveConfig {
    pub fn new(n: usize, m_max: usize, mode: QuadratureMode) -> Self {
        SolveConfig {
            n,
            m_max,
            mode,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config(format!(
                "n must be at least 2, got {}",
                self.n
            )));
        }
        if self.m_max < 1 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.stop_tol >= 0.0 && self.stop_tol.is_finite()) {
            return Err(Error::Config(format!(
                "stop tolerance must be finite and nonnegative, got {}",
                self.stop_tol
            )));
        }
        if self.divergence_cap.is_nan() || self.divergence_cap <= 0.0 {
            return Err(Error::Config(format!(
                "divergence cap must be positive, got {}",
                self.divergence_cap
            )));
        }
        Ok(())
    }

    fn step_options(&self) -> StepOptions {
        StepOptions {
            mode: self.mode,
            summation: self.summation,
            parallel: self.parallel,
        }
    }
}

/// One discrete update with default options (auto summation, sequential).
pub fn ivim_step(
    state: &[PiecewiseLinear],
    sys: &IvpSystem,
    grid: &Arc<Grid>,
    mults: &[Multiplier],
    mode: QuadratureMode,
) -> Result<Vec<PiecewiseLinear>> {
    ivim_step_with(
        state,
        sys,
        grid,
        mults,
        StepOptions {
            mode,
            ..Default::default()
        },
    )
}

pub fn ivim_step_with(
    state: &[PiecewiseLinear],
    sys: &IvpSystem,
    grid: &Arc<Grid>,
    mults: &[Multiplier],
    opts: StepOptions,
) -> Result<Vec<PiecewiseLinear>> {
    let k = sys.len();
    if state.len() != k || mults.len() != k {
        return Err(Error::ShapeMismatch(format!(
            "{} equations, {} state components, {} multipliers",
            k,
            state.len(),
            mults.len()
        )));
    }
    if let Some(bad) = state.iter().find(|pl| pl.grid().as_ref() != grid.as_ref()) {
        return Err(Error::ShapeMismatch(format!(
            "state grid with {} nodes does not match step grid with {} nodes",
            bad.grid().len(),
            grid.len()
        )));
    }

    let n = grid.len();
    let first = match opts.mode {
        QuadratureMode::Paper => 1,
        QuadratureMode::FullTrapezoid => 0,
    };
    // node-major state rows; forcing[j][r] is c_r = alpha u_r + f_r for an
    // exponential multiplier and the bare f_r otherwise
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|r| state.iter().map(|pl| pl.values()[r]).collect())
        .collect();
    let mut forcing = vec![vec![0.0; n]; k];
    for (j, (eq, mult)) in sys.equations().iter().zip(mults).enumerate() {
        let alpha = mult.alpha();
        let residual = eq.residual.as_ref().filter(|_| alpha == Some(eq.alpha));
        for r in first..n {
            let t = grid.nodes()[r];
            let row = &rows[r];
            let value = match (residual, alpha) {
                (Some(g), _) => g(t, row),
                (None, Some(alpha)) => alpha * row[j] + (eq.rhs)(t, row),
                (None, None) => (eq.rhs)(t, row),
            };
            if !value.is_finite() {
                return Err(Error::NonFiniteValue {
                    component: j + 1,
                    node: r + 1,
                });
            }
            forcing[j][r] = value;
        }
    }

    let span = grid.t_end() - grid.a();
    let mut next = Vec::with_capacity(k);
    for (j, mult) in mults.iter().enumerate() {
        let u = state[j].values();
        let c = &forcing[j];
        let prefix_alpha = match (opts.summation, mult.alpha()) {
            (Summation::Direct, _) => None,
            (Summation::Prefix, Some(alpha)) => Some(alpha),
            (Summation::Prefix, None) => {
                return Err(Error::Config(
                    "prefix summation requires an exponential multiplier".into(),
                ))
            }
            (Summation::Auto, Some(alpha)) if alpha.abs() * span <= PREFIX_EXPONENT_LIMIT => {
                Some(alpha)
            }
            (Summation::Auto, _) => None,
        };
        let values = match prefix_alpha {
            Some(alpha) => prefix_update(grid, alpha, c, opts.mode),
            None => {
                let t = grid.nodes();
                let integrand = |r: usize, ti: f64| -> Result<f64> {
                    if mult.alpha().is_some() {
                        Ok(mult.lambda(t[r], ti)? * c[r])
                    } else {
                        mult.h_integrand(c[r], u[r], t[r], ti)
                    }
                };
                direct_update(grid, mult, u, integrand, opts.mode, opts.parallel).map_err(|e| {
                    match e {
                        Error::NonFiniteValue { node, .. } => Error::NonFiniteValue {
                            component: j + 1,
                            node,
                        },
                        other => other,
                    }
                })?
            }
        };
        if let Some(r) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                component: j + 1,
                node: r + 1,
            });
        }
        next.push(PiecewiseLinear::from_values(grid.clone(), values)?);
    }
    Ok(next)
}

/// Direct evaluation of the update, one left-to-right sum per node.
/// `integrand(r, t_i)` is `H(t_r, t_i)`.
fn direct_update<F>(
    grid: &Grid,
    mult: &Multiplier,
    u: &[f64],
    integrand: F,
    mode: QuadratureMode,
    parallel: bool,
) -> Result<Vec<f64>>
where
    F: Fn(usize, f64) -> Result<f64> + Sync,
{
    let t = grid.nodes();
    let h = grid.step();
    let a = grid.a();
    let node = |i: usize| -> Result<f64> {
        if i == 0 {
            return Ok(0.0);
        }
        let ti = t[i];
        let mut acc = 0.0;
        for r in 1..i {
            acc += integrand(r, ti)?;
        }
        let mut value = mult.g_term(u[i], u[0], ti, a)? - h * acc - 0.5 * h * integrand(i, ti)?;
        if mode == QuadratureMode::FullTrapezoid {
            value -= 0.5 * h * integrand(0, ti)?;
        }
        if !value.is_finite() {
            return Err(Error::NonFiniteValue {
                component: 0,
                node: i + 1,
            });
        }
        Ok(value)
    };
    if parallel {
        (0..grid.len()).into_par_iter().map(node).collect()
    } else {
        (0..grid.len()).map(node).collect()
    }
}

/// O(n) update for `lambda(s, t) = -exp(alpha (s - t))`.
///
/// There `H(t_r, t_i) = -exp(alpha (t_r - t_i)) c_r` with `c_r = alpha u_r + f_r`
/// and `G = 0`, so the interior sum is `exp(-alpha (t_i - a))` times a running
/// sum of `exp(alpha (t_r - a)) c_r`.
fn prefix_update(grid: &Grid, alpha: f64, c: &[f64], mode: QuadratureMode) -> Vec<f64> {
    let t = grid.nodes();
    let h = grid.step();
    let a = grid.a();
    let n = grid.len();
    let c = |r: usize| c[r];
    let mut out = vec![0.0; n];
    let mut running = 0.0;
    for i in 1..n {
        if i >= 2 {
            let r = i - 1;
            running += (alpha * (t[r] - a)).exp() * c(r);
        }
        let decay = (-alpha * (t[i] - a)).exp();
        let mut value = h * decay * running + 0.5 * h * c(i);
        if mode == QuadratureMode::FullTrapezoid {
            value += 0.5 * h * decay * c(0);
        }
        out[i] = value;
    }
    out
}

/// Max over components and nodes of `|s1 - s2|`.
pub fn successive_diff_norm(s1: &[PiecewiseLinear], s2: &[PiecewiseLinear]) -> Result<f64> {
    if s1.len() != s2.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} vs {} components",
            s1.len(),
            s2.len()
        )));
    }
    let mut norm: f64 = 0.0;
    for (x, y) in s1.iter().zip(s2) {
        if x.grid() != y.grid() {
            return Err(Error::ShapeMismatch(
                "components live on different grids".into(),
            ));
        }
        for (p, q) in x.values().iter().zip(y.values()) {
            norm = norm.max((p - q).abs());
        }
    }
    Ok(norm)
}

/// Result of [`solve`]. Nodal values are stored in the shifted variables
/// (zero at `a`); accessors add the initial values back.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub grid: Arc<Grid>,
    pub offset: Vec<f64>,
    pub mode: QuadratureMode,
    pub final_state: Vec<PiecewiseLinear>,
    /// Per-iteration nodal values in the original variables,
    /// `history[m][component][node]`, when requested.
    pub history: Option<Vec<Vec<Vec<f64>>>>,
    /// `diffs[m]` is the max-norm of `u_{m+1} - u_m`.
    pub diffs: Vec<f64>,
    /// Absolute error of the final iterate, `errors[component][node]`.
    pub errors: Option<Vec<Vec<f64>>>,
    /// Max-norm error of each iterate against the exact solution.
    pub error_by_iteration: Option<Vec<f64>>,
    /// Exact solution at the nodes, `exact_rows[node][component]`.
    pub exact_rows: Option<Vec<Vec<f64>>>,
    pub iterations_run: usize,
    pub wall_time: Duration,
}

impl SolveReport {
    pub fn components(&self) -> usize {
        self.final_state.len()
    }

    /// Nodal values of one component in the original variables.
    pub fn nodal_values(&self, component: usize) -> Vec<f64> {
        let off = self.offset[component];
        self.final_state[component]
            .values()
            .iter()
            .map(|v| v + off)
            .collect()
    }

    /// Node-major values, `out[node][component]`.
    pub fn node_rows(&self) -> Vec<Vec<f64>> {
        (0..self.grid.len())
            .map(|r| {
                self.final_state
                    .iter()
                    .zip(&self.offset)
                    .map(|(pl, off)| pl.values()[r] + off)
                    .collect()
            })
            .collect()
    }

    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.final_state
            .iter()
            .zip(&self.offset)
            .map(|(pl, off)| Ok(pl.eval(t)? + off))
            .collect()
    }

    pub fn max_error(&self) -> Option<f64> {
        self.errors
            .as_ref()
            .map(|errs| errs.iter().flatten().fold(0.0, |acc: f64, e| acc.max(*e)))
    }
}

pub fn eval_solution(report: &SolveReport, t: f64) -> Result<Vec<f64>> {
    report.eval(t)
}

fn exact_rows(sys: &IvpSystem, grid: &Grid) -> Option<Vec<Vec<f64>>> {
    sys.exact()
        .map(|exact| grid.nodes().iter().map(|&t| exact(t)).collect())
}

fn max_error_against(state: &[PiecewiseLinear], offset: &[f64], exact: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (j, pl) in state.iter().enumerate() {
        for (v, row) in pl.values().iter().zip(exact) {
            worst = worst.max((v + offset[j] - row[j]).abs());
        }
    }
    worst
}

/// Run the iteration from `u0` (or the system's starting iterate, or zero).
pub fn solve(
    sys: &IvpSystem,
    cfg: &SolveConfig,
    u0: Option<&[PiecewiseLinear]>,
) -> Result<SolveReport> {
    cfg.validate()?;
    let started = Instant::now();
    let grid = Arc::new(Grid::new(sys.a(), sys.t_end(), cfg.n)?);
    let shifted = sys.shift_to_zero();
    let mults = sys.multipliers()?;
    let k = sys.len();

    let mut state: Vec<PiecewiseLinear> = match (u0, shifted.initial_guess()) {
        (Some(given), _) => {
            if given.len() != k {
                return Err(Error::ShapeMismatch(format!(
                    "{} starting components for {} equations",
                    given.len(),
                    k
                )));
            }
            if given.iter().any(|pl| pl.grid().as_ref() != grid.as_ref()) {
                return Err(Error::ShapeMismatch(
                    "starting iterate grid differs from the solve grid".into(),
                ));
            }
            given.to_vec()
        }
        (None, Some(guess)) => {
            let rows: Vec<Vec<f64>> = grid.nodes().iter().map(|&t| guess(t)).collect();
            if rows.iter().any(|r| r.len() != k) {
                return Err(Error::ShapeMismatch(
                    "starting iterate has the wrong number of components".into(),
                ));
            }
            (0..k)
                .map(|j| {
                    let values: Vec<f64> = rows.iter().map(|row| row[j]).collect();
                    if let Some(r) = values.iter().skip(1).position(|v| !v.is_finite()) {
                        return Err(Error::NonFiniteSample {
                            node: r + 2,
                            value: values[r + 1],
                        });
                    }
                    PiecewiseLinear::from_values(grid.clone(), values)
                })
                .collect::<Result<_>>()?
        }
        (None, None) => vec![PiecewiseLinear::zero(grid.clone()); k],
    };

    let offset = sys.initial().to_vec();
    let exact = exact_rows(sys, &grid);
    if let Some(rows) = &exact {
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::ShapeMismatch(
                "exact solution has the wrong number of components".into(),
            ));
        }
    }
    let unshifted = |state: &[PiecewiseLinear]| -> Vec<Vec<f64>> {
        state
            .iter()
            .zip(&offset)
            .map(|(pl, off)| pl.values().iter().map(|v| v + off).collect())
            .collect()
    };

    let opts = cfg.step_options();
    let mut diffs = Vec::with_capacity(cfg.m_max);
    let mut history = cfg.keep_history.then(Vec::new);
    let mut error_by_iteration = exact.as_ref().map(|_| Vec::new());
    let mut iterations_run = 0;
    for iteration in 1..=cfg.m_max {
        let next = ivim_step_with(&state, &shifted, &grid, &mults, opts).map_err(|e| match e {
            Error::NonFiniteValue { component, node } => Error::Divergence {
                iteration,
                component,
                node,
                max_norm: f64::INFINITY,
            },
            other => other,
        })?;
        for (j, pl) in next.iter().enumerate() {
            if let Some(r) = pl
                .values()
                .iter()
                .position(|v| v.abs() > cfg.divergence_cap)
            {
                return Err(Error::Divergence {
                    iteration,
                    component: j + 1,
                    node: r + 1,
                    max_norm: pl.max_abs(),
                });
            }
        }
        let diff = successive_diff_norm(&state, &next)?;
        diffs.push(diff);
        if let Some(h) = history.as_mut() {
            h.push(unshifted(&next));
        }
        if let (Some(errs), Some(rows)) = (error_by_iteration.as_mut(), exact.as_ref()) {
            errs.push(max_error_against(&next, &offset, rows));
        }
        state = next;
        iterations_run = iteration;
        if cfg.stop_tol > 0.0 && diff <= cfg.stop_tol {
            break;
        }
    }

    let errors = exact.as_ref().map(|rows| {
        (0..k)
            .map(|j| {
                state[j]
                    .values()
                    .iter()
                    .zip(rows)
                    .map(|(v, row)| (v + offset[j] - row[j]).abs())
                    .collect()
            })
            .collect()
    });

    Ok(SolveReport {
        grid,
        offset,
        mode: cfg.mode,
        final_state: state,
        history,
        diffs,
        errors,
        error_by_iteration,
        exact_rows: exact,
        iterations_run,
        wall_time: started.elapsed(),
    })
}
