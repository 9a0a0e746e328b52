//! Uniform grids, first-order B-spline hat functions and the piecewise-linear
//! space spanned by hats 2..n.
//!
//! All node and basis indices are 1-based: node 1 is the left endpoint `a`,
//! node `n` is the right endpoint. Storage is 0-based internally.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Uniform partition of `[a, t_end]` into `n - 1` cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    a: f64,
    t_end: f64,
    n: usize,
    h: f64,
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(a: f64, t_end: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && t_end.is_finite()) || t_end <= a {
            return Err(Error::InvalidInterval { a, t_end });
        }
        if n < 2 {
            return Err(Error::TooFewNodes(n));
        }
        let h = (t_end - a) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|j| a + j as f64 * h).collect();
        nodes[n - 1] = t_end;
        Ok(Grid {
            a,
            t_end,
            n,
            h,
            nodes,
        })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    /// Number of cells, `n - 1`.
    pub fn cells(&self) -> usize {
        self.n - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Node `t_i`, 1-based.
    pub fn node(&self, i: usize) -> Result<f64> {
        self.check_index(i, 1)?;
        Ok(self.nodes[i - 1])
    }

    fn check_index(&self, i: usize, min: usize) -> Result<()> {
        if i < min || i > self.n {
            return Err(Error::IndexOutOfRange {
                index: i,
                min,
                max: self.n,
            });
        }
        Ok(())
    }

    pub(crate) fn check_domain(&self, t: f64) -> Result<()> {
        if !(t >= self.a && t <= self.t_end) {
            return Err(Error::OutOfDomain {
                t,
                a: self.a,
                t_end: self.t_end,
            });
        }
        Ok(())
    }

    /// Hat function `phi_i(t)` for `i` in `2..=n`.
    ///
    /// Interior hats ramp up on `[t_{i-1}, t_i)` and down on `[t_i, t_{i+1}]`;
    /// the last hat only has the rising half.
    pub fn hat(&self, i: usize, t: f64) -> Result<f64> {
        self.check_index(i, 2)?;
        self.check_domain(t)?;
        let left = self.nodes[i - 2];
        let centre = self.nodes[i - 1];
        if t < left {
            return Ok(0.0);
        }
        if t < centre {
            return Ok((t - left) / self.h);
        }
        if i == self.n {
            // t == t_n here
            return Ok(1.0);
        }
        let right = self.nodes[i];
        if t <= right {
            Ok((right - t) / self.h)
        } else {
            Ok(0.0)
        }
    }

    /// `mu_{r,i}`: the integral of `phi_r` over `[a, t_i]`.
    pub fn mu_weight(&self, r: usize, i: usize) -> Result<f64> {
        self.check_index(r, 2)?;
        self.check_index(i, 2)?;
        Ok(mu_weight(r, i, self.h))
    }

    /// Index `j` (0-based) of the cell `[t_j, t_{j+1})` containing `t`; the
    /// last cell is closed.
    fn cell_of(&self, t: f64) -> usize {
        let last = self.n - 2;
        let mut j = (((t - self.a) / self.h).floor().max(0.0) as usize).min(last);
        if j < last && t >= self.nodes[j + 1] {
            j += 1;
        }
        if j > 0 && t < self.nodes[j] {
            j -= 1;
        }
        j
    }
}

/// Closed form of `mu_{r,i}` for hat index `r` and upper node `i`.
pub fn mu_weight(r: usize, i: usize, h: f64) -> f64 {
    if i < r {
        0.0
    } else if i == r {
        0.5 * h
    } else {
        h
    }
}

/// An element of the span of hats `2..=n`: nodal values with the first one
/// pinned to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinear {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl PiecewiseLinear {
    pub fn zero(grid: Arc<Grid>) -> Self {
        let values = vec![0.0; grid.len()];
        PiecewiseLinear { grid, values }
    }

    /// Build from nodal values. `values[0]` is overwritten with zero.
    pub fn from_values(grid: Arc<Grid>, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} nodal values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        values[0] = 0.0;
        Ok(PiecewiseLinear { grid, values })
    }

    /// Interpolate `sampler` at nodes `2..=n`. Node 1 is pinned to zero
    /// whatever the sampler returns there.
    pub fn project<F>(grid: Arc<Grid>, mut sampler: F) -> Result<Self>
    where
        F: FnMut(f64) -> f64,
    {
        let mut values = Vec::with_capacity(grid.len());
        values.push(0.0);
        for (j, &t) in grid.nodes().iter().enumerate().skip(1) {
            let value = sampler(t);
            if !value.is_finite() {
                return Err(Error::NonFiniteSample { node: j + 1, value });
            }
            values.push(value);
        }
        Ok(PiecewiseLinear { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    /// Nodal values, 0-based storage (`values()[0]` is node 1).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Nodal value at node `i`, 1-based.
    pub fn value(&self, i: usize) -> Result<f64> {
        self.grid.check_index(i, 1)?;
        Ok(self.values[i - 1])
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        self.grid.check_domain(t)?;
        let j = self.grid.cell_of(t);
        let nodes = self.grid.nodes();
        if t == nodes[j] {
            return Ok(self.values[j]);
        }
        if t == nodes[j + 1] {
            return Ok(self.values[j + 1]);
        }
        let theta = (t - nodes[j]) / self.grid.step();
        Ok(self.values[j] + theta * (self.values[j + 1] - self.values[j]))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }
}
