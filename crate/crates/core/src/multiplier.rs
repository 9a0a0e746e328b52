//! Lagrange multipliers `lambda(s, t)` and the boundary/integrand terms of the
//! integrated-by-parts correction functional.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Largest `|alpha * (s - t)|` accepted before `exp` is considered to overflow.
pub const EXPONENT_GUARD: f64 = 700.0;

pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Multiplier {
    /// `lambda(s, t) = -exp(alpha (s - t))`, the multiplier for `L u = u' + alpha u`.
    Exponential { alpha: f64 },
    /// Caller-supplied `lambda` and its analytic `s`-derivative.
    Custom {
        lambda: KernelFn,
        dlambda_ds: KernelFn,
    },
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Multiplier::Exponential { alpha } => {
                f.debug_struct("Exponential").field("alpha", alpha).finish()
            }
            Multiplier::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl Multiplier {
    pub fn exponential(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() {
            return Err(Error::NonFiniteAlpha(alpha));
        }
        Ok(Multiplier::Exponential { alpha })
    }

    pub fn custom<L, D>(lambda: L, dlambda_ds: D) -> Self
    where
        L: Fn(f64, f64) -> f64 + Send + Sync + 'static,
        D: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        Multiplier::Custom {
            lambda: Arc::new(lambda),
            dlambda_ds: Arc::new(dlambda_ds),
        }
    }

    pub fn alpha(&self) -> Option<f64> {
        match self {
            Multiplier::Exponential { alpha } => Some(*alpha),
            Multiplier::Custom { .. } => None,
        }
    }

    fn exp_kernel(alpha: f64, s: f64, t: f64) -> Result<f64> {
        let exponent = alpha * (s - t);
        if exponent.abs() > EXPONENT_GUARD {
            return Err(Error::Overflow { exponent });
        }
        Ok(exponent.exp())
    }

    pub fn lambda(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            Multiplier::Exponential { alpha } => Ok(-Self::exp_kernel(*alpha, s, t)?),
            Multiplier::Custom { lambda, .. } => finite(lambda(s, t), s - t),
        }
    }

    pub fn dlambda_ds(&self, s: f64, t: f64) -> Result<f64> {
        match self {
            Multiplier::Exponential { alpha } => Ok(-alpha * Self::exp_kernel(*alpha, s, t)?),
            Multiplier::Custom { dlambda_ds, .. } => finite(dlambda_ds(s, t), s - t),
        }
    }

    /// `G(t) = (1 + lambda(t, t)) u(t) - lambda(a, t) u(a)`.
    pub fn g_term(&self, u_at_t: f64, u_at_a: f64, t: f64, a: f64) -> Result<f64> {
        let diag = 1.0 + self.lambda(t, t)?;
        let boundary = if u_at_a == 0.0 {
            0.0
        } else {
            self.lambda(a, t)? * u_at_a
        };
        Ok(diag * u_at_t - boundary)
    }

    /// `H(s, t) = dlambda/ds(s, t) u(s) + lambda(s, t) f(s, u(s))`, where
    /// `rhs_value` is `f(s, u(s))`.
    pub fn h_integrand(&self, rhs_value: f64, u_value: f64, s: f64, t: f64) -> Result<f64> {
        Ok(self.dlambda_ds(s, t)? * u_value + self.lambda(s, t)? * rhs_value)
    }
}

fn finite(value: f64, exponent: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Overflow { exponent })
    }
}
