//! Two-stage maximization over the closed ball `|x| ≤ 1 − δ`: a
//! deterministic rectangle-division global search followed by projected
//! quasi-Newton refinement.

mod direct;
mod local;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sphere::Vec3;

pub use direct::global_search;
pub use local::local_refine;

/// The feasible set `{x : |x| ≤ 1 − δ}` inside its bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchDomain {
    pub delta: f64,
}

impl Default for SearchDomain {
    fn default() -> Self {
        SearchDomain { delta: 1e-8 }
    }
}

impl SearchDomain {
    pub fn new(delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(SearchDomain { delta })
    }

    pub fn radius(&self) -> f64 {
        1.0 - self.delta
    }

    pub fn contains(&self, x: Vec3) -> bool {
        x.norm() <= self.radius()
    }

    /// Radial projection onto the feasible ball.
    pub fn project(&self, x: Vec3) -> Vec3 {
        let r = self.radius();
        let n = x.norm();
        if n <= r {
            x
        } else {
            let p = (r / n) * x;
            // guard against the scaled norm rounding above r
            if p.norm() > r {
                ((r / n) * (1.0 - f64::EPSILON)) * x
            } else {
                p
            }
        }
    }
}

/// Stopping rules shared by both stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_evals: usize,
    pub max_seconds: f64,
    pub abs_tol_f: f64,
    pub abs_tol_x: f64,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_evals: 10_000,
            max_seconds: 600.0,
            abs_tol_f: 1e-8,
            abs_tol_x: 1e-8,
        }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_evals == 0 {
            return Err(Error::InvalidArgument("evaluation budget must be positive".into()));
        }
        if !(self.max_seconds > 0.0 && self.abs_tol_f > 0.0 && self.abs_tol_x > 0.0) {
            return Err(Error::InvalidArgument(format!("budget entries must be positive: {self:?}")));
        }
        Ok(())
    }

    pub(crate) fn time_limit(&self) -> Duration {
        Duration::from_secs_f64(self.max_seconds.min(1e9))
    }
}

/// A function to maximize over the ball. Implementations must be pure.
pub trait Objective: Sync {
    fn value(&self, x: Vec3) -> f64;

    /// Value and gradient; `None` if the objective is derivative-free.
    fn value_grad(&self, x: Vec3) -> Option<(f64, Vec3)> {
        let _ = x;
        None
    }
}

/// Adapts closures `value` and optional `value_grad` into an [`Objective`].
pub struct FnObjective<F, G = fn(Vec3) -> (f64, Vec3)> {
    pub value: F,
    pub grad: Option<G>,
}

impl<F: Fn(Vec3) -> f64 + Sync> FnObjective<F> {
    pub fn new(value: F) -> Self {
        FnObjective { value, grad: None }
    }
}

impl<F, G> FnObjective<F, G>
where
    F: Fn(Vec3) -> f64 + Sync,
    G: Fn(Vec3) -> (f64, Vec3) + Sync,
{
    pub fn with_grad(value: F, grad: G) -> Self {
        FnObjective { value, grad: Some(grad) }
    }
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(Vec3) -> f64 + Sync,
    G: Fn(Vec3) -> (f64, Vec3) + Sync,
{
    fn value(&self, x: Vec3) -> f64 {
        (self.value)(x)
    }

    fn value_grad(&self, x: Vec3) -> Option<(f64, Vec3)> {
        self.grad.as_ref().map(|g| g(x))
    }
}

/// Why a search stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    Evaluations,
    Time,
    ToleranceF,
    ToleranceX,
    NoProgress,
}

/// Outcome of either stage.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub x: Vec3,
    pub value: f64,
    pub evals: usize,
    pub stop: StopReason,
    /// Accepted values in order; non-decreasing for the local stage.
    pub trace: Vec<f64>,
    pub warnings: Vec<String>,
}
