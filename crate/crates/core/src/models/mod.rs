//! Discriminative-subspace one-class models: objectives, gradients,
//! initialization, fitting, and per-point scoring.
//!
//! Three variants share the same geometric idea of sandwiching the normal
//! class between two frames:
//! - [`bods`]: a single hyperplane pair on the unit sphere, linear hinges;
//! - [`gods`]: K-plane subspaces on the Stiefel manifold, squared hinges;
//! - [`kgods`]: the dual form on generalized Stiefel manifolds.

pub mod bods;
pub mod gods;
pub mod io;
pub mod kgods;

pub use bods::{bods_objective_grad, bods_point_score, fit_bods, BodsModel};
pub use gods::{
    fit_gods, gods_objective_grad, gods_point_score, init_params, random_kink_free_point, GodsModel,
};
pub use io::{read_model, write_model, ModelFile, ModelKind, ScoringModel};
pub use kgods::{
    fit_kgods, kernel_matrices, kgods_objective_grad, DualPair, DualTangent, KernelMatrices,
    KgodsModel, KgodsProblem,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the nonnegative slack variables are handled during objective
/// evaluation.
///
/// For fixed parameters the objective is convex and separable in each slack,
/// so the optimum has a closed form; `ClosedForm` substitutes it exactly
/// (`ξ* = max(0, t − C/(2γ))` for a squared hinge of weight `γ` at margin
/// deficit `t`), while `Zero` pins every slack at 0, leaving plain hinges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SlackMode {
    #[default]
    Zero,
    ClosedForm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Hyperplanes per subspace.
    pub k: usize,
    /// Margin η each normal point must clear on both sides.
    pub eta: f64,
    /// Weight of the min-side (positive-orthant) hinge.
    pub nu: f64,
    /// Slack penalty; only active in [`SlackMode::ClosedForm`].
    pub c: f64,
    /// Unit-normalize data rows before fitting and scoring.
    pub normalize_rows: bool,
    pub slack: SlackMode,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            k: 1,
            eta: 0.1,
            nu: 1.0,
            c: 1.0,
            normalize_rows: true,
            slack: SlackMode::Zero,
        }
    }
}

impl HyperParams {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::invalid(format!(
                "nu must be positive, got {}",
                self.nu
            )));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(Error::invalid(format!(
                "C must be nonnegative, got {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Loss value and its derivative with respect to the margin deficit.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HingeEval {
    pub loss: f64,
    pub slope: f64,
}

/// Squared hinge `γ·[t − ξ*]₊² + C·ξ*` with the slack eliminated per `mode`.
///
/// In closed form the derivative saturates at `C` once `t` exceeds
/// `C/(2γ)`; the function stays C¹ across both the kink and the switch.
pub(crate) fn squared_hinge(t: f64, gamma: f64, c: f64, mode: SlackMode) -> HingeEval {
    if t <= 0.0 {
        return HingeEval {
            loss: 0.0,
            slope: 0.0,
        };
    }
    match mode {
        SlackMode::Zero => HingeEval {
            loss: gamma * t * t,
            slope: 2.0 * gamma * t,
        },
        SlackMode::ClosedForm => {
            let cap = c / (2.0 * gamma);
            if t <= cap {
                HingeEval {
                    loss: gamma * t * t,
                    slope: 2.0 * gamma * t,
                }
            } else {
                let xi = t - cap;
                HingeEval {
                    loss: gamma * cap * cap + c * xi,
                    slope: c,
                }
            }
        }
    }
}

/// Linear hinge `[t − ξ*]₊ + C·ξ*`; the slack optimum is all-or-nothing, so
/// closed form reduces to a `min(1, C)` weight. The subgradient at the kink
/// is 0.
pub(crate) fn linear_hinge(t: f64, c: f64, mode: SlackMode) -> HingeEval {
    if t <= 0.0 {
        return HingeEval {
            loss: 0.0,
            slope: 0.0,
        };
    }
    let weight = match mode {
        SlackMode::Zero => 1.0,
        SlackMode::ClosedForm => c.min(1.0),
    };
    HingeEval {
        loss: weight * t,
        slope: weight,
    }
}

/// Lowest-index argmin over a slice (deterministic tie-break).
pub(crate) fn argmin(values: &[f64]) -> (usize, f64) {
    let mut best = (0usize, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Lowest-index argmax over a slice (deterministic tie-break).
pub(crate) fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0usize, values[0]);
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
