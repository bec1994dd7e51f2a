//! Riemannian conjugate gradient with Armijo backtracking and Polak-Ribiere+
//! direction updates.
//!
//! The minimizer is generic over any parameter space implementing
//! [`ManifoldPoint`]. Objective callbacks return the value together with the
//! Euclidean gradients packed in the point's tangent container; the solver
//! maps them to Riemannian gradients itself.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldPoint, Tangent};
use crate::seeded_rng;

/// Number of consecutive low-progress iterations that triggers a stall stop.
const STALL_WINDOW: usize = 5;
/// Central-difference step used by [`grad_check`].
const FD_STEP: f64 = 1e-5;
/// Constraint drift beyond this re-imposes the manifold constraints.
const DRIFT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RcgConfig {
    pub max_iter: usize,
    /// Stop when the Riemannian gradient norm falls to or below this.
    pub grad_tol: f64,
    /// Stop after [`STALL_WINDOW`] consecutive iterations whose relative
    /// objective decrease stays below this.
    pub rel_obj_tol: f64,
    pub armijo_c1: f64,
    pub backtrack_factor: f64,
    pub init_step: f64,
    pub max_backtracks: usize,
    /// Iterations between forced steepest-descent restarts; `None` uses the
    /// point's own dimension (d·K for the subspace models).
    pub restart_period: Option<usize>,
}

impl Default for RcgConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            rel_obj_tol: 1e-9,
            armijo_c1: 1e-4,
            backtrack_factor: 0.5,
            init_step: 1.0,
            max_backtracks: 50,
            restart_period: None,
        }
    }
}

impl RcgConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.armijo_c1 > 0.0 && self.armijo_c1 < 1.0) {
            return Err(Error::invalid(format!(
                "armijo_c1 must lie in (0,1), got {}",
                self.armijo_c1
            )));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::invalid(format!(
                "backtrack_factor must lie in (0,1), got {}",
                self.backtrack_factor
            )));
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return Err(Error::invalid(format!(
                "init_step must be positive, got {}",
                self.init_step
            )));
        }
        if self.grad_tol < 0.0 || self.rel_obj_tol < 0.0 {
            return Err(Error::invalid("tolerances must be nonnegative"));
        }
        if self.restart_period == Some(0) {
            return Err(Error::invalid("restart_period must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// Riemannian gradient norm reached `grad_tol`.
    GradTol,
    /// Relative objective decrease stayed below `rel_obj_tol` for
    /// [`STALL_WINDOW`] consecutive iterations.
    ObjectiveStall,
    MaxIter,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    /// Accepted step size; 0 for the initial record.
    pub step: f64,
    /// Whether the direction was reset to steepest descent this iteration.
    pub restarted: bool,
}

/// Per-iteration optimization record plus the termination reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RcgTrace {
    pub records: Vec<TraceRecord>,
    pub reason: StopReason,
}

impl RcgTrace {
    pub fn final_objective(&self) -> f64 {
        self.records.last().map(|r| r.objective).unwrap_or(f64::NAN)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.records.last().map(|r| r.grad_norm).unwrap_or(f64::NAN)
    }

    pub fn initial_objective(&self) -> f64 {
        self.records
            .first()
            .map(|r| r.objective)
            .unwrap_or(f64::NAN)
    }

    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

fn check_finite(value: f64, iter: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteObjective { iter, value })
    }
}

/// Minimizes `objective` over the manifold starting at `init`.
///
/// The direction recurrence is `dir_k = −grad_k + β_k·T(dir_{k−1})` with the
/// PR+ coefficient `β = max(0, ⟨g_k, g_k − T(g_{k−1})⟩ / ⟨g_{k−1}, g_{k−1}⟩)`,
/// transported through the projection transport `T`. Steps are found by
/// Armijo backtracking against the sufficient decrease
/// `F(next) ≤ F(cur) − c1·λ·‖grad‖²`; if the search exhausts its budget the
/// direction falls back to steepest descent once before erroring out.
pub fn minimize<P, F>(mut objective: F, init: P, cfg: &RcgConfig) -> Result<(P, RcgTrace)>
where
    P: ManifoldPoint,
    F: FnMut(&P) -> Result<(f64, P::Tangent)>,
{
    cfg.validate()?;
    let restart_period = cfg
        .restart_period
        .unwrap_or_else(|| init.restart_dim())
        .max(1);

    let mut point = init;
    let (mut f_cur, mut euclid) = objective(&point)?;
    f_cur = check_finite(f_cur, 0)?;
    let mut grad = point.project(&euclid);
    let mut grad_norm = grad.norm();

    let mut records = vec![TraceRecord {
        iter: 0,
        objective: f_cur,
        grad_norm,
        step: 0.0,
        restarted: false,
    }];

    let mut prev_grad: Option<P::Tangent> = None;
    let mut prev_dir: Option<P::Tangent> = None;
    let mut prev_step = cfg.init_step;
    let mut since_restart = 0usize;
    let mut stall_count = 0usize;

    let mut reason = StopReason::MaxIter;
    for iter in 0..cfg.max_iter {
        if grad_norm <= cfg.grad_tol {
            reason = StopReason::GradTol;
            break;
        }

        // Direction update.
        let mut restarted = false;
        let mut dir = match (&prev_grad, &prev_dir) {
            (Some(pg), Some(pd)) if since_restart < restart_period => {
                let pg_t = point.transport(pg);
                let pd_t = point.transport(pd);
                let denom = pg.inner(pg);
                let beta = if denom > 0.0 {
                    (grad.inner(&grad.add_scaled(-1.0, &pg_t)) / denom).max(0.0)
                } else {
                    0.0
                };
                if beta == 0.0 {
                    restarted = true;
                    grad.scale(-1.0)
                } else {
                    pd_t.scale(beta).add_scaled(-1.0, &grad)
                }
            }
            _ => {
                restarted = true;
                grad.scale(-1.0)
            }
        };
        if restarted {
            since_restart = 0;
        }
        // Guard: a conjugate direction that fails to descend is discarded.
        if !restarted && grad.inner(&dir) >= 0.0 {
            dir = grad.scale(-1.0);
            restarted = true;
            since_restart = 0;
        }

        // Armijo backtracking with a warm-started step.
        let required_slope = cfg.armijo_c1 * grad_norm * grad_norm;
        let start_step = (prev_step * 2.0).clamp(1e-12, cfg.init_step);
        let mut accepted: Option<(P, f64, P::Tangent, f64)> = None;
        let mut tried_steepest = false;
        loop {
            let mut step = start_step;
            for _ in 0..=cfg.max_backtracks {
                let cand = point.retract(&dir, step)?;
                let (f_new, euclid_new) = objective(&cand)?;
                let f_new = check_finite(f_new, iter + 1)?;
                if f_new <= f_cur - required_slope * step {
                    accepted = Some((cand, f_new, euclid_new, step));
                    break;
                }
                step *= cfg.backtrack_factor;
            }
            if accepted.is_some() {
                break;
            }
            if tried_steepest || restarted {
                return Err(Error::LineSearchFailed {
                    iter,
                    backtracks: cfg.max_backtracks,
                });
            }
            // Fall back to steepest descent once.
            dir = grad.scale(-1.0);
            restarted = true;
            since_restart = 0;
            tried_steepest = true;
        }
        let (mut next_point, f_new, euclid_new, step) =
            accepted.expect("loop exits only with an accepted step");

        if next_point.constraint_residual() > DRIFT_TOL {
            next_point = next_point.renormalize()?;
        }

        // Bookkeeping for the next direction.
        prev_grad = Some(grad.clone());
        prev_dir = Some(dir);
        prev_step = step;
        since_restart += 1;

        let rel_decrease = (f_cur - f_new) / f_cur.abs().max(1.0);
        if rel_decrease < cfg.rel_obj_tol {
            stall_count += 1;
        } else {
            stall_count = 0;
        }

        point = next_point;
        f_cur = f_new;
        euclid = euclid_new;
        grad = point.project(&euclid);
        grad_norm = grad.norm();

        records.push(TraceRecord {
            iter: iter + 1,
            objective: f_cur,
            grad_norm,
            step,
            restarted,
        });

        if grad_norm <= cfg.grad_tol {
            reason = StopReason::GradTol;
            break;
        }
        if stall_count >= STALL_WINDOW {
            reason = StopReason::ObjectiveStall;
            break;
        }
    }
    if grad_norm <= cfg.grad_tol {
        reason = StopReason::GradTol;
    }

    Ok((point, RcgTrace { records, reason }))
}

/// Compares the Riemannian gradient against central finite differences of the
/// objective along `probes` random tangent directions, and returns the
/// largest relative error.
///
/// The difference quotient `(F(R(p, t·V)) − F(R(p, −t·V))) / 2t` at
/// `t = 1e-5` is matched against `⟨grad, V⟩`; the caller is responsible for
/// probing at points where the objective is differentiable.
pub fn grad_check<P, F>(mut objective: F, point: &P, probes: usize, seed: u64) -> Result<f64>
where
    P: ManifoldPoint,
    F: FnMut(&P) -> Result<(f64, P::Tangent)>,
{
    let (value, euclid) = objective(point)?;
    check_finite(value, 0)?;
    let grad = point.project(&euclid);

    let mut rng = seeded_rng(seed);
    let mut max_rel = 0.0f64;
    let mut done = 0usize;
    while done < probes {
        let ambient = point.random_ambient(&mut rng);
        let v = point.project(&ambient);
        let norm = v.norm();
        if norm < 1e-12 {
            continue;
        }
        let v = v.scale(1.0 / norm);
        let analytic = grad.inner(&v);

        let plus = point.retract(&v, FD_STEP)?;
        let minus = point.retract(&v.scale(-1.0), FD_STEP)?;
        let (f_plus, _) = objective(&plus)?;
        let (f_minus, _) = objective(&minus)?;
        let fd = (check_finite(f_plus, 0)? - check_finite(f_minus, 0)?) / (2.0 * FD_STEP);

        let rel = (analytic - fd).abs() / fd.abs().max(1e-12);
        max_rel = max_rel.max(rel);
        done += 1;
    }
    Ok(max_rel)
}
