//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use crate::error::{MoqaError, Result};
use crate::numerics::{dot, norm2};

/// Optimizer settings. `history` is the number of curvature pairs kept.
#[derive(Debug, Clone, Copy)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iters: usize,
    /// Stop when the gradient Euclidean norm drops below this.
    pub grad_tol: f64,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Cap on objective evaluations per line search.
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> LbfgsConfig {
        LbfgsConfig {
            history: 10,
            max_iters: 500,
            grad_tol: 1e-6,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 40,
        }
    }
}

/// Why the optimizer stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Gradient norm fell below `grad_tol`.
    Converged,
    MaxIterations,
    /// No acceptable step found, including after a steepest-descent restart.
    LineSearchFailed,
}

/// One accepted iteration.
#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub loss: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
    pub trace: Vec<TraceRow>,
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimize `objective`, which writes the gradient into its second argument
/// and returns the loss. Errors if the objective is non-finite at the start
/// point; later non-finite trial points are rejected by the line search.
pub fn minimize<F>(mut objective: F, x0: Vec<f64>, cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let mut grad = vec![0.0; n];
    let mut loss = objective(&x, &mut grad);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(MoqaError::NonFinite(
            "objective at the initial point".into(),
        ));
    }

    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(cfg.history);
    let mut trace = Vec::new();
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for iter in 0..cfg.max_iters {
        let grad_norm = norm2(&grad);
        trace.push(TraceRow {
            iter,
            loss,
            grad_norm,
        });
        if grad_norm <= cfg.grad_tol {
            termination = Termination::Converged;
            break;
        }

        let mut direction = two_loop_direction(&grad, &pairs);
        let mut dg = dot(&direction, &grad);
        if dg >= 0.0 {
            // The curvature memory produced a non-descent direction; restart
            // from steepest descent.
            pairs.clear();
            direction = grad.iter().map(|g| -g).collect();
            dg = -grad_norm * grad_norm;
        }

        let initial_step = if pairs.is_empty() {
            1.0 / grad_norm.max(1.0)
        } else {
            1.0
        };
        let search = line_search(
            &mut objective,
            &x,
            loss,
            &grad,
            &direction,
            dg,
            initial_step,
            cfg,
        );
        let Some(accepted) = search else {
            if pairs.is_empty() {
                termination = Termination::LineSearchFailed;
                break;
            }
            // Retry the same iteration as steepest descent.
            pairs.clear();
            let direction: Vec<f64> = grad.iter().map(|g| -g).collect();
            let dg = -grad_norm * grad_norm;
            let retry = line_search(
                &mut objective,
                &x,
                loss,
                &grad,
                &direction,
                dg,
                1.0 / grad_norm.max(1.0),
                cfg,
            );
            match retry {
                Some(accepted) => {
                    update_state(&mut x, &mut grad, &mut loss, &mut pairs, accepted, cfg);
                    iterations = iter + 1;
                    continue;
                }
                None => {
                    termination = Termination::LineSearchFailed;
                    break;
                }
            }
        };
        update_state(&mut x, &mut grad, &mut loss, &mut pairs, accepted, cfg);
        iterations = iter + 1;
    }

    Ok(LbfgsOutcome {
        grad_norm: norm2(&grad),
        x,
        loss,
        iterations,
        termination,
        trace,
    })
}

struct AcceptedStep {
    x: Vec<f64>,
    grad: Vec<f64>,
    loss: f64,
}

fn update_state(
    x: &mut Vec<f64>,
    grad: &mut Vec<f64>,
    loss: &mut f64,
    pairs: &mut VecDeque<Pair>,
    accepted: AcceptedStep,
    cfg: &LbfgsConfig,
) {
    let s: Vec<f64> = accepted.x.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
    let y: Vec<f64> = accepted
        .grad
        .iter()
        .zip(grad.iter())
        .map(|(a, b)| a - b)
        .collect();
    let sy = dot(&s, &y);
    // Keep the inverse Hessian estimate positive definite.
    if sy > 1e-10 * norm2(&s) * norm2(&y) {
        if pairs.len() == cfg.history {
            pairs.pop_front();
        }
        pairs.push_back(Pair { rho: 1.0 / sy, s, y });
    }
    *x = accepted.x;
    *grad = accepted.grad;
    *loss = accepted.loss;
}

/// Two-loop recursion: apply the implicit inverse Hessian to -grad.
fn two_loop_direction(grad: &[f64], pairs: &VecDeque<Pair>) -> Vec<f64> {
    let mut q: Vec<f64> = grad.to_vec();
    let mut alphas = vec![0.0; pairs.len()];
    for (idx, pair) in pairs.iter().enumerate().rev() {
        let alpha = pair.rho * dot(&pair.s, &q);
        alphas[idx] = alpha;
        for (qi, yi) in q.iter_mut().zip(&pair.y) {
            *qi -= alpha * yi;
        }
    }
    if let Some(last) = pairs.back() {
        let gamma = dot(&last.s, &last.y) / dot(&last.y, &last.y);
        for qi in &mut q {
            *qi *= gamma;
        }
    }
    for (idx, pair) in pairs.iter().enumerate() {
        let beta = pair.rho * dot(&pair.y, &q);
        for (qi, si) in q.iter_mut().zip(&pair.s) {
            *qi += (alphas[idx] - beta) * si;
        }
    }
    for qi in &mut q {
        *qi = -*qi;
    }
    q
}

struct Trial {
    alpha: f64,
    loss: f64,
    dg: f64,
    x: Vec<f64>,
    grad: Vec<f64>,
}

/// Strong Wolfe line search: bracket then zoom by bisection. Returns the
/// accepted point or None if no acceptable step was found within the
/// evaluation budget. Non-finite trial losses are treated as too-long steps.
#[allow(clippy::too_many_arguments)]
fn line_search<F>(
    objective: &mut F,
    x0: &[f64],
    loss0: f64,
    _grad0: &[f64],
    direction: &[f64],
    dg0: f64,
    initial_step: f64,
    cfg: &LbfgsConfig,
) -> Option<AcceptedStep>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    debug_assert!(dg0 < 0.0);
    let mut evals = 0usize;
    let mut eval = |alpha: f64| -> Trial {
        let x: Vec<f64> = x0
            .iter()
            .zip(direction)
            .map(|(xi, di)| xi + alpha * di)
            .collect();
        let mut grad = vec![0.0; x0.len()];
        let loss = objective(&x, &mut grad);
        let dg = dot(&grad, direction);
        Trial {
            alpha,
            loss,
            dg,
            x,
            grad,
        }
    };
    let armijo = |t: &Trial| t.loss.is_finite() && t.loss <= loss0 + cfg.c1 * t.alpha * dg0;
    let curvature = |t: &Trial| t.dg.is_finite() && t.dg.abs() <= -cfg.c2 * dg0;
    let accept = |t: Trial| {
        Some(AcceptedStep {
            x: t.x,
            grad: t.grad,
            loss: t.loss,
        })
    };

    // Bracketing phase.
    let mut prev_loss = loss0;
    let mut prev: Option<Trial> = None;
    let mut alpha = initial_step;
    let (mut lo, mut hi) = loop {
        if evals >= cfg.max_line_search {
            return None;
        }
        evals += 1;
        let t = eval(alpha);
        if !t.loss.is_finite() {
            // Step overshot into a non-finite region: zoom between the last
            // good point and here.
            let lo = prev.unwrap_or_else(|| Trial {
                alpha: 0.0,
                loss: loss0,
                dg: dg0,
                x: x0.to_vec(),
                grad: vec![0.0; x0.len()],
            });
            break (lo, t);
        }
        if !armijo(&t) || (t.loss >= prev_loss && prev.is_some()) {
            let lo = prev.unwrap_or_else(|| Trial {
                alpha: 0.0,
                loss: loss0,
                dg: dg0,
                x: x0.to_vec(),
                grad: vec![0.0; x0.len()],
            });
            break (lo, t);
        }
        if curvature(&t) {
            return accept(t);
        }
        if t.dg >= 0.0 {
            let hi = prev.unwrap_or_else(|| Trial {
                alpha: 0.0,
                loss: loss0,
                dg: dg0,
                x: x0.to_vec(),
                grad: vec![0.0; x0.len()],
            });
            break (t, hi);
        }
        let next = (alpha * 2.0).min(1e20);
        if next <= alpha {
            return None;
        }
        prev_loss = t.loss;
        prev = Some(t);
        alpha = next;
    };

    // Zoom phase: bisect between lo (satisfies Armijo) and hi.
    for _ in 0..cfg.max_line_search.saturating_sub(evals) {
        let mid_alpha = 0.5 * (lo.alpha + hi.alpha);
        if !(mid_alpha.is_finite()) || mid_alpha == lo.alpha || mid_alpha == hi.alpha {
            break;
        }
        let t = eval(mid_alpha);
        if !armijo(&t) || t.loss >= lo.loss {
            hi = t;
        } else {
            if curvature(&t) {
                return accept(t);
            }
            if t.dg * (hi.alpha - lo.alpha) >= 0.0 {
                hi = Trial {
                    alpha: lo.alpha,
                    loss: lo.loss,
                    dg: lo.dg,
                    x: lo.x.clone(),
                    grad: lo.grad.clone(),
                };
            }
            lo = t;
        }
    }

    // Budget exhausted: fall back to the best Armijo point if it moved.
    if lo.alpha > 0.0 && lo.loss < loss0 {
        accept(lo)
    } else {
        None
    }
}
