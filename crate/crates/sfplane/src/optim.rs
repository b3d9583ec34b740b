//! Unconstrained minimizers with a per-iteration observer.
//!
//! Two methods share one entry point: L-BFGS (two-loop recursion, strong
//! Wolfe line search) and fixed-step batch gradient descent. The observer is
//! invoked once per accepted iterate, including iteration 0 at the starting
//! point, never on line-search trial points. Everything is deterministic:
//! identical inputs produce the identical iterate sequence.

use std::collections::VecDeque;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on objective evaluations inside one line search.
const MAX_LINE_SEARCH_EVALS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Lbfgs,
    Gd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub method: Method,
    pub max_iterations: usize,
    /// Stop when the gradient infinity norm drops below this.
    pub gradient_tolerance: f64,
    /// Stop when `|f_prev - f| / max(|f_prev|, |f|, 1)` drops below this.
    pub relative_objective_tolerance: f64,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
    /// Fixed step for gradient descent.
    pub step_size: f64,
    pub wolfe_c1: f64,
    pub wolfe_c2: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs,
            max_iterations: 200,
            gradient_tolerance: 1e-5,
            relative_objective_tolerance: 2.22e-9,
            memory: 10,
            step_size: 1e-2,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::Config(format!(
                "wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={} c2={}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        if self.memory == 0 {
            return Err(Error::Config("lbfgs memory must be at least 1".into()));
        }
        if self.step_size.is_nan() || self.step_size <= 0.0 {
            return Err(Error::Config(format!(
                "gd step size must be positive, got {}",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// Snapshot of one accepted iterate, handed to the observer.
#[derive(Debug)]
pub struct IterationEvent<'a> {
    pub iteration: usize,
    /// Current parameters (the flattened weight matrix for SF runs).
    pub parameters: &'a Array1<f64>,
    pub objective: f64,
    pub gradient_infnorm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    GradientConverged,
    ObjectiveConverged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub x: Array1<f64>,
    pub objective: f64,
    pub reason: TerminationReason,
    pub iterations: usize,
}

fn inf_norm(v: &Array1<f64>) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

fn check_finite(f: f64, g: &Array1<f64>, iteration: usize, context: &str) -> Result<()> {
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            iteration,
            context: context.to_string(),
        });
    }
    Ok(())
}

/// Minimizes `objective` from `x0` with the configured method, reporting
/// every accepted iterate (including iteration 0) to `observer`.
pub fn minimize<F, O>(
    mut objective: F,
    x0: &Array1<f64>,
    config: &OptimizerConfig,
    mut observer: O,
) -> Result<MinimizeResult>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    O: FnMut(IterationEvent<'_>),
{
    config.validate()?;
    match config.method {
        Method::Lbfgs => minimize_lbfgs(&mut objective, x0, config, &mut observer),
        Method::Gd => minimize_gd(&mut objective, x0, config, &mut observer),
    }
}

fn minimize_lbfgs<F, O>(
    objective: &mut F,
    x0: &Array1<f64>,
    config: &OptimizerConfig,
    observer: &mut O,
) -> Result<MinimizeResult>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    O: FnMut(IterationEvent<'_>),
{
    let mut x = x0.clone();
    let (mut f, mut g) = objective(&x)?;
    check_finite(f, &g, 0, "objective or gradient not finite at the start")?;
    observer(IterationEvent {
        iteration: 0,
        parameters: &x,
        objective: f,
        gradient_infnorm: inf_norm(&g),
    });
    if inf_norm(&g) < config.gradient_tolerance {
        return Ok(MinimizeResult {
            x,
            objective: f,
            reason: TerminationReason::GradientConverged,
            iterations: 0,
        });
    }

    let mut history: VecDeque<(Array1<f64>, Array1<f64>, f64)> =
        VecDeque::with_capacity(config.memory);

    for iteration in 1..=config.max_iterations {
        let mut direction = two_loop_direction(&g, &history);
        if direction.dot(&g) >= 0.0 {
            // Stale curvature pairs can spoil the direction; fall back to
            // steepest descent.
            history.clear();
            direction = g.mapv(|v| -v);
        }
        let initial_step = if history.is_empty() {
            let g_norm = g.dot(&g).sqrt();
            if g_norm > 0.0 {
                1.0 / g_norm
            } else {
                1.0
            }
        } else {
            1.0
        };

        let search = wolfe_line_search(
            objective,
            &x,
            &direction,
            f,
            &g,
            config.wolfe_c1,
            config.wolfe_c2,
            initial_step,
        );
        let accepted = match search {
            Ok(accepted) => accepted,
            Err(Error::LineSearchFailed) => {
                return Ok(MinimizeResult {
                    x,
                    objective: f,
                    reason: TerminationReason::LineSearchFailed,
                    iterations: iteration - 1,
                });
            }
            Err(Error::Numerical { context, .. }) => {
                return Err(Error::Numerical { iteration, context });
            }
            Err(other) => return Err(other),
        };

        let x_new = &x + &(&direction * accepted.step);
        let f_new = accepted.objective;
        let g_new = accepted.gradient;
        observer(IterationEvent {
            iteration,
            parameters: &x_new,
            objective: f_new,
            gradient_infnorm: inf_norm(&g_new),
        });

        if inf_norm(&g_new) < config.gradient_tolerance {
            return Ok(MinimizeResult {
                x: x_new,
                objective: f_new,
                reason: TerminationReason::GradientConverged,
                iterations: iteration,
            });
        }
        let denom = f.abs().max(f_new.abs()).max(1.0);
        if (f - f_new).abs() / denom < config.relative_objective_tolerance {
            return Ok(MinimizeResult {
                x: x_new,
                objective: f_new,
                reason: TerminationReason::ObjectiveConverged,
                iterations: iteration,
            });
        }

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-10 * s.dot(&s).sqrt() * y.dot(&y).sqrt() {
            if history.len() == config.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        x = x_new;
        f = f_new;
        g = g_new;
    }

    Ok(MinimizeResult {
        x,
        objective: f,
        reason: TerminationReason::MaxIterations,
        iterations: config.max_iterations,
    })
}

/// Two-loop recursion: applies the implicit inverse-Hessian approximation to
/// the gradient, scaled by `s.y / y.y` from the most recent pair.
fn two_loop_direction(
    g: &Array1<f64>,
    history: &VecDeque<(Array1<f64>, Array1<f64>, f64)>,
) -> Array1<f64> {
    if history.is_empty() {
        return g.mapv(|v| -v);
    }
    let mut q = g.clone();
    let mut alphas = Vec::with_capacity(history.len());
    for (s, y, rho) in history.iter().rev() {
        let alpha = rho * s.dot(&q);
        q.scaled_add(-alpha, y);
        alphas.push(alpha);
    }
    let (s_last, y_last, _) = history.back().expect("history not empty");
    let gamma = s_last.dot(y_last) / y_last.dot(y_last);
    let mut r = q * gamma;
    for ((s, y, rho), &alpha) in history.iter().zip(alphas.iter().rev()) {
        let beta = rho * y.dot(&r);
        r.scaled_add(alpha - beta, s);
    }
    r.mapv(|v| -v)
}

fn minimize_gd<F, O>(
    objective: &mut F,
    x0: &Array1<f64>,
    config: &OptimizerConfig,
    observer: &mut O,
) -> Result<MinimizeResult>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
    O: FnMut(IterationEvent<'_>),
{
    let mut x = x0.clone();
    let (mut f, mut g) = objective(&x)?;
    check_finite(f, &g, 0, "objective or gradient not finite at the start")?;
    observer(IterationEvent {
        iteration: 0,
        parameters: &x,
        objective: f,
        gradient_infnorm: inf_norm(&g),
    });
    if inf_norm(&g) < config.gradient_tolerance {
        return Ok(MinimizeResult {
            x,
            objective: f,
            reason: TerminationReason::GradientConverged,
            iterations: 0,
        });
    }

    for iteration in 1..=config.max_iterations {
        x.scaled_add(-config.step_size, &g);
        let (f_new, g_new) = objective(&x)?;
        check_finite(f_new, &g_new, iteration, "objective or gradient not finite")?;
        observer(IterationEvent {
            iteration,
            parameters: &x,
            objective: f_new,
            gradient_infnorm: inf_norm(&g_new),
        });

        if inf_norm(&g_new) < config.gradient_tolerance {
            return Ok(MinimizeResult {
                x,
                objective: f_new,
                reason: TerminationReason::GradientConverged,
                iterations: iteration,
            });
        }
        let denom = f.abs().max(f_new.abs()).max(1.0);
        if (f - f_new).abs() / denom < config.relative_objective_tolerance {
            return Ok(MinimizeResult {
                x,
                objective: f_new,
                reason: TerminationReason::ObjectiveConverged,
                iterations: iteration,
            });
        }
        f = f_new;
        g = g_new;
    }

    Ok(MinimizeResult {
        x,
        objective: f,
        reason: TerminationReason::MaxIterations,
        iterations: config.max_iterations,
    })
}

/// The step accepted by a line search, together with the objective and
/// gradient already evaluated there.
#[derive(Debug, Clone)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub objective: f64,
    pub gradient: Array1<f64>,
}

#[derive(Clone, Copy)]
struct Probe {
    step: f64,
    value: f64,
    slope: f64,
}

/// Bracketing strong Wolfe line search.
///
/// Returns a step satisfying both the sufficient-decrease condition
/// `f(x + a d) <= f0 + c1 a (g0.d)` and the curvature condition
/// `|g(x + a d).d| <= c2 |g0.d|`, using at most 50 objective evaluations.
#[allow(clippy::too_many_arguments)]
pub fn wolfe_line_search<F>(
    objective: &mut F,
    x: &Array1<f64>,
    direction: &Array1<f64>,
    f0: f64,
    g0: &Array1<f64>,
    c1: f64,
    c2: f64,
    initial_step: f64,
) -> Result<LineSearchOutcome>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    let slope0 = g0.dot(direction);
    if slope0 >= 0.0 {
        return Err(Error::NotDescentDirection(slope0));
    }
    if initial_step.is_nan() || initial_step <= 0.0 {
        return Err(Error::Config(format!(
            "line search initial step must be positive, got {initial_step}"
        )));
    }

    let mut search = Search {
        objective,
        x,
        direction,
        f0,
        slope0,
        c1,
        c2,
        evals: 0,
    };

    const MAX_STEP: f64 = 1e20;
    let mut prev = Probe {
        step: 0.0,
        value: f0,
        slope: slope0,
    };
    let mut step = initial_step.min(MAX_STEP);
    let mut first = true;

    let (mut lo, mut hi) = loop {
        if search.evals >= MAX_LINE_SEARCH_EVALS {
            return Err(Error::LineSearchFailed);
        }
        let (probe, gradient) = search.eval(step)?;
        if !search.sufficient(&probe) || (!first && probe.value >= prev.value) {
            break (prev, probe);
        }
        if search.curvature(&probe) {
            return search.refine(&prev, probe, gradient);
        }
        if probe.slope >= 0.0 {
            break (probe, prev);
        }
        if probe.step >= MAX_STEP {
            return Err(Error::LineSearchFailed);
        }
        step = (2.0 * probe.step).min(MAX_STEP);
        prev = probe;
        first = false;
    };

    // Zoom: keep [lo, hi] with lo the best sufficient-decrease point and the
    // minimizer bracketed; interpolate with a safeguarded cubic.
    loop {
        if search.evals >= MAX_LINE_SEARCH_EVALS {
            return Err(Error::LineSearchFailed);
        }
        let width = (hi.step - lo.step).abs();
        if width <= 1e-16 * lo.step.abs().max(1.0) {
            return Err(Error::LineSearchFailed);
        }
        let step_j = interpolate_cubic(&lo, &hi);
        let (probe, gradient) = search.eval(step_j)?;
        if !search.sufficient(&probe) || probe.value >= lo.value {
            hi = probe;
        } else {
            if search.curvature(&probe) {
                return search.refine(&lo, probe, gradient);
            }
            if probe.slope * (hi.step - lo.step) >= 0.0 {
                hi = lo;
            }
            lo = probe;
        }
    }
}

struct Search<'a, F> {
    objective: &'a mut F,
    x: &'a Array1<f64>,
    direction: &'a Array1<f64>,
    f0: f64,
    slope0: f64,
    c1: f64,
    c2: f64,
    evals: usize,
}

impl<F> Search<'_, F>
where
    F: FnMut(&Array1<f64>) -> Result<(f64, Array1<f64>)>,
{
    fn eval(&mut self, step: f64) -> Result<(Probe, Array1<f64>)> {
        self.evals += 1;
        let point = self.x + &(self.direction * step);
        let (value, gradient) = (self.objective)(&point)?;
        if !value.is_finite() || gradient.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical {
                iteration: 0,
                context: format!("line search trial at step {step} is not finite"),
            });
        }
        let slope = gradient.dot(self.direction);
        Ok((Probe { step, value, slope }, gradient))
    }

    fn sufficient(&self, p: &Probe) -> bool {
        p.value <= self.f0 + self.c1 * p.step * self.slope0
    }

    fn curvature(&self, p: &Probe) -> bool {
        p.slope.abs() <= -self.c2 * self.slope0
    }

    /// A probe satisfying both Wolfe conditions can still sit far from the
    /// 1-D minimizer when c2 is loose. One cubic interpolation against a
    /// partner probe sharpens the step (exactly on quadratic objectives),
    /// which keeps the quasi-Newton curvature pairs accurate. Falls back to
    /// the accepted probe unless the refined point also satisfies both
    /// conditions at a value no worse.
    fn refine(
        &mut self,
        partner: &Probe,
        accepted: Probe,
        accepted_gradient: Array1<f64>,
    ) -> Result<LineSearchOutcome> {
        let keep = |p: &Probe, g: Array1<f64>| LineSearchOutcome {
            step: p.step,
            objective: p.value,
            gradient: g,
        };
        if accepted.slope.abs() <= 1e-3 * self.slope0.abs() || self.evals >= MAX_LINE_SEARCH_EVALS {
            return Ok(keep(&accepted, accepted_gradient));
        }
        let Some(candidate) = cubic_minimizer(partner, &accepted) else {
            return Ok(keep(&accepted, accepted_gradient));
        };
        let cap = 10.0 * accepted.step.max(partner.step);
        if candidate.is_nan() || candidate <= 0.0 || candidate > cap {
            return Ok(keep(&accepted, accepted_gradient));
        }
        match self.eval(candidate) {
            Ok((probe, gradient))
                if self.sufficient(&probe)
                    && self.curvature(&probe)
                    && probe.value <= accepted.value =>
            {
                Ok(keep(&probe, gradient))
            }
            Ok(_) => Ok(keep(&accepted, accepted_gradient)),
            // A non-finite trial here is recoverable: the accepted step stands.
            Err(Error::Numerical { .. }) => Ok(keep(&accepted, accepted_gradient)),
            Err(other) => Err(other),
        }
    }
}

/// Local minimizer of the Hermite cubic through two probes, unclamped.
fn cubic_minimizer(a: &Probe, b: &Probe) -> Option<f64> {
    if a.step == b.step {
        return None;
    }
    let d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    let disc = d1 * d1 - a.slope * b.slope;
    if disc < 0.0 {
        return None;
    }
    let d2 = disc.sqrt() * (b.step - a.step).signum();
    let denom = b.slope - a.slope + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let candidate = b.step - (b.step - a.step) * (b.slope + d2 - d1) / denom;
    candidate.is_finite().then_some(candidate)
}

/// Minimizer of the Hermite cubic through two probes, falling back to
/// bisection when the cubic is degenerate or leaves the safeguard interval.
fn interpolate_cubic(lo: &Probe, hi: &Probe) -> f64 {
    let min_step = lo.step.min(hi.step);
    let max_step = lo.step.max(hi.step);
    let margin = 1e-3 * (max_step - min_step);
    match cubic_minimizer(lo, hi) {
        Some(c) if c >= min_step + margin && c <= max_step - margin => c,
        _ => 0.5 * (min_step + max_step),
    }
}
