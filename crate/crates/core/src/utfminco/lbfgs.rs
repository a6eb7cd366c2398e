//! Limited-memory BFGS with a bracketing weak-Wolfe line search
//! (Lewis-Overton style bisection/expansion).

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LbfgsParams {
    pub memory: usize,
    /// Stop when the largest gradient component drops below this.
    pub g_tol: f64,
    pub max_iters: usize,
    pub max_linesearch: usize,
    /// Sufficient-decrease constant.
    pub c1: f64,
    /// Curvature constant.
    pub c2: f64,
    /// Optional early stop: relative objective decrease over the last
    /// `window` iterations below `rel_tol`.
    pub stall: Option<(usize, f64)>,
}

impl Default for LbfgsParams {
    fn default() -> Self {
        Self {
            memory: 8,
            g_tol: 1e-4,
            max_iters: 120,
            max_linesearch: 40,
            c1: 1e-4,
            c2: 0.9,
            stall: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LbfgsStatus {
    Converged,
    Stalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone)]
pub struct LbfgsReport {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad_inf: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: LbfgsStatus,
    /// Objective after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Minimizes `f`, which writes its gradient into the second argument and
/// returns the value.
pub fn minimize<F>(x0: &[f64], mut f: F, params: &LbfgsParams) -> LbfgsReport
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; dim];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history = vec![fx];
    let finish = |x: Vec<f64>, fx: f64, g: &[f64], it: usize, ev: usize, st, history| LbfgsReport {
        x,
        f: fx,
        grad_inf: inf_norm(g),
        iterations: it,
        evaluations: ev,
        status: st,
        history,
    };
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return finish(x, fx, &g, 0, evaluations, LbfgsStatus::LineSearchFailed, history);
    }
    if inf_norm(&g) < params.g_tol {
        return finish(x, fx, &g, 0, evaluations, LbfgsStatus::Converged, history);
    }

    let mut mem: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(params.memory);
    let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut step = 1.0 / dot(&d, &d).sqrt().max(1.0);
    let mut xn = vec![0.0; dim];
    let mut gn = vec![0.0; dim];
    let mut alpha = vec![0.0; params.memory];

    for iter in 1..=params.max_iters {
        let mut dg0 = dot(&g, &d);
        if !(dg0 < 0.0) {
            // Not a descent direction: restart from steepest descent.
            mem.clear();
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            dg0 = dot(&g, &d);
            step = 1.0 / dg0.abs().sqrt().max(1.0);
        }

        let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
        let mut accepted = false;
        let mut f_trial = f64::NAN;
        let mut fallback: Option<(f64, Vec<f64>, Vec<f64>)> = None;
        for _ in 0..params.max_linesearch {
            for i in 0..dim {
                xn[i] = x[i] + step * d[i];
            }
            let fnew = f(&xn, &mut gn);
            f_trial = fnew;
            evaluations += 1;
            let finite = fnew.is_finite() && gn.iter().all(|v| v.is_finite());
            if !finite || fnew > fx + params.c1 * step * dg0 {
                hi = step;
            } else if dot(&gn, &d) < params.c2 * dg0 {
                lo = step;
                fallback = Some((fnew, xn.clone(), gn.clone()));
            } else {
                accepted = true;
                break;
            }
            step = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * step };
            if hi.is_finite() && hi - lo < 1e-16 * hi.max(1.0) {
                break;
            }
        }
        let fnew = if accepted {
            f_trial
        } else if let Some((fb, xb, gb)) = fallback {
            xn.copy_from_slice(&xb);
            gn.copy_from_slice(&gb);
            fb
        } else {
            return finish(x, fx, &g, iter - 1, evaluations, LbfgsStatus::LineSearchFailed, history);
        };

        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        x.copy_from_slice(&xn);
        g.copy_from_slice(&gn);
        fx = fnew;
        history.push(fx);
        if sy > 1e-16 * dot(&y, &y).max(1e-300) {
            if mem.len() == params.memory {
                mem.pop_front();
            }
            mem.push_back((s, y, 1.0 / sy));
        }

        if inf_norm(&g) < params.g_tol {
            return finish(x, fx, &g, iter, evaluations, LbfgsStatus::Converged, history);
        }
        if let Some((window, rel)) = params.stall {
            if history.len() > window {
                let past = history[history.len() - 1 - window];
                if (past - fx) <= rel * fx.abs().max(1.0) {
                    return finish(x, fx, &g, iter, evaluations, LbfgsStatus::Stalled, history);
                }
            }
        }

        // Two-loop recursion.
        d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
        for (k, (s, y, rho)) in mem.iter().enumerate().rev() {
            alpha[k] = rho * dot(s, &d);
            d.iter_mut().zip(y).for_each(|(di, yi)| *di -= alpha[k] * yi);
        }
        if let Some((s, y, _)) = mem.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        }
        for (k, (s, y, rho)) in mem.iter().enumerate() {
            let beta = rho * dot(y, &d);
            d.iter_mut().zip(s).for_each(|(di, si)| *di += (alpha[k] - beta) * si);
        }
        step = 1.0;
    }
    let it = params.max_iters;
    finish(x, fx, &g, it, evaluations, LbfgsStatus::MaxIterations, history)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
    }

    #[test]
    fn solves_rosenbrock() {
        let p = LbfgsParams {
            g_tol: 1e-8,
            max_iters: 500,
            ..Default::default()
        };
        let r = minimize(&[-1.2, 1.0], rosenbrock, &p);
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
        assert!(r.history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn stationary_start_returns_immediately() {
        let r = minimize(&[1.0, 1.0], rosenbrock, &LbfgsParams::default());
        assert_eq!(r.iterations, 0);
        assert_eq!(r.f, 0.0);
    }

    #[test]
    fn quadratic_in_few_iterations() {
        let q = |x: &[f64], g: &mut [f64]| {
            let w = [1.0, 10.0, 100.0];
            let mut f = 0.0;
            for i in 0..3 {
                g[i] = 2.0 * w[i] * (x[i] - i as f64);
                f += w[i] * (x[i] - i as f64).powi(2);
            }
            f
        };
        let r = minimize(&[5.0, 5.0, 5.0], q, &LbfgsParams { g_tol: 1e-9, ..Default::default() });
        assert_eq!(r.status, LbfgsStatus::Converged);
        assert!(r.iterations < 20);
    }
}
