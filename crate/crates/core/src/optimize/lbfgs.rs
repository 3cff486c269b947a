//! Limited-memory BFGS minimization with a strong-Wolfe line search.

use crate::error::{Error, Result};
use std::collections::VecDeque;

#[derive(Clone, Debug)]
pub struct LbfgsOptions {
    pub history: usize,
    pub max_iterations: usize,
    /// Stop when `‖g‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the relative decrease of `f` over one iteration falls below this.
    pub value_tolerance: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_evaluations: usize,
    pub max_restarts: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            history: 10,
            max_iterations: 1000,
            gradient_tolerance: 1e-10,
            value_tolerance: 0.0,
            c1: 1e-4,
            c2: 0.9,
            max_line_evaluations: 25,
            max_restarts: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Gradient,
    Value,
    MaxIterations,
    /// The callback asked to stop.
    Callback,
    /// The line search kept failing after every restart.
    LineSearch,
}

#[derive(Clone, Debug)]
pub struct LbfgsResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub restarts: usize,
    pub termination: Termination,
}

/// State after an accepted step, passed to the callback.
pub struct Progress<'a> {
    pub iteration: usize,
    pub x: &'a [f64],
    pub value: f64,
    pub gradient: &'a [f64],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
}

/// Minimize `f`, which returns the value and gradient. `callback` sees every
/// accepted iterate (iteration 0 is the start) and returns `false` to stop.
pub fn minimize<F, C>(mut f: F, x0: &[f64], opts: &LbfgsOptions, mut callback: C) -> Result<LbfgsResult>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    C: FnMut(&Progress) -> bool,
{
    let mut evaluations = 1;
    let (f0, g0) = f(x0)?;
    let mut cur = Point { x: x0.to_vec(), f: f0, g: g0 };
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut restarts = 0;
    let mut step_scale = 1.0;
    let mut iteration = 0;
    let finish = |p: Point, iterations, evaluations, restarts, termination| LbfgsResult {
        x: p.x,
        value: p.f,
        gradient: p.g,
        iterations,
        evaluations,
        restarts,
        termination,
    };
    if !callback(&Progress { iteration: 0, x: &cur.x, value: cur.f, gradient: &cur.g }) {
        return Ok(finish(cur, 0, evaluations, 0, Termination::Callback));
    }
    loop {
        if inf_norm(&cur.g) <= opts.gradient_tolerance {
            return Ok(finish(cur, iteration, evaluations, restarts, Termination::Gradient));
        }
        if iteration >= opts.max_iterations {
            return Ok(finish(cur, iteration, evaluations, restarts, Termination::MaxIterations));
        }
        let d = direction(&cur.g, &pairs);
        let mut slope = dot(&d, &cur.g);
        let d = if slope < 0.0 {
            d
        } else {
            pairs.clear();
            slope = -dot(&cur.g, &cur.g);
            cur.g.iter().map(|v| -v).collect()
        };
        let alpha0 = if pairs.is_empty() { step_scale * (1.0 / inf_norm(&d)).min(1.0) } else { step_scale };
        let search = line_search(&mut f, &cur, &d, slope, alpha0, opts, &mut evaluations)?;
        let Some(next) = search else {
            if restarts >= opts.max_restarts {
                log::warn!("line search failed after {restarts} restarts; returning the best point");
                return Ok(finish(cur, iteration, evaluations, restarts, Termination::LineSearch));
            }
            restarts += 1;
            step_scale *= 0.1;
            pairs.clear();
            log::debug!("line search failed; restart {restarts} with step scale {step_scale}");
            continue;
        };
        iteration += 1;
        let s: Vec<f64> = next.x.iter().zip(&cur.x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = next.g.iter().zip(&cur.g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if pairs.len() == opts.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }
        let decrease = cur.f - next.f;
        let scale = cur.f.abs().max(next.f.abs()).max(1.0);
        cur = next;
        if !callback(&Progress { iteration, x: &cur.x, value: cur.f, gradient: &cur.g }) {
            return Ok(finish(cur, iteration, evaluations, restarts, Termination::Callback));
        }
        if decrease <= opts.value_tolerance * scale && opts.value_tolerance > 0.0 {
            return Ok(finish(cur, iteration, evaluations, restarts, Termination::Value));
        }
    }
}

/// Two-loop recursion: `-H g`.
fn direction(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q: Vec<f64> = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
    }
    q.iter_mut().for_each(|v| *v = -*v);
    q
}

/// Strong-Wolfe line search with bracketing and cubic-interpolation zoom.
fn line_search<F>(
    f: &mut F,
    start: &Point,
    d: &[f64],
    slope0: f64,
    alpha0: f64,
    opts: &LbfgsOptions,
    evaluations: &mut usize,
) -> Result<Option<Point>>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut eval = |alpha: f64| -> Result<(Point, f64)> {
        *evaluations += 1;
        let x: Vec<f64> = start.x.iter().zip(d).map(|(x, d)| x + alpha * d).collect();
        // A trial step that breaks the integrator counts as an infinite value.
        let (v, g) = match f(&x) {
            Err(Error::Numeric(msg)) => {
                log::debug!("trial step {alpha:.3e} rejected: {msg}");
                (f64::INFINITY, vec![0.0; x.len()])
            }
            Err(Error::NonFinite { step }) => {
                log::debug!("trial step {alpha:.3e} rejected: non-finite at step {step}");
                (f64::INFINITY, vec![0.0; x.len()])
            }
            r => r?,
        };
        let slope = dot(&g, d);
        Ok((Point { x, f: v, g }, slope))
    };
    let (f0, c1, c2) = (start.f, opts.c1, opts.c2);
    let mut prev_alpha = 0.0;
    let mut prev_f = f0;
    let mut prev_slope = slope0;
    let mut alpha = alpha0;
    let mut used = 0;
    while used < opts.max_line_evaluations {
        used += 1;
        let (p, slope) = eval(alpha)?;
        if !p.f.is_finite() || p.f > f0 + c1 * alpha * slope0 || (used > 1 && p.f >= prev_f) {
            return zoom(&mut eval, (prev_alpha, prev_f, prev_slope), (alpha, p.f, slope), f0, slope0, opts, used);
        }
        if slope.abs() <= -c2 * slope0 {
            return Ok(Some(p));
        }
        if slope >= 0.0 {
            return zoom(&mut eval, (alpha, p.f, slope), (prev_alpha, prev_f, prev_slope), f0, slope0, opts, used);
        }
        prev_alpha = alpha;
        prev_f = p.f;
        prev_slope = slope;
        alpha *= 2.0;
    }
    Ok(None)
}

type Bracket = (f64, f64, f64);

fn zoom<E>(
    eval: &mut E,
    mut lo: Bracket,
    mut hi: Bracket,
    f0: f64,
    slope0: f64,
    opts: &LbfgsOptions,
    mut used: usize,
) -> Result<Option<Point>>
where
    E: FnMut(f64) -> Result<(Point, f64)>,
{
    let mut best: Option<Point> = None;
    while used < opts.max_line_evaluations {
        used += 1;
        let alpha = interpolate(lo, hi);
        let (p, slope) = eval(alpha)?;
        if !p.f.is_finite() || p.f > f0 + opts.c1 * alpha * slope0 || p.f >= lo.1 {
            hi = (alpha, p.f, slope);
        } else {
            if slope.abs() <= -opts.c2 * slope0 {
                return Ok(Some(p));
            }
            if slope * (hi.0 - lo.0) >= 0.0 {
                hi = lo;
            }
            lo = (alpha, p.f, slope);
            best = Some(p);
        }
        if (hi.0 - lo.0).abs() <= 1e-14 * lo.0.abs().max(hi.0.abs()) {
            break;
        }
    }
    // Accept a sufficient-decrease point if curvature could not be met.
    Ok(best.filter(|p| p.f < f0))
}

/// Minimizer of the cubic through two bracket ends, safeguarded to the interior.
fn interpolate(a: Bracket, b: Bracket) -> f64 {
    let (x0, f0, g0) = a;
    let (x1, f1, g1) = b;
    let d1 = g0 + g1 - 3.0 * (f0 - f1) / (x0 - x1);
    let disc = d1 * d1 - g0 * g1;
    let (lo, hi) = (x0.min(x1), x0.max(x1));
    let width = hi - lo;
    let mid = 0.5 * (lo + hi);
    if !(disc >= 0.0) || !f1.is_finite() {
        return mid;
    }
    let d2 = (x1 - x0).signum() * disc.sqrt();
    let x = x1 - (x1 - x0) * (g1 + d2 - d1) / (g1 - g0 + 2.0 * d2);
    if x.is_finite() && x > lo + 0.1 * width && x < hi - 0.1 * width {
        x
    } else {
        mid
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_converges_within_dimension() {
        // f = ½ xᵀ A x - bᵀ x with A diagonal-dominant SPD.
        let n = 8;
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 2.0 + i as f64 } else { 0.3 / (1.0 + (i as f64 - j as f64).abs()) }).collect())
            .collect();
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let func = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let ax: Vec<f64> = a.iter().map(|r| dot(r, x)).collect();
            Ok((0.5 * dot(x, &ax) - dot(&b, x), ax.iter().zip(&b).map(|(u, v)| u - v).collect()))
        };
        // Exact minimizer by Gaussian elimination.
        let mut m = a.clone();
        let mut rhs = b.clone();
        for c in 0..n {
            for r in c + 1..n {
                let k = m[r][c] / m[c][c];
                for j in c..n {
                    m[r][j] -= k * m[c][j];
                }
                rhs[r] -= k * rhs[c];
            }
        }
        let mut xs = vec![0.0; n];
        for r in (0..n).rev() {
            xs[r] = (rhs[r] - (r + 1..n).map(|j| m[r][j] * xs[j]).sum::<f64>()) / m[r][r];
        }
        let fmin = func(&xs).unwrap().0;
        // A tight curvature condition makes the line search exact on a quadratic.
        let opts = LbfgsOptions { history: 10, gradient_tolerance: 1e-12, c2: 1e-3, ..Default::default() };
        let res = minimize(func, &vec![0.0; n], &opts, |p| p.iteration < n).unwrap();
        assert!(res.iterations <= n);
        assert!((res.value - fmin).abs() < 1e-10, "{} vs {fmin}", res.value);
    }

    #[test]
    fn rosenbrock_and_monotone_history() {
        let func = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            Ok((
                (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2),
                vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)],
            ))
        };
        let mut values = Vec::new();
        let res = minimize(func, &[-1.2, 1.0], &LbfgsOptions::default(), |p| {
            values.push(p.value);
            true
        })
        .unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6 && (res.x[1] - 1.0).abs() < 1e-6);
        assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn callback_stops_early() {
        let func = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0] * x[0], vec![2.0 * x[0]])) };
        let res = minimize(func, &[3.0], &LbfgsOptions::default(), |p| p.iteration < 1).unwrap();
        assert_eq!(res.termination, Termination::Callback);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn failing_line_search_returns_best_point() {
        // Gradient pointing the wrong way: no step ever decreases f.
        let func = |x: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((x[0], vec![-1.0])) };
        let res = minimize(func, &[0.0], &LbfgsOptions::default(), |_| true).unwrap();
        assert_eq!(res.termination, Termination::LineSearch);
        assert_eq!(res.restarts, 3);
        assert_eq!(res.x, vec![0.0]);
    }

    #[test]
    fn numeric_failure_on_trial_step_shrinks_it() {
        // Minimum at 1, but the function refuses to evaluate beyond 1.5.
        let func = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            if x[0] > 1.5 {
                return Err(Error::Numeric("unstable".into()));
            }
            Ok(((x[0] - 1.0).powi(2), vec![2.0 * (x[0] - 1.0)]))
        };
        let opts = LbfgsOptions { gradient_tolerance: 1e-9, ..Default::default() };
        let res = minimize(func, &[-10.0], &opts, |_| true).unwrap();
        assert!((res.x[0] - 1.0).abs() < 1e-6);
        assert!(minimize(func, &[2.0], &opts, |_| true).is_err());
    }
}
