//! Dense BFGS with a strong-Wolfe line search.
//!
//! The first iteration tries a displacement of length `lr` along the
//! steepest-descent direction; later iterations start the line search at the
//! full quasi-Newton step. The inverse Hessian is rescaled by `s.y / y.y`
//! before its first update and reset to the identity whenever the curvature
//! condition fails.

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BfgsOptions {
    pub max_iters: usize,
    /// Length of the first trial displacement.
    pub lr: f64,
    pub grad_tol: f64,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iters: 200,
            lr: 0.01,
            grad_tol: 1e-8,
            c1: 1e-4,
            c2: 0.1,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BfgsStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
    NonFinite,
}

/// Inverse-Hessian approximation and the last accepted point.
#[derive(Debug, Clone)]
pub struct BfgsState<T> {
    pub inv_hessian: Vec<T>,
    pub dim: usize,
    pub params: Vec<T>,
    pub value: T,
    pub grad: Vec<T>,
    scaled: bool,
    pub resets: usize,
}

impl<T: Real> BfgsState<T> {
    fn new(params: Vec<T>, value: T, grad: Vec<T>) -> Self {
        let dim = params.len();
        let mut h = vec![T::zero(); dim * dim];
        for i in 0..dim {
            h[i * dim + i] = T::one();
        }
        Self {
            inv_hessian: h,
            dim,
            params,
            value,
            grad,
            scaled: false,
            resets: 0,
        }
    }

    fn reset(&mut self) {
        let n = self.dim;
        self.inv_hessian.iter_mut().for_each(|x| *x = T::zero());
        for i in 0..n {
            self.inv_hessian[i * n + i] = T::one();
        }
        self.scaled = false;
        self.resets += 1;
    }

    fn direction(&self) -> Vec<T> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                -self.inv_hessian[i * n..(i + 1) * n]
                    .iter()
                    .zip(&self.grad)
                    .map(|(&h, &g)| h * g)
                    .sum::<T>()
            })
            .collect()
    }

    /// Rank-two update with step `s` and gradient change `y`.
    fn update(&mut self, s: &[T], y: &[T]) {
        let n = self.dim;
        let sy: T = dot(s, y);
        if !(sy > T::lit(1e-12)) {
            self.reset();
            return;
        }
        if !self.scaled {
            let yy = dot(y, y);
            let gamma = sy / yy;
            self.inv_hessian.iter_mut().for_each(|x| *x *= gamma);
            self.scaled = true;
        }
        let rho = T::one() / sy;
        let hy: Vec<T> = (0..n)
            .map(|i| dot(&self.inv_hessian[i * n..(i + 1) * n], y))
            .collect();
        let yhy = dot(y, &hy);
        let coef = rho * rho * yhy + rho;
        for i in 0..n {
            for j in 0..n {
                self.inv_hessian[i * n + j] +=
                    coef * s[i] * s[j] - rho * (s[i] * hy[j] + hy[i] * s[j]);
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                let avg = T::lit(0.5) * (self.inv_hessian[i * n + j] + self.inv_hessian[j * n + i]);
                self.inv_hessian[i * n + j] = avg;
                self.inv_hessian[j * n + i] = avg;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome<T> {
    /// Best parameters seen.
    pub params: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: BfgsStatus,
    /// Objective after every accepted iteration (starting point included).
    pub history: Vec<T>,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

struct Probe<T> {
    alpha: T,
    value: T,
    slope: T,
    x: Vec<T>,
    grad: Vec<T>,
}

/// Minimizes `f`, which returns the objective and its gradient.
pub fn bfgs_minimize<T, F>(mut f: F, p0: &[T], opts: &BfgsOptions) -> BfgsOutcome<T>
where
    T: Real,
    F: FnMut(&[T]) -> (T, Vec<T>),
{
    let (v0, g0) = f(p0);
    let mut evaluations = 1;
    if !v0.is_finite() || g0.iter().any(|g| !g.is_finite()) {
        return BfgsOutcome {
            params: p0.to_vec(),
            value: v0,
            iterations: 0,
            evaluations,
            status: BfgsStatus::NonFinite,
            history: vec![v0],
        };
    }
    let mut state = BfgsState::new(p0.to_vec(), v0, g0);
    let mut history = vec![v0];
    let grad_tol = T::lit(opts.grad_tol);
    let mut status = BfgsStatus::MaxIterations;
    let mut iterations = 0;
    for iter in 0..opts.max_iters {
        if norm(&state.grad) < grad_tol {
            status = BfgsStatus::Converged;
            break;
        }
        let mut d = state.direction();
        let mut slope = dot(&state.grad, &d);
        if !(slope < T::zero()) {
            state.reset();
            d = state.direction();
            slope = dot(&state.grad, &d);
        }
        let alpha0 = if iter == 0 || !state.scaled {
            (T::lit(opts.lr) / norm(&d)).min(T::one())
        } else {
            T::one()
        };
        let probe = line_search(&mut f, &state, &d, slope, alpha0, opts, &mut evaluations);
        let Some(p) = probe else {
            status = BfgsStatus::LineSearchFailed;
            break;
        };
        let s: Vec<T> = d.iter().map(|&di| p.alpha * di).collect();
        let y: Vec<T> = p.grad.iter().zip(&state.grad).map(|(&a, &b)| a - b).collect();
        state.params = p.x;
        state.value = p.value;
        state.grad = p.grad;
        state.update(&s, &y);
        history.push(state.value);
        iterations = iter + 1;
    }
    if status == BfgsStatus::MaxIterations && norm(&state.grad) < grad_tol {
        status = BfgsStatus::Converged;
    }
    BfgsOutcome {
        params: state.params,
        value: state.value,
        iterations,
        evaluations,
        status,
        history,
    }
}

fn line_search<T, F>(
    f: &mut F,
    state: &BfgsState<T>,
    d: &[T],
    slope0: T,
    alpha0: T,
    opts: &BfgsOptions,
    evaluations: &mut usize,
) -> Option<Probe<T>>
where
    T: Real,
    F: FnMut(&[T]) -> (T, Vec<T>),
{
    let c1 = T::lit(opts.c1);
    let c2 = T::lit(opts.c2);
    let f0 = state.value;
    let mut eval = |alpha: T| -> Probe<T> {
        let x: Vec<T> = state.params.iter().zip(d).map(|(&p, &di)| p + alpha * di).collect();
        let (value, grad) = f(&x);
        *evaluations += 1;
        let finite = value.is_finite() && grad.iter().all(|g| g.is_finite());
        let slope = if finite { dot(&grad, d) } else { T::nan() };
        Probe {
            alpha,
            value: if finite { value } else { T::infinity() },
            slope,
            x,
            grad,
        }
    };
    let zero = Probe {
        alpha: T::zero(),
        value: f0,
        slope: slope0,
        x: state.params.clone(),
        grad: state.grad.clone(),
    };
    let mut prev = zero;
    let mut alpha = alpha0;
    let mut budget = opts.max_line_search;
    while budget > 0 {
        budget -= 1;
        let cur = eval(alpha);
        let armijo_fails = !(cur.value <= f0 + c1 * alpha * slope0);
        if armijo_fails || (prev.alpha > T::zero() && cur.value >= prev.value) {
            return zoom(&mut eval, prev, cur, f0, slope0, c1, c2, budget);
        }
        if cur.slope.abs() <= -c2 * slope0 {
            return Some(cur);
        }
        if cur.slope >= T::zero() {
            return zoom(&mut eval, cur, prev, f0, slope0, c1, c2, budget);
        }
        alpha = alpha * T::lit(2.0);
        prev = cur;
    }
    // extrapolation budget exhausted; accept the last sufficient decrease
    (prev.alpha > T::zero()).then_some(prev)
}

#[allow(clippy::too_many_arguments)]
fn zoom<T, E>(
    eval: &mut E,
    mut lo: Probe<T>,
    mut hi: Probe<T>,
    f0: T,
    slope0: T,
    c1: T,
    c2: T,
    mut budget: usize,
) -> Option<Probe<T>>
where
    T: Real,
    E: FnMut(T) -> Probe<T>,
{
    while budget > 0 {
        budget -= 1;
        let width = hi.alpha - lo.alpha;
        let mut alpha = lo.alpha + T::lit(0.5) * width;
        if hi.value.is_finite() {
            // minimizer of the quadratic through (lo, lo', hi)
            let denom = T::lit(2.0) * (hi.value - lo.value - lo.slope * width);
            if denom > T::zero() {
                let cand = lo.alpha - lo.slope * width * width / denom;
                let (a, b) = if width > T::zero() {
                    (lo.alpha + T::lit(0.1) * width, hi.alpha - T::lit(0.1) * width)
                } else {
                    (hi.alpha - T::lit(0.1) * width, lo.alpha + T::lit(0.1) * width)
                };
                let (a, b) = if a < b { (a, b) } else { (b, a) };
                if cand.is_finite() {
                    alpha = cand.max(a).min(b);
                }
            }
        }
        let cur = eval(alpha);
        if !(cur.value <= f0 + c1 * alpha * slope0) || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -c2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= T::zero() {
                hi = lo;
            }
            lo = cur;
        }
        if (hi.alpha - lo.alpha).abs() <= T::epsilon() * lo.alpha.abs().max(T::one()) {
            break;
        }
    }
    // no Wolfe point found; keep a strict decrease if there is one
    (lo.alpha > T::zero() && lo.value < f0).then_some(lo)
}
