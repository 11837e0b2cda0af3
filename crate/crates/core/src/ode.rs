//! Fixed-step classical Runge-Kutta integration and its discrete adjoint.
//!
//! [`integrate_rk4`] is the plain forward solver used by the simulator and
//! for predictions. [`Rk4Tape`] records the stage inputs of every step so a
//! loss defined on the reported states can be differentiated exactly with
//! respect to the initial state and the parameters of a [`DiffRhs`]
//! (discretize-then-optimize).

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniformly spaced report grid produced by an integration.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub dim: usize,
    pub times: Vec<T>,
    /// Row-major `times.len() x dim`.
    pub states: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[T] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }
}

/// Step layout shared by the forward solver and the tape.
#[derive(Debug, Clone, Copy)]
pub struct StepGrid<T> {
    pub t0: T,
    pub dt: T,
    pub steps: usize,
    pub steps_per_report: usize,
}

impl<T: Real> StepGrid<T> {
    pub fn new(t_span: (T, T), dt: T, report_every: T) -> Result<Self> {
        let (t0, t1) = t_span;
        if !(t1 > t0) {
            return Err(Error::invalid(format!("empty time span ({t0}, {t1})")));
        }
        if !(dt > T::zero() && report_every >= dt) {
            return Err(Error::invalid("step and report interval must be positive"));
        }
        let per = (report_every / dt).round();
        if (per * dt - report_every).abs() > T::lit(1e-9) * report_every {
            return Err(Error::invalid(format!(
                "dt = {dt} does not divide report interval {report_every}"
            )));
        }
        let reports = ((t1 - t0) / report_every).round();
        if (reports * report_every - (t1 - t0)).abs() > T::lit(1e-9) * (t1 - t0) {
            return Err(Error::invalid(format!(
                "report interval {report_every} does not divide span length {}",
                t1 - t0
            )));
        }
        let steps_per_report = per.to_usize().unwrap_or(0);
        Ok(Self {
            t0,
            dt,
            steps: reports.to_usize().unwrap_or(0) * steps_per_report,
            steps_per_report,
        })
    }

    #[inline]
    pub fn time(&self, step: usize) -> T {
        self.t0 + T::from_usize_lossy(step) * self.dt
    }

    pub fn reports(&self) -> usize {
        self.steps / self.steps_per_report + 1
    }
}

/// Scratch buffers for one RK4 step.
struct Stages<T> {
    k1: Vec<T>,
    k2: Vec<T>,
    k3: Vec<T>,
    k4: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> Stages<T> {
    fn new(dim: usize) -> Self {
        Self {
            k1: vec![T::zero(); dim],
            k2: vec![T::zero(); dim],
            k3: vec![T::zero(); dim],
            k4: vec![T::zero(); dim],
            y: vec![T::zero(); dim],
        }
    }

    /// Advances `u` in place by one step; the stage inputs are reported to `record`.
    fn step<F, R>(&mut self, f: &mut F, t: T, dt: T, u: &mut [T], mut record: R)
    where
        F: FnMut(T, &[T], &mut [T]),
        R: FnMut(usize, &[T]),
    {
        let half = T::lit(0.5) * dt;
        let sixth = dt / T::lit(6.0);
        f(t, u, &mut self.k1);
        for ((y, &ui), &k) in self.y.iter_mut().zip(u.iter()).zip(&self.k1) {
            *y = ui + half * k;
        }
        record(1, &self.y);
        f(t + half, &self.y, &mut self.k2);
        for ((y, &ui), &k) in self.y.iter_mut().zip(u.iter()).zip(&self.k2) {
            *y = ui + half * k;
        }
        record(2, &self.y);
        f(t + half, &self.y, &mut self.k3);
        for ((y, &ui), &k) in self.y.iter_mut().zip(u.iter()).zip(&self.k3) {
            *y = ui + dt * k;
        }
        record(3, &self.y);
        f(t + dt, &self.y, &mut self.k4);
        let two = T::lit(2.0);
        for (i, ui) in u.iter_mut().enumerate() {
            *ui += sixth * (self.k1[i] + two * self.k2[i] + two * self.k3[i] + self.k4[i]);
        }
    }
}

/// Integrates `u' = f(t, u)` with classical RK4, reporting every `report_every`.
pub fn integrate_rk4<T, F>(
    f: F,
    u0: &[T],
    t_span: (T, T),
    dt: T,
    report_every: T,
) -> Result<Trajectory<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
{
    integrate_rk4_with(f, u0, t_span, dt, report_every, |_, _| Ok(()))
}

/// Like [`integrate_rk4`] with a projection applied after every step.
pub fn integrate_rk4_with<T, F, P>(
    mut f: F,
    u0: &[T],
    t_span: (T, T),
    dt: T,
    report_every: T,
    mut post_step: P,
) -> Result<Trajectory<T>>
where
    T: Real,
    F: FnMut(T, &[T], &mut [T]),
    P: FnMut(T, &mut [T]) -> Result<()>,
{
    let grid = StepGrid::new(t_span, dt, report_every)?;
    let dim = u0.len();
    check_finite(u0, grid.t0)?;
    let mut u = u0.to_vec();
    let mut stages = Stages::new(dim);
    let mut times = Vec::with_capacity(grid.reports());
    let mut states = Vec::with_capacity(grid.reports() * dim);
    times.push(grid.t0);
    states.extend_from_slice(&u);
    for s in 0..grid.steps {
        stages.step(&mut f, grid.time(s), dt, &mut u, |_, _| {});
        let t = grid.time(s + 1);
        check_finite(&u, t)?;
        post_step(t, &mut u)?;
        if (s + 1) % grid.steps_per_report == 0 {
            times.push(t);
            states.extend_from_slice(&u);
        }
    }
    Ok(Trajectory { dim, times, states })
}

fn check_finite<T: Real>(u: &[T], t: T) -> Result<()> {
    if u.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { t: t.to_f64_lossy() })
    }
}

/// A right-hand side that supports vector-Jacobian products.
///
/// `params` is a flat parameter vector owned by the caller; implementations
/// may keep private scratch space, hence `&mut self`.
pub trait DiffRhs<T: Real> {
    fn dim(&self) -> usize;

    fn n_params(&self) -> usize;

    fn eval(&mut self, t: T, u: &[T], params: &[T], du: &mut [T]);

    /// Accumulates `w^T (d f / d u)` into `gu` and `w^T (d f / d params)` into `gp`.
    fn vjp(&mut self, t: T, u: &[T], params: &[T], w: &[T], gu: &mut [T], gp: &mut [T]);
}

/// Forward pass of RK4 that keeps every stage input for reverse mode.
#[derive(Debug, Clone)]
pub struct Rk4Tape<T> {
    pub grid: StepGrid<T>,
    dim: usize,
    /// Per step: `u_n, y2, y3, y4` (stage inputs), each `dim` long.
    stage_inputs: Vec<T>,
    /// Reported states, `grid.reports() x dim`.
    pub reports: Vec<T>,
}

impl<T: Real> Rk4Tape<T> {
    /// Runs the forward integration. Returns `None` on a non-finite state.
    pub fn record<R: DiffRhs<T>>(
        rhs: &mut R,
        params: &[T],
        u0: &[T],
        grid: StepGrid<T>,
    ) -> Option<Self> {
        let dim = rhs.dim();
        debug_assert_eq!(u0.len(), dim);
        let mut u = u0.to_vec();
        let mut stages = Stages::new(dim);
        let mut stage_inputs = Vec::with_capacity(grid.steps * 4 * dim);
        let mut reports = Vec::with_capacity(grid.reports() * dim);
        reports.extend_from_slice(&u);
        let mut f = |t: T, x: &[T], out: &mut [T]| rhs.eval(t, x, params, out);
        for s in 0..grid.steps {
            stage_inputs.extend_from_slice(&u);
            stages.step(&mut f, grid.time(s), grid.dt, &mut u, |_, y| {
                stage_inputs.extend_from_slice(y)
            });
            if !u.iter().all(|x| x.is_finite()) {
                return None;
            }
            if (s + 1) % grid.steps_per_report == 0 {
                reports.extend_from_slice(&u);
            }
        }
        Some(Self {
            grid,
            dim,
            stage_inputs,
            reports,
        })
    }

    pub fn report(&self, k: usize) -> &[T] {
        &self.reports[k * self.dim..(k + 1) * self.dim]
    }

    pub fn n_reports(&self) -> usize {
        self.reports.len() / self.dim
    }

    /// Reverse sweep. `report_cotangents` holds `dL/du` at every report
    /// (same layout as `reports`). Returns `(dL/du0, dL/dparams)`.
    pub fn backprop<R: DiffRhs<T>>(
        &self,
        rhs: &mut R,
        params: &[T],
        report_cotangents: &[T],
    ) -> (Vec<T>, Vec<T>) {
        let dim = self.dim;
        let dt = self.grid.dt;
        let half = T::lit(0.5) * dt;
        let sixth = dt / T::lit(6.0);
        let third = dt / T::lit(3.0);
        let mut gp = vec![T::zero(); params.len()];
        let mut a = report_cotangents[(self.n_reports() - 1) * dim..].to_vec();
        let mut kbar = vec![T::zero(); dim];
        let mut ybar = vec![T::zero(); dim];
        let mut k1bar = vec![T::zero(); dim];
        let mut k2bar = vec![T::zero(); dim];
        let mut k3bar = vec![T::zero(); dim];
        for s in (0..self.grid.steps).rev() {
            let t = self.grid.time(s);
            let base = s * 4 * dim;
            let u = &self.stage_inputs[base..base + dim];
            let y2 = &self.stage_inputs[base + dim..base + 2 * dim];
            let y3 = &self.stage_inputs[base + 2 * dim..base + 3 * dim];
            let y4 = &self.stage_inputs[base + 3 * dim..base + 4 * dim];
            // u_{n+1} = u_n + dt/6 (k1 + 2 k2 + 2 k3 + k4)
            for i in 0..dim {
                kbar[i] = sixth * a[i];
                k3bar[i] = third * a[i];
                k2bar[i] = third * a[i];
                k1bar[i] = sixth * a[i];
            }
            // a already carries d/du_n of the identity term
            // k4 = f(t + dt, u + dt k3)
            ybar.iter_mut().for_each(|x| *x = T::zero());
            rhs.vjp(t + dt, y4, params, &kbar, &mut ybar, &mut gp);
            for i in 0..dim {
                a[i] += ybar[i];
                k3bar[i] += dt * ybar[i];
            }
            // k3 = f(t + dt/2, u + dt/2 k2)
            ybar.iter_mut().for_each(|x| *x = T::zero());
            rhs.vjp(t + half, y3, params, &k3bar, &mut ybar, &mut gp);
            for i in 0..dim {
                a[i] += ybar[i];
                k2bar[i] += half * ybar[i];
            }
            // k2 = f(t + dt/2, u + dt/2 k1)
            ybar.iter_mut().for_each(|x| *x = T::zero());
            rhs.vjp(t + half, y2, params, &k2bar, &mut ybar, &mut gp);
            for i in 0..dim {
                a[i] += ybar[i];
                k1bar[i] += half * ybar[i];
            }
            // k1 = f(t, u)
            ybar.iter_mut().for_each(|x| *x = T::zero());
            rhs.vjp(t, u, params, &k1bar, &mut ybar, &mut gp);
            for i in 0..dim {
                a[i] += ybar[i];
            }
            if s % self.grid.steps_per_report == 0 {
                let k = s / self.grid.steps_per_report;
                for i in 0..dim {
                    a[i] += report_cotangents[k * dim + i];
                }
            }
        }
        (a, gp)
    }
}
