//! Right-hand sides of the regional models.
//!
//! Rates that must stay nonnegative (`beta`, `gamma`) are optimized through
//! a softplus reparameterization, so every flat parameter vector handed to a
//! [`DiffRhs`] here is unconstrained.

use crate::neural::{MlpShape, MlpWorkspace};
use crate::ode::DiffRhs;
use crate::scalar::Real;
use crate::sim::SirParams;

use super::view::{NeighborSignal, Normalizer};

/// Frequency-dependent SIR derivative of a single region.
pub fn sir_rhs<T: Real>(u: [T; 3], pop: T, params: &SirParams<T>) -> [T; 3] {
    let inf = params.beta * u[0] * u[1] / pop;
    let rec = params.gamma * u[1];
    [-inf, inf - rec, rec]
}

/// Maps unconstrained `(a, b)` to `(softplus(a), softplus(b))`.
pub fn rates_from_raw<T: Real>(raw: &[T]) -> SirParams<T> {
    SirParams {
        beta: raw[0].softplus(),
        gamma: raw[1].softplus(),
    }
}

pub fn raw_from_rates<T: Real>(p: &SirParams<T>) -> [T; 2] {
    let floor = T::lit(1e-12);
    [p.beta.max(floor).softplus_inv(), p.gamma.max(floor).softplus_inv()]
}

/// Adds the SIR part of a VJP. Returns `w_I - w_S`, the cotangent of any
/// term moved from S to I.
#[inline]
fn sir_vjp<T: Real>(u: &[T], pop: T, raw: &[T], w: &[T], gu: &mut [T], gp: &mut [T]) -> T {
    let beta = raw[0].softplus();
    let gamma = raw[1].softplus();
    let (s, i) = (u[0], u[1]);
    let w_flow = w[1] - w[0];
    let w_rec = w[2] - w[1];
    gu[0] += w_flow * beta * i / pop;
    gu[1] += w_flow * beta * s / pop + w_rec * gamma;
    gp[0] += w_flow * s * i / pop * raw[0].sigmoid();
    gp[1] += w_rec * i * raw[1].sigmoid();
    w_flow
}

/// Plain SIR with parameters `[raw_beta, raw_gamma]`.
#[derive(Debug, Clone)]
pub struct SirFitRhs<T> {
    pub pop: T,
}

impl<T: Real> DiffRhs<T> for SirFitRhs<T> {
    fn dim(&self) -> usize {
        3
    }

    fn n_params(&self) -> usize {
        2
    }

    fn eval(&mut self, _t: T, u: &[T], params: &[T], du: &mut [T]) {
        let d = sir_rhs([u[0], u[1], u[2]], self.pop, &rates_from_raw(params));
        du.copy_from_slice(&d);
    }

    fn vjp(&mut self, _t: T, u: &[T], params: &[T], w: &[T], gu: &mut [T], gp: &mut [T]) {
        sir_vjp(u, self.pop, params, w, gu, gp);
    }
}

/// Network-only dynamics: `du/dt = scale * DNN(norm(u), norm(neighbors(t)))`.
#[derive(Debug, Clone)]
pub struct FullUdeRhs<'a, T> {
    shape: &'a MlpShape,
    signal: &'a NeighborSignal<T>,
    target_norm: [Normalizer<T>; 3],
    scale: T,
    ws: MlpWorkspace<T>,
    input: Vec<T>,
    upstream: Vec<T>,
    grad_input: Vec<T>,
}

impl<'a, T: Real> FullUdeRhs<'a, T> {
    pub fn new(
        shape: &'a MlpShape,
        signal: &'a NeighborSignal<T>,
        target_norm: [Normalizer<T>; 3],
        scale: T,
    ) -> Self {
        let nin = shape.input_dim();
        debug_assert_eq!(nin, 3 + signal.channels);
        debug_assert_eq!(shape.output_dim(), 3);
        Self {
            ws: shape.workspace(),
            shape,
            signal,
            target_norm,
            scale,
            input: vec![T::zero(); nin],
            upstream: vec![T::zero(); 3],
            grad_input: vec![T::zero(); nin],
        }
    }

    fn load_input(&mut self, t: T, u: &[T]) {
        for c in 0..3 {
            self.input[c] = self.target_norm[c].apply(u[c]);
        }
        self.signal.sample(t, &mut self.input[3..]);
    }
}

impl<T: Real> DiffRhs<T> for FullUdeRhs<'_, T> {
    fn dim(&self) -> usize {
        3
    }

    fn n_params(&self) -> usize {
        self.shape.n_params()
    }

    fn eval(&mut self, t: T, u: &[T], params: &[T], du: &mut [T]) {
        self.load_input(t, u);
        let out = self.shape.forward(params, &self.input, &mut self.ws);
        for c in 0..3 {
            du[c] = self.scale * out[c];
        }
    }

    fn vjp(&mut self, t: T, u: &[T], params: &[T], w: &[T], gu: &mut [T], gp: &mut [T]) {
        self.load_input(t, u);
        self.shape.forward(params, &self.input, &mut self.ws);
        for c in 0..3 {
            self.upstream[c] = self.scale * w[c];
        }
        self.shape
            .backward(params, &mut self.ws, &self.upstream, gp, &mut self.grad_input);
        for c in 0..3 {
            gu[c] += self.grad_input[c] / self.target_norm[c].range();
        }
    }
}

/// SIR plus a nonnegative learned inflow `g = scale * DNN(norm(neighbors(t)))`
/// moved from S to I. Parameters: `[raw_beta, raw_gamma, theta...]`.
#[derive(Debug, Clone)]
pub struct SirUdeRhs<'a, T> {
    pub pop: T,
    shape: &'a MlpShape,
    signal: &'a NeighborSignal<T>,
    scale: T,
    ws: MlpWorkspace<T>,
    input: Vec<T>,
    grad_input: Vec<T>,
}

impl<'a, T: Real> SirUdeRhs<'a, T> {
    pub fn new(pop: T, shape: &'a MlpShape, signal: &'a NeighborSignal<T>, scale: T) -> Self {
        debug_assert_eq!(shape.input_dim(), signal.channels);
        debug_assert_eq!(shape.output_dim(), 1);
        Self {
            pop,
            ws: shape.workspace(),
            shape,
            signal,
            scale,
            input: vec![T::zero(); signal.channels],
            grad_input: vec![T::zero(); signal.channels],
        }
    }

    /// The learned inflow at time `t` for network parameters `theta`.
    pub fn coupling(&mut self, t: T, theta: &[T]) -> T {
        self.signal.sample(t, &mut self.input);
        self.scale * self.shape.forward(theta, &self.input, &mut self.ws)[0]
    }
}

impl<T: Real> DiffRhs<T> for SirUdeRhs<'_, T> {
    fn dim(&self) -> usize {
        3
    }

    fn n_params(&self) -> usize {
        2 + self.shape.n_params()
    }

    fn eval(&mut self, t: T, u: &[T], params: &[T], du: &mut [T]) {
        let g = self.coupling(t, &params[2..]);
        let d = sir_rhs([u[0], u[1], u[2]], self.pop, &rates_from_raw(params));
        du[0] = d[0] - g;
        du[1] = d[1] + g;
        du[2] = d[2];
    }

    fn vjp(&mut self, t: T, u: &[T], params: &[T], w: &[T], gu: &mut [T], gp: &mut [T]) {
        let w_flow = sir_vjp(u, self.pop, params, w, gu, gp);
        self.signal.sample(t, &mut self.input);
        self.shape.forward(&params[2..], &self.input, &mut self.ws);
        let upstream = [self.scale * w_flow];
        self.shape.backward(
            &params[2..],
            &mut self.ws,
            &upstream,
            &mut gp[2..],
            &mut self.grad_input,
        );
    }
}
