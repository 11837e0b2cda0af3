use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{bfgs_minimize, Activation, AdamState, BfgsOptions, BfgsStatus, Mlp, MlpShape};
use crate::rng;
use crate::scalar::Real;
use crate::sim::SirParams;

use super::loss::{trajectory_loss, trajectory_loss_grad};
use super::rhs::{rates_from_raw, raw_from_rates, FullUdeRhs, SirFitRhs, SirUdeRhs};
use super::view::TargetView;
use super::{ModelKind, Normalizers, TargetRef, TrainedModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirFitConfig {
    pub iterations: usize,
    pub lr: f64,
    /// Uniform range for the random initial transmission rate.
    pub beta_init: (f64, f64),
    pub gamma_init: (f64, f64),
}

impl Default for SirFitConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lr: 0.01,
            beta_init: (0.05, 0.5),
            gamma_init: (0.02, 0.3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullUdeConfig {
    pub iterations: usize,
    pub lr: f64,
    pub hidden: usize,
}

impl Default for FullUdeConfig {
    fn default() -> Self {
        Self {
            iterations: 2000,
            lr: 0.01,
            hidden: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SirUdeConfig {
    pub adam_iterations: usize,
    pub adam_lr: f64,
    pub bfgs_iterations: usize,
    pub bfgs_lr: f64,
    pub hidden: usize,
}

impl Default for SirUdeConfig {
    fn default() -> Self {
        Self {
            adam_iterations: 1000,
            adam_lr: 0.001,
            bfgs_iterations: 200,
            bfgs_lr: 0.01,
            hidden: 16,
        }
    }
}

/// Training settings shared by the three model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Internal integrator step, days.
    pub dt: f64,
    /// Network outputs are multiplied by `output_scale * N_target` per day.
    pub output_scale: f64,
    pub sir: SirFitConfig,
    pub full_ude: FullUdeConfig,
    pub sir_ude: SirUdeConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            dt: 0.25,
            output_scale: 0.01,
            sir: SirFitConfig::default(),
            full_ude: FullUdeConfig::default(),
            sir_ude: SirUdeConfig::default(),
        }
    }
}

struct AdamRun<T> {
    best: Vec<T>,
    best_loss: T,
    log: Vec<T>,
    rejected: usize,
}

/// Adam with best-seen tracking. A non-finite loss rejects the step: the
/// parameters roll back to the last finite point and the rate is halved.
fn run_adam<T, F>(start: Vec<T>, iterations: usize, lr: T, mut objective: F) -> AdamRun<T>
where
    T: Real,
    F: FnMut(&[T], bool) -> (T, Vec<T>),
{
    let mut params = start;
    let mut state = AdamState::new(params.len(), lr);
    let mut last_good = params.clone();
    let mut best = params.clone();
    let mut best_loss = T::infinity();
    let mut log = Vec::with_capacity(iterations + 1);
    let mut rejected = 0;
    for _ in 0..iterations {
        let (loss, grad) = objective(&params, true);
        if !loss.is_finite() {
            rejected += 1;
            params.clone_from(&last_good);
            state.lr = state.lr * T::lit(0.5);
            continue;
        }
        log.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best.clone_from(&params);
        }
        last_good.clone_from(&params);
        state
            .update(&mut params, &grad)
            .expect("gradient length matches parameters");
    }
    let (loss, _) = objective(&params, false);
    if loss.is_finite() {
        log.push(loss);
        if loss < best_loss {
            best_loss = loss;
            best = params;
        }
    } else {
        rejected += 1;
    }
    AdamRun {
        best,
        best_loss,
        log,
        rejected,
    }
}

fn uniform<T: Real>(rng: &mut rng::SimRng, range: (f64, f64)) -> T {
    T::lit(range.0 + (range.1 - range.0) * rng.random::<f64>())
}

fn base_model<T: Real>(kind: ModelKind, view: &TargetView<T>, cfg: &FitConfig, seed: u64) -> TrainedModel<T> {
    TrainedModel {
        kind,
        sir_params: None,
        net: None,
        sindy: None,
        target: TargetRef::of(view),
        normalizers: Normalizers::of(view),
        output_scale: T::lit(cfg.output_scale) * view.target_pop,
        dt: T::lit(cfg.dt),
        seed,
        training_log: Vec::new(),
        stage_boundary: None,
        diagnostics: Vec::new(),
    }
}

fn note_run<T: Real>(model: &mut TrainedModel<T>, rejected: usize) {
    if rejected > 0 {
        model
            .diagnostics
            .push(format!("{rejected} optimizer steps rejected after non-finite loss"));
    }
    if let (Some(first), Some(last)) = (model.training_log.first(), model.training_log.last()) {
        if *last > *first {
            model.diagnostics.push("not converged: final loss above initial loss".into());
        }
    }
}

/// The random starting point the fitter for `kind` draws from `seed`, in
/// raw optimizer coordinates.
pub fn initial_params<T: Real>(kind: ModelKind, view: &TargetView<T>, cfg: &FitConfig, seed: u64) -> Result<Vec<T>> {
    let mut rng = rng::seeded(seed);
    let mut rates = || {
        let init = SirParams {
            beta: uniform(&mut rng, cfg.sir.beta_init),
            gamma: uniform(&mut rng, cfg.sir.gamma_init),
        };
        raw_from_rates(&init).to_vec()
    };
    match kind {
        ModelKind::SirFit => Ok(rates()),
        ModelKind::FullUde => {
            let shape = full_ude_shape(view.neighbor_channels(), cfg.full_ude.hidden);
            Ok(Mlp::<T>::glorot(shape, &mut rng).into_params())
        }
        ModelKind::SirUde => {
            let mut p = rates();
            let shape = sir_ude_shape(view.neighbor_channels(), cfg.sir_ude.hidden);
            p.extend_from_slice(Mlp::<T>::glorot(shape, &mut rng).params());
            Ok(p)
        }
        ModelKind::SirSindy => Err(Error::invalid("sir+sindy has no trainable parameters")),
    }
}

/// Training-window loss of `kind` at raw parameters `params`, with its
/// gradient through the integrator.
pub fn training_loss_grad<T: Real>(
    kind: ModelKind,
    view: &TargetView<T>,
    cfg: &FitConfig,
    params: &[T],
) -> Result<(T, Vec<T>)> {
    let observed = view.observed(view.train_days);
    let dt = T::lit(cfg.dt);
    let start = view.train_days.0;
    let signal = view.neighbor_signal();
    let scale = T::lit(cfg.output_scale) * view.target_pop;
    let check = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: n,
                actual: params.len(),
            })
        }
    };
    match kind {
        ModelKind::SirFit => {
            check(2)?;
            let mut rhs = SirFitRhs { pop: view.target_pop };
            Ok(trajectory_loss_grad(&mut rhs, params, start, observed, dt))
        }
        ModelKind::FullUde => {
            let shape = full_ude_shape(view.neighbor_channels(), cfg.full_ude.hidden);
            check(shape.n_params())?;
            let mut rhs = FullUdeRhs::new(&shape, &signal, view.target_norm, scale);
            Ok(trajectory_loss_grad(&mut rhs, params, start, observed, dt))
        }
        ModelKind::SirUde => {
            let shape = sir_ude_shape(view.neighbor_channels(), cfg.sir_ude.hidden);
            check(2 + shape.n_params())?;
            let mut rhs = SirUdeRhs::new(view.target_pop, &shape, &signal, scale);
            Ok(trajectory_loss_grad(&mut rhs, params, start, observed, dt))
        }
        ModelKind::SirSindy => Err(Error::invalid("sir+sindy has no trainable parameters")),
    }
}

/// Fits `beta` and `gamma` of an isolated SIR model on the training window.
pub fn fit_sir<T: Real>(view: &TargetView<T>, cfg: &FitConfig, seed: u64) -> Result<TrainedModel<T>> {
    let observed = view.observed(view.train_days);
    let dt = T::lit(cfg.dt);
    let mut rhs = SirFitRhs { pop: view.target_pop };
    let start = view.train_days.0;
    let p0 = initial_params(ModelKind::SirFit, view, cfg, seed)?;
    let run = run_adam(p0, cfg.sir.iterations, T::lit(cfg.sir.lr), |p, grad| {
        if grad {
            trajectory_loss_grad(&mut rhs, p, start, observed, dt)
        } else {
            (trajectory_loss(&mut rhs, p, start, observed, dt), Vec::new())
        }
    });
    let mut model = base_model(ModelKind::SirFit, view, cfg, seed);
    model.sir_params = Some(rates_from_raw(&run.best));
    model.training_log = run.log;
    note_run(&mut model, run.rejected);
    Ok(model)
}

pub fn full_ude_shape(neighbor_channels: usize, hidden: usize) -> MlpShape {
    MlpShape::new(
        vec![3 + neighbor_channels, hidden, 3],
        vec![Activation::Tanh, Activation::Identity],
    )
    .expect("valid full UDE shape")
}

pub fn sir_ude_shape(neighbor_channels: usize, hidden: usize) -> MlpShape {
    MlpShape::new(
        vec![neighbor_channels, hidden, 1],
        vec![Activation::Tanh, Activation::Softplus],
    )
    .expect("valid SIR+UDE shape")
}

/// Trains the network-only model on the training window.
pub fn fit_full_ude<T: Real>(view: &TargetView<T>, cfg: &FitConfig, seed: u64) -> Result<TrainedModel<T>> {
    let shape = full_ude_shape(view.neighbor_channels(), cfg.full_ude.hidden);
    let p0 = initial_params(ModelKind::FullUde, view, cfg, seed)?;
    let signal = view.neighbor_signal();
    let scale = T::lit(cfg.output_scale) * view.target_pop;
    let mut rhs = FullUdeRhs::new(&shape, &signal, view.target_norm, scale);
    let observed = view.observed(view.train_days);
    let dt = T::lit(cfg.dt);
    let start = view.train_days.0;
    let run = run_adam(p0, cfg.full_ude.iterations, T::lit(cfg.full_ude.lr), |p, grad| {
        if grad {
            trajectory_loss_grad(&mut rhs, p, start, observed, dt)
        } else {
            (trajectory_loss(&mut rhs, p, start, observed, dt), Vec::new())
        }
    });
    let mut model = base_model(ModelKind::FullUde, view, cfg, seed);
    model.net = Some(Mlp::from_flat(shape, run.best)?);
    model.training_log = run.log;
    note_run(&mut model, run.rejected);
    Ok(model)
}

/// Trains SIR rates and the inflow network jointly: Adam, then BFGS.
pub fn fit_sir_ude<T: Real>(view: &TargetView<T>, cfg: &FitConfig, seed: u64) -> Result<TrainedModel<T>> {
    let shape = sir_ude_shape(view.neighbor_channels(), cfg.sir_ude.hidden);
    let start_params = initial_params(ModelKind::SirUde, view, cfg, seed)?;
    let signal = view.neighbor_signal();
    let scale = T::lit(cfg.output_scale) * view.target_pop;
    let mut rhs = SirUdeRhs::new(view.target_pop, &shape, &signal, scale);
    let observed = view.observed(view.train_days);
    let dt = T::lit(cfg.dt);
    let start = view.train_days.0;

    let run = run_adam(
        start_params,
        cfg.sir_ude.adam_iterations,
        T::lit(cfg.sir_ude.adam_lr),
        |p, grad| {
            if grad {
                trajectory_loss_grad(&mut rhs, p, start, observed, dt)
            } else {
                (trajectory_loss(&mut rhs, p, start, observed, dt), Vec::new())
            }
        },
    );
    let mut model = base_model(ModelKind::SirUde, view, cfg, seed);
    let mut params = run.best;
    let mut log = run.log;
    let boundary = log.len();
    let mut diagnostics = Vec::new();
    if cfg.sir_ude.bfgs_iterations > 0 && run.best_loss.is_finite() {
        let opts = BfgsOptions {
            max_iters: cfg.sir_ude.bfgs_iterations,
            lr: cfg.sir_ude.bfgs_lr,
            ..BfgsOptions::default()
        };
        let out = bfgs_minimize(
            |p: &[T]| trajectory_loss_grad(&mut rhs, p, start, observed, dt),
            &params,
            &opts,
        );
        match out.status {
            BfgsStatus::LineSearchFailed => diagnostics.push(format!(
                "BFGS line search failed after {} iterations",
                out.iterations
            )),
            BfgsStatus::NonFinite => diagnostics.push("BFGS hit a non-finite objective".to_string()),
            _ => {}
        }
        // the BFGS history starts at the Adam result
        log.extend(out.history.iter().skip(1).copied());
        if out.value <= run.best_loss {
            params = out.params;
        }
    }
    model.sir_params = Some(rates_from_raw(&params));
    model.net = Some(Mlp::from_flat(shape, params[2..].to_vec())?);
    model.training_log = log;
    model.stage_boundary = Some(boundary);
    model.diagnostics = diagnostics;
    note_run(&mut model, run.rejected);
    Ok(model)
}
