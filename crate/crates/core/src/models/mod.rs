//! Per-region models trained by differentiating through the integrator.

mod fit;
mod loss;
pub mod rhs;
mod view;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::Mlp;
use crate::ode::{integrate_rk4, DiffRhs};
use crate::scalar::Real;
use crate::sim::SirParams;
use crate::sindy::SindyRegression;

pub use fit::{
    fit_full_ude, fit_sir, fit_sir_ude, full_ude_shape, initial_params, sir_ude_shape, training_loss_grad,
    FitConfig, FullUdeConfig, SirFitConfig, SirUdeConfig,
};
pub use loss::{trajectory_loss, trajectory_loss_grad};
pub use rhs::{FullUdeRhs, SirFitRhs, SirUdeRhs};
pub use view::{make_target_view, NeighborSignal, Normalizer, TargetView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "sir")]
    SirFit,
    #[serde(rename = "ude")]
    FullUde,
    #[serde(rename = "sir+ude")]
    SirUde,
    #[serde(rename = "sir+sindy")]
    SirSindy,
}

impl ModelKind {
    /// The three kinds trained directly on data.
    pub const TRAINED: [ModelKind; 3] = [ModelKind::SirFit, ModelKind::FullUde, ModelKind::SirUde];

    pub fn slug(self) -> &'static str {
        match self {
            ModelKind::SirFit => "sir",
            ModelKind::FullUde => "ude",
            ModelKind::SirUde => "sir+ude",
            ModelKind::SirSindy => "sir+sindy",
        }
    }

    /// Filesystem-safe variant of [`slug`](Self::slug).
    pub fn file_stem(self) -> &'static str {
        match self {
            ModelKind::SirFit => "sir",
            ModelKind::FullUde => "ude",
            ModelKind::SirUde => "sir_ude",
            ModelKind::SirSindy => "sir_sindy",
        }
    }

    pub fn index(self) -> u8 {
        self as u8
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sir" => Ok(ModelKind::SirFit),
            "ude" => Ok(ModelKind::FullUde),
            "sir+ude" | "sir_ude" => Ok(ModelKind::SirUde),
            "sir+sindy" | "sir_sindy" => Ok(ModelKind::SirSindy),
            _ => Err(Error::invalid(format!(
                "unknown model kind {s:?} (expected sir, ude, sir+ude or sir+sindy)"
            ))),
        }
    }
}

/// Which slice of a dataset a model was trained on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetRef {
    pub init: usize,
    pub region: usize,
    pub neighbors: Vec<usize>,
    pub train_days: (usize, usize),
}

impl TargetRef {
    pub fn of<T: Real>(view: &TargetView<T>) -> Self {
        Self {
            init: view.init,
            region: view.region,
            neighbors: view.neighbors.clone(),
            train_days: view.train_days,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Normalizers<T> {
    pub target: [Normalizer<T>; 3],
    pub neighbors: Vec<Normalizer<T>>,
}

impl<T: Real> Normalizers<T> {
    pub fn of(view: &TargetView<T>) -> Self {
        Self {
            target: view.target_norm,
            neighbors: view.neighbor_norm.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct TrainedModel<T> {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sir_params: Option<SirParams<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub net: Option<Mlp<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sindy: Option<SindyRegression<T>>,
    pub target: TargetRef,
    pub normalizers: Normalizers<T>,
    /// Individuals per day represented by one unit of network output.
    pub output_scale: T,
    pub dt: T,
    pub seed: u64,
    pub training_log: Vec<T>,
    /// Index in `training_log` where the second optimizer stage starts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_boundary: Option<usize>,
    #[serde(default)]
    pub diagnostics: Vec<String>,
}

impl<T: Real> TrainedModel<T> {
    /// Checks that the populated fields match the kind.
    pub fn validate(&self) -> Result<()> {
        let has = (
            self.sir_params.is_some(),
            self.net.is_some(),
            self.sindy.is_some(),
        );
        let want = match self.kind {
            ModelKind::SirFit => (true, false, false),
            ModelKind::FullUde => (false, true, false),
            ModelKind::SirUde => (true, true, false),
            ModelKind::SirSindy => (true, false, true),
        };
        if has != want {
            return Err(Error::invalid(format!(
                "{} model has fields (params, net, sindy) = {has:?}",
                self.kind
            )));
        }
        Ok(())
    }

    pub fn expect_kind(&self, kind: ModelKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::WrongModelKind {
                expected: kind.slug().into(),
                actual: self.kind.slug().into(),
            });
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!(
            "{}/init{}/region{}",
            self.kind, self.target.init, self.target.region
        )
    }

    /// Final training loss, if any iteration was logged.
    pub fn final_loss(&self) -> Option<T> {
        self.training_log.last().copied()
    }
}

fn check_view<T: Real>(model: &TrainedModel<T>, view: &TargetView<T>) -> Result<()> {
    if model.target.region != view.region || model.target.neighbors != view.neighbors {
        return Err(Error::invalid(format!(
            "model {} does not belong to region {}",
            model.id(),
            view.region
        )));
    }
    Ok(())
}

/// A view's neighbor signal normalized with the model's own normalizers.
pub(crate) fn model_signal<T: Real>(model: &TrainedModel<T>, view: &TargetView<T>) -> NeighborSignal<T> {
    let c = view.neighbor_channels();
    let samples = view
        .neighbor_series
        .chunks_exact(c)
        .flat_map(|row| {
            row.iter()
                .zip(&model.normalizers.neighbors)
                .map(|(&x, n)| n.apply(x))
        })
        .collect();
    NeighborSignal {
        first_day: T::one(),
        channels: c,
        samples,
    }
}

/// Clamp events counted while integrating a substituted regression.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PredictStats {
    pub clamps: usize,
    pub evaluations: usize,
}

/// Integrates the model from the observed target state at `span.0` and
/// returns one state per day of the inclusive span. Neighbor inputs come
/// from the view's observed series.
pub fn predict<T: Real>(
    model: &TrainedModel<T>,
    view: &TargetView<T>,
    span: (usize, usize),
) -> Result<Vec<[T; 3]>> {
    predict_with_stats(model, view, span).map(|(traj, _)| traj)
}

pub fn predict_with_stats<T: Real>(
    model: &TrainedModel<T>,
    view: &TargetView<T>,
    span: (usize, usize),
) -> Result<(Vec<[T; 3]>, PredictStats)> {
    model.validate()?;
    check_view(model, view)?;
    view.check_span(span)?;
    let u0 = view.target[span.0 - 1];
    let t_span = (
        T::from_usize_lossy(span.0),
        T::from_usize_lossy(span.1),
    );
    let mut stats = PredictStats::default();
    let traj = match model.kind {
        ModelKind::SirFit => {
            let params = model.sir_params.expect("validated");
            integrate_rk4(
                |_, u: &[T], du: &mut [T]| {
                    du.copy_from_slice(&rhs::sir_rhs([u[0], u[1], u[2]], view.target_pop, &params))
                },
                &u0,
                t_span,
                model.dt,
                T::one(),
            )
        }
        ModelKind::FullUde => {
            let net = model.net.as_ref().expect("validated");
            let signal = model_signal(model, view);
            let mut rhs =
                FullUdeRhs::new(&net.shape, &signal, model.normalizers.target, model.output_scale);
            let p = net.params();
            integrate_rk4(|t, u: &[T], du: &mut [T]| rhs.eval(t, u, p, du), &u0, t_span, model.dt, T::one())
        }
        ModelKind::SirUde => {
            let net = model.net.as_ref().expect("validated");
            let signal = model_signal(model, view);
            let mut rhs = SirUdeRhs::new(view.target_pop, &net.shape, &signal, model.output_scale);
            let mut p = rhs::raw_from_rates(&model.sir_params.expect("validated")).to_vec();
            p.extend_from_slice(net.params());
            integrate_rk4(|t, u: &[T], du: &mut [T]| rhs.eval(t, u, &p, du), &u0, t_span, model.dt, T::one())
        }
        ModelKind::SirSindy => {
            let params = model.sir_params.expect("validated");
            let reg = model.sindy.as_ref().expect("validated");
            let signal = model_signal(model, view);
            let mut x = vec![T::zero(); signal.channels];
            let mut scratch = Vec::new();
            integrate_rk4(
                |t, u: &[T], du: &mut [T]| {
                    signal.sample(t, &mut x);
                    let raw = reg.evaluate_with(&x, &mut scratch);
                    stats.evaluations += 1;
                    let g = if raw < T::zero() {
                        stats.clamps += 1;
                        T::zero()
                    } else {
                        model.output_scale * raw
                    };
                    let d = rhs::sir_rhs([u[0], u[1], u[2]], view.target_pop, &params);
                    du[0] = d[0] - g;
                    du[1] = d[1] + g;
                    du[2] = d[2];
                },
                &u0,
                t_span,
                model.dt,
                T::one(),
            )
        }
    };
    let traj = traj.map_err(|e| Error::Prediction {
        model: model.id(),
        source: Box::new(e),
    })?;
    let rows = traj.states.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    Ok((rows, stats))
}

/// The SIR+UDE coupling term `g` (individuals per day) at each day of `span`.
pub fn coupling_series<T: Real>(
    model: &TrainedModel<T>,
    view: &TargetView<T>,
    span: (usize, usize),
) -> Result<Vec<T>> {
    model.expect_kind(ModelKind::SirUde)?;
    check_view(model, view)?;
    view.check_span(span)?;
    let net = model.net.as_ref().expect("SIR+UDE model has a network");
    let signal = model_signal(model, view);
    let mut rhs = SirUdeRhs::new(view.target_pop, &net.shape, &signal, model.output_scale);
    Ok((span.0..=span.1)
        .map(|d| rhs.coupling(T::from_usize_lossy(d), net.params()))
        .collect())
}
