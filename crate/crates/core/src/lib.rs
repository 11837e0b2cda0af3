//! Regional outbreak simulation and hybrid mechanistic/neural modelling.

pub mod error;
pub mod experiment;
pub mod geography;
pub mod io;
pub mod metrics;
pub mod models;
pub mod neural;
pub mod ode;
pub mod rng;
pub mod scalar;
pub mod sim;
pub mod sindy;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Geography64 = geography::Geography<f64>;
pub type Mobility64 = geography::MobilityMatrix<f64>;
pub type Dataset64 = sim::OutbreakDataset<f64>;
pub type Model64 = models::TrainedModel<f64>;
pub type Mlp64 = neural::Mlp<f64>;
pub type Regression64 = sindy::SindyRegression<f64>;
pub type Geography32 = geography::Geography<f32>;
pub type Dataset32 = sim::OutbreakDataset<f32>;
pub type Model32 = models::TrainedModel<f32>;
pub type Mlp32 = neural::Mlp<f32>;
