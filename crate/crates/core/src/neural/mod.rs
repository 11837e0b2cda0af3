//! Small dense networks with hand-written reverse mode, plus the Adam and
//! BFGS optimizers used to train them.

mod adam;
mod bfgs;
mod mlp;

pub use adam::AdamState;
pub use bfgs::{bfgs_minimize, BfgsOptions, BfgsOutcome, BfgsState, BfgsStatus};
pub use mlp::{Activation, Mlp, MlpDoc, MlpShape, MlpWorkspace};
