//! Evolutionary SGD with anchor models.
//!
//! A population of models is trained by alternating two phases each
//! generation: every non-anchor member takes gradient steps with a freshly
//! sampled optimizer (reverting any step that worsens validation loss), then
//! a (mu/rho + lambda) evolution step breeds offspring by averaging parents
//! and adding Gaussian noise. Survivors are chosen m-elitist, and a
//! distinguished *anchor* (seeded from a pre-trained model) is only ever
//! replaced by something strictly better, so the best fitness of the
//! population never degrades below the starting model.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the double-precision reference configuration.

pub mod driver;
pub mod error;
pub mod evolution;
pub mod fitness;
pub mod harness;
pub mod history;
pub mod optimizer;
pub mod params;
pub mod population;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use history::RunHistory;
pub use params::{LayerShape, ParamVector};
pub use population::{Individual, Population};
pub use scalar::Scalar;

pub type ParamVector64 = params::ParamVector<f64>;
pub type ParamVector32 = params::ParamVector<f32>;
pub type Individual64 = population::Individual<f64>;
pub type Population64 = population::Population<f64>;
pub type EsgdRun64 = driver::EsgdRun<f64>;
