//! Conditional GANs as large-step samplers for GBM and CIR.
//!
//! Bottom-up: [`special`] (normal and non-central chi-squared functions),
//! [`sde`] (models and exact transitions), [`schemes`] (Euler-type
//! baselines), [`preprocess`] (training sets), [`nn`] and [`gan`]
//! (networks and training), [`stats`] and [`paths`] (evaluation).

pub mod error;
pub mod gan;
pub mod nn;
pub mod paths;
pub mod preprocess;
pub mod schemes;
pub mod sde;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
pub use gan::{
    ConditionalGenerator, GanDiscriminator, GanGenerator, GanMeta, GanVariant, LogRecord, MonitorCondition,
    TrainConfig, TrainedGan,
};
pub use nn::{Activation, LayerParams, Mlp};
pub use paths::{ExactMap, PathEnsemble, PathSource};
pub use preprocess::{Conditioning, TrainingSet, TransformKind};
pub use schemes::SchemeKind;
pub use sde::{PairingMode, SdeModel};
pub use stats::TestFunction;
