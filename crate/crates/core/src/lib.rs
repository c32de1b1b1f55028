//! Connected-chain SC-LDPC ensembles for bit-interleaved coded modulation:
//! protograph construction, equivalent-BEC channel profiles, density
//! evolution thresholds, joint connection and bit-mapping design, lifting,
//! and finite-length BER simulation.

pub mod bitmap;
pub mod channel;
pub mod density;
pub mod error;
pub mod lifting;
pub mod optimizer;
pub mod protograph;
pub mod simulator;
pub mod workflow;

pub use bitmap::BitMapping;
pub use channel::{ErasureProfile, LabeledConstellation};
pub use density::{DeOptions, DeResult, Threshold};
pub use error::{Error, Result};
pub use lifting::{ChannelAssignment, LiftedCode};
pub use optimizer::{DeHyperParams, Design};
pub use protograph::{ConnectionSpec, EnsembleDescription, Protograph, SingleChainParams};
pub use simulator::{BerRecord, SimConfig};
