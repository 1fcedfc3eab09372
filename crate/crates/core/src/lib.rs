//! Data-driven passivity analysis.
//!
//! Identify a storage function and an excess-of-passivity margin for an
//! unknown input-affine system from sampled trajectories by solving a linear
//! program over a dictionary of basis functions, then reuse that function for
//! feedback certification, Lie-derivative estimation, domain-of-attraction
//! estimates and damping control.

pub mod analysis;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod identify;
pub mod lp;
pub mod sim;
pub mod study;
pub mod trajectory;

pub use analysis::{certify_feedback, damping_control, doa_estimate, estimate_lfs, negative_region, RegionDescriptor, Verdict};
pub use config::RunConfig;
pub use dictionary::{Dictionary, Feature, StorageEstimate};
pub use error::{Error, Result};
pub use identify::{identify, Identification, IdentifyOptions, SupplyKind};
pub use sim::{Controller, InputSignal, Pendulum, SimConfig};
pub use study::IdentifyResult;
pub use trajectory::Trajectory;
