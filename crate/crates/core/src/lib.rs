//! Meta-learned successive interference cancellation for two-user
//! power-domain NOMA: a two-block neural detector (SICNet), classic SIC,
//! MAML meta-training with exact second-order terms, and the experiment
//! runners behind the `meta-sicnet` binary.

pub mod checkpoint;
pub mod classic;
pub mod error;
pub mod experiments;
pub mod meta;
pub mod numerics;
pub mod phy;
pub mod rng;
pub mod ser;
pub mod sicnet;

pub use error::{Error, Result};
