pub mod array;
pub mod channel;
pub mod dataset;
pub mod doppler;
pub mod dsp;
pub mod error;
pub mod features;
pub mod rng;
pub mod scenario;
pub mod sources;
pub mod verify;
pub mod wav;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/signals.md")]
    pub struct Signals;
    #[doc = include_str!("../../../book/src/channel.md")]
    pub struct Channel;
    #[doc = include_str!("../../../book/src/doppler.md")]
    pub struct Doppler;
    #[doc = include_str!("../../../book/src/mic-array.md")]
    pub struct MicArray;
    #[doc = include_str!("../../../book/src/scenarios.md")]
    pub struct Scenarios;
    #[doc = include_str!("../../../book/src/features.md")]
    pub struct Features;
    #[doc = include_str!("../../../book/src/dataset.md")]
    pub struct Dataset;
    #[doc = include_str!("../../../book/src/verification.md")]
    pub struct Verification;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
