// SPDX-License-Identifier: Apache-2.0

//! Simulation and key-generation pipeline for a PUF built from the internal
//! pull-up and pull-down resistors of microcontroller I/O pins.
//!
//! Data flows `device_model` → `measurement` → `response` →
//! `fuzzy_extractor` (backed by `bch_codec`) → `crypto_primitives` →
//! `secure_channel`; `metrics` evaluates responses and `experiment` ties the
//! stages together under a single master seed.

pub mod bch_codec;
pub mod bits;
pub mod crypto_primitives;
pub mod device_model;
pub mod experiment;
pub mod fuzzy_extractor;
pub mod measurement;
pub mod metrics;
pub mod response;
pub mod secure_channel;
pub mod seed;

pub use bits::Bits;
pub use device_model::{DeviceInstance, Environment, PinKind, PopulationModel};
pub use experiment::ExperimentConfig;
pub use fuzzy_extractor::{HelperBundle, PufId};
pub use measurement::ReadingSet;
pub use response::{PufResponse, ResponseConfig};
