// SPDX-License-Identifier: Apache-2.0

//! Process-variation model for I/O pull-up and pull-down resistors.
//!
//! Each pin resistance is `nominal * (1 + d_device + d_pin)`. The device term
//! is shared by all twenty resistors of one device. The pin term mixes a
//! systematic per-pin profile, common to every device in the population, with
//! an independent per-device deviation:
//!
//! ```text
//! d_pin = sigma_pin * (rho * s_pin + sqrt(1 - rho^2) * z_pin)
//! ```
//!
//! where `rho = pin_systematic`, `s_pin` is drawn once per population (and
//! centred over the ten pins of each kind) and `z_pin` per device. Temperature
//! enters linearly around `t_ref` with a separate coefficient per kind; the
//! supply voltage does not change resistance.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::{self, stream};

/// Pins per device.
pub const PIN_COUNT: usize = 10;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("population size must be at least 1")]
    EmptyPopulation,
    #[error("pin {0} out of range 1..={PIN_COUNT}")]
    PinOutOfRange(usize),
    #[error("invalid population model: {0}")]
    InvalidModel(String),
    #[error("device {device}: sampled non-positive resistance {value} ohm")]
    NonPositiveResistance { device: u32, value: f64 },
    #[error("reading model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing model config: {0}")]
    Config(#[from] toml::de::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PinKind {
    PullUp,
    PullDown,
}

/// Operating point of a device.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub temperature_c: f64,
    pub vdd: f64,
}

impl Environment {
    pub fn new(temperature_c: f64, vdd: f64) -> Self {
        Environment { temperature_c, vdd }
    }
}

impl Default for Environment {
    fn default() -> Self {
        Environment {
            temperature_c: 29.0,
            vdd: 5.0,
        }
    }
}

/// Population-level parameters. Loadable from TOML; every key is optional
/// and falls back to [`PopulationModel::default`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PopulationModel {
    /// Ohm.
    pub r_pu_nominal: f64,
    /// Ohm.
    pub r_pd_nominal: f64,
    /// Relative std-dev of the per-device shift.
    pub sigma_device: f64,
    /// Relative std-dev of the per-pin deviation.
    pub sigma_pin: f64,
    /// Fraction `rho` in [0, 1] of the per-pin deviation that is systematic
    /// across the population.
    pub pin_systematic: f64,
    /// Fractional resistance change per degree C.
    pub tempco_pu: f64,
    pub tempco_pd: f64,
    /// Degrees C.
    pub t_ref: f64,
    /// Volts, per acquisition.
    pub noise_sigma_v: f64,
    pub seed: u64,
}

impl Default for PopulationModel {
    fn default() -> Self {
        PopulationModel {
            r_pu_nominal: 5600.0,
            r_pd_nominal: 8500.0,
            sigma_device: 0.05,
            sigma_pin: 0.02,
            pin_systematic: 0.9,
            tempco_pu: 0.0020,
            tempco_pd: 0.0023,
            t_ref: 29.0,
            noise_sigma_v: 80e-6,
            seed: 0x10_9F,
        }
    }
}

impl PopulationModel {
    /// A model with every random term switched off.
    pub fn zero_variance() -> Self {
        PopulationModel {
            sigma_device: 0.0,
            sigma_pin: 0.0,
            noise_sigma_v: 0.0,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let bad = |msg: &str| Err(DeviceError::InvalidModel(msg.to_string()));
        let finite = [
            self.r_pu_nominal,
            self.r_pd_nominal,
            self.sigma_device,
            self.sigma_pin,
            self.pin_systematic,
            self.tempco_pu,
            self.tempco_pd,
            self.t_ref,
            self.noise_sigma_v,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if self.r_pu_nominal <= 0.0 || self.r_pd_nominal <= 0.0 {
            return bad("nominal resistances must be > 0");
        }
        if self.sigma_device < 0.0 || self.sigma_pin < 0.0 || self.noise_sigma_v < 0.0 {
            return bad("standard deviations must be >= 0");
        }
        if !(0.0..=1.0).contains(&self.pin_systematic) {
            return bad("pin_systematic must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, DeviceError> {
        let model: PopulationModel = toml::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self, DeviceError> {
        let text = std::fs::read_to_string(path).map_err(|source| DeviceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn nominal(&self, kind: PinKind) -> f64 {
        match kind {
            PinKind::PullUp => self.r_pu_nominal,
            PinKind::PullDown => self.r_pd_nominal,
        }
    }

    pub fn tempco(&self, kind: PinKind) -> f64 {
        match kind {
            PinKind::PullUp => self.tempco_pu,
            PinKind::PullDown => self.tempco_pd,
        }
    }
}

/// One sampled device. Resistances are at `t_ref`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceInstance {
    pub device_id: u32,
    pub r_pu: [f64; PIN_COUNT],
    pub r_pd: [f64; PIN_COUNT],
}

impl DeviceInstance {
    /// Base resistance of `pin` (1-based).
    pub fn base_resistance(&self, pin: usize, kind: PinKind) -> Result<f64, DeviceError> {
        if !(1..=PIN_COUNT).contains(&pin) {
            return Err(DeviceError::PinOutOfRange(pin));
        }
        Ok(match kind {
            PinKind::PullUp => self.r_pu[pin - 1],
            PinKind::PullDown => self.r_pd[pin - 1],
        })
    }
}

fn standard_normals<R: rand::Rng>(rng: &mut R) -> [f64; PIN_COUNT] {
    std::array::from_fn(|_| StandardNormal.sample(rng))
}

fn centred(mut v: [f64; PIN_COUNT]) -> [f64; PIN_COUNT] {
    let mean = v.iter().sum::<f64>() / PIN_COUNT as f64;
    v.iter_mut().for_each(|x| *x -= mean);
    v
}

/// Samples `count` devices with ids `0..count`.
pub fn sample_population(
    model: &PopulationModel,
    count: usize,
) -> Result<Vec<DeviceInstance>, DeviceError> {
    if count == 0 {
        return Err(DeviceError::EmptyPopulation);
    }
    model.validate()?;

    let mut profile_rng = seed::rng(seed::split(model.seed, stream::PIN_PROFILE, &[]));
    let profile_pu = centred(standard_normals(&mut profile_rng));
    let profile_pd = centred(standard_normals(&mut profile_rng));
    let rho = model.pin_systematic;
    let own = (1.0 - rho * rho).sqrt();

    (0..count as u32)
        .map(|device_id| {
            let mut rng = seed::rng(seed::split(model.seed, stream::DEVICE, &[device_id as u64]));
            let n: f64 = StandardNormal.sample(&mut rng);
            let d_device = model.sigma_device * n;
            let z_pu = standard_normals(&mut rng);
            let z_pd = standard_normals(&mut rng);
            let build = |nominal: f64, profile: &[f64; PIN_COUNT], z: &[f64; PIN_COUNT]| {
                std::array::from_fn(|p| {
                    let d_pin = model.sigma_pin * (rho * profile[p] + own * z[p]);
                    nominal * (1.0 + d_device + d_pin)
                })
            };
            let device = DeviceInstance {
                device_id,
                r_pu: build(model.r_pu_nominal, &profile_pu, &z_pu),
                r_pd: build(model.r_pd_nominal, &profile_pd, &z_pd),
            };
            if let Some(&value) = device.r_pu.iter().chain(&device.r_pd).find(|&&r| r <= 0.0) {
                return Err(DeviceError::NonPositiveResistance { device: device_id, value });
            }
            Ok(device)
        })
        .collect()
}

/// Resistance of `pin` at the given operating point.
pub fn resistance_at(
    device: &DeviceInstance,
    pin: usize,
    kind: PinKind,
    env: &Environment,
    model: &PopulationModel,
) -> Result<f64, DeviceError> {
    let base = device.base_resistance(pin, kind)?;
    Ok(base * (1.0 + model.tempco(kind) * (env.temperature_c - model.t_ref)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_devices_are_nominal() {
        let model = PopulationModel::zero_variance();
        let devices = sample_population(&model, 3).unwrap();
        assert_eq!(devices.len(), 3);
        for d in &devices {
            assert!(d.r_pu.iter().all(|&r| r == model.r_pu_nominal));
            assert!(d.r_pd.iter().all(|&r| r == model.r_pd_nominal));
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = PopulationModel::default();
        assert_eq!(
            sample_population(&model, 5).unwrap(),
            sample_population(&model, 5).unwrap()
        );
    }

    #[test]
    fn prefix_of_population_is_stable() {
        let model = PopulationModel::default();
        let small = sample_population(&model, 3).unwrap();
        let large = sample_population(&model, 10).unwrap();
        assert_eq!(small[..], large[..3]);
    }

    #[test]
    fn empty_population_rejected() {
        assert!(matches!(
            sample_population(&PopulationModel::default(), 0),
            Err(DeviceError::EmptyPopulation)
        ));
    }

    #[test]
    fn mean_resistance_converges_to_nominal() {
        let model = PopulationModel::default();
        let devices = sample_population(&model, 1000).unwrap();
        let n = (devices.len() * PIN_COUNT) as f64;
        let mean_pu = devices.iter().flat_map(|d| d.r_pu).sum::<f64>() / n;
        let mean_pd = devices.iter().flat_map(|d| d.r_pd).sum::<f64>() / n;
        assert!((mean_pu / model.r_pu_nominal - 1.0).abs() < 0.01, "{mean_pu}");
        assert!((mean_pd / model.r_pd_nominal - 1.0).abs() < 0.01, "{mean_pd}");
    }

    #[test]
    fn device_shift_is_common_to_all_pins() {
        // With no pin spread every pin of a device carries the same factor.
        let model = PopulationModel {
            sigma_pin: 0.0,
            ..Default::default()
        };
        for d in sample_population(&model, 4).unwrap() {
            let f_pu = d.r_pu[0] / model.r_pu_nominal;
            let f_pd = d.r_pd[0] / model.r_pd_nominal;
            assert!((f_pu - f_pd).abs() < 1e-12);
            assert!(d.r_pu.iter().all(|&r| (r / model.r_pu_nominal - f_pu).abs() < 1e-12));
        }
    }

    #[test]
    fn resistance_at_reference_and_linear_shift() {
        let model = PopulationModel {
            tempco_pu: 0.002,
            ..PopulationModel::zero_variance()
        };
        let device = &sample_population(&model, 1).unwrap()[0];
        let at_ref = Environment::new(model.t_ref, 5.0);
        assert_eq!(
            resistance_at(device, 1, PinKind::PullUp, &at_ref, &model).unwrap(),
            5600.0
        );
        let hot = Environment::new(model.t_ref + 10.0, 3.3);
        let r = resistance_at(device, 1, PinKind::PullUp, &hot, &model).unwrap();
        assert!((r - 5712.0).abs() < 1e-9, "{r}");
    }

    #[test]
    fn pin_range_checked() {
        let device = &sample_population(&PopulationModel::default(), 1).unwrap()[0];
        let env = Environment::default();
        let model = PopulationModel::default();
        for pin in [0, 11] {
            assert!(matches!(
                resistance_at(device, pin, PinKind::PullDown, &env, &model),
                Err(DeviceError::PinOutOfRange(p)) if p == pin
            ));
        }
    }

    #[test]
    fn config_round_trip_and_defaults() {
        let model = PopulationModel::from_toml_str("sigma_pin = 0.03\nseed = 9\n").unwrap();
        assert_eq!(model.sigma_pin, 0.03);
        assert_eq!(model.seed, 9);
        assert_eq!(model.r_pu_nominal, 5600.0);
        let text = toml::to_string(&model).unwrap();
        assert_eq!(PopulationModel::from_toml_str(&text).unwrap(), model);
    }

    #[test]
    fn config_rejects_bad_values() {
        assert!(PopulationModel::from_toml_str("r_pu_nominal = -1.0").is_err());
        assert!(PopulationModel::from_toml_str("sigma_pin = -0.1").is_err());
        assert!(PopulationModel::from_toml_str("pin_systematic = 1.5").is_err());
        assert!(PopulationModel::from_toml_str("bogus = 1").is_err());
    }
}
