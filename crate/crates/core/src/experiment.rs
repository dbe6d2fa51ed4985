// SPDX-License-Identifier: Apache-2.0

//! Experiment orchestration: population acquisition, metric reports,
//! environmental sweeps and error injection, all derived from one master
//! seed.
//!
//! Acquisition seeds are keyed by `(device_id, temperature, vdd, samples,
//! repeat)`, so a reading does not depend on which other points or devices
//! were evaluated alongside it.

use std::path::Path;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::device_model::{sample_population, DeviceError, DeviceInstance, Environment, PopulationModel};
use crate::fuzzy_extractor::{enroll, regenerate, ExtractorError, HelperBundle, PufId};
use crate::measurement::{acquire, MeasurementError, MeasurementSetup, ReadingSet};
use crate::metrics::{evaluate, stability_ber, BerSummary, MetricReport, MetricsError};
use crate::response::{response_for_config, ResponseConfig, COMBINED_BITS};
use crate::seed::{self, stream};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Measurement(#[from] MeasurementError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Extractor(#[from] ExtractorError),
    #[error("parsing experiment config: {0}")]
    Config(#[from] toml::de::Error),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Full experiment description. Every field has a default; a TOML file only
/// needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub devices: usize,
    /// Averaged samples per slot for reference readings.
    pub reference_samples: u32,
    /// Averaged samples per slot for sweep probes.
    pub probe_samples: u32,
    /// Probes per device at each sweep point.
    pub probe_repeats: u32,
    /// Repeated reference acquisitions per device for reliability.
    pub reliability_repeats: u32,
    pub reference_temperature_c: f64,
    pub reference_vdd: f64,
    pub temperatures_c: Vec<f64>,
    pub voltages: Vec<f64>,
    pub model: PopulationModel,
    pub setup: MeasurementSetup,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            devices: 30,
            reference_samples: 10_000,
            probe_samples: 1,
            probe_repeats: 10,
            reliability_repeats: 100,
            reference_temperature_c: 29.0,
            reference_vdd: 5.0,
            temperatures_c: vec![29.0, 40.0, 45.0, 50.0, 60.0, 70.0],
            voltages: vec![3.50, 4.00, 4.50, 4.75, 5.00, 5.25],
            model: PopulationModel::default(),
            setup: MeasurementSetup::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepKind {
    Temperature,
    Voltage,
}

impl std::str::FromStr for SweepKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "temp" | "temperature" => Ok(SweepKind::Temperature),
            "voltage" | "vdd" => Ok(SweepKind::Voltage),
            other => Err(format!("unknown sweep kind {other:?} (temp|voltage)")),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Invalid(m));
        if self.devices == 0 {
            return bad("devices must be at least 1".into());
        }
        if self.reference_samples == 0 || self.probe_samples == 0 {
            return bad("sample counts must be at least 1".into());
        }
        if self.probe_repeats == 0 || self.reliability_repeats == 0 {
            return bad("repeat counts must be at least 1".into());
        }
        if self.temperatures_c.is_empty() || self.voltages.is_empty() {
            return bad("sweep lists must be nonempty".into());
        }
        if !self.temperatures_c.contains(&self.reference_temperature_c) {
            return bad(format!(
                "temperature sweep must include the reference {} °C",
                self.reference_temperature_c
            ));
        }
        if !self.voltages.contains(&self.reference_vdd) {
            return bad(format!(
                "voltage sweep must include the reference {} V",
                self.reference_vdd
            ));
        }
        if let Some(v) = self.voltages.iter().find(|&&v| !(v > 0.0)) {
            return bad(format!("sweep voltage {v} must be > 0"));
        }
        if self.temperatures_c.iter().any(|t| !t.is_finite()) {
            return bad("sweep temperatures must be finite".into());
        }
        self.model.validate()?;
        self.setup.validate()?;
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn reference_env(&self) -> Environment {
        Environment::new(self.reference_temperature_c, self.reference_vdd)
    }

    /// Operating points of a sweep, in configured order.
    pub fn sweep_points(&self, kind: SweepKind) -> Vec<Environment> {
        match kind {
            SweepKind::Temperature => self
                .temperatures_c
                .iter()
                .map(|&t| Environment::new(t, self.reference_vdd))
                .collect(),
            SweepKind::Voltage => self
                .voltages
                .iter()
                .map(|&v| Environment::new(self.reference_temperature_c, v))
                .collect(),
        }
    }

    pub fn population(&self) -> Result<Vec<DeviceInstance>, ExperimentError> {
        self.validate()?;
        Ok(sample_population(&self.model, self.devices)?)
    }

    /// Seed of one acquisition.
    pub fn acquisition_seed(&self, device_id: u32, env: &Environment, samples: u32, repeat: u32) -> u64 {
        seed::split(
            self.model.seed,
            stream::ACQUIRE,
            &[
                device_id as u64,
                env.temperature_c.to_bits(),
                env.vdd.to_bits(),
                samples as u64,
                repeat as u64,
            ],
        )
    }

    pub fn acquire(
        &self,
        device: &DeviceInstance,
        env: &Environment,
        samples: u32,
        repeat: u32,
    ) -> Result<ReadingSet, ExperimentError> {
        let s = self.acquisition_seed(device.device_id, env, samples, repeat);
        Ok(acquire(device, env, &self.model, &self.setup, samples, s)?)
    }

    /// One reference reading per device, in device order.
    pub fn reference_readings(&self, devices: &[DeviceInstance]) -> Result<Vec<ReadingSet>, ExperimentError> {
        let env = self.reference_env();
        devices
            .par_iter()
            .map(|d| self.acquire(d, &env, self.reference_samples, 0))
            .collect()
    }

    /// `repeats` reference-grade readings per device.
    pub fn repeated_readings(
        &self,
        devices: &[DeviceInstance],
        repeats: u32,
    ) -> Result<Vec<Vec<ReadingSet>>, ExperimentError> {
        let env = self.reference_env();
        devices
            .par_iter()
            .map(|d| {
                (0..repeats)
                    .map(|r| self.acquire(d, &env, self.reference_samples, r))
                    .collect()
            })
            .collect()
    }
}

/// Groups reading sets by device id (ascending); within a device the input
/// order is kept, so the first reading is the reference.
pub fn group_by_device(readings: &[ReadingSet]) -> Vec<(u32, Vec<ReadingSet>)> {
    let mut groups: std::collections::BTreeMap<u32, Vec<ReadingSet>> = Default::default();
    for rs in readings {
        groups.entry(rs.device_id).or_default().push(rs.clone());
    }
    groups.into_iter().collect()
}

/// Metric report for one configuration over per-device reading groups.
pub fn report_for(
    config: ResponseConfig,
    groups: &[(u32, Vec<ReadingSet>)],
) -> Result<MetricReport, MetricsError> {
    let responses: Vec<(u32, Vec<Bits>)> = groups
        .iter()
        .map(|(id, sets)| {
            (
                *id,
                sets.iter()
                    .map(|rs| response_for_config(rs, config).bits)
                    .collect(),
            )
        })
        .collect();
    evaluate(config, &responses)
}

/// Reports for all four configurations.
pub fn all_reports(groups: &[(u32, Vec<ReadingSet>)]) -> Result<Vec<MetricReport>, MetricsError> {
    ResponseConfig::ALL
        .iter()
        .map(|&c| report_for(c, groups))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub env: Environment,
    /// BER percentages over every device and probe at this point.
    pub ber: BerSummary,
    /// Largest flip count seen at this point.
    pub max_flips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: SweepKind,
    pub config: ResponseConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// `point,min,mean,max`; BER in percent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("point,min,mean,max\n");
        for row in &self.rows {
            let point = match self.kind {
                SweepKind::Temperature => row.env.temperature_c,
                SweepKind::Voltage => row.env.vdd,
            };
            out.push_str(&format!(
                "{point},{:.4},{:.4},{:.4}\n",
                row.ber.min, row.ber.mean, row.ber.max
            ));
        }
        out
    }

    pub fn max_flips(&self) -> usize {
        self.rows.iter().map(|r| r.max_flips).max().unwrap_or(0)
    }
}

/// Probe responses of one device at one operating point.
pub fn probe_responses(
    cfg: &ExperimentConfig,
    device: &DeviceInstance,
    env: &Environment,
    config: ResponseConfig,
) -> Result<Vec<Bits>, ExperimentError> {
    (0..cfg.probe_repeats)
        .map(|r| {
            let rs = cfg.acquire(device, env, cfg.probe_samples, r)?;
            Ok(response_for_config(&rs, config).bits)
        })
        .collect()
}

/// BER of probes at every sweep point against each device's reference
/// response.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    devices: &[DeviceInstance],
    kind: SweepKind,
    config: ResponseConfig,
) -> Result<SweepReport, ExperimentError> {
    cfg.validate()?;
    let references: Vec<Bits> = cfg
        .reference_readings(devices)?
        .iter()
        .map(|rs| response_for_config(rs, config).bits)
        .collect();

    let mut rows = Vec::new();
    for env in cfg.sweep_points(kind) {
        let per_device: Vec<Vec<f64>> = devices
            .par_iter()
            .zip(&references)
            .map(|(d, reference)| {
                let probes = probe_responses(cfg, d, &env, config)?;
                Ok(stability_ber(reference, &probes)?)
            })
            .collect::<Result<_, ExperimentError>>()?;
        let all: Vec<f64> = per_device.into_iter().flatten().collect();
        let ber = BerSummary::from_values(&all)?;
        let len = config.response_len() as f64;
        rows.push(SweepRow {
            env,
            max_flips: (ber.max * len / 100.0).round() as usize,
            ber,
        });
    }
    Ok(SweepReport { kind, config, rows })
}

/// Enrollment result for one device.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub device_id: u32,
    pub id: PufId,
    pub bundle: HelperBundle,
}

/// Enrolls every device from its reference COMBINED response.
pub fn enroll_population(
    cfg: &ExperimentConfig,
    devices: &[DeviceInstance],
) -> Result<Vec<Enrollment>, ExperimentError> {
    cfg.reference_readings(devices)?
        .iter()
        .map(|rs| {
            let (id, bundle) = enroll(&response_for_config(rs, ResponseConfig::Combined))?;
            Ok(Enrollment {
                device_id: rs.device_id,
                id,
                bundle,
            })
        })
        .collect()
}

/// Outcome of regenerating one device at one operating point.
#[derive(Debug, Clone)]
pub struct RegenerationCheck {
    pub device_id: u32,
    pub env: Environment,
    pub repeat: u32,
    /// Hamming distance between probe and enrolled response.
    pub flips: usize,
    pub result: Result<PufId, String>,
}

/// Regenerates every enrolled device from each probe at each sweep point
/// (both sweeps).
pub fn regenerate_across_sweeps(
    cfg: &ExperimentConfig,
    devices: &[DeviceInstance],
    enrollments: &[Enrollment],
) -> Result<Vec<RegenerationCheck>, ExperimentError> {
    let mut points = cfg.sweep_points(SweepKind::Temperature);
    points.extend(cfg.sweep_points(SweepKind::Voltage));
    let per_device: Vec<Vec<RegenerationCheck>> = devices
        .par_iter()
        .zip(enrollments)
        .map(|(d, e)| {
            let mut out = Vec::new();
            for env in &points {
                let probes = probe_responses(cfg, d, env, ResponseConfig::Combined)?;
                for (repeat, fresh) in probes.iter().enumerate() {
                    let flips = (fresh ^ e.id.bits()).count_ones();
                    out.push(RegenerationCheck {
                        device_id: d.device_id,
                        env: *env,
                        repeat: repeat as u32,
                        flips,
                        result: regenerate(fresh, &e.bundle)
                            .map(|r| r.id)
                            .map_err(|err| err.to_string()),
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_, ExperimentError>>()?;
    Ok(per_device.into_iter().flatten().collect())
}

/// Flips `count` distinct positions of `bits`, chosen from the injection
/// stream of `(seed, device_id)`.
pub fn inject_errors(bits: &Bits, count: usize, master_seed: u64, device_id: u32) -> Result<Bits, ExperimentError> {
    if count > bits.len() {
        return Err(ExperimentError::Invalid(format!(
            "cannot inject {count} errors into {} bits",
            bits.len()
        )));
    }
    let mut rng = seed::rng(seed::split(master_seed, stream::INJECT, &[device_id as u64]));
    let mut out = bits.clone();
    for p in index::sample(&mut rng, bits.len(), count) {
        out.flip(p);
    }
    Ok(out)
}

/// Response length regenerated by the extractor.
pub const ID_BITS: usize = COMBINED_BITS;

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            devices: 4,
            reference_samples: 200,
            probe_repeats: 2,
            reliability_repeats: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_config_validates_and_round_trips() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str("devices = 5\n[model]\nseed = 7\n").unwrap();
        assert_eq!(cfg.devices, 5);
        assert_eq!(cfg.model.seed, 7);
        assert_eq!(cfg.model.r_pu_nominal, PopulationModel::default().r_pu_nominal);
        assert_eq!(cfg.voltages.len(), 6);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for toml in [
            "devices = 0",
            "temperatures_c = []",
            "temperatures_c = [40.0, 50.0]",
            "voltages = [3.5, 4.0]",
            "probe_samples = 0",
            "unknown_key = 1",
        ] {
            assert!(ExperimentConfig::from_toml_str(toml).is_err(), "{toml}");
        }
    }

    #[test]
    fn acquisition_is_order_independent() {
        let cfg = small();
        let devices = cfg.population().unwrap();
        let all = cfg.reference_readings(&devices).unwrap();
        let last = cfg.reference_readings(&devices[3..]).unwrap();
        assert_eq!(all[3], last[0]);
    }

    #[test]
    fn reference_point_has_zero_ber_without_noise() {
        let mut cfg = small();
        cfg.model.noise_sigma_v = 0.0;
        let devices = cfg.population().unwrap();
        let report = run_sweep(&cfg, &devices, SweepKind::Temperature, ResponseConfig::Combined).unwrap();
        let first = &report.rows[0];
        assert_eq!(first.env.temperature_c, 29.0);
        assert_eq!((first.ber.min, first.ber.mean, first.ber.max), (0.0, 0.0, 0.0));
        assert!(report.to_csv().starts_with("point,min,mean,max\n29,0.0000,0.0000,0.0000\n"));
    }

    #[test]
    fn zero_variance_population_reports() {
        let mut cfg = small();
        cfg.model = PopulationModel::zero_variance();
        let devices = cfg.population().unwrap();
        let groups = group_by_device(&cfg.reference_readings(&devices).unwrap());
        for report in all_reports(&groups).unwrap() {
            assert_eq!(report.mean_reliability_pct, 100.0);
            assert_eq!(report.uniqueness_pct, Some(0.0));
            for d in &report.devices {
                assert_eq!(d.uniformity_pct, report.devices[0].uniformity_pct);
            }
        }
    }

    #[test]
    fn injection_flips_exactly_count_bits() {
        let bits = Bits::zeros(190);
        for n in [0, 1, 5, 12, 190] {
            let e = inject_errors(&bits, n, 3, 1).unwrap();
            assert_eq!(e.count_ones(), n);
            assert_eq!(e, inject_errors(&bits, n, 3, 1).unwrap());
        }
        assert!(inject_errors(&bits, 191, 3, 1).is_err());
    }

    #[test]
    fn small_population_regenerates_at_all_points() {
        let cfg = small();
        let devices = cfg.population().unwrap();
        let enrolled = enroll_population(&cfg, &devices).unwrap();
        let checks = regenerate_across_sweeps(&cfg, &devices, &enrolled).unwrap();
        assert_eq!(checks.len(), 4 * 12 * 2);
        for c in &checks {
            let e = &enrolled[c.device_id as usize];
            assert_eq!(c.result.as_ref().ok(), Some(&e.id), "{c:?}");
        }
    }

    #[test]
    fn sweep_kind_parses() {
        assert_eq!("temp".parse::<SweepKind>().unwrap(), SweepKind::Temperature);
        assert_eq!("voltage".parse::<SweepKind>().unwrap(), SweepKind::Voltage);
        assert!("pressure".parse::<SweepKind>().is_err());
    }
}
