// SPDX-License-Identifier: Apache-2.0

//! Resistor-divider readout through a quantizing ADC, and the reading CSV
//! format shared by the simulator and captured hardware logs.
//!
//! Slot order in a [`ReadingSet`] is fixed: slots 1..=10 hold the pull-up
//! measurements of pins 1..=10 (internal pull-up against the external
//! pull-down reference), slots 11..=20 the pull-down measurements of the same
//! pins (internal pull-down against the external pull-up reference).
//!
//! CSV schema, one reading set per row:
//!
//! ```text
//! device_id,temperature_c,vdd,v1,...,v20[,samples]
//! ```
//!
//! The `vdd` column may be omitted (legacy captures; 5.0 V is assumed) and the
//! trailing `samples` column is optional (1 is assumed). The header decides
//! which columns every row must carry.

use std::io::{Read, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device_model::{
    resistance_at, DeviceError, DeviceInstance, Environment, PinKind, PopulationModel, PIN_COUNT,
};
use crate::seed;

/// Voltages per reading set.
pub const SLOT_COUNT: usize = 2 * PIN_COUNT;

const DEFAULT_VDD: f64 = 5.0;

#[derive(Debug, Error)]
pub enum MeasurementError {
    #[error("non-positive resistance in divider (internal {r_internal}, external {r_external})")]
    NonPositiveResistance { r_internal: f64, r_external: f64 },
    #[error("supply voltage must be > 0, got {0}")]
    NonPositiveVdd(f64),
    #[error("invalid ADC configuration: {0}")]
    InvalidAdc(String),
    #[error("sample count must be at least 1")]
    ZeroSamples,
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn parse_err(line: u64, message: impl Into<String>) -> MeasurementError {
    MeasurementError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdcConfig {
    /// Volts.
    pub full_scale: f64,
    pub bits: u32,
}

impl Default for AdcConfig {
    fn default() -> Self {
        AdcConfig {
            full_scale: 5.0,
            bits: 16,
        }
    }
}

impl AdcConfig {
    pub fn validate(&self) -> Result<(), MeasurementError> {
        if !(8..=24).contains(&self.bits) {
            return Err(MeasurementError::InvalidAdc(format!(
                "bits must be in 8..=24, got {}",
                self.bits
            )));
        }
        if !(self.full_scale.is_finite() && self.full_scale > 0.0) {
            return Err(MeasurementError::InvalidAdc(format!(
                "full_scale must be > 0, got {}",
                self.full_scale
            )));
        }
        Ok(())
    }

    /// Volts per code.
    pub fn lsb(&self) -> f64 {
        self.full_scale / (1u64 << self.bits) as f64
    }

    pub fn max_code(&self) -> u32 {
        ((1u64 << self.bits) - 1) as u32
    }

    /// Nearest code, clamped to the converter range.
    pub fn quantize(&self, v: f64) -> u32 {
        let code = (v / self.lsb()).round();
        if code.is_nan() || code <= 0.0 {
            0
        } else if code >= self.max_code() as f64 {
            self.max_code()
        } else {
            code as u32
        }
    }

    pub fn code_to_volts(&self, code: u32) -> f64 {
        code as f64 * self.lsb()
    }
}

/// ADC plus the two external reference resistors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasurementSetup {
    pub adc: AdcConfig,
    /// External pull-down reference used for pull-up measurements, ohm.
    pub r_pd_ext: f64,
    /// External pull-up reference used for pull-down measurements, ohm.
    pub r_pu_ext: f64,
}

impl Default for MeasurementSetup {
    fn default() -> Self {
        MeasurementSetup {
            adc: AdcConfig::default(),
            r_pd_ext: 5600.0,
            r_pu_ext: 5600.0,
        }
    }
}

impl MeasurementSetup {
    pub fn validate(&self) -> Result<(), MeasurementError> {
        self.adc.validate()?;
        if !(self.r_pd_ext > 0.0 && self.r_pu_ext > 0.0) {
            return Err(MeasurementError::NonPositiveResistance {
                r_internal: f64::NAN,
                r_external: self.r_pd_ext.min(self.r_pu_ext),
            });
        }
        Ok(())
    }
}

/// Twenty averaged voltages of one device at one operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingSet {
    pub device_id: u32,
    pub env: Environment,
    pub v: [f64; SLOT_COUNT],
    pub sample_count: u32,
}

impl ReadingSet {
    pub fn pull_up(&self) -> &[f64] {
        &self.v[..PIN_COUNT]
    }

    pub fn pull_down(&self) -> &[f64] {
        &self.v[PIN_COUNT..]
    }
}

/// Output voltage of the divider formed by an internal resistor and an
/// external reference.
///
/// For a pull-up measurement the ADC sits across the external pull-down, so
/// the reading falls as the internal resistance rises; for a pull-down
/// measurement it sits across the internal resistor.
pub fn divider_voltage(
    r_internal: f64,
    r_external: f64,
    vdd: f64,
    kind: PinKind,
) -> Result<f64, MeasurementError> {
    if !(r_internal > 0.0 && r_external > 0.0) {
        return Err(MeasurementError::NonPositiveResistance {
            r_internal,
            r_external,
        });
    }
    if !(vdd > 0.0) {
        return Err(MeasurementError::NonPositiveVdd(vdd));
    }
    let total = r_internal + r_external;
    Ok(match kind {
        PinKind::PullUp => vdd * r_external / total,
        PinKind::PullDown => vdd * r_internal / total,
    })
}

/// Noiseless divider voltages for all twenty slots.
pub fn ideal_voltages(
    device: &DeviceInstance,
    env: &Environment,
    model: &PopulationModel,
    setup: &MeasurementSetup,
) -> Result<[f64; SLOT_COUNT], MeasurementError> {
    let mut out = [0.0; SLOT_COUNT];
    for (slot, v) in out.iter_mut().enumerate() {
        let (kind, pin, r_ext) = if slot < PIN_COUNT {
            (PinKind::PullUp, slot + 1, setup.r_pd_ext)
        } else {
            (PinKind::PullDown, slot - PIN_COUNT + 1, setup.r_pu_ext)
        };
        let r = resistance_at(device, pin, kind, env, model)?;
        *v = divider_voltage(r, r_ext, env.vdd, kind)?;
    }
    Ok(out)
}

/// Acquires one reading set: per slot, `samples` noisy conversions are
/// quantized, the codes averaged, and the mean converted back to volts.
pub fn acquire(
    device: &DeviceInstance,
    env: &Environment,
    model: &PopulationModel,
    setup: &MeasurementSetup,
    samples: u32,
    rng_seed: u64,
) -> Result<ReadingSet, MeasurementError> {
    if samples == 0 {
        return Err(MeasurementError::ZeroSamples);
    }
    setup.validate()?;
    let ideal = ideal_voltages(device, env, model, setup)?;
    let adc = &setup.adc;
    let sigma = model.noise_sigma_v;

    let mut v = [0.0; SLOT_COUNT];
    if sigma == 0.0 {
        for (out, &x) in v.iter_mut().zip(&ideal) {
            *out = adc.code_to_volts(adc.quantize(x));
        }
    } else {
        let mut rng = seed::rng(rng_seed);
        for (out, &x) in v.iter_mut().zip(&ideal) {
            let mut sum: u64 = 0;
            for _ in 0..samples {
                let n: f64 = StandardNormal.sample(&mut rng);
                sum += adc.quantize(x + sigma * n) as u64;
            }
            *out = sum as f64 / samples as f64 * adc.lsb();
        }
    }

    Ok(ReadingSet {
        device_id: device.device_id,
        env: *env,
        v,
        sample_count: samples,
    })
}

fn header() -> Vec<String> {
    let mut h = vec![
        "device_id".to_string(),
        "temperature_c".to_string(),
        "vdd".to_string(),
    ];
    h.extend((1..=SLOT_COUNT).map(|i| format!("v{i}")));
    h.push("samples".to_string());
    h
}

/// Writes reading sets in the full schema. Floats use the shortest
/// representation that parses back to the identical value.
pub fn write_reading_csv<W: Write>(out: W, sets: &[ReadingSet]) -> Result<(), MeasurementError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    for rs in sets {
        let mut row = vec![
            rs.device_id.to_string(),
            rs.env.temperature_c.to_string(),
            rs.env.vdd.to_string(),
        ];
        row.extend(rs.v.iter().map(f64::to_string));
        row.push(rs.sample_count.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

struct Layout {
    has_vdd: bool,
    has_samples: bool,
}

impl Layout {
    fn columns(&self) -> usize {
        2 + self.has_vdd as usize + SLOT_COUNT + self.has_samples as usize
    }
}

fn parse_header(rec: &csv::StringRecord) -> Result<Layout, MeasurementError> {
    let cols: Vec<&str> = rec.iter().map(str::trim).collect();
    let bad = || {
        parse_err(
            1,
            format!(
                "unrecognized header ({} columns); expected device_id,temperature_c[,vdd],v1..v20[,samples]",
                cols.len()
            ),
        )
    };
    if cols.len() < 2 || cols[0] != "device_id" || cols[1] != "temperature_c" {
        return Err(bad());
    }
    let has_vdd = cols.get(2) == Some(&"vdd");
    let first_v = 2 + has_vdd as usize;
    for i in 0..SLOT_COUNT {
        if cols.get(first_v + i).copied() != Some(format!("v{}", i + 1).as_str()) {
            return Err(bad());
        }
    }
    let rest = &cols[first_v + SLOT_COUNT..];
    let has_samples = match rest {
        [] => false,
        ["samples"] => true,
        _ => return Err(bad()),
    };
    Ok(Layout {
        has_vdd,
        has_samples,
    })
}

fn number<T: std::str::FromStr>(cell: &str, line: u64, what: &str) -> Result<T, MeasurementError> {
    cell.trim()
        .parse()
        .map_err(|_| parse_err(line, format!("{what}: not a number: {cell:?}")))
}

/// Parses reading sets with strict column-count and range validation.
pub fn parse_reading_csv<R: Read>(
    input: R,
    adc: &AdcConfig,
) -> Result<Vec<ReadingSet>, MeasurementError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    let layout = match records.next() {
        Some(rec) => parse_header(&rec?)?,
        None => return Err(parse_err(1, "empty input, header expected")),
    };

    let mut sets = Vec::new();
    for rec in records {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].trim().is_empty() {
            continue;
        }
        if rec.len() != layout.columns() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", layout.columns(), rec.len()),
            ));
        }
        let device_id: u32 = number(&rec[0], line, "device_id")?;
        let temperature_c: f64 = number(&rec[1], line, "temperature_c")?;
        let vdd = if layout.has_vdd {
            number(&rec[2], line, "vdd")?
        } else {
            DEFAULT_VDD
        };
        if !temperature_c.is_finite() {
            return Err(parse_err(line, "temperature_c must be finite"));
        }
        if !(vdd.is_finite() && vdd > 0.0) {
            return Err(parse_err(line, format!("vdd must be > 0, got {vdd}")));
        }
        let first_v = 2 + layout.has_vdd as usize;
        let mut v = [0.0; SLOT_COUNT];
        for (i, slot) in v.iter_mut().enumerate() {
            let x: f64 = number(&rec[first_v + i], line, &format!("v{}", i + 1))?;
            if !(0.0..=adc.full_scale).contains(&x) {
                return Err(parse_err(
                    line,
                    format!("v{} = {x} outside [0, {}]", i + 1, adc.full_scale),
                ));
            }
            *slot = x;
        }
        let sample_count = if layout.has_samples {
            let n: u32 = number(&rec[first_v + SLOT_COUNT], line, "samples")?;
            if n == 0 {
                return Err(parse_err(line, "samples must be at least 1"));
            }
            n
        } else {
            1
        };
        sets.push(ReadingSet {
            device_id,
            env: Environment::new(temperature_c, vdd),
            v,
            sample_count,
        });
    }
    Ok(sets)
}
