// SPDX-License-Identifier: Apache-2.0

//! Standard PUF quality metrics over populations of responses.
//!
//! * reliability: `100 - (1/N) * sum_{i=1..N} 100 * d(P1, Pi) / L`, with the
//!   `i = 1` self-term (always zero) kept in the mean;
//! * uniqueness: mean of `100 * d(Pi, Pj) / L` over all `K(K-1)/2` pairs;
//! * uniformity: percentage of ones in one response;
//! * bit-aliasing: percentage of devices with a one at a given position;
//! * stability: `100 * d(reference, probe) / L` per probe.
//!
//! Distance sums are accumulated as integers before the single final
//! division, so the parallel reductions are bit-reproducible.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;
use crate::response::ResponseConfig;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1} bits")]
    LengthMismatch(usize, usize),
    #[error("no responses supplied")]
    Empty,
    #[error("uniqueness needs at least 2 devices, got {0}")]
    TooFewDevices(usize),
    #[error("bit position {position} out of range for {len}-bit responses")]
    PositionOutOfRange { position: usize, len: usize },
    #[error("empty response")]
    EmptyResponse,
}

pub fn hamming(a: &Bits, b: &Bits) -> Result<usize, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b.iter()).filter(|(x, y)| x != y).count())
}

fn common_len(responses: &[Bits]) -> Result<usize, MetricsError> {
    let first = responses.first().ok_or(MetricsError::Empty)?;
    if let Some(r) = responses.iter().find(|r| r.len() != first.len()) {
        return Err(MetricsError::LengthMismatch(first.len(), r.len()));
    }
    if first.is_empty() {
        return Err(MetricsError::EmptyResponse);
    }
    Ok(first.len())
}

fn pct(numerator: usize, denominator: usize) -> f64 {
    (100 * numerator) as f64 / denominator as f64
}

/// Per-response intra-device distances to `responses[0]`, in percent.
pub fn intra_distances(responses: &[Bits]) -> Result<Vec<f64>, MetricsError> {
    let len = common_len(responses)?;
    responses
        .iter()
        .map(|r| hamming(&responses[0], r).map(|d| pct(d, len)))
        .collect()
}

/// Reliability of one device; `responses[0]` is the reference.
pub fn reliability(responses: &[Bits]) -> Result<f64, MetricsError> {
    let len = common_len(responses)?;
    let total: usize = responses
        .iter()
        .map(|r| hamming(&responses[0], r))
        .sum::<Result<usize, _>>()?;
    Ok(100.0 - (100 * total) as f64 / (responses.len() * len) as f64)
}

/// Pairwise inter-device distances in percent, `(i, j)` row-major.
pub fn inter_distances(responses: &[Bits]) -> Result<Vec<f64>, MetricsError> {
    let len = common_len(responses)?;
    let k = responses.len();
    if k < 2 {
        return Err(MetricsError::TooFewDevices(k));
    }
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i + 1..k).map(move |j| (i, j))).collect();
    Ok(pairs
        .par_iter()
        .map(|&(i, j)| pct(hamming(&responses[i], &responses[j]).expect("lengths checked"), len))
        .collect())
}

pub fn uniqueness(responses: &[Bits]) -> Result<f64, MetricsError> {
    let len = common_len(responses)?;
    let k = responses.len();
    if k < 2 {
        return Err(MetricsError::TooFewDevices(k));
    }
    let total: usize = (0..k)
        .into_par_iter()
        .map(|i| {
            responses[i + 1..]
                .iter()
                .map(|r| hamming(&responses[i], r).expect("lengths checked"))
                .sum::<usize>()
        })
        .sum();
    let pairs = k * (k - 1) / 2;
    Ok((100 * total) as f64 / (pairs * len) as f64)
}

pub fn uniformity(response: &Bits) -> Result<f64, MetricsError> {
    if response.is_empty() {
        return Err(MetricsError::EmptyResponse);
    }
    Ok(pct(response.count_ones(), response.len()))
}

/// Percentage of devices whose bit `position` (zero-based) is one.
pub fn bit_aliasing(responses: &[Bits], position: usize) -> Result<f64, MetricsError> {
    let len = common_len(responses)?;
    if position >= len {
        return Err(MetricsError::PositionOutOfRange { position, len });
    }
    let ones = responses.iter().filter(|r| r.get(position) == Some(true)).count();
    Ok(pct(ones, responses.len()))
}

pub fn bit_aliasing_profile(responses: &[Bits]) -> Result<Vec<f64>, MetricsError> {
    let len = common_len(responses)?;
    (0..len).map(|j| bit_aliasing(responses, j)).collect()
}

/// Bit error rate of each probe against the reference, in percent.
pub fn stability_ber(reference: &Bits, probes: &[Bits]) -> Result<Vec<f64>, MetricsError> {
    if reference.is_empty() {
        return Err(MetricsError::EmptyResponse);
    }
    probes
        .iter()
        .map(|p| hamming(reference, p).map(|d| pct(d, reference.len())))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerSummary {
    pub min: f64,
    pub mean: f64,
    pub max: f64,
}

impl BerSummary {
    pub fn from_values(values: &[f64]) -> Result<Self, MetricsError> {
        if values.is_empty() {
            return Err(MetricsError::Empty);
        }
        Ok(BerSummary {
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

/// One-percentage-point bins over [0, 100]; the last bin is closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn percent(values: &[f64]) -> Self {
        let mut counts = vec![0u64; 100];
        for &v in values {
            let bin = (v.clamp(0.0, 100.0).floor() as usize).min(99);
            counts[bin] += 1;
        }
        Histogram {
            edges: (0..=100).map(f64::from).collect(),
            counts,
        }
    }

    /// Re-bins into `width`-point bins (width must divide 100).
    pub fn coarsen(&self, width: usize) -> Vec<u64> {
        assert!(width > 0 && 100 % width == 0, "width must divide 100");
        self.counts.chunks(width).map(|c| c.iter().sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics {
    pub device_id: u32,
    pub responses: usize,
    pub reliability_pct: f64,
    pub uniformity_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histograms {
    pub intra_hd: Histogram,
    pub inter_hd: Histogram,
    pub uniformity: Histogram,
    pub bit_aliasing: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub config: ResponseConfig,
    pub response_bits: usize,
    pub devices: Vec<DeviceMetrics>,
    pub mean_reliability_pct: f64,
    /// `None` with fewer than two devices.
    pub uniqueness_pct: Option<f64>,
    pub inter_pairs: usize,
    pub mean_uniformity_pct: f64,
    pub bit_aliasing_pct: Vec<f64>,
    pub mean_bit_aliasing_pct: f64,
    pub histograms: Histograms,
}

/// Evaluates one configuration. Each device supplies its repeated responses;
/// the first is the reference for reliability and the sample for uniqueness,
/// uniformity and bit-aliasing.
pub fn evaluate(
    config: ResponseConfig,
    devices: &[(u32, Vec<Bits>)],
) -> Result<MetricReport, MetricsError> {
    if devices.is_empty() {
        return Err(MetricsError::Empty);
    }
    let references: Vec<Bits> = devices
        .iter()
        .map(|(_, rs)| rs.first().cloned().ok_or(MetricsError::Empty))
        .collect::<Result<_, _>>()?;
    let len = common_len(&references)?;

    let mut per_device = Vec::with_capacity(devices.len());
    let mut intra_all = Vec::new();
    for ((device_id, rs), reference) in devices.iter().zip(&references) {
        if let Some(bad) = rs.iter().find(|r| r.len() != len) {
            return Err(MetricsError::LengthMismatch(len, bad.len()));
        }
        intra_all.extend(intra_distances(rs)?.into_iter().skip(1));
        per_device.push(DeviceMetrics {
            device_id: *device_id,
            responses: rs.len(),
            reliability_pct: reliability(rs)?,
            uniformity_pct: uniformity(reference)?,
        });
    }

    let (uniqueness_pct, inter) = if references.len() >= 2 {
        (Some(uniqueness(&references)?), inter_distances(&references)?)
    } else {
        (None, Vec::new())
    };
    let aliasing = bit_aliasing_profile(&references)?;
    let uniformities: Vec<f64> = per_device.iter().map(|d| d.uniformity_pct).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let reliabilities: Vec<f64> = per_device.iter().map(|d| d.reliability_pct).collect();

    Ok(MetricReport {
        config,
        response_bits: len,
        mean_reliability_pct: mean(&reliabilities),
        uniqueness_pct,
        inter_pairs: inter.len(),
        mean_uniformity_pct: mean(&uniformities),
        mean_bit_aliasing_pct: mean(&aliasing),
        histograms: Histograms {
            intra_hd: Histogram::percent(&intra_all),
            inter_hd: Histogram::percent(&inter),
            uniformity: Histogram::percent(&uniformities),
            bit_aliasing: Histogram::percent(&aliasing),
        },
        bit_aliasing_pct: aliasing,
        devices: per_device,
    })
}

impl MetricReport {
    /// Per-device rows: `device_id,responses,reliability_pct,uniformity_pct`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("device_id,responses,reliability_pct,uniformity_pct\n");
        for d in &self.devices {
            out.push_str(&format!(
                "{},{},{},{}\n",
                d.device_id, d.responses, d.reliability_pct, d.uniformity_pct
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Fraction of bit positions whose aliasing is exactly 0% or 100%.
    pub fn extreme_aliasing_fraction(&self) -> f64 {
        let extreme = self
            .bit_aliasing_pct
            .iter()
            .filter(|&&b| b == 0.0 || b == 100.0)
            .count();
        extreme as f64 / self.bit_aliasing_pct.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(s: &str) -> Bits {
        Bits::parse_binary(s).unwrap()
    }

    #[test]
    fn hamming_basics() {
        assert_eq!(hamming(&b("0110"), &b("0110")).unwrap(), 0);
        assert_eq!(hamming(&b("0000"), &b("1111")).unwrap(), 4);
        assert_eq!(
            hamming(&b("01"), &b("011")),
            Err(MetricsError::LengthMismatch(2, 3))
        );
    }

    #[test]
    fn reliability_includes_self_term() {
        let r = reliability(&[b("0000000000"), b("1000000000")]).unwrap();
        assert!((r - 95.0).abs() < 1e-12, "{r}");
        assert_eq!(reliability(&[b("0101")]).unwrap(), 100.0);
        assert_eq!(reliability(&[b("0101"), b("0101"), b("0101")]).unwrap(), 100.0);
        assert_eq!(reliability(&[]), Err(MetricsError::Empty));
    }

    #[test]
    fn uniqueness_examples() {
        assert_eq!(uniqueness(&[b("00"), b("11")]).unwrap(), 100.0);
        let u = uniqueness(&[b("00"), b("01"), b("11")]).unwrap();
        assert!((u - 200.0 / 3.0).abs() < 1e-12, "{u}");
        assert_eq!(uniqueness(&[b("00")]), Err(MetricsError::TooFewDevices(1)));
    }

    #[test]
    fn uniformity_and_aliasing_examples() {
        assert_eq!(uniformity(&b("10110")).unwrap(), 60.0);
        let devices = [b("1"), b("0"), b("1"), b("0")];
        assert_eq!(bit_aliasing(&devices, 0).unwrap(), 50.0);
        assert_eq!(
            bit_aliasing(&devices, 1),
            Err(MetricsError::PositionOutOfRange { position: 1, len: 1 })
        );
        assert_eq!(uniformity(&Bits::new()), Err(MetricsError::EmptyResponse));
    }

    #[test]
    fn stability_at_reference_is_zero() {
        let r = b("1100101");
        assert_eq!(stability_ber(&r, &[r.clone()]).unwrap(), vec![0.0]);
        let s = BerSummary::from_values(&[0.0, 2.0, 1.0]).unwrap();
        assert_eq!((s.min, s.mean, s.max), (0.0, 1.0, 2.0));
    }

    #[test]
    fn histogram_binning() {
        let h = Histogram::percent(&[0.0, 0.5, 1.0, 99.9, 100.0, 50.0]);
        assert_eq!(h.edges.len(), 101);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.counts[1], 1);
        assert_eq!(h.counts[50], 1);
        assert_eq!(h.counts[99], 2);
        assert_eq!(h.total(), 6);
        assert_eq!(h.coarsen(10).len(), 10);
    }

    #[test]
    fn report_of_degenerate_population() {
        let devices: Vec<(u32, Vec<Bits>)> = (0..4)
            .map(|id| (id, vec![b("1010"), b("1010")]))
            .collect();
        let rep = evaluate(ResponseConfig::PuOnly, &devices).unwrap();
        assert_eq!(rep.uniqueness_pct, Some(0.0));
        assert_eq!(rep.inter_pairs, 6);
        assert_eq!(rep.mean_reliability_pct, 100.0);
        assert_eq!(rep.bit_aliasing_pct, vec![100.0, 0.0, 100.0, 0.0]);
        assert_eq!(rep.extreme_aliasing_fraction(), 1.0);
        assert!(rep.to_csv().starts_with("device_id,responses,"));
        let single = evaluate(ResponseConfig::PuOnly, &devices[..1]).unwrap();
        assert_eq!(single.uniqueness_pct, None);
    }

    fn population(k: usize, len: usize) -> impl Strategy<Value = Vec<Bits>> {
        proptest::collection::vec(proptest::collection::vec(any::<bool>(), len), k)
            .prop_map(|v| v.into_iter().map(Bits::from).collect())
    }

    proptest! {
        #[test]
        fn hamming_equals_xor_popcount(a in proptest::collection::vec(any::<bool>(), 0..300), seed in any::<u64>()) {
            let a = Bits::from(a);
            let b: Bits = a.iter().enumerate().map(|(i, x)| x ^ ((seed >> (i % 64)) & 1 == 1)).collect();
            prop_assert_eq!(hamming(&a, &b).unwrap(), (&a ^ &b).count_ones());
        }

        #[test]
        fn uniqueness_matches_aliasing_identity(pop in (2usize..8).prop_flat_map(|k| population(k, 24))) {
            let k = pop.len() as f64;
            let u = uniqueness(&pop).unwrap();
            let via_aliasing: f64 = bit_aliasing_profile(&pop).unwrap().iter()
                .map(|b| { let p = b / 100.0; 2.0 * p * (1.0 - p) * k / (k - 1.0) * 100.0 })
                .sum::<f64>() / 24.0;
            prop_assert!((u - via_aliasing).abs() < 1e-9, "{} vs {}", u, via_aliasing);
        }

        #[test]
        fn percentages_in_range(pop in (2usize..6).prop_flat_map(|k| population(k, 16))) {
            let u = uniqueness(&pop).unwrap();
            prop_assert!((0.0..=100.0).contains(&u));
            for r in &pop {
                prop_assert!((0.0..=100.0).contains(&uniformity(r).unwrap()));
            }
            prop_assert!((0.0..=100.0).contains(&reliability(&pop).unwrap()));
        }
    }
}
