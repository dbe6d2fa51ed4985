// SPDX-License-Identifier: Apache-2.0

//! Pairwise-comparison responses.
//!
//! For voltages `V1..VN` the response has one bit per pair `i < j`, emitted in
//! row-major order (`i` outer, `j` inner). A bit is 1 when `Vi < Vj` and 0
//! otherwise, so exact ties read as 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bits::{Bits, BitsError};
use crate::measurement::ReadingSet;

/// Bits in a combined (20-voltage) response.
pub const COMBINED_BITS: usize = 190;
/// Bits in a single-kind (10-voltage) response.
pub const SINGLE_KIND_BITS: usize = 45;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ResponseError {
    #[error("need at least 2 voltages, got {0}")]
    TooFewVoltages(usize),
    #[error("invalid pair ({i}, {j}) for N = {n}; need 1 <= i < j <= N")]
    InvalidPair { i: usize, j: usize, n: usize },
    #[error("unknown response configuration {0:?}")]
    UnknownConfig(String),
    #[error("response length {got} does not match {config} ({expected} bits)")]
    Length {
        config: ResponseConfig,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Bits(#[from] BitsError),
}

/// Which voltages feed the comparison, and whether the result is hashed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ResponseConfig {
    PuOnly,
    PdOnly,
    Combined,
    CombinedHashed,
}

impl ResponseConfig {
    pub const ALL: [ResponseConfig; 4] = [
        ResponseConfig::PuOnly,
        ResponseConfig::PdOnly,
        ResponseConfig::Combined,
        ResponseConfig::CombinedHashed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResponseConfig::PuOnly => "PU_ONLY",
            ResponseConfig::PdOnly => "PD_ONLY",
            ResponseConfig::Combined => "COMBINED",
            ResponseConfig::CombinedHashed => "COMBINED_HASHED",
        }
    }

    pub fn response_len(self) -> usize {
        match self {
            ResponseConfig::PuOnly | ResponseConfig::PdOnly => SINGLE_KIND_BITS,
            ResponseConfig::Combined | ResponseConfig::CombinedHashed => COMBINED_BITS,
        }
    }
}

impl fmt::Display for ResponseConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResponseConfig {
    type Err = ResponseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ResponseConfig::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| ResponseError::UnknownConfig(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PufResponse {
    pub bits: Bits,
    pub config: ResponseConfig,
}

impl PufResponse {
    pub fn new(bits: Bits, config: ResponseConfig) -> Result<Self, ResponseError> {
        if bits.len() != config.response_len() {
            return Err(ResponseError::Length {
                config,
                expected: config.response_len(),
                got: bits.len(),
            });
        }
        Ok(PufResponse { bits, config })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// `<config>:<bit length>:<lowercase hex>`
    pub fn to_wire(&self) -> String {
        format!("{}:{}:{}", self.config, self.bits.len(), self.bits.to_hex())
    }

    pub fn from_wire(s: &str) -> Result<Self, ResponseError> {
        let mut parts = s.trim().splitn(3, ':');
        let (Some(cfg), Some(len), Some(hex)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(ResponseError::UnknownConfig(s.to_string()));
        };
        let config: ResponseConfig = cfg.parse()?;
        let len: usize = len
            .parse()
            .map_err(|_| BitsError::Hex(format!("bad length field {len:?}")))?;
        PufResponse::new(Bits::from_hex(hex, len)?, config)
    }
}

/// Zero-based position of pair `(i, j)` (1-based, `i < j`) among `N` voltages.
pub fn bit_index(i: usize, j: usize, n: usize) -> Result<usize, ResponseError> {
    if !(1 <= i && i < j && j <= n) {
        return Err(ResponseError::InvalidPair { i, j, n });
    }
    Ok((i - 1) * n - i * (i - 1) / 2 + (j - i) - 1)
}

/// All-pairs comparison response of `voltages`.
pub fn generate_response(voltages: &[f64]) -> Result<Bits, ResponseError> {
    let n = voltages.len();
    if n < 2 {
        return Err(ResponseError::TooFewVoltages(n));
    }
    let mut bits = Bits::with_capacity(n * (n - 1) / 2);
    for (i, vi) in voltages.iter().enumerate() {
        for vj in &voltages[i + 1..] {
            bits.push(vi < vj);
        }
    }
    Ok(bits)
}

/// SHA-256 of the MSB-first packing of `bits`, truncated to `len` bits.
pub fn hash_truncate(bits: &Bits, len: usize) -> Bits {
    let digest = Sha256::digest(bits.to_bytes());
    Bits::from_bytes(&digest, len)
}

pub fn response_for_config(rs: &ReadingSet, config: ResponseConfig) -> PufResponse {
    // A reading set always carries 20 voltages, so generation cannot fail.
    let gen = |v: &[f64]| generate_response(v).expect("reading set has 20 slots");
    let bits = match config {
        ResponseConfig::PuOnly => gen(rs.pull_up()),
        ResponseConfig::PdOnly => gen(rs.pull_down()),
        ResponseConfig::Combined => gen(&rs.v),
        ResponseConfig::CombinedHashed => hash_truncate(&gen(&rs.v), COMBINED_BITS),
    };
    PufResponse { bits, config }
}
