// SPDX-License-Identifier: Apache-2.0

//! Enrollment and regeneration of a stable PUF ID from noisy 190-bit responses.
//!
//! Enrollment zero-pads the response to the 215-bit BCH message and stores
//! only the 40 parity bits plus a 32-bit check value (the first four bytes of
//! SHA-256 over the packed ID). Regeneration decodes `pad(fresh) || parity`
//! and accepts the corrected ID only if its check value matches, so a
//! miscorrection past `t` errors surfaces as a failure instead of a wrong ID.
//!
//! Helper file (text, one `key=value` per line, in this order):
//!
//! ```text
//! version=1
//! bch=255,215,5
//! prim_poly=0x11D
//! config=COMBINED
//! parity=<10 hex chars>
//! check=<8 hex chars>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::bch_codec::{BchCode, BchError, BchParams, DecodeOutcome};
use crate::bits::{Bits, BitsError};
use crate::crypto_primitives::sha256;
use crate::response::{PufResponse, ResponseConfig, COMBINED_BITS};

pub const HELPER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ExtractorError {
    #[error("enrollment needs a {COMBINED_BITS}-bit COMBINED response, got {len} bits of {config}")]
    BadResponse { config: ResponseConfig, len: usize },
    #[error("fresh response has {0} bits, expected {COMBINED_BITS}")]
    BadFreshLength(usize),
    #[error("regeneration failed: {0}")]
    RegenerationFailed(&'static str),
    #[error("helper data: {0}")]
    HelperFormat(String),
    #[error(transparent)]
    Bch(#[from] BchError),
    #[error("helper store {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl From<BitsError> for ExtractorError {
    fn from(e: BitsError) -> Self {
        ExtractorError::HelperFormat(e.to_string())
    }
}

/// The enrolled identifier: the 190-bit response recorded at enrollment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PufId(Bits);

impl PufId {
    pub fn from_bits(bits: Bits) -> Result<Self, ExtractorError> {
        if bits.len() != COMBINED_BITS {
            return Err(ExtractorError::BadFreshLength(bits.len()));
        }
        Ok(PufId(bits))
    }

    pub fn bits(&self) -> &Bits {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HelperBundle {
    pub format_version: u32,
    pub params: BchParams,
    pub config: ResponseConfig,
    pub helper_parity: Bits,
    pub check_value: u32,
}

fn check_value(id: &Bits) -> u32 {
    let d = sha256(&id.to_bytes());
    u32::from_be_bytes([d[0], d[1], d[2], d[3]])
}

fn pad(bits: &Bits, k: usize) -> Bits {
    bits.resized(k)
}

pub fn enroll(response: &PufResponse) -> Result<(PufId, HelperBundle), ExtractorError> {
    if response.config != ResponseConfig::Combined || response.len() != COMBINED_BITS {
        return Err(ExtractorError::BadResponse {
            config: response.config,
            len: response.len(),
        });
    }
    let code = BchCode::standard();
    let params = *code.params();
    let helper_parity = code.encode(&pad(&response.bits, params.k))?;
    let bundle = HelperBundle {
        format_version: HELPER_FORMAT_VERSION,
        params,
        config: response.config,
        helper_parity,
        check_value: check_value(&response.bits),
    };
    Ok((PufId(response.bits.clone()), bundle))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Regenerated {
    pub id: PufId,
    /// Bit flips the decoder applied, including any in the pad or parity.
    pub corrections: usize,
}

pub fn regenerate(fresh: &Bits, bundle: &HelperBundle) -> Result<Regenerated, ExtractorError> {
    if fresh.len() != COMBINED_BITS {
        return Err(ExtractorError::BadFreshLength(fresh.len()));
    }
    if bundle.helper_parity.len() != bundle.params.n - bundle.params.k {
        return Err(ExtractorError::HelperFormat(format!(
            "parity has {} bits, expected {}",
            bundle.helper_parity.len(),
            bundle.params.n - bundle.params.k
        )));
    }
    let custom;
    let code = if bundle.params == BchParams::STANDARD {
        BchCode::standard()
    } else {
        custom = BchCode::new(bundle.params)?;
        &custom
    };
    let mut word = pad(fresh, bundle.params.k);
    word.extend_from(&bundle.helper_parity);
    match code.decode(&word)? {
        DecodeOutcome::Failure => Err(ExtractorError::RegenerationFailed("BCH decoding failed")),
        DecodeOutcome::Decoded { message, corrected } => {
            let id = message.slice(0, COMBINED_BITS);
            if check_value(&id) != bundle.check_value {
                return Err(ExtractorError::RegenerationFailed("check value mismatch"));
            }
            Ok(Regenerated {
                id: PufId(id),
                corrections: corrected.len(),
            })
        }
    }
}

impl HelperBundle {
    pub fn to_text(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        writeln!(s, "version={}", self.format_version).unwrap();
        writeln!(s, "bch={},{},{}", p.n, p.k, p.t).unwrap();
        writeln!(s, "prim_poly=0x{:X}", p.primitive_poly).unwrap();
        writeln!(s, "config={}", self.config).unwrap();
        writeln!(s, "parity={}", self.helper_parity.to_hex()).unwrap();
        writeln!(s, "check={:08x}", self.check_value).unwrap();
        s
    }

    pub fn from_text(text: &str) -> Result<Self, ExtractorError> {
        let bad = |m: String| ExtractorError::HelperFormat(m);
        let mut fields = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("line {}: expected key=value", n + 1)))?;
            fields.push((key.trim(), value.trim()));
        }
        let keys: Vec<&str> = fields.iter().map(|(k, _)| *k).collect();
        const EXPECTED: [&str; 6] = ["version", "bch", "prim_poly", "config", "parity", "check"];
        if keys != EXPECTED {
            return Err(bad(format!("expected keys {EXPECTED:?} in order, found {keys:?}")));
        }
        let v = |i: usize| fields[i].1;

        let format_version: u32 = v(0)
            .parse()
            .map_err(|_| bad(format!("bad version {:?}", v(0))))?;
        if format_version != HELPER_FORMAT_VERSION {
            return Err(bad(format!("unsupported version {format_version}")));
        }
        let nkt: Vec<usize> = v(1)
            .split(',')
            .map(|x| x.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("bad bch field {:?}", v(1))))?;
        let [n, k, t] = nkt[..] else {
            return Err(bad(format!("bch needs n,k,t, got {:?}", v(1))));
        };
        let poly_hex = v(2)
            .strip_prefix("0x")
            .or_else(|| v(2).strip_prefix("0X"))
            .ok_or_else(|| bad(format!("bad prim_poly {:?}", v(2))))?;
        let primitive_poly = u16::from_str_radix(poly_hex, 16)
            .map_err(|_| bad(format!("bad prim_poly {:?}", v(2))))?;
        let params = BchParams {
            n,
            k,
            t,
            m: 8,
            primitive_poly,
        };
        if params != BchParams::STANDARD {
            return Err(bad(format!("unsupported code parameters {params:?}")));
        }
        let config: ResponseConfig = v(3).parse().map_err(|e| bad(format!("{e}")))?;
        let helper_parity = Bits::from_hex(v(4), n - k)?;
        if v(5).len() != 8 {
            return Err(bad(format!("check must be 8 hex chars, got {:?}", v(5))));
        }
        let check_value =
            u32::from_str_radix(v(5), 16).map_err(|_| bad(format!("bad check {:?}", v(5))))?;
        Ok(HelperBundle {
            format_version,
            params,
            config,
            helper_parity,
            check_value,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ExtractorError> {
        std::fs::write(path, self.to_text()).map_err(|source| ExtractorError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ExtractorError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExtractorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}

/// Non-volatile storage for helper data, keyed by device id.
pub trait HelperStore {
    fn store(&mut self, device_id: u32, bundle: &HelperBundle) -> Result<(), ExtractorError>;
    fn fetch(&self, device_id: u32) -> Result<Option<HelperBundle>, ExtractorError>;
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    entries: BTreeMap<u32, String>,
}

impl HelperStore for MemoryStore {
    fn store(&mut self, device_id: u32, bundle: &HelperBundle) -> Result<(), ExtractorError> {
        self.entries.insert(device_id, bundle.to_text());
        Ok(())
    }

    fn fetch(&self, device_id: u32) -> Result<Option<HelperBundle>, ExtractorError> {
        self.entries
            .get(&device_id)
            .map(|t| HelperBundle::from_text(t))
            .transpose()
    }
}

/// One `device_<id>.helper` file per device under a directory.
#[derive(Debug, Clone)]
pub struct DirStore {
    root: PathBuf,
}

impl DirStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DirStore { root: root.into() }
    }

    pub fn path_for(&self, device_id: u32) -> PathBuf {
        self.root.join(format!("device_{device_id:03}.helper"))
    }
}

impl HelperStore for DirStore {
    fn store(&mut self, device_id: u32, bundle: &HelperBundle) -> Result<(), ExtractorError> {
        std::fs::create_dir_all(&self.root).map_err(|source| ExtractorError::Io {
            path: self.root.display().to_string(),
            source,
        })?;
        bundle.save(&self.path_for(device_id))
    }

    fn fetch(&self, device_id: u32) -> Result<Option<HelperBundle>, ExtractorError> {
        let path = self.path_for(device_id);
        if !path.exists() {
            return Ok(None);
        }
        HelperBundle::load(&path).map(Some)
    }
}
