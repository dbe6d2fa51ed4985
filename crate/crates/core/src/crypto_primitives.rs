// SPDX-License-Identifier: Apache-2.0

//! SHA-256 key derivation, single-block AES-128 and PKCS#7 padding.

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};
use thiserror::Error;
use zeroize::Zeroize;

use crate::fuzzy_extractor::PufId;

pub const BLOCK_LEN: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("unsupported key size {0} bits (expected 128, 192 or 256)")]
    UnsupportedKeyBits(u32),
    #[error("expected {expected} bytes, got {got}")]
    Size { expected: usize, got: usize },
    #[error("invalid PKCS#7 padding")]
    Padding,
    #[error("key material has been wiped")]
    Wiped,
}

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

/// Key material derived from a PUF ID. Zeroed on drop or on [`SecretKey::wipe`].
pub struct SecretKey {
    bytes: Vec<u8>,
    wiped: bool,
}

impl SecretKey {
    pub fn as_bytes(&self) -> Result<&[u8], CryptoError> {
        if self.wiped {
            Err(CryptoError::Wiped)
        } else {
            Ok(&self.bytes)
        }
    }

    pub fn bits(&self) -> u32 {
        self.bytes.len() as u32 * 8
    }

    /// First 16 bytes, the AES-128 key.
    pub fn aes128(&self) -> Result<[u8; 16], CryptoError> {
        let b = self.as_bytes()?;
        b[..16].try_into().map_err(|_| CryptoError::Size {
            expected: 16,
            got: b.len(),
        })
    }

    /// First four bytes of the key as hex; safe to print.
    pub fn fingerprint(&self) -> Result<String, CryptoError> {
        Ok(hex::encode(&self.as_bytes()?[..4]))
    }

    pub fn wipe(&mut self) {
        self.bytes.zeroize();
        self.wiped = true;
    }

    pub fn is_wiped(&self) -> bool {
        self.wiped
    }
}

impl Drop for SecretKey {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey")
            .field("bits", &self.bits())
            .field("wiped", &self.wiped)
            .finish_non_exhaustive()
    }
}

/// SHA-256 of the packed ID, truncated to `key_bits`.
pub fn derive_key(id: &PufId, key_bits: u32) -> Result<SecretKey, CryptoError> {
    let len = match key_bits {
        128 | 192 | 256 => key_bits as usize / 8,
        other => return Err(CryptoError::UnsupportedKeyBits(other)),
    };
    let mut digest = sha256(&id.bits().to_bytes());
    let bytes = digest[..len].to_vec();
    digest.zeroize();
    Ok(SecretKey {
        bytes,
        wiped: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Encrypt,
    Decrypt,
}

fn exact<const N: usize>(data: &[u8]) -> Result<&[u8; N], CryptoError> {
    data.try_into().map_err(|_| CryptoError::Size {
        expected: N,
        got: data.len(),
    })
}

/// Single-block AES-128.
pub fn aes128_ecb(key: &[u8], block: &[u8], direction: Direction) -> Result<[u8; 16], CryptoError> {
    let cipher = Aes128::new(GenericArray::from_slice(exact::<16>(key)?));
    let mut b = GenericArray::clone_from_slice(exact::<16>(block)?);
    match direction {
        Direction::Encrypt => cipher.encrypt_block(&mut b),
        Direction::Decrypt => cipher.decrypt_block(&mut b),
    }
    Ok(b.into())
}

/// Appends `p` bytes of value `p`, `1 <= p <= 16`.
pub fn pkcs7_pad(data: &[u8]) -> Vec<u8> {
    let p = BLOCK_LEN - data.len() % BLOCK_LEN;
    let mut out = Vec::with_capacity(data.len() + p);
    out.extend_from_slice(data);
    out.resize(data.len() + p, p as u8);
    out
}

pub fn pkcs7_unpad(padded: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if padded.is_empty() || !padded.len().is_multiple_of(BLOCK_LEN) {
        return Err(CryptoError::Padding);
    }
    let p = *padded.last().expect("nonempty") as usize;
    if p == 0 || p > BLOCK_LEN || padded[padded.len() - p..].iter().any(|&b| b as usize != p) {
        return Err(CryptoError::Padding);
    }
    Ok(padded[..padded.len() - p].to_vec())
}

/// Pads then encrypts block by block.
pub fn ecb_encrypt(key: &[u8; 16], plaintext: &[u8]) -> Vec<u8> {
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut data = pkcs7_pad(plaintext);
    for chunk in data.chunks_exact_mut(BLOCK_LEN) {
        cipher.encrypt_block(GenericArray::from_mut_slice(chunk));
    }
    data
}

/// Decrypts block by block then strips padding.
pub fn ecb_decrypt(key: &[u8; 16], ciphertext: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.is_empty() || !ciphertext.len().is_multiple_of(BLOCK_LEN) {
        return Err(CryptoError::Size {
            expected: ciphertext.len().div_ceil(BLOCK_LEN).max(1) * BLOCK_LEN,
            got: ciphertext.len(),
        });
    }
    let cipher = Aes128::new(GenericArray::from_slice(key));
    let mut data = ciphertext.to_vec();
    for chunk in data.chunks_exact_mut(BLOCK_LEN) {
        cipher.decrypt_block(GenericArray::from_mut_slice(chunk));
    }
    let out = pkcs7_unpad(&data);
    data.zeroize();
    out
}
