// SPDX-License-Identifier: Apache-2.0

//! Binary narrow-sense BCH(255, 215, 5) over GF(2^8).
//!
//! Conventions (part of the helper-data contract):
//!
//! * the field is GF(2)[x] / (x^8 + x^4 + x^3 + x^2 + 1), `0x11D`, with
//!   `alpha = x` primitive;
//! * the generator is the lcm of the minimal polynomials of
//!   `alpha^1 ..= alpha^(2t)`;
//! * a codeword is `message || parity` and bit `i` of the codeword is the
//!   coefficient of `x^(n - 1 - i)`, so message bit 0 is the highest-degree
//!   coefficient.
//!
//! Decoding computes the `2t` syndromes, runs Berlekamp-Massey for the
//! error-locator polynomial and finds its roots by Chien search. A locator
//! whose degree exceeds `t`, or whose root count differs from its degree, is
//! reported as [`DecodeOutcome::Failure`].

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

pub const PRIMITIVE_POLY: u16 = 0x11D;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BchError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("polynomial {0:#x} is not primitive of degree 8")]
    NotPrimitive(u16),
    #[error("unsupported BCH parameters: {0}")]
    Params(String),
    #[error("expected {expected} bits, got {got}")]
    Length { expected: usize, got: usize },
}

/// GF(2^8) with log/antilog tables.
#[derive(Debug, Clone)]
pub struct GaloisField {
    poly: u16,
    /// `exp[i] = alpha^i`, doubled so products of logs need no reduction.
    exp: [u8; 510],
    /// `log[a]` for `a != 0`.
    log: [u8; 256],
}

impl GaloisField {
    pub fn new(poly: u16) -> Result<Self, BchError> {
        if poly & 0x100 == 0 || poly > 0x1FF {
            return Err(BchError::NotPrimitive(poly));
        }
        let mut exp = [0u8; 510];
        let mut log = [0u8; 256];
        let mut seen = [false; 256];
        let mut x: u16 = 1;
        for i in 0..255 {
            if seen[x as usize] {
                return Err(BchError::NotPrimitive(poly));
            }
            seen[x as usize] = true;
            exp[i] = x as u8;
            log[x as usize] = i as u8;
            x <<= 1;
            if x & 0x100 != 0 {
                x ^= poly;
            }
        }
        if x != 1 {
            return Err(BchError::NotPrimitive(poly));
        }
        for i in 255..510 {
            exp[i] = exp[i - 255];
        }
        Ok(GaloisField { poly, exp, log })
    }

    /// The shared `0x11D` field.
    pub fn standard() -> &'static GaloisField {
        static FIELD: OnceLock<GaloisField> = OnceLock::new();
        FIELD.get_or_init(|| GaloisField::new(PRIMITIVE_POLY).expect("0x11D is primitive"))
    }

    pub fn poly(&self) -> u16 {
        self.poly
    }

    #[inline]
    pub fn add(&self, a: u8, b: u8) -> u8 {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: u8, b: u8) -> u8 {
        if a == 0 || b == 0 {
            0
        } else {
            self.exp[self.log[a as usize] as usize + self.log[b as usize] as usize]
        }
    }

    pub fn inv(&self, a: u8) -> Result<u8, BchError> {
        if a == 0 {
            return Err(BchError::ZeroInverse);
        }
        Ok(self.exp[255 - self.log[a as usize] as usize])
    }

    pub fn div(&self, a: u8, b: u8) -> Result<u8, BchError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    /// `alpha^e` for any integer exponent.
    #[inline]
    pub fn alpha_pow(&self, e: i64) -> u8 {
        self.exp[e.rem_euclid(255) as usize]
    }

    /// `a^e`; `0^0 = 1`.
    pub fn pow(&self, a: u8, e: i64) -> u8 {
        if e == 0 {
            return 1;
        }
        if a == 0 {
            return 0;
        }
        self.alpha_pow(self.log[a as usize] as i64 * e)
    }

    /// Discrete log base alpha; `None` for zero.
    pub fn log(&self, a: u8) -> Option<u8> {
        (a != 0).then(|| self.log[a as usize])
    }

    /// Evaluates a polynomial given lowest-degree-first coefficients.
    fn eval(&self, coeffs: &[u8], x: u8) -> u8 {
        coeffs.iter().rev().fold(0, |acc, &c| self.mul(acc, x) ^ c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BchParams {
    pub n: usize,
    pub k: usize,
    pub t: usize,
    pub m: u32,
    pub primitive_poly: u16,
}

impl BchParams {
    pub const STANDARD: BchParams = BchParams {
        n: 255,
        k: 215,
        t: 5,
        m: 8,
        primitive_poly: PRIMITIVE_POLY,
    };

    /// `n >= k + log2(n + 1) * t` and `k >= response_len`.
    pub fn satisfies_constraints(&self, response_len: usize) -> bool {
        let log_n1 = ((self.n + 1) as f64).log2();
        self.n as f64 >= self.k as f64 + log_n1 * self.t as f64 && self.k >= response_len
    }
}

impl Default for BchParams {
    fn default() -> Self {
        BchParams::STANDARD
    }
}

/// Binary polynomial multiply; bit `i` is the coefficient of `x^i`.
fn gf2_mul(a: u64, b: u64) -> u64 {
    let mut out = 0u64;
    for i in 0..64 {
        if b >> i & 1 == 1 {
            out ^= a << i;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecodeOutcome {
    Decoded {
        message: Bits,
        /// Codeword bit positions that were flipped, ascending.
        corrected: Vec<usize>,
    },
    Failure,
}

#[derive(Debug, Clone)]
pub struct BchCode {
    params: BchParams,
    field: &'static GaloisField,
    /// Generator polynomial, bit `i` = coefficient of `x^i`.
    generator: u64,
}

impl BchCode {
    pub fn new(params: BchParams) -> Result<Self, BchError> {
        if params.m != 8 || params.primitive_poly != PRIMITIVE_POLY || params.n != 255 {
            return Err(BchError::Params(format!(
                "only GF(2^8)/0x11D with n = 255 is supported, got m={} poly={:#x} n={}",
                params.m, params.primitive_poly, params.n
            )));
        }
        if params.t == 0 || params.k == 0 || params.k >= params.n {
            return Err(BchError::Params(format!(
                "need t >= 1 and 0 < k < n, got k={} t={}",
                params.k, params.t
            )));
        }
        let field = GaloisField::standard();
        let generator = Self::build_generator(field, params.n, params.t);
        let deg = 63 - generator.leading_zeros() as usize;
        if deg != params.n - params.k {
            return Err(BchError::Params(format!(
                "t = {} gives a degree-{deg} generator, so k must be {}, got {}",
                params.t,
                params.n - deg,
                params.k
            )));
        }
        Ok(BchCode {
            params,
            field,
            generator,
        })
    }

    pub fn standard() -> &'static BchCode {
        static CODE: OnceLock<BchCode> = OnceLock::new();
        CODE.get_or_init(|| BchCode::new(BchParams::STANDARD).expect("BCH(255,215,5) is valid"))
    }

    fn build_generator(field: &GaloisField, n: usize, t: usize) -> u64 {
        let mut covered = vec![false; n];
        let mut g: u64 = 1;
        for root in 1..=2 * t {
            if covered[root % n] {
                continue;
            }
            // Minimal polynomial over the cyclotomic coset of `root`.
            let mut poly: Vec<u8> = vec![1];
            let mut e = root % n;
            while !covered[e] {
                covered[e] = true;
                let a = field.alpha_pow(e as i64);
                let mut next = vec![0u8; poly.len() + 1];
                for (i, &c) in poly.iter().enumerate() {
                    next[i + 1] ^= c;
                    next[i] ^= field.mul(c, a);
                }
                poly = next;
                e = e * 2 % n;
            }
            let min_poly = poly.iter().enumerate().fold(0u64, |acc, (i, &c)| {
                debug_assert!(c <= 1, "minimal polynomial must be binary");
                acc | (c as u64) << i
            });
            g = gf2_mul(g, min_poly);
        }
        g
    }

    pub fn params(&self) -> &BchParams {
        &self.params
    }

    pub fn field(&self) -> &GaloisField {
        self.field
    }

    /// Generator polynomial as a bitmask (bit `i` = coefficient of `x^i`).
    pub fn generator(&self) -> u64 {
        self.generator
    }

    fn parity_len(&self) -> usize {
        self.params.n - self.params.k
    }

    /// Systematic parity: remainder of `m(x) * x^(n-k)` modulo `g(x)`.
    pub fn encode(&self, message: &Bits) -> Result<Bits, BchError> {
        if message.len() != self.params.k {
            return Err(BchError::Length {
                expected: self.params.k,
                got: message.len(),
            });
        }
        let r = self.parity_len();
        let top = 1u64 << (r - 1);
        let mask = (1u64 << r) - 1;
        let taps = self.generator & mask;
        let mut reg = 0u64;
        for bit in message.iter() {
            let feedback = bit ^ (reg & top != 0);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= taps;
            }
        }
        Ok((0..r).map(|i| reg >> (r - 1 - i) & 1 == 1).collect())
    }

    /// `message || parity`.
    pub fn codeword(&self, message: &Bits) -> Result<Bits, BchError> {
        let mut cw = message.clone();
        cw.extend_from(&self.encode(message)?);
        Ok(cw)
    }

    /// `S_j = r(alpha^j)` for `j = 1..=2t`.
    pub fn syndromes(&self, received: &Bits) -> Result<Vec<u8>, BchError> {
        let n = self.params.n;
        if received.len() != n {
            return Err(BchError::Length {
                expected: n,
                got: received.len(),
            });
        }
        let mut s = vec![0u8; 2 * self.params.t];
        for (idx, bit) in received.iter().enumerate() {
            if bit {
                let degree = (n - 1 - idx) as i64;
                for (j, sj) in s.iter_mut().enumerate() {
                    *sj ^= self.field.alpha_pow(degree * (j as i64 + 1));
                }
            }
        }
        Ok(s)
    }

    /// Berlekamp-Massey. Returns the locator (lowest degree first) and its
    /// LFSR length.
    fn error_locator(&self, s: &[u8]) -> (Vec<u8>, usize) {
        let f = self.field;
        let mut c = vec![0u8; s.len() + 1];
        let mut b = vec![0u8; s.len() + 1];
        c[0] = 1;
        b[0] = 1;
        let mut len = 0usize;
        let mut shift = 1usize;
        let mut last_d = 1u8;
        for step in 0..s.len() {
            let mut d = s[step];
            for i in 1..=len {
                d ^= f.mul(c[i], s[step - i]);
            }
            if d == 0 {
                shift += 1;
                continue;
            }
            let coef = f.div(d, last_d).expect("last discrepancy is nonzero");
            let prev = c.clone();
            for i in 0..b.len() - shift {
                c[i + shift] ^= f.mul(coef, b[i]);
            }
            if 2 * len <= step {
                len = step + 1 - len;
                b = prev;
                last_d = d;
                shift = 1;
            } else {
                shift += 1;
            }
        }
        (c, len)
    }

    /// Corrects up to `t` bit errors in a received `n`-bit word.
    pub fn decode(&self, received: &Bits) -> Result<DecodeOutcome, BchError> {
        let n = self.params.n;
        let s = self.syndromes(received)?;
        let message = |word: &Bits| word.slice(0, self.params.k);
        if s.iter().all(|&x| x == 0) {
            return Ok(DecodeOutcome::Decoded {
                message: message(received),
                corrected: Vec::new(),
            });
        }

        let (locator, len) = self.error_locator(&s);
        let degree = locator.iter().rposition(|&c| c != 0).unwrap_or(0);
        if len > self.params.t || degree != len {
            return Ok(DecodeOutcome::Failure);
        }

        // Chien search: an error at degree p makes alpha^-p a root.
        let mut corrected: Vec<usize> = (0..n)
            .filter(|&p| self.field.eval(&locator[..=degree], self.field.alpha_pow(-(p as i64))) == 0)
            .map(|p| n - 1 - p)
            .collect();
        if corrected.len() != degree {
            return Ok(DecodeOutcome::Failure);
        }
        corrected.sort_unstable();

        let mut word = received.clone();
        for &idx in &corrected {
            word.flip(idx);
        }
        if self.syndromes(&word)?.iter().any(|&x| x != 0) {
            return Ok(DecodeOutcome::Failure);
        }
        Ok(DecodeOutcome::Decoded {
            message: message(&word),
            corrected,
        })
    }
}
