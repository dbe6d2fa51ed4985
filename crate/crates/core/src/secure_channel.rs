// SPDX-License-Identifier: Apache-2.0

//! Encrypted transfer of a payload over a reliable, ordered byte stream.
//!
//! A frame is a 4-byte big-endian ciphertext length followed by the
//! ciphertext: the payload PKCS#7-padded and encrypted block by block with
//! AES-128 in ECB mode. The length is always a positive multiple of 16.
//!
//! Any `Read`/`Write` pair satisfies the transport contract; [`loopback`]
//! gives an in-process pipe and `std::net::TcpStream` works unchanged.

use std::collections::VecDeque;
use std::io::{self, Read, Write};
use std::sync::{Arc, Condvar, Mutex};

use thiserror::Error;
use zeroize::Zeroize;

use crate::bits::Bits;
use crate::crypto_primitives::{derive_key, ecb_decrypt, ecb_encrypt, CryptoError, BLOCK_LEN};
use crate::fuzzy_extractor::{regenerate, ExtractorError, HelperBundle};

pub const HEADER_LEN: usize = 4;
/// Largest ciphertext a receiver will accept.
pub const MAX_FRAME_LEN: usize = 16 << 20;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("transport: {0}")]
    Io(#[from] io::Error),
    #[error("stream ended before the frame was complete")]
    Truncated,
    #[error("frame length {0} is not a positive multiple of 16")]
    BadLength(u32),
    #[error("frame length {0} exceeds the {MAX_FRAME_LEN}-byte limit")]
    TooLarge(u32),
    #[error("padding error after decryption (wrong key or corrupted frame)")]
    Padding,
    #[error("channel key has been wiped")]
    KeyWiped,
    #[error("malformed key: {0}")]
    KeyFormat(String),
    #[error("no key provisioned")]
    NoKey,
    #[error("provisioning refused: {0}")]
    Provisioning(#[from] ExtractorError),
    #[error(transparent)]
    Crypto(CryptoError),
    #[error("waveform: {0}")]
    Waveform(String),
}

impl From<CryptoError> for ChannelError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::Padding => ChannelError::Padding,
            CryptoError::Wiped => ChannelError::KeyWiped,
            other => ChannelError::Crypto(other),
        }
    }
}

/// A 128-bit channel key. Zeroed on drop or on [`ChannelKey::wipe`].
#[derive(Clone)]
pub struct ChannelKey {
    bytes: [u8; 16],
    wiped: bool,
}

impl ChannelKey {
    pub fn new(bytes: [u8; 16]) -> Self {
        ChannelKey {
            bytes,
            wiped: false,
        }
    }

    pub fn bytes(&self) -> Result<&[u8; 16], ChannelError> {
        if self.wiped {
            Err(ChannelError::KeyWiped)
        } else {
            Ok(&self.bytes)
        }
    }

    pub fn wipe(&mut self) {
        self.bytes.zeroize();
        self.wiped = true;
    }

    pub fn is_wiped(&self) -> bool {
        self.wiped
    }

    /// 32 lowercase hex chars.
    pub fn to_hex(&self) -> Result<String, ChannelError> {
        Ok(hex::encode(self.bytes()?))
    }

    pub fn from_hex(s: &str) -> Result<Self, ChannelError> {
        let mut raw = hex::decode(s.trim()).map_err(|e| ChannelError::KeyFormat(e.to_string()))?;
        let bytes: [u8; 16] = raw
            .as_slice()
            .try_into()
            .map_err(|_| ChannelError::KeyFormat(format!("expected 16 bytes, got {}", raw.len())))?;
        raw.zeroize();
        Ok(ChannelKey::new(bytes))
    }
}

impl PartialEq for ChannelKey {
    fn eq(&self, other: &Self) -> bool {
        self.wiped == other.wiped && self.bytes == other.bytes
    }
}

impl Eq for ChannelKey {}

impl Drop for ChannelKey {
    fn drop(&mut self) {
        self.bytes.zeroize();
    }
}

impl std::fmt::Debug for ChannelKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ChannelKey")
            .field("wiped", &self.wiped)
            .finish_non_exhaustive()
    }
}

/// Encrypts `payload` and writes one frame. Returns the bytes written.
pub fn send_encrypted<W: Write>(
    payload: &[u8],
    key: &ChannelKey,
    transport: &mut W,
) -> Result<usize, ChannelError> {
    let body = ecb_encrypt(key.bytes()?, payload);
    let len = u32::try_from(body.len()).map_err(|_| ChannelError::TooLarge(u32::MAX))?;
    transport.write_all(&len.to_be_bytes())?;
    transport.write_all(&body)?;
    transport.flush()?;
    Ok(HEADER_LEN + body.len())
}

fn read_full<R: Read>(transport: &mut R, buf: &mut [u8]) -> Result<(), ChannelError> {
    transport.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ChannelError::Truncated,
        _ => ChannelError::Io(e),
    })
}

/// Reads one frame and returns the decrypted, unpadded payload.
pub fn receive_decrypted<R: Read>(transport: &mut R, key: &ChannelKey) -> Result<Vec<u8>, ChannelError> {
    let key = key.bytes()?;
    let mut header = [0u8; HEADER_LEN];
    read_full(transport, &mut header)?;
    let len = u32::from_be_bytes(header);
    if len == 0 || !(len as usize).is_multiple_of(BLOCK_LEN) {
        return Err(ChannelError::BadLength(len));
    }
    if len as usize > MAX_FRAME_LEN {
        return Err(ChannelError::TooLarge(len));
    }
    let mut body = vec![0u8; len as usize];
    read_full(transport, &mut body)?;
    Ok(ecb_decrypt(key, &body)?)
}

#[derive(Default)]
struct PipeState {
    buf: VecDeque<u8>,
    closed: bool,
}

#[derive(Default)]
struct Pipe {
    state: Mutex<PipeState>,
    ready: Condvar,
}

/// Writing half of an in-process byte pipe. Dropping it closes the pipe.
pub struct LoopbackWriter(Arc<Pipe>);

/// Reading half; blocks until data arrives or the writer is dropped.
pub struct LoopbackReader(Arc<Pipe>);

pub fn loopback() -> (LoopbackWriter, LoopbackReader) {
    let pipe = Arc::new(Pipe::default());
    (LoopbackWriter(pipe.clone()), LoopbackReader(pipe))
}

impl Write for LoopbackWriter {
    fn write(&mut self, data: &[u8]) -> io::Result<usize> {
        let mut st = self.0.state.lock().expect("pipe lock");
        st.buf.extend(data);
        self.0.ready.notify_all();
        Ok(data.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Drop for LoopbackWriter {
    fn drop(&mut self) {
        if let Ok(mut st) = self.0.state.lock() {
            st.closed = true;
        }
        self.0.ready.notify_all();
    }
}

impl Read for LoopbackReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        let mut st = self.0.state.lock().expect("pipe lock");
        while st.buf.is_empty() && !st.closed {
            st = self.0.ready.wait(st).expect("pipe lock");
        }
        let n = out.len().min(st.buf.len());
        for (dst, src) in out.iter_mut().zip(st.buf.drain(..n)) {
            *dst = src;
        }
        Ok(n)
    }
}

/// The PUF-bearing side: holds a key only after a successful regeneration.
#[derive(Debug, Default)]
pub struct DeviceEndpoint {
    key: Option<ChannelKey>,
}

/// The peer that received the key at enrollment.
#[derive(Debug, Default)]
pub struct ReceiverEndpoint {
    key: Option<ChannelKey>,
}

fn key_from_response(fresh: &Bits, bundle: &HelperBundle) -> Result<ChannelKey, ChannelError> {
    let regen = regenerate(fresh, bundle)?;
    let secret = derive_key(&regen.id, 128)?;
    Ok(ChannelKey::new(secret.aes128()?))
}

impl DeviceEndpoint {
    /// Regenerates the PUF ID from a fresh response and derives the key.
    pub fn regenerate_key(&mut self, fresh: &Bits, bundle: &HelperBundle) -> Result<(), ChannelError> {
        self.key = None;
        self.key = Some(key_from_response(fresh, bundle)?);
        Ok(())
    }

    pub fn key(&self) -> Option<&ChannelKey> {
        self.key.as_ref()
    }

    pub fn wipe_key(&mut self) {
        if let Some(k) = self.key.as_mut() {
            k.wipe();
        }
    }

    pub fn send<W: Write>(&self, payload: &[u8], transport: &mut W) -> Result<usize, ChannelError> {
        send_encrypted(payload, self.key.as_ref().ok_or(ChannelError::NoKey)?, transport)
    }
}

impl ReceiverEndpoint {
    pub fn install_key(&mut self, key: ChannelKey) {
        self.key = Some(key);
    }

    pub fn key(&self) -> Option<&ChannelKey> {
        self.key.as_ref()
    }

    pub fn receive<R: Read>(&self, transport: &mut R) -> Result<Vec<u8>, ChannelError> {
        receive_decrypted(transport, self.key.as_ref().ok_or(ChannelError::NoKey)?)
    }
}

/// Enrollment-time key export: the device regenerates its ID and both ends
/// install the same 128-bit key. On any upstream failure neither end gets a
/// key.
pub fn provision_shared_key(
    device: &mut DeviceEndpoint,
    receiver: &mut ReceiverEndpoint,
    fresh: &Bits,
    bundle: &HelperBundle,
) -> Result<(), ChannelError> {
    device.key = None;
    receiver.key = None;
    device.regenerate_key(fresh, bundle)?;
    let exported = device.key.clone().expect("just regenerated");
    receiver.install_key(exported);
    Ok(())
}

/// Signed 16-bit samples, serialized little-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Waveform {
    pub samples: Vec<i16>,
}

const DEMO_WAVEFORM_CSV: &str = include_str!("../data/ecg_demo_v1.csv");

impl Waveform {
    pub fn to_bytes(&self) -> Vec<u8> {
        self.samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ChannelError> {
        if !bytes.len().is_multiple_of(2) {
            return Err(ChannelError::Waveform(format!(
                "odd byte length {}",
                bytes.len()
            )));
        }
        Ok(Waveform {
            samples: bytes
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]))
                .collect(),
        })
    }

    /// One integer per line under a `sample` header; `#` lines are comments.
    pub fn from_csv(text: &str) -> Result<Self, ChannelError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some((_, "sample")) => {}
            other => {
                return Err(ChannelError::Waveform(format!(
                    "expected header `sample`, found {:?}",
                    other.map(|(_, l)| l)
                )))
            }
        }
        let samples = lines
            .map(|(n, l)| {
                l.parse::<i16>()
                    .map_err(|_| ChannelError::Waveform(format!("line {n}: bad sample {l:?}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Waveform { samples })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("sample\n");
        for x in &self.samples {
            s.push_str(&x.to_string());
            s.push('\n');
        }
        s
    }

    /// The bundled 1000-sample synthetic ECG trace.
    pub fn demo() -> Self {
        Waveform::from_csv(DEMO_WAVEFORM_CSV).expect("bundled waveform parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::response::{PufResponse, ResponseConfig};
    use crate::fuzzy_extractor::enroll;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn key(b: u8) -> ChannelKey {
        ChannelKey::new([b; 16])
    }

    #[test]
    fn empty_payload_is_one_padding_block() {
        let mut wire = Vec::new();
        assert_eq!(send_encrypted(&[], &key(1), &mut wire).unwrap(), 20);
        assert_eq!(&wire[..4], &[0, 0, 0, 16]);
    }

    #[test]
    fn body_length_rounds_up_with_padding() {
        let mut wire = Vec::new();
        send_encrypted(&[0xAB; 33], &key(1), &mut wire).unwrap();
        assert_eq!(wire.len(), 4 + 48);
        let mut wire = Vec::new();
        send_encrypted(&[0xAB; 32], &key(1), &mut wire).unwrap();
        assert_eq!(wire.len(), 4 + 48);
    }

    #[test]
    fn round_trip_random_payloads() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = ChannelKey::new(rng.random());
        for len in (0..=1000).step_by(37) {
            let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
            let mut wire = Vec::new();
            send_encrypted(&payload, &k, &mut wire).unwrap();
            assert_eq!(receive_decrypted(&mut Cursor::new(wire), &k).unwrap(), payload);
        }
    }

    #[test]
    fn truncated_streams_are_rejected() {
        let mut wire = Vec::new();
        send_encrypted(b"hello world, a longer payload", &key(2), &mut wire).unwrap();
        for cut in [0, 2, 4, 10, wire.len() - 1] {
            let err = receive_decrypted(&mut Cursor::new(&wire[..cut]), &key(2)).unwrap_err();
            assert!(matches!(err, ChannelError::Truncated), "cut {cut}: {err:?}");
        }
    }

    #[test]
    fn bad_header_lengths() {
        for len in [0u32, 15, 17] {
            let mut wire = len.to_be_bytes().to_vec();
            wire.extend(vec![0u8; len as usize]);
            assert!(matches!(
                receive_decrypted(&mut Cursor::new(wire), &key(3)),
                Err(ChannelError::BadLength(l)) if l == len
            ));
        }
        let huge = ((MAX_FRAME_LEN + 16) as u32).to_be_bytes();
        assert!(matches!(
            receive_decrypted(&mut Cursor::new(huge), &key(3)),
            Err(ChannelError::TooLarge(_))
        ));
    }

    #[test]
    fn wiped_key_refuses_to_send() {
        let mut k = key(4);
        k.wipe();
        assert!(matches!(
            send_encrypted(b"x", &k, &mut Vec::new()),
            Err(ChannelError::KeyWiped)
        ));
    }

    #[test]
    fn loopback_across_threads() {
        let (mut w, mut r) = loopback();
        let k = key(5);
        let k2 = k.clone();
        let payload: Vec<u8> = (0..777u32).map(|i| (i * 31) as u8).collect();
        let expected = payload.clone();
        let sender = std::thread::spawn(move || send_encrypted(&payload, &k2, &mut w).unwrap());
        assert_eq!(receive_decrypted(&mut r, &k).unwrap(), expected);
        sender.join().unwrap();
    }

    #[test]
    fn loopback_eof_after_writer_drop() {
        let (w, mut r) = loopback();
        drop(w);
        assert!(matches!(
            receive_decrypted(&mut r, &key(6)),
            Err(ChannelError::Truncated)
        ));
    }

    fn enrolled() -> (Bits, HelperBundle) {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bits: Bits = (0..190).map(|_| rng.random::<bool>()).collect();
        let (_, bundle) = enroll(&PufResponse::new(bits.clone(), ResponseConfig::Combined).unwrap()).unwrap();
        (bits, bundle)
    }

    #[test]
    fn provisioning_gives_equal_keys_and_survives_reboot() {
        let (bits, bundle) = enrolled();
        let mut dev = DeviceEndpoint::default();
        let mut pc = ReceiverEndpoint::default();
        provision_shared_key(&mut dev, &mut pc, &bits, &bundle).unwrap();
        assert_eq!(dev.key(), pc.key());

        // Reboot: fresh regeneration from a slightly noisy response.
        let mut noisy = bits.clone();
        noisy.flip(3);
        noisy.flip(150);
        let mut rebooted = DeviceEndpoint::default();
        rebooted.regenerate_key(&noisy, &bundle).unwrap();
        assert_eq!(rebooted.key(), pc.key());
    }

    #[test]
    fn tampered_helper_blocks_provisioning() {
        let (bits, mut bundle) = enrolled();
        for p in (0..40).step_by(3) {
            bundle.helper_parity.flip(p);
        }
        let mut dev = DeviceEndpoint::default();
        let mut pc = ReceiverEndpoint::default();
        assert!(matches!(
            provision_shared_key(&mut dev, &mut pc, &bits, &bundle),
            Err(ChannelError::Provisioning(_))
        ));
        assert!(dev.key().is_none());
        assert!(pc.key().is_none());
        assert!(matches!(dev.send(b"x", &mut Vec::new()), Err(ChannelError::NoKey)));
    }

    #[test]
    fn demo_waveform_shape() {
        let w = Waveform::demo();
        assert_eq!(w.samples.len(), 1000);
        assert_eq!(w.to_bytes().len(), 2000);
        assert_eq!(Waveform::from_bytes(&w.to_bytes()).unwrap(), w);
        assert_eq!(Waveform::from_csv(&w.to_csv()).unwrap(), w);
        assert!(Waveform::from_bytes(&[1, 2, 3]).is_err());
        assert!(Waveform::from_csv("sample\n12\nx\n").is_err());
    }

    #[test]
    fn key_hex_round_trip() {
        let k = ChannelKey::new(*b"0123456789abcdef");
        assert_eq!(ChannelKey::from_hex(&k.to_hex().unwrap()).unwrap(), k);
        assert!(ChannelKey::from_hex("abcd").is_err());
    }
}
