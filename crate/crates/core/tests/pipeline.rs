// SPDX-License-Identifier: Apache-2.0

use std::collections::HashSet;

use iopuf::experiment::{enroll_population, group_by_device, ExperimentConfig};
use iopuf::measurement::{parse_reading_csv, write_reading_csv, AdcConfig};
use iopuf::metrics::{bit_aliasing_profile, uniqueness};
use iopuf::response::{response_for_config, ResponseConfig};
use iopuf::secure_channel::{receive_decrypted, send_encrypted, ChannelError, ChannelKey, Waveform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        devices: 8,
        reference_samples: 500,
        ..ExperimentConfig::default()
    }
}

#[test]
fn exported_population_parses_back_identically() {
    let cfg = small();
    let devices = cfg.population().unwrap();
    let readings = cfg.reference_readings(&devices).unwrap();
    let mut csv = Vec::new();
    write_reading_csv(&mut csv, &readings).unwrap();
    let parsed = parse_reading_csv(csv.as_slice(), &AdcConfig::default()).unwrap();
    assert_eq!(parsed, readings);
    assert_ne!(readings[0].v, readings[1].v);
}

#[test]
fn enrolled_devices_get_distinct_helpers() {
    let cfg = small();
    let devices = cfg.population().unwrap();
    let enrolled = enroll_population(&cfg, &devices).unwrap();
    let texts: HashSet<String> = enrolled.iter().map(|e| e.bundle.to_text()).collect();
    assert_eq!(texts.len(), devices.len());
}

#[test]
fn uniqueness_matches_aliasing_identity_on_simulated_data() {
    let cfg = small();
    let devices = cfg.population().unwrap();
    let groups = group_by_device(&cfg.reference_readings(&devices).unwrap());
    for config in ResponseConfig::ALL {
        let responses: Vec<_> = groups
            .iter()
            .map(|(_, sets)| response_for_config(&sets[0], config).bits)
            .collect();
        let k = responses.len() as f64;
        let profile = bit_aliasing_profile(&responses).unwrap();
        let via_aliasing = profile
            .iter()
            .map(|b| {
                let p = b / 100.0;
                200.0 * p * (1.0 - p) * k / (k - 1.0)
            })
            .sum::<f64>()
            / profile.len() as f64;
        let direct = uniqueness(&responses).unwrap();
        assert!((direct - via_aliasing).abs() < 1e-9, "{config}: {direct} vs {via_aliasing}");
    }
}

#[test]
fn mismatched_keys_fail_padding_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED);
    let trials = 2000;
    let mut padding = 0;
    for _ in 0..trials {
        let len = rng.random_range(0..200);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let mut wire = Vec::new();
        send_encrypted(&payload, &ChannelKey::new(rng.random()), &mut wire).unwrap();
        match receive_decrypted(&mut wire.as_slice(), &ChannelKey::new(rng.random())) {
            Err(ChannelError::Padding) => padding += 1,
            Err(e) => panic!("unexpected {e}"),
            Ok(_) => {}
        }
    }
    // Acceptance needs ≥ 255/256 per attempt; allow sampling slack.
    assert!(padding as f64 / trials as f64 >= 0.99, "{padding}/{trials}");
}

#[test]
fn ciphertext_shares_no_block_with_plaintext() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xEC6);
    let plain = Waveform::demo().to_bytes();
    let plain_blocks: HashSet<&[u8]> = plain.chunks(16).collect();
    let trials = 500;
    let mut clean = 0;
    for _ in 0..trials {
        let mut wire = Vec::new();
        send_encrypted(&plain, &ChannelKey::new(rng.random()), &mut wire).unwrap();
        if wire[4..].chunks(16).all(|b| !plain_blocks.contains(b)) {
            clean += 1;
        }
    }
    assert!(clean as f64 / trials as f64 >= 0.99, "{clean}/{trials}");
}

#[test]
fn ecb_repeats_equal_plaintext_blocks() {
    let key = ChannelKey::new([7; 16]);
    let mut wire = Vec::new();
    send_encrypted(&[0x42; 48], &key, &mut wire).unwrap();
    let body = &wire[4..];
    assert_eq!(&body[0..16], &body[16..32]);
    assert_eq!(&body[16..32], &body[32..48]);
}
