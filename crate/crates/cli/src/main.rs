// SPDX-License-Identifier: Apache-2.0

//! `iopuf` — simulation, enrollment, regeneration, metrics, sweeps and the
//! encrypted channel demo.
//!
//! Exit status: 0 success, 2 usage, 3 I/O, 4 parse, 5 regeneration failure,
//! 6 channel error.

mod error;

use std::fs;
use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::{CliError, Kind};
use iopuf::crypto_primitives::derive_key;
use iopuf::experiment::{self, ExperimentConfig, SweepKind};
use iopuf::fuzzy_extractor::{enroll, regenerate, HelperBundle};
use iopuf::measurement::{parse_reading_csv, write_reading_csv, ReadingSet};
use iopuf::response::{response_for_config, ResponseConfig};
use iopuf::secure_channel::{
    loopback, provision_shared_key, ChannelKey, DeviceEndpoint, ReceiverEndpoint, Waveform,
};
use iopuf::Environment;

#[derive(Parser)]
#[command(name = "iopuf", version, about = "I/O-resistor PUF simulator and key-generation harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ExperimentArgs {
    /// Experiment config (TOML). Unset keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Population size.
    #[arg(long)]
    devices: Option<usize>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(n) = self.devices {
            cfg.devices = n;
        }
        if let Some(s) = self.seed {
            cfg.model.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "IOPUF_OUT_DIR", default_value = "iopuf-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReadingsArgs {
    /// Reading-set CSV.
    #[arg(long)]
    readings: PathBuf,
    /// Device to use when the file holds several (default: first row's).
    #[arg(long)]
    device: Option<u32>,
    /// 1-based row among that device's readings.
    #[arg(long, default_value_t = 1)]
    row: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Role {
    Sender,
    Receiver,
    Loopback,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepArg {
    Temp,
    Voltage,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a population and write one reading CSV per device.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        out: OutDir,
        /// Reading sets per device.
        #[arg(long, default_value_t = 1)]
        repeats: u32,
        /// Averaged samples per slot (default: the reference count).
        #[arg(long)]
        samples: Option<u32>,
        #[arg(long)]
        temperature: Option<f64>,
        #[arg(long)]
        vdd: Option<f64>,
    },
    /// Enroll a device and write its helper file.
    Enroll {
        #[command(flatten)]
        input: ReadingsArgs,
        #[arg(long)]
        helper: PathBuf,
    },
    /// Regenerate the PUF ID from fresh readings and a helper file.
    Regenerate {
        #[command(flatten)]
        input: ReadingsArgs,
        #[arg(long)]
        helper: PathBuf,
        /// Flip this many response bits before regeneration.
        #[arg(long, default_value_t = 0)]
        inject_errors: usize,
        /// Seed for choosing the injected positions.
        #[arg(long, default_value_t = 0)]
        inject_seed: u64,
        /// Export the 128-bit channel key (hex) for the receiver.
        #[arg(long)]
        key_out: Option<PathBuf>,
    },
    /// Metric reports for all four configurations.
    Metrics {
        /// A reading CSV or a directory of them.
        #[arg(long)]
        readings: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Bit error rate across a temperature or supply-voltage sweep.
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepArg,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "COMBINED")]
        response: ResponseConfig,
        /// Write CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encrypted waveform transfer.
    DemoChannel {
        #[arg(long, value_enum)]
        role: Role,
        /// Sender: fresh readings for key regeneration.
        #[arg(long)]
        readings: Option<PathBuf>,
        /// Sender: helper file.
        #[arg(long)]
        helper: Option<PathBuf>,
        /// Receiver: key file exported by `regenerate --key-out`.
        #[arg(long)]
        key_file: Option<PathBuf>,
        /// Sender: address to connect to.
        #[arg(long)]
        connect: Option<String>,
        /// Receiver: address to listen on.
        #[arg(long)]
        listen: Option<String>,
        /// Waveform CSV to send (default: bundled trace).
        #[arg(long)]
        waveform: Option<PathBuf>,
        /// Receiver: compare against this waveform CSV.
        #[arg(long)]
        expect: Option<PathBuf>,
        /// Receiver: write the decrypted waveform CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Print the default experiment config as TOML.
    DefaultConfig,
}

fn read_readings(path: &Path) -> Result<Vec<ReadingSet>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse_reading_csv(file, &iopuf::measurement::AdcConfig::default()).map_err(|e| {
        let mut err = CliError::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    })
}

fn select_reading(args: &ReadingsArgs) -> Result<ReadingSet, CliError> {
    let sets = read_readings(&args.readings)?;
    let device = match args.device.or_else(|| sets.first().map(|s| s.device_id)) {
        Some(d) => d,
        None => return Err(CliError::new(Kind::Parse, format!("{}: no readings", args.readings.display()))),
    };
    if args.row == 0 {
        return Err(CliError::usage("--row is 1-based"));
    }
    sets.into_iter()
        .filter(|s| s.device_id == device)
        .nth(args.row - 1)
        .ok_or_else(|| CliError::usage(format!("device {device} has no reading row {}", args.row)))
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn simulate(
    exp: &ExperimentArgs,
    out: &Path,
    repeats: u32,
    samples: Option<u32>,
    temperature: Option<f64>,
    vdd: Option<f64>,
) -> Result<(), CliError> {
    if exp.devices == Some(0) {
        return Err(CliError::usage("--devices must be at least 1"));
    }
    if repeats == 0 || samples == Some(0) {
        return Err(CliError::usage("--repeats and --samples must be at least 1"));
    }
    let cfg = exp.load()?;
    let reference = cfg.reference_env();
    let env = Environment::new(
        temperature.unwrap_or(reference.temperature_c),
        vdd.unwrap_or(reference.vdd),
    );
    if !(env.vdd > 0.0) {
        return Err(CliError::usage("--vdd must be > 0"));
    }
    let samples = samples.unwrap_or(cfg.reference_samples);
    let devices = cfg.population()?;
    create_dir(out)?;
    for d in &devices {
        let sets = (0..repeats)
            .map(|r| cfg.acquire(d, &env, samples, r))
            .collect::<Result<Vec<_>, _>>()?;
        let mut buf = Vec::new();
        write_reading_csv(&mut buf, &sets)?;
        write_file(&out.join(format!("device_{:03}.csv", d.device_id)), &buf)?;
    }
    println!("wrote {} reading files to {}", devices.len(), out.display());
    Ok(())
}

fn cmd_enroll(input: &ReadingsArgs, helper: &Path) -> Result<(), CliError> {
    let rs = select_reading(input)?;
    let (id, bundle) = enroll(&response_for_config(&rs, ResponseConfig::Combined))?;
    if let Some(dir) = helper.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    bundle.save(helper)?;
    let key = derive_key(&id, 256).map_err(|e| CliError::usage(e.to_string()))?;
    println!("device={}", rs.device_id);
    println!("puf_id={}", id.to_hex());
    println!(
        "key_fingerprint={}",
        key.fingerprint().map_err(|e| CliError::usage(e.to_string()))?
    );
    println!("helper={}", helper.display());
    Ok(())
}

fn cmd_regenerate(
    input: &ReadingsArgs,
    helper: &Path,
    inject: usize,
    inject_seed: u64,
    key_out: Option<&Path>,
) -> Result<(), CliError> {
    let rs = select_reading(input)?;
    let bundle = HelperBundle::load(helper)?;
    let mut fresh = response_for_config(&rs, ResponseConfig::Combined).bits;
    if inject > 0 {
        fresh = experiment::inject_errors(&fresh, inject, inject_seed, rs.device_id)?;
    }
    let regen = regenerate(&fresh, &bundle)?;
    let key = derive_key(&regen.id, 256).map_err(|e| CliError::usage(e.to_string()))?;
    println!("device={}", rs.device_id);
    println!("puf_id={}", regen.id.to_hex());
    println!(
        "key_fingerprint={}",
        key.fingerprint().map_err(|e| CliError::usage(e.to_string()))?
    );
    println!("corrections={}", regen.corrections);
    if let Some(path) = key_out {
        let k = ChannelKey::new(key.aes128().map_err(|e| CliError::usage(e.to_string()))?);
        write_file(path, format!("{}\n", k.to_hex()?).as_bytes())?;
        println!("key_file={}", path.display());
    }
    Ok(())
}

fn reading_files(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| CliError::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::usage(format!("{}: no .csv files", path.display())));
    }
    Ok(files)
}

fn cmd_metrics(readings: &Path, out: &Path) -> Result<(), CliError> {
    let mut all = Vec::new();
    for f in reading_files(readings)? {
        all.extend(read_readings(&f)?);
    }
    let groups = experiment::group_by_device(&all);
    if groups.len() < 2 {
        eprintln!("warning: uniqueness needs at least 2 devices; reporting it as null");
    }
    create_dir(out)?;
    for report in experiment::all_reports(&groups)? {
        let stem = report.config.name().to_ascii_lowercase();
        write_file(&out.join(format!("metrics_{stem}.csv")), report.to_csv().as_bytes())?;
        write_file(&out.join(format!("metrics_{stem}.json")), report.to_json().as_bytes())?;
        let u = report
            .uniqueness_pct
            .map_or_else(|| "n/a".to_string(), |u| format!("{u:.2}"));
        println!(
            "{:<16} reliability {:>6.2}  uniqueness {:>6}  uniformity {:>6.2}  bit-aliasing {:>6.2}",
            report.config.name(),
            report.mean_reliability_pct,
            u,
            report.mean_uniformity_pct,
            report.mean_bit_aliasing_pct
        );
    }
    Ok(())
}

fn cmd_sweep(kind: SweepArg, exp: &ExperimentArgs, response: ResponseConfig, out: Option<&Path>) -> Result<(), CliError> {
    let cfg = exp.load()?;
    let kind = match kind {
        SweepArg::Temp => SweepKind::Temperature,
        SweepArg::Voltage => SweepKind::Voltage,
    };
    let devices = cfg.population()?;
    let report = experiment::run_sweep(&cfg, &devices, kind, response)?;
    let csv = report.to_csv();
    match out {
        Some(path) => write_file(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn load_waveform(path: Option<&Path>) -> Result<Waveform, CliError> {
    match path {
        None => Ok(Waveform::demo()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Waveform::from_csv(&text).map_err(|e| CliError::new(Kind::Parse, format!("{}: {e}", p.display())))
        }
    }
}

fn require<'a, T: ?Sized>(value: Option<&'a T>, flag: &str, role: &str) -> Result<&'a T, CliError> {
    value.ok_or_else(|| CliError::usage(format!("{role} requires {flag}")))
}

fn report_received(received: &Waveform, expected: &Waveform, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = out {
        write_file(path, received.to_csv().as_bytes())?;
    }
    if received == expected {
        println!("decrypted waveform identical ({} samples)", received.samples.len());
        Ok(())
    } else {
        Err(CliError::new(Kind::Channel, "decrypted waveform differs from the original"))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_demo_channel(
    role: Role,
    readings: Option<&Path>,
    helper: Option<&Path>,
    key_file: Option<&Path>,
    connect: Option<&str>,
    listen: Option<&str>,
    waveform: Option<&Path>,
    expect: Option<&Path>,
    out: Option<&Path>,
    exp: &ExperimentArgs,
) -> Result<(), CliError> {
    match role {
        Role::Loopback => {
            let cfg = exp.load()?;
            let devices = cfg.population()?;
            let device = &devices[0];
            let (mut dev, mut pc) = (DeviceEndpoint::default(), ReceiverEndpoint::default());
            let bundle = match helper {
                Some(p) => HelperBundle::load(p)?,
                None => {
                    let enrolled = experiment::enroll_population(&cfg, std::slice::from_ref(device))?;
                    enrolled.into_iter().next().expect("one device").bundle
                }
            };
            let fresh = match readings {
                Some(p) => select_reading(&ReadingsArgs {
                    readings: p.to_path_buf(),
                    device: None,
                    row: 1,
                })?,
                None => cfg.acquire(device, &cfg.reference_env(), cfg.reference_samples, 1)?,
            };
            provision_shared_key(
                &mut dev,
                &mut pc,
                &response_for_config(&fresh, ResponseConfig::Combined).bits,
                &bundle,
            )?;
            let original = load_waveform(waveform)?;
            let (mut tx, mut rx) = loopback();
            let sent = dev.send(&original.to_bytes(), &mut tx)?;
            drop(tx);
            let received = Waveform::from_bytes(&pc.receive(&mut rx)?)?;
            println!("sent {sent} bytes over loopback");
            report_received(&received, &original, out)
        }
        Role::Sender => {
            let readings = require(readings, "--readings", "sender")?;
            let helper = require(helper, "--helper", "sender")?;
            let addr = require(connect, "--connect", "sender")?;
            let fresh = select_reading(&ReadingsArgs {
                readings: readings.to_path_buf(),
                device: None,
                row: 1,
            })?;
            let bundle = HelperBundle::load(helper)?;
            let mut dev = DeviceEndpoint::default();
            dev.regenerate_key(&response_for_config(&fresh, ResponseConfig::Combined).bits, &bundle)?;
            let payload = load_waveform(waveform)?.to_bytes();
            let mut stream = TcpStream::connect(addr)
                .map_err(|e| CliError::new(Kind::Channel, format!("channel error: connect {addr}: {e}")))?;
            let sent = dev.send(&payload, &mut stream)?;
            stream.flush().ok();
            dev.wipe_key();
            println!("sent {sent} bytes to {addr}");
            Ok(())
        }
        Role::Receiver => {
            let key_path = require(key_file, "--key-file", "receiver")?;
            let addr = require(listen, "--listen", "receiver")?;
            let text = fs::read_to_string(key_path).map_err(|e| CliError::io(key_path, e))?;
            let key = ChannelKey::from_hex(&text)
                .map_err(|e| CliError::new(Kind::Parse, format!("{}: {e}", key_path.display())))?;
            let mut pc = ReceiverEndpoint::default();
            pc.install_key(key);
            let listener = TcpListener::bind(addr)
                .map_err(|e| CliError::new(Kind::Channel, format!("channel error: bind {addr}: {e}")))?;
            if let Ok(local) = listener.local_addr() {
                println!("listening on {local}");
                std::io::stdout().flush().ok();
            }
            let (mut stream, peer) = listener
                .accept()
                .map_err(|e| CliError::new(Kind::Channel, format!("channel error: accept: {e}")))?;
            let received = Waveform::from_bytes(&pc.receive(&mut stream)?)?;
            println!("received {} samples from {peer}", received.samples.len());
            match expect {
                Some(p) => report_received(&received, &load_waveform(Some(p))?, out),
                None => {
                    if let Some(path) = out {
                        write_file(path, received.to_csv().as_bytes())?;
                    }
                    Ok(())
                }
            }
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate {
            exp,
            out,
            repeats,
            samples,
            temperature,
            vdd,
        } => simulate(exp, &out.out, *repeats, *samples, *temperature, *vdd),
        Command::Enroll { input, helper } => cmd_enroll(input, helper),
        Command::Regenerate {
            input,
            helper,
            inject_errors,
            inject_seed,
            key_out,
        } => cmd_regenerate(input, helper, *inject_errors, *inject_seed, key_out.as_deref()),
        Command::Metrics { readings, out } => cmd_metrics(readings, &out.out),
        Command::Sweep {
            kind,
            exp,
            response,
            out,
        } => cmd_sweep(*kind, exp, *response, out.as_deref()),
        Command::DemoChannel {
            role,
            readings,
            helper,
            key_file,
            connect,
            listen,
            waveform,
            expect,
            out,
            exp,
        } => cmd_demo_channel(
            *role,
            readings.as_deref(),
            helper.as_deref(),
            key_file.as_deref(),
            connect.as_deref(),
            listen.as_deref(),
            waveform.as_deref(),
            expect.as_deref(),
            out.as_deref(),
            exp,
        ),
        Command::DefaultConfig => {
            print!("{}", ExperimentConfig::default().to_toml());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
