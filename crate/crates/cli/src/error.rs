// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::process::ExitCode;

use iopuf::device_model::DeviceError;
use iopuf::experiment::ExperimentError;
use iopuf::fuzzy_extractor::ExtractorError;
use iopuf::measurement::MeasurementError;
use iopuf::metrics::MetricsError;
use iopuf::secure_channel::ChannelError;

/// Exit status taxonomy. The numeric values are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage = 2,
    Io = 3,
    Parse = 4,
    Regeneration = 5,
    Channel = 6,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new(Kind::Io, format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind as u8)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DeviceError> for CliError {
    fn from(e: DeviceError) -> Self {
        let kind = match e {
            DeviceError::Io { .. } => Kind::Io,
            DeviceError::Config(_) => Kind::Parse,
            _ => Kind::Usage,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<MeasurementError> for CliError {
    fn from(e: MeasurementError) -> Self {
        let kind = match e {
            MeasurementError::Io(_) => Kind::Io,
            MeasurementError::Parse { .. } | MeasurementError::Csv(_) => Kind::Parse,
            _ => Kind::Usage,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ExtractorError> for CliError {
    fn from(e: ExtractorError) -> Self {
        let kind = match e {
            ExtractorError::Io { .. } => Kind::Io,
            ExtractorError::HelperFormat(_) => Kind::Parse,
            ExtractorError::RegenerationFailed(_) | ExtractorError::Bch(_) => Kind::Regeneration,
            ExtractorError::BadResponse { .. } | ExtractorError::BadFreshLength(_) => Kind::Usage,
        };
        let message = match e {
            ExtractorError::Bch(_) => format!("regeneration failed: {e}"),
            _ => e.to_string(),
        };
        Self::new(kind, message)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Device(e) => e.into(),
            ExperimentError::Measurement(e) => e.into(),
            ExperimentError::Extractor(e) => e.into(),
            ExperimentError::Metrics(e) => e.into(),
            ExperimentError::Config(e) => Self::new(Kind::Parse, format!("config: {e}")),
            ExperimentError::Io { .. } => Self::new(Kind::Io, e.to_string()),
            ExperimentError::Invalid(_) => Self::usage(e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<ChannelError> for CliError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::Provisioning(inner) => {
                let mut err = CliError::from(inner);
                err.message = format!("provisioning refused: {}", err.message);
                err
            }
            other => Self::new(Kind::Channel, format!("channel error: {other}")),
        }
    }
}
