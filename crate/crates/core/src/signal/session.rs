//! Raw recording sessions and channel descriptions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Accel,
    Gyro,
    Capacitive,
}

impl ChannelKind {
    /// Channels are normalized to 0-1 except angular velocity, which keeps
    /// its native range.
    pub fn normalized(self) -> bool {
        !matches!(self, ChannelKind::Gyro)
    }

    pub fn default_unit(self) -> &'static str {
        match self {
            ChannelKind::Accel => "g",
            ChannelKind::Gyro => "dps",
            ChannelKind::Capacitive => "pF",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ChannelSpec {
    pub name: String,
    pub kind: ChannelKind,
    pub unit: String,
    pub normalize: bool,
}

impl ChannelSpec {
    pub fn new(name: impl Into<String>, kind: ChannelKind) -> ChannelSpec {
        ChannelSpec {
            name: name.into(),
            kind,
            unit: kind.default_unit().to_string(),
            normalize: kind.normalized(),
        }
    }

    /// Infers the sensor kind from a conventional channel name
    /// (`*acc*`, `*gyr*`, `*cap*`).
    pub fn from_name(name: &str) -> Result<ChannelSpec> {
        let lower = name.to_ascii_lowercase();
        let kind = if lower.contains("acc") {
            ChannelKind::Accel
        } else if lower.contains("gyr") {
            ChannelKind::Gyro
        } else if lower.contains("cap") {
            ChannelKind::Capacitive
        } else {
            return Err(Error::InvalidInput(format!(
                "cannot infer sensor kind from channel name '{}'",
                name
            )));
        };
        Ok(ChannelSpec::new(name, kind))
    }
}

/// The 20-channel two-glove layout: per hand, 3-axis accelerometer,
/// 3-axis gyroscope, and four capacitive electrodes.
pub fn factory_channels() -> Vec<ChannelSpec> {
    let mut out = Vec::with_capacity(20);
    for hand in ["r", "l"] {
        for axis in ["x", "y", "z"] {
            out.push(ChannelSpec::new(format!("{hand}_acc_{axis}"), ChannelKind::Accel));
        }
        for axis in ["x", "y", "z"] {
            out.push(ChannelSpec::new(format!("{hand}_gyr_{axis}"), ChannelKind::Gyro));
        }
        for i in 1..=4 {
            out.push(ChannelSpec::new(format!("{hand}_cap_{i}"), ChannelKind::Capacitive));
        }
    }
    out
}

/// The 12-channel two-wrist IMU layout: per hand, 3-axis accelerometer and
/// 3-axis gyroscope.
pub fn openpack_channels() -> Vec<ChannelSpec> {
    let mut out = Vec::with_capacity(12);
    for hand in ["r", "l"] {
        for axis in ["x", "y", "z"] {
            out.push(ChannelSpec::new(format!("{hand}_acc_{axis}"), ChannelKind::Accel));
        }
        for axis in ["x", "y", "z"] {
            out.push(ChannelSpec::new(format!("{hand}_gyr_{axis}"), ChannelKind::Gyro));
        }
    }
    out
}

/// One participant session: channel-major is not used here — `samples` is
/// row-major `[T × C]` so a row is one synchronized sample across channels.
#[derive(Debug, Clone)]
pub struct SessionRecording {
    pub user_id: String,
    pub session_id: String,
    pub sample_rate_hz: f64,
    pub channels: Vec<ChannelSpec>,
    pub samples: Vec<f64>,
    pub labels: Vec<usize>,
}

impl SessionRecording {
    pub fn n_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Checks the structural invariants; `num_classes` bounds the labels.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.sample_rate_hz <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "session {}/{}: sample rate must be positive",
                self.user_id, self.session_id
            )));
        }
        let c = self.channels.len();
        if c == 0 || self.samples.len() != self.labels.len() * c {
            return Err(Error::Shape(format!(
                "session {}/{}: {} samples not divisible into {} channels × {} rows",
                self.user_id,
                self.session_id,
                self.samples.len(),
                c,
                self.labels.len()
            )));
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::InvalidLabel(format!(
                    "session {}/{}: label {} at row {} exceeds {} classes",
                    self.user_id, self.session_id, l, i, num_classes
                )));
            }
        }
        for spec in &self.channels {
            if spec.kind == ChannelKind::Gyro && spec.normalize {
                return Err(Error::Config(format!(
                    "channel {}: angular velocity must not be normalized",
                    spec.name
                )));
            }
            if spec.kind != ChannelKind::Gyro && !spec.normalize {
                return Err(Error::Config(format!(
                    "channel {}: accelerometer/capacitive channels must be normalized",
                    spec.name
                )));
            }
        }
        Ok(())
    }

    /// Copies out one channel as a contiguous series.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        let nc = self.channels.len();
        self.labels
            .iter()
            .enumerate()
            .map(|(t, _)| self.samples[t * nc + c])
            .collect()
    }
}
