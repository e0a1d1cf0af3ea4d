//! Device characteristics of the DRAM + STT-RAM main memory.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const GIB: f64 = 1024.0 * 1024.0 * 1024.0;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid device spec: {0}")]
    Invalid(String),
    #[error("unknown preset `{0}` (expected testbed1 or testbed2)")]
    UnknownPreset(String),
    #[error("device spec parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Per-byte command energies (nJ/byte), latencies (ns per LLC-miss access)
/// and capacities (bytes) of the two devices.
///
/// `dram_latency_ns` / `nvm_latency_ns` are the effective per-access latencies
/// used by the placement objective. The optional write latencies are used for
/// the destination side of a migration copy; when absent the effective
/// latency stands in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub dram_act_pre: f64,
    pub dram_rw: f64,
    pub dram_ref: f64,
    pub nvm_act_pre: f64,
    pub nvm_rba: f64,
    pub nvm_wb: f64,
    /// Interval between DRAM refresh events, seconds.
    pub refresh_period_s: f64,
    pub cache_block_bytes: f64,
    pub dram_latency_ns: f64,
    pub nvm_latency_ns: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dram_write_latency_ns: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nvm_write_latency_ns: Option<f64>,
    pub dram_capacity_bytes: f64,
    pub nvm_capacity_bytes: f64,
}

impl Default for DeviceSpec {
    fn default() -> Self {
        DeviceSpec::testbed1()
    }
}

impl DeviceSpec {
    fn with_latencies(dram: f64, nvm_read: f64, nvm_write: f64) -> Self {
        DeviceSpec {
            dram_act_pre: 3.07,
            dram_rw: 1.19,
            dram_ref: 0.35,
            nvm_act_pre: 2.68,
            nvm_rba: 1.00,
            nvm_wb: 2.83,
            refresh_period_s: 0.064,
            cache_block_bytes: 64.0,
            dram_latency_ns: dram,
            nvm_latency_ns: nvm_read,
            dram_write_latency_ns: Some(dram),
            nvm_write_latency_ns: Some(nvm_write),
            dram_capacity_bytes: 8.0 * GIB,
            nvm_capacity_bytes: 16.0 * GIB,
        }
    }

    /// DRAM 200 ns; STT-RAM 640 ns read, 1440 ns write.
    pub fn testbed1() -> Self {
        Self::with_latencies(200.0, 640.0, 1440.0)
    }

    /// DRAM 400 ns; STT-RAM 840 ns read, 1640 ns write.
    pub fn testbed2() -> Self {
        Self::with_latencies(400.0, 840.0, 1640.0)
    }

    pub fn preset(name: &str) -> Result<Self, DeviceError> {
        match name {
            "testbed1" | "testbed-1" | "1" => Ok(Self::testbed1()),
            "testbed2" | "testbed-2" | "2" => Ok(Self::testbed2()),
            other => Err(DeviceError::UnknownPreset(other.into())),
        }
    }

    pub fn with_capacities(mut self, dram_bytes: f64, nvm_bytes: f64) -> Self {
        self.dram_capacity_bytes = dram_bytes;
        self.nvm_capacity_bytes = nvm_bytes;
        self
    }

    /// DRAM refresh energy per byte per second.
    pub fn dram_refresh_rate(&self) -> f64 {
        self.dram_ref / self.refresh_period_s
    }

    pub fn dram_read_latency_ns(&self) -> f64 {
        self.dram_latency_ns
    }

    pub fn nvm_read_latency_ns(&self) -> f64 {
        self.nvm_latency_ns
    }

    pub fn dram_write_ns(&self) -> f64 {
        self.dram_write_latency_ns.unwrap_or(self.dram_latency_ns)
    }

    pub fn nvm_write_ns(&self) -> f64 {
        self.nvm_write_latency_ns.unwrap_or(self.nvm_latency_ns)
    }

    pub fn validate(&self) -> Result<(), DeviceError> {
        let non_negative = [
            ("dram_act_pre", self.dram_act_pre),
            ("dram_rw", self.dram_rw),
            ("dram_ref", self.dram_ref),
            ("nvm_act_pre", self.nvm_act_pre),
            ("nvm_rba", self.nvm_rba),
            ("nvm_wb", self.nvm_wb),
            ("dram_latency_ns", self.dram_latency_ns),
            ("nvm_latency_ns", self.nvm_latency_ns),
            ("dram_write_latency_ns", self.dram_write_ns()),
            ("nvm_write_latency_ns", self.nvm_write_ns()),
            ("dram_capacity_bytes", self.dram_capacity_bytes),
            ("nvm_capacity_bytes", self.nvm_capacity_bytes),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DeviceError::Invalid(format!(
                    "{name} must be finite and >= 0, got {v}"
                )));
            }
        }
        for (name, v) in [
            ("refresh_period_s", self.refresh_period_s),
            ("cache_block_bytes", self.cache_block_bytes),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(DeviceError::Invalid(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.dram_latency_ns > self.nvm_latency_ns {
            log::warn!(
                "DRAM latency {} ns exceeds NVM latency {} ns",
                self.dram_latency_ns,
                self.nvm_latency_ns
            );
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("device spec is always representable")
    }

    pub fn from_toml(text: &str) -> Result<Self, DeviceError> {
        let spec: DeviceSpec = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, DeviceError> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_energies_serialize_verbatim() {
        let text = DeviceSpec::default().to_toml();
        for line in [
            "dram_act_pre = 3.07",
            "dram_rw = 1.19",
            "dram_ref = 0.35",
            "nvm_act_pre = 2.68",
            "nvm_rba = 1.0",
            "nvm_wb = 2.83",
        ] {
            assert!(
                text.lines().any(|l| l == line),
                "missing `{line}` in\n{text}"
            );
        }
        let back = DeviceSpec::from_toml(&text).unwrap();
        assert_eq!(back, DeviceSpec::default());
        assert_eq!(back.dram_act_pre.to_bits(), 3.07f64.to_bits());
        assert_eq!(back.nvm_wb.to_bits(), 2.83f64.to_bits());
    }

    #[test]
    fn presets_carry_split_latencies() {
        let t1 = DeviceSpec::testbed1();
        assert_eq!(
            (t1.dram_latency_ns, t1.nvm_latency_ns, t1.nvm_write_ns()),
            (200.0, 640.0, 1440.0)
        );
        let t2 = DeviceSpec::preset("testbed2").unwrap();
        assert_eq!(
            (t2.dram_latency_ns, t2.nvm_latency_ns, t2.nvm_write_ns()),
            (400.0, 840.0, 1640.0)
        );
        assert!(DeviceSpec::preset("testbed3").is_err());
    }

    #[test]
    fn write_latency_falls_back_to_effective() {
        let mut d = DeviceSpec::testbed1();
        d.nvm_write_latency_ns = None;
        assert_eq!(d.nvm_write_ns(), d.nvm_latency_ns);
        let text = d.to_toml();
        assert!(!text.contains("nvm_write_latency_ns"));
        assert_eq!(DeviceSpec::from_toml(&text).unwrap(), d);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut d = DeviceSpec::testbed1();
        d.refresh_period_s = 0.0;
        assert!(d.validate().is_err());
        let mut d = DeviceSpec::testbed1();
        d.dram_capacity_bytes = -1.0;
        assert!(d.validate().is_err());
        // inverted latencies only warn
        let mut d = DeviceSpec::testbed1();
        d.dram_latency_ns = 1000.0;
        assert!(d.validate().is_ok());
        assert!(DeviceSpec::from_toml("dram_act_pre = 1.0\n").is_err());
    }
}
