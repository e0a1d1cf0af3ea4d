//! Placement plans: the object allocation table a runtime allocator consumes.
//!
//! Text form (`hmms-plan-v1`): a summary block of `# key: value` lines
//! followed by an `id,device,forced` table.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PLAN_FORMAT: &str = "hmms-plan-v1";

#[derive(Debug, Error)]
pub enum PlanFileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("plan json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Device {
    #[serde(rename = "DRAM")]
    Dram,
    #[serde(rename = "NVM")]
    Nvm,
}

impl Device {
    pub fn as_str(self) -> &'static str {
        match self {
            Device::Dram => "DRAM",
            Device::Nvm => "NVM",
        }
    }

    pub fn other(self) -> Device {
        match self {
            Device::Dram => Device::Nvm,
            Device::Nvm => Device::Dram,
        }
    }

    /// Decision variable value: 1 for DRAM, 0 for NVM.
    pub fn from_bit(dram: bool) -> Device {
        if dram {
            Device::Dram
        } else {
            Device::Nvm
        }
    }

    pub fn is_dram(self) -> bool {
        self == Device::Dram
    }
}

impl std::fmt::Display for Device {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Device {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "DRAM" => Ok(Device::Dram),
            "NVM" | "STT-RAM" => Ok(Device::Nvm),
            _ => Err(format!("unknown device `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub id: String,
    pub device: Device,
    /// Minor objects are pinned to DRAM and are not placement targets.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementPlan {
    pub strategy: String,
    pub entries: Vec<Placement>,
    /// Latency objective over placement targets, ns.
    pub objective_ns: f64,
    /// Energy of the budgeted population under this plan, nJ.
    pub planned_energy_nj: f64,
    pub energy_budget_nj: Option<f64>,
    pub ratio: Option<f64>,
    pub reserved_dram_bytes: f64,
    /// Whether minor objects count on both sides of the energy budget.
    pub minor_energy_included: bool,
}

impl PlacementPlan {
    pub fn device_of(&self, id: &str) -> Option<Device> {
        self.entries.iter().find(|p| p.id == id).map(|p| p.device)
    }

    pub fn entry(&self, id: &str) -> Option<&Placement> {
        self.entries.iter().find(|p| p.id == id)
    }

    pub fn count_on(&self, device: Device) -> usize {
        self.entries.iter().filter(|p| p.device == device).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{PLAN_FORMAT}");
        let _ = writeln!(out, "# strategy: {}", self.strategy);
        if let Some(r) = self.ratio {
            let _ = writeln!(out, "# ratio: {r}");
        }
        let _ = writeln!(out, "# objective_ns: {}", self.objective_ns);
        let _ = writeln!(out, "# planned_energy_nJ: {}", self.planned_energy_nj);
        if let Some(b) = self.energy_budget_nj {
            let _ = writeln!(out, "# energy_budget_nJ: {b}");
        }
        let _ = writeln!(out, "# reserved_dram_bytes: {}", self.reserved_dram_bytes);
        let _ = writeln!(
            out,
            "# minor_energy_included: {}",
            self.minor_energy_included
        );
        out.push_str("id,device,forced\n");
        for p in &self.entries {
            let _ = writeln!(out, "{},{},{}", p.id, p.device, p.forced);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, PlanFileError> {
        let err = |line: usize, msg: String| PlanFileError::Parse { line, msg };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, l)) if l == PLAN_FORMAT => {}
            Some((line, l)) => {
                return Err(err(line, format!("expected `{PLAN_FORMAT}`, found `{l}`")))
            }
            None => return Err(err(1, "empty plan".into())),
        }
        let mut plan = PlacementPlan {
            strategy: String::new(),
            entries: Vec::new(),
            objective_ns: 0.0,
            planned_energy_nj: 0.0,
            energy_budget_nj: None,
            ratio: None,
            reserved_dram_bytes: 0.0,
            minor_energy_included: false,
        };
        let mut in_table = false;
        for (line, l) in lines {
            if let Some(meta) = l.strip_prefix('#') {
                let Some((key, value)) = meta.split_once(':') else {
                    continue;
                };
                let value = value.trim();
                let num = || {
                    value
                        .parse::<f64>()
                        .map_err(|_| err(line, format!("bad number `{value}`")))
                };
                match key.trim() {
                    "strategy" => plan.strategy = value.to_string(),
                    "ratio" => plan.ratio = Some(num()?),
                    "objective_ns" => plan.objective_ns = num()?,
                    "planned_energy_nJ" => plan.planned_energy_nj = num()?,
                    "energy_budget_nJ" => plan.energy_budget_nj = Some(num()?),
                    "reserved_dram_bytes" => plan.reserved_dram_bytes = num()?,
                    "minor_energy_included" => {
                        plan.minor_energy_included = value
                            .parse()
                            .map_err(|_| err(line, format!("bad flag `{value}`")))?
                    }
                    _ => {}
                }
                continue;
            }
            if !in_table {
                if l != "id,device,forced" && l != "id,device" {
                    return Err(err(
                        line,
                        format!("expected `id,device,forced`, found `{l}`"),
                    ));
                }
                in_table = true;
                continue;
            }
            let cells: Vec<&str> = l.split(',').map(str::trim).collect();
            if cells.len() < 2 || cells.len() > 3 || cells[0].is_empty() {
                return Err(err(line, format!("bad placement row `{l}`")));
            }
            let device = cells[1].parse().map_err(|e| err(line, e))?;
            let forced = match cells.get(2) {
                None => false,
                Some(v) => v
                    .parse()
                    .map_err(|_| err(line, format!("bad flag `{v}`")))?,
            };
            if plan.entry(cells[0]).is_some() {
                return Err(err(line, format!("duplicate id `{}`", cells[0])));
            }
            plan.entries.push(Placement {
                id: cells[0].to_string(),
                device,
                forced,
            });
        }
        if !in_table {
            return Err(err(text.lines().count(), "missing placement table".into()));
        }
        Ok(plan)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes")
    }

    /// Reads either the text or the JSON form.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, PlanFileError> {
        let text = fs::read_to_string(path)?;
        if text.trim_start().starts_with('{') {
            Ok(serde_json::from_str(&text)?)
        } else {
            Self::from_text(&text)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> PlacementPlan {
        PlacementPlan {
            strategy: "planner".into(),
            entries: vec![
                Placement {
                    id: "a".into(),
                    device: Device::Dram,
                    forced: false,
                },
                Placement {
                    id: "b".into(),
                    device: Device::Nvm,
                    forced: false,
                },
                Placement {
                    id: "c".into(),
                    device: Device::Dram,
                    forced: true,
                },
            ],
            objective_ns: 1234.5,
            planned_energy_nj: 1e9 / 3.0,
            energy_budget_nj: Some(4e8),
            ratio: Some(0.8),
            reserved_dram_bytes: 4096.0,
            minor_energy_included: false,
        }
    }

    #[test]
    fn text_and_json_round_trip() {
        let plan = sample();
        assert_eq!(PlacementPlan::from_text(&plan.to_text()).unwrap(), plan);
        let back: PlacementPlan = serde_json::from_str(&plan.to_json()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn bare_id_device_table_is_accepted() {
        let plan = PlacementPlan::from_text("hmms-plan-v1\nid,device\nx,nvm\ny,DRAM\n").unwrap();
        assert_eq!(plan.device_of("x"), Some(Device::Nvm));
        assert_eq!(plan.device_of("y"), Some(Device::Dram));
        assert_eq!(plan.count_on(Device::Dram), 1);
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(PlacementPlan::from_text("hmms-plan-v1\nid,device\nx,SSD\n").is_err());
        assert!(PlacementPlan::from_text("hmms-plan-v1\nid,device\nx,DRAM\nx,NVM\n").is_err());
        assert!(PlacementPlan::from_text("id,device\n").is_err());
        assert!(PlacementPlan::from_text("hmms-plan-v1\n# ratio: 0.8\n").is_err());
    }
}
