//! Independent scoring of placement plans.
//!
//! The evaluator only reads a plan's assignment, its forced flags and its
//! reserved-DRAM setting; every energy and latency figure is recomputed from
//! the profiles. Energy ratios and latencies are reported over the plan's
//! budgeted population (placement targets, plus minor objects if the plan
//! counted them), and separately over all objects.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceSpec;
use crate::energy::{dram_energy, nvm_energy};
use crate::placement::{Device, PlacementPlan};
use crate::planner::{plan_static, PlanError, PlanOutcome, PlannerOptions};
use crate::profile::ProfileSet;

const REL_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("plan does not place object `{0}`")]
    Uncovered(String),
    #[error("plan places unknown object `{0}`")]
    UnknownObject(String),
    #[error("no plans to compare")]
    NoPlans,
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn within(value: f64, limit: f64) -> bool {
    value <= limit + REL_TOL * limit.abs().max(value.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub id: String,
    pub device: Device,
    pub forced: bool,
    #[serde(rename = "energy_nJ")]
    pub energy_nj: f64,
    #[serde(rename = "all_dram_energy_nJ")]
    pub all_dram_energy_nj: f64,
    pub latency_ns: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerDevice<T> {
    pub dram: T,
    pub nvm: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub plan: String,
    /// Energy of the budgeted population under the plan.
    #[serde(rename = "energy_nJ")]
    pub total_energy_nj: f64,
    /// Same population, everything in DRAM.
    #[serde(rename = "all_dram_energy_nJ")]
    pub all_dram_energy_nj: f64,
    pub energy_ratio: f64,
    /// Latency objective over placement targets.
    pub latency_ns: f64,
    #[serde(rename = "all_objects_energy_nJ")]
    pub all_objects_energy_nj: f64,
    #[serde(rename = "all_objects_all_dram_energy_nJ")]
    pub all_objects_all_dram_energy_nj: f64,
    pub all_objects_latency_ns: f64,
    /// Static occupancy: every object resident at once, plus reserved DRAM.
    pub static_bytes: PerDevice<f64>,
    pub capacity_ok: PerDevice<bool>,
    /// Time-resolved occupancy from allocation/deallocation events.
    pub peak_concurrent_bytes: PerDevice<f64>,
    /// Present when the plan carries a budget.
    pub budget_ok: Option<bool>,
    pub breakdown: Vec<ObjectScore>,
}

impl EvaluationReport {
    pub fn capacity_ok(&self) -> bool {
        self.capacity_ok.dram && self.capacity_ok.nvm
    }

    /// Per-object energy table normalized to the all-objects all-DRAM energy.
    pub fn breakdown_csv(&self) -> String {
        let mut out = String::from("id,device,forced,energy_nJ,normalized_energy,latency_ns\n");
        let denom = self.all_objects_all_dram_energy_nj;
        for s in &self.breakdown {
            let norm = if denom > 0.0 {
                s.energy_nj / denom
            } else {
                0.0
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.id, s.device, s.forced, s.energy_nj, norm, s.latency_ns
            );
        }
        out
    }
}

/// Scores `plan` against `profiles` from scratch.
pub fn evaluate(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    plan: &PlacementPlan,
) -> Result<EvaluationReport, EvalError> {
    let placed: HashMap<&str, (Device, bool)> = plan
        .entries
        .iter()
        .map(|p| (p.id.as_str(), (p.device, p.forced)))
        .collect();
    for p in &plan.entries {
        if profiles.get(&p.id).is_none() {
            return Err(EvalError::UnknownObject(p.id.clone()));
        }
    }

    let mut breakdown = Vec::with_capacity(profiles.len());
    let (mut energy, mut all_dram, mut latency) = (0.0, 0.0, 0.0);
    let (mut all_energy, mut all_all_dram, mut all_latency) = (0.0, 0.0, 0.0);
    let mut bytes = PerDevice {
        dram: plan.reserved_dram_bytes,
        nvm: 0.0,
    };
    let mut events = Vec::with_capacity(2 * profiles.len());

    for o in &profiles.objects {
        let &(device, forced) = placed
            .get(o.id.as_str())
            .ok_or_else(|| EvalError::Uncovered(o.id.clone()))?;
        let de = dram_energy(o, dev);
        let e = match device {
            Device::Dram => de,
            Device::Nvm => nvm_energy(o, dev),
        };
        let l = o.llc_misses
            * match device {
                Device::Dram => dev.dram_latency_ns,
                Device::Nvm => dev.nvm_latency_ns,
            };
        all_energy += e;
        all_all_dram += de;
        all_latency += l;
        if !forced || plan.minor_energy_included {
            energy += e;
            all_dram += de;
        }
        if !forced {
            latency += l;
        }
        match device {
            Device::Dram => bytes.dram += o.size,
            Device::Nvm => bytes.nvm += o.size,
        }
        events.push((o.alloc_time, o.size, device));
        events.push((o.dealloc_time, -o.size, device));
        breakdown.push(ObjectScore {
            id: o.id.clone(),
            device,
            forced,
            energy_nj: e,
            all_dram_energy_nj: de,
            latency_ns: l,
        });
    }

    // frees before allocations at the same instant
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut live = PerDevice {
        dram: 0.0,
        nvm: 0.0,
    };
    let mut peak = live;
    for (_, delta, device) in events {
        match device {
            Device::Dram => {
                live.dram += delta;
                peak.dram = peak.dram.max(live.dram);
            }
            Device::Nvm => {
                live.nvm += delta;
                peak.nvm = peak.nvm.max(live.nvm);
            }
        }
    }

    let energy_ratio = if all_dram > 0.0 {
        energy / all_dram
    } else {
        1.0
    };
    Ok(EvaluationReport {
        plan: plan.strategy.clone(),
        total_energy_nj: energy,
        all_dram_energy_nj: all_dram,
        energy_ratio,
        latency_ns: latency,
        all_objects_energy_nj: all_energy,
        all_objects_all_dram_energy_nj: all_all_dram,
        all_objects_latency_ns: all_latency,
        static_bytes: bytes,
        capacity_ok: PerDevice {
            dram: within(bytes.dram, dev.dram_capacity_bytes),
            nvm: within(bytes.nvm, dev.nvm_capacity_bytes),
        },
        peak_concurrent_bytes: peak,
        budget_ok: plan.ratio.map(|r| within(energy, r * all_dram)),
        breakdown,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub plan: String,
    #[serde(rename = "energy_nJ")]
    pub energy_nj: f64,
    pub ratio: f64,
    pub latency_ns: f64,
    pub capacity_ok: bool,
}

/// The planner run at a baseline's own energy ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DominanceCheck {
    pub plan: String,
    pub ratio: f64,
    pub baseline_latency_ns: f64,
    /// `None` if the planner found the program infeasible.
    pub planner_latency_ns: Option<f64>,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub dominance: Vec<DominanceCheck>,
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("plan,energy_nJ,ratio,latency_ns,capacity_ok\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.plan, r.energy_nj, r.ratio, r.latency_ns, r.capacity_ok
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("comparison serializes")
    }
}

/// Evaluates each named plan. Every capacity-feasible plan that did not come
/// from the planner is also checked for dominance: the planner at the same
/// energy ratio must be at least as fast.
pub fn compare(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    plans: &[(String, PlacementPlan)],
    opts: &PlannerOptions,
) -> Result<Comparison, EvalError> {
    if plans.is_empty() {
        return Err(EvalError::NoPlans);
    }
    let mut out = Comparison {
        rows: Vec::with_capacity(plans.len()),
        dominance: Vec::new(),
    };
    for (name, plan) in plans {
        let rep = evaluate(profiles, dev, plan)?;
        out.rows.push(ComparisonRow {
            plan: name.clone(),
            energy_nj: rep.total_energy_nj,
            ratio: rep.energy_ratio,
            latency_ns: rep.latency_ns,
            capacity_ok: rep.capacity_ok(),
        });
        let comparable = plan.reserved_dram_bytes == opts.reserved_dram_bytes
            && plan.minor_energy_included == opts.include_minor_energy;
        if plan.strategy == "planner" || !rep.capacity_ok() || !comparable || rep.energy_ratio <= 0.0
        {
            continue;
        }
        let planner_latency = match plan_static(profiles, dev, rep.energy_ratio, opts)? {
            PlanOutcome::Optimal(p) => Some(evaluate(profiles, dev, &p)?.latency_ns),
            PlanOutcome::Infeasible(_) => None,
        };
        out.dominance.push(DominanceCheck {
            plan: name.clone(),
            ratio: rep.energy_ratio,
            baseline_latency_ns: rep.latency_ns,
            planner_latency_ns: planner_latency,
            holds: planner_latency.is_some_and(|l| within(l, rep.latency_ns)),
        });
    }
    Ok(out)
}
