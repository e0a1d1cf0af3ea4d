//! Mid-run re-planning: which live objects to move between DRAM and NVM when
//! the energy requirement changes at time `t`, charging each move its copy
//! energy and copy time.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceSpec;
use crate::energy::{dram_energy, nvm_energy};
use crate::ilp::{self, IlpError, ZeroOneProgram};
use crate::placement::{Device, PlacementPlan};
use crate::planner::{plan_static, split_objects, PlanError, PlanOutcome, PlannerOptions};
use crate::profile::{ObjectProfile, ProfileSet};

pub const MIGRATION_FORMAT: &str = "hmms-migration-v1";

#[derive(Debug, Error)]
pub enum MigrationError {
    #[error("object `{id}` is not allocated at t = {t} s (lifetime [{start}, {end}])")]
    OutsideLifetime {
        id: String,
        t: f64,
        start: f64,
        end: f64,
    },
    #[error("invalid migration request: {0}")]
    Request(String),
    #[error("current plan places unknown object `{0}`")]
    UnknownObject(String),
    #[error("current plan does not place major object `{0}`")]
    Uncovered(String),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationRequest {
    /// Seconds since program start.
    pub time: f64,
    pub new_ratio: f64,
    /// Hard limit at `new_ratio` times the all-DRAM energy; otherwise any
    /// plan no worse than staying put.
    pub strict: bool,
}

impl MigrationRequest {
    pub fn validate(&self) -> Result<(), MigrationError> {
        if !(self.time.is_finite() && self.time >= 0.0) {
            return Err(MigrationError::Request(format!(
                "time must be >= 0, got {}",
                self.time
            )));
        }
        if !(self.new_ratio.is_finite() && self.new_ratio > 0.0) {
            return Err(MigrationError::Request(format!(
                "ratio must be positive and finite, got {}",
                self.new_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationEnergies {
    /// Whole-life energy if moved DRAM to NVM at `t`, nJ.
    pub dram_to_nvm: f64,
    pub nvm_to_dram: f64,
    /// Copy cost DRAM to NVM, nJ.
    pub copy_to_nvm: f64,
    pub copy_to_dram: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MigrationLatencies {
    /// Whole-life access latency if moved DRAM to NVM at `t`, ns.
    pub dram_to_nvm: f64,
    pub nvm_to_dram: f64,
    /// Copy time DRAM to NVM, ns.
    pub copy_to_nvm: f64,
    pub copy_to_dram: f64,
}

fn check_time(obj: &ObjectProfile, t: f64) -> Result<(f64, f64), MigrationError> {
    if !(t >= obj.alloc_time && t <= obj.dealloc_time) {
        return Err(MigrationError::OutsideLifetime {
            id: obj.id.clone(),
            t,
            start: obj.alloc_time,
            end: obj.dealloc_time,
        });
    }
    let life = obj.lifetime();
    Ok(((t - obj.alloc_time) / life, (obj.dealloc_time - t) / life))
}

fn blocks(obj: &ObjectProfile, dev: &DeviceSpec) -> f64 {
    (obj.size / dev.cache_block_bytes).ceil()
}

/// Copy time in ns: every block read from the source and written to the
/// destination.
pub fn copy_time(obj: &ObjectProfile, dev: &DeviceSpec, to: Device) -> f64 {
    let per_block = match to {
        Device::Nvm => dev.dram_read_latency_ns() + dev.nvm_write_ns(),
        Device::Dram => dev.nvm_read_latency_ns() + dev.dram_write_ns(),
    };
    blocks(obj, dev) * per_block
}

/// Copy energy in nJ: the whole object accessed once on each device, plus
/// DRAM refresh over the copy time. Only the refresh term depends on the
/// direction.
pub fn copy_energy(obj: &ObjectProfile, dev: &DeviceSpec, to: Device) -> f64 {
    let access =
        (dev.dram_act_pre + dev.dram_rw) * obj.size + (dev.nvm_act_pre + dev.nvm_rba) * obj.size;
    access + dev.dram_refresh_rate() * obj.size * copy_time(obj, dev, to) * 1e-9
}

/// Lifetime energy of an object moved at `t`: the elapsed share on the source
/// device, the copy, and the remaining share on the destination.
pub fn migration_energies(
    obj: &ObjectProfile,
    dev: &DeviceSpec,
    t: f64,
) -> Result<MigrationEnergies, MigrationError> {
    let (elapsed, remaining) = check_time(obj, t)?;
    let de = dram_energy(obj, dev);
    let ne = nvm_energy(obj, dev);
    let copy_to_nvm = copy_energy(obj, dev, Device::Nvm);
    let copy_to_dram = copy_energy(obj, dev, Device::Dram);
    Ok(MigrationEnergies {
        dram_to_nvm: de * elapsed + copy_to_nvm + ne * remaining,
        nvm_to_dram: ne * elapsed + copy_to_dram + de * remaining,
        copy_to_nvm,
        copy_to_dram,
    })
}

/// Lifetime access latency of an object moved at `t`, with LLC misses spread
/// evenly over the lifetime.
pub fn migration_latency(
    obj: &ObjectProfile,
    dev: &DeviceSpec,
    t: f64,
) -> Result<MigrationLatencies, MigrationError> {
    let (elapsed, remaining) = check_time(obj, t)?;
    let on_dram = dev.dram_latency_ns * obj.llc_misses;
    let on_nvm = dev.nvm_latency_ns * obj.llc_misses;
    let copy_to_nvm = copy_time(obj, dev, Device::Nvm);
    let copy_to_dram = copy_time(obj, dev, Device::Dram);
    Ok(MigrationLatencies {
        dram_to_nvm: on_dram * elapsed + copy_to_nvm + on_nvm * remaining,
        nvm_to_dram: on_nvm * elapsed + copy_to_dram + on_dram * remaining,
        copy_to_nvm,
        copy_to_dram,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MigrationStatus {
    Optimal,
    Infeasible,
}

impl MigrationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            MigrationStatus::Optimal => "optimal",
            MigrationStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationDecision {
    pub id: String,
    pub from: Device,
    pub to: Device,
    pub migrate: bool,
    /// Allocated at `t` and not yet freed.
    pub live: bool,
    /// Lifetime energy under this decision, nJ.
    #[serde(rename = "energy_nJ")]
    pub energy_nj: f64,
    pub latency_ns: f64,
    /// Copy cost, zero unless migrating.
    #[serde(rename = "migce_nJ")]
    pub migce_nj: f64,
    pub migct_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MigrationPlan {
    pub request: MigrationRequest,
    pub status: MigrationStatus,
    /// One row per major object, in profile order.
    pub decisions: Vec<MigrationDecision>,
    #[serde(rename = "total_energy_nJ")]
    pub total_energy_nj: f64,
    #[serde(rename = "requirement_nJ")]
    pub requirement_nj: f64,
    pub objective_ns: f64,
    /// Energy if nothing moves.
    #[serde(rename = "no_migration_energy_nJ")]
    pub no_migration_energy_nj: f64,
    /// Static plan at the new ratio for objects allocated after `t`.
    pub companion: Option<PlanOutcome>,
}

impl MigrationPlan {
    pub fn migrations(&self) -> usize {
        self.decisions.iter().filter(|d| d.migrate).count()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{MIGRATION_FORMAT}");
        let _ = writeln!(out, "# time_s: {}", self.request.time);
        let _ = writeln!(out, "# new_ratio: {}", self.request.new_ratio);
        let _ = writeln!(out, "# strict: {}", self.request.strict);
        let _ = writeln!(out, "# status: {}", self.status.as_str());
        let _ = writeln!(out, "# E_total_nJ: {}", self.total_energy_nj);
        let _ = writeln!(out, "# Rq_nJ: {}", self.requirement_nj);
        let _ = writeln!(out, "# f_ns: {}", self.objective_ns);
        let _ = writeln!(
            out,
            "# no_migration_energy_nJ: {}",
            self.no_migration_energy_nj
        );
        let _ = writeln!(out, "# migrations: {}", self.migrations());
        out.push_str("id,from,to,migrate,migce_nJ,migct_ns\n");
        for d in &self.decisions {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                d.id, d.from, d.to, d.migrate, d.migce_nj, d.migct_ns
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("migration plan serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MigrationOptions {
    /// Require room for source and destination copies at once, as if every
    /// move were in flight together.
    pub strict_capacity: bool,
}

/// One major object's terms in the migration program.
#[derive(Debug, Clone)]
pub struct Candidate<'a> {
    pub obj: &'a ObjectProfile,
    pub current: Device,
    pub live: bool,
    /// Full-lifetime energy and latency if left where it is.
    pub stay_energy: f64,
    pub stay_latency: f64,
    /// Only meaningful for live objects.
    pub move_energy: f64,
    pub move_latency: f64,
    pub copy_energy: f64,
    pub copy_time: f64,
}

/// The migration program over live major objects. Variable `k` is
/// `candidates[live[k]]` moving to the other device.
#[derive(Debug, Clone)]
pub struct MigrationProgram<'a> {
    pub program: ZeroOneProgram,
    pub candidates: Vec<Candidate<'a>>,
    pub live: Vec<usize>,
    pub requirement: f64,
    pub no_migration_energy: f64,
    pub no_migration_latency: f64,
}

impl MigrationProgram<'_> {
    /// Expands a decision vector over live objects to one per candidate.
    pub fn moves(&self, x: &[bool]) -> Vec<bool> {
        let mut all = vec![false; self.candidates.len()];
        for (&k, &m) in self.live.iter().zip(x) {
            all[k] = m;
        }
        all
    }

    pub fn total_energy(&self, x: &[bool]) -> f64 {
        self.candidates
            .iter()
            .zip(self.moves(x))
            .map(|(c, m)| if m { c.move_energy } else { c.stay_energy })
            .sum()
    }

    pub fn objective(&self, x: &[bool]) -> f64 {
        self.candidates
            .iter()
            .zip(self.moves(x))
            .map(|(c, m)| if m { c.move_latency } else { c.stay_latency })
            .sum()
    }
}

fn current_devices(
    profiles: &ProfileSet,
    current: &PlacementPlan,
) -> Result<HashMap<String, Device>, MigrationError> {
    let mut map = HashMap::with_capacity(current.entries.len());
    for p in &current.entries {
        if profiles.get(&p.id).is_none() {
            return Err(MigrationError::UnknownObject(p.id.clone()));
        }
        map.insert(p.id.clone(), p.device);
    }
    Ok(map)
}

/// Builds the migration program. Rows, in order: DRAM capacity, NVM
/// capacity, energy requirement.
pub fn build_migration_program<'a>(
    profiles: &'a ProfileSet,
    majors: &'a ProfileSet,
    dev: &DeviceSpec,
    current: &PlacementPlan,
    request: &MigrationRequest,
    opts: &PlannerOptions,
    mopts: &MigrationOptions,
) -> Result<MigrationProgram<'a>, MigrationError> {
    request.validate()?;
    let t = request.time;
    let devices = current_devices(profiles, current)?;

    let mut candidates = Vec::with_capacity(majors.len());
    let mut live = Vec::new();
    for o in &majors.objects {
        let cur = *devices
            .get(&o.id)
            .ok_or_else(|| MigrationError::Uncovered(o.id.clone()))?;
        let de = dram_energy(o, dev);
        let ne = nvm_energy(o, dev);
        let (stay_energy, stay_latency) = match cur {
            Device::Dram => (de, o.llc_misses * dev.dram_latency_ns),
            Device::Nvm => (ne, o.llc_misses * dev.nvm_latency_ns),
        };
        let is_live = o.is_live_at(t);
        let mut c = Candidate {
            obj: o,
            current: cur,
            live: is_live,
            stay_energy,
            stay_latency,
            move_energy: stay_energy,
            move_latency: stay_latency,
            copy_energy: 0.0,
            copy_time: 0.0,
        };
        if is_live {
            let e = migration_energies(o, dev, t)?;
            let l = migration_latency(o, dev, t)?;
            (c.move_energy, c.move_latency, c.copy_energy, c.copy_time) = match cur {
                Device::Dram => (e.dram_to_nvm, l.dram_to_nvm, e.copy_to_nvm, l.copy_to_nvm),
                Device::Nvm => (e.nvm_to_dram, l.nvm_to_dram, e.copy_to_dram, l.copy_to_dram),
            };
            live.push(candidates.len());
        }
        candidates.push(c);
    }

    let no_migration_energy: f64 = candidates.iter().map(|c| c.stay_energy).sum();
    let no_migration_latency: f64 = candidates.iter().map(|c| c.stay_latency).sum();
    let requirement = if request.strict {
        request.new_ratio
            * majors
                .objects
                .iter()
                .map(|o| dram_energy(o, dev))
                .sum::<f64>()
    } else {
        no_migration_energy
    };

    // occupancy at t: live minors sit in DRAM next to the reserved bytes
    let minor_live: f64 = profiles
        .objects
        .iter()
        .filter(|o| o.is_live_at(t) && majors.get(&o.id).is_none())
        .map(|o| o.size)
        .sum();
    let mut on_dram = 0.0;
    let mut on_nvm = 0.0;
    for &k in &live {
        let c = &candidates[k];
        match c.current {
            Device::Dram => on_dram += c.obj.size,
            Device::Nvm => on_nvm += c.obj.size,
        }
    }
    let dram_room = dev.dram_capacity_bytes - opts.reserved_dram_bytes - minor_live - on_dram;
    let nvm_room = dev.nvm_capacity_bytes - on_nvm;

    let lv = |f: &dyn Fn(&Candidate) -> f64| -> Vec<f64> {
        live.iter().map(|&k| f(&candidates[k])).collect()
    };
    let objective = lv(&|c| c.move_latency - c.stay_latency);
    let (dram_row, nvm_row) = if mopts.strict_capacity {
        (
            lv(&|c| if c.current.is_dram() { 0.0 } else { c.obj.size }),
            lv(&|c| if c.current.is_dram() { c.obj.size } else { 0.0 }),
        )
    } else {
        (
            lv(&|c| {
                if c.current.is_dram() {
                    -c.obj.size
                } else {
                    c.obj.size
                }
            }),
            lv(&|c| {
                if c.current.is_dram() {
                    c.obj.size
                } else {
                    -c.obj.size
                }
            }),
        )
    };
    let energy_row = lv(&|c| c.move_energy - c.stay_energy);

    let names = live.iter().map(|&k| candidates[k].obj.id.clone()).collect();
    let mut program = ZeroOneProgram::new(objective).with_names(names);
    program.add_constraint("dram_capacity", dram_row, dram_room);
    program.add_constraint("nvm_capacity", nvm_row, nvm_room);
    program.add_constraint(
        "energy_requirement",
        energy_row,
        requirement - no_migration_energy,
    );

    Ok(MigrationProgram {
        program,
        candidates,
        live,
        requirement,
        no_migration_energy,
        no_migration_latency,
    })
}

/// Chooses which live major objects to move at `request.time`.
///
/// Objects not allocated at that time stay put. If no move set meets the
/// requirement and both capacities, the plan is marked infeasible and keeps
/// the current placement. Objects allocated later get a companion static plan
/// at the new ratio, sized into the capacity left after the moves.
pub fn plan_migration(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    current: &PlacementPlan,
    request: &MigrationRequest,
    opts: &PlannerOptions,
    mopts: &MigrationOptions,
) -> Result<MigrationPlan, MigrationError> {
    let (majors, _) = split_objects(profiles, opts);
    let built = build_migration_program(profiles, &majors, dev, current, request, opts, mopts)?;
    let sol = ilp::solve(&built.program)?;
    let (status, x) = if sol.is_optimal() {
        (MigrationStatus::Optimal, sol.assignment)
    } else {
        (MigrationStatus::Infeasible, vec![false; built.live.len()])
    };
    let moves = built.moves(&x);

    let decisions: Vec<MigrationDecision> = built
        .candidates
        .iter()
        .zip(&moves)
        .map(|(c, &m)| MigrationDecision {
            id: c.obj.id.clone(),
            from: c.current,
            to: if m { c.current.other() } else { c.current },
            migrate: m,
            live: c.live,
            energy_nj: if m { c.move_energy } else { c.stay_energy },
            latency_ns: if m { c.move_latency } else { c.stay_latency },
            migce_nj: if m { c.copy_energy } else { 0.0 },
            migct_ns: if m { c.copy_time } else { 0.0 },
        })
        .collect();

    let companion = companion_plan(profiles, dev, current, request, &decisions, opts)?;
    Ok(MigrationPlan {
        request: *request,
        status,
        total_energy_nj: built.total_energy(&x),
        requirement_nj: built.requirement,
        objective_ns: built.objective(&x),
        no_migration_energy_nj: built.no_migration_energy,
        decisions,
        companion,
    })
}

fn companion_plan(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    current: &PlacementPlan,
    request: &MigrationRequest,
    decisions: &[MigrationDecision],
    opts: &PlannerOptions,
) -> Result<Option<PlanOutcome>, MigrationError> {
    let t = request.time;
    let future = profiles.subset(|o| o.alloc_time > t);
    if future.is_empty() {
        return Ok(None);
    }
    let after: HashMap<&str, Device> = decisions.iter().map(|d| (d.id.as_str(), d.to)).collect();
    let (mut dram_used, mut nvm_used) = (0.0, 0.0);
    for o in profiles.objects.iter().filter(|o| o.is_live_at(t)) {
        let device = after
            .get(o.id.as_str())
            .copied()
            .or_else(|| current.device_of(&o.id))
            .unwrap_or(Device::Dram);
        match device {
            Device::Dram => dram_used += o.size,
            Device::Nvm => nvm_used += o.size,
        }
    }
    let left = dev.clone().with_capacities(
        (dev.dram_capacity_bytes - dram_used).max(0.0),
        (dev.nvm_capacity_bytes - nvm_used).max(0.0),
    );
    match plan_static(&future, &left, request.new_ratio, opts) {
        Ok(outcome) => Ok(Some(outcome)),
        Err(PlanError::MinorsExceedDram { needed, capacity }) => {
            log::warn!(
                "companion plan: later minor objects need {needed} B of DRAM, {capacity} B left"
            );
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}
