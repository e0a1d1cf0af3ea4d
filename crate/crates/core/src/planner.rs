//! Static placement: the latency-optimal DRAM/NVM assignment of major
//! objects that fits both capacities and stays within `R` times the
//! all-DRAM energy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceError, DeviceSpec};
use crate::energy::{dram_energy, nvm_energy};
use crate::ilp::{self, IlpError, ZeroOneProgram};
use crate::placement::{Device, Placement, PlacementPlan};
use crate::profile::{
    filter_major, ObjectProfile, ProfileError, ProfileSet, DEFAULT_MAJOR_THRESHOLD,
};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("energy ratio must be positive and finite, got {0}")]
    InvalidRatio(f64),
    #[error("ratio sweep is empty")]
    EmptySweep,
    #[error(
        "minor objects and reserved bytes need {needed} B of DRAM but only {capacity} B exist"
    )]
    MinorsExceedDram { needed: f64, capacity: f64 },
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Device(#[from] DeviceError),
    #[error(transparent)]
    Ilp(#[from] IlpError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannerOptions {
    /// Objects with accessed volume above this many bytes are placement targets.
    pub major_threshold: f64,
    /// DRAM held by application code and stack.
    pub reserved_dram_bytes: f64,
    /// Count minor objects' DRAM energy on both sides of the budget.
    pub include_minor_energy: bool,
}

impl Default for PlannerOptions {
    fn default() -> Self {
        PlannerOptions {
            major_threshold: DEFAULT_MAJOR_THRESHOLD,
            reserved_dram_bytes: 0.0,
            include_minor_energy: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    DramCapacity,
    NvmCapacity,
    EnergyBudget,
}

impl ConstraintKind {
    pub fn name(self) -> &'static str {
        match self {
            ConstraintKind::DramCapacity => "dram_capacity",
            ConstraintKind::NvmCapacity => "nvm_capacity",
            ConstraintKind::EnergyBudget => "energy_budget",
        }
    }
}

impl std::fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Infeasibility {
    pub ratio: f64,
    pub energy_budget_nj: f64,
    /// An irreducible set of constraints that cannot hold together.
    pub violated: Vec<ConstraintKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum PlanOutcome {
    Optimal(PlacementPlan),
    Infeasible(Infeasibility),
}

impl PlanOutcome {
    pub fn plan(&self) -> Option<&PlacementPlan> {
        match self {
            PlanOutcome::Optimal(p) => Some(p),
            PlanOutcome::Infeasible(_) => None,
        }
    }

    pub fn into_plan(self) -> Option<PlacementPlan> {
        match self {
            PlanOutcome::Optimal(p) => Some(p),
            PlanOutcome::Infeasible(_) => None,
        }
    }
}

/// The placement program for one instance, with everything needed to map
/// an assignment back to objects.
#[derive(Debug, Clone)]
pub struct StaticProgram<'a> {
    pub program: ZeroOneProgram,
    pub majors: Vec<&'a ObjectProfile>,
    pub major_dram_energy: Vec<f64>,
    pub major_nvm_energy: Vec<f64>,
    /// Minor objects' all-DRAM energy, counted only when included.
    pub minor_energy: f64,
    pub energy_budget: f64,
    pub kinds: [ConstraintKind; 3],
}

impl StaticProgram<'_> {
    pub fn latency_of(&self, x: &[bool], dev: &DeviceSpec) -> f64 {
        placement_latency(self.majors.iter().copied().zip(x.iter().copied()), dev)
    }

    pub fn energy_of(&self, x: &[bool]) -> f64 {
        let placed: f64 = x
            .iter()
            .zip(self.major_dram_energy.iter().zip(&self.major_nvm_energy))
            .map(|(&dram, (de, ne))| if dram { *de } else { *ne })
            .sum();
        placed + self.minor_energy
    }
}

/// `Σ X·L_DRAM·L3M + (1 - X)·L_NVM·L3M` over `(object, on_dram)` pairs.
pub fn placement_latency<'a>(
    pairs: impl IntoIterator<Item = (&'a ObjectProfile, bool)>,
    dev: &DeviceSpec,
) -> f64 {
    pairs
        .into_iter()
        .map(|(o, dram)| {
            let l = if dram {
                dev.dram_latency_ns
            } else {
                dev.nvm_latency_ns
            };
            l * o.llc_misses
        })
        .sum()
}

/// Builds the 0-1 program for `profiles` at energy ratio `ratio`.
pub fn build_program<'a>(
    profiles: &'a ProfileSet,
    dev: &DeviceSpec,
    ratio: f64,
    opts: &PlannerOptions,
) -> Result<StaticProgram<'a>, PlanError> {
    if !(ratio.is_finite() && ratio > 0.0) {
        return Err(PlanError::InvalidRatio(ratio));
    }
    dev.validate()?;
    let majors: Vec<&ObjectProfile> = profiles
        .objects
        .iter()
        .filter(|o| o.accessed_volume > opts.major_threshold)
        .collect();
    let minors = profiles
        .objects
        .iter()
        .filter(|o| o.accessed_volume <= opts.major_threshold);

    let (mut minor_bytes, mut minor_energy) = (0.0, 0.0);
    for o in minors {
        minor_bytes += o.size;
        minor_energy += dram_energy(o, dev);
    }
    let needed = minor_bytes + opts.reserved_dram_bytes;
    if needed > dev.dram_capacity_bytes {
        return Err(PlanError::MinorsExceedDram {
            needed,
            capacity: dev.dram_capacity_bytes,
        });
    }
    if !opts.include_minor_energy {
        minor_energy = 0.0;
    }

    let de: Vec<f64> = majors.iter().map(|o| dram_energy(o, dev)).collect();
    let ne: Vec<f64> = majors.iter().map(|o| nvm_energy(o, dev)).collect();
    let sizes: Vec<f64> = majors.iter().map(|o| o.size).collect();
    let total_size: f64 = sizes.iter().sum();
    let total_de: f64 = de.iter().sum();
    let total_ne: f64 = ne.iter().sum();
    let energy_budget = ratio * (total_de + minor_energy);

    let objective = majors
        .iter()
        .map(|o| (dev.dram_latency_ns - dev.nvm_latency_ns) * o.llc_misses)
        .collect();
    let names = majors.iter().map(|o| o.id.clone()).collect();
    let mut program = ZeroOneProgram::new(objective).with_names(names);
    program.add_constraint(
        ConstraintKind::DramCapacity.name(),
        sizes.clone(),
        dev.dram_capacity_bytes - needed,
    );
    program.add_constraint(
        ConstraintKind::NvmCapacity.name(),
        sizes.iter().map(|s| -s).collect(),
        dev.nvm_capacity_bytes - total_size,
    );
    program.add_constraint(
        ConstraintKind::EnergyBudget.name(),
        de.iter().zip(&ne).map(|(d, n)| d - n).collect(),
        energy_budget - minor_energy - total_ne,
    );

    Ok(StaticProgram {
        program,
        majors,
        major_dram_energy: de,
        major_nvm_energy: ne,
        minor_energy,
        energy_budget,
        kinds: [
            ConstraintKind::DramCapacity,
            ConstraintKind::NvmCapacity,
            ConstraintKind::EnergyBudget,
        ],
    })
}

/// Turns an assignment of the major objects into a full plan.
pub fn assemble_plan(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    built: &StaticProgram<'_>,
    x: &[bool],
    strategy: &str,
    ratio: Option<f64>,
    opts: &PlannerOptions,
) -> PlacementPlan {
    let mut xs = built.majors.iter().zip(x);
    let mut next_major = xs.next();
    let mut entries = Vec::with_capacity(profiles.len());
    for o in &profiles.objects {
        match next_major {
            Some((m, &dram)) if std::ptr::eq(*m, o) => {
                entries.push(Placement {
                    id: o.id.clone(),
                    device: Device::from_bit(dram),
                    forced: false,
                });
                next_major = xs.next();
            }
            _ => entries.push(Placement {
                id: o.id.clone(),
                device: Device::Dram,
                forced: true,
            }),
        }
    }
    PlacementPlan {
        strategy: strategy.to_string(),
        entries,
        objective_ns: built.latency_of(x, dev),
        planned_energy_nj: built.energy_of(x),
        energy_budget_nj: ratio.map(|_| built.energy_budget),
        ratio,
        reserved_dram_bytes: opts.reserved_dram_bytes,
        minor_energy_included: opts.include_minor_energy,
    }
}

/// Latency-optimal placement under energy ratio `ratio`.
pub fn plan_static(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    ratio: f64,
    opts: &PlannerOptions,
) -> Result<PlanOutcome, PlanError> {
    let built = build_program(profiles, dev, ratio, opts)?;
    let sol = ilp::solve(&built.program)?;
    if !sol.is_optimal() {
        let violated = ilp::infeasible_subset(&built.program)?
            .into_iter()
            .map(|j| built.kinds[j])
            .collect();
        return Ok(PlanOutcome::Infeasible(Infeasibility {
            ratio,
            energy_budget_nj: built.energy_budget,
            violated,
        }));
    }
    Ok(PlanOutcome::Optimal(assemble_plan(
        profiles,
        dev,
        &built,
        &sol.assignment,
        "planner",
        Some(ratio),
        opts,
    )))
}

/// One plan per ratio, in input order. Errors are reported per entry.
pub fn sweep_ratios(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    ratios: &[f64],
    opts: &PlannerOptions,
) -> Result<Vec<Result<PlanOutcome, PlanError>>, PlanError> {
    if ratios.is_empty() {
        return Err(PlanError::EmptySweep);
    }
    Ok(ratios
        .par_iter()
        .map(|&r| plan_static(profiles, dev, r, opts))
        .collect())
}

/// Major/minor split under the planner's threshold.
pub fn split_objects(profiles: &ProfileSet, opts: &PlannerOptions) -> (ProfileSet, ProfileSet) {
    filter_major(profiles, opts.major_threshold)
}
