//! Reference placement strategies. All of them pin minor objects to DRAM
//! exactly like the planner, so their plans are comparable point for point.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::device::DeviceSpec;
use crate::ilp::{self, ZeroOneProgram};
use crate::placement::{Device, PlacementPlan};
use crate::planner::{assemble_plan, build_program, PlanError, PlannerOptions, StaticProgram};
use crate::profile::ProfileSet;

/// Rejection-sampling attempts before [`place_random`] gives up.
pub const RANDOM_MAX_DRAWS: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("object `{0}` has no llc_mpki value")]
    MissingMpki(String),
    #[error("placement exceeds {device} capacity even after eviction ({needed} B > {capacity} B)")]
    CapacityExceeded {
        device: Device,
        needed: f64,
        capacity: f64,
    },
    #[error("no capacity-feasible assignment exists")]
    NoFeasibleAssignment,
    #[error("no capacity-feasible assignment found in {0} random draws")]
    SamplingExhausted(usize),
    #[error(transparent)]
    Plan(#[from] PlanError),
}

fn program<'a>(
    profiles: &'a ProfileSet,
    dev: &DeviceSpec,
    opts: &PlannerOptions,
) -> Result<StaticProgram<'a>, BaselineError> {
    // the ratio only shapes the energy row, which baselines ignore
    Ok(build_program(profiles, dev, 1.0, opts)?)
}

fn dram_room(built: &StaticProgram<'_>) -> f64 {
    built.program.constraints[0].bound
}

/// Every major object on `device`; capacities are not enforced.
pub fn place_all(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    device: Device,
    opts: &PlannerOptions,
) -> Result<PlacementPlan, BaselineError> {
    let built = program(profiles, dev, opts)?;
    let x = vec![device.is_dram(); built.majors.len()];
    let name = match device {
        Device::Dram => "all-dram",
        Device::Nvm => "all-nvm",
    };
    Ok(assemble_plan(profiles, dev, &built, &x, name, None, opts))
}

/// LLC-MPKI threshold rule: objects with `llc_mpki >= threshold` go to DRAM.
///
/// If the chosen DRAM set does not fit, the lowest-MPKI DRAM objects (earliest
/// in profile order on ties) are moved to NVM until it does.
pub fn place_moca(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    mpki_threshold: f64,
    opts: &PlannerOptions,
) -> Result<PlacementPlan, BaselineError> {
    let built = program(profiles, dev, opts)?;
    let mpki: Vec<f64> = built
        .majors
        .iter()
        .map(|o| {
            o.llc_mpki
                .ok_or_else(|| BaselineError::MissingMpki(o.id.clone()))
        })
        .collect::<Result<_, _>>()?;
    let mut x: Vec<bool> = mpki.iter().map(|&m| m >= mpki_threshold).collect();

    let room = dram_room(&built);
    let mut used: f64 = built
        .majors
        .iter()
        .zip(&x)
        .filter(|(_, &d)| d)
        .map(|(o, _)| o.size)
        .sum();
    if used > room {
        let mut order: Vec<usize> = (0..x.len()).filter(|&i| x[i]).collect();
        order.sort_by(|&a, &b| mpki[a].total_cmp(&mpki[b]).then(a.cmp(&b)));
        for i in order {
            if used <= room {
                break;
            }
            x[i] = false;
            used -= built.majors[i].size;
        }
    }
    let nvm_used: f64 = built
        .majors
        .iter()
        .zip(&x)
        .filter(|(_, &d)| !d)
        .map(|(o, _)| o.size)
        .sum();
    if nvm_used > dev.nvm_capacity_bytes {
        return Err(BaselineError::CapacityExceeded {
            device: Device::Nvm,
            needed: nvm_used,
            capacity: dev.nvm_capacity_bytes,
        });
    }
    let name = format!("moca:{mpki_threshold}");
    Ok(assemble_plan(profiles, dev, &built, &x, &name, None, opts))
}

/// Uniformly random capacity-feasible placement, by rejection sampling.
///
/// Objects too large for one device are fixed to the other first; this does
/// not change the distribution over feasible assignments.
pub fn place_random(
    profiles: &ProfileSet,
    dev: &DeviceSpec,
    seed: u64,
    opts: &PlannerOptions,
) -> Result<PlacementPlan, BaselineError> {
    let built = program(profiles, dev, opts)?;
    let room = dram_room(&built);
    let n = built.majors.len();

    let mut fixed: Vec<Option<bool>> = vec![None; n];
    for (i, o) in built.majors.iter().enumerate() {
        let dram_ok = o.size <= room;
        let nvm_ok = o.size <= dev.nvm_capacity_bytes;
        fixed[i] = match (dram_ok, nvm_ok) {
            (true, true) => None,
            (true, false) => Some(true),
            (false, true) => Some(false),
            (false, false) => return Err(BaselineError::NoFeasibleAssignment),
        };
    }
    let mut capacity_only = ZeroOneProgram::new(vec![0.0; n]);
    capacity_only.constraints = built.program.constraints[..2].to_vec();
    if !ilp::is_feasible(&capacity_only).map_err(PlanError::from)? {
        return Err(BaselineError::NoFeasibleAssignment);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![false; n];
    for _ in 0..RANDOM_MAX_DRAWS {
        for (xi, f) in x.iter_mut().zip(&fixed) {
            *xi = match f {
                Some(v) => *v,
                None => rng.gen_bool(0.5),
            };
        }
        if built.program.constraint_satisfied(0, &x) && built.program.constraint_satisfied(1, &x) {
            let name = format!("random:{seed}");
            return Ok(assemble_plan(profiles, dev, &built, &x, &name, None, opts));
        }
    }
    Err(BaselineError::SamplingExhausted(RANDOM_MAX_DRAWS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::device::GIB;
    use crate::profile::ObjectProfile;

    const MB: f64 = 1024.0 * 1024.0;

    fn obj(id: &str, size_mb: f64, mpki: Option<f64>) -> ObjectProfile {
        ObjectProfile {
            id: id.into(),
            size: size_mb * MB,
            alloc_time: 0.0,
            dealloc_time: 1.0,
            accessed_volume: 4.0 * size_mb * MB,
            llc_misses: 1000.0,
            dirty_blocks: 10.0,
            llc_mpki: mpki,
        }
    }

    fn set(mpkis: &[f64]) -> ProfileSet {
        ProfileSet::new(
            "",
            None,
            mpkis
                .iter()
                .enumerate()
                .map(|(i, &m)| obj(&format!("o{i}"), 16.0, Some(m)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn moca_threshold_extremes() {
        let s = set(&[0.0, 0.01, 0.2]);
        let dev = DeviceSpec::testbed1();
        let opts = PlannerOptions::default();
        let all = place_moca(&s, &dev, 0.0, &opts).unwrap();
        assert_eq!(all.count_on(Device::Dram), 3);
        let none = place_moca(&s, &dev, f64::INFINITY, &opts).unwrap();
        assert_eq!(none.count_on(Device::Nvm), 3);
    }

    #[test]
    fn moca_partition_at_threshold() {
        let mpkis = [0.001, 0.024, 0.025, 0.026, 0.3, 0.0249];
        let s = set(&mpkis);
        let plan = place_moca(
            &s,
            &DeviceSpec::testbed1(),
            0.025,
            &PlannerOptions::default(),
        )
        .unwrap();
        for (i, m) in mpkis.iter().enumerate() {
            let expect = if *m >= 0.025 {
                Device::Dram
            } else {
                Device::Nvm
            };
            assert_eq!(plan.device_of(&format!("o{i}")), Some(expect), "mpki {m}");
        }
    }

    #[test]
    fn moca_evicts_lowest_mpki_first() {
        let s = set(&[0.5, 0.1, 0.9, 0.1]);
        // room for two 16 MB objects
        let dev = DeviceSpec::testbed1().with_capacities(40.0 * MB, GIB);
        let plan = place_moca(&s, &dev, 0.0, &PlannerOptions::default()).unwrap();
        assert_eq!(plan.device_of("o0"), Some(Device::Dram));
        assert_eq!(plan.device_of("o2"), Some(Device::Dram));
        assert_eq!(plan.device_of("o1"), Some(Device::Nvm));
        assert_eq!(plan.device_of("o3"), Some(Device::Nvm));

        let tiny = DeviceSpec::testbed1().with_capacities(0.0, 20.0 * MB);
        assert!(matches!(
            place_moca(&s, &tiny, 0.0, &PlannerOptions::default()),
            Err(BaselineError::CapacityExceeded {
                device: Device::Nvm,
                ..
            })
        ));
    }

    #[test]
    fn moca_needs_mpki() {
        let s = ProfileSet::new("", None, vec![obj("x", 16.0, None)]).unwrap();
        assert!(matches!(
            place_moca(&s, &DeviceSpec::testbed1(), 0.025, &PlannerOptions::default()),
            Err(BaselineError::MissingMpki(id)) if id == "x"
        ));
    }

    #[test]
    fn random_is_seeded_and_forced_when_dram_is_gone() {
        let s = set(&[0.1; 8]);
        let dev = DeviceSpec::testbed1();
        let opts = PlannerOptions::default();
        let a = place_random(&s, &dev, 11, &opts).unwrap();
        assert_eq!(a, place_random(&s, &dev, 11, &opts).unwrap());

        let no_dram = dev.clone().with_capacities(0.0, GIB);
        let plan = place_random(&s, &no_dram, 3, &opts).unwrap();
        assert_eq!(plan.count_on(Device::Nvm), 8);

        let nowhere = dev.with_capacities(16.0 * MB, 16.0 * MB);
        assert!(matches!(
            place_random(&s, &nowhere, 3, &opts),
            Err(BaselineError::NoFeasibleAssignment)
        ));
    }

    #[test]
    fn random_marginals_are_even() {
        let s = set(&[0.1; 3]);
        let dev = DeviceSpec::testbed1();
        let opts = PlannerOptions::default();
        let runs = 10_000;
        let mut dram = [0usize; 3];
        for seed in 0..runs {
            let plan = place_random(&s, &dev, seed, &opts).unwrap();
            for (i, d) in dram.iter_mut().enumerate() {
                if plan.device_of(&format!("o{i}")) == Some(Device::Dram) {
                    *d += 1;
                }
            }
        }
        for d in dram {
            let frac = d as f64 / runs as f64;
            assert!((frac - 0.5).abs() <= 0.02, "{frac}");
        }
    }
}
