//! Per-object energy estimates on DRAM and STT-RAM, in nJ.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::device::DeviceSpec;
use crate::profile::{ObjectProfile, ProfileSet};

/// Energy of the object if it lives in DRAM for its whole lifetime:
/// activate/precharge and read/write per accessed byte, plus refresh of
/// every resident byte for every second it is allocated.
pub fn dram_energy(obj: &ObjectProfile, dev: &DeviceSpec) -> f64 {
    dev.dram_act_pre * obj.accessed_volume
        + dev.dram_rw * obj.accessed_volume
        + dev.dram_refresh_rate() * obj.size * obj.lifetime()
}

/// Energy of the object if it lives in STT-RAM. There is no idle term; dirty
/// cache blocks written back on row-buffer conflicts are charged per block.
pub fn nvm_energy(obj: &ObjectProfile, dev: &DeviceSpec) -> f64 {
    dev.nvm_act_pre * obj.accessed_volume
        + dev.nvm_rba * obj.accessed_volume
        + dev.nvm_wb * obj.dirty_blocks * dev.cache_block_bytes
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectEnergy {
    pub dram: f64,
    pub nvm: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyEstimate {
    pub per_object: BTreeMap<String, ObjectEnergy>,
    /// All-DRAM energy of the set; the denominator of energy ratios.
    pub total_dram: f64,
    pub total_nvm: f64,
}

impl EnergyEstimate {
    pub fn get(&self, id: &str) -> Option<ObjectEnergy> {
        self.per_object.get(id).copied()
    }
}

pub fn estimate_all(profiles: &ProfileSet, dev: &DeviceSpec) -> EnergyEstimate {
    let mut est = EnergyEstimate::default();
    for obj in &profiles.objects {
        let e = ObjectEnergy {
            dram: dram_energy(obj, dev),
            nvm: nvm_energy(obj, dev),
        };
        est.total_dram += e.dram;
        est.total_nvm += e.nvm;
        est.per_object.insert(obj.id.clone(), e);
    }
    est
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obj(size: f64, lifetime: f64, av: f64, ndc: f64) -> ObjectProfile {
        ObjectProfile {
            id: "o".into(),
            size,
            alloc_time: 0.0,
            dealloc_time: lifetime,
            accessed_volume: av,
            llc_misses: 0.0,
            dirty_blocks: ndc,
            llc_mpki: None,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn dram_worked_example() {
        // 3.07*1024 + 1.19*1024 + (0.35/0.064)*4096*1
        let e = dram_energy(&obj(4096.0, 1.0, 1024.0, 0.0), &DeviceSpec::testbed1());
        assert!(rel(e, 26762.24) < 1e-12, "{e}");
    }

    #[test]
    fn nvm_worked_example() {
        // 2.68*1024 + 1.00*1024 + 2.83*2*64
        let e = nvm_energy(&obj(4096.0, 1.0, 1024.0, 2.0), &DeviceSpec::testbed1());
        assert!(rel(e, 4130.56) < 1e-12, "{e}");
    }

    #[test]
    fn zero_activity_costs_nothing() {
        let dev = DeviceSpec::testbed1();
        // size must be positive for a valid profile; the refresh term is what remains
        let o = obj(1.0, 1.0, 0.0, 0.0);
        assert_eq!(nvm_energy(&o, &dev), 0.0);
        assert_eq!(dram_energy(&o, &dev), dev.dram_refresh_rate());
        let mut raw = o.clone();
        raw.size = 0.0;
        assert_eq!(dram_energy(&raw, &dev), 0.0);
    }

    #[test]
    fn nvm_ignores_lifetime() {
        let dev = DeviceSpec::testbed1();
        let a = obj(4096.0, 1.0, 1024.0, 3.0);
        let b = obj(4096.0, 50.0, 1024.0, 3.0);
        assert_eq!(nvm_energy(&a, &dev), nvm_energy(&b, &dev));
        assert!(dram_energy(&b, &dev) > dram_energy(&a, &dev));
    }

    #[test]
    fn doubling_access_doubles_access_terms() {
        let dev = DeviceSpec::testbed1();
        let refresh = dev.dram_refresh_rate() * 4096.0 * 2.0;
        let one = dram_energy(&obj(4096.0, 2.0, 1000.0, 0.0), &dev) - refresh;
        let two = dram_energy(&obj(4096.0, 2.0, 2000.0, 0.0), &dev) - refresh;
        assert!(rel(two, 2.0 * one) < 1e-12);
    }

    #[test]
    fn raw_refresh_convention_is_recoverable() {
        let mut dev = DeviceSpec::testbed1();
        dev.refresh_period_s = 1.0;
        let e = dram_energy(&obj(4096.0, 1.0, 1024.0, 0.0), &dev);
        assert!(rel(e, 3.07 * 1024.0 + 1.19 * 1024.0 + 0.35 * 4096.0) < 1e-12);
    }

    #[test]
    fn estimate_all_totals() {
        let dev = DeviceSpec::testbed1();
        let empty = estimate_all(&ProfileSet::default(), &dev);
        assert_eq!((empty.total_dram, empty.total_nvm), (0.0, 0.0));

        let o = obj(4096.0, 1.0, 1024.0, 2.0);
        let set = ProfileSet::new("", None, vec![o.clone()]).unwrap();
        let est = estimate_all(&set, &dev);
        assert_eq!(est.total_dram, dram_energy(&o, &dev));
        assert_eq!(est.total_nvm, nvm_energy(&o, &dev));
        assert_eq!(est.get("o").unwrap().nvm, est.total_nvm);
    }
}
