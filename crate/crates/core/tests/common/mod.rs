//! Random instances and brute-force reference solutions. Everything here is
//! computed from the raw device constants, not through the library's energy
//! or program-building code.
#![allow(dead_code)]

use hmplace_core::device::DeviceSpec;
use hmplace_core::placement::Device;
use hmplace_core::profile::{ObjectProfile, ProfileSet};
use hmplace_core::synth::{generate_synthetic, GeneratorSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const MIB: f64 = 1024.0 * 1024.0;
pub const TOL: f64 = 1e-9;

pub fn le(value: f64, limit: f64) -> bool {
    value <= limit + TOL * limit.abs().max(value.abs()).max(1.0)
}

pub fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL * a.abs().max(b.abs()).max(1.0)
}

/// A synthetic profile set with `2..=max_n` objects and device capacities
/// drawn as fractions of the footprint, large enough for the minor objects.
pub fn instance(seed: u64, max_n: usize) -> (ProfileSet, DeviceSpec) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let count = rng.gen_range(2..=max_n);
    let top_count = rng.gen_range(1..count);
    let spec = GeneratorSpec {
        count,
        top_count,
        top_size_share: rng.gen_range(0.5..0.95),
        total_size_bytes: rng.gen_range(64.0..4096.0) * MIB,
        duration_s: rng.gen_range(1.0..120.0),
        passes: (0.01, rng.gen_range(1.0..60.0)),
        ..Default::default()
    };
    let set = generate_synthetic(&spec, seed).expect("valid generator spec");
    let minor: f64 = set
        .objects
        .iter()
        .filter(|o| o.accessed_volume <= MIB)
        .map(|o| o.size)
        .sum();
    let major = set.total_size() - minor;
    let base = if rng.gen_bool(0.5) {
        DeviceSpec::testbed1()
    } else {
        DeviceSpec::testbed2()
    };
    let dev = base.with_capacities(
        minor + rng.gen_range(0.0..1.2) * major,
        rng.gen_range(0.1..1.2) * major,
    );
    (set, dev)
}

pub fn de(o: &ObjectProfile, dev: &DeviceSpec) -> f64 {
    (dev.dram_act_pre + dev.dram_rw) * o.accessed_volume
        + dev.dram_ref / dev.refresh_period_s * o.size * (o.dealloc_time - o.alloc_time)
}

pub fn ne(o: &ObjectProfile, dev: &DeviceSpec) -> f64 {
    (dev.nvm_act_pre + dev.nvm_rba) * o.accessed_volume
        + dev.nvm_wb * o.dirty_blocks * dev.cache_block_bytes
}

pub fn majors(set: &ProfileSet) -> Vec<&ObjectProfile> {
    set.objects
        .iter()
        .filter(|o| o.accessed_volume > MIB)
        .collect()
}

/// Every optimal assignment of the major objects (DRAM = true) under energy
/// ratio `ratio`, with its latency. Empty when infeasible.
pub fn static_optima(set: &ProfileSet, dev: &DeviceSpec, ratio: f64) -> (f64, Vec<Vec<bool>>) {
    let maj = majors(set);
    let minor_bytes: f64 = set
        .objects
        .iter()
        .filter(|o| o.accessed_volume <= MIB)
        .map(|o| o.size)
        .sum();
    let budget = ratio * maj.iter().map(|o| de(o, dev)).sum::<f64>();
    let mut scored = Vec::new();
    for mask in 0u32..(1 << maj.len()) {
        let x: Vec<bool> = (0..maj.len()).map(|i| mask >> i & 1 == 1).collect();
        let (mut dram, mut nvm, mut energy, mut latency) = (minor_bytes, 0.0, 0.0, 0.0);
        for (o, &d) in maj.iter().zip(&x) {
            if d {
                dram += o.size;
                energy += de(o, dev);
                latency += o.llc_misses * dev.dram_latency_ns;
            } else {
                nvm += o.size;
                energy += ne(o, dev);
                latency += o.llc_misses * dev.nvm_latency_ns;
            }
        }
        if le(dram, dev.dram_capacity_bytes)
            && le(nvm, dev.nvm_capacity_bytes)
            && le(energy, budget)
        {
            scored.push((latency, x));
        }
    }
    optima(scored)
}

fn optima(scored: Vec<(f64, Vec<bool>)>) -> (f64, Vec<Vec<bool>>) {
    let best = scored.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let ties = scored
        .into_iter()
        .filter(|s| close(s.0, best))
        .map(|s| s.1)
        .collect();
    (best, ties)
}

pub struct MigrationCase {
    pub current: Vec<Device>,
    pub time: f64,
    pub ratio: f64,
    pub strict: bool,
}

/// Whole-life energy and latency of a major object under a move decision,
/// written out term by term.
pub fn migration_terms(
    o: &ObjectProfile,
    dev: &DeviceSpec,
    cur: Device,
    t: f64,
    moved: bool,
) -> (f64, f64) {
    let (d, n) = (de(o, dev), ne(o, dev));
    let (ld, ln) = (
        dev.dram_latency_ns * o.llc_misses,
        dev.nvm_latency_ns * o.llc_misses,
    );
    if !moved {
        return match cur {
            Device::Dram => (d, ld),
            Device::Nvm => (n, ln),
        };
    }
    let life = o.dealloc_time - o.alloc_time;
    let before = (t - o.alloc_time) / life;
    let after = (o.dealloc_time - t) / life;
    let blocks = (o.size / dev.cache_block_bytes).ceil();
    let dram_write = dev.dram_write_latency_ns.unwrap_or(dev.dram_latency_ns);
    let nvm_write = dev.nvm_write_latency_ns.unwrap_or(dev.nvm_latency_ns);
    let access = (dev.dram_act_pre + dev.dram_rw + dev.nvm_act_pre + dev.nvm_rba) * o.size;
    match cur {
        Device::Dram => {
            let ct = blocks * (dev.dram_latency_ns + nvm_write);
            let ce = access + dev.dram_ref / dev.refresh_period_s * o.size * ct / 1e9;
            (d * before + ce + n * after, ld * before + ct + ln * after)
        }
        Device::Nvm => {
            let ct = blocks * (dev.nvm_latency_ns + dram_write);
            let ce = access + dev.dram_ref / dev.refresh_period_s * o.size * ct / 1e9;
            (n * before + ce + d * after, ln * before + ct + ld * after)
        }
    }
}

/// Brute force over move vectors. Objects allocated at `t` are candidates;
/// with `allow_dead`, so are objects freed exactly at `t`.
/// Returns the best objective and every tied optimum as a per-major move
/// vector (empty when infeasible).
pub fn migration_optima(
    set: &ProfileSet,
    dev: &DeviceSpec,
    case: &MigrationCase,
    allow_dead: bool,
) -> (f64, Vec<Vec<bool>>) {
    let maj = majors(set);
    let t = case.time;
    let live = |o: &ObjectProfile| o.alloc_time <= t && t < o.dealloc_time;
    let movable: Vec<usize> = (0..maj.len())
        .filter(|&i| {
            live(maj[i]) || (allow_dead && maj[i].alloc_time <= t && t <= maj[i].dealloc_time)
        })
        .collect();
    let minor_live: f64 = set
        .objects
        .iter()
        .filter(|o| o.accessed_volume <= MIB && live(o))
        .map(|o| o.size)
        .sum();
    let requirement = if case.strict {
        case.ratio * maj.iter().map(|o| de(o, dev)).sum::<f64>()
    } else {
        maj.iter()
            .zip(&case.current)
            .map(|(o, &c)| migration_terms(o, dev, c, t, false).0)
            .sum()
    };
    let mut scored = Vec::new();
    for mask in 0u32..(1 << movable.len()) {
        let mut moved = vec![false; maj.len()];
        for (b, &i) in movable.iter().enumerate() {
            moved[i] = mask >> b & 1 == 1;
        }
        let (mut energy, mut latency, mut dram, mut nvm) = (0.0, 0.0, minor_live, 0.0);
        for (i, o) in maj.iter().enumerate() {
            let (e, l) = migration_terms(o, dev, case.current[i], t, moved[i]);
            energy += e;
            latency += l;
            if live(o) {
                let on = if moved[i] {
                    case.current[i].other()
                } else {
                    case.current[i]
                };
                match on {
                    Device::Dram => dram += o.size,
                    Device::Nvm => nvm += o.size,
                }
            }
        }
        if le(dram, dev.dram_capacity_bytes)
            && le(nvm, dev.nvm_capacity_bytes)
            && le(energy, requirement)
        {
            scored.push((latency, moved));
        }
    }
    optima(scored)
}

/// A random current placement and request for `set`.
pub fn migration_case(set: &ProfileSet, seed: u64) -> MigrationCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
    let current = majors(set)
        .iter()
        .map(|_| Device::from_bit(rng.gen_bool(0.5)))
        .collect();
    let end = set
        .objects
        .iter()
        .map(|o| o.dealloc_time)
        .fold(0.0, f64::max);
    let time = if rng.gen_bool(0.2) {
        // land exactly on a deallocation
        set.objects[rng.gen_range(0..set.len())].dealloc_time
    } else {
        rng.gen_range(0.0..end)
    };
    MigrationCase {
        current,
        time,
        ratio: rng.gen_range(0.5..1.1),
        strict: rng.gen_bool(0.7),
    }
}
