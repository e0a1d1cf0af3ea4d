//! Seeded synthetic profile generator.
//!
//! Sizes follow a two-group skew: the `top_count` "hot" objects share
//! `top_size_share` of the total footprint and the rest share the remainder.
//! All byte and count fields are whole numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ObjectProfile, ProfileSet};

#[derive(Debug, Error, PartialEq)]
pub enum GeneratorError {
    #[error("object count must be positive")]
    NoObjects,
    #[error("infeasible skew: {0}")]
    Skew(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub count: usize,
    /// Number of objects in the large group.
    pub top_count: usize,
    /// Fraction of total size the large group holds, in `(0, 1]`.
    pub top_size_share: f64,
    /// Approximate footprint of the small group is `(1 - share) * total`.
    pub total_size_bytes: f64,
    /// Application run length; lifetimes fall inside `[0, duration]`.
    pub duration_s: f64,
    /// Accessed volume per byte of object size, drawn uniformly.
    pub passes: (f64, f64),
    /// Fraction of accessed cache blocks that miss the LLC.
    pub miss_rate: (f64, f64),
    /// Fraction of LLC misses that leave a dirty block behind.
    pub dirty_fraction: (f64, f64),
    /// LLC MPKI range; `None` leaves the field empty.
    pub mpki: Option<(f64, f64)>,
    pub cache_block_bytes: f64,
    pub workload_label: String,
    pub workload_size: Option<f64>,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            count: 14,
            top_count: 5,
            top_size_share: 0.99,
            total_size_bytes: 1024.0 * 1024.0 * 1024.0,
            duration_s: 60.0,
            passes: (0.5, 40.0),
            miss_rate: (0.01, 0.6),
            dirty_fraction: (0.0, 0.5),
            mpki: Some((0.0, 0.1)),
            cache_block_bytes: 64.0,
            workload_label: "synthetic".into(),
            workload_size: None,
        }
    }
}

impl GeneratorSpec {
    fn check(&self) -> Result<(), GeneratorError> {
        if self.count == 0 {
            return Err(GeneratorError::NoObjects);
        }
        let share = self.top_size_share;
        if !(share > 0.0 && share <= 1.0) {
            return Err(GeneratorError::Skew(format!(
                "share {share} outside (0, 1]"
            )));
        }
        if self.top_count == 0 || self.top_count > self.count {
            return Err(GeneratorError::Skew(format!(
                "top_count {} must be in 1..={}",
                self.top_count, self.count
            )));
        }
        if self.top_count == self.count && share < 1.0 {
            return Err(GeneratorError::Skew(
                "all objects are in the large group but share < 1".into(),
            ));
        }
        if self.top_count < self.count && share >= 1.0 {
            return Err(GeneratorError::Skew(
                "share of 1 leaves nothing for the small group".into(),
            ));
        }
        let positive = [
            ("total_size_bytes", self.total_size_bytes),
            ("duration_s", self.duration_s),
            ("cache_block_bytes", self.cache_block_bytes),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeneratorError::Parameter(format!(
                    "{name} must be positive"
                )));
            }
        }
        let ranges = [
            ("passes", Some(self.passes)),
            ("miss_rate", Some(self.miss_rate)),
            ("dirty_fraction", Some(self.dirty_fraction)),
            ("mpki", self.mpki),
        ];
        for (name, r) in ranges {
            if let Some((lo, hi)) = r {
                if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                    return Err(GeneratorError::Parameter(format!(
                        "{name} range [{lo}, {hi}]"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn draw(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Distributes `total` bytes over `n` objects with random weights in `[1, 4)`.
fn split(rng: &mut ChaCha8Rng, n: usize, total: f64, round_up: bool) -> Vec<f64> {
    let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..4.0)).collect();
    let sum: f64 = weights.iter().sum();
    weights
        .iter()
        .map(|w| {
            let v = total * w / sum;
            let v = if round_up { v.ceil() } else { v.floor() };
            v.max(1.0)
        })
        .collect()
}

/// Generates a deterministic profile set for `seed`.
pub fn generate_synthetic(spec: &GeneratorSpec, seed: u64) -> Result<ProfileSet, GeneratorError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let small_n = spec.count - spec.top_count;
    let small = if small_n > 0 {
        split(
            &mut rng,
            small_n,
            (1.0 - spec.top_size_share) * spec.total_size_bytes,
            false,
        )
    } else {
        Vec::new()
    };
    let small_total: f64 = small.iter().sum();
    let top_total = if small_n > 0 {
        (small_total * spec.top_size_share / (1.0 - spec.top_size_share)).ceil()
    } else {
        spec.total_size_bytes
    };
    let top = split(&mut rng, spec.top_count, top_total, true);

    // interleave the groups so the large objects are not all at the front
    let mut sizes: Vec<f64> = top.into_iter().chain(small).collect();
    for i in (1..sizes.len()).rev() {
        let j = rng.gen_range(0..=i);
        sizes.swap(i, j);
    }

    let mut objects = Vec::with_capacity(spec.count);
    for (idx, size) in sizes.into_iter().enumerate() {
        let alloc = (rng.gen_range(0.0..0.5) * spec.duration_s * 1e3).round() / 1e3;
        let remaining = spec.duration_s - alloc;
        let lifetime = ((rng.gen_range(0.05..1.0) * remaining * 1e3).round() / 1e3).max(1e-3);
        let accessed = (size * draw(&mut rng, spec.passes)).round();
        let blocks = (accessed / spec.cache_block_bytes).ceil();
        let misses = (blocks * draw(&mut rng, spec.miss_rate)).round();
        let dirty = (misses * draw(&mut rng, spec.dirty_fraction)).round();
        let mpki = spec.mpki.map(|r| (draw(&mut rng, r) * 1e6).round() / 1e6);
        let tag: u32 = rng.gen();
        objects.push(ObjectProfile {
            id: format!("cs{idx:03}-{tag:08x}"),
            size,
            alloc_time: alloc,
            dealloc_time: alloc + lifetime,
            accessed_volume: accessed,
            llc_misses: misses,
            dirty_blocks: dirty,
            llc_mpki: mpki,
        });
    }

    let set = ProfileSet {
        workload_label: spec.workload_label.clone(),
        workload_size: spec.workload_size,
        objects,
    };
    debug_assert!(set.validate().is_ok());
    Ok(set)
}
