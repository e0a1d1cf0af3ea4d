//! Workload scaling: per-object average gradients of each access pattern
//! with respect to the workload size, and linear extrapolation from them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::{ObjectProfile, ProfileSet};

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("at least two profile sets are required, got {0}")]
    TooFewSets(usize),
    #[error("profile set {0} has no workload size")]
    MissingWorkloadSize(usize),
    #[error("workload sizes must be strictly increasing ({prev} then {next})")]
    NotIncreasing { prev: f64, next: f64 },
    #[error("object `{id}` is missing from profile set {set}")]
    MissingObject { id: String, set: usize },
    #[error("no scaling gradients for object `{0}`")]
    MissingGradient(String),
    #[error("gradient for object `{id}` pattern {pattern} is not finite")]
    NonFinite { id: String, pattern: Pattern },
    #[error("object `{id}`: extrapolated {pattern} is not positive")]
    Degenerate { id: String, pattern: Pattern },
}

/// Access patterns that scale with the workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    Size,
    AccessedVolume,
    LlcMisses,
    DirtyBlocks,
    Lifetime,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::Size,
        Pattern::AccessedVolume,
        Pattern::LlcMisses,
        Pattern::DirtyBlocks,
        Pattern::Lifetime,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Size => "size",
            Pattern::AccessedVolume => "accessed_volume",
            Pattern::LlcMisses => "llc_misses",
            Pattern::DirtyBlocks => "dirty_blocks",
            Pattern::Lifetime => "lifetime",
        }
    }

    pub fn value(self, obj: &ObjectProfile) -> f64 {
        match self {
            Pattern::Size => obj.size,
            Pattern::AccessedVolume => obj.accessed_volume,
            Pattern::LlcMisses => obj.llc_misses,
            Pattern::DirtyBlocks => obj.dirty_blocks,
            Pattern::Lifetime => obj.lifetime(),
        }
    }
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Average gradient of every [`Pattern`] for one object, in pattern units per
/// workload unit.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Gradients {
    pub size: f64,
    pub accessed_volume: f64,
    pub llc_misses: f64,
    pub dirty_blocks: f64,
    pub lifetime: f64,
}

impl Gradients {
    pub fn get(&self, p: Pattern) -> f64 {
        match p {
            Pattern::Size => self.size,
            Pattern::AccessedVolume => self.accessed_volume,
            Pattern::LlcMisses => self.llc_misses,
            Pattern::DirtyBlocks => self.dirty_blocks,
            Pattern::Lifetime => self.lifetime,
        }
    }

    pub fn set(&mut self, p: Pattern, v: f64) {
        match p {
            Pattern::Size => self.size = v,
            Pattern::AccessedVolume => self.accessed_volume = v,
            Pattern::LlcMisses => self.llc_misses = v,
            Pattern::DirtyBlocks => self.dirty_blocks = v,
            Pattern::Lifetime => self.lifetime = v,
        }
    }

    /// Objects whose patterns do not change with the workload.
    pub fn is_fixed(&self) -> bool {
        Pattern::ALL.iter().all(|&p| self.get(p) == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScalingVector {
    pub gradients: BTreeMap<String, Gradients>,
}

impl ScalingVector {
    pub fn get(&self, id: &str) -> Option<&Gradients> {
        self.gradients.get(id)
    }
}

/// Mean of the consecutive difference quotients of one pattern series.
///
/// `points` are `(workload_size, value)` pairs in increasing workload order.
pub fn average_gradient(points: &[(f64, f64)]) -> f64 {
    let n = points.len();
    debug_assert!(n >= 2);
    let sum: f64 = points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .sum();
    sum / (n - 1) as f64
}

/// Derives the scaling vector from profiles of the same application at
/// increasing workload sizes. Objects are taken from the first set; each
/// must appear (by id) in every other set.
pub fn derive_scaling_vector(sets: &[ProfileSet]) -> Result<ScalingVector, ScalingError> {
    if sets.len() < 2 {
        return Err(ScalingError::TooFewSets(sets.len()));
    }
    let mut sizes = Vec::with_capacity(sets.len());
    for (i, s) in sets.iter().enumerate() {
        let w = s
            .workload_size
            .ok_or(ScalingError::MissingWorkloadSize(i))?;
        if let Some(&prev) = sizes.last() {
            if !(w > prev) {
                return Err(ScalingError::NotIncreasing { prev, next: w });
            }
        }
        sizes.push(w);
    }

    let mut vector = ScalingVector::default();
    for obj in &sets[0].objects {
        let series: Vec<&ObjectProfile> = sets
            .iter()
            .enumerate()
            .map(|(i, s)| {
                s.get(&obj.id).ok_or_else(|| ScalingError::MissingObject {
                    id: obj.id.clone(),
                    set: i,
                })
            })
            .collect::<Result<_, _>>()?;
        let mut grads = Gradients::default();
        for p in Pattern::ALL {
            let points: Vec<(f64, f64)> = sizes
                .iter()
                .zip(&series)
                .map(|(&w, o)| (w, p.value(o)))
                .collect();
            let g = average_gradient(&points);
            if !g.is_finite() {
                return Err(ScalingError::NonFinite {
                    id: obj.id.clone(),
                    pattern: p,
                });
            }
            grads.set(p, g);
        }
        vector.gradients.insert(obj.id.clone(), grads);
    }
    Ok(vector)
}

/// Extrapolates `profiles` (measured at its own workload size) to
/// `target_workload_size` along the gradients in `vector`.
///
/// Every pattern moves linearly and is clamped below at zero. Allocation
/// times are kept; deallocation times follow the extrapolated lifetime.
/// Clamping an object's size or lifetime to zero would produce an invalid
/// profile and is reported as [`ScalingError::Degenerate`].
pub fn extrapolate(
    profiles: &ProfileSet,
    vector: &ScalingVector,
    target_workload_size: f64,
) -> Result<ProfileSet, ScalingError> {
    let base = profiles
        .workload_size
        .ok_or(ScalingError::MissingWorkloadSize(0))?;
    let delta = target_workload_size - base;
    let mut objects = Vec::with_capacity(profiles.len());
    for obj in &profiles.objects {
        let g = vector
            .get(&obj.id)
            .ok_or_else(|| ScalingError::MissingGradient(obj.id.clone()))?;
        let step = |p: Pattern| (p.value(obj) + g.get(p) * delta).max(0.0);
        let mut out = obj.clone();
        if delta != 0.0 {
            out.size = step(Pattern::Size);
            out.accessed_volume = step(Pattern::AccessedVolume);
            out.llc_misses = step(Pattern::LlcMisses);
            out.dirty_blocks = step(Pattern::DirtyBlocks);
            out.dealloc_time = obj.alloc_time + step(Pattern::Lifetime);
        }
        for p in [Pattern::Size, Pattern::Lifetime] {
            if !(p.value(&out) > 0.0) {
                return Err(ScalingError::Degenerate {
                    id: obj.id.clone(),
                    pattern: p,
                });
            }
        }
        objects.push(out);
    }
    Ok(ProfileSet {
        workload_label: profiles.workload_label.clone(),
        workload_size: Some(target_workload_size),
        objects,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MB: f64 = 1024.0 * 1024.0;

    fn obj(id: &str, size: f64) -> ObjectProfile {
        ObjectProfile {
            id: id.into(),
            size,
            alloc_time: 0.0,
            dealloc_time: 2.0,
            accessed_volume: 4.0 * size,
            llc_misses: 1000.0,
            dirty_blocks: 100.0,
            llc_mpki: Some(0.1),
        }
    }

    fn set(w: f64, objects: Vec<ObjectProfile>) -> ProfileSet {
        ProfileSet::new("t", Some(w), objects).unwrap()
    }

    #[test]
    fn ten_nineteen_twentyfive_megabytes() {
        let sets = [
            set(1.0, vec![obj("a", 10.0 * MB)]),
            set(2.0, vec![obj("a", 19.0 * MB)]),
            set(3.0, vec![obj("a", 25.0 * MB)]),
        ];
        let v = derive_scaling_vector(&sets).unwrap();
        assert_eq!(v.get("a").unwrap().size, 7.5 * MB);
    }

    #[test]
    fn identical_sets_are_fixed() {
        let sets = [set(1.0, vec![obj("a", MB)]), set(5.0, vec![obj("a", MB)])];
        let v = derive_scaling_vector(&sets).unwrap();
        assert!(v.get("a").unwrap().is_fixed());
    }

    #[test]
    fn derive_rejects_bad_inputs() {
        let one = set(1.0, vec![obj("a", MB)]);
        assert_eq!(
            derive_scaling_vector(std::slice::from_ref(&one)),
            Err(ScalingError::TooFewSets(1))
        );
        let missing = set(2.0, vec![obj("b", MB)]);
        assert_eq!(
            derive_scaling_vector(&[one.clone(), missing]),
            Err(ScalingError::MissingObject {
                id: "a".into(),
                set: 1
            })
        );
        let same = set(1.0, vec![obj("a", MB)]);
        assert!(matches!(
            derive_scaling_vector(&[one.clone(), same]),
            Err(ScalingError::NotIncreasing { .. })
        ));
        let mut unsized_set = one.clone();
        unsized_set.workload_size = None;
        assert_eq!(
            derive_scaling_vector(&[one, unsized_set]),
            Err(ScalingError::MissingWorkloadSize(1))
        );
    }

    #[test]
    fn extrapolate_one_step() {
        let base = set(3.0, vec![obj("a", 25.0 * MB)]);
        let mut v = ScalingVector::default();
        v.gradients.insert(
            "a".into(),
            Gradients {
                size: 7.5 * MB,
                ..Default::default()
            },
        );
        let out = extrapolate(&base, &v, 4.0).unwrap();
        assert_eq!(out.objects[0].size, 32.5 * MB);
        assert_eq!(out.workload_size, Some(4.0));
        assert_eq!(out.objects[0].alloc_time, 0.0);
    }

    #[test]
    fn extrapolate_to_base_is_identity() {
        let base = set(3.0, vec![obj("a", 25.0 * MB), obj("b", MB)]);
        let mut v = ScalingVector::default();
        for id in ["a", "b"] {
            v.gradients.insert(
                id.into(),
                Gradients {
                    size: 0.3,
                    accessed_volume: -1.7,
                    llc_misses: 11.0,
                    dirty_blocks: 0.1,
                    lifetime: 0.01,
                },
            );
        }
        assert_eq!(extrapolate(&base, &v, 3.0).unwrap(), base);
    }

    #[test]
    fn negative_gradients_clamp_at_zero() {
        let base = set(2.0, vec![obj("a", MB)]);
        let mut v = ScalingVector::default();
        v.gradients.insert(
            "a".into(),
            Gradients {
                llc_misses: -5000.0,
                dirty_blocks: -1.0,
                ..Default::default()
            },
        );
        let out = extrapolate(&base, &v, 3.0).unwrap();
        assert_eq!(out.objects[0].llc_misses, 0.0);
        assert_eq!(out.objects[0].dirty_blocks, 99.0);
    }

    #[test]
    fn vanishing_size_or_lifetime_is_degenerate() {
        let base = set(2.0, vec![obj("a", MB)]);
        let mut v = ScalingVector::default();
        v.gradients.insert(
            "a".into(),
            Gradients {
                lifetime: -3.0,
                ..Default::default()
            },
        );
        assert_eq!(
            extrapolate(&base, &v, 3.0),
            Err(ScalingError::Degenerate {
                id: "a".into(),
                pattern: Pattern::Lifetime
            })
        );
        assert_eq!(
            extrapolate(&base, &ScalingVector::default(), 3.0),
            Err(ScalingError::MissingGradient("a".into()))
        );
    }
}
