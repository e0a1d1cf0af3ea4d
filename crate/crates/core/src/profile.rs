//! Per-object access profiles and the `hmms-profile-v1` text format.
//!
//! A profile file looks like this:
//!
//! ```text
//! hmms-profile-v1
//! # workload_label: bfs
//! # workload_size: 3
//! id,size_bytes,alloc_s,dealloc_s,accessed_bytes,llc_misses,dirty_blocks,llc_mpki
//! 9f2c01,1048576,0,1,1048576,100,10,0.03
//! ```
//!
//! The `llc_mpki` column is optional; an empty cell means "not measured".
//! Blank lines and `#` lines other than the two metadata keys are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROFILE_FORMAT: &str = "hmms-profile-v1";

const COLUMNS: [&str; 8] = [
    "id",
    "size_bytes",
    "alloc_s",
    "dealloc_s",
    "accessed_bytes",
    "llc_misses",
    "dirty_blocks",
    "llc_mpki",
];

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("object `{id}`: {msg}")]
    Invalid { id: String, msg: String },
    #[error("duplicate object id `{0}`")]
    DuplicateId(String),
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Access-pattern record of one heap object, keyed by its allocation-site hash.
///
/// Sizes and counts are held as `f64` so extrapolated profiles (which are
/// generally fractional) use the same type as measured ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectProfile {
    pub id: String,
    pub size: f64,
    pub alloc_time: f64,
    pub dealloc_time: f64,
    pub accessed_volume: f64,
    pub llc_misses: f64,
    pub dirty_blocks: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llc_mpki: Option<f64>,
}

impl ObjectProfile {
    pub fn lifetime(&self) -> f64 {
        self.dealloc_time - self.alloc_time
    }

    /// Checks the per-object invariants.
    pub fn validate(&self) -> Result<(), ProfileError> {
        let fail = |msg: String| {
            Err(ProfileError::Invalid {
                id: self.id.clone(),
                msg,
            })
        };
        if self.id.is_empty() {
            return fail("empty id".into());
        }
        let fields = [
            ("size_bytes", self.size),
            ("alloc_s", self.alloc_time),
            ("dealloc_s", self.dealloc_time),
            ("accessed_bytes", self.accessed_volume),
            ("llc_misses", self.llc_misses),
            ("dirty_blocks", self.dirty_blocks),
        ];
        for (name, v) in fields {
            if !v.is_finite() {
                return fail(format!("{name} is not finite"));
            }
        }
        if self.size <= 0.0 {
            return fail(format!("size_bytes must be positive, got {}", self.size));
        }
        for (name, v) in &fields[4..] {
            if *v < 0.0 {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.lifetime() > 0.0) {
            return fail(format!(
                "lifetime must be positive (alloc_s {} >= dealloc_s {})",
                self.alloc_time, self.dealloc_time
            ));
        }
        if let Some(m) = self.llc_mpki {
            if !m.is_finite() || m < 0.0 {
                return fail(format!("llc_mpki must be finite and non-negative, got {m}"));
            }
        }
        Ok(())
    }

    /// Whether the object is allocated at time `t` (half-open `[alloc, dealloc)`).
    pub fn is_live_at(&self, t: f64) -> bool {
        self.alloc_time <= t && t < self.dealloc_time
    }
}

/// An ordered collection of object profiles for one workload.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileSet {
    pub workload_label: String,
    pub workload_size: Option<f64>,
    pub objects: Vec<ObjectProfile>,
}

impl ProfileSet {
    /// Builds a set, validating every object and id uniqueness.
    pub fn new(
        workload_label: impl Into<String>,
        workload_size: Option<f64>,
        objects: Vec<ObjectProfile>,
    ) -> Result<Self, ProfileError> {
        let set = ProfileSet {
            workload_label: workload_label.into(),
            workload_size,
            objects,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<(), ProfileError> {
        let mut seen = HashSet::with_capacity(self.objects.len());
        for obj in &self.objects {
            obj.validate()?;
            if !seen.insert(obj.id.as_str()) {
                return Err(ProfileError::DuplicateId(obj.id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ObjectProfile> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn total_size(&self) -> f64 {
        self.objects.iter().map(|o| o.size).sum()
    }

    /// Keeps only the objects matching `keep`, preserving order and metadata.
    pub fn subset(&self, mut keep: impl FnMut(&ObjectProfile) -> bool) -> ProfileSet {
        ProfileSet {
            workload_label: self.workload_label.clone(),
            workload_size: self.workload_size,
            objects: self.objects.iter().filter(|o| keep(o)).cloned().collect(),
        }
    }

    /// Serializes to the `hmms-profile-v1` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(PROFILE_FORMAT);
        out.push('\n');
        if !self.workload_label.is_empty() {
            let _ = writeln!(out, "# workload_label: {}", self.workload_label);
        }
        if let Some(w) = self.workload_size {
            let _ = writeln!(out, "# workload_size: {w}");
        }
        out.push_str(&COLUMNS.join(","));
        out.push('\n');
        for o in &self.objects {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{},",
                o.id,
                o.size,
                o.alloc_time,
                o.dealloc_time,
                o.accessed_volume,
                o.llc_misses,
                o.dirty_blocks
            );
            if let Some(m) = o.llc_mpki {
                let _ = write!(out, "{m}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), ProfileError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: impl AsRef<Path>) -> Result<ProfileSet, ProfileError> {
        load_profiles(&fs::read_to_string(path)?)
    }
}

/// Parses a `hmms-profile-v1` stream into a validated [`ProfileSet`].
pub fn load_profiles(source: &str) -> Result<ProfileSet, ProfileError> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.find(|(_, l)| !l.is_empty()) {
        Some((_, l)) if l == PROFILE_FORMAT => {}
        Some((line, l)) => {
            return Err(ProfileError::Parse {
                line,
                msg: format!("expected format header `{PROFILE_FORMAT}`, found `{l}`"),
            })
        }
        None => {
            return Err(ProfileError::Parse {
                line: 1,
                msg: "empty profile stream".into(),
            })
        }
    }

    let mut set = ProfileSet::default();
    let mut header: Option<Vec<String>> = None;
    let mut seen = HashSet::new();

    for (line, text) in lines {
        if text.is_empty() {
            continue;
        }
        if let Some(comment) = text.strip_prefix('#') {
            if let Some((key, value)) = comment.split_once(':') {
                let value = value.trim();
                match key.trim() {
                    "workload_label" => set.workload_label = value.to_string(),
                    "workload_size" => {
                        let w = parse_number(value, line, "workload_size")?;
                        set.workload_size = Some(w);
                    }
                    _ => {}
                }
            }
            continue;
        }
        let cells: Vec<&str> = text.split(',').map(str::trim).collect();
        let Some(cols) = &header else {
            let names: Vec<String> = cells.iter().map(|c| c.to_string()).collect();
            let required = &COLUMNS[..7];
            let ok = names.len() >= 7
                && names.len() <= 8
                && names.iter().zip(COLUMNS.iter()).all(|(a, b)| a == b);
            if !ok {
                return Err(ProfileError::Parse {
                    line,
                    msg: format!(
                        "expected column header `{}[,llc_mpki]`, found `{text}`",
                        required.join(",")
                    ),
                });
            }
            header = Some(names);
            continue;
        };
        if cells.len() < 7 || cells.len() > cols.len() {
            return Err(ProfileError::Parse {
                line,
                msg: format!("expected {} fields, found {}", cols.len(), cells.len()),
            });
        }
        let obj = ObjectProfile {
            id: cells[0].to_string(),
            size: parse_number(cells[1], line, "size_bytes")?,
            alloc_time: parse_number(cells[2], line, "alloc_s")?,
            dealloc_time: parse_number(cells[3], line, "dealloc_s")?,
            accessed_volume: parse_number(cells[4], line, "accessed_bytes")?,
            llc_misses: parse_number(cells[5], line, "llc_misses")?,
            dirty_blocks: parse_number(cells[6], line, "dirty_blocks")?,
            llc_mpki: match cells.get(7) {
                None | Some(&"") => None,
                Some(v) => Some(parse_number(v, line, "llc_mpki")?),
            },
        };
        if obj.id.is_empty() {
            return Err(ProfileError::Parse {
                line,
                msg: "empty object id".into(),
            });
        }
        obj.validate()?;
        if !seen.insert(obj.id.clone()) {
            return Err(ProfileError::DuplicateId(obj.id));
        }
        set.objects.push(obj);
    }

    if header.is_none() {
        return Err(ProfileError::Parse {
            line: source.lines().count().max(1),
            msg: "missing column header".into(),
        });
    }
    Ok(set)
}

fn parse_number(cell: &str, line: usize, field: &str) -> Result<f64, ProfileError> {
    cell.parse::<f64>().map_err(|_| ProfileError::Parse {
        line,
        msg: format!("field `{field}`: `{cell}` is not a number"),
    })
}

/// Splits objects into major (`accessed_volume > threshold`) and minor ones,
/// both in input order.
pub fn filter_major(profiles: &ProfileSet, threshold: f64) -> (ProfileSet, ProfileSet) {
    let major = profiles.subset(|o| o.accessed_volume > threshold);
    let minor = profiles.subset(|o| o.accessed_volume <= threshold);
    (major, minor)
}

/// Default major-object threshold: 1 MiB of accessed volume.
pub const DEFAULT_MAJOR_THRESHOLD: f64 = 1024.0 * 1024.0;

/// Loads every workload listed in `<dir>/manifest.csv`, sorted by workload size.
///
/// The manifest has a `file,workload_size` header followed by one row per
/// profile file (paths relative to `dir`). The manifest's workload size
/// overrides any value recorded in the file itself.
pub fn load_profile_dir(dir: impl AsRef<Path>) -> Result<Vec<ProfileSet>, ProfileError> {
    let dir = dir.as_ref();
    let manifest = fs::read_to_string(dir.join("manifest.csv"))?;
    let mut sets = Vec::new();
    let mut rows = manifest
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    match rows.next() {
        Some((_, "file,workload_size")) => {}
        Some((line, l)) => {
            return Err(ProfileError::Manifest(format!(
                "line {line}: expected header `file,workload_size`, found `{l}`"
            )))
        }
        None => return Err(ProfileError::Manifest("empty manifest".into())),
    }
    for (line, row) in rows {
        let Some((file, size)) = row.split_once(',') else {
            return Err(ProfileError::Manifest(format!(
                "line {line}: expected `file,workload_size`"
            )));
        };
        let size: f64 = size.trim().parse().map_err(|_| {
            ProfileError::Manifest(format!("line {line}: bad workload size `{size}`"))
        })?;
        let mut set = ProfileSet::read_file(dir.join(file.trim()))?;
        set.workload_size = Some(size);
        sets.push(set);
    }
    sets.sort_by(|a, b| {
        a.workload_size
            .partial_cmp(&b.workload_size)
            .expect("finite sizes")
    });
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "hmms-profile-v1\n\
        id,size_bytes,alloc_s,dealloc_s,accessed_bytes,llc_misses,dirty_blocks\n\
        a,1048576,0.0,1.0,1048576,100,10\n";

    #[test]
    fn single_record_maps_fields() {
        let set = load_profiles(ONE).unwrap();
        assert_eq!(set.len(), 1);
        let o = &set.objects[0];
        assert_eq!(o.id, "a");
        assert_eq!(o.size, 1048576.0);
        assert_eq!(o.lifetime(), 1.0);
        assert_eq!(o.llc_misses, 100.0);
        assert_eq!(o.dirty_blocks, 10.0);
        assert_eq!(o.llc_mpki, None);
    }

    #[test]
    fn dealloc_before_alloc_is_rejected() {
        let text = "hmms-profile-v1\n\
            id,size_bytes,alloc_s,dealloc_s,accessed_bytes,llc_misses,dirty_blocks\n\
            a,10,1.0,0.5,10,1,1\n";
        assert!(matches!(
            load_profiles(text),
            Err(ProfileError::Invalid { .. })
        ));
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = format!("{ONE}a,10,0,1,10,1,1\n");
        assert!(matches!(load_profiles(&text), Err(ProfileError::DuplicateId(id)) if id == "a"));
    }

    #[test]
    fn malformed_record_names_its_line() {
        let text = format!("{ONE}b,ten,0,1,10,1,1\n");
        match load_profiles(&text) {
            Err(ProfileError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let short = format!("{ONE}b,10,0\n");
        assert!(matches!(
            load_profiles(&short),
            Err(ProfileError::Parse { line: 4, .. })
        ));
    }

    #[test]
    fn missing_header_is_an_error() {
        assert!(load_profiles("id,size_bytes\n").is_err());
        assert!(load_profiles("").is_err());
        assert!(load_profiles("hmms-profile-v1\n").is_err());
    }

    #[test]
    fn metadata_and_mpki_are_read() {
        let text = "hmms-profile-v1\n# workload_label: cg\n# workload_size: 2.5\n\
            id,size_bytes,alloc_s,dealloc_s,accessed_bytes,llc_misses,dirty_blocks,llc_mpki\n\
            x,1,0,1,0,0,0,0.025\ny,1,0,1,0,0,0,\n";
        let set = load_profiles(text).unwrap();
        assert_eq!(set.workload_label, "cg");
        assert_eq!(set.workload_size, Some(2.5));
        assert_eq!(set.objects[0].llc_mpki, Some(0.025));
        assert_eq!(set.objects[1].llc_mpki, None);
        assert_eq!(load_profiles(&set.to_text()).unwrap(), set);
    }

    fn with_av(id: &str, av: f64) -> ObjectProfile {
        ObjectProfile {
            id: id.into(),
            size: 1.0,
            alloc_time: 0.0,
            dealloc_time: 1.0,
            accessed_volume: av,
            llc_misses: 0.0,
            dirty_blocks: 0.0,
            llc_mpki: None,
        }
    }

    #[test]
    fn filter_major_by_accessed_volume() {
        let mb = 1024.0 * 1024.0;
        let set = ProfileSet::new(
            "",
            None,
            vec![with_av("a", 2.0 * mb), with_av("b", 0.5 * mb)],
        )
        .unwrap();
        let (major, minor) = filter_major(&set, mb);
        assert_eq!(major.objects.len(), 1);
        assert_eq!(major.objects[0].id, "a");
        assert_eq!(minor.objects[0].id, "b");

        let (major, minor) = filter_major(&set, 0.0);
        assert_eq!(major.len(), 2);
        assert!(minor.is_empty());
    }

    #[test]
    fn filter_major_at_median_splits_evenly() {
        // distinct volumes; threshold = lower median, so the upper five are strictly above it
        let avs = [7.0, 3.0, 9.0, 1.0, 5.0, 8.0, 2.0, 6.0, 10.0, 4.0];
        let set = ProfileSet::new(
            "",
            None,
            avs.iter()
                .enumerate()
                .map(|(i, &v)| with_av(&format!("o{i}"), v))
                .collect(),
        )
        .unwrap();
        let mut sorted = avs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (major, _) = filter_major(&set, sorted[4]);
        let expected = avs.iter().filter(|&&v| v > sorted[4]).count();
        assert_eq!(expected, 5);
        assert_eq!(major.len(), expected);
    }

    #[test]
    fn manifest_directory_is_sorted_by_workload() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("big.csv"), ONE).unwrap();
        fs::write(dir.path().join("small.csv"), ONE).unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "file,workload_size\nbig.csv,4\nsmall.csv,1\n",
        )
        .unwrap();
        let sets = load_profile_dir(dir.path()).unwrap();
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0].workload_size, Some(1.0));
        assert_eq!(sets[1].workload_size, Some(4.0));
    }
}
