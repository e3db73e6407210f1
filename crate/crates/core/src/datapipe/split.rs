//! Subject-level stratified train/validation/test assignment.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Group;
use crate::{Error, Result};

pub const DEFAULT_RATIOS: [f64; 3] = [0.8, 0.1, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Invalid(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub seed: u64,
    pub ratios: [f64; 3],
    assignment: BTreeMap<String, (Group, Split)>,
}

/// Hamilton apportionment of `n` items; fractional ties go to the later split.
fn largest_remainder(n: usize, ratios: [f64; 3]) -> [usize; 3] {
    let total: f64 = ratios.iter().sum();
    let quotas = ratios.map(|r| n as f64 * r / total);
    let mut counts = quotas.map(|q| q.floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(b.cmp(&a))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

pub fn stratified_subject_split(
    subjects: &[(String, Group)],
    ratios: [f64; 3],
    seed: u64,
) -> Result<SplitManifest> {
    if ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::Invalid(format!("split ratios must be positive, got {ratios:?}")));
    }
    let mut assignment = BTreeMap::new();
    for (id, g) in subjects {
        if assignment.insert(id.clone(), (*g, Split::Train)).is_some() {
            return Err(Error::Invalid(format!("duplicate subject id {id:?}")));
        }
    }
    for group in Group::BOTH {
        // Sorted ids make the result independent of input order.
        let mut ids: Vec<&String> = subjects
            .iter()
            .filter(|(_, g)| *g == group)
            .map(|(id, _)| id)
            .collect();
        ids.sort();
        let counts = largest_remainder(ids.len(), ratios);
        if counts.contains(&0) {
            return Err(Error::Invalid(format!(
                "{} subjects with label {group} cannot populate train/val/test at ratios {ratios:?} (got {counts:?})",
                ids.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(group.as_u8() as u64 + 1);
        ids.shuffle(&mut rng);
        let mut it = ids.into_iter();
        for (split, &count) in Split::ALL.iter().zip(&counts) {
            for id in it.by_ref().take(count) {
                assignment.get_mut(id).unwrap().1 = *split;
            }
        }
    }
    Ok(SplitManifest {
        seed,
        ratios,
        assignment,
    })
}

impl SplitManifest {
    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn split_of(&self, subject_id: &str) -> Option<Split> {
        self.assignment.get(subject_id).map(|&(_, s)| s)
    }

    pub fn label_of(&self, subject_id: &str) -> Option<Group> {
        self.assignment.get(subject_id).map(|&(g, _)| g)
    }

    /// `(subject_id, label, split)` in subject-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, Group, Split)> {
        self.assignment.iter().map(|(id, &(g, s))| (id.as_str(), g, s))
    }

    pub fn subjects(&self, split: Split) -> Vec<&str> {
        self.iter().filter(|&(_, _, s)| s == split).map(|(id, _, _)| id).collect()
    }

    /// Per-split subject counts for one label, ordered train/val/test.
    pub fn counts(&self, group: Group) -> [usize; 3] {
        let mut c = [0; 3];
        for (_, g, s) in self.iter() {
            if g == group {
                c[s as usize] += 1;
            }
        }
        c
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("#seed={}\n", self.seed);
        for (id, g, s) in self.iter() {
            out.push_str(&format!("{id},{g},{s}\n"));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty split manifest".into()))?;
        let seed = header
            .trim()
            .strip_prefix("#seed=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Invalid(format!("manifest header {header:?} is not #seed=<n>")))?;
        let mut assignment = BTreeMap::new();
        for line in lines {
            let parts: Vec<&str> = line.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Invalid(format!("manifest line {line:?}")));
            }
            let g: Group = parts[1].parse()?;
            let s: Split = parts[2].parse()?;
            if assignment.insert(parts[0].trim().to_string(), (g, s)).is_some() {
                return Err(Error::Invalid(format!("subject {} listed twice", parts[0])));
            }
        }
        Ok(SplitManifest {
            seed,
            ratios: DEFAULT_RATIOS,
            assignment,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
