use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::datapipe::{load_series, sliding_window_mean, Split, SplitManifest};
use crate::{Error, Group, Result, Sample3D, Series4D};

pub const COHORT_FILE: &str = "cohort.csv";
pub const COHORT_HEADER: &str = "subject_id,label,file";
pub const PARCELLATION_FILE: &str = "parcellation.vol4";
pub const TRUTH_DIR: &str = "truth";

#[derive(Debug, Clone, PartialEq)]
pub struct CohortEntry {
    pub subject_id: String,
    pub label: Group,
    /// Relative to the data directory.
    pub file: PathBuf,
}

/// The subject list of a data directory, sorted by subject id.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub dir: PathBuf,
    pub entries: Vec<CohortEntry>,
}

impl Cohort {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(COHORT_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some(COHORT_HEADER) {
            return Err(Error::Invalid(format!("{}: header must be {COHORT_HEADER:?}", path.display())));
        }
        let mut entries = Vec::new();
        for line in lines {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 3 || f[0].is_empty() {
                return Err(Error::Invalid(format!("{}: bad row {line:?}", path.display())));
            }
            entries.push(CohortEntry {
                subject_id: f[0].to_string(),
                label: f[1].parse()?,
                file: PathBuf::from(f[2]),
            });
        }
        entries.sort_by(|a, b| a.subject_id.cmp(&b.subject_id));
        if let Some(w) = entries.windows(2).find(|w| w[0].subject_id == w[1].subject_id) {
            return Err(Error::Invalid(format!("{}: subject {} listed twice", path.display(), w[0].subject_id)));
        }
        if entries.is_empty() {
            return Err(Error::Invalid(format!("{}: no subjects", path.display())));
        }
        Ok(Cohort { dir, entries })
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{COHORT_HEADER}\n");
        for e in &self.entries {
            s.push_str(&format!("{},{},{}\n", e.subject_id, e.label, e.file.display()));
        }
        s
    }

    pub fn subjects(&self) -> Vec<(String, Group)> {
        self.entries.iter().map(|e| (e.subject_id.clone(), e.label)).collect()
    }

    /// Loads one subject and checks its stored id and label against the cohort row.
    pub fn load_series(&self, entry: &CohortEntry) -> Result<Series4D> {
        let s = load_series(self.dir.join(&entry.file))?;
        if s.subject_id != entry.subject_id || s.label != entry.label {
            return Err(Error::Invalid(format!(
                "{}: file holds subject {} with label {}, cohort says {} with label {}",
                entry.file.display(),
                s.subject_id,
                s.label,
                entry.subject_id,
                entry.label
            )));
        }
        Ok(s)
    }

    /// Entries assigned to `split`, checking that every manifest subject exists
    /// with the same label.
    pub fn entries_in<'a>(&'a self, manifest: &SplitManifest, split: Split) -> Result<Vec<&'a CohortEntry>> {
        let by_id: BTreeMap<&str, &CohortEntry> =
            self.entries.iter().map(|e| (e.subject_id.as_str(), e)).collect();
        let mut out = Vec::new();
        for (id, label, s) in manifest.iter() {
            let e = by_id
                .get(id)
                .ok_or_else(|| Error::Invalid(format!("manifest subject {id} is not in the cohort")))?;
            if e.label != label {
                return Err(Error::Invalid(format!("manifest gives {id} label {label}, cohort {}", e.label)));
            }
            if s == split {
                out.push(*e);
            }
        }
        Ok(out)
    }

    /// Windowed samples per subject, in cohort order. Series are dropped as soon
    /// as they are windowed.
    pub fn windows(&self, entries: &[&CohortEntry], m: usize, s: usize) -> Result<Vec<Vec<Sample3D>>> {
        entries
            .iter()
            .map(|e| sliding_window_mean(&self.load_series(e)?, m, s))
            .collect()
    }
}

/// Sample-level split of pre-windowed subjects.
pub fn select<'a>(
    windows: &'a BTreeMap<String, Vec<Sample3D>>,
    manifest: &SplitManifest,
    split: Split,
) -> Vec<&'a Sample3D> {
    manifest
        .subjects(split)
        .into_iter()
        .filter_map(|id| windows.get(id))
        .flatten()
        .collect()
}
