use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::baselines::{DEFAULT_COMPONENTS, DEFAULT_GRID, DEFAULT_MAX_ITERS, DEFAULT_TOL};
use crate::datapipe::{PhantomSpec, SignalRegion, DEFAULT_RATIOS};
use crate::interpret::{Aggregation, DEFAULT_PERCENTILE};
use crate::model::{kv_lines, parse, CnnConfig};
use crate::{Error, Result};

/// Everything a pipeline command needs, read from flat `key = value` text.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub cnn: CnnConfig,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    /// Run `r` splits with `split_seed + r` and trains with `cnn.seed + r`.
    pub split_seed: u64,
    pub split_ratios: [f64; 3],
    pub window: usize,
    pub stride: usize,
    pub n_runs: usize,
    /// Continue an interrupted run from its saved training state.
    pub resume: bool,
    pub percentile: f64,
    pub aggregation: Aggregation,
    pub slice_axis: usize,
    pub pca_components: usize,
    /// Candidate L2 strengths; the one with the best validation AUC is kept.
    pub baseline_l2: Vec<f64>,
    pub baseline_max_iters: usize,
    pub baseline_tol: f64,
    pub parcel_grid: [usize; 3],
    pub phantom: PhantomSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            cnn: CnnConfig::default(),
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out"),
            split_seed: 0,
            split_ratios: DEFAULT_RATIOS,
            window: 2,
            stride: 1,
            n_runs: 10,
            resume: false,
            percentile: DEFAULT_PERCENTILE,
            aggregation: Aggregation::Pooled,
            slice_axis: 0,
            pca_components: DEFAULT_COMPONENTS,
            baseline_l2: vec![0.01, 0.1, 1.0, 10.0],
            baseline_max_iters: DEFAULT_MAX_ITERS,
            baseline_tol: DEFAULT_TOL,
            parcel_grid: DEFAULT_GRID,
            phantom: PhantomSpec::default(),
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

fn parse_array<T: std::str::FromStr + std::fmt::Debug, const N: usize>(key: &str, v: &str) -> Result<[T; N]> {
    parse_list::<T>(key, v)?
        .try_into()
        .map_err(|_| Error::Config(format!("{key}: expected {N} comma-separated values, got {v:?}")))
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// `d,h,w,radius,amp_younger,amp_older` per region, `;`-separated.
fn parse_regions(key: &str, v: &str) -> Result<Vec<SignalRegion>> {
    v.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|r| {
            let f: [f64; 6] = parse_array(key, r)?;
            let idx = |x: f64| {
                if x >= 0.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(Error::Config(format!("{key}: centre coordinate {x} is not a voxel index")))
                }
            };
            Ok(SignalRegion {
                center: [idx(f[0])?, idx(f[1])?, idx(f[2])?],
                radius: f[3],
                amplitude: [f[4], f[5]],
            })
        })
        .collect()
}

fn format_regions(regions: &[SignalRegion]) -> String {
    regions
        .iter()
        .map(|r| {
            let [d, h, w] = r.center;
            format!("{d},{h},{w},{},{},{}", r.radius, r.amplitude[0], r.amplitude[1])
        })
        .collect::<Vec<_>>()
        .join(";")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        if self.cnn.set(key, v)? {
            return Ok(());
        }
        let p = &mut self.phantom;
        match key {
            "data_dir" => self.data_dir = PathBuf::from(v),
            "out_dir" => self.out_dir = PathBuf::from(v),
            "split_seed" => self.split_seed = parse(key, v)?,
            "split_ratios" => self.split_ratios = parse_array(key, v)?,
            "window" => self.window = parse(key, v)?,
            "stride" => self.stride = parse(key, v)?,
            "n_runs" => self.n_runs = parse(key, v)?,
            "resume" => self.resume = parse(key, v)?,
            "percentile" => self.percentile = parse(key, v)?,
            "aggregation" => self.aggregation = v.parse()?,
            "slice_axis" => self.slice_axis = parse(key, v)?,
            "pca_components" => self.pca_components = parse(key, v)?,
            "baseline_l2" => self.baseline_l2 = parse_list(key, v)?,
            "baseline_max_iters" => self.baseline_max_iters = parse(key, v)?,
            "baseline_tol" => self.baseline_tol = parse(key, v)?,
            "parcel_grid" => self.parcel_grid = parse_array(key, v)?,
            "phantom_n_young" => p.n_young = parse(key, v)?,
            "phantom_n_old" => p.n_old = parse(key, v)?,
            "phantom_frames" => p.frames = parse(key, v)?,
            "phantom_shape" => p.shape = parse_array(key, v)?,
            "phantom_regions" => p.regions = parse_regions(key, v)?,
            "phantom_noise_sigma" => p.noise_sigma = parse(key, v)?,
            "phantom_envelope_period" => p.envelope_period = parse(key, v)?,
            "phantom_envelope_depth" => p.envelope_depth = parse(key, v)?,
            "phantom_seed" => p.seed = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.cnn.validate()?;
        let bad = |m: String| Err(Error::Config(m));
        if self.window == 0 || self.stride == 0 {
            return bad(format!("window {} and stride {} must be at least 1", self.window, self.stride));
        }
        if self.n_runs == 0 {
            return bad("n_runs must be at least 1".into());
        }
        if self.split_ratios.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
            return bad(format!("split ratios must be positive, got {:?}", self.split_ratios));
        }
        if !(self.percentile > 0.0 && self.percentile < 100.0) {
            return bad(format!("percentile {} must lie in (0, 100)", self.percentile));
        }
        if self.slice_axis > 2 {
            return bad(format!("slice_axis {} is not 0, 1 or 2", self.slice_axis));
        }
        if self.pca_components == 0 {
            return bad("pca_components must be at least 1".into());
        }
        if self.baseline_l2.is_empty() || self.baseline_l2.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return bad(format!("baseline_l2 must list non-negative values, got {:?}", self.baseline_l2));
        }
        if !(self.baseline_tol > 0.0) || self.baseline_max_iters == 0 {
            return bad("baseline_tol must be positive and baseline_max_iters at least 1".into());
        }
        if self.parcel_grid.contains(&0) {
            return bad(format!("parcel_grid {:?} has a zero axis", self.parcel_grid));
        }
        self.phantom.validate().map_err(|e| Error::Config(format!("phantom: {e}")))
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.cnn.write_kv(&mut s);
        let p = &self.phantom;
        let lines = [
            ("data_dir", self.data_dir.display().to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("split_seed", self.split_seed.to_string()),
            ("split_ratios", join(&self.split_ratios)),
            ("window", self.window.to_string()),
            ("stride", self.stride.to_string()),
            ("n_runs", self.n_runs.to_string()),
            ("resume", self.resume.to_string()),
            ("percentile", self.percentile.to_string()),
            (
                "aggregation",
                match self.aggregation {
                    Aggregation::Pooled => "pooled",
                    Aggregation::PerSubjectFirst => "per-subject",
                }
                .to_string(),
            ),
            ("slice_axis", self.slice_axis.to_string()),
            ("pca_components", self.pca_components.to_string()),
            ("baseline_l2", join(&self.baseline_l2)),
            ("baseline_max_iters", self.baseline_max_iters.to_string()),
            ("baseline_tol", self.baseline_tol.to_string()),
            ("parcel_grid", join(&self.parcel_grid)),
            ("phantom_n_young", p.n_young.to_string()),
            ("phantom_n_old", p.n_old.to_string()),
            ("phantom_frames", p.frames.to_string()),
            ("phantom_shape", join(&p.shape)),
            ("phantom_regions", format_regions(&p.regions)),
            ("phantom_noise_sigma", p.noise_sigma.to_string()),
            ("phantom_envelope_period", p.envelope_period.to_string()),
            ("phantom_envelope_depth", p.envelope_depth.to_string()),
            ("phantom_seed", p.seed.to_string()),
        ];
        for (k, v) in lines {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// Parses over the defaults. Unknown keys and duplicate keys are errors.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::BTreeSet::new();
        for (key, value) in kv_lines(text) {
            let key = key?;
            if !seen.insert(key) {
                return Err(Error::Config(format!("key {key:?} given twice")));
            }
            cfg.set(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Config for run `r`: training seed offset by the run index.
    pub fn cnn_for_run(&self, run: usize) -> CnnConfig {
        let mut c = self.cnn.clone();
        c.seed = self.cnn.seed.wrapping_add(run as u64);
        c
    }

    pub fn split_seed_for_run(&self, run: usize) -> u64 {
        self.split_seed.wrapping_add(run as u64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_round_trip() {
        let mut c = RunConfig::default();
        c.window = 3;
        c.baseline_l2 = vec![0.5, 2.0];
        c.phantom.regions.push(SignalRegion {
            center: [10, 10, 10],
            radius: 2.5,
            amplitude: [0.25, -1.0],
        });
        c.aggregation = Aggregation::PerSubjectFirst;
        let text = c.to_text();
        let back = RunConfig::from_text(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert!(matches!(RunConfig::from_text("windw = 2"), Err(Error::Config(_))));
        assert!(RunConfig::from_text("window = 2\nwindow = 3").is_err());
        assert!(RunConfig::from_text("window = 0").is_err());
        assert!(RunConfig::from_text("percentile = 100").is_err());
        assert!(RunConfig::from_text("phantom_n_young = 0\nphantom_n_old = 0").is_err());
    }

    #[test]
    fn per_run_seeds() {
        let mut c = RunConfig::default();
        c.cnn.seed = 10;
        c.split_seed = 20;
        assert_eq!(c.cnn_for_run(3).seed, 13);
        assert_eq!(c.split_seed_for_run(3), 23);
    }
}
