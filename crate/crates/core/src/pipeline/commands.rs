use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use volcore::Volume;

use super::cohort::{select, Cohort, CohortEntry, COHORT_FILE, PARCELLATION_FILE, TRUTH_DIR};
use super::table::update_table;
use super::RunConfig;
use crate::baselines::{
    connectivity_features, logreg_train, pca_fit_nonzero, BaselineKind, BaselineModel, Matrix, Parcellation,
};
use crate::datapipe::{
    fit_normalizer, generate_subject, load_volume, save_series, save_volume, stratified_subject_split, Normalizer,
    Split, SplitManifest,
};
use crate::interpret::{aggregate_group, dice, export_slices, sensitivity_maps, GroupSensitivity};
use crate::metrics::{aggregate_runs, auc_roc, soft_vote, EvalReport, RunSummary, SamplePrediction, SubjectPrediction};
use crate::model::{init_params, load_checkpoint, predict, save_checkpoint, Checkpoint, CnnParams, TrainHistory, Trainer};
use crate::{Error, Group, Result, Sample3D};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const MODEL_FILE: &str = "model.vckp";
pub const STATE_FILE: &str = "state.vckp";
pub const HISTORY_FILE: &str = "history.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const PREDICTIONS_HEADER: &str = "subject_id,label,probability,n_samples";

pub fn run_dir(out_dir: &Path, run: usize) -> PathBuf {
    out_dir.join(format!("run_{run:02}"))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn predictions_csv(preds: &[SubjectPrediction]) -> String {
    let mut s = format!("{PREDICTIONS_HEADER}\n");
    for p in preds {
        s.push_str(&format!("{},{},{},{}\n", p.subject_id, p.label, p.probability, p.n_samples));
    }
    s
}

fn runs_csv(reports: &[EvalReport]) -> String {
    let mut s = format!("{}\n", EvalReport::CSV_HEADER);
    for (r, rep) in reports.iter().enumerate() {
        s.push_str(&rep.csv_row(r));
        s.push('\n');
    }
    s
}

fn split_for_run(cfg: &RunConfig, cohort: &Cohort, run: usize) -> Result<SplitManifest> {
    stratified_subject_split(&cohort.subjects(), cfg.split_ratios, cfg.split_seed_for_run(run))
}

#[derive(Debug, Clone)]
pub struct SynthSummary {
    pub n_subjects: usize,
    pub series_files: Vec<PathBuf>,
    pub truth_files: Vec<PathBuf>,
}

/// Writes `series/<id>.vol4`, `cohort.csv`, `truth/region_XX.vol4` and a grid
/// `parcellation.vol4` under `dir`.
pub fn cmd_synth(cfg: &RunConfig, dir: &Path) -> Result<SynthSummary> {
    let spec = &cfg.phantom;
    spec.validate()?;
    let parc = Parcellation::grid(spec.shape, cfg.parcel_grid)?;
    create_dir(&dir.join("series"))?;
    create_dir(&dir.join(TRUTH_DIR))?;
    let mut entries = Vec::new();
    let mut series_files = Vec::new();
    for i in 0..spec.n_subjects() {
        let s = generate_subject(spec, i)?;
        let rel = PathBuf::from("series").join(format!("{}.vol4", s.subject_id));
        save_series(&s, dir.join(&rel))?;
        series_files.push(dir.join(&rel));
        entries.push(CohortEntry {
            subject_id: s.subject_id,
            label: s.label,
            file: rel,
        });
    }
    let cohort = Cohort {
        dir: dir.to_path_buf(),
        entries,
    };
    write_text(&dir.join(COHORT_FILE), &cohort.to_text())?;
    let mut truth_files = Vec::new();
    for (k, r) in spec.regions.iter().enumerate() {
        let path = dir.join(TRUTH_DIR).join(format!("region_{k:02}.vol4"));
        save_volume(&spec.region_mask(r), &format!("region_{k:02}"), &path)?;
        truth_files.push(path);
    }
    save_volume(&parc.to_volume(), "parcellation", dir.join(PARCELLATION_FILE))?;
    Ok(SynthSummary {
        n_subjects: spec.n_subjects(),
        series_files,
        truth_files,
    })
}

#[derive(Debug, Clone)]
pub struct PrepareSummary {
    pub manifests: Vec<SplitManifest>,
    /// `run,split,group,n_subjects,n_samples` rows.
    pub table: String,
}

/// Writes each run's split manifest and a table of per-split sample counts.
pub fn cmd_prepare(cfg: &RunConfig) -> Result<PrepareSummary> {
    cfg.validate()?;
    let cohort = Cohort::load(&cfg.data_dir)?;
    let mut n_windows = BTreeMap::new();
    for e in &cohort.entries {
        let t = cohort.load_series(e)?.len();
        if t < cfg.window {
            return Err(Error::Invalid(format!(
                "{} has {t} frames, fewer than the window {}",
                e.subject_id, cfg.window
            )));
        }
        n_windows.insert(e.subject_id.clone(), (t - cfg.window) / cfg.stride + 1);
    }
    let mut table = String::from("run,split,group,n_subjects,n_samples\n");
    let mut manifests = Vec::new();
    for r in 0..cfg.n_runs {
        let manifest = split_for_run(cfg, &cohort, r)?;
        let dir = run_dir(&cfg.out_dir, r);
        create_dir(&dir)?;
        manifest.save(dir.join(MANIFEST_FILE))?;
        for split in Split::ALL {
            for g in Group::BOTH {
                let ids: Vec<&str> = manifest
                    .subjects(split)
                    .into_iter()
                    .filter(|id| manifest.label_of(id) == Some(g))
                    .collect();
                let samples: usize = ids.iter().map(|id| n_windows[*id]).sum();
                table.push_str(&format!("{r},{split},{g},{},{samples}\n", ids.len()));
            }
        }
        manifests.push(manifest);
    }
    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("samples.csv"), &table)?;
    Ok(PrepareSummary { manifests, table })
}

/// Normalizes, predicts and soft-votes.
pub fn predict_subjects<'a>(
    params: &CnnParams,
    normalizer: &Normalizer,
    samples: impl IntoIterator<Item = &'a Sample3D>,
) -> Result<Vec<SubjectPrediction>> {
    let normalized: Vec<Sample3D> = samples
        .into_iter()
        .map(|s| normalizer.apply(s))
        .collect::<Result<_>>()?;
    let probs = predict(params, &normalized)?;
    let per_sample: Vec<SamplePrediction> = normalized
        .iter()
        .zip(probs)
        .map(|(s, p)| SamplePrediction {
            subject_id: s.subject_id.clone(),
            label: s.label,
            probability: p,
        })
        .collect();
    soft_vote(&per_sample)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run: usize,
    pub manifest: SplitManifest,
    pub history: TrainHistory,
    pub report: EvalReport,
    pub predictions: Vec<SubjectPrediction>,
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub runs: Vec<RunOutcome>,
    pub summary: RunSummary,
    /// Contents of the comparison table after this command.
    pub table: String,
}

fn check_input_shape(expected: [usize; 3], samples: &[Sample3D]) -> Result<()> {
    match samples.iter().find(|s| s.voxels.shape() != expected) {
        Some(s) => Err(Error::Config(format!(
            "input_shape {expected:?} does not match {} with shape {:?}",
            s.subject_id,
            s.voxels.shape()
        ))),
        None => Ok(()),
    }
}

fn windowed_cohort(cfg: &RunConfig, cohort: &Cohort) -> Result<BTreeMap<String, Vec<Sample3D>>> {
    let all: Vec<&CohortEntry> = cohort.entries.iter().collect();
    let windows = cohort.windows(&all, cfg.window, cfg.stride)?;
    Ok(cohort.entries.iter().map(|e| e.subject_id.clone()).zip(windows).collect())
}

/// For every run: split, window, normalize, train, evaluate on the test split.
/// Artifacts go to `out_dir/run_XX/`; `cnn_runs.csv` and the `cnn` row of
/// `table.csv` are written once all runs are done.
pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let cohort = Cohort::load(&cfg.data_dir)?;
    let windows = windowed_cohort(cfg, &cohort)?;
    for w in windows.values() {
        check_input_shape(cfg.cnn.input_shape, w)?;
    }
    let runs: Vec<RunOutcome> = (0..cfg.n_runs)
        .map(|r| train_run(cfg, &cohort, &windows, r))
        .collect::<Result<_>>()?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    create_dir(&cfg.out_dir)?;
    write_text(&cfg.out_dir.join("cnn_runs.csv"), &runs_csv(&reports))?;
    let summary = aggregate_runs(&reports)?;
    let table = update_table(&cfg.out_dir, "cnn", &summary)?;
    Ok(TrainSummary { runs, summary, table })
}

fn train_run(
    cfg: &RunConfig,
    cohort: &Cohort,
    windows: &BTreeMap<String, Vec<Sample3D>>,
    run: usize,
) -> Result<RunOutcome> {
    let dir = run_dir(&cfg.out_dir, run);
    create_dir(&dir)?;
    let manifest = split_for_run(cfg, cohort, run)?;
    manifest.save(dir.join(MANIFEST_FILE))?;

    let mut train: Vec<Sample3D> = select(windows, &manifest, Split::Train).into_iter().cloned().collect();
    let mut val: Vec<Sample3D> = select(windows, &manifest, Split::Val).into_iter().cloned().collect();
    let normalizer = fit_normalizer(&train)?;
    for s in train.iter_mut().chain(val.iter_mut()) {
        normalizer.apply_in_place(s)?;
    }

    let config = cfg.cnn_for_run(run);
    let state_path = dir.join(STATE_FILE);
    let mut trainer = if cfg.resume && state_path.exists() {
        let ck = Checkpoint::load(&state_path)?;
        if ck.config != config {
            return Err(Error::Config(format!(
                "{} was written with a different model config",
                state_path.display()
            )));
        }
        let progress = ck
            .progress
            .ok_or_else(|| Error::Invalid(format!("{} holds no training state", state_path.display())))?;
        Trainer::resume(config.clone(), ck.params, progress, &train, &val)?
    } else {
        Trainer::new(config.clone(), init_params(&config, config.seed)?, &train, &val)?
    };
    while !trainer.is_finished() {
        trainer.run_epoch()?;
        Checkpoint {
            config: config.clone(),
            normalizer: normalizer.clone(),
            params: trainer.params().clone(),
            progress: Some(trainer.progress()),
        }
        .save(&state_path)?;
    }
    let (best, history) = trainer.finish();
    save_checkpoint(&best, &config, &normalizer, dir.join(MODEL_FILE))?;
    write_text(&dir.join(HISTORY_FILE), &history.to_csv())?;

    let predictions = predict_subjects(&best, &normalizer, select(windows, &manifest, Split::Test))?;
    let report = EvalReport::evaluate(&predictions)?;
    write_text(&dir.join(REPORT_FILE), &report.to_kv_text())?;
    write_text(&dir.join(PREDICTIONS_FILE), &predictions_csv(&predictions))?;
    Ok(RunOutcome {
        run,
        manifest,
        history,
        report,
        predictions,
    })
}

/// Test-split samples of `manifest`, windowed with the config's window and stride.
fn test_samples(cfg: &RunConfig, manifest: &SplitManifest) -> Result<Vec<Sample3D>> {
    let cohort = Cohort::load(&cfg.data_dir)?;
    let entries = cohort.entries_in(manifest, Split::Test)?;
    if entries.is_empty() {
        return Err(Error::Invalid("the manifest's test split is empty".into()));
    }
    Ok(cohort.windows(&entries, cfg.window, cfg.stride)?.into_iter().flatten().collect())
}

fn load_compatible(checkpoint: &Path, samples: &[Sample3D]) -> Result<Checkpoint> {
    let ck = load_checkpoint(checkpoint)?;
    ck.params.check_matches(&ck.config)?;
    let mean_shape = ck.normalizer.mean_image.shape();
    if mean_shape != ck.config.input_shape {
        return Err(Error::Invalid(format!(
            "{}: normalizer shape {mean_shape:?} does not match input_shape {:?}",
            checkpoint.display(),
            ck.config.input_shape
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.voxels.shape() != ck.config.input_shape) {
        return Err(Error::Invalid(format!(
            "{}: model expects {:?} volumes, {} has {:?}",
            checkpoint.display(),
            ck.config.input_shape,
            s.subject_id,
            s.voxels.shape()
        )));
    }
    Ok(ck)
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: EvalReport,
    pub predictions: Vec<SubjectPrediction>,
}

/// Scores the manifest's test subjects with a saved model. Writes
/// `out_dir/eval/report.txt` and `predictions.csv`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, manifest: &Path) -> Result<EvalOutcome> {
    let manifest = SplitManifest::load(manifest)?;
    let samples = test_samples(cfg, &manifest)?;
    let ck = load_compatible(checkpoint, &samples)?;
    let predictions = predict_subjects(&ck.params, &ck.normalizer, &samples)?;
    let report = EvalReport::evaluate(&predictions)?;
    let dir = cfg.out_dir.join("eval");
    create_dir(&dir)?;
    write_text(&dir.join(REPORT_FILE), &report.to_kv_text())?;
    write_text(&dir.join(PREDICTIONS_FILE), &predictions_csv(&predictions))?;
    Ok(EvalOutcome { report, predictions })
}

#[derive(Debug, Clone)]
pub struct InterpretOutcome {
    /// Younger then older.
    pub groups: Vec<GroupSensitivity>,
    /// Dice of each group's mask against the union of the ground-truth masks, when present.
    pub dice: Option<Vec<f64>>,
    pub slice_files: Vec<PathBuf>,
}

fn ground_truth(data_dir: &Path) -> Result<Option<Volume>> {
    let dir = data_dir.join(TRUTH_DIR);
    if !dir.is_dir() {
        return Ok(None);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "vol4"))
        .collect();
    files.sort();
    let mut union: Option<Volume> = None;
    for f in files {
        let m = load_volume(&f)?;
        match &mut union {
            None => union = Some(m),
            Some(u) => {
                if !u.same_shape(&m) {
                    return Err(Error::Invalid(format!("{}: mask shape differs", f.display())));
                }
                for (a, b) in u.data_mut().iter_mut().zip(m.data()) {
                    *a = if *a != 0.0 || *b != 0.0 { 1.0 } else { 0.0 };
                }
            }
        }
    }
    Ok(union)
}

/// Group-mean sensitivity maps over the test split, thresholded at `percentile`.
/// Writes volumes, masks, slice images and `summary.csv` to `out_dir/interpret/`.
pub fn cmd_interpret(cfg: &RunConfig, checkpoint: &Path, manifest: &Path, percentile: f64) -> Result<InterpretOutcome> {
    let manifest = SplitManifest::load(manifest)?;
    let samples = test_samples(cfg, &manifest)?;
    let ck = load_compatible(checkpoint, &samples)?;
    let truth = ground_truth(&cfg.data_dir)?;
    let dir = cfg.out_dir.join("interpret");
    create_dir(&dir.join("slices"))?;

    let mut groups = Vec::new();
    let mut slice_files = Vec::new();
    for g in Group::BOTH {
        let members: Vec<Sample3D> = samples
            .iter()
            .filter(|s| s.label == g)
            .map(|s| ck.normalizer.apply(s))
            .collect::<Result<_>>()?;
        if members.is_empty() {
            return Err(Error::Invalid(format!("group {g} is absent from the test split")));
        }
        let maps = sensitivity_maps(&ck.params, &members, g)?;
        let gs = aggregate_group(&maps, g, cfg.aggregation, percentile)?;
        save_volume(&gs.mean_map, &format!("group{g}_mean"), dir.join(format!("group{g}_mean.vol4")))?;
        save_volume(&gs.region_mask, &format!("group{g}_mask"), dir.join(format!("group{g}_mask.vol4")))?;
        slice_files.extend(export_slices(
            &gs.mean_map,
            cfg.slice_axis,
            dir.join("slices").join(format!("group{g}")),
            Some(&gs.region_mask),
        )?);
        groups.push(gs);
    }
    let dice = match &truth {
        Some(t) => Some(groups.iter().map(|g| dice(&g.region_mask, t)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let mut summary = format!("{},dice\n", GroupSensitivity::CSV_HEADER);
    for (i, g) in groups.iter().enumerate() {
        let d = dice.as_ref().map(|d| d[i].to_string()).unwrap_or_default();
        summary.push_str(&format!("{},{d}\n", g.csv_row()));
    }
    write_text(&dir.join("summary.csv"), &summary)?;
    Ok(InterpretOutcome {
        groups,
        dice,
        slice_files,
    })
}

#[derive(Debug, Clone)]
pub struct BaselineRun {
    pub report: EvalReport,
    pub l2: f64,
    pub predictions: Vec<SubjectPrediction>,
}

#[derive(Debug, Clone)]
pub struct BaselineSummary {
    pub kind: BaselineKind,
    pub runs: Vec<BaselineRun>,
    pub summary: RunSummary,
    pub table: String,
}

/// Feature rows per subject: one connectivity vector, or one flattened volume per window.
struct SubjectRows {
    label: Group,
    rows: Vec<Vec<f64>>,
}

fn baseline_rows(cfg: &RunConfig, cohort: &Cohort, kind: BaselineKind) -> Result<(BTreeMap<String, SubjectRows>, String)> {
    let mut out = BTreeMap::new();
    let meta;
    match kind {
        BaselineKind::FisherZ => {
            let path = cfg.data_dir.join(PARCELLATION_FILE);
            if !path.exists() {
                return Err(Error::Invalid(format!("fisherz-lr needs a parcellation at {}", path.display())));
            }
            let parc = Parcellation::from_volume(&load_volume(&path)?)?;
            for e in &cohort.entries {
                let (m, _) = connectivity_features(&[cohort.load_series(e)?], &parc)?;
                out.insert(
                    e.subject_id.clone(),
                    SubjectRows {
                        label: e.label,
                        rows: vec![m.row(0).to_vec()],
                    },
                );
            }
            meta = format!("parcellation_regions = {}\n", parc.n_regions());
        }
        BaselineKind::Pca => {
            for (e, w) in cohort.entries.iter().zip(cohort.windows(
                &cohort.entries.iter().collect::<Vec<_>>(),
                cfg.window,
                cfg.stride,
            )?) {
                out.insert(
                    e.subject_id.clone(),
                    SubjectRows {
                        label: e.label,
                        rows: w.into_iter().map(|s| s.voxels.into_data()).collect(),
                    },
                );
            }
            meta = format!("window = {}\nstride = {}\n", cfg.window, cfg.stride);
        }
    }
    Ok((out, meta))
}

/// Stacked rows of the split's subjects with their ids and labels, one entry per row.
fn gather(rows: &BTreeMap<String, SubjectRows>, manifest: &SplitManifest, split: Split) -> Result<(Matrix, Vec<(String, Group)>)> {
    let mut x = Vec::new();
    let mut who = Vec::new();
    for id in manifest.subjects(split) {
        let s = &rows[id];
        for r in &s.rows {
            x.push(r.clone());
            who.push((id.to_string(), s.label));
        }
    }
    Ok((Matrix::from_rows(&x)?, who))
}

fn vote(probs: &[f64], who: &[(String, Group)]) -> Result<Vec<SubjectPrediction>> {
    let per: Vec<SamplePrediction> = who
        .iter()
        .zip(probs)
        .map(|((id, g), &p)| SamplePrediction {
            subject_id: id.clone(),
            label: *g,
            probability: p,
        })
        .collect();
    soft_vote(&per)
}

/// Same split and evaluation protocol as [`cmd_train`] with a baseline
/// classifier. The L2 strength is chosen per run by validation AUC, ties going
/// to the larger value.
pub fn cmd_baseline(cfg: &RunConfig, kind: BaselineKind) -> Result<BaselineSummary> {
    cfg.validate()?;
    let cohort = Cohort::load(&cfg.data_dir)?;
    let (rows, feature_meta) = baseline_rows(cfg, &cohort, kind)?;
    let mut runs = Vec::new();
    for r in 0..cfg.n_runs {
        let manifest = split_for_run(cfg, &cohort, r)?;
        let (x_train, who_train) = gather(&rows, &manifest, Split::Train)?;
        let (x_val, who_val) = gather(&rows, &manifest, Split::Val)?;
        let (x_test, who_test) = gather(&rows, &manifest, Split::Test)?;
        let mut meta = feature_meta.clone();
        let pca = match kind {
            BaselineKind::Pca => {
                let k = cfg
                    .pca_components
                    .min(x_train.rows().saturating_sub(1))
                    .min(x_train.cols());
                let p = pca_fit_nonzero(&x_train, k)?;
                meta.push_str(&format!("components = {}\n", p.n_components()));
                Some(p)
            }
            BaselineKind::FisherZ => None,
        };
        let project = |m: &Matrix| match &pca {
            Some(p) => p.transform(m),
            None => Ok(m.clone()),
        };
        let (f_train, f_val) = (project(&x_train)?, project(&x_val)?);
        let y: Vec<f64> = who_train.iter().map(|(_, g)| g.as_f64()).collect();

        let mut best: Option<(f64, crate::baselines::LogRegModel)> = None;
        for &l2 in &cfg.baseline_l2 {
            let model = logreg_train(&f_train, &y, l2, cfg.baseline_max_iters, cfg.baseline_tol)?;
            let auc = auc_roc(&vote(&model.predict(&f_val)?, &who_val)?)?;
            let better = best
                .as_ref()
                .is_none_or(|(a, m)| auc > *a || (auc == *a && l2 > m.l2));
            if better {
                best = Some((auc, model));
            }
        }
        let (_, logreg) = best.expect("l2 grid is non-empty");
        meta.push_str(&format!("l2 = {}\nconverged = {}\n", logreg.l2, logreg.converged));
        let model = BaselineModel {
            kind,
            meta,
            pca,
            logreg,
        };
        let predictions = vote(&model.predict(&x_test)?, &who_test)?;
        let report = EvalReport::evaluate(&predictions)?;

        let dir = run_dir(&cfg.out_dir, r);
        create_dir(&dir)?;
        let name = kind.as_str();
        model.save(dir.join(format!("{name}.vblm")))?;
        write_text(&dir.join(format!("{name}_report.txt")), &report.to_kv_text())?;
        write_text(&dir.join(format!("{name}_predictions.csv")), &predictions_csv(&predictions))?;
        runs.push(BaselineRun {
            report,
            l2: model.logreg.l2,
            predictions,
        });
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    write_text(&cfg.out_dir.join(format!("{}_runs.csv", kind.as_str())), &runs_csv(&reports))?;
    let summary = aggregate_runs(&reports)?;
    let table = update_table(&cfg.out_dir, kind.as_str(), &summary)?;
    Ok(BaselineSummary {
        kind,
        runs,
        summary,
        table,
    })
}
