//! Subject-level soft voting, F1 at a fixed threshold, ROC AUC and run aggregation.

use std::collections::BTreeMap;
use std::fmt;

use crate::{Error, Group, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SamplePrediction {
    pub subject_id: String,
    pub label: Group,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub label: Group,
    /// Mean of the subject's sample probabilities.
    pub probability: f64,
    pub n_samples: usize,
}

/// Unweighted mean probability per subject, ordered by subject id.
///
/// Each subject's probabilities are summed in sorted order, so the result
/// does not depend on the order of `samples` at all.
pub fn soft_vote(samples: &[SamplePrediction]) -> Result<Vec<SubjectPrediction>> {
    let mut by_subject: BTreeMap<&str, (Group, Vec<f64>)> = BTreeMap::new();
    for s in samples {
        if !(0.0..=1.0).contains(&s.probability) {
            return Err(Error::Invalid(format!(
                "{}: probability {} outside [0, 1]",
                s.subject_id, s.probability
            )));
        }
        let entry = by_subject
            .entry(&s.subject_id)
            .or_insert_with(|| (s.label, Vec::new()));
        if entry.0 != s.label {
            return Err(Error::Invalid(format!(
                "{}: samples carry both labels",
                s.subject_id
            )));
        }
        entry.1.push(s.probability);
    }
    Ok(by_subject
        .into_iter()
        .map(|(id, (label, mut ps))| {
            ps.sort_by(f64::total_cmp);
            let n = ps.len();
            SubjectPrediction {
                subject_id: id.to_string(),
                label,
                probability: ps.iter().sum::<f64>() / n as f64,
                n_samples: n,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl Confusion {
    /// Positive class is `Group::Older`; `p >= threshold` predicts positive.
    pub fn from_predictions(preds: &[SubjectPrediction], threshold: f64) -> Self {
        let mut c = Confusion::default();
        for p in preds {
            match (p.probability >= threshold, p.label) {
                (true, Group::Older) => c.tp += 1,
                (true, Group::Younger) => c.fp += 1,
                (false, Group::Younger) => c.tn += 1,
                (false, Group::Older) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `2PR / (P + R)`, or 0 with `degenerate = true` when `P + R = 0`.
    pub fn f1(&self) -> (f64, bool) {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            (0.0, true)
        } else {
            (2.0 * (p * r) / (p + r), false)
        }
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1_score(preds: &[SubjectPrediction], threshold: f64) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::Invalid("F1 of an empty prediction set".into()));
    }
    Ok(Confusion::from_predictions(preds, threshold).f1().0)
}

/// Mann-Whitney AUC from average ranks; ties between classes earn half credit.
pub fn auc_from_scores(scores: &[f64], labels: &[Group]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Invalid(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Invalid(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&l| l == Group::Older).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Invalid(format!(
            "AUC needs both classes ({n_pos} positive, {n_neg} negative)"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum of positives keeps half-integer average ranks exact.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Ranks i+1..=j+1 share the average (i + j + 2) / 2.
        let twice_avg = (i + j + 2) as u128;
        let pos_in_tie = order[i..=j]
            .iter()
            .filter(|&&k| labels[k] == Group::Older)
            .count() as u128;
        twice_rank_sum += twice_avg * pos_in_tie;
        i = j + 1;
    }
    let np = n_pos as u128;
    let twice_u = twice_rank_sum - np * (np + 1);
    Ok(twice_u as f64 / (2 * n_pos * n_neg) as f64)
}

pub fn auc_roc(preds: &[SubjectPrediction]) -> Result<f64> {
    let scores: Vec<f64> = preds.iter().map(|p| p.probability).collect();
    let labels: Vec<Group> = preds.iter().map(|p| p.label).collect();
    auc_from_scores(&scores, &labels)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub f1: f64,
    pub auc: f64,
    pub confusion: Confusion,
    /// Set when precision + recall = 0 and F1 was reported as 0.
    pub f1_degenerate: bool,
}

impl EvalReport {
    pub fn evaluate(preds: &[SubjectPrediction]) -> Result<Self> {
        if preds.is_empty() {
            return Err(Error::Invalid("no subjects to evaluate".into()));
        }
        let confusion = Confusion::from_predictions(preds, DEFAULT_THRESHOLD);
        let (f1, f1_degenerate) = confusion.f1();
        Ok(EvalReport {
            f1,
            auc: auc_roc(preds)?,
            confusion,
            f1_degenerate,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.confusion.total()
    }

    /// Flat `key = value` text; floats use Rust's shortest round-trip form.
    pub fn to_kv_text(&self) -> String {
        let c = &self.confusion;
        format!(
            "f1 = {}\nauc = {}\ntp = {}\nfp = {}\ntn = {}\nfn = {}\nf1_degenerate = {}\nn_subjects = {}\n",
            self.f1,
            self.auc,
            c.tp,
            c.fp,
            c.tn,
            c.fn_,
            self.f1_degenerate,
            self.n_subjects()
        )
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Invalid(format!("report line {line:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, k: &str) -> Result<T> {
            kv.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("report is missing a valid {k:?}")))
        }
        Ok(EvalReport {
            f1: get(&kv, "f1")?,
            auc: get(&kv, "auc")?,
            confusion: Confusion {
                tp: get(&kv, "tp")?,
                fp: get(&kv, "fp")?,
                tn: get(&kv, "tn")?,
                fn_: get(&kv, "fn")?,
            },
            f1_degenerate: get(&kv, "f1_degenerate")?,
        })
    }

    pub const CSV_HEADER: &'static str = "run,f1,auc,tp,fp,tn,fn,f1_degenerate";

    pub fn csv_row(&self, run: usize) -> String {
        let c = &self.confusion;
        format!(
            "{run},{},{},{},{},{},{},{}",
            self.f1, self.auc, c.tp, c.fp, c.tn, c.fn_, self.f1_degenerate
        )
    }
}

/// Mean and sample standard deviation (n - 1 denominator) of one metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: Option<f64>,
}

impl MetricSummary {
    /// Values are sorted first so the summary is independent of run order.
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let std = (v.len() >= 2).then(|| {
            let ss: f64 = v.iter().map(|x| (x - mean).powi(2)).sum();
            (ss / (n - 1.0)).sqrt()
        });
        Some(MetricSummary { mean, std })
    }
}

/// `mean (std)` with two decimals, or just the mean for a single run.
impl fmt::Display for MetricSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.std {
            Some(s) => write!(f, "{:.2} ({:.2})", self.mean, s),
            None => write!(f, "{:.2}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub n_runs: usize,
    pub f1: MetricSummary,
    pub auc: MetricSummary,
}

pub fn aggregate_runs(reports: &[EvalReport]) -> Result<RunSummary> {
    let f1: Vec<f64> = reports.iter().map(|r| r.f1).collect();
    let auc: Vec<f64> = reports.iter().map(|r| r.auc).collect();
    match (MetricSummary::from_values(&f1), MetricSummary::from_values(&auc)) {
        (Some(f1), Some(auc)) => Ok(RunSummary {
            n_runs: reports.len(),
            f1,
            auc,
        }),
        _ => Err(Error::Invalid("no runs to aggregate".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp(id: &str, label: Group, p: f64) -> SamplePrediction {
        SamplePrediction {
            subject_id: id.into(),
            label,
            probability: p,
        }
    }

    fn subj(label: Group, p: f64) -> SubjectPrediction {
        SubjectPrediction {
            subject_id: String::new(),
            label,
            probability: p,
            n_samples: 1,
        }
    }

    #[test]
    fn soft_vote_is_the_mean() {
        let s = [
            sp("a", Group::Older, 0.2),
            sp("b", Group::Younger, 0.7),
            sp("a", Group::Older, 0.4),
            sp("a", Group::Older, 0.9),
        ];
        let v = soft_vote(&s).unwrap();
        assert_eq!(v.len(), 2);
        assert!((v[0].probability - 0.5).abs() < 1e-15);
        assert_eq!(v[0].n_samples, 3);
        assert_eq!(v[1].probability, 0.7);
    }

    #[test]
    fn soft_vote_rejects_mixed_labels() {
        let s = [sp("a", Group::Older, 0.2), sp("a", Group::Younger, 0.4)];
        assert!(soft_vote(&s).is_err());
        assert!(soft_vote(&[sp("a", Group::Older, 1.5)]).is_err());
    }

    #[test]
    fn f1_cases() {
        let perfect = [subj(Group::Older, 0.9), subj(Group::Younger, 0.1)];
        assert_eq!(f1_score(&perfect, 0.5).unwrap(), 1.0);

        let c = Confusion { tp: 72, fp: 18, tn: 0, fn_: 8 };
        assert!((c.precision() - 0.8).abs() < 1e-15);
        assert!((c.recall() - 0.9).abs() < 1e-15);
        assert!((c.f1().0 - 2.0 * 0.72 / 1.7).abs() < 1e-12);
        assert!((c.f1().0 - 0.8471).abs() < 1e-4);

        let none = [subj(Group::Older, 0.2), subj(Group::Younger, 0.1)];
        assert_eq!(f1_score(&none, 0.5).unwrap(), 0.0);
        assert!(Confusion::from_predictions(&none, 0.5).f1().1);
        assert!(f1_score(&[], 0.5).is_err());
    }

    #[test]
    fn threshold_is_inclusive() {
        let c = Confusion::from_predictions(&[subj(Group::Older, 0.5)], 0.5);
        assert_eq!(c.tp, 1);
    }

    #[test]
    fn auc_cases() {
        let l = [Group::Older, Group::Older, Group::Younger, Group::Younger];
        assert_eq!(auc_from_scores(&[0.9, 0.4, 0.5, 0.1], &l).unwrap(), 0.75);
        assert_eq!(auc_from_scores(&[0.9, 0.8, 0.2, 0.1], &l).unwrap(), 1.0);
        assert_eq!(auc_from_scores(&[0.3; 4], &l).unwrap(), 0.5);
        assert!(auc_from_scores(&[0.1, 0.2], &[Group::Older, Group::Older]).is_err());
    }

    #[test]
    fn aggregate_formatting() {
        let r = |f1: f64| EvalReport {
            f1,
            auc: f1,
            confusion: Confusion::default(),
            f1_degenerate: false,
        };
        let s = aggregate_runs(&[r(0.8), r(0.9)]).unwrap();
        assert_eq!(s.f1.to_string(), "0.85 (0.07)");
        assert!((s.f1.std.unwrap() - 0.0707).abs() < 1e-4);
        assert_eq!(aggregate_runs(&[r(0.7), r(0.7)]).unwrap().auc.to_string(), "0.70 (0.00)");
        let single = aggregate_runs(&[r(0.8)]).unwrap();
        assert_eq!(single.f1.std, None);
        assert_eq!(single.f1.to_string(), "0.80");
        assert!(aggregate_runs(&[]).is_err());
    }

    #[test]
    fn report_text_round_trip() {
        let preds = [
            subj(Group::Older, 0.9),
            subj(Group::Younger, 0.6),
            subj(Group::Older, 0.3),
        ];
        let r = EvalReport::evaluate(&preds).unwrap();
        assert_eq!(r.n_subjects(), 3);
        assert_eq!(EvalReport::from_kv_text(&r.to_kv_text()).unwrap(), r);
    }
}
