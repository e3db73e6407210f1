//! Acceptance gate: one `[PASS]`/`[FAIL]` line per criterion.
//!
//! `cargo test -p bold3d --test acceptance -- <filter>` runs only criteria
//! whose name contains `<filter>`. The process exits nonzero on a failure
//! only when `ACCEPTANCE_STRICT=1` is set.

mod common;

use std::collections::BTreeSet;
use std::time::Instant;

use bold3d::baselines::*;
use bold3d::datapipe::*;
use bold3d::interpret::*;
use bold3d::metrics::*;
use bold3d::model::*;
use bold3d::pipeline::{cmd_synth, cmd_train, RunConfig};
use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use volcore::reference::{self, relative_error};
use volcore::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rand_vol(rng: &mut ChaCha8Rng, shape: &[usize]) -> Volume {
    let n = shape.iter().product();
    Volume::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// Gradient correctness

/// Max relative error between `analytic` and central differences of `f` over
/// every coordinate of `x`. Coordinates where `f`'s pattern changes under the
/// perturbation are skipped; returns (max error, checked, skipped).
fn fd_compare(
    x: &Volume,
    analytic: &Volume,
    skip: impl Fn(usize) -> bool,
    f: impl Fn(&Volume) -> (f64, Vec<usize>),
) -> (f64, usize, usize) {
    let (_, base) = f(x);
    let (mut worst, mut checked, mut skipped) = (0.0f64, 0, 0);
    let mut xs = x.clone();
    for i in 0..x.len() {
        if skip(i) {
            skipped += 1;
            continue;
        }
        let orig = x.data()[i];
        xs.data_mut()[i] = orig + FD_STEP;
        let (plus, pp) = f(&xs);
        xs.data_mut()[i] = orig - FD_STEP;
        let (minus, pm) = f(&xs);
        xs.data_mut()[i] = orig;
        if pp != base || pm != base {
            skipped += 1;
            continue;
        }
        let num = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic.data()[i], num, REL_FLOOR));
        checked += 1;
    }
    (worst, checked, skipped)
}

fn weighted(out: &Volume, seed: &Volume) -> f64 {
    out.data().iter().zip(seed.data()).map(|(a, b)| a * b).sum()
}

fn op_gradients(rng: &mut ChaCha8Rng) -> Vec<(&'static str, f64, usize, usize)> {
    let mut results = Vec::new();
    let mut record = |name, r: (f64, usize, usize)| {
        let e: &mut (&str, f64, usize, usize) = match results.iter_mut().find(|e: &&mut (&str, f64, usize, usize)| e.0 == name) {
            Some(e) => e,
            None => {
                results.push((name, 0.0, 0, 0));
                results.last_mut().unwrap()
            }
        };
        e.1 = e.1.max(r.0);
        e.2 += r.1;
        e.3 += r.2;
    };
    for _ in 0..50 {
        // conv3d: input, weights and bias
        let cin = rng.random_range(1..=2);
        let cout = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..3).map(|_| rng.random_range(3..=6)).collect();
        let k: Vec<usize> = dims.iter().map(|&d| rng.random_range(1..=3.min(d))).collect();
        let stride = rng.random_range(1..=2);
        let x = rand_vol(rng, &[cin, dims[0], dims[1], dims[2]]);
        let mut layers = vec![LayerParams::new(rand_vol(rng, &[cout, cin, k[0], k[1], k[2]]), rand_vol(rng, &[cout]))];
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let out = tape.conv3d(xv, &layers, LayerId(0), stride).unwrap();
        let seed = rand_vol(rng, tape.value(out).unwrap().shape());
        tape.backward_with_seed(out, seed.clone(), &mut layers).unwrap();
        let p = layers[0].clone();
        let no_skip = |_| false;
        record("conv3d", fd_compare(&x, tape.grad(xv).unwrap(), no_skip, |v| {
            (weighted(&conv3d_forward(v, &p, stride).unwrap(), &seed), vec![])
        }));
        record("conv3d", fd_compare(&p.weights, &p.grad_weights, no_skip, |w| {
            let q = LayerParams::new(w.clone(), p.bias.clone());
            (weighted(&conv3d_forward(&x, &q, stride).unwrap(), &seed), vec![])
        }));
        record("conv3d", fd_compare(&p.bias, &p.grad_bias, no_skip, |b| {
            let q = LayerParams::new(p.weights.clone(), b.clone());
            (weighted(&conv3d_forward(&x, &q, stride).unwrap(), &seed), vec![])
        }));

        // maxpool3d
        let window = rng.random_range(1..=3);
        let shape = [rng.random_range(1..=2), rng.random_range(window..=6), rng.random_range(window..=6), rng.random_range(window..=6)];
        let x = rand_vol(rng, &shape);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let out = tape.maxpool3d(xv, window).unwrap();
        let seed = rand_vol(rng, tape.value(out).unwrap().shape());
        tape.backward_with_seed(out, seed.clone(), &mut []).unwrap();
        record("maxpool3d", fd_compare(&x, tape.grad(xv).unwrap(), no_skip, |v| {
            let (o, arg) = maxpool3d_forward(v, window).unwrap();
            (weighted(&o, &seed), arg)
        }));

        // dense: input, weights and bias
        let in_shape = [rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4)];
        let n_in: usize = in_shape.iter().product();
        let n_out = rng.random_range(1..=4);
        let x = rand_vol(rng, &in_shape);
        let mut layers = vec![LayerParams::new(rand_vol(rng, &[n_out, n_in]), rand_vol(rng, &[n_out]))];
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let out = tape.dense(xv, &layers, LayerId(0)).unwrap();
        let seed = rand_vol(rng, &[n_out]);
        tape.backward_with_seed(out, seed.clone(), &mut layers).unwrap();
        let p = layers[0].clone();
        record("dense", fd_compare(&x, tape.grad(xv).unwrap(), no_skip, |v| {
            (weighted(&dense_forward(v, &p).unwrap(), &seed), vec![])
        }));
        record("dense", fd_compare(&p.weights, &p.grad_weights, no_skip, |w| {
            let q = LayerParams::new(w.clone(), p.bias.clone());
            (weighted(&dense_forward(&x, &q).unwrap(), &seed), vec![])
        }));
        record("dense", fd_compare(&p.bias, &p.grad_bias, no_skip, |b| {
            let q = LayerParams::new(p.weights.clone(), b.clone());
            (weighted(&dense_forward(&x, &q).unwrap(), &seed), vec![])
        }));

        // relu, skipping inputs within 1e-3 of the kink
        let n = rng.random_range(1..=40);
        let x = rand_vol(rng, &[n]);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let out = tape.relu(xv).unwrap();
        let seed = rand_vol(rng, x.shape());
        tape.backward_with_seed(out, seed.clone(), &mut []).unwrap();
        record("relu", fd_compare(&x, tape.grad(xv).unwrap(), |i| x.data()[i].abs() < 1e-3, |v| {
            (weighted(&relu(v), &seed), vec![])
        }));

        // sigmoid
        let n = rng.random_range(1..=40);
        let mut x = rand_vol(rng, &[n]);
        x.data_mut().iter_mut().for_each(|v| *v *= 6.0);
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone(), true);
        let out = tape.sigmoid(xv).unwrap();
        let seed = rand_vol(rng, x.shape());
        tape.backward_with_seed(out, seed.clone(), &mut []).unwrap();
        record("sigmoid", fd_compare(&x, tape.grad(xv).unwrap(), no_skip, |v| {
            let mut o = v.clone();
            o.data_mut().iter_mut().for_each(|z| *z = sigmoid(*z));
            (weighted(&o, &seed), vec![])
        }));

        // bce with respect to the probability
        let p = Volume::from_vec(&[1], vec![rng.random_range(0.01..0.99)]).unwrap();
        let y = rng.random_range(0..=1) as f64;
        let mut tape = Tape::new();
        let pv = tape.leaf(p.clone(), true);
        let l = tape.bce(pv, y, 1.0).unwrap();
        tape.backward(l, &mut []).unwrap();
        record("bce", fd_compare(&p, tape.grad(pv).unwrap(), no_skip, |v| (bce_term(v.data()[0], y).unwrap(), vec![])));
    }
    results
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let ops = op_gradients(&mut rng);
    let mut pass = ops.iter().all(|o| o.1 < 1e-5 && o.2 > 0);
    let mut detail: Vec<String> = ops.iter().map(|o| format!("{} {:.1e} ({} coords)", o.0, o.1, o.2)).collect();

    let config = CnnConfig::default();
    let mut net = GradCheck::default();
    for i in 0..5u64 {
        let params = scaled_params(&config, 1000 + i, 4.0);
        let x = random_input(&config, &mut rng);
        let stats = check_network(&params, &x, (i % 2) as f64, 24, 2000 + i);
        net.merge(stats);
    }
    pass &= net.max_rel_err < 1e-5 && net.checked > 0;
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 300.0;
    detail.push(format!(
        "default network {:.1e} ({} coords, {} skipped at kinks/ties, {} at or over 1e-5 with |error| <= {:.1} ulp(loss)/step)",
        net.max_rel_err, net.checked, net.skipped, net.over_tol, net.max_over_ulps
    ));
    outcome(pass, format!("max rel err < 1e-5: {}; {secs:.0}s (limit 300s)", detail.join(", ")))
}

// ---------------------------------------------------------------------------

fn conv_pool_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut conv_err, mut pool_err) = (0.0f64, 0.0f64);
    for _ in 0..200 {
        let cin = rng.random_range(1..=2);
        let cout = rng.random_range(1..=3);
        let dims: Vec<usize> = (0..3).map(|_| rng.random_range(1..=8)).collect();
        let k: Vec<usize> = dims.iter().map(|&d| rng.random_range(1..=d.min(4))).collect();
        let stride = rng.random_range(1..=3);
        let x = rand_vol(&mut rng, &[cin, dims[0], dims[1], dims[2]]);
        let p = LayerParams::new(rand_vol(&mut rng, &[cout, cin, k[0], k[1], k[2]]), rand_vol(&mut rng, &[cout]));
        let fast = conv3d_forward(&x, &p, stride).unwrap();
        let slow = reference::conv3d(&x, &p.weights, &p.bias, stride);
        assert_eq!(fast.shape(), slow.shape());
        conv_err = conv_err.max(fast.data().iter().zip(slow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));

        let window = rng.random_range(1..=dims.iter().copied().min().unwrap().min(3));
        let (pooled, _) = maxpool3d_forward(&x, window).unwrap();
        let slow = reference::maxpool3d(&x, window);
        pool_err = pool_err.max(pooled.data().iter().zip(slow.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        conv_err <= 1e-12 && pool_err <= 1e-12 && secs < 60.0,
        format!("200 instances: conv max |diff| {conv_err:.1e}, pool {pool_err:.1e} (tol 1e-12); {secs:.1}s"),
    )
}

fn window_counts() -> Outcome {
    let mut bad = 0;
    let mut cases = 0;
    for t in 1..=50usize {
        let frames = (0..t).map(|i| Volume::full(&[1, 1, 1], i as f64)).collect();
        let series = Series4D::new("s", Group::Younger, frames).unwrap();
        for m in 1..=t {
            for s in 1..=5 {
                let brute = (0..t).filter(|a| a % s == 0 && a + m <= t).count();
                cases += 1;
                if sliding_window_mean(&series, m, s).unwrap().len() != brute {
                    bad += 1;
                }
            }
        }
    }
    let frames = (0..360).map(|_| Volume::zeros(&[1, 1, 1])).collect();
    let full = sliding_window_mean(&Series4D::new("s", Group::Older, frames).unwrap(), 2, 1).unwrap().len();
    outcome(bad == 0 && full == 359, format!("{cases} (T, m, s) cases, {bad} mismatches; T=360 m=2 s=1 gives {full}"))
}

// ---------------------------------------------------------------------------
// Training on phantoms

fn phantom_windows(spec: &PhantomSpec, m: usize, s: usize) -> Vec<(String, Group, Vec<Sample3D>)> {
    (0..spec.n_subjects())
        .map(|i| {
            let series = generate_subject(spec, i).unwrap();
            let w = sliding_window_mean(&series, m, s).unwrap();
            (series.subject_id.clone(), series.label, w)
        })
        .collect()
}

struct Prepared {
    train: Vec<Sample3D>,
    val: Vec<Sample3D>,
    test: Vec<Sample3D>,
    normalizer: Normalizer,
}

fn prepare(subjects: Vec<(String, Group, Vec<Sample3D>)>, split_seed: u64) -> Prepared {
    let ids: Vec<(String, Group)> = subjects.iter().map(|(id, g, _)| (id.clone(), *g)).collect();
    let manifest = stratified_subject_split(&ids, DEFAULT_RATIOS, split_seed).unwrap();
    let (mut train, mut val, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (id, _, w) in subjects {
        match manifest.split_of(&id).unwrap() {
            Split::Train => train.extend(w),
            Split::Val => val.extend(w),
            Split::Test => test.extend(w),
        }
    }
    let normalizer = fit_normalizer(&train).unwrap();
    for s in train.iter_mut().chain(val.iter_mut()).chain(test.iter_mut()) {
        normalizer.apply_in_place(s).unwrap();
    }
    Prepared { train, val, test, normalizer }
}

fn subject_auc(params: &CnnParams, samples: &[Sample3D]) -> f64 {
    let probs = predict(params, samples).unwrap();
    let per: Vec<SamplePrediction> = samples
        .iter()
        .zip(probs)
        .map(|(s, p)| SamplePrediction { subject_id: s.subject_id.clone(), label: s.label, probability: p })
        .collect();
    auc_roc(&soft_vote(&per).unwrap()).unwrap()
}

fn accuracy(params: &CnnParams, samples: &[Sample3D]) -> f64 {
    let probs = predict(params, samples).unwrap();
    let ok = probs.iter().zip(samples).filter(|(p, s)| (**p >= 0.5) == (s.label == Group::Older)).count();
    ok as f64 / samples.len() as f64
}

fn optimization_sanity() -> Outcome {
    let start = Instant::now();
    let mut aucs = Vec::new();
    let mut notes = Vec::new();
    let mut all_fit = true;
    for seed in 0..3u64 {
        let spec = PhantomSpec { n_young: 20, n_old: 20, seed, ..PhantomSpec::default() };
        let data = prepare(phantom_windows(&spec, 10, 10), seed);
        let mut config = CnnConfig::default();
        config.seed = seed;
        config.max_epochs = 50;
        config.early_stop_patience = 50;
        let params = init_params(&config, seed).unwrap();
        let mut trainer = Trainer::new(config, params, &data.train, &data.val).unwrap();
        let mut fit_at = None;
        while !trainer.is_finished() {
            trainer.run_epoch().unwrap();
            if accuracy(trainer.params(), &data.train) == 1.0 {
                fit_at = Some(trainer.history().epochs.len());
                break;
            }
        }
        all_fit &= fit_at.is_some();
        let auc = subject_auc(trainer.params(), &data.test);
        aucs.push(auc);
        notes.push(format!(
            "seed {seed}: {} train samples, 100% train acc after {} epochs, test AUC {auc:.3}",
            data.train.len(),
            fit_at.map_or("no (>50)".to_string(), |e| e.to_string())
        ));
    }
    let mean = aucs.iter().sum::<f64>() / aucs.len() as f64;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        all_fit && mean >= 0.95,
        format!("{}; mean test AUC {mean:.3} (need >= 0.95); {secs:.0}s (target < 1800s)", notes.join("; ")),
    )
}

fn null_control() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.data_dir = tmp.path().join("data");
    cfg.out_dir = tmp.path().join("out");
    cfg.cnn.input_shape = [16, 16, 16];
    cfg.window = 4;
    cfg.stride = 4;
    cfg.n_runs = 5;
    cfg.phantom.n_young = 200;
    cfg.phantom.n_old = 200;
    cfg.phantom.frames = 8;
    cfg.phantom.shape = [16, 16, 16];
    cfg.phantom.regions = vec![SignalRegion { center: [8, 8, 8], radius: 3.0, amplitude: [1.0, 1.0] }];
    cfg.phantom.seed = 77;
    assert!(!cfg.phantom.has_planted_signal());
    cmd_synth(&cfg, &cfg.data_dir).unwrap();
    let summary = cmd_train(&cfg).unwrap();
    let aucs: Vec<String> = summary.runs.iter().map(|r| format!("{:.3}", r.report.auc)).collect();
    let mean = summary.summary.auc.mean;
    let secs = start.elapsed().as_secs_f64();
    outcome(
        (0.4..=0.6).contains(&mean),
        format!(
            "400 subjects, identical amplitudes, 5 seeds: test AUCs [{}], mean {mean:.3} (need [0.4, 0.6]); {secs:.0}s",
            aucs.join(", ")
        ),
    )
}

// ---------------------------------------------------------------------------

fn split_integrity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut violations = 0;
    for _ in 0..1000 {
        let (ny, no) = (rng.random_range(10..=100), rng.random_range(10..=100));
        let subjects: Vec<(String, Group)> = (0..ny + no)
            .map(|i| (format!("s{i:04}"), if i < ny { Group::Younger } else { Group::Older }))
            .collect();
        let m = stratified_subject_split(&subjects, DEFAULT_RATIOS, rng.random()).unwrap();
        let mut seen = BTreeSet::new();
        let mut ok = Split::ALL.iter().all(|s| m.subjects(*s).into_iter().all(|id| seen.insert(id.to_string())));
        ok &= seen.len() == subjects.len();
        for (g, n) in [(Group::Younger, ny), (Group::Older, no)] {
            ok &= m.counts(g).iter().zip(DEFAULT_RATIOS).all(|(c, r)| (*c as f64 - r * n as f64).abs() <= 1.0);
        }
        violations += !ok as usize;
    }
    let cohort: Vec<(String, Group)> = (0..75)
        .map(|i| (format!("s{i:03}"), if i < 30 { Group::Younger } else { Group::Older }))
        .collect();
    let m = stratified_subject_split(&cohort, DEFAULT_RATIOS, 0).unwrap();
    let (y, o) = (m.counts(Group::Younger), m.counts(Group::Older));
    outcome(
        violations == 0 && y == [24, 3, 3] && o == [36, 4, 5],
        format!("1000 manifests, {violations} violations; 30/45 cohort splits to {y:?} and {o:?}"),
    )
}

fn metrics_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut worst = 0.0f64;
    let mut f1_worst = 0.0f64;
    for _ in 0..500 {
        let n = rng.random_range(2..=200);
        let mut labels: Vec<Group> = (0..n).map(|_| if rng.random() { Group::Older } else { Group::Younger }).collect();
        labels[0] = Group::Older;
        labels[1] = Group::Younger;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..30) as f64 / 29.0).collect();
        let (mut wins, mut pairs) = (0u64, 0u64);
        for i in 0..n {
            for j in 0..n {
                if labels[i] == Group::Older && labels[j] == Group::Younger {
                    pairs += 2;
                    wins += if scores[i] > scores[j] { 2 } else if scores[i] == scores[j] { 1 } else { 0 };
                }
            }
        }
        let auc = auc_from_scores(&scores, &labels).unwrap();
        worst = worst.max((auc - wins as f64 / pairs as f64).abs());

        let preds: Vec<SubjectPrediction> = (0..n)
            .map(|i| SubjectPrediction { subject_id: format!("s{i}"), label: labels[i], probability: scores[i], n_samples: 1 })
            .collect();
        let c = Confusion::from_predictions(&preds, DEFAULT_THRESHOLD);
        if c.tp > 0 {
            let precision = c.tp as f64 / (c.tp + c.fp) as f64;
            let recall = c.tp as f64 / (c.tp + c.fn_) as f64;
            f1_worst = f1_worst.max((c.f1().0 - 2.0 * (precision * recall) / (precision + recall)).abs());
        }
    }
    let tied = auc_from_scores(&[0.3; 7], &[Group::Older, Group::Younger, Group::Older, Group::Younger, Group::Younger, Group::Older, Group::Older]).unwrap();
    outcome(
        worst <= 1e-12 && f1_worst <= 1e-12 && tied == 0.5,
        format!("500 score sets: AUC vs pair counting max |diff| {worst:.1e}; F1 vs formula {f1_worst:.1e}; all-tied AUC {tied}"),
    )
}

// ---------------------------------------------------------------------------
// Sensitivity

fn sensitivity_recovery() -> Outcome {
    let start = Instant::now();
    let spec = PhantomSpec {
        n_young: 20,
        n_old: 20,
        frames: 10,
        shape: [24, 24, 24],
        regions: vec![SignalRegion { center: [12, 12, 12], radius: 5.5, amplitude: [0.0, 1.0] }],
        noise_sigma: 0.0,
        seed: 8,
        ..PhantomSpec::default()
    };
    let truth = spec.region_mask(&spec.regions[0]);
    let ball = truth.data().iter().filter(|&&v| v != 0.0).count();
    let data = prepare(phantom_windows(&spec, 2, 2), 8);
    let mut config = CnnConfig::default();
    config.input_shape = spec.shape;
    config.seed = 8;
    let (params, history) = bold3d::model::train(&config, &data.train, &data.val).unwrap();

    let mut notes = vec![format!(
        "24^3 noiseless phantom, ball {ball} voxels ({:.1}%), trained {} epochs",
        100.0 * ball as f64 / truth.len() as f64,
        history.epochs.len()
    )];
    let mut pass = true;
    for g in Group::BOTH {
        let members: Vec<Sample3D> = data.test.iter().filter(|s| s.label == g).cloned().collect();
        let maps = sensitivity_maps(&params, &members, g).unwrap();
        let gs = aggregate_group(&maps, g, Aggregation::Pooled, 95.0).unwrap();
        let d = dice(&gs.region_mask, &truth).unwrap();
        let (mut inside, mut outside) = (0.0f64, 0.0f64);
        for (v, t) in gs.mean_map.data().iter().zip(truth.data()) {
            // The map holds squared gradients; compare gradient magnitudes.
            let mag = v.sqrt();
            if *t != 0.0 { inside = inside.max(mag) } else { outside = outside.max(mag) }
        }
        let ratio = outside / inside;
        pass &= d > 0.5 && ratio <= 1e-3;
        notes.push(format!("group {g}: Dice {d:.3} (need > 0.5), out/in peak |grad| {ratio:.2e} (need <= 1e-3)"));
    }
    let _ = data.normalizer;
    notes.push(format!("{:.0}s", start.elapsed().as_secs_f64()));
    outcome(pass, notes.join("; "))
}

fn sensitivity_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let shape = [rng.random_range(1..=5), rng.random_range(1..=5), rng.random_range(1..=5)];
        let w = rand_vol(&mut rng, &shape);
        let x = rand_vol(&mut rng, &shape);
        let b = rng.random_range(-1.0..1.0);
        let model = DenseSigmoidModel::new(w.clone(), b).unwrap();
        let s = Sample3D { subject_id: "s".into(), label: Group::Older, window_index: 0, voxels: x.clone() };
        let target = if rng.random() { Group::Older } else { Group::Younger };
        let map = sensitivity_map(&model, &s, target).unwrap();
        let z: f64 = w.data().iter().zip(x.data()).map(|(a, c)| a * c).sum::<f64>() + b;
        let sig = 1.0 / (1.0 + (-z).exp());
        for (m, wi) in map.voxels.data().iter().zip(w.data()) {
            worst = worst.max((m - (sig * (1.0 - sig) * wi).powi(2)).abs());
        }
    }
    outcome(worst <= 1e-10, format!("50 dense+sigmoid models: max |map - (s'(z) w_i)^2| {worst:.1e} (tol 1e-10)"))
}

// ---------------------------------------------------------------------------

fn baseline_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let (mut gram, mut recon) = (0.0f64, 0.0f64);
    for (n, d) in [(20, 6), (12, 40), (30, 30), (8, 200), (50, 3)] {
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        let k = (n - 1).min(d);
        let model = pca_fit(&x, k).unwrap();
        let c = &model.components;
        gram = gram.max(c.matmul(&c.transpose()).unwrap().max_abs_diff(&Matrix::identity(k)));
        let back = model.inverse_transform(&model.transform(&x).unwrap()).unwrap();
        recon = recon.max(back.max_abs_diff(&x));
    }
    let mut gnorm = 0.0f64;
    for (n, d) in [(40, 3), (100, 10), (25, 60), (300, 1)] {
        let x = Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
        let y: Vec<f64> = (0..n).map(|i| if x.get(i, 0) + rng.random_range(-1.0..1.0) > 0.0 { 1.0 } else { 0.0 }).collect();
        let m = logreg_train(&x, &y, DEFAULT_L2, DEFAULT_MAX_ITERS, DEFAULT_TOL).unwrap();
        let (_, g) = logreg_objective(&x, &y, &m.weights, m.bias, DEFAULT_L2);
        gnorm = gnorm.max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
    }
    let s = 0.5f64;
    let a = [1.0, -1.0, 0.0, 0.0];
    let b: Vec<f64> = a.iter().zip([0.0, 0.0, 1.0, -1.0]).map(|(x, y)| s * x + (1.0 - s * s).sqrt() * y).collect();
    let z = fisher_z(&Matrix::from_rows(&[a.to_vec(), b]).unwrap()).unwrap().z.get(0, 1);
    outcome(
        gram < 1e-8 && recon < 1e-8 && gnorm < 1e-8 && (z - 0.5493).abs() <= 1e-4,
        format!("PCA Gram dev {gram:.1e}, full-rank recon {recon:.1e}; logreg grad norm {gnorm:.1e}; z(r=0.5) = {z:.6}"),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.data_dir = tmp.path().join("data");
    cfg.cnn.input_shape = [12, 12, 12];
    cfg.cnn.max_epochs = 4;
    cfg.cnn.batch_size = 8;
    cfg.window = 2;
    cfg.stride = 2;
    cfg.n_runs = 3;
    cfg.phantom.n_young = 10;
    cfg.phantom.n_old = 10;
    cfg.phantom.frames = 6;
    cfg.phantom.shape = [12, 12, 12];
    cfg.phantom.regions = vec![SignalRegion { center: [6, 6, 6], radius: 3.0, amplitude: [0.0, 1.0] }];
    cmd_synth(&cfg, &cfg.data_dir).unwrap();
    let mut tables = Vec::new();
    for name in ["a", "b"] {
        cfg.out_dir = tmp.path().join(name);
        cmd_train(&cfg).unwrap();
        tables.push(std::fs::read(cfg.out_dir.join("table.csv")).unwrap());
    }
    let same_table = tables[0] == tables[1];

    let data = prepare(phantom_windows(&cfg.phantom, 2, 2), 4);
    let mut config = cfg.cnn.clone();
    config.max_epochs = 8;
    config.early_stop_patience = 100;
    let init = init_params(&config, 12).unwrap();
    let whole = Trainer::new(config.clone(), init.clone(), &data.train, &data.val).unwrap().run().unwrap();
    let mut part = Trainer::new(config.clone(), init, &data.train, &data.val).unwrap();
    for _ in 0..3 {
        part.run_epoch().unwrap();
    }
    let path = tmp.path().join("state.vckp");
    Checkpoint {
        config: config.clone(),
        normalizer: data.normalizer.clone(),
        params: part.params().clone(),
        progress: Some(part.progress()),
    }
    .save(&path)
    .unwrap();
    drop(part);
    let ck = Checkpoint::load(&path).unwrap();
    let resumed = Trainer::resume(ck.config, ck.params, ck.progress.unwrap(), &data.train, &data.val).unwrap().run().unwrap();
    let bits = |p: &CnnParams| -> Vec<u64> {
        p.layers.iter().flat_map(|l| l.weights.data().iter().chain(l.bias.data())).map(|v| v.to_bits()).collect()
    };
    let same_resume = bits(&resumed.0) == bits(&whole.0) && resumed.1 == whole.1;
    outcome(
        same_table && same_resume,
        format!("cmd_train rerun table identical: {same_table}; resume after 3 of 8 epochs bit-identical: {same_resume}"),
    )
}

fn lr_schedule() -> Outcome {
    let mut spec = PhantomSpec::default();
    spec.n_young = 10;
    spec.n_old = 10;
    spec.frames = 2;
    spec.shape = [8, 8, 8];
    spec.regions = vec![SignalRegion { center: [4, 4, 4], radius: 2.0, amplitude: [0.0, 1.0] }];
    let data = prepare(phantom_windows(&spec, 2, 2), 1);
    let mut config = CnnConfig::default();
    config.input_shape = [8, 8, 8];
    config.conv1.kernel = 3;
    config.conv2.kernel = 2;
    config.max_epochs = 21;
    config.early_stop_patience = 100;
    let (_, history) = bold3d::model::train(&config, &data.train, &data.val).unwrap();
    let expect = |e: usize| match e {
        0..=6 => 0.1,
        7..=13 => 0.02,
        _ => 0.004,
    };
    let bad: Vec<String> = history
        .epochs
        .iter()
        .filter(|r| r.lr.to_bits() != f64::to_bits(expect(r.epoch)))
        .map(|r| format!("epoch {} lr {:e}", r.epoch, r.lr))
        .collect();
    outcome(
        history.epochs.len() == 21 && bad.is_empty(),
        format!("{} epochs recorded, mismatches: [{}]", history.epochs.len(), bad.join(", ")),
    )
}

fn main() {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("gradient_correctness", gradient_correctness),
        ("conv_pool_oracle", conv_pool_oracle),
        ("window_count_formula", window_counts),
        ("optimization_sanity", optimization_sanity),
        ("null_signal_control", null_control),
        ("split_integrity", split_integrity),
        ("metrics_oracle", metrics_oracle),
        ("sensitivity_recovery", sensitivity_recovery),
        ("sensitivity_closed_form", sensitivity_closed_form),
        ("baseline_correctness", baseline_correctness),
        ("determinism", determinism),
        ("lr_schedule", lr_schedule),
    ];
    let mut failed = 0;
    let mut ran = 0;
    for (name, run) in criteria {
        if filter.as_ref().is_some_and(|f| !name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let o = run();
        println!("[{}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
