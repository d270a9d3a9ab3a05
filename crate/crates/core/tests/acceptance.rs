//! Acceptance suite: one line per criterion, non-zero exit if any fails.
//!
//! Criteria run sequentially so their runtimes are measured without
//! contention from other tests.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use csp_core::autodiff::{finite_diff_check, finite_diff_check_with, Stencil, Tape, Tensor, Var};
use csp_core::csp::{draw_channel_plan, CspConfig, DrawKey, PretrainStrategy};
use csp_core::data::{mbr, stitch, tile, Dtype, RasterData, RasterImage, ScoreMap, SynthMode, SynthSpec, SynthTask};
use csp_core::metrics::{permutation_sensitivity, render_sensitivity_table, ConfusionMatrix, NamedPermutation};
use csp_core::model::{build_classifier, build_segmenter, Checkpoint};
use csp_core::train::{
    finetune, lr_at, pretrain, AdamWConfig, Dataset, Decay, ModelConfig, NoHooks, ScheduleConfig, TrainConfig,
};
use csp_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Check = std::result::Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: Result<T>) -> std::result::Result<T, String> {
    r.map_err(|e| e.to_string())
}

// 1 ------------------------------------------------------------------------

fn plan_laws() -> Check {
    let cfg = CspConfig::new(3, 5, 2024).unwrap();
    let draws = 10_000;
    let mut single = [0usize; 3];
    for i in 0..draws {
        let plan = ok(draw_channel_plan(&cfg, DrawKey::new(0, i)))?;
        let counts = plan.counts(3);
        let mut sorted = counts.clone();
        sorted.sort_unstable();
        ensure(sorted == [1, 2, 2], || format!("draw {i}: counts {counts:?}"))?;
        single[counts.iter().position(|&c| c == 1).unwrap()] += 1;
    }
    let freqs: Vec<f64> = single.iter().map(|&c| c as f64 / draws as f64).collect();
    ensure(freqs.iter().all(|f| (f - 1.0 / 3.0).abs() <= 0.02), || format!("count-1 frequencies {freqs:.4?}"))?;
    Ok(format!("10000 draws, counts always a permutation of (2,2,1); count-1 frequencies {freqs:.4?}"))
}

// 2 ------------------------------------------------------------------------

fn uniformity() -> Check {
    let cfg = CspConfig::new(3, 3, 77).unwrap();
    let draws = 60_000u64;
    let mut hist: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for i in 0..draws {
        let plan = ok(draw_channel_plan(&cfg, DrawKey::new(i / 1000, i % 1000)))?;
        *hist.entry(plan.sources().to_vec()).or_default() += 1;
    }
    ensure(hist.len() == 6, || format!("{} distinct orderings", hist.len()))?;
    let expected = draws as f64 / 6.0;
    let chi2: f64 = hist.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let critical = ChiSquared::new(5.0).unwrap().inverse_cdf(0.999);
    ensure(chi2 < critical, || format!("chi-square {chi2:.3} >= {critical:.3}"))?;
    let freqs: Vec<f64> = hist.values().map(|&o| o as f64 / draws as f64).collect();
    ensure(freqs.iter().all(|f| (f - 1.0 / 6.0).abs() <= 0.01), || format!("frequencies {freqs:.4?}"))?;
    Ok(format!("chi-square {chi2:.3} < {critical:.3} (alpha 0.001); frequencies {freqs:.4?}"))
}

// 3 ------------------------------------------------------------------------

const SHAPES_PER_OP: usize = 20;
const EPS: f64 = 1e-6;
/// Step for the end-to-end check; the four-point stencil keeps truncation
/// error negligible while roundoff stays below the tolerance on tiny gradients.
const E2E_EPS: f64 = 1e-3;

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// `sum(out ⊙ r)` with a fixed random `r`, so every output element matters.
fn project(tape: &mut Tape<f64>, out: Var, r: &Tensor<f64>) -> Result<Var> {
    let rv = tape.constant(r.clone());
    let p = tape.mul(out, rv)?;
    Ok(tape.sum(p))
}

struct OpStats {
    worst: f64,
    checked: usize,
    excluded: usize,
    shapes: usize,
}

/// Gradient of `sum(op(args) ⊙ r)` w.r.t. every argument.
fn check_op(
    stats: &mut OpStats,
    args: &[Tensor<f64>],
    out_shape: &[usize],
    rng: &mut ChaCha8Rng,
    op: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
) -> std::result::Result<(), String> {
    let r = rand_tensor(rng, out_shape);
    for which in 0..args.len() {
        let f = |tape: &mut Tape<f64>, x: Var| -> Result<Var> {
            let vars: Vec<Var> =
                args.iter().enumerate().map(|(i, a)| if i == which { x } else { tape.constant(a.clone()) }).collect();
            let out = op(tape, &vars)?;
            project(tape, out, &r)
        };
        let g = ok(finite_diff_check(f, &args[which], EPS))?;
        stats.worst = stats.worst.max(g.max_rel_error);
        stats.checked += g.checked;
        stats.excluded += g.excluded.len();
    }
    stats.shapes += 1;
    Ok(())
}

fn gradient_fidelity() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut report = Vec::new();
    let mut worst_op = 0.0f64;
    let mut run = |name: &str,
                   rng: &mut ChaCha8Rng,
                   gen: &mut dyn FnMut(&mut ChaCha8Rng, &mut OpStats) -> std::result::Result<(), String>|
     -> std::result::Result<(), String> {
        let mut stats = OpStats { worst: 0.0, checked: 0, excluded: 0, shapes: 0 };
        for _ in 0..SHAPES_PER_OP {
            gen(rng, &mut stats)?;
        }
        ensure(stats.worst <= 1e-5, || format!("{name}: max relative error {:.2e}", stats.worst))?;
        ensure(stats.shapes >= SHAPES_PER_OP && stats.checked > 0, || format!("{name}: too few checks"))?;
        worst_op = worst_op.max(stats.worst);
        report.push(format!("{name} {:.1e} ({} shapes, {} excl)", stats.worst, stats.shapes, stats.excluded));
        Ok(())
    };
    let dims = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| rng.random_range(lo..=hi);

    run("add", &mut rng, &mut |rng, st| {
        let s = [dims(rng, 1, 3), dims(rng, 1, 4), dims(rng, 1, 5)];
        let args = [rand_tensor(rng, &s), rand_tensor(rng, &s)];
        check_op(st, &args, &s, rng, |t, v| t.add(v[0], v[1]))
    })?;
    run("mul", &mut rng, &mut |rng, st| {
        let s = [dims(rng, 1, 4), dims(rng, 1, 6)];
        let args = [rand_tensor(rng, &s), rand_tensor(rng, &s)];
        check_op(st, &args, &s, rng, |t, v| t.mul(v[0], v[1]))
    })?;
    run("sum", &mut rng, &mut |rng, st| {
        let s = [dims(rng, 1, 5), dims(rng, 1, 5)];
        let args = [rand_tensor(rng, &s)];
        check_op(st, &args, &[1], rng, |t, v| Ok(t.sum(v[0])))
    })?;
    run("relu", &mut rng, &mut |rng, st| {
        let s = [dims(rng, 1, 3), dims(rng, 1, 3), dims(rng, 2, 5), dims(rng, 2, 5)];
        let args = [rand_tensor(rng, &s)];
        check_op(st, &args, &s, rng, |t, v| Ok(t.relu(v[0])))
    })?;
    run("conv2d", &mut rng, &mut |rng, st| {
        let (n, cin, cout) = (dims(rng, 1, 2), dims(rng, 1, 3), dims(rng, 1, 3));
        let k = [1, 3][rng.random_range(0..2)];
        let (stride, pad) = (dims(rng, 1, 2), dims(rng, 0, 1));
        let (h, w) = (dims(rng, k.max(2), 7), dims(rng, k.max(2), 7));
        let (ho, wo) = ((h + 2 * pad - k) / stride + 1, (w + 2 * pad - k) / stride + 1);
        let args = [rand_tensor(rng, &[n, cin, h, w]), rand_tensor(rng, &[cout, cin, k, k]), rand_tensor(rng, &[cout])];
        check_op(st, &args, &[n, cout, ho, wo], rng, |t, v| t.conv2d(v[0], v[1], v[2], stride, pad))
    })?;
    run("max_pool2d", &mut rng, &mut |rng, st| {
        let (k, stride) = (dims(rng, 1, 3), dims(rng, 1, 3));
        let (h, w) = (dims(rng, k, 8), dims(rng, k, 8));
        let s = [dims(rng, 1, 2), dims(rng, 1, 3), h, w];
        let args = [rand_tensor(rng, &s)];
        let out = [s[0], s[1], (h - k) / stride + 1, (w - k) / stride + 1];
        check_op(st, &args, &out, rng, |t, v| t.max_pool2d(v[0], k, stride))
    })?;
    run("upsample_nearest", &mut rng, &mut |rng, st| {
        let f = dims(rng, 1, 3);
        let s = [dims(rng, 1, 2), dims(rng, 1, 3), dims(rng, 1, 4), dims(rng, 1, 4)];
        let args = [rand_tensor(rng, &s)];
        check_op(st, &args, &[s[0], s[1], s[2] * f, s[3] * f], rng, |t, v| t.upsample_nearest(v[0], f))
    })?;
    run("global_avg_pool", &mut rng, &mut |rng, st| {
        let s = [dims(rng, 1, 3), dims(rng, 1, 4), dims(rng, 1, 5), dims(rng, 1, 5)];
        let args = [rand_tensor(rng, &s)];
        check_op(st, &args, &s[..2], rng, |t, v| t.global_avg_pool(v[0]))
    })?;
    run("linear", &mut rng, &mut |rng, st| {
        let (n, d, k) = (dims(rng, 1, 4), dims(rng, 1, 6), dims(rng, 1, 5));
        let args = [rand_tensor(rng, &[n, d]), rand_tensor(rng, &[k, d]), rand_tensor(rng, &[k])];
        check_op(st, &args, &[n, k], rng, |t, v| t.linear(v[0], v[1], v[2]))
    })?;
    run("softmax_cross_entropy", &mut rng, &mut |rng, st| {
        let (n, k) = (dims(rng, 1, 3), dims(rng, 2, 5));
        let spatial = rng.random_bool(0.5);
        let (shape, positions) = if spatial {
            let (h, w) = (dims(rng, 1, 4), dims(rng, 1, 4));
            (vec![n, k, h, w], n * h * w)
        } else {
            (vec![n, k], n)
        };
        let mut targets: Vec<usize> = (0..positions).map(|_| rng.random_range(0..k)).collect();
        for t in targets.iter_mut().skip(1) {
            if rng.random_bool(0.2) {
                *t = 255;
            }
        }
        let args = [Tensor::from_fn(&shape, |_| rng.random_range(-3.0..3.0))];
        // The loss is already scalar; project with r = [1] is the loss itself.
        let r = Tensor::scalar(1.0);
        let f = |tape: &mut Tape<f64>, x: Var| -> Result<Var> {
            let l = tape.softmax_cross_entropy_masked(x, &targets, 255)?;
            project(tape, l, &r)
        };
        let g = ok(finite_diff_check(f, &args[0], EPS))?;
        st.worst = st.worst.max(g.max_rel_error);
        st.checked += g.checked;
        st.shapes += 1;
        Ok(())
    })?;

    // End to end: masked cross-entropy of a small segmenter, w.r.t. the input
    // and every parameter tensor.
    let mut e2e_worst = 0.0f64;
    let mut e2e_checked = 0;
    let mut e2e_excluded = 0;
    for trial in 0..SHAPES_PER_OP {
        let n_in = rng.random_range(1..=3);
        let k = rng.random_range(2..=4);
        let width = rng.random_range(1..=3);
        let size = 4 * rng.random_range(1..=2);
        let net = ok(build_segmenter::<f64>(n_in, k, width, 100 + trial as u64))?;
        let mut net = net;
        for p in net.params_mut() {
            for v in p.data_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
        let input = rand_tensor(&mut rng, &[1, n_in, size, size]);
        let targets: Vec<usize> =
            (0..size * size).map(|i| if i % 7 == 3 { 255 } else { rng.random_range(0..k) }).collect();
        let loss_with = |tape: &mut Tape<f64>, which: Option<usize>, x: Var| -> Result<Var> {
            let mut ps = net.bind_frozen(tape);
            let inp = match which {
                Some(j) => {
                    ps.vars[j] = x;
                    tape.constant(input.clone())
                }
                None => x,
            };
            let logits = net.forward(tape, &ps, inp)?;
            tape.softmax_cross_entropy_masked(logits, &targets, 255)
        };
        let mut targets_to_check: Vec<(Option<usize>, Tensor<f64>)> = vec![(None, input.clone())];
        targets_to_check.extend(net.params().iter().cloned().enumerate().map(|(j, p)| (Some(j), p)));
        for (which, at) in targets_to_check {
            let g = ok(finite_diff_check_with(|t, x| loss_with(t, which, x), &at, E2E_EPS, Stencil::FourPoint))?;
            e2e_worst = e2e_worst.max(g.max_rel_error);
            e2e_checked += g.checked;
            e2e_excluded += g.excluded.len();
        }
    }
    ensure(e2e_worst <= 1e-4, || format!("segmenter end-to-end max relative error {e2e_worst:.2e}"))?;
    Ok(format!(
        "ops max {worst_op:.1e} <= 1e-5 [{}]; segmenter end-to-end max {e2e_worst:.1e} <= 1e-4 over {SHAPES_PER_OP} nets ({e2e_checked} coords, {e2e_excluded} kinks excluded)",
        report.join(", ")
    ))
}

// 4 ------------------------------------------------------------------------

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut classes_seen = 0;
    for trial in 0..200 {
        let k = rng.random_range(1..=5usize);
        let n = 16 * 16;
        let gt: Vec<u8> =
            (0..n).map(|_| if rng.random_bool(0.15) { 255 } else { rng.random_range(0..k) as u8 }).collect();
        let pred: Vec<u8> = (0..n).map(|_| rng.random_range(0..k) as u8).collect();
        let mut cm = ConfusionMatrix::new(k);
        let mask = |v: &Vec<u8>| csp_core::data::LabelMask::new(16, 16, v.clone()).unwrap();
        ok(cm.update(&mask(&pred), &mask(&gt), 255))?;
        let iou = cm.iou_scores();
        let f1 = cm.f1_scores();
        // Set-counting oracle over pixel index sets.
        let mut oracle_iou = Vec::new();
        let mut oracle_f1 = Vec::new();
        for c in 0..k as u8 {
            let g: Vec<usize> = (0..n).filter(|&i| gt[i] == c).collect();
            let p: Vec<usize> = (0..n).filter(|&i| pred[i] == c && gt[i] != 255).collect();
            let inter = g.iter().filter(|i| p.contains(i)).count() as u64;
            let union = (g.len() + p.len()) as u64 - inter;
            let (tp, fp, fn_) = (inter, p.len() as u64 - inter, g.len() as u64 - inter);
            let counts = cm.class_counts(c as usize);
            ensure((counts.tp, counts.fp, counts.fn_) == (tp, fp, fn_), || format!("trial {trial} class {c}: counts"))?;
            oracle_iou.push((union > 0).then(|| inter as f64 / union as f64));
            oracle_f1.push((union > 0).then(|| (2 * tp) as f64 / (2 * tp + fp + fn_) as f64));
            if union > 0 {
                classes_seen += 1;
                // F1 = 2·IoU/(1+IoU) as an identity of rationals: with IoU = a/b,
                // 2(a/b)/(1 + a/b) = 2a/(a+b).
                let (a, b) = (inter, union);
                ensure((2 * tp) * (a + b) == (2 * a) * (2 * tp + fp + fn_), || {
                    format!("trial {trial}: F1/IoU identity")
                })?;
                let (i, f) = (iou.per_class[c as usize].unwrap(), f1.per_class[c as usize].unwrap());
                ensure((f - 2.0 * i / (1.0 + i)).abs() <= 4.0 * f64::EPSILON, || {
                    format!("trial {trial}: float identity")
                })?;
            }
        }
        let mean = |v: &[Option<f64>]| {
            let d: Vec<f64> = v.iter().flatten().copied().collect();
            (!d.is_empty()).then(|| d.iter().sum::<f64>() / d.len() as f64)
        };
        ensure(iou.per_class == oracle_iou && iou.mean == mean(&oracle_iou), || {
            format!("trial {trial}: IoU mismatch")
        })?;
        ensure(f1.per_class == oracle_f1 && f1.mean == mean(&oracle_f1), || format!("trial {trial}: F1 mismatch"))?;
    }
    Ok(format!("200 random triples, {classes_seen} defined classes, IoU/F1 and means identical to set counting"))
}

// 5 ------------------------------------------------------------------------

fn schedule_exactness() -> Check {
    let rel = |got: f64, want: f64| if want == 0.0 { got.abs() } else { ((got - want) / want).abs() };
    let pre = ScheduleConfig::pretrain_default();
    // Epoch units, and iteration units for a 1,281,167-image corpus at batch 128.
    let iters = 1_281_167u64.div_ceil(128);
    let mut checks: Vec<(&str, f64, f64)> = Vec::new();
    for (label, s) in [("epochs", pre), ("iterations", pre.in_iterations(iters))] {
        let _ = label;
        checks.push(("pretrain lr(0)", ok(lr_at(0, &s))?, 1.25e-7));
        checks.push(("pretrain lr(W)", ok(lr_at(s.warmup, &s))?, 1.25e-4));
        checks.push(("pretrain lr(end)", ok(lr_at(s.total, &s))?, 0.0));
    }
    let ft = ScheduleConfig::finetune_default();
    checks.push(("finetune lr(1500)", ok(lr_at(1500, &ft))?, 1e-4));
    checks.push(("finetune lr(5750)", ok(lr_at(5750, &ft))?, 5e-5));
    checks.push(("finetune lr(10000)", ok(lr_at(10_000, &ft))?, 0.0));
    for &(name, got, want) in &checks {
        ensure(rel(got, want) <= 1e-12, || format!("{name} = {got:e}, expected {want:e}"))?;
    }
    let _ = Decay::Cosine;
    Ok(format!("{} schedule points within 1e-12 relative", checks.len()))
}

// 6 ------------------------------------------------------------------------

/// Spatial-cue classification data with a decaying per-channel gain profile.
fn order_data() -> Result<Dataset> {
    let mut spec = SynthSpec::new(SynthMode::SpatialCue, SynthTask::Classification, 4, 3, 16, 1);
    spec.noise = 1.3;
    spec.train = 2000;
    spec.val = 500;
    Dataset::from_synth(&spec)
}

fn order_config(epochs: u64) -> (TrainConfig, ScheduleConfig) {
    let cfg = TrainConfig {
        batch_size: 32,
        epochs,
        seed: 3,
        patch: 16,
        scales: vec![1.0],
        flip_prob: 0.5,
        ..TrainConfig::pretrain_default()
    };
    let sched = ScheduleConfig {
        base_lr: 2e-3,
        warmup: 1,
        start_factor: 1e-3,
        decay: Decay::Cosine,
        total: epochs,
        min_lr: 0.0,
    };
    (cfg, sched)
}

fn order_sensitivity() -> Check {
    let data = ok(order_data())?;
    let (cfg, sched) = order_config(10);
    let model = ModelConfig { input_channels: 3, width: 32 };
    let perms = [
        NamedPermutation::labelled(vec![0, 1, 2], &["R".into(), "G".into(), "B".into()]),
        NamedPermutation::labelled(vec![2, 1, 0], &["R".into(), "G".into(), "B".into()]),
    ];
    let mut reports = Vec::new();
    for strategy in [PretrainStrategy::Baseline, PretrainStrategy::Csp(ok(CspConfig::new(3, 3, 5))?)] {
        let out = ok(pretrain::<f32>(&data, &strategy, &model, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks))?;
        reports.push(ok(permutation_sensitivity(
            &out.network,
            &data.val,
            &data.stats,
            &perms,
            &strategy.tag(),
            &data.class_names,
        ))?);
    }
    println!("{}", render_sensitivity_table(&reports));
    let (base, csp) = (&reports[0], &reports[1]);
    let pts = |v: f64| 100.0 * v;
    let base_drop = 0.0 - pts(base.rows[1].delta_top1);
    let csp_drop = 0.0 - pts(csp.rows[1].delta_top1);
    ensure(pts(base.rows[0].top1) >= 90.0, || format!("baseline top-1 {:.2}", pts(base.rows[0].top1)))?;
    ensure(pts(csp.rows[0].top1) >= 90.0, || format!("CSP-3 top-1 {:.2}", pts(csp.rows[0].top1)))?;
    ensure(base_drop >= 5.0, || format!("baseline drop under reversal {base_drop:.2} < 5"))?;
    ensure(csp_drop <= 1.0, || format!("CSP-3 drop under reversal {csp_drop:.2} > 1"))?;
    Ok(format!(
        "Baseline {:.2} -> {:.2} (drop {base_drop:.2} >= 5), CSP-3 {:.2} -> {:.2} (drop {csp_drop:.2} <= 1)",
        pts(base.rows[0].top1),
        pts(base.rows[1].top1),
        pts(csp.rows[0].top1),
        pts(csp.rows[1].top1)
    ))
}

// 7 ------------------------------------------------------------------------

fn transfer_benefit() -> Check {
    // CSP-4 pre-training on 3-channel texture classification.
    let mut pspec = SynthSpec::new(SynthMode::SpatialCue, SynthTask::Classification, 6, 3, 16, 11);
    pspec.train = 2000;
    pspec.val = 200;
    let pdata = ok(Dataset::from_synth(&pspec))?;
    let epochs = 8;
    let pcfg = TrainConfig {
        batch_size: 32,
        epochs,
        seed: 4,
        patch: 16,
        scales: vec![1.0],
        flip_prob: 0.5,
        ..TrainConfig::pretrain_default()
    };
    let psched = ScheduleConfig {
        base_lr: 2e-3,
        warmup: 1,
        start_factor: 1e-3,
        decay: Decay::Cosine,
        total: epochs,
        min_lr: 0.0,
    };
    let strategy = PretrainStrategy::Csp(ok(CspConfig::new(3, 4, 9))?);
    let model = ModelConfig { input_channels: 4, width: 32 };
    let pre = ok(pretrain::<f32>(&pdata, &strategy, &model, &pcfg, &psched, &AdamWConfig::default(), &mut NoHooks))?;

    // 4-channel mixed-cue segmentation, identical budgets.
    let mut sspec = SynthSpec::new(SynthMode::Mixed, SynthTask::Segmentation, 4, 4, 64, 21);
    sspec.train = 200;
    sspec.val = 20;
    let sdata = ok(Dataset::from_synth(&sspec))?;
    let iters = 1000;
    let fcfg = TrainConfig { batch_size: 8, iterations: iters, seed: 6, patch: 32, ..TrainConfig::finetune_default() };
    let fsched = ScheduleConfig {
        base_lr: 1e-3,
        warmup: 100,
        start_factor: 1e-3,
        decay: Decay::Polynomial { power: 1.0 },
        total: iters,
        min_lr: 0.0,
    };
    let mut miou = Vec::new();
    for init in [Some(&pre.checkpoint), None] {
        let out = ok(finetune::<f32>(&sdata, init, None, 32, &fcfg, &fsched, &AdamWConfig::default(), &mut NoHooks))?;
        ensure(out.stem_adaptations == 0, || "CSP-4 checkpoint triggered stem adaptation".into())?;
        let last = out.evaluations.last().ok_or("no evaluation")?;
        miou.push(100.0 * last.1.miou.ok_or("undefined mIoU")?);
    }
    let gain = miou[0] - miou[1];
    ensure(gain >= 3.0, || format!("CSP-4 {:.2} vs scratch {:.2} mIoU (gain {gain:.2} < 3)", miou[0], miou[1]))?;
    Ok(format!(
        "CSP-4 fine-tune {:.2} vs scratch {:.2} mIoU after {iters} iterations (gain {gain:.2} >= 3)",
        miou[0], miou[1]
    ))
}

// 8 ------------------------------------------------------------------------

fn round_trips() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut cases = 0;
    for p in [8usize, 16] {
        for s in [p, p / 2] {
            for h in 1..=70 {
                for w in 1..=70 {
                    let data: Vec<f32> = (0..2 * h * w).map(|_| rng.random_range(-10.0..10.0)).collect();
                    let img = RasterImage::from_f32(vec!["a".into(), "b".into()], h, w, data).unwrap();
                    let (tiles, grid) = ok(tile(&img, p, s))?;
                    let maps: Vec<ScoreMap> = tiles.iter().map(ScoreMap::from_image).collect();
                    let back = ok(stitch(&maps, &grid))?;
                    let orig = ScoreMap::from_image(&img);
                    let same = back.data.iter().zip(&orig.data).all(|(a, b)| a.to_bits() == b.to_bits());
                    ensure(same && back.height == h && back.width == w, || format!("tile/stitch {h}x{w} P={p} S={s}"))?;
                    cases += 1;
                }
            }
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for dtype in [Dtype::U8, Dtype::U16, Dtype::F32] {
        let n = 4 * 9 * 7;
        let data = match dtype {
            Dtype::U8 => RasterData::U8((0..n).map(|_| rng.random()).collect()),
            Dtype::U16 => RasterData::U16((0..n).map(|_| rng.random()).collect()),
            Dtype::F32 => RasterData::F32((0..n).map(|_| f32::from_bits(rng.random::<u32>() & 0x7f7f_ffff)).collect()),
        };
        let bands = ["R", "G", "B", "IR"].map(String::from).to_vec();
        let img = RasterImage::new(bands, 9, 7, data).unwrap();
        let path = dir.path().join(format!("{dtype:?}.mbr"));
        ok(mbr::save_mbr(&img, &path))?;
        let back = ok(mbr::load_mbr(&path))?;
        let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
        ensure(ok(mbr::encode(&back))? == bytes && back.bands() == img.bands(), || format!("MBR {dtype:?}"))?;
        ensure((0..4).all(|c| back.plane_bytes(c) == img.plane_bytes(c)), || format!("MBR {dtype:?} planes"))?;
    }
    let net = ok(build_classifier::<f32>(4, 5, 8, 3))?;
    let ck = Checkpoint::from_network(&net, "CSP-4", 77, 3);
    let path = dir.path().join("c.cspk");
    ok(csp_core::model::save_checkpoint(&ck, &path))?;
    let back = ok(csp_core::model::load_checkpoint(&path))?;
    let bytes = std::fs::read(&path).map_err(|e| e.to_string())?;
    ensure(back == ck && ok(back.encode())? == bytes, || "checkpoint round trip".into())?;
    ensure(ok(back.to_network::<f32>())? == net, || "checkpoint network".into())?;
    Ok(format!(
        "{cases} tile/stitch cases bitwise exact; MBR u8/u16/f32 and checkpoint save->load->save byte-identical"
    ))
}

// 9 ------------------------------------------------------------------------

fn determinism() -> Check {
    let mut spec = SynthSpec::new(SynthMode::SpatialCue, SynthTask::Classification, 4, 3, 16, 9);
    spec.train = 300;
    spec.val = 50;
    let data = ok(Dataset::from_synth(&spec))?;
    let (cfg, sched) = order_config(3);
    let cfg = TrainConfig { scales: vec![0.75, 1.0, 1.5], ..cfg };
    let model = ModelConfig { input_channels: 3, width: 32 };
    let strategy = PretrainStrategy::Csp(ok(CspConfig::new(3, 3, 12))?);
    let run = || -> std::result::Result<Vec<u8>, String> {
        let out = ok(pretrain::<f32>(&data, &strategy, &model, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks))?;
        ok(out.checkpoint.encode())
    };
    let (a, b) = (run()?, run()?);
    ensure(a == b, || "checkpoints differ".into())?;
    Ok(format!("two CSP-3 pre-training runs gave byte-identical {}-byte checkpoints", a.len()))
}

fn main() {
    type Criterion = (usize, &'static str, Duration, fn() -> Check);
    let criteria: [Criterion; 9] = [
        (1, "CSP plan laws", Duration::from_secs(5), plan_laws),
        (2, "shuffle uniformity", Duration::from_secs(10), uniformity),
        (3, "gradient fidelity", Duration::from_secs(120), gradient_fidelity),
        (4, "metrics oracle equivalence", Duration::from_secs(10), metrics_oracle),
        (5, "schedule exactness", Duration::from_secs(1), schedule_exactness),
        (6, "channel-order sensitivity analog", Duration::from_secs(600), order_sensitivity),
        (7, "transfer benefit", Duration::from_secs(600), transfer_benefit),
        (8, "round trips", Duration::from_secs(30), round_trips),
        (9, "determinism", Duration::from_secs(300), determinism),
    ];
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, limit, f) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (status, detail) = match result {
            Ok(d) if elapsed <= limit => ("PASS", d),
            Ok(d) => {
                ("FAIL", format!("{d}; runtime {:.1}s over the {}s limit", elapsed.as_secs_f64(), limit.as_secs()))
            }
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("criterion {id} [{status}] {name} ({:.2}s): {detail}", elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
