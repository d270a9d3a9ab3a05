use std::path::{Path, PathBuf};

use csp_core::batch::stack_images;
use csp_core::csp::{apply_plan, draw_channel_plan, ChannelPlan, CspConfig, DrawKey};
use csp_core::data::synth::synth_sample;
use csp_core::data::{
    load_raster, normalize, png_io, synth_generate, DatasetManifest, Sample, SynthMode, SynthSpec, SynthTask,
};
use csp_core::fsutil::{atomic_write, read_file, write_json};
use csp_core::metrics::topk::argmax;
use csp_core::metrics::{
    evaluate_segmentation, permutation_sensitivity, render_class_breakdown, render_segmentation_table,
    render_sensitivity_table, render_table, topk_accuracy, ConfusionMatrix, MetricsReport, NamedPermutation,
    SensitivityReport,
};
use csp_core::model::{load_checkpoint, save_checkpoint, Checkpoint, Head};
use csp_core::train::{
    band_indices, finetune as run_finetune, pretrain as run_pretrain, read_log, Dataset, FileHooks, ModelConfig,
};
use csp_core::{Error, Result};
use serde_json::Value;

use crate::config::{merge, Phase, RunConfig};
use crate::{EvalArgs, FinetuneArgs, PretrainArgs, PreviewArgs, ReportArgs, SensitivityArgs, SynthArgs, TrainFlags};

/// Log records are echoed to stderr unless `CSP_LOG` is `quiet`, `off` or `0`.
fn echo_logs() -> bool {
    !matches!(std::env::var("CSP_LOG").as_deref(), Ok("quiet" | "off" | "0"))
}

fn required(value: Option<PathBuf>, field: &str) -> Result<PathBuf> {
    value.ok_or_else(|| Error::config(field, "is required"))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Refuses to write over any input.
fn guard_outputs(inputs: &[&Path], outputs: &[(&str, Option<&Path>)]) -> Result<()> {
    for (field, out) in outputs {
        if let Some(out) = out {
            if inputs.iter().any(|i| same_file(i, out)) {
                return Err(Error::config(*field, format!("{} is also an input", out.display())));
            }
        }
    }
    Ok(())
}

fn apply_train_flags(cfg: &mut RunConfig, f: &TrainFlags) {
    let p = &mut cfg.paths;
    for (slot, flag) in [
        (&mut p.manifest, &f.manifest),
        (&mut p.out, &f.out),
        (&mut p.log, &f.log),
        (&mut p.checkpoint_dir, &f.checkpoint_dir),
    ] {
        if flag.is_some() {
            slot.clone_from(flag);
        }
    }
    let t = &mut cfg.train;
    if let Some(v) = f.seed {
        t.seed = v;
    }
    if let Some(v) = f.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = f.patch {
        t.patch = v;
    }
    if let Some(v) = &f.scales {
        t.scales.clone_from(v);
    }
    if let Some(v) = f.flip_prob {
        t.flip_prob = v;
    }
    if let Some(v) = f.checkpoint_every {
        t.checkpoint_every = v;
    }
    if let Some(v) = f.log_every {
        t.log_every = v;
    }
    if let Some(v) = f.lr {
        cfg.schedule.base_lr = v;
    }
    if let Some(v) = f.warmup {
        cfg.schedule.warmup = v;
    }
    if let Some(v) = f.weight_decay {
        cfg.adamw.weight_decay = v;
    }
    if let Some(v) = f.width {
        cfg.model.width = v;
    }
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{:.2}", 100.0 * x))
}

pub fn pretrain(a: PretrainArgs) -> Result<String> {
    let (mut cfg, explicit_total) = RunConfig::load(Phase::Pretrain, a.common.config.as_deref())?;
    apply_train_flags(&mut cfg, &a.common);
    if let Some(v) = a.strategy {
        cfg.strategy.kind = v;
    }
    if a.csp_n.is_some() {
        cfg.strategy.n = a.csp_n;
    }
    if let Some(v) = a.csp_seed {
        cfg.strategy.seed = v;
    }
    if let Some(v) = a.redraw {
        cfg.strategy.redraw = v.into();
    }
    if a.input_channels.is_some() {
        cfg.model.input_channels = a.input_channels;
    }
    if let Some(v) = a.epochs {
        cfg.train.epochs = v;
    }
    if !explicit_total {
        cfg.schedule.total = cfg.train.epochs;
    }
    let manifest_path = required(cfg.paths.manifest.clone(), "paths.manifest")?;
    let out = required(cfg.paths.out.clone(), "paths.out")?;
    guard_outputs(&[&manifest_path], &[("paths.out", Some(&out)), ("paths.log", cfg.paths.log.as_deref())])?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    let (strategy, channels) = cfg.pretrain_strategy(manifest.bands.len())?;
    cfg.train.validate()?;
    cfg.schedule.validate()?;
    cfg.adamw.validate()?;

    let data = Dataset::from_manifest(&manifest)?;
    let mut hooks = FileHooks::new(cfg.paths.log.as_deref(), cfg.paths.checkpoint_dir.as_deref(), echo_logs())?;
    let model = ModelConfig { input_channels: channels, width: cfg.model.width };
    let outcome = run_pretrain::<f32>(&data, &strategy, &model, &cfg.train, &cfg.schedule, &cfg.adamw, &mut hooks)?;
    save_checkpoint(&outcome.checkpoint, &out)?;
    let last = outcome.history.last();
    Ok(format!(
        "pretrain {}: epochs={} train_loss={:.4} val_top1={} checkpoint={}",
        strategy.tag(),
        cfg.train.epochs,
        last.map_or(f64::NAN, |h| h.loss),
        fmt_pct(last.and_then(|h| h.val_top1)),
        out.display()
    ))
}

pub fn finetune(a: FinetuneArgs) -> Result<String> {
    let (mut cfg, explicit_total) = RunConfig::load(Phase::Finetune, a.common.config.as_deref())?;
    apply_train_flags(&mut cfg, &a.common);
    if a.init.is_some() {
        cfg.paths.init.clone_from(&a.init);
    }
    if a.report.is_some() {
        cfg.paths.report.clone_from(&a.report);
    }
    if a.bands.is_some() {
        cfg.bands.clone_from(&a.bands);
    }
    if let Some(v) = a.iterations {
        cfg.train.iterations = v;
    }
    if let Some(v) = a.eval_every {
        cfg.train.eval_every = v;
    }
    if !explicit_total {
        cfg.schedule.total = cfg.train.iterations;
    }
    let manifest_path = required(cfg.paths.manifest.clone(), "paths.manifest")?;
    let out = required(cfg.paths.out.clone(), "paths.out")?;
    let mut inputs = vec![manifest_path.as_path()];
    inputs.extend(cfg.paths.init.as_deref());
    guard_outputs(
        &inputs,
        &[
            ("paths.out", Some(&out)),
            ("paths.log", cfg.paths.log.as_deref()),
            ("paths.report", cfg.paths.report.as_deref()),
        ],
    )?;
    let manifest = DatasetManifest::load(&manifest_path)?;
    if let Some(bands) = &cfg.bands {
        band_indices(&manifest.bands, bands)?;
    }
    cfg.train.validate()?;
    cfg.schedule.validate()?;
    cfg.adamw.validate()?;
    let init = cfg.paths.init.as_deref().map(load_checkpoint).transpose()?;
    if let Some(ck) = &init {
        if ck.meta.width != cfg.model.width {
            return Err(Error::WidthMismatch { checkpoint: ck.meta.width, target: cfg.model.width });
        }
    }

    let data = Dataset::from_manifest(&manifest)?;
    let mut hooks = FileHooks::new(cfg.paths.log.as_deref(), cfg.paths.checkpoint_dir.as_deref(), echo_logs())?;
    let outcome = run_finetune::<f32>(
        &data,
        init.as_ref(),
        cfg.bands.as_deref(),
        cfg.model.width,
        &cfg.train,
        &cfg.schedule,
        &cfg.adamw,
        &mut hooks,
    )?;
    save_checkpoint(&outcome.checkpoint, &out)?;
    let report = outcome.evaluations.last().map(|(_, r)| r);
    if let (Some(path), Some(r)) = (&cfg.paths.report, report) {
        write_json(path, r)?;
    }
    Ok(format!(
        "finetune {}: iterations={} stem_adapted={} val_miou={} val_mf1={} checkpoint={}",
        outcome.checkpoint.meta.strategy,
        cfg.train.iterations,
        outcome.stem_adaptations > 0,
        fmt_pct(report.and_then(|r| r.miou)),
        fmt_pct(report.and_then(|r| r.mf1)),
        out.display()
    ))
}

/// Channel indices for `bands` (natural order when absent) and their label.
fn select_bands(manifest: &DatasetManifest, bands: Option<&[String]>) -> Result<(Vec<usize>, String)> {
    let idx = match bands {
        Some(b) => band_indices(&manifest.bands, b)?,
        None => (0..manifest.bands.len()).collect(),
    };
    let label = idx.iter().map(|&i| manifest.bands[i].as_str()).collect::<Vec<_>>().join(",");
    Ok((idx, label))
}

fn classification_report(
    ckpt: &Checkpoint,
    samples: &[Sample],
    manifest: &DatasetManifest,
    selected: &[usize],
    label: &str,
) -> Result<MetricsReport> {
    let net = ckpt.to_network::<f32>()?;
    let spec = net.spec();
    let stats = manifest.norm_stats()?.gather(selected);
    let expand = ChannelPlan::natural(selected.len(), spec.input_channels)?;
    let labels = samples
        .iter()
        .map(|s| s.label.ok_or_else(|| Error::config("split", "classification evaluation needs labels")))
        .collect::<Result<Vec<_>>>()?;
    let mut cm = ConfusionMatrix::new(spec.num_classes);
    let mut rows = Vec::new();
    for chunk in samples.chunks(64) {
        let inputs = chunk
            .iter()
            .map(|s| apply_plan(&normalize(&s.image.gather_channels(selected)?, &stats)?, &expand))
            .collect::<Result<Vec<_>>>()?;
        let logits = net.predict(stack_images(&inputs.iter().collect::<Vec<_>>())?)?;
        rows.extend_from_slice(logits.data());
    }
    let k = spec.num_classes;
    for (row, &gt) in rows.chunks_exact(k).zip(&labels) {
        cm.add(gt, argmax(row), usize::MAX)?;
    }
    let logits = csp_core::Tensor32::new(vec![labels.len(), k], rows)?;
    let mut report = MetricsReport::from_confusion(&cm, &ckpt.meta.strategy, label, &manifest.classes, samples.len());
    report.top1 = Some(topk_accuracy(&logits, &labels, 1)?);
    report.top5 = if k >= 5 { Some(topk_accuracy(&logits, &labels, 5)?) } else { None };
    Ok(report)
}

pub fn eval(a: EvalArgs) -> Result<String> {
    guard_outputs(&[&a.checkpoint, &a.manifest], &[("out", a.out.as_deref())])?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let (selected, label) = select_bands(&manifest, a.bands.as_deref())?;
    let samples = manifest.load_split(&a.split)?;
    if samples.is_empty() {
        return Err(Error::EmptyDataset(a.split.clone()));
    }
    if ckpt.meta.num_classes != manifest.num_classes() {
        return Err(Error::config(
            "checkpoint",
            format!("checkpoint has {} classes, manifest has {}", ckpt.meta.num_classes, manifest.num_classes()),
        ));
    }
    let report = match ckpt.meta.head {
        Head::Segmentation => {
            if ckpt.meta.input_channels != selected.len() {
                return Err(Error::config(
                    "bands",
                    format!("checkpoint takes {} channels, {} selected", ckpt.meta.input_channels, selected.len()),
                ));
            }
            let net = ckpt.to_network::<f32>()?;
            let stride = a.stride.unwrap_or(a.patch);
            let scenes = samples
                .iter()
                .map(|s| {
                    Ok(Sample { image: s.image.gather_channels(&selected)?, mask: s.mask.clone(), label: s.label })
                })
                .collect::<Result<Vec<_>>>()?;
            let stats = manifest.norm_stats()?.gather(&selected);
            let cm = evaluate_segmentation(&net, &scenes, a.patch, stride, &stats, manifest.ignore_index)?;
            MetricsReport::from_confusion(&cm, &ckpt.meta.strategy, &label, &manifest.classes, samples.len())
        }
        Head::Classification => classification_report(&ckpt, &samples, &manifest, &selected, &label)?,
    };
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let mut summary = format!(
        "eval {} on {} [{}]: miou={} mf1={}",
        report.strategy,
        a.split,
        report.bands,
        fmt_pct(report.miou),
        fmt_pct(report.mf1)
    );
    if report.top1.is_some() {
        summary.push_str(&format!(" top1={} top5={}", fmt_pct(report.top1), fmt_pct(report.top5)));
    }
    if let Some(out) = &a.out {
        summary.push_str(&format!(" report={}", out.display()));
    }
    Ok(summary)
}

fn parse_perm(text: &str, bands: &[String]) -> Result<NamedPermutation> {
    let perm = text
        .split(',')
        .map(|t| {
            t.trim().parse::<usize>().map_err(|_| Error::config("perm", format!("{text:?} is not a list of indices")))
        })
        .collect::<Result<Vec<_>>>()?;
    if perm.iter().any(|&p| p >= bands.len()) {
        return Err(Error::config("perm", format!("{text:?} indexes past {} channels", bands.len())));
    }
    Ok(NamedPermutation::labelled(perm, bands))
}

pub fn sensitivity(a: SensitivityArgs) -> Result<String> {
    guard_outputs(&[&a.checkpoint, &a.manifest], &[("out", a.out.as_deref())])?;
    let ckpt = load_checkpoint(&a.checkpoint)?;
    if ckpt.meta.head != Head::Classification {
        return Err(Error::config("checkpoint", "sensitivity needs a classification checkpoint"));
    }
    let manifest = DatasetManifest::load(&a.manifest)?;
    let m = manifest.bands.len();
    let perms = if a.perms.is_empty() {
        let identity = (0..m).collect::<Vec<_>>();
        let reversal = (0..m).rev().collect::<Vec<_>>();
        vec![
            NamedPermutation::labelled(identity, &manifest.bands),
            NamedPermutation::labelled(reversal, &manifest.bands),
        ]
    } else {
        a.perms.iter().map(|p| parse_perm(p, &manifest.bands)).collect::<Result<_>>()?
    };
    let samples = manifest.load_split(&a.split)?;
    let net = ckpt.to_network::<f32>()?;
    let stats = manifest.norm_stats()?;
    let report = permutation_sensitivity(&net, &samples, &stats, &perms, &ckpt.meta.strategy, &manifest.classes)?;
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    let mut text = render_sensitivity_table(std::slice::from_ref(&report));
    if a.per_class {
        text.push('\n');
        text.push_str(&render_class_breakdown(&report));
    }
    print!("{text}");
    let worst = report.rows.iter().map(|r| r.delta_top1).fold(0.0, f64::min);
    Ok(format!(
        "sensitivity {}: samples={} top1={} worst_delta_top1={:.2}{}",
        report.strategy,
        report.samples,
        fmt_pct(report.rows.first().map(|r| r.top1)),
        100.0 * worst,
        a.out.as_ref().map(|o| format!(" report={}", o.display())).unwrap_or_default()
    ))
}

pub fn csp_preview(a: PreviewArgs) -> Result<String> {
    let image = match &a.image {
        Some(path) => {
            guard_outputs(&[path], &[("out", Some(&a.out))])?;
            let img = load_raster(path)?;
            if let Some(m) = a.m.filter(|&m| m != img.channels()) {
                return Err(Error::config("m", format!("--m {m} but the image has {} channels", img.channels())));
            }
            img
        }
        None => {
            let m = a.m.ok_or_else(|| Error::config("m", "is required without --image"))?;
            let spec = SynthSpec::new(SynthMode::SpatialCue, SynthTask::Classification, 2, m, 64, a.seed);
            spec.validate()?;
            synth_sample(&spec, "train", a.sample as usize).image
        }
    };
    let cfg = CspConfig::new(image.channels(), a.n, a.seed)?.with_redraw(a.redraw.into());
    let plan = draw_channel_plan(&cfg, DrawKey::new(a.epoch, a.sample))?;
    let out = apply_plan(&image, &plan)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    for (j, &src) in plan.sources().iter().enumerate() {
        png_io::save_plane_png(&out, j, &a.out.join(format!("plane{j}-src{src}.png")))?;
    }
    let sources = plan.sources().iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",");
    println!("plan: [{sources}]");
    Ok(format!(
        "csp-preview m={} n={} seed={} epoch={} sample={} plan=[{sources}] out={}",
        image.channels(),
        a.n,
        a.seed,
        a.epoch,
        a.sample,
        a.out.display()
    ))
}

pub fn synth(a: SynthArgs) -> Result<String> {
    let mut spec = SynthSpec::new(SynthMode::SpatialCue, SynthTask::Classification, 4, 3, 32, 0);
    if let Some(path) = &a.config {
        let overlay: Value = serde_json::from_slice(&read_file(path)?)
            .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        let mut merged = serde_json::to_value(&spec).expect("spec serializes");
        merge(&mut merged, overlay);
        spec =
            serde_json::from_value(merged).map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
    }
    if let Some(v) = a.mode {
        spec.mode = v.into();
    }
    if let Some(v) = a.task {
        spec.task = v.into();
    }
    for (slot, flag) in [
        (&mut spec.classes, a.classes),
        (&mut spec.channels, a.channels),
        (&mut spec.train, a.train),
        (&mut spec.val, a.val),
        (&mut spec.test, a.test),
    ] {
        if let Some(v) = flag {
            *slot = v;
        }
    }
    if let Some(v) = a.size {
        spec.height = v;
        spec.width = v;
    }
    if let Some(v) = a.noise {
        spec.noise = v;
    }
    if let Some(v) = a.seed {
        spec.seed = v;
    }
    spec.validate()?;
    let manifest = synth_generate(&spec, &a.out)?;
    Ok(format!(
        "synth {}: train={} val={} test={} bands={} manifest={}",
        manifest.name,
        spec.train,
        spec.val,
        spec.test,
        manifest.bands.join(","),
        a.out.join("manifest.json").display()
    ))
}

enum ReportInput {
    Sensitivity(SensitivityReport),
    Metrics(MetricsReport),
    Log(PathBuf, Vec<csp_core::train::LogRecord>),
}

fn read_report_input(path: &Path) -> Result<ReportInput> {
    if path.extension().is_some_and(|e| e == "jsonl") {
        return Ok(ReportInput::Log(path.to_path_buf(), read_log(path)?));
    }
    let bad = |e: serde_json::Error| Error::Json { path: path.to_path_buf(), source: e };
    let value: Value = serde_json::from_slice(&read_file(path)?).map_err(bad)?;
    if value.get("rows").is_some() {
        Ok(ReportInput::Sensitivity(serde_json::from_value(value).map_err(bad)?))
    } else if value.get("per_class_iou").is_some() {
        Ok(ReportInput::Metrics(serde_json::from_value(value).map_err(bad)?))
    } else {
        Err(Error::config("inputs", format!("{} is neither a sensitivity nor a metrics report", path.display())))
    }
}

fn render_logs(logs: &[(PathBuf, Vec<csp_core::train::LogRecord>)]) -> String {
    let header: Vec<String> = ["Log", "Records", "Last step", "Last loss", "Last metrics"].map(String::from).into();
    let rows: Vec<Vec<String>> = logs
        .iter()
        .map(|(path, records)| {
            let last = records.last();
            let metrics = last
                .map(|r| r.metrics.iter().map(|(k, v)| format!("{k}={v:.4}")).collect::<Vec<_>>().join(" "))
                .unwrap_or_default();
            vec![
                path.display().to_string(),
                records.len().to_string(),
                last.map_or("-".into(), |r| r.step.to_string()),
                last.map_or("-".into(), |r| format!("{:.4}", r.loss)),
                metrics,
            ]
        })
        .collect();
    render_table(&header, &rows)
}

pub fn report(a: ReportArgs) -> Result<String> {
    let inputs: Vec<&Path> = a.inputs.iter().map(PathBuf::as_path).collect();
    guard_outputs(&inputs, &[("out", a.out.as_deref())])?;
    let (mut sens, mut metrics, mut logs) = (Vec::new(), Vec::new(), Vec::new());
    for path in &a.inputs {
        match read_report_input(path)? {
            ReportInput::Sensitivity(r) => sens.push(r),
            ReportInput::Metrics(r) => metrics.push(r),
            ReportInput::Log(p, r) => logs.push((p, r)),
        }
    }
    let mut sections = Vec::new();
    if !sens.is_empty() {
        sections.push(render_sensitivity_table(&sens));
    }
    if !metrics.is_empty() {
        sections.push(render_segmentation_table(&metrics));
    }
    if !logs.is_empty() {
        sections.push(render_logs(&logs));
    }
    let text = sections.join("\n");
    if let Some(out) = &a.out {
        atomic_write(out, text.as_bytes())?;
    }
    Ok(text.trim_end().to_string())
}
