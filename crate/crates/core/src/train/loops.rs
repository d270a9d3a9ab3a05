//! Pre-training and fine-tuning loops.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::config::TrainConfig;
use super::dataset::Dataset;
use super::hooks::{LogRecord, TrainHooks};
use super::optim::{adamw_step, AdamWConfig, OptimState};
use super::schedule::{lr_at, ScheduleConfig};
use crate::autodiff::{Tape, Tensor};
use crate::batch::stack_images;
use crate::csp::{apply_plan, draw_channel_plan, ChannelPlan, DrawKey, PretrainStrategy};
use crate::data::{augment_sample, normalize, LabelMask, RasterImage, Sample};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_segmentation, topk_accuracy, MetricsReport};
use crate::model::network::is_bias;
use crate::model::{build_classifier, build_segmenter, transfer_encoder, Checkpoint, Network};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModelConfig {
    pub input_channels: usize,
    pub width: usize,
}

/// Per-epoch summary of a pre-training run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochSummary {
    pub epoch: u64,
    pub loss: f64,
    pub val_top1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<T> {
    pub network: Network<T>,
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochSummary>,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome<T> {
    pub network: Network<T>,
    pub checkpoint: Checkpoint,
    /// Number of input-stem adaptations performed while loading the encoder.
    pub stem_adaptations: usize,
    /// `(iteration, validation report)` at every evaluation point.
    pub evaluations: Vec<(u64, MetricsReport)>,
}

/// Sample visiting order for one epoch.
pub fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, Stream::Order, epoch, 0));
    order
}

/// Owns the parameters and optimizer state for one run.
struct Trainer<T> {
    net: Network<T>,
    state: OptimState<T>,
    decay: Vec<bool>,
    adamw: AdamWConfig,
    sched: ScheduleConfig,
    step: u64,
}

impl<T: Scalar> Trainer<T> {
    fn new(net: Network<T>, adamw: AdamWConfig, sched: ScheduleConfig) -> Self {
        let state = OptimState::new(net.params());
        let decay = net.names().iter().map(|n| !is_bias(n)).collect();
        Self { net, state, decay, adamw, sched, step: 0 }
    }

    /// Forward, masked cross-entropy, backward and one AdamW update.
    /// Returns `(loss, lr)`, or `None` when every target is ignored.
    fn step(&mut self, input: Tensor<T>, targets: &[usize], ignore: usize) -> Result<Option<(f64, f64)>> {
        let lr = lr_at(self.step, &self.sched)?;
        let mut tape = Tape::new();
        let ps = self.net.bind(&mut tape);
        let x = tape.constant(input);
        let logits = self.net.forward(&mut tape, &ps, x)?;
        let loss = match tape.softmax_cross_entropy_masked(logits, targets, ignore) {
            Ok(l) => l,
            Err(Error::EmptyBatch) => {
                self.step += 1;
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let value = tape.value(loss).data()[0].as_f64();
        if !value.is_finite() {
            return Err(Error::NumericFailure(format!("loss is {value} at step {}", self.step)));
        }
        tape.backward(loss)?;
        let grads: Vec<Tensor<T>> = ps.vars.iter().map(|&v| tape.grad(v).expect("parameters require grad")).collect();
        drop(tape);
        adamw_step(self.net.params_mut(), &grads, &self.decay, &mut self.state, lr, &self.adamw)?;
        if self.net.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::NumericFailure(format!("non-finite parameters after step {}", self.step)));
        }
        self.step += 1;
        Ok(Some((value, lr)))
    }
}

fn log_record(step: u64, epoch: Option<u64>, lr: f64, loss: f64, metrics: &[(&str, f64)]) -> LogRecord {
    LogRecord {
        step,
        epoch,
        lr,
        loss,
        metrics: metrics.iter().map(|&(k, v)| (k.to_string(), v)).collect::<BTreeMap<_, _>>(),
    }
}

fn labels_of(samples: &[Sample], classes: usize, split: &str) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| {
            let l = s.label.ok_or_else(|| Error::config("split", format!("{split} sample without a class label")))?;
            if l >= classes {
                return Err(Error::ClassOutOfRange { value: l, classes });
            }
            Ok(l)
        })
        .collect()
}

/// Top-1 of a classifier over already prepared inputs.
pub fn classification_top1<T: Scalar>(net: &Network<T>, inputs: &[RasterImage], labels: &[usize]) -> Result<f64> {
    let mut hits = 0.0;
    for (chunk, lab) in inputs.chunks(EVAL_BATCH).zip(labels.chunks(EVAL_BATCH)) {
        let refs: Vec<&RasterImage> = chunk.iter().collect();
        let logits = net.predict(stack_images::<T>(&refs)?)?;
        hits += topk_accuracy(&logits, lab, 1)? * lab.len() as f64;
    }
    Ok(if labels.is_empty() { 0.0 } else { hits / labels.len() as f64 })
}

/// Epoch-driven classifier pre-training.
///
/// Per sample: normalize → CSP plan for `(epoch, index)` (CSP only) →
/// augment → batch. The schedule's lengths are in epochs. Validation inputs
/// use the natural channel order, expanded to the model width with the
/// natural plan.
pub fn pretrain<T: Scalar>(
    data: &Dataset,
    strategy: &PretrainStrategy,
    model: &ModelConfig,
    cfg: &TrainConfig,
    sched: &ScheduleConfig,
    adamw: &AdamWConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<PretrainOutcome<T>> {
    cfg.validate()?;
    sched.validate()?;
    adamw.validate()?;
    let m = data.channels();
    strategy.validate(m, model.input_channels)?;
    if cfg.epochs > sched.total {
        return Err(Error::config(
            "train.epochs",
            format!("{} epochs exceed the schedule's {}", cfg.epochs, sched.total),
        ));
    }
    if data.train.is_empty() {
        return Err(Error::EmptyDataset("train".into()));
    }
    let k = data.num_classes();
    let train_labels = labels_of(&data.train, k, "train")?;
    let val_labels = labels_of(&data.val, k, "val")?;
    let normalized = data.train.iter().map(|s| normalize(&s.image, &data.stats)).collect::<Result<Vec<_>>>()?;
    let natural = ChannelPlan::natural(m, model.input_channels)?;
    let val_inputs = data
        .val
        .iter()
        .map(|s| apply_plan(&normalize(&s.image, &data.stats)?, &natural))
        .collect::<Result<Vec<_>>>()?;

    let n = normalized.len();
    let iters_per_epoch = n.div_ceil(cfg.batch_size) as u64;
    let net = build_classifier::<T>(model.input_channels, k, model.width, cfg.seed)?;
    let mut trainer = Trainer::new(net, *adamw, sched.in_iterations(iters_per_epoch));
    let augment = cfg.augment();
    let tag = strategy.tag();
    let mut history = Vec::new();

    for epoch in 0..cfg.epochs {
        let order = epoch_order(cfg.seed, epoch, n);
        let (mut loss_sum, mut loss_n) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let mut inputs = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let key = DrawKey::new(epoch, idx as u64);
                let img = match strategy {
                    PretrainStrategy::Baseline => normalized[idx].clone(),
                    PretrainStrategy::Csp(csp) => {
                        let plan = draw_channel_plan(csp, key)?;
                        hooks.on_plan(key, &plan);
                        apply_plan(&normalized[idx], &plan)?
                    }
                };
                inputs.push(augment_sample(&img, None, &augment, cfg.seed, key)?.0);
            }
            let refs: Vec<&RasterImage> = inputs.iter().collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let step = trainer.step;
            if let Some((loss, lr)) = trainer.step(stack_images(&refs)?, &targets, usize::from(data.ignore_index))? {
                loss_sum += loss * chunk.len() as f64;
                loss_n += chunk.len();
                if cfg.log_every > 0 && step % cfg.log_every == 0 {
                    hooks.on_log(&log_record(step, Some(epoch), lr, loss, &[]))?;
                }
            }
        }
        let val_top1 = if val_inputs.is_empty() {
            None
        } else {
            Some(classification_top1(&trainer.net, &val_inputs, &val_labels)?)
        };
        let loss = if loss_n > 0 { loss_sum / loss_n as f64 } else { f64::NAN };
        let lr = lr_at(trainer.step.min(trainer.sched.total), &trainer.sched)?;
        let mut metrics = vec![("train_loss", loss)];
        if let Some(v) = val_top1 {
            metrics.push(("val_top1", v));
        }
        hooks.on_log(&log_record(trainer.step, Some(epoch), lr, loss, &metrics))?;
        history.push(EpochSummary { epoch, loss, val_top1 });
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < cfg.epochs {
            hooks.on_checkpoint(&Checkpoint::from_network(&trainer.net, tag.clone(), trainer.step, cfg.seed))?;
        }
    }
    let checkpoint = Checkpoint::from_network(&trainer.net, tag, trainer.step, cfg.seed);
    hooks.on_checkpoint(&checkpoint)?;
    Ok(PretrainOutcome { network: trainer.net, checkpoint, history })
}

/// Resolves band names to dataset channel indices.
pub fn band_indices(data_bands: &[String], wanted: &[String]) -> Result<Vec<usize>> {
    wanted.iter().map(|b| data_bands.iter().position(|d| d == b).ok_or_else(|| Error::UnknownBand(b.clone()))).collect()
}

/// Iteration-driven segmenter fine-tuning, from a checkpoint or from scratch.
///
/// Per sample: normalize → band selection → augment. No channel shuffling.
/// Validation runs single-scale sliding-window inference with stride equal
/// to the training patch.
#[allow(clippy::too_many_arguments)]
pub fn finetune<T: Scalar>(
    data: &Dataset,
    init: Option<&Checkpoint>,
    bands: Option<&[String]>,
    width: usize,
    cfg: &TrainConfig,
    sched: &ScheduleConfig,
    adamw: &AdamWConfig,
    hooks: &mut dyn TrainHooks,
) -> Result<FinetuneOutcome<T>> {
    cfg.validate()?;
    sched.validate()?;
    adamw.validate()?;
    if cfg.iterations > sched.total {
        return Err(Error::config(
            "train.iterations",
            format!("{} iterations exceed the schedule's {}", cfg.iterations, sched.total),
        ));
    }
    if data.train.is_empty() {
        return Err(Error::EmptyDataset("train".into()));
    }
    let selected: Vec<usize> = match bands {
        Some(b) => band_indices(&data.bands, b)?,
        None => (0..data.channels()).collect(),
    };
    let band_label = selected.iter().map(|&i| data.bands[i].as_str()).collect::<Vec<_>>().join(",");
    let k = data.num_classes();
    let ignore = data.ignore_index;
    let masks: Vec<&LabelMask> = data
        .train
        .iter()
        .map(|s| s.mask.as_ref().ok_or_else(|| Error::config("split", "fine-tuning needs segmentation masks")))
        .collect::<Result<_>>()?;
    for m in &masks {
        m.validate(k)?;
    }
    let train_inputs = data
        .train
        .iter()
        .map(|s| normalize(&s.image, &data.stats)?.gather_channels(&selected))
        .collect::<Result<Vec<_>>>()?;
    let val_scenes: Vec<Sample> = data
        .val
        .iter()
        .map(|s| Ok(Sample { image: s.image.gather_channels(&selected)?, mask: s.mask.clone(), label: s.label }))
        .collect::<Result<_>>()?;
    let val_stats = data.stats.gather(&selected);

    let fresh = build_segmenter::<T>(selected.len(), k, width, cfg.seed)?;
    let (net, adapted, tag) = match init {
        Some(ck) => {
            let (net, adapted) = transfer_encoder(ck, &fresh)?;
            (net, adapted, ck.meta.strategy.clone())
        }
        None => (fresh, false, "Scratch".to_string()),
    };
    let mut trainer = Trainer::new(net, *adamw, *sched);
    let augment = cfg.augment();
    let n = train_inputs.len();
    let mut evaluations = Vec::new();
    let evaluate = |net: &Network<T>| -> Result<Option<MetricsReport>> {
        if val_scenes.is_empty() {
            return Ok(None);
        }
        let cm = evaluate_segmentation(net, &val_scenes, cfg.patch, cfg.patch, &val_stats, ignore)?;
        Ok(Some(MetricsReport::from_confusion(&cm, &tag, &band_label, &data.class_names, val_scenes.len())))
    };

    let mut cursor = 0usize;
    let mut order = Vec::new();
    let mut last = (f64::NAN, 0.0);
    for it in 0..cfg.iterations {
        let mut inputs = Vec::with_capacity(cfg.batch_size);
        let mut targets = Vec::new();
        for _ in 0..cfg.batch_size {
            let epoch = (cursor / n) as u64;
            if cursor.is_multiple_of(n) {
                order = epoch_order(cfg.seed, epoch, n);
            }
            let idx = order[cursor % n];
            cursor += 1;
            let key = DrawKey::new(epoch, idx as u64);
            let (img, mask) = augment_sample(&train_inputs[idx], Some(masks[idx]), &augment, cfg.seed, key)?;
            targets.extend(mask.expect("mask passed in").targets());
            inputs.push(img);
        }
        let refs: Vec<&RasterImage> = inputs.iter().collect();
        if let Some((loss, lr)) = trainer.step(stack_images(&refs)?, &targets, usize::from(ignore))? {
            last = (loss, lr);
            if cfg.log_every > 0 && it % cfg.log_every == 0 {
                hooks.on_log(&log_record(it, None, lr, loss, &[]))?;
            }
        }
        let done = it + 1;
        if cfg.eval_every > 0 && done % cfg.eval_every == 0 && done < cfg.iterations {
            if let Some(rep) = evaluate(&trainer.net)? {
                hooks.on_log(&log_record(done, None, last.1, last.0, &[("val_miou", rep.miou.unwrap_or(f64::NAN))]))?;
                evaluations.push((done, rep));
            }
        }
        if cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.iterations {
            hooks.on_checkpoint(&Checkpoint::from_network(&trainer.net, tag.clone(), done, cfg.seed))?;
        }
    }
    if let Some(rep) = evaluate(&trainer.net)? {
        let mut metrics = vec![("val_miou", rep.miou.unwrap_or(f64::NAN))];
        if let Some(f) = rep.mf1 {
            metrics.push(("val_mf1", f));
        }
        hooks.on_log(&log_record(cfg.iterations, None, last.1, last.0, &metrics))?;
        evaluations.push((cfg.iterations, rep));
    }
    let checkpoint = Checkpoint::from_network(&trainer.net, tag, cfg.iterations, cfg.seed);
    hooks.on_checkpoint(&checkpoint)?;
    Ok(FinetuneOutcome { network: trainer.net, checkpoint, stem_adaptations: usize::from(adapted), evaluations })
}
