use csp_core::autodiff::Tape;
use csp_core::batch::stack_images;
use csp_core::csp::{CspConfig, PretrainStrategy};
use csp_core::data::{SynthMode, SynthSpec, SynthTask};
use csp_core::error::Error;
use csp_core::model::network::is_bias;
use csp_core::model::{build_classifier, Checkpoint};
use csp_core::train::{
    adamw_step, finetune, pretrain, AdamWConfig, Dataset, Decay, ModelConfig, NoHooks, OptimState, PlanRecorder,
    ScheduleConfig, TrainConfig,
};

fn classification(channels: usize, train: usize, seed: u64) -> Dataset {
    let mut spec = SynthSpec::new(SynthMode::SpatialCue, SynthTask::Classification, 3, channels, 8, seed);
    spec.train = train;
    spec.val = 6;
    Dataset::from_synth(&spec).unwrap()
}

fn segmentation(channels: usize) -> Dataset {
    let mut spec = SynthSpec::new(SynthMode::Mixed, SynthTask::Segmentation, 3, channels, 16, 5);
    spec.train = 6;
    spec.val = 2;
    Dataset::from_synth(&spec).unwrap()
}

fn pretrain_cfg(epochs: u64) -> (TrainConfig, ScheduleConfig) {
    let cfg = TrainConfig {
        batch_size: 4,
        epochs,
        seed: 2,
        patch: 8,
        scales: vec![1.0, 1.5],
        ..TrainConfig::pretrain_default()
    };
    let sched = ScheduleConfig { base_lr: 1e-3, warmup: 1, total: epochs, ..ScheduleConfig::pretrain_default() };
    (cfg, sched)
}

fn finetune_cfg(iterations: u64) -> (TrainConfig, ScheduleConfig) {
    let cfg =
        TrainConfig { batch_size: 2, iterations, seed: 3, patch: 8, eval_every: 0, ..TrainConfig::finetune_default() };
    let sched =
        ScheduleConfig { base_lr: 1e-3, warmup: 2, total: iterations.max(4), ..ScheduleConfig::finetune_default() };
    (cfg, sched)
}

fn run_pretrain(data: &Dataset, strategy: &PretrainStrategy, channels: usize) -> Checkpoint {
    let (cfg, sched) = pretrain_cfg(2);
    let model = ModelConfig { input_channels: channels, width: 4 };
    pretrain::<f32>(data, strategy, &model, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks).unwrap().checkpoint
}

#[test]
fn pretraining_is_bitwise_reproducible() {
    let data = classification(3, 12, 1);
    let strategy = PretrainStrategy::Csp(CspConfig::new(3, 4, 8).unwrap());
    let a = run_pretrain(&data, &strategy, 4).encode().unwrap();
    let b = run_pretrain(&data, &strategy, 4).encode().unwrap();
    assert_eq!(a, b);
}

#[test]
fn baseline_rejects_channel_mismatch() {
    let data = classification(3, 4, 1);
    let (cfg, sched) = pretrain_cfg(1);
    let model = ModelConfig { input_channels: 4, width: 4 };
    let err = pretrain::<f32>(
        &data,
        &PretrainStrategy::Baseline,
        &model,
        &cfg,
        &sched,
        &AdamWConfig::default(),
        &mut NoHooks,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InvalidConfig { .. }), "{err}");
}

#[test]
fn csp_pretraining_feeds_shuffled_plans() {
    let data = classification(3, 8, 1);
    let (cfg, sched) = pretrain_cfg(2);
    let model = ModelConfig { input_channels: 3, width: 4 };
    let strategy = PretrainStrategy::Csp(CspConfig::new(3, 3, 4).unwrap());
    let mut rec = PlanRecorder::default();
    pretrain::<f32>(&data, &strategy, &model, &cfg, &sched, &AdamWConfig::default(), &mut rec).unwrap();
    assert_eq!(rec.plans.len(), 16);
    assert!(rec.plans.iter().any(|(_, p)| p.sources() != [0, 1, 2]));
    let mut keys: Vec<_> = rec.plans.iter().map(|(k, _)| (k.epoch, k.sample_index)).collect();
    keys.sort_unstable();
    keys.dedup();
    assert_eq!(keys.len(), 16);
}

#[test]
fn adamw_halves_loss_on_a_fixed_batch() {
    let data = classification(3, 12, 4);
    let refs: Vec<_> = data.train.iter().map(|s| &s.image).collect();
    let input = stack_images::<f64>(&refs).unwrap();
    let labels: Vec<usize> = data.train.iter().map(|s| s.label.unwrap()).collect();
    let mut net = build_classifier::<f64>(3, 3, 8, 0).unwrap();
    let decay: Vec<bool> = net.names().iter().map(|n| !is_bias(n)).collect();
    let mut state = OptimState::new(net.params());
    let cfg = AdamWConfig::default();
    let mut losses = Vec::new();
    for _ in 0..200 {
        let mut tape = Tape::new();
        let ps = net.bind(&mut tape);
        let x = tape.constant(input.clone());
        let logits = net.forward(&mut tape, &ps, x).unwrap();
        let loss = tape.softmax_cross_entropy_masked(logits, &labels, 255).unwrap();
        losses.push(tape.value(loss).data()[0]);
        tape.backward(loss).unwrap();
        let grads: Vec<_> = ps.vars.iter().map(|&v| tape.grad(v).unwrap()).collect();
        adamw_step(net.params_mut(), &grads, &decay, &mut state, 1e-3, &cfg).unwrap();
    }
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(last < 0.5 * first, "loss {first} -> {last}");
}

#[test]
fn baseline_checkpoint_adapts_stem_once() {
    let rgb = classification(3, 6, 1);
    let ckpt = run_pretrain(&rgb, &PretrainStrategy::Baseline, 3);
    let seg = segmentation(4);
    let (cfg, sched) = finetune_cfg(2);
    let out = finetune::<f32>(&seg, Some(&ckpt), None, 4, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks).unwrap();
    assert_eq!(out.stem_adaptations, 1);
    assert_eq!(out.checkpoint.meta.strategy, "Baseline");
    assert_eq!(out.network.spec().input_channels, 4);
}

#[test]
fn csp4_checkpoint_needs_no_adaptation() {
    let rgb = classification(3, 6, 1);
    let ckpt = run_pretrain(&rgb, &PretrainStrategy::Csp(CspConfig::new(3, 4, 1).unwrap()), 4);
    let seg = segmentation(4);
    let (cfg, sched) = finetune_cfg(2);
    let out = finetune::<f32>(&seg, Some(&ckpt), None, 4, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks).unwrap();
    assert_eq!(out.stem_adaptations, 0);
}

#[test]
fn zero_iterations_keep_the_encoder() {
    let rgb = classification(3, 6, 1);
    let ckpt = run_pretrain(&rgb, &PretrainStrategy::Csp(CspConfig::new(3, 4, 1).unwrap()), 4);
    let seg = segmentation(4);
    let (cfg, sched) = finetune_cfg(0);
    let out = finetune::<f32>(&seg, Some(&ckpt), None, 4, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks).unwrap();
    for name in out.network.encoder_names() {
        let a = out.network.param(&name).unwrap();
        let b = ckpt.tensor(&name).unwrap();
        assert_eq!(
            a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
    assert_eq!(out.evaluations.len(), 1);
}

#[test]
fn band_subset_selects_named_channels() {
    let seg = segmentation(4);
    let (cfg, sched) = finetune_cfg(1);
    let bands = vec!["S3".to_string(), "S1".to_string()];
    let out =
        finetune::<f32>(&seg, None, Some(&bands), 4, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks).unwrap();
    assert_eq!(out.network.spec().input_channels, 2);
    assert_eq!(out.evaluations[0].1.bands, "S3,S1");
    let bad = vec!["NIR".to_string()];
    let err =
        finetune::<f32>(&seg, None, Some(&bad), 4, &cfg, &sched, &AdamWConfig::default(), &mut NoHooks).unwrap_err();
    assert!(matches!(err, Error::UnknownBand(_)));
}

#[test]
fn polynomial_schedule_reaches_zero() {
    let s = ScheduleConfig { decay: Decay::Polynomial { power: 1.0 }, ..ScheduleConfig::finetune_default() };
    assert_eq!(csp_core::train::lr_at(s.total, &s).unwrap(), 0.0);
}
