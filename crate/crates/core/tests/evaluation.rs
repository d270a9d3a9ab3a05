use csp_core::autodiff::{Tape, Tensor};
use csp_core::data::{LabelMask, NormStats, RasterData, RasterImage, Sample};
use csp_core::metrics::{permutation_sensitivity, sliding_inference, NamedPermutation};
use csp_core::model::{adapt_input_stem, build_classifier, build_segmenter, transfer_encoder, Checkpoint, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scene(seed: u64, c: usize, h: usize, w: usize) -> RasterImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bands = (0..c).map(|i| format!("b{i}")).collect();
    RasterImage::new(bands, h, w, RasterData::F32((0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .unwrap()
}

/// Zeroes every weight and sets the final bias so each pixel scores `bias`.
fn constant_segmenter(channels: usize, bias: &[f32]) -> Network<f32> {
    let mut net = build_segmenter::<f32>(channels, bias.len(), 2, 0).unwrap();
    for p in net.params_mut() {
        p.data_mut().fill(0.0);
    }
    net.set_param("dec.conv2.bias", Tensor::new(vec![bias.len()], bias.to_vec()).unwrap()).unwrap();
    net
}

fn encoder_features(net: &Network<f64>, x: &Tensor<f64>) -> Vec<f64> {
    let mut tape = Tape::new();
    let ps = net.bind_frozen(&mut tape);
    let xv = tape.constant(x.clone());
    let f = net.encode(&mut tape, &ps, xv).unwrap();
    tape.value(f).data().to_vec()
}

#[test]
fn small_scene_yields_scene_sized_map() {
    let net = build_segmenter::<f32>(2, 3, 2, 1).unwrap();
    let out = sliding_inference(&net, &scene(1, 2, 5, 7), 16, 16, &NormStats::identity(2)).unwrap();
    assert_eq!((out.height(), out.width()), (5, 7));
    assert!(out.data().iter().all(|&v| v < 3));
}

#[test]
fn constant_logits_pick_lowest_tied_class() {
    let net = constant_segmenter(3, &[0.5, 2.0, 2.0, -1.0]);
    let out = sliding_inference(&net, &scene(2, 3, 20, 13), 8, 8, &NormStats::identity(3)).unwrap();
    assert_eq!(out, LabelMask::filled(20, 13, 1));
}

#[test]
fn overlap_does_not_change_identical_predictions() {
    let net = constant_segmenter(2, &[0.0, 1.0, 3.0]);
    let img = scene(3, 2, 37, 29);
    let stats = NormStats::identity(2);
    let full = sliding_inference(&net, &img, 8, 8, &stats).unwrap();
    let half = sliding_inference(&net, &img, 8, 4, &stats).unwrap();
    assert_eq!(full, half);
}

fn labelled_samples(n: usize, channels: usize, k: usize) -> Vec<Sample> {
    (0..n).map(|i| Sample { image: scene(10 + i as u64, channels, 8, 8), mask: None, label: Some(i % k) }).collect()
}

#[test]
fn identity_permutation_has_zero_delta() {
    let net = build_classifier::<f32>(3, 6, 4, 7).unwrap();
    let samples = labelled_samples(12, 3, 6);
    let perms = [NamedPermutation::identity(3), NamedPermutation::identity(3), NamedPermutation::reversal(3)];
    let names: Vec<String> = (0..6).map(|i| format!("c{i}")).collect();
    let rep = permutation_sensitivity(&net, &samples, &NormStats::identity(3), &perms, "Baseline", &names).unwrap();
    assert_eq!(rep.rows[1].delta_top1, 0.0);
    assert_eq!(rep.rows[1].delta_top5, Some(0.0));
    assert!(rep.rows[1].per_class_delta.iter().flatten().all(|&d| d == 0.0));
}

#[test]
fn channel_symmetric_stem_is_order_blind() {
    let mut net = build_classifier::<f32>(3, 4, 4, 7).unwrap();
    let stem = net.param("enc.conv1.weight").unwrap().clone();
    let (w, c, kh, kw) = stem.dims4().unwrap();
    let k = kh * kw;
    let tied = Tensor::from_fn(&[w, c, kh, kw], |i| {
        let (o, j) = (i / (c * k), i % k);
        stem.data()[o * c * k + j]
    });
    net.set_param("enc.conv1.weight", tied).unwrap();
    let samples = labelled_samples(16, 3, 4);
    let perms: Vec<NamedPermutation> = [[0, 1, 2], [2, 1, 0], [1, 2, 0], [1, 0, 2]]
        .iter()
        .map(|p| NamedPermutation { name: format!("{p:?}"), perm: p.to_vec() })
        .collect();
    let names: Vec<String> = (0..4).map(|i| format!("c{i}")).collect();
    let rep = permutation_sensitivity(&net, &samples, &NormStats::identity(3), &perms, "tied", &names).unwrap();
    for row in &rep.rows {
        assert_eq!(row.top1, rep.rows[0].top1);
        assert_eq!(row.per_class, rep.rows[0].per_class);
    }
}

#[test]
fn adapted_stem_matches_on_gray_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let stem = Tensor::from_fn(&[6, 3, 3, 3], |_| rng.random_range(-1.0f64..1.0));
    let adapted = adapt_input_stem(&stem, 4).unwrap();
    let gray = Tensor::from_fn(&[1, 1, 6, 6], |_| rng.random_range(-1.0f64..1.0));
    let stack = |c: usize| Tensor::from_fn(&[1, c, 6, 6], |i| gray.data()[i % 36]);
    let bias = Tensor::zeros(&[6]);
    let pre = |weight: &Tensor<f64>, input: Tensor<f64>| {
        let mut tape = Tape::new();
        let (x, w, b) = (tape.constant(input), tape.constant(weight.clone()), tape.constant(bias.clone()));
        let y = tape.conv2d(x, w, b, 1, 1).unwrap();
        tape.value(y).data().to_vec()
    };
    let (a, b) = (pre(&stem, stack(3)), pre(&adapted, stack(4)));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-5));
}

#[test]
fn transferred_encoders_agree_across_heads() {
    let cls = build_classifier::<f32>(4, 6, 4, 11).unwrap();
    let ckpt = Checkpoint::from_network(&cls, "CSP-4", 10, 11);
    let seg = build_segmenter::<f32>(4, 3, 4, 99).unwrap();
    let (seg, adapted) = transfer_encoder(&ckpt, &seg).unwrap();
    assert!(!adapted);
    for name in seg.encoder_names() {
        assert_eq!(seg.param(&name), ckpt.tensor(&name));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = Tensor::from_fn(&[2, 4, 12, 8], |_| rng.random_range(-1.0f64..1.0));
    let (a, b) = (encoder_features(&cls.cast(), &x), encoder_features(&seg.cast(), &x));
    assert!(a.iter().zip(&b).all(|(p, q)| (p - q).abs() <= 1e-6));
}
