//! Toy classifier and segmenter sharing one convolutional encoder.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

pub const DEFAULT_WIDTH: usize = 32;
pub const STEM_WEIGHT: &str = "enc.conv1.weight";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Classification,
    Segmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub width: usize,
    pub num_classes: usize,
    pub head: Head,
}

/// One convolution: `(name, cin, cout, kernel, stride, padding)`.
type ConvLayer = (&'static str, usize, usize, usize, usize, usize);

impl NetworkSpec {
    pub fn new(input_channels: usize, num_classes: usize, width: usize, head: Head) -> Result<Self> {
        for (field, v) in [("input_channels", input_channels), ("num_classes", num_classes), ("width", width)] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(Self { input_channels, width, num_classes, head })
    }

    fn encoder_layers(&self) -> [ConvLayer; 3] {
        let (n, w) = (self.input_channels, self.width);
        [("enc.conv1", n, w, 3, 1, 1), ("enc.conv2", w, 2 * w, 3, 2, 1), ("enc.conv3", 2 * w, 2 * w, 3, 2, 1)]
    }

    fn decoder_layers(&self) -> [ConvLayer; 2] {
        let (w, k) = (self.width, self.num_classes);
        [("dec.conv1", 2 * w, w, 3, 1, 1), ("dec.conv2", w, k, 1, 1, 0)]
    }

    /// Parameter names and shapes in creation order: encoder first, then head.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let conv = |(name, cin, cout, k, ..): ConvLayer| {
            [(format!("{name}.weight"), vec![cout, cin, k, k]), (format!("{name}.bias"), vec![cout])]
        };
        let mut out: Vec<_> = self.encoder_layers().into_iter().flat_map(conv).collect();
        match self.head {
            Head::Classification => {
                out.push(("head.fc.weight".into(), vec![self.num_classes, 2 * self.width]));
                out.push(("head.fc.bias".into(), vec![self.num_classes]));
            }
            Head::Segmentation => out.extend(self.decoder_layers().into_iter().flat_map(conv)),
        }
        out
    }

    pub fn encoder_param_count(&self) -> usize {
        2 * self.encoder_layers().len()
    }
}

/// Names of encoder tensors, shared by both heads at equal `(n, w)`.
pub fn is_encoder_param(name: &str) -> bool {
    name.starts_with("enc.")
}

pub fn is_bias(name: &str) -> bool {
    name.ends_with(".bias")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    spec: NetworkSpec,
    names: Vec<String>,
    params: Vec<Tensor<T>>,
}

/// Parameters recorded on a tape, parallel to [`Network::names`].
#[derive(Debug, Clone)]
pub struct ParamSet {
    pub vars: Vec<Var>,
}

fn he_init<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Network<T> {
    let shapes = spec.param_shapes();
    let mut enc_rng = stream_rng(seed, Stream::Init, 0, 0);
    let mut head_rng = stream_rng(seed, Stream::Init, 1, 0);
    let mut names = Vec::with_capacity(shapes.len());
    let mut params = Vec::with_capacity(shapes.len());
    for (name, shape) in shapes {
        let tensor = if is_bias(&name) {
            Tensor::zeros(&shape)
        } else {
            let fan_in: usize = shape[1..].iter().product();
            let std = (2.0 / fan_in as f64).sqrt();
            let rng = if is_encoder_param(&name) { &mut enc_rng } else { &mut head_rng };
            Tensor::from_fn(&shape, |_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z * std)
            })
        };
        names.push(name);
        params.push(tensor);
    }
    Network { spec: *spec, names, params }
}

pub fn build_classifier<T: Scalar>(n: usize, k: usize, w: usize, seed: u64) -> Result<Network<T>> {
    Ok(he_init(&NetworkSpec::new(n, k, w, Head::Classification)?, seed))
}

pub fn build_segmenter<T: Scalar>(n: usize, k: usize, w: usize, seed: u64) -> Result<Network<T>> {
    Ok(he_init(&NetworkSpec::new(n, k, w, Head::Segmentation)?, seed))
}

pub fn build_network<T: Scalar>(spec: &NetworkSpec, seed: u64) -> Result<Network<T>> {
    let spec = NetworkSpec::new(spec.input_channels, spec.num_classes, spec.width, spec.head)?;
    Ok(he_init(&spec, seed))
}

impl<T: Scalar> Network<T> {
    /// Assembles a network from named tensors; every expected name must be
    /// present with the expected shape.
    pub fn from_tensors(spec: NetworkSpec, mut tensors: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let mut names = Vec::new();
        let mut params = Vec::new();
        for (name, shape) in spec.param_shapes() {
            let at = tensors.iter().position(|(n, _)| *n == name).ok_or_else(|| Error::MissingTensor(name.clone()))?;
            let (_, t) = tensors.swap_remove(at);
            if t.shape() != shape.as_slice() {
                return Err(Error::shape(format!("{name}: shape {:?}, expected {shape:?}", t.shape())));
            }
            names.push(name);
            params.push(t);
        }
        Ok(Self { spec, names, params })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.params[i])
    }

    pub fn set_param(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        let i = self.names.iter().position(|n| n == name).ok_or_else(|| Error::MissingTensor(name.to_string()))?;
        if value.shape() != self.params[i].shape() {
            return Err(Error::shape(format!(
                "{name}: shape {:?}, expected {:?}",
                value.shape(),
                self.params[i].shape()
            )));
        }
        self.params[i] = value;
        Ok(())
    }

    pub fn num_parameters(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    pub fn encoder_names(&self) -> Vec<String> {
        self.names.iter().filter(|n| is_encoder_param(n)).cloned().collect()
    }

    pub fn head_names(&self) -> Vec<String> {
        self.names.iter().filter(|n| !is_encoder_param(n)).cloned().collect()
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network { spec: self.spec, names: self.names.clone(), params: self.params.iter().map(Tensor::cast).collect() }
    }

    /// Records every parameter on `tape` as a trainable leaf.
    pub fn bind(&self, tape: &mut Tape<T>) -> ParamSet {
        ParamSet { vars: self.params.iter().map(|p| tape.param(p.clone())).collect() }
    }

    /// Records parameters as constants, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape<T>) -> ParamSet {
        ParamSet { vars: self.params.iter().map(|p| tape.constant(p.clone())).collect() }
    }

    fn conv(&self, tape: &mut Tape<T>, ps: &ParamSet, x: Var, layer: ConvLayer, idx: usize) -> Result<Var> {
        let (_, _, _, _, stride, pad) = layer;
        tape.conv2d(x, ps.vars[idx], ps.vars[idx + 1], stride, pad)
    }

    /// Encoder features `[n, 2w, h/4, w/4]` (rounded up).
    pub fn encode(&self, tape: &mut Tape<T>, ps: &ParamSet, input: Var) -> Result<Var> {
        let (_, c, _, _) = tape.value(input).dims4()?;
        if c != self.spec.input_channels {
            return Err(Error::shape(format!("network expects {} channels, input has {c}", self.spec.input_channels)));
        }
        let mut x = input;
        for (i, layer) in self.spec.encoder_layers().into_iter().enumerate() {
            let y = self.conv(tape, ps, x, layer, 2 * i)?;
            x = tape.relu(y);
        }
        Ok(x)
    }

    /// Logits: `[n, K]` for classification, `[n, K, h, w]` for segmentation.
    pub fn forward(&self, tape: &mut Tape<T>, ps: &ParamSet, input: Var) -> Result<Var> {
        let feats = self.encode(tape, ps, input)?;
        let base = self.spec.encoder_param_count();
        match self.spec.head {
            Head::Classification => {
                let pooled = tape.global_avg_pool(feats)?;
                tape.linear(pooled, ps.vars[base], ps.vars[base + 1])
            }
            Head::Segmentation => {
                let [l1, l2] = self.spec.decoder_layers();
                let up = tape.upsample_nearest(feats, 2)?;
                let y = self.conv(tape, ps, up, l1, base)?;
                let y = tape.relu(y);
                let up = tape.upsample_nearest(y, 2)?;
                self.conv(tape, ps, up, l2, base + 2)
            }
        }
    }

    /// Inference without gradient bookkeeping.
    pub fn predict(&self, input: Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let ps = self.bind_frozen(&mut tape);
        let x = tape.constant(input);
        let out = self.forward(&mut tape, &ps, x)?;
        Ok(tape.value(out).clone())
    }
}
