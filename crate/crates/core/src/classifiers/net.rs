//! Two small classification networks with hand-written backpropagation.
//!
//! * `fc`: input -> dense(hidden) -> ReLU -> dense(2)
//! * `conv1d`: conv(1->16, k6, s2) -> ReLU -> conv(16->16, k6, s2) -> ReLU
//!   -> global average pool -> dense(2)
//!
//! All parameters live in one flat vector, layer after layer, each tensor in
//! row-major order. Gradients use the same layout.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events_io::Label;
use crate::rate::RateSignal;
use crate::spectral::{fft, peak_normalize};

pub const FC_HIDDEN_SPECTRUM: usize = 160;
pub const FC_HIDDEN_RATE: usize = 144;
pub const CONV_CHANNELS: usize = 16;
pub const CONV_KERNEL: usize = 6;
pub const CONV_STRIDE: usize = 2;
pub const MIN_FC_INPUT: usize = 8;
/// Smallest input giving the second convolution one output position.
pub const MIN_CONV_INPUT: usize = CONV_KERNEL + CONV_STRIDE * (CONV_KERNEL - 1);
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    /// Peak-normalized one-sided FFT magnitudes of the rate.
    Spectrum,
    /// Rate values divided by their largest absolute value.
    Rate,
}

impl std::str::FromStr for InputKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectrum" | "fft" => Ok(InputKind::Spectrum),
            "rate" => Ok(InputKind::Rate),
            other => Err(Error::Param(format!("unknown input kind '{other}'"))),
        }
    }
}

impl InputKind {
    /// Network input length for a rate signal of `n_bins`.
    pub fn input_len(self, n_bins: usize) -> usize {
        match self {
            InputKind::Spectrum => n_bins / 2 + 1,
            InputKind::Rate => n_bins,
        }
    }

    pub fn prepare(self, rate: &RateSignal) -> Vec<f64> {
        match self {
            InputKind::Spectrum => fft(&rate.values, rate.bin_width_s).peak_normalized(),
            InputKind::Rate => peak_normalize(&rate.values),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Fc,
    Conv1d,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(Architecture::Fc),
            "conv1d" => Ok(Architecture::Conv1d),
            other => Err(Error::Param(format!("unknown architecture '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetShape {
    pub input_kind: InputKind,
    pub input_len: usize,
    pub architecture: Architecture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TinyNet {
    shape: NetShape,
    hidden: usize,
    seed: u64,
    params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

impl LayerSpec {
    fn new(name: &str, shape: &[usize]) -> Self {
        LayerSpec {
            name: name.to_string(),
            shape: shape.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn conv_out_len(n: usize) -> usize {
    (n - CONV_KERNEL) / CONV_STRIDE + 1
}

fn layout_for(shape: &NetShape, hidden: usize) -> Vec<(LayerSpec, usize)> {
    let n = shape.input_len;
    let (c, k) = (CONV_CHANNELS, CONV_KERNEL);
    match shape.architecture {
        Architecture::Fc => vec![
            (LayerSpec::new("fc1.weight", &[hidden, n]), n),
            (LayerSpec::new("fc1.bias", &[hidden]), n),
            (LayerSpec::new("fc2.weight", &[2, hidden]), hidden),
            (LayerSpec::new("fc2.bias", &[2]), hidden),
        ],
        Architecture::Conv1d => vec![
            (LayerSpec::new("conv1.weight", &[c, 1, k]), k),
            (LayerSpec::new("conv1.bias", &[c]), k),
            (LayerSpec::new("conv2.weight", &[c, c, k]), c * k),
            (LayerSpec::new("conv2.bias", &[c]), c * k),
            (LayerSpec::new("fc.weight", &[2, c]), c),
            (LayerSpec::new("fc.bias", &[2]), c),
        ],
    }
}

/// Builds a network with weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
/// and zero biases.
pub fn build_tiny_net(shape: NetShape, seed: u64) -> Result<TinyNet> {
    let min = match shape.architecture {
        Architecture::Fc => MIN_FC_INPUT,
        Architecture::Conv1d => MIN_CONV_INPUT,
    };
    if shape.input_len < min {
        return Err(Error::Param(format!(
            "{:?} needs an input of at least {min}, got {}",
            shape.architecture, shape.input_len
        )));
    }
    let hidden = match (shape.architecture, shape.input_kind) {
        (Architecture::Fc, InputKind::Spectrum) => FC_HIDDEN_SPECTRUM,
        (Architecture::Fc, InputKind::Rate) => FC_HIDDEN_RATE,
        (Architecture::Conv1d, _) => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for (spec, fan_in) in layout_for(&shape, hidden) {
        if spec.name.ends_with("bias") {
            params.extend(std::iter::repeat_n(0.0, spec.len()));
        } else {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..spec.len()).map(|_| rng.random_range(-bound..bound)));
        }
    }
    Ok(TinyNet {
        shape,
        hidden,
        seed,
        params,
    })
}

/// Per-layer activations kept for the backward pass.
enum Cache {
    Fc {
        hidden: Vec<f64>,
    },
    Conv {
        a1: Vec<f64>,
        a2: Vec<f64>,
        pooled: Vec<f64>,
        l1: usize,
        l2: usize,
    },
}

impl TinyNet {
    pub fn shape(&self) -> NetShape {
        self.shape
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn layers(&self) -> Vec<LayerSpec> {
        layout_for(&self.shape, self.hidden)
            .into_iter()
            .map(|(s, _)| s)
            .collect()
    }

    /// Parameter slices in layout order.
    fn split<'a>(&self, flat: &'a [f64]) -> Vec<&'a [f64]> {
        let mut rest = flat;
        self.layers()
            .iter()
            .map(|l| {
                let (head, tail) = rest.split_at(l.len());
                rest = tail;
                head
            })
            .collect()
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.shape.input_len {
            return Err(Error::Contract(format!(
                "network expects {} inputs, got {}",
                self.shape.input_len,
                input.len()
            )));
        }
        Ok(())
    }

    /// Logits `(bg, ed)`.
    pub fn forward(&self, input: &[f64]) -> Result<[f64; 2]> {
        self.check_input(input)?;
        Ok(self.forward_cached(input).0)
    }

    /// ED iff the ED logit strictly exceeds the BG logit.
    pub fn predict(&self, input: &[f64]) -> Result<Label> {
        let [bg, ed] = self.forward(input)?;
        Ok(Label::from_positive(ed > bg))
    }

    /// Which hidden ReLUs are active for `input`, layer by layer.
    pub fn relu_pattern(&self, input: &[f64]) -> Result<Vec<bool>> {
        self.check_input(input)?;
        let active = |a: &[f64]| a.iter().map(|&v| v > 0.0).collect::<Vec<_>>();
        Ok(match self.forward_cached(input).1 {
            Cache::Fc { hidden } => active(&hidden),
            Cache::Conv { a1, a2, .. } => [active(&a1), active(&a2)].concat(),
        })
    }

    fn forward_cached(&self, x: &[f64]) -> ([f64; 2], Cache) {
        let p = self.split(&self.params);
        match self.shape.architecture {
            Architecture::Fc => {
                let (w1, b1, w2, b2) = (p[0], p[1], p[2], p[3]);
                let n = x.len();
                let hidden: Vec<f64> = (0..self.hidden)
                    .map(|j| {
                        let row = &w1[j * n..(j + 1) * n];
                        let z = b1[j] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
                        relu(z)
                    })
                    .collect();
                let mut out = [0.0; 2];
                for (o, out_o) in out.iter_mut().enumerate() {
                    let row = &w2[o * self.hidden..(o + 1) * self.hidden];
                    *out_o = b2[o] + row.iter().zip(&hidden).map(|(w, h)| w * h).sum::<f64>();
                }
                (out, Cache::Fc { hidden })
            }
            Architecture::Conv1d => {
                let (k1, c1b, k2, c2b, wd, bd) = (p[0], p[1], p[2], p[3], p[4], p[5]);
                let (c, k, s) = (CONV_CHANNELS, CONV_KERNEL, CONV_STRIDE);
                let l1 = conv_out_len(x.len());
                let l2 = conv_out_len(l1);
                let mut a1 = vec![0.0; c * l1];
                for ch in 0..c {
                    let kern = &k1[ch * k..(ch + 1) * k];
                    for t in 0..l1 {
                        let z = c1b[ch]
                            + kern
                                .iter()
                                .zip(&x[s * t..s * t + k])
                                .map(|(w, v)| w * v)
                                .sum::<f64>();
                        a1[ch * l1 + t] = relu(z);
                    }
                }
                let mut a2 = vec![0.0; c * l2];
                for co in 0..c {
                    for t in 0..l2 {
                        let mut z = c2b[co];
                        for ci in 0..c {
                            let kern = &k2[(co * c + ci) * k..(co * c + ci + 1) * k];
                            let src = &a1[ci * l1 + s * t..ci * l1 + s * t + k];
                            z += kern.iter().zip(src).map(|(w, v)| w * v).sum::<f64>();
                        }
                        a2[co * l2 + t] = relu(z);
                    }
                }
                let pooled: Vec<f64> = (0..c)
                    .map(|ch| a2[ch * l2..(ch + 1) * l2].iter().sum::<f64>() / l2 as f64)
                    .collect();
                let mut out = [0.0; 2];
                for (o, out_o) in out.iter_mut().enumerate() {
                    let row = &wd[o * c..(o + 1) * c];
                    *out_o = bd[o] + row.iter().zip(&pooled).map(|(w, g)| w * g).sum::<f64>();
                }
                (
                    out,
                    Cache::Conv {
                        a1,
                        a2,
                        pooled,
                        l1,
                        l2,
                    },
                )
            }
        }
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d logits` for input `x`.
    fn backward(&self, x: &[f64], cache: &Cache, dout: [f64; 2], grad: &mut [f64]) {
        let p = self.split(&self.params);
        let mut offsets = Vec::new();
        let mut acc = 0;
        for l in self.layers() {
            offsets.push(acc);
            acc += l.len();
        }
        match (self.shape.architecture, cache) {
            (Architecture::Fc, Cache::Fc { hidden }) => {
                let (w2, h, n) = (p[2], self.hidden, x.len());
                let (o_w1, o_b1, o_w2, o_b2) = (offsets[0], offsets[1], offsets[2], offsets[3]);
                for o in 0..2 {
                    grad[o_b2 + o] += dout[o];
                    for j in 0..h {
                        grad[o_w2 + o * h + j] += dout[o] * hidden[j];
                    }
                }
                for j in 0..h {
                    if hidden[j] <= 0.0 {
                        continue;
                    }
                    let dz = dout[0] * w2[j] + dout[1] * w2[h + j];
                    grad[o_b1 + j] += dz;
                    let row = &mut grad[o_w1 + j * n..o_w1 + (j + 1) * n];
                    for (g, v) in row.iter_mut().zip(x) {
                        *g += dz * v;
                    }
                }
            }
            (
                Architecture::Conv1d,
                Cache::Conv {
                    a1,
                    a2,
                    pooled,
                    l1,
                    l2,
                },
            ) => {
                let (k2, wd) = (p[2], p[4]);
                let (c, k, s) = (CONV_CHANNELS, CONV_KERNEL, CONV_STRIDE);
                let (l1, l2) = (*l1, *l2);
                let (o_k1, o_c1b, o_k2, o_c2b, o_wd, o_bd) =
                    (offsets[0], offsets[1], offsets[2], offsets[3], offsets[4], offsets[5]);
                let mut dpool = vec![0.0; c];
                for o in 0..2 {
                    grad[o_bd + o] += dout[o];
                    for ch in 0..c {
                        grad[o_wd + o * c + ch] += dout[o] * pooled[ch];
                        dpool[ch] += dout[o] * wd[o * c + ch];
                    }
                }
                let mut da1 = vec![0.0; c * l1];
                for co in 0..c {
                    let dz_avg = dpool[co] / l2 as f64;
                    for t in 0..l2 {
                        if a2[co * l2 + t] <= 0.0 {
                            continue;
                        }
                        grad[o_c2b + co] += dz_avg;
                        for ci in 0..c {
                            let base = (co * c + ci) * k;
                            for kk in 0..k {
                                let src = ci * l1 + s * t + kk;
                                grad[o_k2 + base + kk] += dz_avg * a1[src];
                                da1[src] += dz_avg * k2[base + kk];
                            }
                        }
                    }
                }
                for ch in 0..c {
                    for t in 0..l1 {
                        if a1[ch * l1 + t] <= 0.0 {
                            continue;
                        }
                        let dz = da1[ch * l1 + t];
                        grad[o_c1b + ch] += dz;
                        for kk in 0..k {
                            grad[o_k1 + ch * k + kk] += dz * x[s * t + kk];
                        }
                    }
                }
            }
            _ => unreachable!("cache does not match architecture"),
        }
    }

    /// Class-weighted cross-entropy over `batch`, normalized by the summed
    /// sample weights, and its gradient with respect to every parameter.
    pub fn loss_and_grad(&self, batch: &[(&[f64], Label)], class_weights: (f64, f64)) -> Result<(f64, Vec<f64>)> {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut weight_sum = 0.0;
        let mut per_sample = Vec::with_capacity(batch.len());
        for &(x, label) in batch {
            self.check_input(x)?;
            let (logits, cache) = self.forward_cached(x);
            let w = class_weight(class_weights, label);
            let (nll, probs) = nll_and_softmax(logits, label);
            loss += w * nll;
            weight_sum += w;
            per_sample.push((x, cache, w, probs, label));
        }
        if weight_sum <= 0.0 {
            return Err(Error::Param("batch has zero total class weight".into()));
        }
        for (x, cache, w, probs, label) in &per_sample {
            let target = label_index(*label);
            let mut dout = [0.0; 2];
            for o in 0..2 {
                let onehot = if o == target { 1.0 } else { 0.0 };
                dout[o] = w * (probs[o] - onehot) / weight_sum;
            }
            self.backward(x, cache, dout, &mut grad);
        }
        Ok((loss / weight_sum, grad))
    }

    /// Loss only, same definition as [`TinyNet::loss_and_grad`].
    pub fn loss(&self, batch: &[(&[f64], Label)], class_weights: (f64, f64)) -> Result<f64> {
        let mut loss = 0.0;
        let mut weight_sum = 0.0;
        for &(x, label) in batch {
            self.check_input(x)?;
            let (logits, _) = self.forward_cached(x);
            let w = class_weight(class_weights, label);
            loss += w * nll_and_softmax(logits, label).0;
            weight_sum += w;
        }
        Ok(loss / weight_sum)
    }

    pub fn to_model_file(&self) -> ModelFile {
        let layers = self
            .layers()
            .into_iter()
            .zip(self.split(&self.params))
            .map(|(spec, data)| ModelLayer {
                name: spec.name,
                shape: spec.shape,
                data: data.to_vec(),
            })
            .collect();
        ModelFile {
            version: MODEL_VERSION,
            architecture: self.shape.architecture,
            input_kind: self.shape.input_kind,
            input_len: self.shape.input_len,
            hidden: self.hidden,
            seed: self.seed,
            param_count: self.param_count(),
            layers,
        }
    }

    pub fn from_model_file(file: &ModelFile) -> Result<TinyNet> {
        if file.version != MODEL_VERSION {
            return Err(Error::Validation(format!(
                "unsupported model version {} (expected {MODEL_VERSION})",
                file.version
            )));
        }
        let shape = NetShape {
            input_kind: file.input_kind,
            input_len: file.input_len,
            architecture: file.architecture,
        };
        let mut net = build_tiny_net(shape, file.seed)?;
        if net.hidden != file.hidden {
            return Err(Error::Validation(format!(
                "model hidden size {} differs from the architecture's {}",
                file.hidden, net.hidden
            )));
        }
        let expected = net.layers();
        if expected.len() != file.layers.len() {
            return Err(Error::Validation("model layer list does not match architecture".into()));
        }
        let mut params = Vec::with_capacity(net.param_count());
        for (spec, layer) in expected.iter().zip(&file.layers) {
            if spec.name != layer.name || spec.shape != layer.shape || layer.data.len() != spec.len() {
                return Err(Error::Validation(format!(
                    "model layer '{}' {:?} does not match expected '{}' {:?}",
                    layer.name, layer.shape, spec.name, spec.shape
                )));
            }
            params.extend_from_slice(&layer.data);
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("model contains non-finite weights".into()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn save(&self, w: impl Write) -> Result<()> {
        serde_json::to_writer(w, &self.to_model_file())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<TinyNet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        let file: ModelFile = serde_json::from_str(&text)?;
        TinyNet::from_model_file(&file)
    }
}

/// ReLU that lets NaN through, so divergence surfaces in the loss.
fn relu(z: f64) -> f64 {
    if z < 0.0 {
        0.0
    } else {
        z
    }
}

fn label_index(label: Label) -> usize {
    match label {
        Label::Bg => 0,
        Label::Ed => 1,
    }
}

fn class_weight(weights: (f64, f64), label: Label) -> f64 {
    match label {
        Label::Bg => weights.0,
        Label::Ed => weights.1,
    }
}

/// Negative log-likelihood of `label` and the softmax probabilities.
fn nll_and_softmax(logits: [f64; 2], label: Label) -> (f64, [f64; 2]) {
    let m = logits[0].max(logits[1]);
    let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
    let z = e[0] + e[1];
    let log_z = m + z.ln();
    let probs = [e[0] / z, e[1] / z];
    (log_z - logits[label_index(label)], probs)
}

/// Serialized network: architecture descriptor and flat row-major tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub version: u32,
    pub architecture: Architecture,
    pub input_kind: InputKind,
    pub input_len: usize,
    pub hidden: usize,
    pub seed: u64,
    pub param_count: usize,
    pub layers: Vec<ModelLayer>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelLayer {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}
