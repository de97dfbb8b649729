//! CSAE architecture: convolutional encoder, mirrored decoder and a dense
//! classifier head that consumes the latent code.
//!
//! Encoder: `[conv(stride 2) -> relu] x n -> flatten -> 128 relu -> 128 relu -> lambda`.
//! Decoder: `128 relu -> 128 relu -> flat relu -> reshape -> [tconv(stride 2)] x n -> sigmoid`,
//! with the transposed convolutions using the encoder's kernels and channel
//! counts in reverse order. Classifier: `128 relu -> 128 relu -> k softmax`.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, Activation, Init, LayerParams, LayerSpec, Network};
use crate::tensor::Tensor;

pub const HIDDEN_UNITS: usize = 128;
pub const CONV_STRIDE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PresetName {
    /// 28x28 inputs, two 3x3 convolutions with 32 and 64 filters.
    Small28,
    /// 128x128 inputs, four convolutions (5x5, 5x5, 3x3, 3x3) with 32..256 filters.
    Large128,
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetName::Small28 => "small28",
            PresetName::Large128 => "large128",
        })
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small28" => Ok(PresetName::Small28),
            "large128" => Ok(PresetName::Large128),
            other => Err(Error::invalid(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchPreset {
    pub name: PresetName,
    pub conv_filters: Vec<usize>,
    pub conv_kernels: Vec<usize>,
    pub input_side: usize,
    pub lambda: usize,
    pub num_classes: usize,
    /// One bias per convolution filter.
    pub conv_bias: bool,
}

impl ArchPreset {
    pub fn new(name: PresetName, lambda: usize, num_classes: usize) -> Self {
        let (conv_filters, conv_kernels, input_side) = match name {
            PresetName::Small28 => (vec![32, 64], vec![3, 3], 28),
            PresetName::Large128 => (vec![32, 64, 128, 256], vec![5, 5, 3, 3], 128),
        };
        ArchPreset {
            name,
            conv_filters,
            conv_kernels,
            input_side,
            lambda,
            num_classes,
            conv_bias: true,
        }
    }

    pub fn small28(lambda: usize, num_classes: usize) -> Self {
        Self::new(PresetName::Small28, lambda, num_classes)
    }

    pub fn large128(lambda: usize, num_classes: usize) -> Self {
        Self::new(PresetName::Large128, lambda, num_classes)
    }

    /// Spatial side after each encoder convolution, starting at the input.
    pub fn spatial_chain(&self) -> Vec<usize> {
        let mut chain = vec![self.input_side];
        for _ in &self.conv_filters {
            let last = *chain.last().expect("non-empty");
            chain.push(last.div_ceil(CONV_STRIDE));
        }
        chain
    }

    pub fn bottleneck_side(&self) -> usize {
        *self.spatial_chain().last().expect("non-empty")
    }

    pub fn flatten_size(&self) -> usize {
        let side = self.bottleneck_side();
        side * side * self.conv_filters.last().copied().unwrap_or(1)
    }

    fn validate(&self) -> Result<()> {
        if self.lambda < 1 {
            return Err(Error::invalid("latent dimension must be at least 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid("need at least 2 classes"));
        }
        if self.conv_filters.is_empty() || self.conv_filters.len() != self.conv_kernels.len() {
            return Err(Error::invalid(
                "conv filters and kernels must be non-empty and paired",
            ));
        }
        let factor = CONV_STRIDE.pow(self.conv_filters.len() as u32);
        if self.input_side == 0 || !self.input_side.is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "unsupported input side {}: must be a positive multiple of {factor}",
                self.input_side
            )));
        }
        Ok(())
    }

    pub fn encoder_specs(&self) -> Vec<(Option<String>, LayerSpec)> {
        let mut specs = Vec::new();
        for (i, (&f, &k)) in self.conv_filters.iter().zip(&self.conv_kernels).enumerate() {
            specs.push((
                Some(format!("enc.conv{i}")),
                LayerSpec::Conv2d {
                    kernel: [k, k],
                    filters: f,
                    stride: CONV_STRIDE,
                    bias: self.conv_bias,
                },
            ));
            specs.push((None, LayerSpec::Activation(Activation::Relu)));
        }
        specs.push((None, LayerSpec::Flatten));
        push_dense_stack(
            &mut specs,
            "enc",
            &[HIDDEN_UNITS, HIDDEN_UNITS, self.lambda],
            "fc2",
        );
        specs
    }

    pub fn decoder_specs(&self) -> Vec<(Option<String>, LayerSpec)> {
        let mut specs = Vec::new();
        push_dense_stack(
            &mut specs,
            "dec",
            &[HIDDEN_UNITS, HIDDEN_UNITS, self.flatten_size()],
            "fc2",
        );
        specs.push((None, LayerSpec::Activation(Activation::Relu)));
        let side = self.bottleneck_side();
        let channels = *self.conv_filters.last().expect("validated");
        specs.push((None, LayerSpec::Reshape(vec![side, side, channels])));
        let n = self.conv_filters.len();
        for j in 0..n {
            let kernel = self.conv_kernels[n - 1 - j];
            let filters = if j + 1 < n {
                self.conv_filters[n - 2 - j]
            } else {
                1
            };
            specs.push((
                Some(format!("dec.tconv{j}")),
                LayerSpec::Conv2dTranspose {
                    kernel: [kernel, kernel],
                    filters,
                    stride: CONV_STRIDE,
                    bias: self.conv_bias,
                },
            ));
            let act = if j + 1 < n {
                Activation::Relu
            } else {
                Activation::Sigmoid
            };
            specs.push((None, LayerSpec::Activation(act)));
        }
        specs
    }

    pub fn classifier_specs(&self) -> Vec<(Option<String>, LayerSpec)> {
        let mut specs = Vec::new();
        push_dense_stack(
            &mut specs,
            "cls",
            &[HIDDEN_UNITS, HIDDEN_UNITS, self.num_classes],
            "out",
        );
        specs
    }
}

/// Dense layers named `{prefix}.fc{i}` with ReLU between them; the final one
/// is named `{prefix}.{last}` and left linear.
fn push_dense_stack(
    specs: &mut Vec<(Option<String>, LayerSpec)>,
    prefix: &str,
    widths: &[usize],
    last: &str,
) {
    for (i, &units) in widths.iter().enumerate() {
        let is_last = i + 1 == widths.len();
        let name = if is_last {
            format!("{prefix}.{last}")
        } else {
            format!("{prefix}.fc{i}")
        };
        specs.push((Some(name), LayerSpec::Dense { units }));
        if !is_last {
            specs.push((None, LayerSpec::Activation(Activation::Relu)));
        }
    }
}

fn build_net(
    specs: &[(Option<String>, LayerSpec)],
    input: &[usize],
    rng: &mut ChaCha8Rng,
) -> Result<(Network, Vec<usize>)> {
    let borrowed: Vec<(Option<&str>, LayerSpec)> = specs
        .iter()
        .map(|(n, s)| (n.as_deref(), s.clone()))
        .collect();
    Network::build(&borrowed, input, Init::GlorotUniform, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsaeModel {
    pub preset: ArchPreset,
    pub encoder: Network,
    pub decoder: Network,
    pub classifier: Network,
}

impl CsaeModel {
    /// Glorot-uniform weights and zero biases drawn from a seeded generator.
    pub fn build(preset: ArchPreset, seed: u64) -> Result<Self> {
        preset.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let side = preset.input_side;
        let (encoder, z_shape) = build_net(&preset.encoder_specs(), &[side, side, 1], &mut rng)?;
        let (decoder, out_shape) = build_net(&preset.decoder_specs(), &z_shape, &mut rng)?;
        debug_assert_eq!(out_shape, vec![side, side, 1]);
        let (classifier, _) = build_net(&preset.classifier_specs(), &z_shape, &mut rng)?;
        Ok(CsaeModel {
            preset,
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn lambda(&self) -> usize {
        self.preset.lambda
    }

    pub fn num_classes(&self) -> usize {
        self.preset.num_classes
    }

    pub fn input_side(&self) -> usize {
        self.preset.input_side
    }

    pub fn param_count(&self) -> usize {
        self.encoder.param_count() + self.decoder.param_count() + self.classifier.param_count()
    }

    pub fn check_images(&self, x: &Tensor) -> Result<()> {
        let side = self.preset.input_side;
        match x.shape() {
            &[_, h, w, 1] if h == side && w == side => Ok(()),
            s => Err(Error::shape(format!(
                "expected images [batch, {side}, {side}, 1], got {s:?}"
            ))),
        }
    }

    pub fn check_latent(&self, z: &Tensor) -> Result<()> {
        match z.shape() {
            &[_, d] if d == self.preset.lambda => Ok(()),
            s => Err(Error::shape(format!(
                "expected latents [batch, {}], got {s:?}",
                self.preset.lambda
            ))),
        }
    }

    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.check_images(x)?;
        self.encoder.forward(x)
    }

    /// Encodes in chunks of `batch` samples to bound memory.
    pub fn encode_batched(&self, x: &Tensor, batch: usize) -> Result<Tensor> {
        self.check_images(x)?;
        self.map_batched(x, batch, |chunk| self.encoder.forward(chunk))
    }

    pub fn decode(&self, z: &Tensor) -> Result<Tensor> {
        self.check_latent(z)?;
        self.decoder.forward(z)
    }

    pub fn reconstruct(&self, x: &Tensor) -> Result<Tensor> {
        self.decoder.forward(&self.encode(x)?)
    }

    /// Class probabilities for latent codes.
    pub fn classify_latent(&self, z: &Tensor) -> Result<Tensor> {
        self.check_latent(z)?;
        softmax_rows(&self.classifier.forward(z)?)
    }

    /// Class probabilities for images; the head only sees the latent code.
    pub fn classify(&self, x: &Tensor) -> Result<Tensor> {
        self.classify_latent(&self.encode(x)?)
    }

    pub fn classify_batched(&self, x: &Tensor, batch: usize) -> Result<Tensor> {
        self.check_images(x)?;
        self.map_batched(x, batch, |chunk| self.classify(chunk))
    }

    pub fn predict(&self, x: &Tensor, batch: usize) -> Result<Vec<usize>> {
        self.classify_batched(x, batch)?.argmax_rows()
    }

    fn map_batched(
        &self,
        x: &Tensor,
        batch: usize,
        f: impl Fn(&Tensor) -> Result<Tensor>,
    ) -> Result<Tensor> {
        let batch = batch.max(1);
        let n = x.batch();
        if n <= batch {
            return f(x);
        }
        let mut parts = Vec::with_capacity(n.div_ceil(batch));
        let mut start = 0;
        while start < n {
            let end = (start + batch).min(n);
            parts.push(f(&x.slice_batch(start, end)?)?);
            start = end;
        }
        Tensor::concat_batch(&parts)
    }

    /// All trainable layers in canonical order: encoder, decoder, classifier.
    pub fn named_params(&self) -> impl Iterator<Item = (&str, &LayerParams)> {
        self.encoder
            .named_params()
            .chain(self.decoder.named_params())
            .chain(self.classifier.named_params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut LayerParams> {
        self.encoder
            .layers
            .iter_mut()
            .chain(self.decoder.layers.iter_mut())
            .chain(self.classifier.layers.iter_mut())
            .filter_map(|l| l.params_mut())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Layer;

    fn zero_weights(model: &mut CsaeModel) {
        for p in model.params_mut() {
            p.weights = Tensor::zeros_like(&p.weights);
        }
    }

    #[test]
    fn small28_shapes_and_param_count() {
        let m = CsaeModel::build(ArchPreset::small28(10, 10), 1).unwrap();
        assert_eq!(m.preset.spatial_chain(), vec![28, 14, 7]);
        assert_eq!(m.preset.flatten_size(), 7 * 7 * 64);
        // Hand shape arithmetic, layer by layer (weights + biases).
        let encoder = (9 * 32 + 32)
            + (9 * 32 * 64 + 64)
            + (3136 * 128 + 128)
            + (128 * 128 + 128)
            + (128 * 10 + 10);
        let decoder = (10 * 128 + 128)
            + (128 * 128 + 128)
            + (128 * 3136 + 3136)
            + (9 * 32 * 64 + 32)
            + (9 * 32 + 1);
        let classifier = (10 * 128 + 128) + (128 * 128 + 128) + (128 * 10 + 10);
        assert_eq!(encoder + decoder + classifier, 898_581);
        assert_eq!(m.param_count(), 898_581);
    }

    #[test]
    fn large128_chain() {
        let p = ArchPreset::large128(2, 3);
        assert_eq!(p.spatial_chain(), vec![128, 64, 32, 16, 8]);
        assert_eq!(p.flatten_size(), 16384);
        let m = CsaeModel::build(p, 0).unwrap();
        let x = Tensor::zeros([1, 128, 128, 1]).unwrap();
        assert_eq!(m.encode(&x).unwrap().shape(), &[1, 2]);
        let z = Tensor::zeros([1, 2]).unwrap();
        assert_eq!(m.decode(&z).unwrap().shape(), &[1, 128, 128, 1]);
    }

    #[test]
    fn decoder_mirrors_encoder() {
        let m = CsaeModel::build(ArchPreset::large128(4, 3), 0).unwrap();
        let enc_channels: Vec<usize> = m
            .encoder
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv2d { params, .. } => Some(params.weights.shape()[2]),
                _ => None,
            })
            .collect();
        let dec_channels: Vec<usize> = m
            .decoder
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Conv2dTranspose { params, .. } => Some(params.weights.shape()[2]),
                _ => None,
            })
            .collect();
        let mut rev = enc_channels.clone();
        rev.reverse();
        assert_eq!(dec_channels, rev);
        let widths = |n: &Network| -> Vec<usize> {
            n.layers
                .iter()
                .filter_map(|l| match l {
                    Layer::Dense { params, .. } => Some(params.weights.shape()[1]),
                    _ => None,
                })
                .collect()
        };
        let enc_in: Vec<usize> = m
            .encoder
            .layers
            .iter()
            .filter_map(|l| match l {
                Layer::Dense { params, .. } => Some(params.weights.shape()[0]),
                _ => None,
            })
            .collect();
        let mut dec = widths(&m.decoder);
        dec.reverse();
        assert_eq!(dec, enc_in);
    }

    #[test]
    fn same_seed_same_model() {
        let a = CsaeModel::build(ArchPreset::small28(2, 10), 42).unwrap();
        let b = CsaeModel::build(ArchPreset::small28(2, 10), 42).unwrap();
        assert_eq!(a, b);
        let c = CsaeModel::build(ArchPreset::small28(2, 10), 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_image_encodes_to_zero() {
        let m = CsaeModel::build(ArchPreset::small28(10, 10), 5).unwrap();
        let z = m.encode(&Tensor::zeros([3, 28, 28, 1]).unwrap()).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn decode_range_and_zero_weights() {
        let mut m = CsaeModel::build(ArchPreset::small28(3, 10), 5).unwrap();
        let z = Tensor::new([5, 3], (0..15).map(|i| i as f32 - 7.0).collect()).unwrap();
        let x = m.decode(&z).unwrap();
        assert_eq!(x.shape(), &[5, 28, 28, 1]);
        assert!(x.data().iter().all(|&v| v > 0.0 && v < 1.0));
        zero_weights(&mut m);
        let x = m.decode(&z).unwrap();
        assert!(x.data().iter().all(|&v| v == 0.5));
        let p = m
            .classify(&Tensor::full([2, 28, 28, 1], 0.3).unwrap())
            .unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.1).abs() < 1e-7));
    }

    #[test]
    fn classify_consumes_latent_only() {
        let m = CsaeModel::build(ArchPreset::small28(4, 10), 9).unwrap();
        let x = Tensor::new(
            [2, 28, 28, 1],
            (0..1568).map(|i| (i % 255) as f32 / 255.0).collect(),
        )
        .unwrap();
        let p = m.classify(&x).unwrap();
        let direct = softmax_rows(&m.classifier.forward(&m.encode(&x).unwrap()).unwrap()).unwrap();
        assert_eq!(p, direct);
        for row in p.data().chunks(10) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CsaeModel::build(ArchPreset::small28(0, 10), 0).is_err());
        assert!(CsaeModel::build(ArchPreset::small28(2, 1), 0).is_err());
        let mut p = ArchPreset::small28(2, 10);
        p.input_side = 30;
        assert!(CsaeModel::build(p, 0).is_err());
        let m = CsaeModel::build(ArchPreset::small28(2, 10), 0).unwrap();
        assert!(m.encode(&Tensor::zeros([1, 32, 32, 1]).unwrap()).is_err());
        assert!(m.decode(&Tensor::zeros([1, 3]).unwrap()).is_err());
    }

    #[test]
    fn batched_encode_matches_single_pass() {
        let m = CsaeModel::build(ArchPreset::small28(3, 10), 2).unwrap();
        let x = Tensor::new(
            [7, 28, 28, 1],
            (0..7 * 784)
                .map(|i| ((i * 31) % 256) as f32 / 255.0)
                .collect(),
        )
        .unwrap();
        let whole = m.encode(&x).unwrap();
        let parts = m.encode_batched(&x, 3).unwrap();
        assert_eq!(whole.shape(), parts.shape());
        for (a, b) in whole.data().iter().zip(parts.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
