//! Minimal convolutional network engine used by both deep classifiers.
//!
//! A network is a stack of `conv3x3 → ReLU → maxpool2` blocks followed by
//! dense layers. All parameters live in one flat `f32` vector so gradients
//! from independent samples can be summed and fed to [`Adam`] directly.

mod layers;
mod optim;
pub mod train;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::exec::Execution;

pub use optim::{Adam, PlateauAction, PlateauScheduler};
pub use train::{run_training, EpochRecord, LoopConfig, TrainingHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSpec {
    pub out: usize,
    pub relu: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Square input side in pixels; single channel.
    pub input_size: usize,
    /// Output channels of each conv block.
    pub conv_channels: Vec<usize>,
    pub dense: Vec<DenseSpec>,
}

impl NetworkSpec {
    /// `(channels, side)` after each conv block, starting with the input.
    fn block_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = vec![(1, self.input_size)];
        for &c in &self.conv_channels {
            let side = shapes.last().unwrap().1 / 2;
            shapes.push((c, side));
        }
        shapes
    }

    pub fn flat_dim(&self) -> usize {
        let (c, s) = *self.block_shapes().last().unwrap();
        c * s * s
    }

    pub fn output_dim(&self) -> usize {
        self.dense.last().map_or_else(|| self.flat_dim(), |d| d.out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("network input size must be positive".into()));
        }
        if self.block_shapes().iter().any(|&(_, s)| s == 0) {
            return Err(Error::Config(format!(
                "input size {} too small for {} pooling stages",
                self.input_size,
                self.conv_channels.len()
            )));
        }
        if self.conv_channels.contains(&0) || self.dense.iter().any(|d| d.out == 0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvLayout {
    in_c: usize,
    out_c: usize,
    side: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, Copy)]
struct DenseLayout {
    input: usize,
    out: usize,
    relu: bool,
    w_off: usize,
    b_off: usize,
}

/// Network weights plus the offsets of each layer inside them.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkState", into = "NetworkState")]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<f32>,
    convs: Vec<ConvLayout>,
    denses: Vec<DenseLayout>,
}

#[derive(Serialize, Deserialize)]
struct NetworkState {
    spec: NetworkSpec,
    params: Vec<f32>,
}

impl TryFrom<NetworkState> for Network {
    type Error = Error;

    fn try_from(s: NetworkState) -> Result<Self> {
        let mut net = Network::zeros(s.spec)?;
        if net.params.len() != s.params.len() {
            return Err(Error::DimensionMismatch {
                expected: net.params.len(),
                actual: s.params.len(),
            });
        }
        net.params = s.params;
        Ok(net)
    }
}

impl From<Network> for NetworkState {
    fn from(n: Network) -> Self {
        NetworkState {
            spec: n.spec,
            params: n.params,
        }
    }
}

/// Activations kept from a training forward pass.
pub struct ForwardCache {
    /// Input of every conv block.
    conv_inputs: Vec<Vec<f32>>,
    /// Post-ReLU conv outputs (pre-pool), used as the ReLU mask.
    conv_acts: Vec<Vec<f32>>,
    /// Flat argmax index of each pooled value into `conv_acts`.
    pool_idx: Vec<Vec<u32>>,
    dense_inputs: Vec<Vec<f32>>,
    dense_outputs: Vec<Vec<f32>>,
}

impl Network {
    fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let shapes = spec.block_shapes();
        let mut off = 0;
        let mut convs = Vec::new();
        for i in 0..spec.conv_channels.len() {
            let (in_c, side) = shapes[i];
            let out_c = spec.conv_channels[i];
            let w_off = off;
            off += out_c * in_c * 9;
            let b_off = off;
            off += out_c;
            convs.push(ConvLayout {
                in_c,
                out_c,
                side,
                w_off,
                b_off,
            });
        }
        let mut denses = Vec::new();
        let mut input = spec.flat_dim();
        for d in &spec.dense {
            let w_off = off;
            off += d.out * input;
            let b_off = off;
            off += d.out;
            denses.push(DenseLayout {
                input,
                out: d.out,
                relu: d.relu,
                w_off,
                b_off,
            });
            input = d.out;
        }
        Ok(Self {
            spec,
            params: vec![0.0; off],
            convs,
            denses,
        })
    }

    /// He-normal initialization, zero biases.
    pub fn new(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in net.convs.clone() {
            let std = (2.0 / (c.in_c * 9) as f32).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            for p in &mut net.params[c.w_off..c.b_off] {
                *p = dist.sample(&mut rng);
            }
        }
        for d in net.denses.clone() {
            let std = (2.0 / d.input as f32).sqrt();
            let dist = Normal::new(0.0, std).expect("finite std");
            for p in &mut net.params[d.w_off..d.b_off] {
                *p = dist.sample(&mut rng);
            }
        }
        Ok(net)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn input_len(&self) -> usize {
        self.spec.input_size * self.spec.input_size
    }

    /// SHA-256 over the spec and raw weights, hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.spec).expect("spec serializes"));
        for p in &self.params {
            h.update(p.to_le_bytes());
        }
        hex::encode(h.finalize())
    }

    fn check_input(&self, input: &[f32]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::DimensionMismatch {
                expected: self.input_len(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f32]) -> Result<Vec<f32>> {
        Ok(self.forward_train(input)?.0)
    }

    pub fn forward_batch(&self, inputs: &[Vec<f32>], exec: Execution) -> Result<Vec<Vec<f32>>> {
        exec.map(inputs, |x| self.forward(x)).into_iter().collect()
    }

    pub fn forward_train(&self, input: &[f32]) -> Result<(Vec<f32>, ForwardCache)> {
        self.check_input(input)?;
        let mut cache = ForwardCache {
            conv_inputs: Vec::with_capacity(self.convs.len()),
            conv_acts: Vec::with_capacity(self.convs.len()),
            pool_idx: Vec::with_capacity(self.convs.len()),
            dense_inputs: Vec::with_capacity(self.denses.len()),
            dense_outputs: Vec::with_capacity(self.denses.len()),
        };
        let mut x = input.to_vec();
        for c in &self.convs {
            let mut act = vec![0f32; c.out_c * c.side * c.side];
            layers::conv3x3_forward(
                &x,
                c.in_c,
                c.side,
                &self.params[c.w_off..c.b_off],
                &self.params[c.b_off..c.b_off + c.out_c],
                &mut act,
            );
            act.iter_mut().for_each(|v| *v = v.max(0.0));
            let (pooled, idx) = layers::maxpool2_forward(&act, c.out_c, c.side);
            cache.conv_inputs.push(std::mem::replace(&mut x, pooled));
            cache.conv_acts.push(act);
            cache.pool_idx.push(idx);
        }
        for d in &self.denses {
            let mut y = layers::dense_forward(
                &x,
                &self.params[d.w_off..d.b_off],
                &self.params[d.b_off..d.b_off + d.out],
            );
            if d.relu {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            cache.dense_inputs.push(std::mem::replace(&mut x, y.clone()));
            cache.dense_outputs.push(y);
        }
        Ok((x, cache))
    }

    /// Accumulates `d loss / d params` into `grads` for one sample.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f32], grads: &mut [f32]) {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut g = grad_out.to_vec();
        for (i, d) in self.denses.iter().enumerate().rev() {
            if d.relu {
                for (gv, &y) in g.iter_mut().zip(&cache.dense_outputs[i]) {
                    if y <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let (gw, rest) = grads[d.w_off..].split_at_mut(d.b_off - d.w_off);
            g = layers::dense_backward(
                &cache.dense_inputs[i],
                &self.params[d.w_off..d.b_off],
                &g,
                gw,
                &mut rest[..d.out],
            );
        }
        for (i, c) in self.convs.iter().enumerate().rev() {
            let mut g_act = layers::maxpool2_backward(&g, &cache.pool_idx[i], c.out_c * c.side * c.side);
            for (gv, &a) in g_act.iter_mut().zip(&cache.conv_acts[i]) {
                if a <= 0.0 {
                    *gv = 0.0;
                }
            }
            let (gw, rest) = grads[c.w_off..].split_at_mut(c.b_off - c.w_off);
            g = layers::conv3x3_backward(
                &cache.conv_inputs[i],
                c.in_c,
                c.side,
                &self.params[c.w_off..c.b_off],
                &g_act,
                gw,
                &mut rest[..c.out_c],
                i > 0,
            );
        }
    }
}

/// Sums per-item gradient vectors in index order, so the result does not
/// depend on how items were scheduled across threads.
pub fn sum_in_order(parts: Vec<Vec<f32>>, len: usize) -> Vec<f32> {
    let mut total = vec![0f32; len];
    for p in parts {
        total.iter_mut().zip(&p).for_each(|(t, v)| *t += v);
    }
    total
}
