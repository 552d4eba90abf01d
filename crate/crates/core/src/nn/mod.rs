//! Minimal fixed-topology feed-forward networks.
//!
//! Parameters live in one flat vector. Layer `l` occupies a row-major
//! `widths[l+1] x widths[l]` weight block followed by its `widths[l+1]`
//! biases; layers are stored in order. Hidden layers use ReLU and the output
//! layer is affine.

mod adam;
mod io;
mod mlp;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use adam::{adam_step, polyak_update, AdamState, LrSchedule};
pub use io::{encode_params, read_params, write_params, PARAMS_MAGIC, PARAMS_VERSION};
pub use mlp::{backward, backward_accumulate, forward, Cache, Gradient, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
}

/// Layer widths of a feed-forward network, input first and output last.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    widths: Vec<usize>,
    #[serde(default)]
    activation: Activation,
}

/// Location of one affine layer inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlot {
    pub weight_offset: usize,
    pub bias_offset: usize,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl NetSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 layer widths, got {}",
                widths.len()
            )));
        }
        if let Some(i) = widths.iter().position(|&w| w == 0) {
            return Err(Error::InvalidSpec(format!("layer {i} has width 0")));
        }
        Ok(Self {
            widths,
            activation: Activation::Relu,
        })
    }

    /// `input -> hidden... -> output`.
    pub fn mlp(input: usize, hidden: &[usize], output: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn layer_slots(&self) -> Vec<LayerSlot> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let slot = LayerSlot {
                    weight_offset: offset,
                    bias_offset: offset + w[0] * w[1],
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += w[0] * w[1] + w[1];
                slot
            })
            .collect()
    }
}

/// Flat parameter vector laid out according to a [`NetSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> Params<T> {
    pub fn zeros(spec: &NetSpec) -> Self {
        Self {
            values: vec![T::zero(); spec.num_params()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn check_layout(&self, spec: &NetSpec) -> Result<()> {
        if self.values.len() != spec.num_params() {
            return Err(Error::DimensionMismatch {
                expected: spec.num_params(),
                got: self.values.len(),
                context: "parameter vector length",
            });
        }
        Ok(())
    }

    /// Cast to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Params<U> {
        Params {
            values: self
                .values
                .iter()
                .map(|v| U::of(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// Fan-in uniform initialization with zero biases.
///
/// Weights of each layer are drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
pub fn net_init<T: Scalar>(spec: &NetSpec, seed: u64) -> Params<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Params::zeros(spec);
    for slot in spec.layer_slots() {
        let bound = 1.0 / (slot.fan_in as f64).sqrt();
        let weights =
            &mut params.values[slot.weight_offset..slot.weight_offset + slot.fan_in * slot.fan_out];
        for w in weights {
            *w = T::of(rng.random_range(-bound..=bound));
        }
    }
    params
}
