use serde::{Deserialize, Serialize};

use super::{net_init, NetSpec, Params};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Activation record of one forward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    widths: Vec<usize>,
    /// `inputs[l]` is the input seen by layer `l` (post-ReLU for `l > 0`).
    inputs: Vec<Vec<T>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<T>>,
}

/// Reverse-mode derivatives of `output_grad . output`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub wrt_params: Vec<T>,
    pub wrt_input: Vec<T>,
}

pub fn forward<T: Scalar>(
    params: &Params<T>,
    spec: &NetSpec,
    input: &[T],
) -> Result<(Vec<T>, Cache<T>)> {
    params.check_layout(spec)?;
    if input.len() != spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.input_dim(),
            got: input.len(),
            context: "network input",
        });
    }
    let slots = spec.layer_slots();
    let last = slots.len() - 1;
    let mut inputs = Vec::with_capacity(slots.len());
    let mut pre = Vec::with_capacity(last);
    let mut x = input.to_vec();
    for (l, slot) in slots.iter().enumerate() {
        let w = &params.values[slot.weight_offset..slot.bias_offset];
        let b = &params.values[slot.bias_offset..slot.bias_offset + slot.fan_out];
        let z: Vec<T> = (0..slot.fan_out)
            .map(|o| {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                row.iter()
                    .zip(&x)
                    .fold(b[o], |acc, (&wi, &xi)| acc + wi * xi)
            })
            .collect();
        inputs.push(x);
        if l == last {
            x = z;
        } else {
            x = z
                .iter()
                .map(|&v| if v > T::zero() { v } else { T::zero() })
                .collect();
            pre.push(z);
        }
    }
    Ok((
        x,
        Cache {
            widths: spec.widths().to_vec(),
            inputs,
            pre,
        },
    ))
}

/// Adds the parameter gradient of `output_grad . output` into `grad_params`
/// and returns the input gradient.
pub fn backward_accumulate<T: Scalar>(
    params: &Params<T>,
    spec: &NetSpec,
    cache: &Cache<T>,
    output_grad: &[T],
    grad_params: &mut [T],
) -> Result<Vec<T>> {
    if cache.widths != spec.widths() {
        return Err(Error::StaleCache);
    }
    params.check_layout(spec)?;
    if grad_params.len() != params.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            got: grad_params.len(),
            context: "gradient buffer",
        });
    }
    if output_grad.len() != spec.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.output_dim(),
            got: output_grad.len(),
            context: "output gradient",
        });
    }
    let slots = spec.layer_slots();
    let mut delta = output_grad.to_vec();
    for (l, slot) in slots.iter().enumerate().rev() {
        let x = &cache.inputs[l];
        let w = &params.values[slot.weight_offset..slot.bias_offset];
        {
            let (gw, gb) = grad_params[slot.weight_offset..slot.bias_offset + slot.fan_out]
                .split_at_mut(slot.fan_in * slot.fan_out);
            for (o, &d) in delta.iter().enumerate() {
                gb[o] += d;
                if d != T::zero() {
                    let row = &mut gw[o * slot.fan_in..(o + 1) * slot.fan_in];
                    for (g, &xi) in row.iter_mut().zip(x) {
                        *g += d * xi;
                    }
                }
            }
        }
        let mut dx = vec![T::zero(); slot.fan_in];
        for (o, &d) in delta.iter().enumerate() {
            if d != T::zero() {
                let row = &w[o * slot.fan_in..(o + 1) * slot.fan_in];
                for (acc, &wi) in dx.iter_mut().zip(row) {
                    *acc += d * wi;
                }
            }
        }
        if l > 0 {
            // ReLU derivative, taken as 0 at the kink.
            for (v, &z) in dx.iter_mut().zip(&cache.pre[l - 1]) {
                if z <= T::zero() {
                    *v = T::zero();
                }
            }
        }
        delta = dx;
    }
    Ok(delta)
}

pub fn backward<T: Scalar>(
    params: &Params<T>,
    spec: &NetSpec,
    cache: &Cache<T>,
    output_grad: &[T],
) -> Result<Gradient<T>> {
    let mut wrt_params = vec![T::zero(); params.len()];
    let wrt_input = backward_accumulate(params, spec, cache, output_grad, &mut wrt_params)?;
    Ok(Gradient {
        wrt_params,
        wrt_input,
    })
}

/// A spec bundled with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub spec: NetSpec,
    pub params: Params<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: NetSpec, params: Params<T>) -> Result<Self> {
        params.check_layout(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn init(spec: NetSpec, seed: u64) -> Self {
        let params = net_init(&spec, seed);
        Self { spec, params }
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, Cache<T>)> {
        forward(&self.params, &self.spec, input)
    }

    pub fn predict(&self, input: &[T]) -> Result<Vec<T>> {
        Ok(self.forward(input)?.0)
    }

    /// Output of a single-output network.
    pub fn scalar(&self, input: &[T]) -> Result<T> {
        Ok(self.forward(input)?.0[0])
    }

    pub fn backward(&self, cache: &Cache<T>, output_grad: &[T]) -> Result<Gradient<T>> {
        backward(&self.params, &self.spec, cache, output_grad)
    }

    /// Value and full gradient of a single-output network at `input`.
    pub fn scalar_with_gradient(&self, input: &[T]) -> Result<(T, Gradient<T>)> {
        let (out, cache) = self.forward(input)?;
        let grad = self.backward(&cache, &[T::one()])?;
        Ok((out[0], grad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::net_init;

    #[test]
    fn zero_params_give_zero_output() {
        let spec = NetSpec::new(vec![3, 5, 2]).unwrap();
        let p = Params::<f64>::zeros(&spec);
        let (out, _) = forward(&p, &spec, &[0.3, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let spec = NetSpec::new(vec![2, 2]).unwrap();
        // W = [[1, 2], [3, 4]], b = [0.5, -0.5]
        let p = Params {
            values: vec![1.0, 2.0, 3.0, 4.0, 0.5, -0.5],
        };
        let (out, _) = forward(&p, &spec, &[1.0, -1.0]).unwrap();
        assert_eq!(out, vec![1.0 - 2.0 + 0.5, 3.0 - 4.0 - 0.5]);
    }

    #[test]
    fn linear_model_param_gradient_is_the_feature_vector() {
        let spec = NetSpec::new(vec![4, 1]).unwrap();
        let p: Params<f64> = net_init(&spec, 3);
        let phi = [0.2, -1.5, 3.0, 0.0];
        let (_, cache) = forward(&p, &spec, &phi).unwrap();
        let g = backward(&p, &spec, &cache, &[1.0]).unwrap();
        assert_eq!(&g.wrt_params[..4], &phi);
        assert_eq!(g.wrt_params[4], 1.0);
    }

    #[test]
    fn dead_relu_unit_passes_no_gradient() {
        // 1 -> 2 -> 1, hidden unit 0 has negative pre-activation.
        let spec = NetSpec::new(vec![1, 2, 1]).unwrap();
        let p = Params {
            values: vec![-1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
        };
        let (_, cache) = forward(&p, &spec, &[2.0]).unwrap();
        let g = backward(&p, &spec, &cache, &[1.0]).unwrap();
        // first-layer weight and bias of the dead unit
        assert_eq!(g.wrt_params[0], 0.0);
        assert_eq!(g.wrt_params[2], 0.0);
        // output weight on the dead unit sees activation 0
        assert_eq!(g.wrt_params[4], 0.0);
        assert_eq!(g.wrt_input, vec![1.0]);
    }

    #[test]
    fn mismatched_input_and_stale_cache_are_rejected() {
        let spec = NetSpec::new(vec![3, 4, 1]).unwrap();
        let other = NetSpec::new(vec![3, 5, 1]).unwrap();
        let p: Params<f64> = net_init(&spec, 0);
        assert!(matches!(
            forward(&p, &spec, &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        let (_, cache) = forward(&p, &spec, &[1.0, 2.0, 3.0]).unwrap();
        let q: Params<f64> = net_init(&other, 0);
        assert!(matches!(
            backward(&q, &other, &cache, &[1.0]),
            Err(Error::StaleCache)
        ));
    }
}
