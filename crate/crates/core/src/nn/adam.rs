use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step_count: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    /// Fresh state with the usual `(0.9, 0.999, 1e-8)` hyperparameters.
    pub fn new(n: usize) -> Self {
        Self::with_hyper(n, T::of(0.9), T::of(0.999), T::of(1e-8))
    }

    pub fn with_hyper(n: usize, beta1: T, beta2: T, eps: T) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step_count: 0,
            beta1,
            beta2,
            eps,
        }
    }
}

/// One bias-corrected Adam update with decoupled weight decay.
///
/// Parameters are first scaled by `1 - lr * weight_decay`. A non-finite
/// gradient entry leaves both `params` and `state` untouched and reports
/// divergence at the current step count.
pub fn adam_step<T: Scalar>(
    params: &mut Params<T>,
    grad: &[T],
    state: &mut AdamState<T>,
    lr: T,
    weight_decay: T,
) -> Result<()> {
    let n = params.len();
    if grad.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: grad.len().min(state.m.len()).min(state.v.len()),
            context: "adam step",
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::Divergence {
            step: state.step_count as usize,
            what: format!("non-finite gradient entry {i}"),
        });
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let decay = T::one() - lr * weight_decay;
    for i in 0..n {
        let g = grad[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        let p = &mut params.values[i];
        if weight_decay != T::zero() {
            *p *= decay;
        }
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// `target <- chi * online + (1 - chi) * target`, elementwise.
pub fn polyak_update<T: Scalar>(target: &mut Params<T>, online: &Params<T>, chi: T) -> Result<()> {
    if target.len() != online.len() {
        return Err(Error::DimensionMismatch {
            expected: target.len(),
            got: online.len(),
            context: "polyak update layout",
        });
    }
    if !(chi >= T::zero() && chi <= T::one()) {
        return Err(Error::Config(format!("target rate {chi} outside [0, 1]")));
    }
    let keep = T::one() - chi;
    for (t, &o) in target.values.iter_mut().zip(&online.values) {
        *t = chi * o + keep * *t;
    }
    Ok(())
}

/// Linear warmup to a constant learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
}

impl LrSchedule {
    pub fn constant(base_lr: f64) -> Self {
        Self {
            base_lr,
            warmup_steps: 0,
        }
    }

    pub fn lr(&self, step: u64) -> f64 {
        if self.warmup_steps == 0 {
            self.base_lr
        } else {
            self.base_lr * ((step + 1) as f64 / self.warmup_steps as f64).min(1.0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_zero_decay_is_a_fixed_point() {
        let mut p = Params {
            values: vec![1.0, -2.0, 0.5],
        };
        let before = p.clone();
        let mut s = AdamState::new(3);
        adam_step(&mut p, &[0.0; 3], &mut s, 0.1, 0.0).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.m, vec![0.0; 3]);
        assert_eq!(s.v, vec![0.0; 3]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_is_sign_like() {
        let g: [f64; 3] = [0.3, -4.0, 1e-3];
        let mut p = Params {
            values: vec![0.0; 3],
        };
        let mut s = AdamState::new(3);
        let lr = 0.01;
        adam_step(&mut p, &g, &mut s, lr, 0.0).unwrap();
        for (i, &gi) in g.iter().enumerate() {
            // m_hat = g and v_hat = g^2 after one step.
            let expected = -lr * gi / (gi.abs() + 1e-8);
            assert!((p.values[i] - expected).abs() < 1e-15, "{i}");
        }
    }

    #[test]
    fn decoupled_decay_scales_params() {
        let mut p = Params {
            values: vec![2.0, -1.0],
        };
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.01, 0.1).unwrap();
        assert_eq!(p.values, vec![2.0 * 0.999, -0.999]);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut p = Params {
            values: vec![1.0, 1.0],
        };
        let mut s = AdamState::new(2);
        let err = adam_step(&mut p, &[0.1, f64::NAN], &mut s, 0.1, 0.0).unwrap_err();
        assert!(matches!(err, Error::Divergence { step: 0, .. }));
        assert_eq!(p.values, vec![1.0, 1.0]);
        assert_eq!(s.step_count, 0);
    }

    #[test]
    fn polyak_identities() {
        let online = Params {
            values: vec![1.0, -3.5, 0.25],
        };
        let init = Params {
            values: vec![7.0, 0.0, -1.0],
        };
        let mut t = init.clone();
        polyak_update(&mut t, &online, 0.0).unwrap();
        assert_eq!(t, init);
        polyak_update(&mut t, &online, 1.0).unwrap();
        assert_eq!(t, online);

        let mut t = Params {
            values: vec![0.0; 4],
        };
        polyak_update(
            &mut t,
            &Params {
                values: vec![1.0; 4],
            },
            5e-3,
        )
        .unwrap();
        assert!(t.values.iter().all(|&v| v == 0.005));
    }

    #[test]
    fn polyak_rejects_layout_mismatch() {
        let mut t = Params {
            values: vec![0.0; 2],
        };
        let o = Params {
            values: vec![0.0; 3],
        };
        assert!(polyak_update(&mut t, &o, 0.5).is_err());
    }

    #[test]
    fn warmup_schedule() {
        let s = LrSchedule {
            base_lr: 1e-3,
            warmup_steps: 4,
        };
        let lrs: Vec<f64> = (0..6).map(|k| s.lr(k)).collect();
        assert_eq!(lrs, vec![2.5e-4, 5e-4, 7.5e-4, 1e-3, 1e-3, 1e-3]);
        assert_eq!(LrSchedule::constant(0.1).lr(0), 0.1);
    }
}
