use serde::{Deserialize, Serialize};

use super::mlp::ParamSet;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay, applied as `p -= lr * weight_decay * p`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
        }
    }
}

/// First/second moment accumulators, one buffer per parameter buffer.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<P: ParamSet + ?Sized>(config: AdamConfig, params: &P) -> Self {
        let shapes: Vec<usize> = params.buffers().iter().map(|b| b.len()).collect();
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }
}

/// One bias-corrected adaptive-moment update.
pub fn adam_step<P: ParamSet + ?Sized>(params: &mut P, grads: &P, state: &mut OptimizerState) -> Result<()> {
    let grads = grads.buffers();
    let mut params = params.buffers_mut();
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(shape_err("adam_step", state.m.len(), format!("{} / {}", params.len(), grads.len())));
    }
    for (i, (p, g)) in params.iter().zip(&grads).enumerate() {
        if p.len() != g.len() || p.len() != state.m[i].len() {
            return Err(shape_err(
                "adam_step",
                format!("buffer {i} of length {}", state.m[i].len()),
                format!("{} params / {} grads", p.len(), g.len()),
            ));
        }
    }

    let c = state.config;
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - c.beta1.powi(t);
    let bias2 = 1.0 - c.beta2.powi(t);
    for ((p, g), (m, v)) in params.iter_mut().zip(&grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
        for k in 0..p.len() {
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * g[k];
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            p[k] -= c.lr * (m_hat / (v_hat.sqrt() + c.eps) + c.weight_decay * p[k]);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::MlpParams;

    fn net() -> MlpParams {
        let mut p = MlpParams::zeros(2, 2, 1);
        p.assign_flat(&[0.5, -1.0, 2.0, 0.25, 0.1, -0.2, 1.5, -0.75, 0.3]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_without_decay_is_a_fixed_point() {
        let mut p = net();
        let before = p.clone();
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = OptimizerState::new(cfg, &p);
        adam_step(&mut p, &before.zeros_like(), &mut st).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_against_gradient_sign() {
        let mut p = net();
        let before = p.to_flat();
        let mut g = p.zeros_like();
        let signs = [1.0, -1.0, 2.0, -0.5, 3.0, -3.0, 0.1, -0.1, 1.0];
        g.assign_flat(&signs).unwrap();
        let cfg = AdamConfig {
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = OptimizerState::new(cfg, &p);
        adam_step(&mut p, &g, &mut st).unwrap();
        for ((a, b), s) in p.to_flat().iter().zip(&before).zip(&signs) {
            assert_eq!((a - b).signum(), -s.signum());
        }
    }

    #[test]
    fn decay_shrinks_norm() {
        let mut p = net();
        let norm = |p: &MlpParams| p.to_flat().iter().map(|v| v * v).sum::<f64>().sqrt();
        let n0 = norm(&p);
        let zero = p.zeros_like();
        let mut st = OptimizerState::new(
            AdamConfig {
                weight_decay: 0.1,
                ..AdamConfig::default()
            },
            &p,
        );
        adam_step(&mut p, &zero, &mut st).unwrap();
        let n1 = norm(&p);
        adam_step(&mut p, &zero, &mut st).unwrap();
        let n2 = norm(&p);
        assert!(n1 < n0 && n2 < n1, "{n0} {n1} {n2}");
        // Pure decay multiplies by (1 - lr·wd) each step.
        assert!((n2 - n0 * (1.0 - 0.01 * 0.1f64).powi(2)).abs() < 1e-12);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let p0 = net();
        let mut g = p0.zeros_like();
        g.assign_flat(&[0.3; 9]).unwrap();
        let run = || {
            let mut p = p0.clone();
            let mut st = OptimizerState::new(AdamConfig::default(), &p);
            for _ in 0..5 {
                adam_step(&mut p, &g, &mut st).unwrap();
            }
            p.to_flat()
        };
        assert_eq!(run(), run());

        let mut p = p0.clone();
        let mut st = OptimizerState::new(AdamConfig::default(), &p);
        assert!(adam_step(&mut p, &MlpParams::zeros(3, 2, 1), &mut st).is_err());
    }
}
