//! Adam optimizer with bias correction.

use super::model::Model;
use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Adam {
    pub hyper: AdamHyper,
    pub step_count: u64,
    /// First/second moment estimates, keyed by parameter name.
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(hyper: AdamHyper) -> Result<Self> {
        if !(hyper.lr > 0.0) {
            return Err(Error::config(format!("learning rate must be positive, got {}", hyper.lr)));
        }
        Ok(Adam {
            hyper,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        })
    }

    /// One optimizer step over every model parameter.
    pub fn step(&mut self, model: &mut Model) {
        self.step_count += 1;
        let step = self.step_count;
        let hyper = self.hyper;
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        model.visit_params(&mut |name, p| {
            Self::update_param_inner(m_map, v_map, hyper, step, &name, p);
        });
    }

    /// One step over the confidence-head parameters only (TCP phase 2).
    pub fn step_confidence(&mut self, model: &mut Model) {
        self.step_count += 1;
        let step = self.step_count;
        let hyper = self.hyper;
        let m_map = &mut self.m;
        let v_map = &mut self.v;
        model.visit_confidence_params(&mut |name, p| {
            Self::update_param_inner(m_map, v_map, hyper, step, &name, p);
        });
    }

    /// Update a single parameter (exposed for tests).
    pub fn update_param(&mut self, name: &str, p: &mut Param) {
        self.step_count += 1;
        Self::update_param_inner(&mut self.m, &mut self.v, self.hyper, self.step_count, name, p);
    }

    fn update_param_inner(
        m_map: &mut BTreeMap<String, Tensor>,
        v_map: &mut BTreeMap<String, Tensor>,
        hyper: AdamHyper,
        step: u64,
        name: &str,
        p: &mut Param,
    ) {
        let m = m_map
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(&p.value.shape));
        let v = v_map
            .entry(name.to_string())
            .or_insert_with(|| Tensor::zeros(&p.value.shape));
        let bc1 = 1.0 - hyper.beta1.powi(step as i32);
        let bc2 = 1.0 - hyper.beta2.powi(step as i32);
        for i in 0..p.value.data.len() {
            let g = p.grad.data[i];
            m.data[i] = hyper.beta1 * m.data[i] + (1.0 - hyper.beta1) * g;
            v.data[i] = hyper.beta2 * v.data[i] + (1.0 - hyper.beta2) * g * g;
            let m_hat = m.data[i] / bc1;
            let v_hat = v.data[i] / bc2;
            p.value.data[i] -= hyper.lr * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonpositive_lr() {
        assert!(Adam::new(AdamHyper { lr: 0.0, ..AdamHyper::default() }).is_err());
        assert!(Adam::new(AdamHyper { lr: -1.0, ..AdamHyper::default() }).is_err());
    }

    #[test]
    fn zero_gradient_leaves_parameter_unchanged() {
        let mut adam = Adam::new(AdamHyper::default()).unwrap();
        let mut p = Param::filled(&[3], 1.5);
        adam.update_param("p", &mut p);
        assert!(p.value.data.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn constant_gradient_update_approaches_lr() {
        // with a constant gradient, |update| -> lr after bias correction
        let hyper = AdamHyper { lr: 0.01, ..AdamHyper::default() };
        let mut adam = Adam::new(hyper).unwrap();
        let mut p = Param::filled(&[1], 0.0);
        let mut last = 0.0_f64;
        for _ in 0..200 {
            p.grad.data[0] = 2.0;
            let before = p.value.data[0];
            adam.update_param("p", &mut p);
            last = (p.value.data[0] - before).abs();
        }
        assert!((last - 0.01).abs() < 1e-3, "update magnitude {last}");
    }

    #[test]
    fn deterministic_given_same_state() {
        let mut a = Adam::new(AdamHyper::default()).unwrap();
        let mut b = Adam::new(AdamHyper::default()).unwrap();
        let mut pa = Param::filled(&[4], 0.3);
        let mut pb = Param::filled(&[4], 0.3);
        for step in 0..10 {
            for i in 0..4 {
                pa.grad.data[i] = (step * i) as f64 * 0.1 - 0.2;
                pb.grad.data[i] = (step * i) as f64 * 0.1 - 0.2;
            }
            a.update_param("x", &mut pa);
            b.update_param("x", &mut pb);
        }
        assert_eq!(pa.value.data, pb.value.data);
    }
}
