//! Adam optimizer and the step-decay learning-rate schedule.

use crate::error::NumError;
use crate::params::ParamStore;
use crate::scalar::Scalar;

/// Step-decay learning rate: `initial * decay^floor(epoch / period)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay: f64,
    pub period: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 1e-3,
            decay: 0.1,
            period: 30,
        }
    }
}

impl LrSchedule {
    pub fn rate(&self, epoch: usize) -> f64 {
        self.initial * self.decay.powi((epoch / self.period) as i32)
    }
}

struct Moments<S> {
    m: Vec<S>,
    v: Vec<S>,
}

/// Adam with bias correction. Moment buffers mirror the trainable parameter
/// set; the step counter increases by exactly one per [`Adam::step`].
pub struct Adam<S> {
    beta1: S,
    beta2: S,
    epsilon: S,
    lr: S,
    step: u64,
    slots: Vec<Option<Moments<S>>>,
}

impl<S: Scalar> Adam<S> {
    /// Standard constants: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(params: &ParamStore<S>, lr: f64) -> Self {
        let slots = params
            .iter()
            .map(|p| {
                if p.trainable {
                    Some(Moments {
                        m: vec![S::zero(); p.tensor.len()],
                        v: vec![S::zero(); p.tensor.len()],
                    })
                } else {
                    None
                }
            })
            .collect();
        Adam {
            beta1: S::from_f64(0.9),
            beta2: S::from_f64(0.999),
            epsilon: S::from_f64(1e-8),
            lr: S::from_f64(lr),
            step: 0,
            slots,
        }
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = S::from_f64(lr);
    }

    pub fn lr(&self) -> f64 {
        self.lr.as_f64()
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update from the gradients stored on the parameters. Missing
    /// gradient buffers are treated as zero gradients.
    pub fn step(&mut self, params: &mut ParamStore<S>) -> Result<(), NumError> {
        if self.slots.len() != params.len() {
            return Err(NumError::ShapeMismatch {
                op: "adam_step",
                expected: format!("{} parameter slots", self.slots.len()),
                got: format!("{} parameters", params.len()),
            });
        }
        self.step += 1;
        let t = self.step as i32;
        let one = S::one();
        let bc1 = one - self.beta1.powi(t);
        let bc2 = one - self.beta2.powi(t);

        for idx in 0..params.len() {
            let slot = match &mut self.slots[idx] {
                Some(s) => s,
                None => continue,
            };
            let p = params.get_mut(idx);
            if !p.trainable {
                continue;
            }
            if let Some(g) = p.tensor.grad() {
                if g.len() != slot.m.len() {
                    return Err(NumError::ShapeMismatch {
                        op: "adam_step",
                        expected: format!("gradient of length {}", slot.m.len()),
                        got: format!("length {}", g.len()),
                    });
                }
            }
            let (data, grad) = p.tensor.data_and_grad();
            for i in 0..data.len() {
                let gi = grad.map_or(S::zero(), |g| g[i]);
                let m = self.beta1 * slot.m[i] + (one - self.beta1) * gi;
                let v = self.beta2 * slot.v[i] + (one - self.beta2) * gi * gi;
                slot.m[i] = m;
                slot.v[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                data[i] = data[i] - self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

/// Scales all trainable gradients so their global L2 norm does not exceed
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm<S: Scalar>(params: &mut ParamStore<S>, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        params.scale_grads(S::from_f64(max_norm / norm));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamGroup;
    use crate::tensor::Tensor;

    fn scalar_store(v: f64) -> ParamStore<f64> {
        let mut ps = ParamStore::new();
        ps.add("p", ParamGroup::Head, Tensor::vector(vec![v]));
        ps
    }

    #[test]
    fn schedule_matches_decay_rule() {
        let s = LrSchedule::default();
        assert_eq!(s.rate(0), 1e-3);
        assert_eq!(s.rate(29), 1e-3);
        assert!((s.rate(30) - 1e-4).abs() < 1e-19);
        assert!((s.rate(60) - 1e-5).abs() < 1e-19);
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut ps = scalar_store(1.25);
        let mut opt = Adam::new(&ps, 0.1);
        ps.get_mut(0).tensor.accumulate_grad(&[0.0], 1.0);
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.get(0).tensor.data()[0], 1.25);
        assert_eq!(opt.step_count(), 1);
        // Absent gradient buffers behave the same.
        let mut ps2 = scalar_store(-3.0);
        let mut opt2 = Adam::new(&ps2, 0.1);
        opt2.step(&mut ps2).unwrap();
        assert_eq!(ps2.get(0).tensor.data()[0], -3.0);
    }

    // Hand evaluation for g = 1, lr = 0.1, defaults:
    //   step 1: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
    //           delta = -0.1 / (1 + 1e-8)
    //   step 2: m = 0.19, v = 0.001999, bc1 = 0.19, bc2 = 0.001999
    //           m_hat = v_hat = 1 again, so the update repeats.
    #[test]
    fn hand_evaluated_first_step() {
        let mut ps = scalar_store(0.0);
        let mut opt = Adam::new(&ps, 0.1);
        ps.get_mut(0).tensor.accumulate_grad(&[1.0], 1.0);
        opt.step(&mut ps).unwrap();
        let expected = -0.1 * 1.0 / (1.0 + 1e-8);
        assert!((ps.get(0).tensor.data()[0] - expected).abs() < 1e-15);
        assert!((ps.get(0).tensor.data()[0] + 0.1).abs() < 1e-8);
    }

    #[test]
    fn successive_steps_follow_hand_formulas() {
        let g = 1.0;
        let (b1, b2, eps, lr) = (0.9, 0.999, 1e-8, 0.1);
        // Scalar oracle evaluated step by step.
        let mut m = 0.0;
        let mut v = 0.0;
        let mut theta = 0.5;
        let mut expected = Vec::new();
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1f(b1, t));
            let v_hat = v / (1.0 - b1f(b2, t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
            expected.push(theta);
        }

        let mut ps = scalar_store(0.5);
        let mut opt = Adam::new(&ps, lr);
        for &exp in &expected {
            ps.get_mut(0).tensor.zero_grad();
            ps.get_mut(0).tensor.accumulate_grad(&[g], 1.0);
            opt.step(&mut ps).unwrap();
            assert!((ps.get(0).tensor.data()[0] - exp).abs() < 1e-15);
        }
        assert_eq!(opt.step_count(), 2);
    }

    fn b1f(b: f64, t: u32) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn frozen_params_are_untouched() {
        let mut ps = ParamStore::new();
        ps.add("fw.w", ParamGroup::Weighter, Tensor::vector(vec![2.0]));
        ps.add("head.w", ParamGroup::Head, Tensor::vector(vec![2.0]));
        ps.set_group_trainable(ParamGroup::Weighter, false);
        let mut opt = Adam::new(&ps, 0.1);
        for i in 0..2 {
            ps.get_mut(i).tensor.accumulate_grad(&[1.0], 1.0);
        }
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.get(0).tensor.data()[0], 2.0);
        assert_ne!(ps.get(1).tensor.data()[0], 2.0);
    }

    #[test]
    fn clip_rescales_large_gradients() {
        let mut ps = ParamStore::<f64>::new();
        ps.add("a", ParamGroup::Head, Tensor::vector(vec![0.0, 0.0]));
        ps.get_mut(0).tensor.accumulate_grad(&[3.0, 4.0], 1.0);
        let norm = clip_grad_norm(&mut ps, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let g = ps.get(0).tensor.grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-12);
        assert!((g[1] - 0.8).abs() < 1e-12);
    }
}
