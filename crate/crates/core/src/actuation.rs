//! Joint-space PD torque law with per-motor saturation, and the
//! command-latency delay line.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PdGains<T: Real> {
    pub kp: Vec<T>,
    pub kd: Vec<T>,
}

impl<T: Real> PdGains<T> {
    pub fn uniform(n: usize, kp: T, kd: T) -> Self {
        Self {
            kp: vec![kp; n],
            kd: vec![kd; n],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.kp.len() != self.kd.len() {
            return Err("kp and kd lengths differ".into());
        }
        if self.kp.iter().chain(&self.kd).any(|g| !(*g >= T::zero())) {
            return Err("gains must be non-negative".into());
        }
        Ok(())
    }
}

/// `τᵢ = clamp(kpᵢ·(q_desᵢ − qᵢ) − kdᵢ·q̇ᵢ, ±limitᵢ)`
pub fn pd_torque<T: Real>(gains: &PdGains<T>, q_des: &[T], q: &[T], qd: &[T], limits: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); q.len()];
    pd_torque_into(gains, q_des, q, qd, limits, &mut out);
    out
}

pub fn pd_torque_into<T: Real>(
    gains: &PdGains<T>,
    q_des: &[T],
    q: &[T],
    qd: &[T],
    limits: &[T],
    out: &mut [T],
) {
    assert!(
        q_des.len() == q.len() && qd.len() == q.len() && limits.len() == q.len() && out.len() == q.len(),
        "pd_torque: length mismatch"
    );
    for i in 0..q.len() {
        let raw = gains.kp[i] * (q_des[i] - q[i]) - gains.kd[i] * qd[i];
        let lim = limits[i].abs();
        // NaN input saturates to zero torque
        out[i] = if raw.is_finite() { raw.clamp(-lim, lim) } else { T::zero() };
    }
}

/// Fixed delay line over action vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyBuffer<T: Real> {
    ring: VecDeque<Vec<T>>,
    delay_steps: usize,
    fill_default: Vec<T>,
}

impl<T: Real> LatencyBuffer<T> {
    pub fn new(delay_steps: usize, fill_default: Vec<T>) -> Self {
        let mut ring = VecDeque::with_capacity(delay_steps + 1);
        for _ in 0..delay_steps {
            ring.push_back(fill_default.clone());
        }
        Self {
            ring,
            delay_steps,
            fill_default,
        }
    }

    pub fn delay_steps(&self) -> usize {
        self.delay_steps
    }

    pub fn capacity(&self) -> usize {
        self.ring.capacity()
    }

    /// Refill with the default and change the delay.
    pub fn reset(&mut self, delay_steps: usize) {
        self.delay_steps = delay_steps;
        self.ring.clear();
        for _ in 0..delay_steps {
            self.ring.push_back(self.fill_default.clone());
        }
    }

    /// Pushes `action` and returns the action pushed `delay_steps` calls
    /// ago (the fill default until the line has filled).
    pub fn push_pop(&mut self, action: &[T]) -> Vec<T> {
        self.ring.push_back(action.to_vec());
        self.ring.pop_front().expect("ring holds delay_steps + 1 entries")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_error_zero_torque() {
        let g = PdGains::uniform(3, 40.0, 1.0);
        let q = [0.1, -0.2, 0.3];
        assert_eq!(pd_torque(&g, &q, &q, &[0.0; 3], &[10.0; 3]), vec![0.0; 3]);
    }

    #[test]
    fn proportional_term() {
        let g = PdGains::uniform(1, 10.0f64, 0.0);
        let t = pd_torque(&g, &[0.1], &[0.0], &[0.5], &[48.0]);
        assert!((t[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn clamps_to_limit() {
        let g = PdGains::uniform(2, 100.0, 0.0);
        let t = pd_torque(&g, &[1.0, -1.0], &[0.0, 0.0], &[0.0, 0.0], &[48.0, 48.0]);
        assert_eq!(t, vec![48.0, -48.0]);
    }

    #[test]
    fn nan_command_gives_zero_torque() {
        let g = PdGains::uniform(1, 10.0, 1.0);
        assert_eq!(pd_torque(&g, &[f64::NAN], &[0.0], &[0.0], &[5.0]), vec![0.0]);
    }

    #[test]
    fn zero_delay_is_identity() {
        let mut b = LatencyBuffer::new(0, vec![9.0]);
        assert_eq!(b.push_pop(&[1.0]), vec![1.0]);
        assert_eq!(b.push_pop(&[2.0]), vec![2.0]);
    }

    #[test]
    fn delay_two_is_fifo() {
        let mut b = LatencyBuffer::new(2, vec![7.0, 7.0]);
        assert!(b.capacity() >= 3);
        assert_eq!(b.push_pop(&[0.0, 0.0]), vec![7.0, 7.0]);
        assert_eq!(b.push_pop(&[1.0, 1.0]), vec![7.0, 7.0]);
        assert_eq!(b.push_pop(&[2.0, 2.0]), vec![0.0, 0.0]);
        b.reset(1);
        assert_eq!(b.push_pop(&[5.0, 5.0]), vec![7.0, 7.0]);
        assert_eq!(b.push_pop(&[6.0, 6.0]), vec![5.0, 5.0]);
    }

    proptest! {
        #[test]
        fn torque_within_limit(
            kp in 0.0..500.0f64, kd in 0.0..10.0f64,
            qdes in -10.0..10.0f64, q in -10.0..10.0f64, qd in -100.0..100.0f64,
            lim in 0.0..60.0f64,
        ) {
            let g = PdGains::uniform(1, kp, kd);
            let t = pd_torque(&g, &[qdes], &[q], &[qd], &[lim]);
            prop_assert!(t[0].abs() <= lim);
        }

        #[test]
        fn delay_line_shifts_sequence(delay in 0usize..5, seq in proptest::collection::vec(-1.0..1.0f64, 1..40)) {
            let mut b = LatencyBuffer::new(delay, vec![0.5]);
            let out: Vec<f64> = seq.iter().map(|a| b.push_pop(&[*a])[0]).collect();
            for (k, o) in out.iter().enumerate() {
                let expected = if k < delay { 0.5 } else { seq[k - delay] };
                prop_assert_eq!(*o, expected);
            }
        }
    }
}
