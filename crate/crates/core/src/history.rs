//! Fixed-capacity ring of timestamped control-loop samples.
//!
//! Delayed lookups return the exact stored sample for a lag expressed in
//! whole sampling intervals; there is no interpolation. Reads past the
//! currently stored history are rejected so callers must handle the cold
//! start explicitly.

use std::collections::VecDeque;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::{fl, Scalar};

/// One control-loop sample: measured position, applied torque, auxiliary
/// input and the sliding-variable norm recorded at time `t`.
#[derive(Debug, Clone)]
pub struct Sample<T: Scalar> {
    pub t: T,
    pub q: DVector<T>,
    pub tau: DVector<T>,
    pub u: DVector<T>,
    pub s_norm: T,
}

impl<T: Scalar> Sample<T> {
    /// Sample with only the position filled in; torque and auxiliary input
    /// are completed after the controller has run.
    pub fn positions_only(t: T, q: DVector<T>) -> Self {
        let n = q.len();
        Sample {
            t,
            q,
            tau: DVector::zeros(n),
            u: DVector::zeros(n),
            s_norm: T::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct HistoryBuffer<T: Scalar> {
    dt: T,
    capacity: usize,
    entries: VecDeque<Sample<T>>,
}

impl<T: Scalar> HistoryBuffer<T> {
    /// Ring holding at most `capacity` samples spaced exactly `dt` apart.
    pub fn new(capacity: usize, dt: T) -> Self {
        assert!(capacity > 0, "capacity must be positive");
        assert!(dt > T::zero(), "dt must be positive");
        HistoryBuffer {
            dt,
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `true` once a read at `lag` sampling intervals would succeed.
    pub fn is_warm(&self, lag: usize) -> bool {
        self.entries.len() > lag
    }

    /// Appends a sample; evicts the oldest when full. Panics if the
    /// timestamp does not continue the uniform grid, since that is a
    /// simulation-loop bug rather than a recoverable condition.
    pub fn push(&mut self, sample: Sample<T>) {
        if let Some(last) = self.entries.back() {
            let expected = last.t + self.dt;
            let err = (sample.t - expected).abs();
            assert!(
                err <= fl::<T>(1e-6) * self.dt,
                "sample timestamp off the uniform grid"
            );
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(sample);
    }

    /// Starts the current step by storing the freshly measured position.
    pub fn begin_step(&mut self, t: T, q: DVector<T>) {
        self.push(Sample::positions_only(t, q));
    }

    /// Completes the newest sample once the controller has produced its
    /// outputs for this step.
    pub fn complete_step(&mut self, tau: DVector<T>, u: DVector<T>, s_norm: T) {
        let last = self
            .entries
            .back_mut()
            .expect("complete_step called on empty buffer");
        last.tau = tau;
        last.u = u;
        last.s_norm = s_norm;
    }

    /// Sample `lag` sampling intervals in the past; `lag = 0` is the newest.
    pub fn lag(&self, lag: usize) -> Result<&Sample<T>> {
        let len = self.entries.len();
        if lag >= len {
            return Err(Error::BufferCold {
                needed: lag + 1,
                have: len,
            });
        }
        Ok(&self.entries[len - 1 - lag])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(t: f64, v: f64) -> Sample<f64> {
        Sample::positions_only(t, DVector::from_vec(vec![v]))
    }

    #[test]
    fn delayed_lookup_returns_exact_sample() {
        let mut buf = HistoryBuffer::new(8, 0.5);
        for k in 0..6 {
            buf.push(sample(k as f64 * 0.5, 10.0 + k as f64));
        }
        assert_eq!(buf.lag(0).unwrap().q[0], 15.0);
        assert_eq!(buf.lag(3).unwrap().q[0], 12.0);
        assert_eq!(buf.lag(5).unwrap().q[0], 10.0);
        assert!(matches!(buf.lag(6), Err(Error::BufferCold { .. })));
    }

    #[test]
    fn eviction_keeps_newest_window() {
        let mut buf = HistoryBuffer::new(3, 1.0);
        for k in 0..5 {
            buf.push(sample(k as f64, k as f64));
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.lag(2).unwrap().q[0], 2.0);
        assert!(buf.lag(3).is_err());
    }

    #[test]
    #[should_panic(expected = "off the uniform grid")]
    fn non_uniform_timestamp_panics() {
        let mut buf = HistoryBuffer::new(4, 1.0);
        buf.push(sample(0.0, 0.0));
        buf.push(sample(1.5, 0.0));
    }

    #[test]
    fn complete_step_fills_latest() {
        let mut buf = HistoryBuffer::new(4, 1.0);
        buf.begin_step(0.0, DVector::from_vec(vec![1.0]));
        buf.complete_step(
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![3.0]),
            4.0,
        );
        let s = buf.lag(0).unwrap();
        assert_eq!(s.tau[0], 2.0);
        assert_eq!(s.u[0], 3.0);
        assert_eq!(s.s_norm, 4.0);
    }
}
