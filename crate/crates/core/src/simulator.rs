//! Fixed-step closed-loop simulation with delay buffers and trace recording.
//!
//! The plant state integrates with classical RK4 while the torque is held
//! constant across each sampling interval (zero-order hold). Delayed
//! quantities are read from the history buffer at exact sample lags. Until
//! the buffer is warm the loop applies PD-only control with finite-difference
//! velocity and no feedforward. Divergence is data: a blown-up run is
//! returned as a flagged trace, not an error.

use std::collections::VecDeque;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::controllers::{
    asmc_step, ftdc_step, tarc_step, tdc_step, ControllerConfig, ControllerState,
    FeedforwardMode, Strategy, VelocitySource,
};
use crate::error::{Error, Result};
use crate::estimator::estimate;
use crate::plants::{accelerate, measure, PlantModel, ReferenceTrajectory};
use crate::scalar::{fl, is_finite, Scalar};

/// State norm beyond which a run counts as numerically blown up.
const BLOWUP_NORM: f64 = 1e6;

/// Start-up policy while the history buffer fills.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmupPolicy {
    /// PD control on measured positions with finite-difference velocity,
    /// no feedforward and no switching term.
    PdOnly,
}

/// Explicit initial plant state; simulations start on the reference when absent.
#[derive(Debug, Clone)]
pub struct InitialState<T: Scalar> {
    pub q: Vec<T>,
    pub q_dot: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct SimConfig<T: Scalar> {
    pub dt: T,
    pub duration: T,
    /// Delay in sampling intervals; must match the controller's.
    pub h_lag: usize,
    pub warmup_policy: WarmupPolicy,
    pub seed: u64,
    pub record_every: usize,
    /// ||e1|| level defining the settling metric.
    pub settle_threshold: T,
    /// Allowed torque jump across the warmup boundary before the trace is flagged.
    pub tau_jump_max: T,
    pub initial: Option<InitialState<T>>,
}

impl<T: Scalar> SimConfig<T> {
    pub fn new(dt: T, duration: T, h_lag: usize, seed: u64) -> Self {
        SimConfig {
            dt,
            duration,
            h_lag,
            warmup_policy: WarmupPolicy::PdOnly,
            seed,
            record_every: 1,
            settle_threshold: fl(0.01),
            tau_jump_max: fl(1e3),
            initial: None,
        }
    }

    fn validate(&self, ctrl: &ControllerConfig<T>) -> Result<()> {
        if self.dt <= T::zero() {
            return Err(Error::Invalid("dt must be positive".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Invalid("record_every must be at least 1".into()));
        }
        if self.h_lag != ctrl.h_lag {
            return Err(Error::Invalid(format!(
                "sim h_lag = {} does not match controller h_lag = {}",
                self.h_lag, ctrl.h_lag
            )));
        }
        let h = self.dt * fl::<T>(self.h_lag as f64);
        if self.duration < fl::<T>(10.0) * h {
            return Err(Error::Invalid("duration must be at least 10 h".into()));
        }
        Ok(())
    }
}

/// One recorded sample of the closed loop.
#[derive(Debug, Clone)]
pub struct Record<T: Scalar> {
    pub t: T,
    /// True plant position.
    pub q: DVector<T>,
    /// True plant velocity.
    pub q_dot: DVector<T>,
    pub q_meas: DVector<T>,
    pub q_d: DVector<T>,
    /// Tracking error of the true state.
    pub e1: DVector<T>,
    pub tau: DVector<T>,
    pub c_hat: T,
    pub s_norm: T,
    /// Kernel velocity estimate when the strategy produces one.
    pub q_dot_est: Option<DVector<T>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunOutcome {
    Completed,
    /// The run blew up; the offending step is recorded and the trace keeps
    /// everything up to and including the failure row.
    Diverged { step: usize, what: String },
}

#[derive(Debug, Clone)]
pub struct SimTrace<T: Scalar> {
    pub n: usize,
    pub dt: T,
    pub record_every: usize,
    pub warmup_steps: usize,
    pub settle_threshold: T,
    pub records: Vec<Record<T>>,
    pub outcome: RunOutcome,
    /// ||tau_k - tau_{k-1}|| across the warmup boundary.
    pub warmup_tau_jump: Option<T>,
    pub warmup_jump_exceeded: bool,
}

impl<T: Scalar> SimTrace<T> {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, RunOutcome::Diverged { .. })
    }

    /// Records at or after the warmup boundary.
    pub fn post_warmup(&self) -> impl Iterator<Item = &Record<T>> {
        let t_w = self.dt * fl::<T>(self.warmup_steps as f64);
        let eps = self.dt * fl::<T>(0.5);
        self.records.iter().filter(move |r| r.t + eps >= t_w)
    }
}

/// Scalar summary of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics<T: Scalar> {
    pub rms_e1: T,
    pub max_e1: T,
    /// Integral of ||tau||^2 dt over the span.
    pub control_energy: T,
    /// Total variation of tau per second.
    pub chattering_index: T,
    pub c_hat_final: T,
    pub c_hat_max: T,
    /// First time after which ||e1|| stays below the settle threshold.
    pub settle_time: Option<T>,
    pub diverged: bool,
}

/// One RK4 step of the plant under zero-order-hold torque. Also returns the
/// plant acceleration at the step start (the k1 stage), which the full-state
/// controller consumes as its delayed acceleration.
pub fn rk4_plant_step<T: Scalar>(
    plant: &PlantModel<T>,
    q: &DVector<T>,
    q_dot: &DVector<T>,
    tau: &DVector<T>,
    t: T,
    dt: T,
) -> Result<(DVector<T>, DVector<T>, DVector<T>)> {
    let half = dt * fl::<T>(0.5);
    let k1q = q_dot.clone();
    let k1v = accelerate(plant, q, q_dot, tau, t)?;
    let k2q = q_dot + &k1v * half;
    let k2v = accelerate(plant, &(q + &k1q * half), &k2q, tau, t + half)?;
    let k3q = q_dot + &k2v * half;
    let k3v = accelerate(plant, &(q + &k2q * half), &k3q, tau, t + half)?;
    let k4q = q_dot + &k3v * dt;
    let k4v = accelerate(plant, &(q + &k3q * dt), &k4q, tau, t + dt)?;

    let sixth = dt / fl::<T>(6.0);
    let two = fl::<T>(2.0);
    let q_next = q + (k1q + &k2q * two + &k3q * two + k4q) * sixth;
    let v_next = q_dot + (&k1v + &k2v * two + &k3v * two + k4v) * sixth;
    Ok((q_next, v_next, k1v))
}

fn finite_vec<T: Scalar>(v: &DVector<T>) -> bool {
    v.iter().all(|&x| is_finite(x))
}

/// Runs the closed loop and records a trace.
pub fn run<T: Scalar>(
    plant: &PlantModel<T>,
    ctrl: &ControllerConfig<T>,
    reference: &ReferenceTrajectory<T>,
    sim: &SimConfig<T>,
) -> Result<SimTrace<T>> {
    ctrl.validate()?;
    sim.validate(ctrl)?;
    if plant.n != reference.n || plant.n != ctrl.gains.n {
        return Err(Error::DimensionMismatch {
            what: format!(
                "plant n = {}, reference n = {}, gains n = {}",
                plant.n, reference.n, ctrl.gains.n
            ),
        });
    }

    let n = plant.n;
    let dt = sim.dt;
    let n_steps = (sim.duration / dt).round().to_usize().unwrap_or(0);
    let exact_ff = ctrl.feedforward == FeedforwardMode::ExactModel;
    let warmup_steps = if exact_ff { 0 } else { ctrl.warmup_steps() };

    let mut state = ControllerState::new(ctrl, dt);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(sim.seed);
    noise_rng.set_stream(1);

    let r0 = reference.at(T::zero());
    let (mut q, mut q_dot) = match &sim.initial {
        Some(init) => {
            if init.q.len() != n || init.q_dot.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "initial state axis count".into(),
                });
            }
            (
                DVector::from_vec(init.q.clone()),
                DVector::from_vec(init.q_dot.clone()),
            )
        }
        None => (r0.q_d.clone(), r0.q_dot_d.clone()),
    };

    // true accelerations of past steps, newest last; needed by full-state TDC
    let mut accel_hist: VecDeque<DVector<T>> = VecDeque::with_capacity(ctrl.h_lag + 2);

    let mut records = Vec::new();
    let mut outcome = RunOutcome::Completed;
    let mut warmup_tau_jump = None;
    let mut tau_prev: Option<DVector<T>> = None;

    for k in 0..=n_steps {
        let t = dt * fl::<T>(k as f64);
        let refp = reference.at(t);
        let q_meas = measure(plant, &q, &mut noise_rng);
        state.buffer.begin_step(t, q_meas.clone());

        let fd_vel = |buffer: &crate::history::HistoryBuffer<T>| -> DVector<T> {
            match buffer.lag(1) {
                Ok(prev) => (&q_meas - &prev.q) / dt,
                Err(_) => DVector::zeros(n),
            }
        };

        let mut q_dot_est = None;
        let step_result: Result<DVector<T>> = if k < warmup_steps {
            // PD warmup: no feedforward, no switching term
            let e1 = &q_meas - &refp.q_d;
            let e1_dot_fd = fd_vel(&state.buffer) - &refp.q_dot_d;
            let u = &refp.q_ddot_d - &ctrl.gains.k2 * &e1_dot_fd - &ctrl.gains.k1 * &e1;
            let s_norm = match (&ctrl.strategy, &ctrl.p) {
                (Strategy::Tarc, Some(p)) => {
                    let mut err = DVector::zeros(2 * n);
                    err.rows_mut(0, n).copy_from(&e1);
                    err.rows_mut(n, n).copy_from(&e1_dot_fd);
                    (ctrl.gains.b.transpose() * p * err).norm()
                }
                _ => T::zero(),
            };
            plant.nominal.m_hat(&q_meas).map(|m_hat| {
                let tau = m_hat * &u;
                state.buffer.complete_step(tau.clone(), u, s_norm);
                tau
            })
        } else if exact_ff {
            // sigma_1 = 0 diagnostic: exact model feedforward, true state, no delay
            let e1 = &q - &refp.q_d;
            let e1_dot = &q_dot - &refp.q_dot_d;
            let u = &refp.q_ddot_d - &ctrl.gains.k2 * &e1_dot - &ctrl.gains.k1 * &e1;
            let tau = plant.m_true(&q) * &u + plant.n_true(&q, &q_dot, t);
            state.buffer.complete_step(tau.clone(), u, T::zero());
            Ok(tau)
        } else {
            match ctrl.strategy {
                Strategy::Tdc => {
                    let (vel, acc_h) = match ctrl.velocity_source {
                        VelocitySource::TrueState => {
                            let idx = accel_hist.len().checked_sub(ctrl.h_lag);
                            let acc = idx
                                .and_then(|i| accel_hist.get(i))
                                .cloned()
                                .ok_or(Error::BufferCold {
                                    needed: ctrl.h_lag,
                                    have: accel_hist.len(),
                                })?;
                            (q_dot.clone(), acc)
                        }
                        VelocitySource::FiniteDifference => {
                            let vel = fd_vel(&state.buffer);
                            // central second difference of measured positions,
                            // centred exactly at the delayed sample so it pairs
                            // with tau at the same lag
                            let qa = state.buffer.lag(ctrl.h_lag - 1)?.q.clone();
                            let qb = state.buffer.lag(ctrl.h_lag)?.q.clone();
                            let qc = state.buffer.lag(ctrl.h_lag + 1)?.q.clone();
                            let acc = (qa - &qb * fl::<T>(2.0) + qc) / (dt * dt);
                            (vel, acc)
                        }
                    };
                    let tau_h = state.buffer.lag(ctrl.h_lag)?.tau.clone();
                    tdc_step(
                        ctrl,
                        &mut state,
                        &plant.nominal,
                        &q_meas,
                        &vel,
                        &acc_h,
                        &tau_h,
                        &refp,
                    )
                }
                Strategy::Ftdc => {
                    let r = ftdc_step(ctrl, &mut state, &plant.nominal, &q_meas, &refp);
                    if r.is_ok() {
                        q_dot_est = estimate(&state.buffer, &ctrl.kernel_j1, 0).ok();
                    }
                    r
                }
                Strategy::Asmc => {
                    let vel = match ctrl.velocity_source {
                        VelocitySource::TrueState => q_dot.clone(),
                        VelocitySource::FiniteDifference => fd_vel(&state.buffer),
                    };
                    asmc_step(ctrl, &mut state, &plant.nominal, &q_meas, &vel, &refp, dt)
                }
                Strategy::Tarc => {
                    let r = tarc_step(ctrl, &mut state, &plant.nominal, &q_meas, &refp, dt);
                    if r.is_ok() {
                        q_dot_est = estimate(&state.buffer, &ctrl.kernel_j1, 0).ok();
                    }
                    r
                }
            }
        };

        let tau = match step_result {
            Ok(tau) if finite_vec(&tau) => tau,
            Ok(_) => {
                outcome = RunOutcome::Diverged {
                    step: k,
                    what: "non-finite torque".into(),
                };
                DVector::zeros(n)
            }
            Err(e) => return Err(e),
        };

        if k == warmup_steps && k > 0 {
            if let Some(prev) = &tau_prev {
                warmup_tau_jump = Some((&tau - prev).norm());
            }
        }

        let diverging = matches!(outcome, RunOutcome::Diverged { .. });
        if k % sim.record_every == 0 || diverging {
            records.push(Record {
                t,
                q: q.clone(),
                q_dot: q_dot.clone(),
                q_meas: q_meas.clone(),
                q_d: refp.q_d.clone(),
                e1: &q - &refp.q_d,
                tau: tau.clone(),
                c_hat: state.c_hat,
                s_norm: state.last_s_norm,
                q_dot_est,
            });
        }
        if diverging {
            break;
        }
        tau_prev = Some(tau.clone());

        if k < n_steps {
            match rk4_plant_step(plant, &q, &q_dot, &tau, t, dt) {
                Ok((q_next, v_next, accel)) => {
                    if accel_hist.len() == ctrl.h_lag + 2 {
                        accel_hist.pop_front();
                    }
                    accel_hist.push_back(accel);
                    q = q_next;
                    q_dot = v_next;
                }
                Err(e) => {
                    outcome = RunOutcome::Diverged {
                        step: k,
                        what: e.to_string(),
                    };
                    break;
                }
            }
            let norm = q.norm() + q_dot.norm();
            if !finite_vec(&q) || !finite_vec(&q_dot) || norm > fl::<T>(BLOWUP_NORM) {
                outcome = RunOutcome::Diverged {
                    step: k + 1,
                    what: format!("state norm {:?}", norm.to_f64()),
                };
                break;
            }
        }
    }

    let warmup_jump_exceeded = warmup_tau_jump
        .map(|j| j > sim.tau_jump_max)
        .unwrap_or(false);

    Ok(SimTrace {
        n,
        dt,
        record_every: sim.record_every,
        warmup_steps,
        settle_threshold: sim.settle_threshold,
        records,
        outcome,
        warmup_tau_jump,
        warmup_jump_exceeded,
    })
}

/// Computes the scalar metrics over the whole trace or its post-warmup span.
pub fn compute_metrics<T: Scalar>(trace: &SimTrace<T>, post_warmup_only: bool) -> Result<Metrics<T>> {
    let span: Vec<&Record<T>> = if post_warmup_only {
        trace.post_warmup().collect()
    } else {
        trace.records.iter().collect()
    };
    if span.is_empty() {
        return Err(Error::EmptyTrace);
    }

    let m = span.len();
    let dt_rec = trace.dt * fl::<T>(trace.record_every as f64);
    let mut sum_sq = T::zero();
    let mut max_e1 = T::zero();
    let mut energy = T::zero();
    let mut variation = T::zero();
    let mut c_hat_max = T::zero();
    for (i, r) in span.iter().enumerate() {
        let e_norm = r.e1.norm();
        sum_sq += e_norm * e_norm;
        max_e1 = max_e1.max(e_norm);
        energy += r.tau.norm_squared() * dt_rec;
        c_hat_max = c_hat_max.max(r.c_hat);
        if i + 1 < m {
            variation += (&span[i + 1].tau - &r.tau).norm();
        }
    }
    let span_duration = span[m - 1].t - span[0].t;
    let chattering_index = if span_duration > T::zero() {
        variation / span_duration
    } else {
        T::zero()
    };

    // settle time: first record after which ||e1|| never reaches the threshold again
    let thr = trace.settle_threshold;
    let mut settle_time = None;
    let last_violation = span.iter().rposition(|r| r.e1.norm() >= thr);
    match last_violation {
        None => settle_time = Some(span[0].t),
        Some(idx) if idx + 1 < m => settle_time = Some(span[idx + 1].t),
        Some(_) => {}
    }

    Ok(Metrics {
        rms_e1: (sum_sq / fl::<T>(m as f64)).sqrt(),
        max_e1,
        control_energy: energy,
        chattering_index,
        c_hat_final: span[m - 1].c_hat,
        c_hat_max,
        settle_time,
        diverged: trace.diverged(),
    })
}

/// Runs every strategy on identical plant/reference/seed and reports one
/// metrics row per strategy, in the given order.
pub fn compare<T: Scalar>(
    plant: &PlantModel<T>,
    base: &ControllerConfig<T>,
    strategies: &[Strategy],
    reference: &ReferenceTrajectory<T>,
    sim: &SimConfig<T>,
) -> Result<Vec<(Strategy, Metrics<T>)>> {
    let mut rows = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let mut cfg = base.clone();
        cfg.strategy = strategy;
        let trace = run(plant, &cfg, reference, sim)?;
        let metrics = compute_metrics(&trace, true)?;
        rows.push((strategy, metrics));
    }
    Ok(rows)
}

/// Least-squares slope of ||e1|| against t over the final `fraction` of the
/// post-warmup records; the UUB checks require it to be non-positive.
pub fn late_time_slope<T: Scalar>(trace: &SimTrace<T>, fraction: f64) -> Option<T> {
    let recs: Vec<&Record<T>> = trace.post_warmup().collect();
    if recs.len() < 4 {
        return None;
    }
    let start = ((recs.len() as f64) * (1.0 - fraction)).floor() as usize;
    let tail = &recs[start..];
    let m = fl::<T>(tail.len() as f64);
    let mut st = T::zero();
    let mut sy = T::zero();
    for r in tail {
        st += r.t;
        sy += r.e1.norm();
    }
    let (tm, ym) = (st / m, sy / m);
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for r in tail {
        let dtc = r.t - tm;
        sxx += dtc * dtc;
        sxy += dtc * (r.e1.norm() - ym);
    }
    if sxx == T::zero() {
        return None;
    }
    Some(sxy / sxx)
}
