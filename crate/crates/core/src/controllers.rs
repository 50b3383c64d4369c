//! The four control laws behind one step interface.
//!
//! All of them produce a joint torque `tau = M_hat u + N_hat` and differ in
//! how the auxiliary input `u` and the lumped-dynamics estimate `N_hat` are
//! formed:
//!
//! * `Tdc`  — full-state feedback, `N_hat = tau_h - M_hat(q_h) qdd_h` from
//!   one-sample-old input/output data.
//! * `Ftdc` — position-only feedback; velocity and the delayed acceleration
//!   are reconstructed by the window kernel estimator.
//! * `Asmc` — sliding-mode baseline with a threshold-driven switching gain;
//!   needs a nominal model of the lumped dynamics.
//! * `Tarc` — `Ftdc` plus a boundary-layer switching term whose gain adapts
//!   on the sign of `||s(t)|| - ||s(t-h)||`, needing neither a nominal model
//!   nor an uncertainty bound.
//!
//! Step functions expect the caller to have pushed the current measured
//! position via `HistoryBuffer::begin_step`; they complete that sample with
//! the torque, auxiliary input and sliding-variable norm they compute.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::{build_weights, estimate, KernelSpec};
use crate::history::HistoryBuffer;
use crate::plants::{NominalModel, ReferencePoint};
use crate::scalar::{fl, Scalar};
use crate::stability::GainSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Tdc,
    Ftdc,
    Asmc,
    Tarc,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Tdc => "TDC",
            Strategy::Ftdc => "FTDC",
            Strategy::Asmc => "ASMC",
            Strategy::Tarc => "TARC",
        }
    }
}

/// Threshold rule for the sliding-mode switching gain.
#[derive(Debug, Clone, Copy)]
pub enum RhoMode<T: Scalar> {
    /// Fixed threshold; picking it needs an uncertainty bound.
    Fixed(T),
    /// `rho(t) = 4 c_hat(t) t_s` with `t_s` the sampling interval.
    Scaled,
}

/// Sliding-mode baseline parameters.
#[derive(Debug, Clone)]
pub struct AsmcParams<T: Scalar> {
    /// Adaptive gain on the switching-gain rate.
    pub c_bar: T,
    pub rho_mode: RhoMode<T>,
    /// SPD surface slope: s_bar = e1_dot + lambda_s e1.
    pub lambda_s: DMatrix<T>,
}

/// Where TDC/ASMC get their velocity (and delayed acceleration) from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VelocitySource {
    /// True plant state, as in the full-state formulation.
    TrueState,
    /// One-step finite differences of the measured position.
    FiniteDifference,
}

/// Feedforward mode; `ExactModel` replaces the time-delayed estimate with
/// the plant's true lumped dynamics and exists for zero-uncertainty
/// diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedforwardMode {
    TimeDelayed,
    ExactModel,
}

/// Degree and window of the derivative estimator; the window length is
/// always `m * dt`.
#[derive(Debug, Clone, Copy)]
pub struct KernelParams {
    pub lambda: usize,
    pub m: usize,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { lambda: 2, m: 20 }
    }
}

#[derive(Debug, Clone)]
pub struct ControllerConfig<T: Scalar> {
    pub gains: GainSet<T>,
    /// Delay in sampling intervals; h = h_lag * dt.
    pub h_lag: usize,
    /// First-derivative kernel (j = 1).
    pub kernel_j1: KernelSpec<T>,
    /// Second-derivative kernel (j = 2); present when lambda >= 2.
    pub kernel_j2: Option<KernelSpec<T>>,
    /// Lyapunov solution used by the sliding variable s = B^T P [e1; e1_dot].
    pub p: Option<DMatrix<T>>,
    /// Switching-gain multiplier, > 1.
    pub alpha: T,
    /// Adaptive-law floor, > 0.
    pub gamma_floor: T,
    /// Boundary-layer radius, > 0.
    pub epsilon: T,
    pub asmc: Option<AsmcParams<T>>,
    pub strategy: Strategy,
    /// Initial switching gain; defaults to the floor.
    pub c_hat_init: T,
    pub velocity_source: VelocitySource,
    pub feedforward: FeedforwardMode,
}

impl<T: Scalar> ControllerConfig<T> {
    /// Builds a config with the kernels instantiated on the sampling grid.
    pub fn new(
        gains: GainSet<T>,
        strategy: Strategy,
        h_lag: usize,
        kernel: KernelParams,
        dt: T,
    ) -> Result<Self> {
        if h_lag == 0 {
            return Err(Error::Invalid("h_lag must be at least 1".into()));
        }
        let sigma = dt * fl::<T>(kernel.m as f64);
        let kernel_j1 = build_weights(kernel.lambda, 1, sigma, kernel.m)?;
        let kernel_j2 = if kernel.lambda >= 2 {
            Some(build_weights(kernel.lambda, 2, sigma, kernel.m)?)
        } else {
            None
        };
        let gamma = fl::<T>(0.01);
        Ok(ControllerConfig {
            gains,
            h_lag,
            kernel_j1,
            kernel_j2,
            p: None,
            alpha: fl(2.0),
            gamma_floor: gamma,
            epsilon: fl(0.01),
            asmc: None,
            strategy,
            c_hat_init: gamma,
            velocity_source: VelocitySource::TrueState,
            feedforward: FeedforwardMode::TimeDelayed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha <= T::one() {
            return Err(Error::Invalid("alpha must exceed 1".into()));
        }
        if self.gamma_floor <= T::zero() {
            return Err(Error::Invalid("gamma_floor must be positive".into()));
        }
        if self.epsilon <= T::zero() {
            return Err(Error::Invalid("epsilon must be positive".into()));
        }
        if self.h_lag == 0 {
            return Err(Error::Invalid("h_lag must be at least 1".into()));
        }
        if matches!(self.strategy, Strategy::Ftdc | Strategy::Tarc) && self.kernel_j2.is_none() {
            return Err(Error::Invalid(
                "position-only strategies need a kernel of degree >= 2".into(),
            ));
        }
        if matches!(self.strategy, Strategy::Asmc) && self.asmc.is_none() {
            return Err(Error::Invalid("ASMC parameters missing".into()));
        }
        if matches!(self.strategy, Strategy::Tarc) && self.p.is_none() {
            return Err(Error::Invalid(
                "TARC needs the Lyapunov solution P from a stability certificate".into(),
            ));
        }
        Ok(())
    }

    /// Steps of history the strategy needs before it can run.
    pub fn warmup_steps(&self) -> usize {
        self.h_lag + self.kernel_j1.m
    }
}

/// Mutable per-instance controller state.
#[derive(Debug, Clone)]
pub struct ControllerState<T: Scalar> {
    /// Switching gain, kept >= 0 by the update law.
    pub c_hat: T,
    pub buffer: HistoryBuffer<T>,
    pub last_s_norm: T,
    pub warm: bool,
}

impl<T: Scalar> ControllerState<T> {
    pub fn new(cfg: &ControllerConfig<T>, dt: T) -> Self {
        let capacity = cfg.h_lag + cfg.kernel_j1.m + 3;
        ControllerState {
            c_hat: cfg.c_hat_init,
            buffer: HistoryBuffer::new(capacity, dt),
            last_s_norm: T::zero(),
            warm: false,
        }
    }
}

/// Explicit-Euler update of the sliding-mode switching gain:
/// `c_bar ||s_bar|| sgn(||s_bar|| - rho)` above the floor, `+gamma` below,
/// with `sgn(0) = -1` and the result clamped at zero.
pub fn asmc_gain_step<T: Scalar>(c_hat: T, s_bar_norm: T, rho: T, c_bar: T, gamma: T, dt: T) -> T {
    let next = if c_hat > gamma {
        let sgn = if s_bar_norm - rho > T::zero() {
            T::one()
        } else {
            -T::one()
        };
        c_hat + dt * c_bar * s_bar_norm * sgn
    } else {
        c_hat + dt * gamma
    };
    next.max(T::zero())
}

/// Explicit-Euler update of the delay-comparing switching gain: rises by
/// `||s||` while the sliding norm grows relative to its delayed value,
/// falls by `||s||` otherwise, and climbs by `gamma` at the floor.
pub fn tarc_gain_step<T: Scalar>(c_hat: T, s_norm: T, s_norm_delayed: T, gamma: T, dt: T) -> T {
    let next = if c_hat > gamma {
        if s_norm - s_norm_delayed > T::zero() {
            c_hat + dt * s_norm
        } else {
            c_hat - dt * s_norm
        }
    } else {
        c_hat + dt * gamma
    };
    next.max(T::zero())
}

/// Boundary-layer switching term: `-alpha c_hat s / max(||s||, epsilon)`
/// written as the two-branch law, continuous across `||s|| = epsilon`.
pub fn switching_term<T: Scalar>(alpha: T, c_hat: T, s: &DVector<T>, epsilon: T) -> DVector<T> {
    let norm = s.norm();
    let denom = if norm >= epsilon { norm } else { epsilon };
    s * (-alpha * c_hat / denom)
}

fn spd_inertia_guard<T: Scalar>(m: &DMatrix<T>) -> Result<()> {
    if crate::linalg::lambda_min_sym(m) <= T::zero() {
        return Err(Error::IllConditionedMhat {
            cond: f64::INFINITY,
        });
    }
    Ok(())
}

/// Full-state time-delayed step. The delayed acceleration and torque are
/// supplied by the caller (true state or finite differences); the delayed
/// position comes from the history.
pub fn tdc_step<T: Scalar>(
    cfg: &ControllerConfig<T>,
    state: &mut ControllerState<T>,
    model: &NominalModel<T>,
    q: &DVector<T>,
    q_dot: &DVector<T>,
    q_ddot_h: &DVector<T>,
    tau_h: &DVector<T>,
    refp: &ReferencePoint<T>,
) -> Result<DVector<T>> {
    let e1 = q - &refp.q_d;
    let e1_dot = q_dot - &refp.q_dot_d;
    let u = &refp.q_ddot_d - &cfg.gains.k2 * &e1_dot - &cfg.gains.k1 * &e1;

    let q_h = state.buffer.lag(cfg.h_lag)?.q.clone();
    let m_hat = model.m_hat(q)?;
    spd_inertia_guard(&m_hat)?;
    let m_hat_h = model.m_hat(&q_h)?;
    let n_hat = tau_h - m_hat_h * q_ddot_h;

    let tau = &m_hat * &u + n_hat;
    state.buffer.complete_step(tau.clone(), u, T::zero());
    Ok(tau)
}

struct FilteredAux<T: Scalar> {
    u_hat: DVector<T>,
    e1: DVector<T>,
    e1_dot_hat: DVector<T>,
    n_hat: DVector<T>,
    m_hat: DMatrix<T>,
}

/// Shared position-only machinery: kernel velocity at the current sample,
/// kernel acceleration at the delayed sample, time-delayed `N_hat`.
///
/// The acceleration kernel is phase-centred: applied to a window ending at
/// lag `h_lag` its estimate refers to the window middle, lag
/// `h_lag + m/2`. The delayed torque and position are read at that same
/// effective lag so the input/output pair stays consistent; pairing them at
/// `h_lag` feeds the torque recursion a half-window phase error and blows
/// the loop up.
fn filtered_aux<T: Scalar>(
    cfg: &ControllerConfig<T>,
    state: &ControllerState<T>,
    model: &NominalModel<T>,
    q: &DVector<T>,
    refp: &ReferencePoint<T>,
) -> Result<FilteredAux<T>> {
    let kernel_j2 = cfg.kernel_j2.as_ref().ok_or_else(|| {
        Error::Invalid("position-only strategies need a kernel of degree >= 2".into())
    })?;

    let e1 = q - &refp.q_d;
    let q_dot_hat = estimate(&state.buffer, &cfg.kernel_j1, 0)?;
    let e1_dot_hat = q_dot_hat - &refp.q_dot_d;
    let u_hat = &refp.q_ddot_d - &cfg.gains.k1 * &e1 - &cfg.gains.k2 * &e1_dot_hat;

    let q_ddot_hat_h = estimate(&state.buffer, kernel_j2, cfg.h_lag)?;
    let ff_lag = cfg.h_lag + kernel_j2.m / 2;
    let delayed = state.buffer.lag(ff_lag)?;
    let tau_h = delayed.tau.clone();
    let q_h = delayed.q.clone();
    let m_hat = model.m_hat(q)?;
    spd_inertia_guard(&m_hat)?;
    let m_hat_h = model.m_hat(&q_h)?;
    let n_hat = tau_h - m_hat_h * q_ddot_hat_h;

    Ok(FilteredAux {
        u_hat,
        e1,
        e1_dot_hat,
        n_hat,
        m_hat,
    })
}

/// Position-only time-delayed step.
pub fn ftdc_step<T: Scalar>(
    cfg: &ControllerConfig<T>,
    state: &mut ControllerState<T>,
    model: &NominalModel<T>,
    q: &DVector<T>,
    refp: &ReferencePoint<T>,
) -> Result<DVector<T>> {
    let aux = filtered_aux(cfg, state, model, q, refp)?;
    let tau = &aux.m_hat * &aux.u_hat + aux.n_hat;
    state.buffer.complete_step(tau.clone(), aux.u_hat, T::zero());
    Ok(tau)
}

/// Sliding-mode baseline step with the threshold adaptation law. Needs the
/// nominal model N_hat and, in the full-state formulation, the velocity.
pub fn asmc_step<T: Scalar>(
    cfg: &ControllerConfig<T>,
    state: &mut ControllerState<T>,
    model: &NominalModel<T>,
    q: &DVector<T>,
    q_dot: &DVector<T>,
    refp: &ReferencePoint<T>,
    dt: T,
) -> Result<DVector<T>> {
    let asmc = cfg
        .asmc
        .as_ref()
        .ok_or_else(|| Error::Invalid("ASMC parameters missing".into()))?;
    let t = state.buffer.lag(0)?.t;

    let e1 = q - &refp.q_d;
    let e1_dot = q_dot - &refp.q_dot_d;
    let s_bar = &e1_dot + &asmc.lambda_s * &e1;
    let s_bar_norm = s_bar.norm();

    let n_model = model.n_hat(q, q_dot, t)?;
    let m_hat = model.m_hat(q)?;
    spd_inertia_guard(&m_hat)?;

    let delta_u_s = if s_bar_norm < fl::<T>(1e-12) {
        DVector::zeros(q.len())
    } else {
        &s_bar * (-state.c_hat / s_bar_norm)
    };

    let u_nominal = &refp.q_ddot_d - &asmc.lambda_s * &e1_dot;
    let tau = &m_hat * &u_nominal + n_model + delta_u_s;

    let rho = match asmc.rho_mode {
        RhoMode::Fixed(v) => v,
        RhoMode::Scaled => fl::<T>(4.0) * state.c_hat * dt,
    };
    state.c_hat = asmc_gain_step(state.c_hat, s_bar_norm, rho, asmc.c_bar, cfg.gamma_floor, dt);

    state.last_s_norm = s_bar_norm;
    state.buffer.complete_step(tau.clone(), u_nominal, s_bar_norm);
    Ok(tau)
}

/// Adaptive-robust step: position-only feedforward plus the boundary-layer
/// switching term with the delay-comparing gain law.
pub fn tarc_step<T: Scalar>(
    cfg: &ControllerConfig<T>,
    state: &mut ControllerState<T>,
    model: &NominalModel<T>,
    q: &DVector<T>,
    refp: &ReferencePoint<T>,
    dt: T,
) -> Result<DVector<T>> {
    let p = cfg.p.as_ref().ok_or(Error::InfeasibleCertificate {
        lambda_min: f64::NAN,
    })?;
    let aux = filtered_aux(cfg, state, model, q, refp)?;

    let n = q.len();
    let mut err = DVector::zeros(2 * n);
    err.rows_mut(0, n).copy_from(&aux.e1);
    err.rows_mut(n, n).copy_from(&aux.e1_dot_hat);
    let s = cfg.gains.b.transpose() * p * err;
    let s_norm = s.norm();
    let s_norm_h = state.buffer.lag(cfg.h_lag)?.s_norm;

    let delta_u = switching_term(cfg.alpha, state.c_hat, &s, cfg.epsilon);
    let u = &aux.u_hat + &delta_u;
    let tau = &aux.m_hat * &u + aux.n_hat;

    state.c_hat = tarc_gain_step(state.c_hat, s_norm, s_norm_h, cfg.gamma_floor, dt);
    state.last_s_norm = s_norm;
    state.buffer.complete_step(tau.clone(), u, s_norm);
    Ok(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn const_model(m_scale: f64) -> NominalModel<f64> {
        NominalModel::new(
            Box::new(move |q: &DVector<f64>| DMatrix::identity(q.len(), q.len()) * m_scale),
            Some(Box::new(|q: &DVector<f64>, _: &DVector<f64>, _| {
                DVector::zeros(q.len())
            })),
        )
    }

    fn scalar_cfg(strategy: Strategy, dt: f64) -> ControllerConfig<f64> {
        let k = DMatrix::from_row_slice(1, 1, &[4.0]);
        let gains = GainSet::new(&k, &k).unwrap();
        ControllerConfig::new(gains, strategy, 1, KernelParams::default(), dt).unwrap()
    }

    fn warmed_state(cfg: &ControllerConfig<f64>, dt: f64, q: f64, tau: f64) -> ControllerState<f64> {
        let mut state = ControllerState::new(cfg, dt);
        for k in 0..=cfg.warmup_steps() {
            state.buffer.begin_step(k as f64 * dt, DVector::from_vec(vec![q]));
            state
                .buffer
                .complete_step(DVector::from_vec(vec![tau]), DVector::zeros(1), 0.0);
        }
        state
    }

    fn refp(q: f64, qd: f64, qdd: f64) -> ReferencePoint<f64> {
        ReferencePoint {
            q_d: DVector::from_vec(vec![q]),
            q_dot_d: DVector::from_vec(vec![qd]),
            q_ddot_d: DVector::from_vec(vec![qdd]),
        }
    }

    #[test]
    fn tdc_delayed_estimate_arithmetic() {
        // M_hat = 2, tau_h = 1, qdd_h = 0.25: N_hat = 1 - 0.5 = 0.5
        let dt = 1e-3;
        let cfg = scalar_cfg(Strategy::Tdc, dt);
        let model = const_model(2.0);
        let mut state = warmed_state(&cfg, dt, 0.0, 1.0);
        let t = (cfg.warmup_steps() + 1) as f64 * dt;
        state.buffer.begin_step(t, DVector::zeros(1));
        // zero error, zero reference acceleration: tau = N_hat
        let tau = tdc_step(
            &cfg,
            &mut state,
            &model,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::from_vec(vec![0.25]),
            &DVector::from_vec(vec![1.0]),
            &refp(0.0, 0.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(tau[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn tdc_zero_error_zero_feedforward_gives_zero_torque() {
        let dt = 1e-3;
        let cfg = scalar_cfg(Strategy::Tdc, dt);
        let model = const_model(2.0);
        let mut state = warmed_state(&cfg, dt, 0.0, 0.0);
        let t = (cfg.warmup_steps() + 1) as f64 * dt;
        state.buffer.begin_step(t, DVector::zeros(1));
        let tau = tdc_step(
            &cfg,
            &mut state,
            &model,
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::zeros(1),
            &refp(0.0, 0.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(tau[0], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn tdc_pd_substitution() {
        // e1 = 0.1, e1_dot = 0, K1 = K2 = 4, M_hat = I, qdd_d = 0, N_hat = 0
        let dt = 1e-3;
        let cfg = scalar_cfg(Strategy::Tdc, dt);
        let model = const_model(1.0);
        let mut state = warmed_state(&cfg, dt, 0.1, 0.0);
        let t = (cfg.warmup_steps() + 1) as f64 * dt;
        state.buffer.begin_step(t, DVector::from_vec(vec![0.1]));
        let tau = tdc_step(
            &cfg,
            &mut state,
            &model,
            &DVector::from_vec(vec![0.1]),
            &DVector::zeros(1),
            &DVector::zeros(1),
            &DVector::zeros(1),
            &refp(0.0, 0.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(tau[0], -0.4, epsilon = 1e-14);
    }

    #[test]
    fn ftdc_constant_history_returns_delayed_torque() {
        let dt = 1e-3;
        let cfg = scalar_cfg(Strategy::Ftdc, dt);
        let model = const_model(1.5);
        let mut state = warmed_state(&cfg, dt, 0.7, 0.3);
        let t = (cfg.warmup_steps() + 1) as f64 * dt;
        state.buffer.begin_step(t, DVector::from_vec(vec![0.7]));
        let tau = ftdc_step(
            &cfg,
            &mut state,
            &model,
            &DVector::from_vec(vec![0.7]),
            &refp(0.7, 0.0, 0.0),
        )
        .unwrap();
        assert_relative_eq!(tau[0], 0.3, epsilon = 1e-10);
    }

    #[test]
    fn ftdc_cold_buffer_rejected() {
        let dt = 1e-3;
        let cfg = scalar_cfg(Strategy::Ftdc, dt);
        let model = const_model(1.0);
        let mut state = ControllerState::new(&cfg, dt);
        state.buffer.begin_step(0.0, DVector::zeros(1));
        let res = ftdc_step(&cfg, &mut state, &model, &DVector::zeros(1), &refp(0.0, 0.0, 0.0));
        assert!(matches!(res, Err(Error::BufferCold { .. })));
    }

    #[test]
    fn asmc_gain_branches() {
        let (c_bar, gamma, dt) = (2.0, 0.01, 1e-3);
        // rising: ||s_bar|| = 0.5 above rho = 0.2
        let up = asmc_gain_step(1.0, 0.5, 0.2, c_bar, gamma, dt);
        assert_relative_eq!(up, 1.0 + dt * c_bar * 0.5, epsilon = 1e-15);
        // falling: ||s_bar|| = 0.1 below rho
        let down = asmc_gain_step(1.0, 0.1, 0.2, c_bar, gamma, dt);
        assert_relative_eq!(down, 1.0 - dt * c_bar * 0.1, epsilon = 1e-15);
        // floor branch
        let floor = asmc_gain_step(gamma / 2.0, 0.5, 0.2, c_bar, gamma, dt);
        assert_relative_eq!(floor, gamma / 2.0 + dt * gamma, epsilon = 1e-15);
        // sgn(0) = -1: exactly at threshold the gain falls
        let at = asmc_gain_step(1.0, 0.2, 0.2, c_bar, gamma, dt);
        assert!(at < 1.0);
    }

    #[test]
    fn tarc_gain_branches() {
        let (gamma, dt) = (0.01, 1e-3);
        let up = tarc_gain_step(1.0, 0.5, 0.3, gamma, dt);
        assert_relative_eq!(up, 1.0 + 0.5 * dt, epsilon = 1e-15);
        let down = tarc_gain_step(1.0, 0.2, 0.3, gamma, dt);
        assert_relative_eq!(down, 1.0 - 0.2 * dt, epsilon = 1e-15);
        let floor = tarc_gain_step(0.005, 0.5, 0.3, gamma, dt);
        assert_relative_eq!(floor, 0.005 + gamma * dt, epsilon = 1e-15);
        // equal norms sit in the non-increasing branch
        let eq = tarc_gain_step(1.0, 0.3, 0.3, gamma, dt);
        assert!(eq < 1.0);
    }

    #[test]
    fn switching_term_continuous_at_the_layer() {
        let eps = 0.05;
        let s = DVector::from_vec(vec![0.6, -0.8]) * eps; // ||s|| = eps exactly
        let outside = switching_term(2.0, 1.3, &s, eps); // ||s|| >= eps branch
        let inside = &s * (-2.0 * 1.3 / eps); // ||s|| < eps branch formula
        assert!((outside - inside).norm() < 1e-14);
    }

    #[test]
    fn switching_term_opposes_s() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let s = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let du = switching_term(1.7, 0.9, &s, 0.05);
            assert!(du.dot(&s) <= 1e-15);
        }
    }

    #[test]
    fn tarc_requires_p() {
        let dt = 1e-3;
        let cfg = scalar_cfg(Strategy::Tarc, dt);
        let model = const_model(1.0);
        let mut state = warmed_state(&cfg, dt, 0.0, 0.0);
        let t = (cfg.warmup_steps() + 1) as f64 * dt;
        state.buffer.begin_step(t, DVector::zeros(1));
        let res = tarc_step(&cfg, &mut state, &model, &DVector::zeros(1), &refp(0.0, 0.0, 0.0), dt);
        assert!(matches!(res, Err(Error::InfeasibleCertificate { .. })));
    }

    #[test]
    fn scripted_overestimation_vs_delay_comparison() {
        // decreasing ||s_bar|| held above rho: the threshold law keeps
        // climbing while the delay-comparing law backs off
        let dt = 1e-3;
        let gamma = 0.01;
        let norms: Vec<f64> = (0..100).map(|k| 0.5 - 0.003 * k as f64).collect();
        let rho = 0.05; // below every scripted norm

        let mut c_asmc = 0.2;
        let mut asmc_track = vec![c_asmc];
        for &s in &norms {
            c_asmc = asmc_gain_step(c_asmc, s, rho, 1.0, gamma, dt);
            asmc_track.push(c_asmc);
        }
        assert!(asmc_track.windows(2).all(|w| w[1] >= w[0]));

        let mut c_tarc = 0.2;
        let mut tarc_track = vec![c_tarc];
        for w in norms.windows(2) {
            c_tarc = tarc_gain_step(c_tarc, w[1], w[0], gamma, dt);
            tarc_track.push(c_tarc);
        }
        assert!(tarc_track.windows(2).all(|w| w[1] <= w[0]));
    }
}
