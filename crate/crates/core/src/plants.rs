//! Simulated uncertain Euler-Lagrange plants: M(q) qdd + N(q, qd, t) = tau.
//!
//! Each plant carries a true model (used by the integrator only), a nominal
//! model handed to the controllers, seeded parameter uncertainty, an external
//! disturbance folded into N, and Gaussian position-measurement noise.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::cond_sym;
use crate::scalar::{fl, Scalar};

/// Condition-number guard for inertia inversions.
const COND_LIMIT: f64 = 1e8;

type MatFn<T> = Box<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;
type ForceFn<T> = Box<dyn Fn(&DVector<T>, &DVector<T>, T) -> DVector<T> + Send + Sync>;

/// Nominal model available to the controllers: the inertia map M_hat and,
/// for the sliding-mode baseline only, a nominal lumped-dynamics map N_hat.
pub struct NominalModel<T: Scalar> {
    m_hat: MatFn<T>,
    n_hat: Option<ForceFn<T>>,
}

impl<T: Scalar> NominalModel<T> {
    pub fn new(m_hat: MatFn<T>, n_hat: Option<ForceFn<T>>) -> Self {
        NominalModel { m_hat, n_hat }
    }

    /// Nominal inertia at `q`, guarded against ill-conditioning.
    pub fn m_hat(&self, q: &DVector<T>) -> Result<DMatrix<T>> {
        let m = (self.m_hat)(q);
        let cond = cond_sym(&m);
        if !cond.is_finite() || cond >= COND_LIMIT {
            return Err(Error::IllConditionedMhat { cond });
        }
        Ok(m)
    }

    /// Nominal lumped dynamics, if modelled.
    pub fn n_hat(&self, q: &DVector<T>, q_dot: &DVector<T>, t: T) -> Result<DVector<T>> {
        match &self.n_hat {
            Some(f) => Ok(f(q, q_dot, t)),
            None => Err(Error::NominalModelRequired),
        }
    }

    pub fn has_n_hat(&self) -> bool {
        self.n_hat.is_some()
    }
}

/// External disturbance folded into the true lumped dynamics N.
#[derive(Debug, Clone)]
pub enum Disturbance<T: Scalar> {
    None,
    /// Constant offset switched on at `t_on`.
    Step { amplitude: Vec<T>, t_on: T },
    /// Per-axis sinusoid with a common angular frequency.
    Sinusoid {
        amplitude: Vec<T>,
        omega: T,
        phase: Vec<T>,
    },
    /// Seeded sum of `components` sinusoids with frequencies below
    /// `omega_max`, applied to every axis with independent phases.
    BandLimited {
        amplitude: T,
        omega_max: T,
        components: usize,
        seed: u64,
    },
}

impl<T: Scalar> Disturbance<T> {
    fn compile(&self, n: usize) -> Result<ForceFn<T>> {
        match self {
            Disturbance::None => Ok(Box::new(move |_, _, _| DVector::zeros(n))),
            Disturbance::Step { amplitude, t_on } => {
                if amplitude.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: format!("step amplitude has {} axes, plant has {}", amplitude.len(), n),
                    });
                }
                let amp = DVector::from_vec(amplitude.clone());
                let t_on = *t_on;
                Ok(Box::new(move |_, _, t| {
                    if t >= t_on {
                        amp.clone()
                    } else {
                        DVector::zeros(n)
                    }
                }))
            }
            Disturbance::Sinusoid {
                amplitude,
                omega,
                phase,
            } => {
                if amplitude.len() != n || phase.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "sinusoid amplitude/phase axis count".into(),
                    });
                }
                let amp = amplitude.clone();
                let ph = phase.clone();
                let omega = *omega;
                Ok(Box::new(move |_, _, t| {
                    DVector::from_fn(n, |i, _| amp[i] * (omega * t + ph[i]).sin())
                }))
            }
            Disturbance::BandLimited {
                amplitude,
                omega_max,
                components,
                seed,
            } => {
                let k = (*components).max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut omegas = Vec::with_capacity(n * k);
                let mut phases = Vec::with_capacity(n * k);
                for _ in 0..n * k {
                    omegas.push(fl::<T>(rng.random_range(0.05..1.0)) * *omega_max);
                    phases.push(fl::<T>(rng.random_range(0.0..std::f64::consts::TAU)));
                }
                let scale = *amplitude * fl::<T>((2.0 / k as f64).sqrt());
                Ok(Box::new(move |_, _, t| {
                    DVector::from_fn(n, |i, _| {
                        let mut acc = T::zero();
                        for c in 0..k {
                            let idx = i * k + c;
                            acc += (omegas[idx] * t + phases[idx]).sin();
                        }
                        acc * scale
                    })
                }))
            }
        }
    }
}

/// A simulated Euler-Lagrange plant with separable true/nominal models.
pub struct PlantModel<T: Scalar> {
    /// Degree-of-freedom count.
    pub n: usize,
    m_true: MatFn<T>,
    n_true: ForceFn<T>,
    /// What the controllers are allowed to know.
    pub nominal: NominalModel<T>,
    /// Position measurement noise standard deviation.
    pub noise_std: T,
}

impl<T: Scalar> PlantModel<T> {
    pub fn m_true(&self, q: &DVector<T>) -> DMatrix<T> {
        (self.m_true)(q)
    }

    pub fn n_true(&self, q: &DVector<T>, q_dot: &DVector<T>, t: T) -> DVector<T> {
        (self.n_true)(q, q_dot, t)
    }
}

/// Forward dynamics `qdd = M(q)^-1 (tau - N(q, qd, t))` used by the integrator.
pub fn accelerate<T: Scalar>(
    plant: &PlantModel<T>,
    q: &DVector<T>,
    q_dot: &DVector<T>,
    tau: &DVector<T>,
    t: T,
) -> Result<DVector<T>> {
    let m = plant.m_true(q);
    let cond = cond_sym(&m);
    if !cond.is_finite() || cond >= COND_LIMIT {
        return Err(Error::IllConditionedInertia { cond });
    }
    let rhs = tau - plant.n_true(q, q_dot, t);
    m.lu()
        .solve(&rhs)
        .ok_or(Error::IllConditionedInertia { cond })
}

/// Position measurement: q plus seeded Gaussian noise.
pub fn measure<T: Scalar, R: Rng>(plant: &PlantModel<T>, q: &DVector<T>, rng: &mut R) -> DVector<T> {
    if plant.noise_std == T::zero() {
        return q.clone();
    }
    DVector::from_fn(q.len(), |i, _| {
        let z: f64 = StandardNormal.sample(rng);
        q[i] + plant.noise_std * fl::<T>(z)
    })
}

fn require_positive<T: Scalar>(value: T, what: &str) -> Result<()> {
    if value <= T::zero() {
        return Err(Error::NonPhysicalParams { what: what.into() });
    }
    Ok(())
}

/// Multiplies each physical parameter by (1 + u), u ~ U(-scale, scale).
fn perturb<T: Scalar>(value: T, scale: T, rng: &mut ChaCha8Rng) -> T {
    if scale == T::zero() {
        return value;
    }
    let u = fl::<T>(rng.random_range(-1.0..1.0)) * scale;
    value * (T::one() + u)
}

/// Planar two-link arm parameters. Centres of mass sit at mid-link and the
/// link inertias are thin-rod values m l^2 / 12.
#[derive(Debug, Clone, Copy)]
pub struct TwoLinkParams<T: Scalar> {
    pub m1: T,
    pub m2: T,
    pub l1: T,
    pub l2: T,
    /// Gravitational acceleration (m/s^2); zero gives a horizontal-plane arm.
    pub gravity: T,
    /// Viscous joint friction coefficients.
    pub viscous: [T; 2],
}

impl<T: Scalar> Default for TwoLinkParams<T> {
    fn default() -> Self {
        TwoLinkParams {
            m1: fl(1.0),
            m2: fl(0.8),
            l1: fl(0.8),
            l2: fl(0.6),
            gravity: fl(9.81),
            viscous: [fl(0.1), fl(0.1)],
        }
    }
}

impl<T: Scalar> TwoLinkParams<T> {
    fn inertia(&self, q: &DVector<T>) -> DMatrix<T> {
        let (lc1, lc2) = (self.l1 * fl(0.5), self.l2 * fl(0.5));
        let i1 = self.m1 * self.l1 * self.l1 / fl(12.0);
        let i2 = self.m2 * self.l2 * self.l2 / fl(12.0);
        let c2 = q[1].cos();
        let m11 = self.m1 * lc1 * lc1
            + i1
            + i2
            + self.m2 * (self.l1 * self.l1 + lc2 * lc2 + fl::<T>(2.0) * self.l1 * lc2 * c2);
        let m12 = self.m2 * (lc2 * lc2 + self.l1 * lc2 * c2) + i2;
        let m22 = self.m2 * lc2 * lc2 + i2;
        DMatrix::from_row_slice(2, 2, &[m11, m12, m12, m22])
    }

    /// Coriolis/centrifugal + gravity + viscous friction (no disturbance).
    fn bias(&self, q: &DVector<T>, q_dot: &DVector<T>) -> DVector<T> {
        let lc2 = self.l2 * fl::<T>(0.5);
        let lc1 = self.l1 * fl::<T>(0.5);
        let k = self.m2 * self.l1 * lc2 * q[1].sin();
        let c1 = -k * (fl::<T>(2.0) * q_dot[0] * q_dot[1] + q_dot[1] * q_dot[1]);
        let c2 = k * q_dot[0] * q_dot[0];
        let g = self.gravity;
        let g1 = (self.m1 * lc1 + self.m2 * self.l1) * g * q[0].cos()
            + self.m2 * lc2 * g * (q[0] + q[1]).cos();
        let g2 = self.m2 * lc2 * g * (q[0] + q[1]).cos();
        DVector::from_vec(vec![
            c1 + g1 + self.viscous[0] * q_dot[0],
            c2 + g2 + self.viscous[1] * q_dot[1],
        ])
    }

    /// Total mechanical energy; used by the conservation tests.
    pub fn energy(&self, q: &DVector<T>, q_dot: &DVector<T>) -> T {
        let m = self.inertia(q);
        let kinetic = (q_dot.transpose() * m * q_dot)[(0, 0)] * fl::<T>(0.5);
        let (lc1, lc2) = (self.l1 * fl::<T>(0.5), self.l2 * fl::<T>(0.5));
        let potential = self.gravity
            * ((self.m1 * lc1 + self.m2 * self.l1) * q[0].sin() + self.m2 * lc2 * (q[0] + q[1]).sin());
        kinetic + potential
    }

    fn validate(&self) -> Result<()> {
        require_positive(self.m1, "m1")?;
        require_positive(self.m2, "m2")?;
        require_positive(self.l1, "l1")?;
        require_positive(self.l2, "l2")?;
        if self.gravity < T::zero() {
            return Err(Error::NonPhysicalParams { what: "gravity".into() });
        }
        if self.viscous[0] < T::zero() || self.viscous[1] < T::zero() {
            return Err(Error::NonPhysicalParams { what: "viscous".into() });
        }
        Ok(())
    }
}

/// Builds the planar two-link plant. The nominal model uses link parameters
/// independently perturbed by up to `uncertainty_scale` (seeded), and its
/// N_hat omits the disturbance.
pub fn two_link_manipulator<T: Scalar>(
    params: TwoLinkParams<T>,
    uncertainty_scale: T,
    disturbance: Disturbance<T>,
    noise_std: T,
    seed: u64,
) -> Result<PlantModel<T>> {
    params.validate()?;
    if uncertainty_scale < T::zero() || uncertainty_scale >= T::one() {
        return Err(Error::NonPhysicalParams {
            what: "uncertainty_scale must lie in [0, 1)".into(),
        });
    }
    if noise_std < T::zero() {
        return Err(Error::NonPhysicalParams { what: "noise_std".into() });
    }

    // stream 0 of the master seed drives parameter perturbation
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let nominal_params = TwoLinkParams {
        m1: perturb(params.m1, uncertainty_scale, &mut rng),
        m2: perturb(params.m2, uncertainty_scale, &mut rng),
        l1: perturb(params.l1, uncertainty_scale, &mut rng),
        l2: perturb(params.l2, uncertainty_scale, &mut rng),
        gravity: params.gravity,
        viscous: [
            perturb(params.viscous[0], uncertainty_scale, &mut rng),
            perturb(params.viscous[1], uncertainty_scale, &mut rng),
        ],
    };

    let disturb = disturbance.compile(2)?;
    let true_params = params;
    let m_true: MatFn<T> = Box::new(move |q| true_params.inertia(q));
    let n_true: ForceFn<T> =
        Box::new(move |q, qd, t| true_params.bias(q, qd) + disturb(q, qd, t));
    let m_hat: MatFn<T> = Box::new(move |q| nominal_params.inertia(q));
    let n_hat: ForceFn<T> = Box::new(move |q, qd, _t| nominal_params.bias(q, qd));

    Ok(PlantModel {
        n: 2,
        m_true,
        n_true,
        nominal: NominalModel::new(m_hat, Some(n_hat)),
        noise_std,
    })
}

/// Wheeled-mobile-robot dynamic model in body velocities. The generalized
/// coordinates are (s, heading): arc length and yaw, so q_dot = (v, omega)
/// and the inertia is the constant diag(mass, inertia).
#[derive(Debug, Clone, Copy)]
pub struct WmrParams<T: Scalar> {
    pub mass: T,
    pub inertia: T,
    /// Viscous resistance on (v, omega).
    pub viscous: [T; 2],
}

impl<T: Scalar> Default for WmrParams<T> {
    fn default() -> Self {
        WmrParams {
            mass: fl(9.0),
            inertia: fl(0.8),
            viscous: [fl(1.0), fl(0.5)],
        }
    }
}

/// Builds the WMR dynamic plant; uncertainty and disturbance handling mirror
/// the two-link constructor.
pub fn wmr_dynamic<T: Scalar>(
    params: WmrParams<T>,
    uncertainty_scale: T,
    disturbance: Disturbance<T>,
    noise_std: T,
    seed: u64,
) -> Result<PlantModel<T>> {
    require_positive(params.mass, "mass")?;
    require_positive(params.inertia, "inertia")?;
    if params.viscous[0] < T::zero() || params.viscous[1] < T::zero() {
        return Err(Error::NonPhysicalParams { what: "viscous".into() });
    }
    if uncertainty_scale < T::zero() || uncertainty_scale >= T::one() {
        return Err(Error::NonPhysicalParams {
            what: "uncertainty_scale must lie in [0, 1)".into(),
        });
    }
    if noise_std < T::zero() {
        return Err(Error::NonPhysicalParams { what: "noise_std".into() });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let nominal = WmrParams {
        mass: perturb(params.mass, uncertainty_scale, &mut rng),
        inertia: perturb(params.inertia, uncertainty_scale, &mut rng),
        viscous: [
            perturb(params.viscous[0], uncertainty_scale, &mut rng),
            perturb(params.viscous[1], uncertainty_scale, &mut rng),
        ],
    };

    let disturb = disturbance.compile(2)?;
    let m_true: MatFn<T> = Box::new(move |_q| {
        DMatrix::from_row_slice(2, 2, &[params.mass, T::zero(), T::zero(), params.inertia])
    });
    let n_true: ForceFn<T> = Box::new(move |q, qd, t| {
        DVector::from_vec(vec![params.viscous[0] * qd[0], params.viscous[1] * qd[1]])
            + disturb(q, qd, t)
    });
    let m_hat: MatFn<T> = Box::new(move |_q| {
        DMatrix::from_row_slice(2, 2, &[nominal.mass, T::zero(), T::zero(), nominal.inertia])
    });
    let n_hat: ForceFn<T> = Box::new(move |_q, qd, _t| {
        DVector::from_vec(vec![nominal.viscous[0] * qd[0], nominal.viscous[1] * qd[1]])
    });

    Ok(PlantModel {
        n: 2,
        m_true,
        n_true,
        nominal: NominalModel::new(m_hat, Some(n_hat)),
        noise_std,
    })
}

/// Integrates the unicycle pose (x, y, heading) from a (v, omega) velocity
/// sequence sampled every `dt`. Reporting only; the controller never sees it.
pub fn integrate_unicycle_pose<T: Scalar>(
    velocities: &[(T, T)],
    dt: T,
    initial: [T; 3],
) -> Vec<[T; 3]> {
    let mut pose = initial;
    let mut out = Vec::with_capacity(velocities.len() + 1);
    out.push(pose);
    for &(v, omega) in velocities {
        // midpoint heading keeps the arc integration second order
        let half = fl::<T>(0.5);
        let theta_mid = pose[2] + omega * dt * half;
        pose = [
            pose[0] + v * theta_mid.cos() * dt,
            pose[1] + v * theta_mid.sin() * dt,
            pose[2] + omega * dt,
        ];
        out.push(pose);
    }
    out
}

/// Reference trajectory with analytic first and second derivatives.
pub struct ReferenceTrajectory<T: Scalar> {
    pub n: usize,
    q_d: Box<dyn Fn(T) -> DVector<T> + Send + Sync>,
    q_dot_d: Box<dyn Fn(T) -> DVector<T> + Send + Sync>,
    q_ddot_d: Box<dyn Fn(T) -> DVector<T> + Send + Sync>,
}

/// One evaluation of the reference at a fixed time.
#[derive(Debug, Clone)]
pub struct ReferencePoint<T: Scalar> {
    pub q_d: DVector<T>,
    pub q_dot_d: DVector<T>,
    pub q_ddot_d: DVector<T>,
}

impl<T: Scalar> ReferenceTrajectory<T> {
    pub fn constant(q0: DVector<T>) -> Self {
        let n = q0.len();
        let q1 = q0.clone();
        ReferenceTrajectory {
            n,
            q_d: Box::new(move |_| q0.clone()),
            q_dot_d: Box::new(move |_| DVector::zeros(q1.len())),
            q_ddot_d: Box::new(move |_| DVector::zeros(n)),
        }
    }

    /// Per-axis `offset_i + amp_i sin(omega_i t + phase_i)`.
    pub fn sinusoid(amplitude: Vec<T>, omega: Vec<T>, phase: Vec<T>, offset: Vec<T>) -> Result<Self> {
        let n = amplitude.len();
        if omega.len() != n || phase.len() != n || offset.len() != n {
            return Err(Error::DimensionMismatch {
                what: "sinusoid reference parameter lengths".into(),
            });
        }
        let (a0, w0, p0, o0) = (amplitude.clone(), omega.clone(), phase.clone(), offset);
        let (a1, w1, p1) = (amplitude.clone(), omega.clone(), phase.clone());
        let (a2, w2, p2) = (amplitude, omega, phase);
        Ok(ReferenceTrajectory {
            n,
            q_d: Box::new(move |t| {
                DVector::from_fn(n, |i, _| o0[i] + a0[i] * (w0[i] * t + p0[i]).sin())
            }),
            q_dot_d: Box::new(move |t| {
                DVector::from_fn(n, |i, _| a1[i] * w1[i] * (w1[i] * t + p1[i]).cos())
            }),
            q_ddot_d: Box::new(move |t| {
                DVector::from_fn(n, |i, _| -a2[i] * w2[i] * w2[i] * (w2[i] * t + p2[i]).sin())
            }),
        })
    }

    /// Per-axis polynomial in t with the given coefficient rows
    /// (constant term first); derivatives are exact.
    pub fn polynomial(coeffs: Vec<Vec<T>>) -> Self {
        let n = coeffs.len();
        let eval = |c: &[T], t: T| -> T {
            c.iter().rev().fold(T::zero(), |acc, &ck| acc * t + ck)
        };
        let d1: Vec<Vec<T>> = coeffs
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, &ck)| ck * fl::<T>(k as f64))
                    .collect()
            })
            .collect();
        let d2: Vec<Vec<T>> = d1
            .iter()
            .map(|c| {
                c.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, &ck)| ck * fl::<T>(k as f64))
                    .collect()
            })
            .collect();
        let c0 = coeffs;
        let c1 = d1;
        let c2 = d2;
        ReferenceTrajectory {
            n,
            q_d: Box::new(move |t| DVector::from_fn(n, |i, _| eval(&c0[i], t))),
            q_dot_d: Box::new(move |t| DVector::from_fn(n, |i, _| eval(&c1[i], t))),
            q_ddot_d: Box::new(move |t| DVector::from_fn(n, |i, _| eval(&c2[i], t))),
        }
    }

    pub fn at(&self, t: T) -> ReferencePoint<T> {
        ReferencePoint {
            q_d: (self.q_d)(t),
            q_dot_d: (self.q_dot_d)(t),
            q_ddot_d: (self.q_ddot_d)(t),
        }
    }

    /// Verifies that the stated derivatives match central finite differences
    /// of q_d on a sampled grid, within `tol` (absolute, per axis).
    pub fn check_derivatives(&self, t0: T, t1: T, samples: usize, tol: T) -> Result<()> {
        let step = fl::<T>(1e-5);
        let span = t1 - t0;
        for k in 0..samples {
            let t = t0 + span * fl::<T>((k as f64 + 0.5) / samples as f64);
            let two_step = fl::<T>(2.0) * step;
            let fd_vel = ((self.q_d)(t + step) - (self.q_d)(t - step)) / two_step;
            let fd_acc = ((self.q_dot_d)(t + step) - (self.q_dot_d)(t - step)) / two_step;
            let vel_err = (fd_vel - (self.q_dot_d)(t)).amax();
            let acc_err = (fd_acc - (self.q_ddot_d)(t)).amax();
            if vel_err > tol || acc_err > tol {
                return Err(Error::Invalid(format!(
                    "reference derivatives inconsistent at t = {:?} (vel err {:?}, acc err {:?})",
                    t.to_f64(),
                    vel_err.to_f64(),
                    acc_err.to_f64()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_two_link() -> PlantModel<f64> {
        two_link_manipulator(
            TwoLinkParams::default(),
            0.0,
            Disturbance::None,
            0.0,
            7,
        )
        .unwrap()
    }

    #[test]
    fn inertia_symmetric_spd_on_random_workspace() {
        let plant = default_two_link();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let q = DVector::from_fn(2, |_, _| rng.random_range(-3.2..3.2));
            let m = plant.m_true(&q);
            assert!((m[(0, 1)] - m[(1, 0)]).abs() < 1e-14);
            assert!(crate::linalg::lambda_min_sym(&m) > 0.0);
        }
    }

    #[test]
    fn proximal_link_dominates_inertia_at_home() {
        let plant = default_two_link();
        let m = plant.m_true(&DVector::zeros(2));
        assert!(m[(0, 0)] >= m[(1, 1)]);
        assert!(m[(1, 1)] > 0.0);
    }

    #[test]
    fn force_balance_gives_zero_acceleration() {
        let plant = default_two_link();
        let q = DVector::from_vec(vec![0.3, -0.7]);
        let qd = DVector::from_vec(vec![0.2, 0.1]);
        let tau = plant.n_true(&q, &qd, 0.0);
        let qdd = accelerate(&plant, &q, &qd, &tau, 0.0).unwrap();
        assert!(qdd.norm() < 1e-12);
    }

    #[test]
    fn forward_dynamics_residual_vanishes() {
        let plant = default_two_link();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let q = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let qd = DVector::from_fn(2, |_, _| rng.random_range(-2.0..2.0));
            let tau = DVector::from_fn(2, |_, _| rng.random_range(-5.0..5.0));
            let qdd = accelerate(&plant, &q, &qd, &tau, 0.5).unwrap();
            let residual = plant.m_true(&q) * qdd + plant.n_true(&q, &qd, 0.5) - tau;
            assert!(residual.norm() < 1e-10);
        }
    }

    #[test]
    fn zero_uncertainty_nominal_matches_true() {
        let plant = default_two_link();
        let q = DVector::from_vec(vec![0.4, 0.9]);
        let m_hat = plant.nominal.m_hat(&q).unwrap();
        assert!((m_hat - plant.m_true(&q)).norm() < 1e-14);
    }

    #[test]
    fn perturbation_stays_within_scale() {
        let base = TwoLinkParams::<f64>::default();
        let plant = two_link_manipulator(base, 0.2, Disturbance::None, 0.0, 42).unwrap();
        let q = DVector::from_vec(vec![0.0, 0.0]);
        let ratio = plant.nominal.m_hat(&q).unwrap()[(0, 0)] / plant.m_true(&q)[(0, 0)];
        assert!(ratio > 0.4 && ratio < 1.9, "ratio {}", ratio);
    }

    #[test]
    fn nonphysical_params_rejected() {
        let mut params = TwoLinkParams::<f64>::default();
        params.m1 = -1.0;
        assert!(matches!(
            two_link_manipulator(params, 0.0, Disturbance::None, 0.0, 0),
            Err(Error::NonPhysicalParams { .. })
        ));
    }

    #[test]
    fn measurement_identity_without_noise_and_deterministic_with() {
        let plant = default_two_link();
        let q = DVector::from_vec(vec![1.0, -1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(measure(&plant, &q, &mut rng), q);

        let noisy = two_link_manipulator(
            TwoLinkParams::default(),
            0.0,
            Disturbance::None,
            1e-3,
            7,
        )
        .unwrap();
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            assert_eq!(measure(&noisy, &q, &mut r1), measure(&noisy, &q, &mut r2));
        }
    }

    #[test]
    fn measurement_noise_std_matches_request() {
        let noisy = two_link_manipulator(
            TwoLinkParams::default(),
            0.0,
            Disturbance::None,
            1e-3,
            7,
        )
        .unwrap();
        let q = DVector::zeros(2);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let n_draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..n_draws {
            let m = measure(&noisy, &q, &mut rng);
            acc += m[0] * m[0];
        }
        let std = (acc / n_draws as f64).sqrt();
        assert_relative_eq!(std, 1e-3, max_relative = 0.02);
    }

    #[test]
    fn wmr_constant_velocity_without_input() {
        let plant = wmr_dynamic(
            WmrParams {
                viscous: [0.0, 0.0],
                ..WmrParams::default()
            },
            0.0,
            Disturbance::None,
            0.0,
            0,
        )
        .unwrap();
        let q = DVector::zeros(2);
        let qd = DVector::from_vec(vec![0.7, -0.2]);
        let qdd = accelerate(&plant, &q, &qd, &DVector::zeros(2), 1.0).unwrap();
        assert!(qdd.norm() < 1e-14);
    }

    #[test]
    fn wmr_constant_torque_ramp_slope() {
        let params = WmrParams::<f64> {
            mass: 9.0,
            inertia: 0.8,
            viscous: [0.0, 0.0],
        };
        let plant = wmr_dynamic(params, 0.0, Disturbance::None, 0.0, 0).unwrap();
        let tau = DVector::from_vec(vec![1.8, 0.0]);
        let qdd = accelerate(&plant, &DVector::zeros(2), &DVector::zeros(2), &tau, 0.0).unwrap();
        assert_relative_eq!(qdd[0], 1.8 / 9.0, epsilon = 1e-14);
        assert_relative_eq!(qdd[1], 0.0, epsilon = 1e-14);
    }

    #[test]
    fn wmr_sinusoidal_disturbance_ripple_matches_first_order_response() {
        // m vdot + c v = A sin(w t): steady-state amplitude A / sqrt(c^2 + m^2 w^2)
        let (m, c, a, w) = (9.0, 3.0, 2.0, 5.0);
        let plant = wmr_dynamic(
            WmrParams {
                mass: m,
                inertia: 0.8,
                viscous: [c, 0.0],
            },
            0.0,
            Disturbance::Sinusoid {
                amplitude: vec![-a, 0.0], // disturbance enters N, so -a drives +
                omega: w,
                phase: vec![0.0, 0.0],
            },
            0.0,
            0,
        )
        .unwrap();
        // integrate v with RK4 for a few periods
        let dt = 1e-4;
        let mut v = 0.0f64;
        let mut t = 0.0;
        let f = |t: f64, v: f64| {
            let qd = DVector::from_vec(vec![v, 0.0]);
            accelerate(&plant, &DVector::zeros(2), &qd, &DVector::zeros(2), t).unwrap()[0]
        };
        let mut peak: f64 = 0.0;
        while t < 20.0 {
            let k1 = f(t, v);
            let k2 = f(t + dt / 2.0, v + dt / 2.0 * k1);
            let k3 = f(t + dt / 2.0, v + dt / 2.0 * k2);
            let k4 = f(t + dt, v + dt * k3);
            v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            t += dt;
            if t > 15.0 {
                peak = peak.max(v.abs());
            }
        }
        let expected = a / (c * c + m * m * w * w).sqrt();
        assert_relative_eq!(peak, expected, max_relative = 0.02);
    }

    #[test]
    fn pose_integration_straight_line_and_turn() {
        let vels = vec![(1.0f64, 0.0f64); 100];
        let poses = integrate_unicycle_pose(&vels, 0.01, [0.0, 0.0, 0.0]);
        let last = poses.last().unwrap();
        assert_relative_eq!(last[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(last[1], 0.0, epsilon = 1e-12);

        let vels = vec![(0.0f64, 0.5f64); 10];
        let poses = integrate_unicycle_pose(&vels, 0.1, [0.0, 0.0, 0.0]);
        assert_relative_eq!(poses.last().unwrap()[2], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn reference_derivative_consistency() {
        let traj = ReferenceTrajectory::sinusoid(
            vec![0.5, 0.3],
            vec![1.0, 1.3],
            vec![0.0, 0.4],
            vec![0.0, 0.1],
        )
        .unwrap();
        traj.check_derivatives(0.0, 10.0, 25, 1e-6).unwrap();

        let poly = ReferenceTrajectory::polynomial(vec![vec![1.0, 2.0, 3.0], vec![0.0, -1.0, 0.5]]);
        poly.check_derivatives(0.0, 2.0, 10, 1e-6).unwrap();
        let p = poly.at(2.0);
        assert_relative_eq!(p.q_d[0], 1.0 + 4.0 + 12.0, epsilon = 1e-12);
        assert_relative_eq!(p.q_dot_d[0], 2.0 + 12.0, epsilon = 1e-12);
        assert_relative_eq!(p.q_ddot_d[0], 6.0, epsilon = 1e-12);
    }
}
