//! State-derivative estimation from a sliding window of past position samples.
//!
//! The j-th derivative of a signal that is (locally) a polynomial of degree
//! at most `Lambda` is recovered by the window integral
//!
//! ```text
//! q_hat^(j)(t) = integral_{-sigma}^{0} Omega_j(sigma, psi) q(t + psi) dpsi
//! ```
//!
//! where `Omega_j` is a fixed polynomial kernel. On the uniformly sampled
//! history the integral becomes a dot product with precomputed composite
//! Simpson weights, so one estimate costs O(m * n).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::history::HistoryBuffer;
use crate::scalar::{fl, Scalar};

/// Largest supported kernel degree; factorials up to (2*8+1)! stay exact in f64.
pub const MAX_DEGREE: usize = 8;

/// Exact small factorial in f64.
fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Evaluates the derivative kernel Omega_j(sigma_win, psi).
///
/// `lambda` is the polynomial degree the kernel is exact for, `j` the
/// derivative order (j <= lambda), and `psi` must lie in `[-sigma_win, 0]`.
pub fn kernel_value<T: Scalar>(lambda: usize, j: usize, sigma_win: T, psi: T) -> Result<T> {
    if lambda > MAX_DEGREE {
        return Err(Error::DegreeTooLarge { lambda });
    }
    if j > lambda {
        return Err(Error::OrderExceedsDegree { j, lambda });
    }
    if sigma_win <= T::zero() {
        return Err(Error::Invalid("sigma_win must be positive".into()));
    }
    if psi < -sigma_win || psi > T::zero() {
        return Err(Error::OutOfWindow {
            psi: psi.to_f64().unwrap_or(f64::NAN),
            sigma_win: sigma_win.to_f64().unwrap_or(f64::NAN),
        });
    }

    let sigma = sigma_win.to_f64().expect("finite window");
    let x = -psi.to_f64().expect("finite psi") / sigma; // x = -psi/sigma in [0, 1]
    let prefactor =
        factorial(lambda + 1 + j) / (sigma.powi(j as i32 + 1) * factorial(j) * factorial(lambda - j));
    let mut sum = 0.0;
    for k in 0..=lambda {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let coeff = sign * factorial(lambda + 1 + k)
            / ((j + k + 1) as f64 * factorial(lambda - k) * factorial(k).powi(2));
        sum += coeff * x.powi(k as i32);
    }
    Ok(fl(prefactor * sum))
}

/// Discrete derivative estimator: kernel description plus the quadrature
/// weights that turn a window of m+1 samples into one derivative value.
#[derive(Debug, Clone)]
pub struct KernelSpec<T: Scalar> {
    /// Polynomial degree the kernel reproduces exactly.
    pub lambda: usize,
    /// Derivative order.
    pub j: usize,
    /// Window length in seconds; equals `m * dt` on the sampled history.
    pub sigma_win: T,
    /// Subinterval count (window holds m+1 samples).
    pub m: usize,
    /// Combined weights: Simpson coefficient times kernel value per node,
    /// ordered from the oldest node psi = -sigma_win to psi = 0.
    pub weights: Vec<T>,
    simpson: Vec<T>,
    omega: Vec<T>,
}

/// Builds the composite-Simpson weights for an (m+1)-sample window.
pub fn build_weights<T: Scalar>(lambda: usize, j: usize, sigma_win: T, m: usize) -> Result<KernelSpec<T>> {
    if m < 2 || m % 2 != 0 {
        return Err(Error::OddSubintervals { m });
    }
    let step = sigma_win / fl::<T>(m as f64);
    let third = step / fl::<T>(3.0);
    let mut simpson = Vec::with_capacity(m + 1);
    let mut omega = Vec::with_capacity(m + 1);
    let mut weights = Vec::with_capacity(m + 1);
    for i in 0..=m {
        let c = if i == 0 || i == m {
            third
        } else if i % 2 == 1 {
            third * fl::<T>(4.0)
        } else {
            third * fl::<T>(2.0)
        };
        let mut psi = -sigma_win + step * fl::<T>(i as f64);
        // clamp roundoff at the window ends
        psi = psi.clamp(-sigma_win, T::zero());
        let w = kernel_value(lambda, j, sigma_win, psi)?;
        simpson.push(c);
        omega.push(w);
        weights.push(c * w);
    }
    Ok(KernelSpec {
        lambda,
        j,
        sigma_win,
        m,
        weights,
        simpson,
        omega,
    })
}

impl<T: Scalar> KernelSpec<T> {
    /// Same quadrature applied to the squared kernel:
    /// `integral_{-sigma}^{0} Omega_j(sigma, psi)^2 dpsi`.
    ///
    /// This is the single source of truth for the kernel integral used by the
    /// filtered-feedback stability condition.
    pub fn integral_of_square(&self) -> T {
        self.simpson
            .iter()
            .zip(&self.omega)
            .fold(T::zero(), |acc, (&c, &w)| acc + c * w * w)
    }

    /// Number of history samples one estimate consumes.
    pub fn window_samples(&self) -> usize {
        self.m + 1
    }
}

/// Estimates the j-th derivative at `at_lag` sampling intervals in the past.
///
/// `at_lag = 0` estimates at the newest stored sample; `at_lag = h/dt` yields
/// the delayed estimate used by the time-delayed feedforward term. Samples
/// are read exactly as stored, never interpolated.
pub fn estimate<T: Scalar>(
    buffer: &HistoryBuffer<T>,
    kernel: &KernelSpec<T>,
    at_lag: usize,
) -> Result<DVector<T>> {
    let dt = buffer.dt();
    let grid = kernel.sigma_win / fl::<T>(kernel.m as f64);
    if (grid - dt).abs() > fl::<T>(1e-9) * dt {
        return Err(Error::Invalid(format!(
            "kernel grid sigma_win/m = {:?} does not match buffer dt = {:?}",
            grid.to_f64(),
            dt.to_f64()
        )));
    }
    let needed = at_lag + kernel.m + 1;
    if buffer.len() < needed {
        return Err(Error::BufferCold {
            needed,
            have: buffer.len(),
        });
    }
    // weight index i corresponds to psi_i = -sigma + i*dt, i.e. lag at_lag + m - i
    let n = buffer.lag(0)?.q.len();
    let mut out = DVector::zeros(n);
    for (i, &w) in kernel.weights.iter().enumerate() {
        let sample = buffer.lag(at_lag + kernel.m - i)?;
        out.axpy(w, &sample.q, T::one());
    }
    Ok(out)
}
