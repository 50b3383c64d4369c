//! Stability certificates for the time-delayed control family.
//!
//! Given position/velocity gains K1, K2 the closed loop's error dynamics are
//! governed by the block matrices
//!
//! ```text
//! A1 = [0 I; 0 0]    B1 = [0 0; -K1 -K2]    B = [0; I]    A = A1 + B1
//! ```
//!
//! A delay/gain pair is certified by solving the Lyapunov equation
//! `A^T P + P A = -Q` and testing positive definiteness of a block condition
//! matrix: `Psi` (full-state feedback) or `Theta` (position-only feedback
//! with kernel-estimated derivatives). The smallest admissible sampling
//! interval search and the ultimate-bound arithmetic live here too.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::KernelSpec;
use crate::linalg::{check_spd, is_symmetric, kron, lambda_min_sym, require_hurwitz, set_block};
use crate::scalar::{fl, Scalar};

/// Feasibility guard: lambda_min must clear 1e-12 * ||M|| to count as > 0.
const FEAS_GUARD: f64 = 1e-12;
/// Relative residual allowed on the Lyapunov solution.
const LYAP_RESIDUAL_TOL: f64 = 1e-10;
/// Relative width at which the delay bisection stops.
const DELAY_REL_TOL: f64 = 1e-6;
/// Upper-probe cap (seconds) for the delay bracket search.
const DELAY_CAP: f64 = 1e4;

/// Controller gains and the derived error-dynamics block matrices.
#[derive(Debug, Clone)]
pub struct GainSet<T: Scalar> {
    /// Per-axis state dimension n.
    pub n: usize,
    /// Position gain (1/s^2), n x n SPD.
    pub k1: DMatrix<T>,
    /// Velocity gain (1/s), n x n SPD.
    pub k2: DMatrix<T>,
    pub a1: DMatrix<T>,
    pub b1: DMatrix<T>,
    /// A = A1 + B1, Hurwitz by construction check.
    pub a: DMatrix<T>,
    /// Input block [0; I], 2n x n.
    pub b: DMatrix<T>,
}

/// Builds the error-dynamics blocks from the gains and verifies that
/// A = A1 + B1 is Hurwitz.
pub fn build_error_matrices<T: Scalar>(k1: &DMatrix<T>, k2: &DMatrix<T>) -> Result<GainSet<T>> {
    if k1.shape() != k2.shape() || !k1.is_square() {
        return Err(Error::DimensionMismatch {
            what: format!("K1 is {:?}, K2 is {:?}", k1.shape(), k2.shape()),
        });
    }
    check_spd(k1, "K1")?;
    check_spd(k2, "K2")?;
    let n = k1.nrows();
    let eye = DMatrix::<T>::identity(n, n);

    let mut a1 = DMatrix::<T>::zeros(2 * n, 2 * n);
    set_block(&mut a1, 0, n, &eye);

    let mut b1 = DMatrix::<T>::zeros(2 * n, 2 * n);
    set_block(&mut b1, n, 0, &(-k1.clone()));
    set_block(&mut b1, n, n, &(-k2.clone()));

    let mut b = DMatrix::<T>::zeros(2 * n, n);
    set_block(&mut b, n, 0, &eye);

    let a = &a1 + &b1;
    require_hurwitz(&a)?;

    Ok(GainSet {
        n,
        k1: k1.clone(),
        k2: k2.clone(),
        a1,
        b1,
        a,
        b,
    })
}

impl<T: Scalar> GainSet<T> {
    pub fn new(k1: &DMatrix<T>, k2: &DMatrix<T>) -> Result<Self> {
        build_error_matrices(k1, k2)
    }

    /// B_bar = B [K2 0], the block that couples the estimated-velocity error
    /// into the delayed dynamics.
    pub fn b_bar(&self) -> DMatrix<T> {
        let n = self.n;
        let mut right = DMatrix::<T>::zeros(n, 2 * n);
        set_block(&mut right, 0, 0, &self.k2);
        &self.b * right
    }

    /// B_breve = B [0 K2].
    pub fn b_breve(&self) -> DMatrix<T> {
        let n = self.n;
        let mut right = DMatrix::<T>::zeros(n, 2 * n);
        set_block(&mut right, 0, n, &self.k2);
        &self.b * right
    }
}

/// Free parameters of the block conditions.
#[derive(Debug, Clone)]
pub struct StabilityParams<T: Scalar> {
    /// Young-inequality weight, > 0.
    pub beta: T,
    /// Delay-window weight, > 1.
    pub xi: T,
    /// SPD weighting matrix (2n x 2n).
    pub d: DMatrix<T>,
    /// SPD right-hand side of the Lyapunov equation (2n x 2n).
    pub q: DMatrix<T>,
    /// SPD estimator-coupling weight (2n x 2n); only the filtered condition
    /// uses it.
    pub l: Option<DMatrix<T>>,
    /// Delay in seconds.
    pub h: T,
}

impl<T: Scalar> StabilityParams<T> {
    /// Identity-scaled defaults: beta = 1, xi = 2, D = Q = I, L = 0.1 I.
    pub fn identity_defaults(n: usize, h: T) -> Self {
        let two_n = 2 * n;
        StabilityParams {
            beta: T::one(),
            xi: fl(2.0),
            d: DMatrix::identity(two_n, two_n),
            q: DMatrix::identity(two_n, two_n),
            l: Some(DMatrix::identity(two_n, two_n) * fl::<T>(0.1)),
            h,
        }
    }

    fn validate(&self, n: usize, need_l: bool) -> Result<()> {
        let two_n = 2 * n;
        if self.beta <= T::zero() {
            return Err(Error::Invalid("beta must be positive".into()));
        }
        if self.xi <= T::one() {
            return Err(Error::Invalid("xi must exceed 1".into()));
        }
        if self.h <= T::zero() {
            return Err(Error::Invalid("h must be positive".into()));
        }
        if self.d.shape() != (two_n, two_n) || self.q.shape() != (two_n, two_n) {
            return Err(Error::DimensionMismatch {
                what: format!("D/Q must be {0} x {0}", two_n),
            });
        }
        check_spd(&self.d, "D")?;
        check_spd(&self.q, "Q")?;
        if need_l {
            match &self.l {
                None => return Err(Error::NotSpd { what: "L" }),
                Some(l) => {
                    if l.shape() != (two_n, two_n) {
                        return Err(Error::DimensionMismatch {
                            what: format!("L must be {0} x {0}", two_n),
                        });
                    }
                    check_spd(l, "L")?;
                }
            }
        }
        Ok(())
    }
}

/// Which block condition a certificate refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertificateKind {
    /// Full-state feedback condition (Psi).
    Tdc,
    /// Position-only feedback condition (Theta).
    Ftdc,
}

/// Outcome of assembling and eigen-testing a block condition.
#[derive(Debug, Clone)]
pub struct StabilityCertificate<T: Scalar> {
    /// Lyapunov solution, 2n x 2n SPD.
    pub p: DMatrix<T>,
    /// Assembled Psi (4n x 4n) or Theta (6n x 6n).
    pub condition_matrix: DMatrix<T>,
    pub lambda_min: T,
    /// lambda_min > 1e-12 * ||condition_matrix||.
    pub feasible: bool,
    pub kind: CertificateKind,
}

/// Solves `A^T P + P A = -Q` by Kronecker vectorization and verifies the
/// residual against 1e-10 * ||Q||.
pub fn solve_lyapunov<T: Scalar>(a: &DMatrix<T>, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if !a.is_square() || q.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: format!("A is {:?}, Q is {:?}", a.shape(), q.shape()),
        });
    }
    check_spd(q, "Q")?;
    require_hurwitz(a)?;

    // vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P)
    let eye = DMatrix::<T>::identity(n, n);
    let at = a.transpose();
    let system = kron(&eye, &at) + kron(&at, &eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|&v| -v));
    let vec_p = system.lu().solve(&rhs).ok_or_else(|| Error::SingularSystem {
        what: "Kronecker system not invertible".into(),
    })?;

    let mut p = DMatrix::<T>::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            p[(i, j)] = vec_p[j * n + i];
        }
    }
    // remove roundoff asymmetry before the checks
    p = (&p + p.transpose()) * fl::<T>(0.5);

    let residual = (at * &p + &p * a + q).norm();
    if residual > fl::<T>(LYAP_RESIDUAL_TOL) * q.norm() {
        return Err(Error::SingularSystem {
            what: format!("residual {:?} exceeds tolerance", residual.to_f64()),
        });
    }
    if lambda_min_sym(&p) <= T::zero() {
        return Err(Error::SingularSystem {
            what: "Lyapunov solution not positive definite".into(),
        });
    }
    Ok(p)
}

fn finish_certificate<T: Scalar>(
    p: DMatrix<T>,
    condition: DMatrix<T>,
    kind: CertificateKind,
) -> StabilityCertificate<T> {
    debug_assert!(is_symmetric(&condition));
    let lambda_min = lambda_min_sym(&condition);
    let feasible = lambda_min > fl::<T>(FEAS_GUARD) * condition.norm();
    StabilityCertificate {
        p,
        condition_matrix: condition,
        lambda_min,
        feasible,
        kind,
    }
}

/// E = beta P B1 (A1 D^-1 A1^T + B1 D^-1 B1^T + D^-1 [+ Bbar D^-1 Bbar^T]) B1^T P
fn uncertainty_weight<T: Scalar>(
    gains: &GainSet<T>,
    params: &StabilityParams<T>,
    p: &DMatrix<T>,
    with_b_bar: bool,
) -> Result<DMatrix<T>> {
    let d_inv = params
        .d
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularSystem {
            what: "D not invertible".into(),
        })?;
    let a1 = &gains.a1;
    let b1 = &gains.b1;
    let mut middle =
        a1 * &d_inv * a1.transpose() + b1 * &d_inv * b1.transpose() + &d_inv;
    if with_b_bar {
        let b_bar = gains.b_bar();
        middle += &b_bar * &d_inv * b_bar.transpose();
    }
    Ok((p * b1 * middle * b1.transpose() * p) * params.beta)
}

/// Assembles the full-state block condition
/// `Psi = blockdiag(Q - E - (1+xi)(h^2/beta) D, (xi-1)(h^2/beta) D)`
/// and eigen-tests it.
pub fn assemble_psi<T: Scalar>(
    gains: &GainSet<T>,
    params: &StabilityParams<T>,
) -> Result<StabilityCertificate<T>> {
    params.validate(gains.n, false)?;
    let p = solve_lyapunov(&gains.a, &params.q)?;
    let e = uncertainty_weight(gains, params, &p, false)?;

    let h2_beta = params.h * params.h / params.beta;
    let block1 = &params.q - &e - &params.d * (h2_beta * (T::one() + params.xi));
    let block2 = &params.d * (h2_beta * (params.xi - T::one()));

    let two_n = 2 * gains.n;
    let mut psi = DMatrix::<T>::zeros(4 * gains.n, 4 * gains.n);
    set_block(&mut psi, 0, 0, &block1);
    set_block(&mut psi, two_n, two_n, &block2);
    psi = (&psi + psi.transpose()) * fl::<T>(0.5);

    Ok(finish_certificate(p, psi, CertificateKind::Tdc))
}

/// Assembles the position-only block condition `Theta` (3x3 blocks of 2n)
/// and eigen-tests it. The kernel must be the first-derivative kernel
/// (j = 1); its quadrature supplies `integral of Omega_1^2`.
pub fn assemble_theta<T: Scalar>(
    gains: &GainSet<T>,
    params: &StabilityParams<T>,
    kernel: &KernelSpec<T>,
) -> Result<StabilityCertificate<T>> {
    params.validate(gains.n, true)?;
    if kernel.j != 1 {
        return Err(Error::KernelOrderMismatch {
            expected: 1,
            got: kernel.j,
        });
    }
    let l = params.l.as_ref().expect("validated above");
    let p = solve_lyapunov(&gains.a, &params.q)?;
    let e_bar = uncertainty_weight(gains, params, &p, true)?;

    let h2_beta = params.h * params.h / params.beta;
    // F_bar = ((h^2/beta) D + L) * sigma * integral(Omega_1^2)
    let kernel_energy = kernel.sigma_win * kernel.integral_of_square();
    let f_bar = (&params.d * h2_beta + l) * kernel_energy;

    let block11 = &params.q - &e_bar - &params.d * (h2_beta * (T::one() + params.xi));
    let block22 = &params.d * (h2_beta * (params.xi - T::one())) - &f_bar;
    let p_b_breve = &p * gains.b_breve();
    let p_b_bar = &p * gains.b_bar();

    let two_n = 2 * gains.n;
    let mut theta = DMatrix::<T>::zeros(6 * gains.n, 6 * gains.n);
    set_block(&mut theta, 0, 0, &block11);
    set_block(&mut theta, 0, two_n, &p_b_breve);
    set_block(&mut theta, 0, 2 * two_n, &p_b_bar);
    set_block(&mut theta, two_n, 0, &p_b_breve.transpose());
    set_block(&mut theta, two_n, two_n, &block22);
    set_block(&mut theta, 2 * two_n, 0, &p_b_bar.transpose());
    set_block(&mut theta, 2 * two_n, 2 * two_n, l);
    theta = (&theta + theta.transpose()) * fl::<T>(0.5);

    Ok(finish_certificate(p, theta, CertificateKind::Ftdc))
}

/// Result of the feasibility-boundary search in the delay h.
#[derive(Debug, Clone)]
pub struct DelaySearch<T: Scalar> {
    /// Boundary estimate.
    pub h_star: T,
    /// Verified-feasible probe h_star * (1 - 1e-6).
    pub h_feasible: T,
    /// Verified-infeasible probe h_star * (1 + 1e-6).
    pub h_infeasible: T,
    /// Condition evaluations spent.
    pub evals: usize,
}

/// Finds the largest delay for which the selected condition stays feasible,
/// by doubling from `params.h` until infeasible and then bisecting to a
/// relative width of 1e-6. Both final endpoint verdicts are re-checked; no
/// global monotonicity is assumed.
pub fn max_feasible_delay<T: Scalar>(
    gains: &GainSet<T>,
    params: &StabilityParams<T>,
    kind: CertificateKind,
    kernel: Option<&KernelSpec<T>>,
) -> Result<DelaySearch<T>> {
    let mut evals = 0usize;
    let mut feasible_at = |h: T| -> Result<bool> {
        evals += 1;
        let mut probe = params.clone();
        probe.h = h;
        let cert = match kind {
            CertificateKind::Tdc => assemble_psi(gains, &probe)?,
            CertificateKind::Ftdc => {
                let k = kernel.ok_or_else(|| {
                    Error::Invalid("the filtered condition needs a kernel".into())
                })?;
                assemble_theta(gains, &probe, k)?
            }
        };
        Ok(cert.feasible)
    };

    let h_lo = params.h;
    if !feasible_at(h_lo)? {
        return Err(Error::NoFeasiblePoint {
            h_lo: h_lo.to_f64().unwrap_or(f64::NAN),
        });
    }

    let cap = fl::<T>(DELAY_CAP);
    let two = fl::<T>(2.0);
    let mut lo = h_lo;
    let mut hi = h_lo * two;
    while feasible_at(hi)? {
        lo = hi;
        hi = hi * two;
        if hi > cap {
            return Err(Error::BracketNotFound {
                what: format!("still feasible at the cap h = {DELAY_CAP}"),
            });
        }
    }

    let rel = fl::<T>(DELAY_REL_TOL);
    let half = fl::<T>(0.5);
    while (hi - lo) > rel * half * lo {
        let mid = (lo + hi) * half;
        if feasible_at(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let h_star = (lo + hi) * half;

    let h_feasible = h_star * (T::one() - rel);
    let h_infeasible = h_star * (T::one() + rel);
    if !feasible_at(h_feasible)? || feasible_at(h_infeasible)? {
        return Err(Error::BracketNotFound {
            what: "endpoint verdicts did not verify around h_star".into(),
        });
    }

    Ok(DelaySearch {
        h_star,
        h_feasible,
        h_infeasible,
        evals,
    })
}

/// Scalars entering the ultimate-bound formulas. All values are caller
/// estimates; the existence constants iota, iota2, iota3 have no
/// constructive definition and default to user-supplied numbers.
#[derive(Debug, Clone)]
pub struct UubDiagnostics<T: Scalar> {
    /// gamma_1 of the full-state bound.
    pub gamma1: T,
    /// Gamma (uncertainty energy over the delay window).
    pub big_gamma: T,
    /// Existence constant relating ||s_hat|| to ||e_bar||.
    pub iota: T,
    /// Existence constant relating ||s|| to ||e_f||.
    pub iota2: T,
    /// Existence constant relating ||Delta s|| to ||e_f||.
    pub iota3: T,
    /// Switching-gain multiplier alpha.
    pub alpha: T,
    /// Switching gain at evaluation time.
    pub c_hat: T,
    /// Bound c on the lumped uncertainty.
    pub c_bound: T,
    /// Adaptive-law floor gamma.
    pub gamma_floor: T,
    /// Bound on the switching-term difference ||Delta u_h - Delta u||.
    pub upsilon: T,
}

impl<T: Scalar> UubDiagnostics<T> {
    pub fn zeros() -> Self {
        UubDiagnostics {
            gamma1: T::zero(),
            big_gamma: T::zero(),
            iota: T::zero(),
            iota2: T::zero(),
            iota3: T::zero(),
            alpha: T::zero(),
            c_hat: T::zero(),
            c_bound: T::zero(),
            gamma_floor: T::zero(),
            upsilon: T::zero(),
        }
    }
}

/// Which ultimate-bound formula to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UubCase {
    /// Full-state bound: w0 = gamma1 + sqrt(Gamma/lambda_min + gamma1^2).
    Tdc,
    /// Adaptive case i (gain rising).
    TarcI,
    /// Adaptive case ii (gain falling).
    TarcIi,
    /// Adaptive case iii (gain at the floor).
    TarcIii,
}

/// Evaluates the selected ultimate bound from a feasible certificate.
pub fn compute_uub<T: Scalar>(
    diag: &UubDiagnostics<T>,
    cert: &StabilityCertificate<T>,
    case: UubCase,
) -> Result<T> {
    if !cert.feasible || cert.lambda_min <= T::zero() {
        return Err(Error::InfeasibleCertificate {
            lambda_min: cert.lambda_min.to_f64().unwrap_or(f64::NAN),
        });
    }
    let lam = cert.lambda_min;
    let two = fl::<T>(2.0);
    let sw = diag.alpha * diag.c_hat + diag.c_bound + diag.upsilon;
    let bound = match case {
        UubCase::Tdc => {
            let g1 = diag.gamma1;
            g1 + (diag.big_gamma / lam + g1 * g1).sqrt()
        }
        UubCase::TarcI => {
            let mu = (diag.iota2 * diag.upsilon + diag.iota3 * sw) / lam;
            mu + (diag.big_gamma / lam + mu * mu).sqrt()
        }
        UubCase::TarcIi => {
            let inner = two * diag.c_bound - (diag.alpha + T::one()) * diag.c_hat + diag.upsilon;
            let mu = (diag.iota2 * inner + diag.iota3 * sw) / lam;
            mu + (diag.big_gamma / lam + mu * mu).sqrt()
        }
        UubCase::TarcIii => {
            let inner = diag.c_bound - diag.alpha * diag.c_hat + diag.upsilon;
            let mu = (diag.iota2 * inner + diag.iota3 * sw) / lam;
            let g = diag.gamma_floor;
            mu + ((diag.big_gamma + two * g * g) / lam + mu * mu).sqrt()
        }
    };
    Ok(bound)
}

/// Reaching-time estimate `(||e(t0)|| - bound) / c0` for a trajectory that
/// starts outside the ultimate-bound ball; zero when already inside.
pub fn reaching_time<T: Scalar>(initial_error_norm: T, bound: T, c0: T) -> Result<T> {
    if c0 <= T::zero() {
        return Err(Error::Invalid("c0 must be positive".into()));
    }
    Ok((initial_error_norm - bound).max(T::zero()) / c0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mat(n: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, vals)
    }

    #[test]
    fn scalar_gains_build_expected_blocks() {
        let g = build_error_matrices(&mat(1, &[4.0]), &mat(1, &[4.0])).unwrap();
        assert_eq!(g.a, mat(2, &[0.0, 1.0, -4.0, -4.0]));
        assert_eq!(g.a1, mat(2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(g.b1, mat(2, &[0.0, 0.0, -4.0, -4.0]));
        assert_eq!(g.b, DMatrix::from_row_slice(2, 1, &[0.0, 1.0]));
    }

    #[test]
    fn non_spd_gain_rejected() {
        assert!(matches!(
            build_error_matrices(&mat(1, &[-1.0]), &mat(1, &[1.0])),
            Err(Error::NotSpd { what: "K1" })
        ));
    }

    #[test]
    fn diagonal_gains_eigenvalues_factor_per_axis() {
        // K1 = diag(4, 9), K2 = diag(4, 6): per-axis characteristic
        // polynomials (s^2 + 4s + 4)(s^2 + 6s + 9) with roots {-2, -2, -3, -3}
        let g = build_error_matrices(
            &mat(2, &[4.0, 0.0, 0.0, 9.0]),
            &mat(2, &[4.0, 0.0, 0.0, 6.0]),
        )
        .unwrap();
        let mut re: Vec<f64> = g.a.complex_eigenvalues().iter().map(|z| z.re).collect();
        re.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // double roots split by ~sqrt(machine eps) in the Schur solve
        let expected = [-3.0, -3.0, -2.0, -2.0];
        for (got, want) in re.iter().zip(expected) {
            assert_relative_eq!(*got, want, epsilon = 1e-6);
        }
        for z in g.a.complex_eigenvalues().iter() {
            assert!(z.im.abs() < 1e-6);
        }
    }

    #[test]
    fn lyapunov_scalar_case() {
        // a = -1, q = 2: 2 a p = -q gives p = 1
        let p = solve_lyapunov(&mat(1, &[-1.0]), &mat(1, &[2.0])).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn lyapunov_two_by_two_hand_solution() {
        // A = [[0,1],[-2,-3]], Q = I has the closed-form solution
        // P = [[5/4, 1/4], [1/4, 1/4]]
        let a = mat(2, &[0.0, 1.0, -2.0, -3.0]);
        let q = DMatrix::identity(2, 2);
        let p = solve_lyapunov(&a, &q).unwrap();
        let expected = mat(2, &[1.25, 0.25, 0.25, 0.25]);
        assert!((p - expected).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_marginal_a() {
        let a = mat(2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(
            solve_lyapunov(&a, &DMatrix::identity(2, 2)),
            Err(Error::NonHurwitz { .. })
        ));
    }

    fn scalar_benchmark(h: f64, q_scale: f64) -> (GainSet<f64>, StabilityParams<f64>) {
        let gains = build_error_matrices(&mat(1, &[4.0]), &mat(1, &[4.0])).unwrap();
        let mut params = StabilityParams::identity_defaults(1, h);
        params.q *= q_scale;
        (gains, params)
    }

    #[test]
    fn psi_matches_hand_assembly_at_unit_q() {
        // With K1 = K2 = 4, Q = D = I, beta = 1 the Lyapunov solution is
        // P = [[1.125, 0.125], [0.125, 0.15625]] and
        // E = P diag(0, 560) P = [[8.75, 10.9375], [10.9375, 13.671875]],
        // so Q - E is indefinite and the condition cannot hold at any h.
        let (gains, params) = scalar_benchmark(1e-4, 1.0);
        let cert = assemble_psi(&gains, &params).unwrap();
        let p_expected = mat(2, &[1.125, 0.125, 0.125, 0.15625]);
        assert!((cert.p.clone() - p_expected).norm() < 1e-12);

        let e_expected = mat(2, &[8.75, 10.9375, 10.9375, 13.671875]);
        let h2 = 1e-4f64 * 1e-4;
        let block1 = DMatrix::identity(2, 2) - e_expected - DMatrix::identity(2, 2) * (3.0 * h2);
        let psi_11 = cert.condition_matrix.view((0, 0), (2, 2)).clone_owned();
        assert!((psi_11 - block1).norm() < 1e-10);
        assert!(!cert.feasible);
        assert!(cert.lambda_min < -20.0);
    }

    #[test]
    fn psi_feasible_when_q_scaled_down() {
        // Q = 0.01 I shrinks P (hence E ~ P^2) faster than Q itself, making
        // the condition feasible for small h: lambda(Q - E) along the
        // coupling direction is 0.01 - 1e-4 * 22.42... > 0.
        let (gains, params) = scalar_benchmark(1e-4, 0.01);
        let cert = assemble_psi(&gains, &params).unwrap();
        assert!(cert.feasible, "lambda_min = {}", cert.lambda_min);

        let (gains, params) = scalar_benchmark(10.0, 0.01);
        let cert = assemble_psi(&gains, &params).unwrap();
        assert!(!cert.feasible);
    }

    #[test]
    fn psi_infeasible_at_large_h_any_scale() {
        let (gains, params) = scalar_benchmark(10.0, 1.0);
        let cert = assemble_psi(&gains, &params).unwrap();
        assert!(!cert.feasible);
    }

    #[test]
    fn psi_zero_delay_boundary_reports_infeasible() {
        // h -> 0: the second diagonal block vanishes, lambda_min <= 0.
        let (gains, mut params) = scalar_benchmark(1e-12, 0.01);
        params.h = 1e-300;
        let cert = assemble_psi(&gains, &params).unwrap();
        assert!(!cert.feasible);
        assert!(cert.lambda_min.abs() < 1e-15);
    }

    #[test]
    fn delay_search_brackets_the_boundary() {
        let (gains, params) = scalar_benchmark(1e-4, 0.01);
        let found = max_feasible_delay(&gains, &params, CertificateKind::Tdc, None).unwrap();
        // analytic boundary: block1 lambda along the coupling direction
        // hits zero at h = sqrt((0.01 - 1e-4 * lambda_max(E0)) / 3)
        assert!(found.h_star > 1e-4 && found.h_star < 10.0);
        assert_relative_eq!(found.h_star, 0.0508549, max_relative = 1e-3);
    }

    #[test]
    fn delay_search_errors_when_already_infeasible() {
        let (gains, params) = scalar_benchmark(1e-4, 1.0);
        assert!(matches!(
            max_feasible_delay(&gains, &params, CertificateKind::Tdc, None),
            Err(Error::NoFeasiblePoint { .. })
        ));
    }

    #[test]
    fn doubling_q_widens_the_boundary_in_the_small_q_regime() {
        let (gains, params_a) = scalar_benchmark(1e-4, 0.005);
        let (_, params_b) = scalar_benchmark(1e-4, 0.01);
        let h_a = max_feasible_delay(&gains, &params_a, CertificateKind::Tdc, None)
            .unwrap()
            .h_star;
        let h_b = max_feasible_delay(&gains, &params_b, CertificateKind::Tdc, None)
            .unwrap()
            .h_star;
        assert!(h_b >= h_a, "h({:.4}) -> h({:.4})", h_a, h_b);
    }

    #[test]
    fn theta_assembles_and_reports_verdict() {
        let (gains, mut params) = scalar_benchmark(1e-3, 1.0);
        params.l = Some(DMatrix::identity(2, 2) * 0.1);
        let kernel = crate::estimator::build_weights(1, 1, 5e-3, 20).unwrap();
        let cert = assemble_theta(&gains, &params, &kernel).unwrap();
        assert_eq!(cert.condition_matrix.shape(), (6, 6));
        assert!(is_symmetric(&cert.condition_matrix));
        // the kernel-energy term (12/sigma^2 ~ 4.8e5) crushes the middle
        // block at this window, so the verdict is infeasible
        assert!(!cert.feasible);
    }

    #[test]
    fn theta_requires_first_derivative_kernel() {
        let (gains, params) = scalar_benchmark(1e-3, 1.0);
        let kernel = crate::estimator::build_weights(2, 2, 5e-3, 20).unwrap();
        assert!(matches!(
            assemble_theta(&gains, &params, &kernel),
            Err(Error::KernelOrderMismatch { expected: 1, got: 2 })
        ));
    }

    #[test]
    fn theta_requires_spd_l() {
        let (gains, mut params) = scalar_benchmark(1e-3, 1.0);
        params.l = Some(DMatrix::zeros(2, 2));
        let kernel = crate::estimator::build_weights(1, 1, 5e-3, 20).unwrap();
        assert!(matches!(
            assemble_theta(&gains, &params, &kernel),
            Err(Error::NotSpd { what: "L" })
        ));
    }

    #[test]
    fn uub_zero_uncertainty_gives_zero_bound() {
        let (gains, params) = scalar_benchmark(1e-4, 0.01);
        let cert = assemble_psi(&gains, &params).unwrap();
        let diag = UubDiagnostics::zeros();
        let w0 = compute_uub(&diag, &cert, UubCase::Tdc).unwrap();
        assert_relative_eq!(w0, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn uub_gamma_only_doubles() {
        let (gains, params) = scalar_benchmark(1e-4, 0.01);
        let cert = assemble_psi(&gains, &params).unwrap();
        let mut diag = UubDiagnostics::zeros();
        diag.gamma1 = 3.0;
        let w0 = compute_uub(&diag, &cert, UubCase::Tdc).unwrap();
        assert_relative_eq!(w0, 6.0, epsilon = 1e-12);
    }

    #[test]
    fn uub_floor_case_matches_direct_evaluation() {
        // gamma = 0.1, Gamma = 1, lambda_min = 4, mu3 = 0:
        // w3 = sqrt((1 + 2 * 0.01) / 4)
        let (gains, params) = scalar_benchmark(1e-4, 0.01);
        let mut cert = assemble_psi(&gains, &params).unwrap();
        cert.lambda_min = 4.0;
        cert.feasible = true;
        let mut diag = UubDiagnostics::zeros();
        diag.gamma_floor = 0.1;
        diag.big_gamma = 1.0;
        let w3 = compute_uub(&diag, &cert, UubCase::TarcIii).unwrap();
        assert_relative_eq!(w3, (1.02f64 / 4.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn uub_rejects_infeasible_certificate() {
        let (gains, params) = scalar_benchmark(1e-4, 1.0);
        let cert = assemble_psi(&gains, &params).unwrap();
        assert!(matches!(
            compute_uub(&UubDiagnostics::zeros(), &cert, UubCase::Tdc),
            Err(Error::InfeasibleCertificate { .. })
        ));
    }

    #[test]
    fn reaching_time_clamps_inside_ball() {
        assert_relative_eq!(reaching_time(5.0, 2.0, 1.5).unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(reaching_time(1.0, 2.0, 1.5).unwrap(), 0.0, epsilon = 1e-12);
        assert!(reaching_time(1.0, 2.0, 0.0).is_err());
    }
}
