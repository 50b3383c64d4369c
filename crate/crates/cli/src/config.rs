//! Structured-text experiment configuration.
//!
//! Every module precondition is validated at parse time, before any run:
//! unknown keys are rejected by serde, gains have no implicit defaults, and
//! each constraint violation names the offending key. The canonical
//! serialization of the effective config (after any seed override) feeds the
//! config hash stamped into every report record.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use tarc_core::controllers::{
    AsmcParams, ControllerConfig, FeedforwardMode, KernelParams, RhoMode, Strategy,
    VelocitySource,
};
use tarc_core::plants::{
    two_link_manipulator, wmr_dynamic, Disturbance, PlantModel, ReferenceTrajectory,
    TwoLinkParams, WmrParams,
};
use tarc_core::simulator::{InitialState, SimConfig, WarmupPolicy};
use tarc_core::stability::{solve_lyapunov, GainSet, StabilityParams};

/// Square matrix written as a scalar (scaled identity), a diagonal, or full rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    pub fn build(&self, dim: usize, key: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Scalar(s) => Ok(DMatrix::identity(dim, dim) * *s),
            MatrixSpec::Diagonal(d) => {
                if d.len() != dim {
                    bail!("{key}: diagonal needs {dim} entries, got {}", d.len());
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| if i == j { d[i] } else { 0.0 }))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    bail!("{key}: full matrix must be {dim} x {dim}");
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DisturbanceSection {
    None,
    Step {
        amplitude: Vec<f64>,
        t_on: f64,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        omega: f64,
        #[serde(default)]
        phase: Option<Vec<f64>>,
    },
    BandLimited {
        amplitude: f64,
        omega_max: f64,
        components: usize,
        seed: u64,
    },
}

impl Default for DisturbanceSection {
    fn default() -> Self {
        DisturbanceSection::None
    }
}

impl DisturbanceSection {
    fn build(&self, n: usize) -> Result<Disturbance<f64>> {
        Ok(match self {
            DisturbanceSection::None => Disturbance::None,
            DisturbanceSection::Step { amplitude, t_on } => Disturbance::Step {
                amplitude: amplitude.clone(),
                t_on: *t_on,
            },
            DisturbanceSection::Sinusoid {
                amplitude,
                omega,
                phase,
            } => Disturbance::Sinusoid {
                amplitude: amplitude.clone(),
                omega: *omega,
                phase: phase.clone().unwrap_or_else(|| vec![0.0; n]),
            },
            DisturbanceSection::BandLimited {
                amplitude,
                omega_max,
                components,
                seed,
            } => Disturbance::BandLimited {
                amplitude: *amplitude,
                omega_max: *omega_max,
                components: *components,
                seed: *seed,
            },
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoLinkSection {
    #[serde(default = "d_m1")]
    pub m1: f64,
    #[serde(default = "d_m2")]
    pub m2: f64,
    #[serde(default = "d_l1")]
    pub l1: f64,
    #[serde(default = "d_l2")]
    pub l2: f64,
    #[serde(default = "d_gravity")]
    pub gravity: f64,
    #[serde(default = "d_viscous")]
    pub viscous: [f64; 2],
}

fn d_m1() -> f64 {
    1.0
}
fn d_m2() -> f64 {
    0.8
}
fn d_l1() -> f64 {
    0.8
}
fn d_l2() -> f64 {
    0.6
}
fn d_gravity() -> f64 {
    9.81
}
fn d_viscous() -> [f64; 2] {
    [0.1, 0.1]
}

impl Default for TwoLinkSection {
    fn default() -> Self {
        TwoLinkSection {
            m1: d_m1(),
            m2: d_m2(),
            l1: d_l1(),
            l2: d_l2(),
            gravity: d_gravity(),
            viscous: d_viscous(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WmrSection {
    #[serde(default = "d_mass")]
    pub mass: f64,
    #[serde(default = "d_inertia")]
    pub inertia: f64,
    #[serde(default = "d_wmr_viscous")]
    pub viscous: [f64; 2],
}

fn d_mass() -> f64 {
    9.0
}
fn d_inertia() -> f64 {
    0.8
}
fn d_wmr_viscous() -> [f64; 2] {
    [1.0, 0.5]
}

impl Default for WmrSection {
    fn default() -> Self {
        WmrSection {
            mass: d_mass(),
            inertia: d_inertia(),
            viscous: d_wmr_viscous(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    /// "two_link" or "wmr".
    pub model: String,
    #[serde(default)]
    pub uncertainty: f64,
    #[serde(default)]
    pub noise_std: f64,
    pub seed: u64,
    #[serde(default)]
    pub disturbance: DisturbanceSection,
    #[serde(default)]
    pub two_link: Option<TwoLinkSection>,
    #[serde(default)]
    pub wmr: Option<WmrSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceSection {
    Constant {
        offset: Vec<f64>,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        omega: Vec<f64>,
        #[serde(default)]
        phase: Option<Vec<f64>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
    Polynomial {
        coeffs: Vec<Vec<f64>>,
    },
}

impl ReferenceSection {
    fn build(&self) -> Result<ReferenceTrajectory<f64>> {
        match self {
            ReferenceSection::Constant { offset } => {
                Ok(ReferenceTrajectory::constant(DVector::from_vec(offset.clone())))
            }
            ReferenceSection::Sinusoid {
                amplitude,
                omega,
                phase,
                offset,
            } => {
                let n = amplitude.len();
                ReferenceTrajectory::sinusoid(
                    amplitude.clone(),
                    omega.clone(),
                    phase.clone().unwrap_or_else(|| vec![0.0; n]),
                    offset.clone().unwrap_or_else(|| vec![0.0; n]),
                )
                .map_err(|e| anyhow!("reference: {e}"))
            }
            ReferenceSection::Polynomial { coeffs } => {
                Ok(ReferenceTrajectory::polynomial(coeffs.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSection {
    Fixed { value: f64 },
    Scaled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AsmcSection {
    pub c_bar: f64,
    pub rho: RhoSection,
    pub lambda_s: MatrixSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    /// "TDC", "FTDC", "ASMC" or "TARC".
    pub strategy: String,
    /// Position gain; no implicit default.
    pub k1: MatrixSpec,
    /// Velocity gain; no implicit default.
    pub k2: MatrixSpec,
    #[serde(default = "d_h_lag")]
    pub h_lag: usize,
    /// Estimator kernel degree.
    #[serde(default = "d_lambda")]
    pub lambda: usize,
    /// Estimator window subintervals; the window is m * dt seconds.
    #[serde(default = "d_m")]
    pub m: usize,
    /// Optional sanity pin: must equal m * dt when present.
    #[serde(default)]
    pub sigma_win: Option<f64>,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_gamma")]
    pub gamma: f64,
    #[serde(default = "d_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub c_hat_init: Option<f64>,
    /// "true_state" or "finite_difference" (TDC/ASMC velocity input).
    #[serde(default = "d_vel_source")]
    pub velocity_source: String,
    /// "time_delayed" or "exact_model" (diagnostic).
    #[serde(default = "d_feedforward")]
    pub feedforward: String,
    #[serde(default)]
    pub asmc: Option<AsmcSection>,
}

fn d_h_lag() -> usize {
    1
}
fn d_lambda() -> usize {
    2
}
fn d_m() -> usize {
    20
}
fn d_alpha() -> f64 {
    2.0
}
fn d_gamma() -> f64 {
    0.01
}
fn d_epsilon() -> f64 {
    0.01
}
fn d_vel_source() -> String {
    "true_state".into()
}
fn d_feedforward() -> String {
    "time_delayed".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default = "d_xi")]
    pub xi: f64,
    /// Defaults to the identity.
    #[serde(default)]
    pub d: Option<MatrixSpec>,
    /// Defaults to the identity.
    #[serde(default)]
    pub q: Option<MatrixSpec>,
    /// Defaults to 0.1 * identity.
    #[serde(default)]
    pub l: Option<MatrixSpec>,
}

fn d_beta() -> f64 {
    1.0
}
fn d_xi() -> f64 {
    2.0
}

impl Default for StabilitySection {
    fn default() -> Self {
        StabilitySection {
            beta: d_beta(),
            xi: d_xi(),
            d: None,
            q: None,
            l: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "d_record_every")]
    pub record_every: usize,
    #[serde(default = "d_settle")]
    pub settle_threshold: f64,
    #[serde(default = "d_tau_jump")]
    pub tau_jump_max: f64,
    #[serde(default)]
    pub q0: Option<Vec<f64>>,
    #[serde(default)]
    pub qdot0: Option<Vec<f64>>,
}

fn d_record_every() -> usize {
    1
}
fn d_settle() -> f64 {
    0.01
}
fn d_tau_jump() -> f64 {
    1e3
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub dir: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub reference: ReferenceSection,
    pub controller: ControllerSection,
    #[serde(default)]
    pub stability: StabilitySection,
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
}

/// A parsed, validated experiment with every module object built.
pub struct Experiment {
    pub cfg: ExperimentConfig,
    /// Hex SHA-256 (truncated) of the canonical serialization.
    pub hash: String,
    pub plant: PlantModel<f64>,
    pub reference: ReferenceTrajectory<f64>,
    pub controller: ControllerConfig<f64>,
    pub stability: StabilityParams<f64>,
    pub sim: SimConfig<f64>,
}

pub fn parse_strategy(name: &str) -> Result<Strategy> {
    match name.to_ascii_uppercase().as_str() {
        "TDC" => Ok(Strategy::Tdc),
        "FTDC" | "F-TDC" => Ok(Strategy::Ftdc),
        "ASMC" => Ok(Strategy::Asmc),
        "TARC" => Ok(Strategy::Tarc),
        other => bail!("unknown strategy name: {other}"),
    }
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("config parse error: {e}"))
    }

    /// Canonical serialization: struct field order, stable float formatting.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Builds and validates every module object.
    pub fn build(self) -> Result<Experiment> {
        let n = 2usize; // both shipped plants are 2-DOF
        let two_n = 2 * n;
        let p = &self.plant;
        let disturbance = p.disturbance.build(n)?;
        let plant = match p.model.as_str() {
            "two_link" => {
                if p.wmr.is_some() {
                    bail!("plant.wmr: parameters given but plant.model is two_link");
                }
                let s = p.two_link.clone().unwrap_or_default();
                two_link_manipulator(
                    TwoLinkParams {
                        m1: s.m1,
                        m2: s.m2,
                        l1: s.l1,
                        l2: s.l2,
                        gravity: s.gravity,
                        viscous: s.viscous,
                    },
                    p.uncertainty,
                    disturbance,
                    p.noise_std,
                    p.seed,
                )
                .map_err(|e| anyhow!("plant: {e}"))?
            }
            "wmr" => {
                if p.two_link.is_some() {
                    bail!("plant.two_link: parameters given but plant.model is wmr");
                }
                let s = p.wmr.clone().unwrap_or_default();
                wmr_dynamic(
                    WmrParams {
                        mass: s.mass,
                        inertia: s.inertia,
                        viscous: s.viscous,
                    },
                    p.uncertainty,
                    disturbance,
                    p.noise_std,
                    p.seed,
                )
                .map_err(|e| anyhow!("plant: {e}"))?
            }
            other => bail!("plant.model: unknown model {other:?} (two_link or wmr)"),
        };

        let reference = self.reference.build()?;
        if reference.n != n {
            bail!("reference: needs {n} axes, got {}", reference.n);
        }
        reference
            .check_derivatives(0.0, self.sim.duration.max(1.0), 16, 1e-6)
            .map_err(|e| anyhow!("reference: {e}"))?;

        let c = &self.controller;
        let strategy = parse_strategy(&c.strategy).context("controller.strategy")?;
        let k1 = c.k1.build(n, "controller.k1")?;
        let k2 = c.k2.build(n, "controller.k2")?;
        let gains = GainSet::new(&k1, &k2).map_err(|e| anyhow!("controller.k1/k2: {e}"))?;

        if let Some(sw) = c.sigma_win {
            let expected = c.m as f64 * self.sim.dt;
            if (sw - expected).abs() > 1e-9 * expected.max(1e-300) {
                bail!("controller.sigma_win: must equal m * dt = {expected} (got {sw})");
            }
        }

        let mut controller = ControllerConfig::new(
            gains,
            strategy,
            c.h_lag,
            KernelParams {
                lambda: c.lambda,
                m: c.m,
            },
            self.sim.dt,
        )
        .map_err(|e| anyhow!("controller: {e}"))?;
        controller.alpha = c.alpha;
        controller.gamma_floor = c.gamma;
        controller.epsilon = c.epsilon;
        controller.c_hat_init = c.c_hat_init.unwrap_or(c.gamma);
        controller.velocity_source = match c.velocity_source.as_str() {
            "true_state" => VelocitySource::TrueState,
            "finite_difference" => VelocitySource::FiniteDifference,
            other => bail!("controller.velocity_source: unknown value {other:?}"),
        };
        controller.feedforward = match c.feedforward.as_str() {
            "time_delayed" => FeedforwardMode::TimeDelayed,
            "exact_model" => FeedforwardMode::ExactModel,
            other => bail!("controller.feedforward: unknown value {other:?}"),
        };
        if let Some(asmc) = &c.asmc {
            controller.asmc = Some(AsmcParams {
                c_bar: asmc.c_bar,
                rho_mode: match &asmc.rho {
                    RhoSection::Fixed { value } => RhoMode::Fixed(*value),
                    RhoSection::Scaled => RhoMode::Scaled,
                },
                lambda_s: asmc.lambda_s.build(n, "controller.asmc.lambda_s")?,
            });
        }

        let s = &self.stability;
        if s.beta <= 0.0 {
            bail!("stability.beta: must be positive");
        }
        if s.xi <= 1.0 {
            bail!("stability.xi: must exceed 1");
        }
        let d_mat = match &s.d {
            Some(m) => m.build(two_n, "stability.d")?,
            None => DMatrix::identity(two_n, two_n),
        };
        let q_mat = match &s.q {
            Some(m) => m.build(two_n, "stability.q")?,
            None => DMatrix::identity(two_n, two_n),
        };
        let l_mat = match &s.l {
            Some(m) => m.build(two_n, "stability.l")?,
            None => DMatrix::identity(two_n, two_n) * 0.1,
        };
        let stability = StabilityParams {
            beta: s.beta,
            xi: s.xi,
            d: d_mat,
            q: q_mat.clone(),
            l: Some(l_mat),
            h: c.h_lag as f64 * self.sim.dt,
        };

        // the sliding variable uses the Lyapunov solution for these gains
        controller.p = Some(
            solve_lyapunov(&controller.gains.a, &q_mat)
                .map_err(|e| anyhow!("stability.q: Lyapunov solve failed: {e}"))?,
        );

        controller
            .validate()
            .map_err(|e| anyhow!("controller: {e}"))?;

        let mut sim = SimConfig::new(self.sim.dt, self.sim.duration, c.h_lag, p.seed);
        sim.warmup_policy = WarmupPolicy::PdOnly;
        sim.record_every = self.sim.record_every;
        sim.settle_threshold = self.sim.settle_threshold;
        sim.tau_jump_max = self.sim.tau_jump_max;
        sim.initial = match (&self.sim.q0, &self.sim.qdot0) {
            (None, None) => None,
            (Some(q0), Some(qd0)) => {
                if q0.len() != n || qd0.len() != n {
                    bail!("sim.q0/sim.qdot0: need {n} entries each");
                }
                Some(InitialState {
                    q: q0.clone(),
                    q_dot: qd0.clone(),
                })
            }
            _ => bail!("sim.q0 and sim.qdot0 must be given together"),
        };
        if self.sim.dt <= 0.0 {
            bail!("sim.dt: must be positive");
        }
        if self.sim.record_every == 0 {
            bail!("sim.record_every: must be at least 1");
        }
        let h = c.h_lag as f64 * self.sim.dt;
        if self.sim.duration < 10.0 * h {
            bail!("sim.duration: must be at least 10 h = {}", 10.0 * h);
        }

        let hash = self.hash();
        Ok(Experiment {
            cfg: self,
            hash,
            plant,
            reference,
            controller,
            stability,
            sim,
        })
    }
}

/// Loads a config file, applies the optional seed override, builds everything.
pub fn load(path: &std::path::Path, seed_override: Option<u64>) -> Result<Experiment> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut cfg = ExperimentConfig::from_str(&text)?;
    if let Some(seed) = seed_override {
        cfg.plant.seed = seed;
    }
    cfg.build()
}
