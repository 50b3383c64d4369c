//! Scratch exploration binary (not part of the deliverable surface; used to
//! pick benchmark parameters).

use nalgebra::{DMatrix, DVector};
use tarc_core::controllers::*;
use tarc_core::estimator::build_weights;
use tarc_core::plants::*;
use tarc_core::simulator::*;
use tarc_core::stability::*;

fn diag2(a: f64, b: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[a, 0.0, 0.0, b])
}

fn theta_lambda(k: f64, qs: f64, ds: f64, ls: f64, beta: f64, xi: f64, h: f64, sigma: f64) -> (f64, f64) {
    let gains = GainSet::new(&diag2(k, k), &diag2(k, k)).unwrap();
    let params = StabilityParams {
        beta,
        xi,
        d: DMatrix::identity(4, 4) * ds,
        q: DMatrix::identity(4, 4) * qs,
        l: Some(DMatrix::identity(4, 4) * ls),
        h,
    };
    let kernel = build_weights(1, 1, sigma, 20).unwrap();
    match assemble_theta(&gains, &params, &kernel) {
        Ok(c) => (c.lambda_min, c.condition_matrix.norm()),
        Err(e) => {
            eprintln!("err {e}");
            (f64::NEG_INFINITY, 1.0)
        }
    }
}

fn diag_block(n: usize, pos: f64, vel: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m[(i, i)] = pos;
        m[(n + i, n + i)] = vel;
    }
    m
}

fn theta_lambda_aniso(
    k: f64,
    q: (f64, f64),
    d: (f64, f64),
    l: (f64, f64),
    beta: f64,
    xi: f64,
    h: f64,
    sigma: f64,
) -> (f64, f64) {
    let gains = GainSet::new(
        &DMatrix::from_row_slice(1, 1, &[k]),
        &DMatrix::from_row_slice(1, 1, &[k]),
    )
    .unwrap();
    let params = StabilityParams {
        beta,
        xi,
        d: diag_block(1, d.0, d.1),
        q: diag_block(1, q.0, q.1),
        l: Some(diag_block(1, l.0, l.1)),
        h,
    };
    let kernel = build_weights(1, 1, sigma, 20).unwrap();
    match assemble_theta(&gains, &params, &kernel) {
        Ok(c) => (c.lambda_min, c.condition_matrix.norm()),
        Err(_) => (f64::NEG_INFINITY, 1.0),
    }
}

fn explore_theta_aniso() {
    println!("--- anisotropic search for feasible Theta (n=1) ---");
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for &k in &[1.0, 2.0, 4.0, 8.0] {
        for &sigma in &[0.2, 0.5, 1.0, 2.0] {
            let mut best = f64::NEG_INFINITY;
            let mut best_desc = String::new();
            for _ in 0..20000 {
                let q1 = 10f64.powf(rng.random_range(-5.0..0.0));
                let q2 = 10f64.powf(rng.random_range(-3.0..2.0));
                let d1 = 10f64.powf(rng.random_range(-5.0..2.0));
                let d2 = 10f64.powf(rng.random_range(-5.0..2.0));
                let l1 = 10f64.powf(rng.random_range(-5.0..3.0));
                let l2 = 10f64.powf(rng.random_range(-5.0..3.0));
                let beta = 10f64.powf(rng.random_range(-4.0..2.0));
                let xi = 1.0 + 10f64.powf(rng.random_range(-2.0..4.0));
                let h = 10f64.powf(rng.random_range(-3.0..-1.0));
                let (lm, norm) =
                    theta_lambda_aniso(k, (q1, q2), (d1, d2), (l1, l2), beta, xi, h, sigma);
                let score = lm / norm;
                if score > best {
                    best = score;
                    best_desc = format!(
                        "q=({q1:.1e},{q2:.1e}) d=({d1:.1e},{d2:.1e}) l=({l1:.1e},{l2:.1e}) beta={beta:.1e} xi={xi:.1e} h={h:.1e} lm={lm:.3e}"
                    );
                }
            }
            println!("k={k:<4} sigma={sigma:<4} best lm/|T| = {best:.3e}\n    [{best_desc}]");
        }
    }
}

fn explore_theta() {
    println!("--- random search for feasible Theta ---");
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for &k in &[0.25, 0.5, 1.0, 2.0, 4.0] {
        for &sigma in &[0.5, 1.0, 2.0, 5.0, 10.0, 20.0] {
            let mut best = f64::NEG_INFINITY;
            let mut best_desc = String::new();
            for _ in 0..4000 {
                let qs = 10f64.powf(rng.random_range(-4.0..1.0));
                let ds = 10f64.powf(rng.random_range(-4.0..1.0));
                let ls = 10f64.powf(rng.random_range(-6.0..1.0));
                let beta = 10f64.powf(rng.random_range(-3.0..3.0));
                let xi = 1.0 + 10f64.powf(rng.random_range(-2.0..4.0));
                let h = 10f64.powf(rng.random_range(-3.0..0.0));
                let (lm, norm) = theta_lambda(k, qs, ds, ls, beta, xi, h, sigma);
                let score = lm / norm;
                if score > best {
                    best = score;
                    best_desc = format!(
                        "qs={qs:.2e} ds={ds:.2e} ls={ls:.2e} beta={beta:.2e} xi={xi:.2e} h={h:.2e} lm={lm:.3e}"
                    );
                }
            }
            println!("k={k:<5} sigma={sigma:<5} best lm/|T| = {best:.3e}  [{best_desc}]");
        }
    }
}

fn bench_plant(seed: u64) -> PlantModel<f64> {
    two_link_manipulator(
        TwoLinkParams::default(),
        0.2,
        Disturbance::Sinusoid {
            amplitude: vec![1.0, 0.7],
            omega: 2.0,
            phase: vec![0.0, 1.0],
        },
        1e-3,
        seed,
    )
    .unwrap()
}

fn bench_reference() -> ReferenceTrajectory<f64> {
    ReferenceTrajectory::sinusoid(
        vec![0.5, 0.3],
        vec![1.0, 1.3],
        vec![0.0, 0.5],
        vec![0.3, -0.2],
    )
    .unwrap()
}

fn base_cfg(strategy: Strategy, dt: f64) -> ControllerConfig<f64> {
    let gains = GainSet::new(&diag2(16.0, 16.0), &diag2(8.0, 8.0)).unwrap();
    let mut cfg = ControllerConfig::new(gains, strategy, 1, KernelParams::default(), dt).unwrap();
    // P from the Lyapunov solve at Q = 0.01 I
    let q = DMatrix::identity(4, 4) * 0.01;
    cfg.p = Some(solve_lyapunov(&cfg.gains.a, &q).unwrap());
    cfg.alpha = 2.0;
    cfg.gamma_floor = 0.01;
    cfg.epsilon = 0.01;
    cfg.asmc = Some(AsmcParams {
        c_bar: 5.0,
        rho_mode: RhoMode::Fixed(0.05),
        lambda_s: diag2(4.0, 4.0),
    });
    cfg
}

fn run_bench(strategy: Strategy, vel: VelocitySource, seed: u64, dt: f64, dur: f64) -> Metrics<f64> {
    let plant = bench_plant(seed);
    let reference = bench_reference();
    let mut cfg = base_cfg(strategy, dt);
    cfg.velocity_source = vel;
    let mut sim = SimConfig::new(dt, dur, 1, seed);
    sim.settle_threshold = 0.02;
    let trace = run(&plant, &cfg, &reference, &sim).unwrap();
    let m = compute_metrics(&trace, true).unwrap();
    if trace.diverged() {
        eprintln!("  !! diverged: {:?}", trace.outcome);
    }
    m
}

fn explore_benchmark() {
    println!("--- criterion-6 style benchmark (dt=1e-3, 12 s) ---");
    let dt = 1e-3;
    let dur = 12.0;
    for seed in 1..=5u64 {
        let tarc = run_bench(Strategy::Tarc, VelocitySource::TrueState, seed, dt, dur);
        let tdc_fd = run_bench(Strategy::Tdc, VelocitySource::FiniteDifference, seed, dt, dur);
        let asmc = run_bench(Strategy::Asmc, VelocitySource::TrueState, seed, dt, dur);
        let ftdc = run_bench(Strategy::Ftdc, VelocitySource::TrueState, seed, dt, dur);
        println!(
            "seed {seed}: rms TARC={:.5} TDCfd={:.5} ASMC={:.5} FTDC={:.5} | cmax TARC={:.3} ASMC={:.3} | chat TARC={:.1} ASMC={:.1}",
            tarc.rms_e1, tdc_fd.rms_e1, asmc.rms_e1, ftdc.rms_e1,
            tarc.c_hat_max, asmc.c_hat_max,
            tarc.chattering_index, asmc.chattering_index
        );
    }
}

fn explore_criterion9() {
    println!("--- criterion-9 style: FTDC vs TDC-fd under position noise (no disturbance/uncertainty) ---");
    let dt = 1e-3;
    let dur = 10.0;
    for seed in 1..=5u64 {
        let plant = two_link_manipulator(TwoLinkParams::default(), 0.0, Disturbance::None, 1e-3, seed).unwrap();
        let reference = bench_reference();
        let mk = |strategy, vel| {
            let mut cfg = base_cfg(strategy, dt);
            cfg.velocity_source = vel;
            let sim = SimConfig::new(dt, dur, 1, seed);
            let trace = run(&plant, &cfg, &reference, &sim).unwrap();
            (compute_metrics(&trace, true).unwrap(), trace.diverged())
        };
        let (ftdc, d1) = mk(Strategy::Ftdc, VelocitySource::TrueState);
        let (tdc_fd, d2) = mk(Strategy::Tdc, VelocitySource::FiniteDifference);
        println!(
            "seed {seed}: rms FTDC={:.5}{} TDCfd={:.5}{}",
            ftdc.rms_e1,
            if d1 { " DIV" } else { "" },
            tdc_fd.rms_e1,
            if d2 { " DIV" } else { "" }
        );
    }
}

fn explore_criterion8() {
    println!("--- criterion-8: TARC UUB tail on step-disturbance runs ---");
    let dt = 1e-3;
    for seed in 1..=4u64 {
        let plant = two_link_manipulator(
            TwoLinkParams::default(),
            0.2,
            Disturbance::Step {
                amplitude: vec![2.0, -1.5],
                t_on: 4.0,
            },
            0.0,
            seed,
        )
        .unwrap();
        let reference = ReferenceTrajectory::constant(DVector::from_vec(vec![0.4, -0.3]));
        let mut cfg = base_cfg(Strategy::Tarc, dt);
        cfg.c_hat_init = 0.05;
        let sim = SimConfig::new(dt, 12.0, 1, seed);
        let trace = run(&plant, &cfg, &reference, &sim).unwrap();
        let slope = late_time_slope(&trace, 1.0 / 3.0).unwrap();
        let m = compute_metrics(&trace, true).unwrap();
        println!(
            "seed {seed}: slope = {slope:.3e}, rms = {:.4}, cmax = {:.4}, diverged = {}",
            m.rms_e1,
            m.c_hat_max,
            trace.diverged()
        );
    }
}

fn explore_criterion5() {
    println!("--- criterion-5: exact-model decay vs linear ODE oracle ---");
    let dt = 1e-3;
    let plant = two_link_manipulator(TwoLinkParams::default(), 0.0, Disturbance::None, 0.0, 1).unwrap();
    let q_rest = DVector::from_vec(vec![0.3, -0.5]);
    let reference = ReferenceTrajectory::constant(q_rest.clone());
    // K1 = 4 I, K2 = 5 I: per-axis eigenvalues {-1, -4}
    let gains = GainSet::new(&diag2(4.0, 4.0), &diag2(5.0, 5.0)).unwrap();
    let mut cfg = ControllerConfig::new(gains, Strategy::Tdc, 1, KernelParams::default(), dt).unwrap();
    cfg.feedforward = FeedforwardMode::ExactModel;
    let mut sim = SimConfig::new(dt, 10.0, 1, 0);
    sim.initial = Some(InitialState {
        q: vec![0.305, -0.495],
        q_dot: vec![0.0, 0.0],
    });
    let trace = run(&plant, &cfg, &reference, &sim).unwrap();
    let final_e = trace.records.last().unwrap().e1.norm();
    // oracle: e(t) = e0 (4/3 e^-t - 1/3 e^-4t) per axis
    let oracle = |t: f64| 0.005 * (4.0 / 3.0 * (-t).exp() - (-4.0 * t).exp() / 3.0) * 2f64.sqrt();
    println!("final ||e1|| = {final_e:.3e}, oracle = {:.3e}", oracle(10.0));
    // decay-rate fit over [3, 9] s on ln||e1||
    let fit = |pairs: &[(f64, f64)]| {
        let n = pairs.len() as f64;
        let (mx, my) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (mx / n, my / n);
        let mut num = 0.0;
        let mut den = 0.0;
        for (x, y) in pairs {
            num += (x - mx) * (y - my);
            den += (x - mx) * (x - mx);
        }
        num / den
    };
    let sim_pairs: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter(|r| r.t >= 3.0 && r.t <= 9.0)
        .map(|r| (r.t, r.e1.norm().ln()))
        .collect();
    let oracle_pairs: Vec<(f64, f64)> = sim_pairs.iter().map(|(t, _)| (*t, oracle(*t).ln())).collect();
    println!(
        "decay rate sim = {:.5}, oracle = {:.5}",
        -fit(&sim_pairs),
        -fit(&oracle_pairs)
    );
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let what = args.get(1).map(String::as_str).unwrap_or("all");
    if what == "theta" || what == "all" {
        explore_theta();
    }
    if what == "aniso" || what == "all" {
        explore_theta_aniso();
    }
    if what == "bench" || what == "all" {
        explore_benchmark();
    }
    if what == "c9" || what == "all" {
        explore_criterion9();
    }
    if what == "c8" || what == "all" {
        explore_criterion8();
    }
    if what == "c5" || what == "all" {
        explore_criterion5();
    }
}
