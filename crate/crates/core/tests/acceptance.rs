//! End-to-end acceptance checks. Run with `cargo test --test acceptance`.
//! Prints one line per criterion and exits non-zero if any fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use cosserat_observer::gains::*;
use cosserat_observer::harness::*;
use cosserat_observer::liegroup::*;
use cosserat_observer::observers::ObserverVariant;
use cosserat_observer::rodmodel::*;
use cosserat_observer::shootsolve::*;
use nalgebra::{Matrix6, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// 1
const LIE_AD_TOL: f64 = 1e-10;
const LIE_LOG_TOL: f64 = 1e-9;
const LIE_BRACKET_TOL: f64 = 1e-12;
// 2
const CANTILEVER_REL_TOL: f64 = 0.02;
// 3
const ENERGY_DRIFT_TOL: f64 = 0.03;
const ENERGY_STEP_TOL: f64 = 0.005;
// 4
const BASE_SETTLE_LIMIT_S: f64 = 0.3 + 0.1;
// 5
const ARGMIN_RANGE: (f64, f64) = (0.5, 2.0);
const COMBINED_SLACK: f64 = 1.10;
// 6
const REFLECTION_TOL: f64 = 1e-10;
const PRODUCT_TOL: f64 = 1e-9;
// 7
const MU_AT_ONE: f64 = 1.1405;
const MU_TOL: f64 = 1e-3;
// 8
const KIRCHHOFF_REL_L2: f64 = 0.05;
const PLANAR_TOL: f64 = 1e-12;
// 9
const COMBINED_VS_PD_SLACK: f64 = 1.10;
// 10
const RTF_MIN: f64 = 1.0;
const RTF_NOISE: f64 = 1.10;

fn config(name: &str) -> Config {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    Config::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome { ok, detail: detail.into() }
}

fn random_twist(rng: &mut ChaCha8Rng, max_angle: f64) -> Twist {
    let axis = Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0)).normalize();
    let v = Vector3::from_fn(|_, _| rng.random_range(-2.0..2.0));
    Twist::new(axis * rng.random_range(1e-3..max_angle), v)
}

fn lie_group() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut hat, mut adh, mut log, mut br) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..2000 {
        let x = Twist::from_array(std::array::from_fn(|_| rng.random_range(-10.0..10.0)));
        hat = hat.max((vee6(&hat6(&x)).unwrap() - x).norm());
        let g1 = exp_se3(&random_twist(&mut rng, 3.0), 1.0);
        let g2 = exp_se3(&random_twist(&mut rng, 3.0), 1.0);
        adh = adh.max((adjoint(&g1.compose(&g2)) - adjoint(&g1) * adjoint(&g2)).norm());
        let t = random_twist(&mut rng, std::f64::consts::PI - 0.01);
        log = log.max((log_se3(&exp_se3(&t, 1.0)).unwrap() - t).norm());
        let y = Twist::from_array(std::array::from_fn(|_| rng.random_range(-5.0..5.0)));
        let scale = (x.norm() * y.norm()).max(1.0);
        br = br.max((ad(&x) * y.0 + ad(&y) * x.0).norm() / scale);
    }
    outcome(
        hat == 0.0 && adh <= LIE_AD_TOL && log <= LIE_LOG_TOL && br <= LIE_BRACKET_TOL,
        format!("vee/hat {hat:.1e}, Ad {adh:.1e}, log/exp {log:.1e}, ad {br:.1e}"),
    )
}

fn cantilever() -> Outcome {
    let g = 9.81;
    let (m, k) = build_section_matrices(0.8e-3, 4.48e4, 200e9, 76.92e9).unwrap();
    let p = RodParameters::uniform(0.15, 30, m, k).unwrap().with_gravity(Vector3::new(g, 0.0, 0.0));
    let s = Solver::new(p.clone(), SolverSettings::default()).unwrap();
    let st = s.solve_static(0.0, &BoundaryInputs::clamped(Pose::identity()), &[], &Wrench::zero()).unwrap().state;
    let w = p.inertia[0][(3, 3)] * g;
    let oracle = w * p.length.powi(4) / (8.0 * p.stiffness[0][(0, 0)]);
    let rel = (st.tip_pose().position.x / oracle - 1.0).abs();
    outcome(rel <= CANTILEVER_REL_TOL, format!("tip {:.4e} m vs wL^4/8EI {oracle:.4e} m, rel {rel:.2e}", st.tip_pose().position.x))
}

fn energy() -> Outcome {
    let sc = Scenario::new(config("steel_energy.toml")).unwrap();
    let a = energy_audit(&sc).unwrap();
    let n = sc.truth_params.node_count;
    outcome(
        n == 60
            && sc.dt() == 1e-3
            && sc.duration() >= 1.0
            && a.conservative.relative_drift.abs() <= ENERGY_DRIFT_TOL
            && a.dissipative.max_step_increase <= ENERGY_STEP_TOL,
        format!(
            "N={n} dt={} conservative drift {:.2e}, dissipative max step {:.2e} (drift {:.2e})",
            sc.dt(),
            a.conservative.relative_drift,
            a.dissipative.max_step_increase,
            a.dissipative.relative_drift
        ),
    )
}

fn balanced() -> (Scenario, GroundTruth) {
    let sc = Scenario::new(config("balanced_release.toml")).unwrap();
    let truth = synthesize_ground_truth(&sc).unwrap();
    (sc, truth)
}

fn base_settle(sc: &Scenario, truth: &GroundTruth) -> Outcome {
    let r = run_scenario(sc, truth, ObserverVariant::Base, 1.0, sc.config.scenario.seed).unwrap().report;
    let ok = r.settle_time_s.is_some_and(|t| t <= BASE_SETTLE_LIMIT_S);
    outcome(ok, format!("base settle {:?} s (limit {BASE_SETTLE_LIMIT_S} s)", r.settle_time_s))
}

fn convexity(sc: &Scenario, truth: &GroundTruth) -> Outcome {
    let variants = [ObserverVariant::Base, ObserverVariant::TipD, ObserverVariant::Combined];
    let gammas = [0.2, 0.5, 1.0, 2.0, 4.0];
    let rows = run_sweep(sc, truth, &variants, &gammas, sc.config.scenario.seed).unwrap();
    let settle = |v: ObserverVariant, g: f64| {
        rows.iter()
            .find(|r| r.variant == v && r.gamma == g)
            .and_then(|r| r.settle_time_s)
            .unwrap_or(f64::INFINITY)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for s in sweep_shapes(&rows) {
        let star = s.argmin_gamma.unwrap_or(f64::NAN);
        let this = s.decrease_then_increase && (ARGMIN_RANGE.0..=ARGMIN_RANGE.1).contains(&star);
        ok &= this;
        let series: Vec<String> = gammas.iter().map(|g| format!("{:.3}", settle(s.variant, *g))).collect();
        parts.push(format!("{} [{}] argmin {star}", s.variant, series.join(" ")));
    }
    let best_single = settle(ObserverVariant::Base, 1.0).min(settle(ObserverVariant::TipD, 1.0));
    let comb = settle(ObserverVariant::Combined, 1.0);
    ok &= comb <= COMBINED_SLACK * best_single;
    parts.push(format!("combined(1) {comb:.3} vs min single {best_single:.3}"));
    outcome(ok, parts.join("; "))
}

fn random_spd(rng: &mut ChaCha8Rng, scale: f64) -> Matrix6<f64> {
    let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (a * a.transpose() + Matrix6::identity() * 0.2) * scale
}

fn absorbing_gains() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let (mut r, mut prod) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let m = random_spd(&mut rng, 1.0);
        let k = random_spd(&mut rng, 10.0);
        let (g0, g1) = optimal_gains(&m, &k).unwrap();
        let a = riemann_setup(&m, &k).unwrap();
        r = r.max(base_reflection(&g0, &a).unwrap().abs().max());
        r = r.max(tip_reflection(&g1, &a).unwrap().abs().max());
        prod = prod.max((g0 * g1 - Matrix6::identity()).abs().max());
    }
    outcome(r <= REFLECTION_TOL && prod <= PRODUCT_TOL, format!("max |rho| {r:.1e}, max |G0 G1 - I| {prod:.1e}"))
}

fn unimodal_around(samples: &[MuSample], peak_at: f64) -> bool {
    let bracket = samples
        .windows(2)
        .any(|w| w[0].singularity_bracket && w[0].gamma_scale <= peak_at && peak_at <= w[1].gamma_scale);
    let rising = samples
        .windows(2)
        .filter(|w| w[1].gamma_scale <= peak_at)
        .all(|w| w[1].mu_max > w[0].mu_max);
    let falling = samples
        .windows(2)
        .filter(|w| w[0].gamma_scale >= peak_at)
        .all(|w| w[1].mu_max < w[0].mu_max);
    bracket && rising && falling
}

fn scalar_rates() -> Outcome {
    let (m, k) = (Matrix6::identity(), Matrix6::identity() * 3.0);
    let grid: Vec<f64> = (1..=120).map(|i| i as f64 * 0.025).collect();
    let tip = mu_sweep(&m, &k, 1.0, &Matrix6::identity(), &grid, SweptGain::Tip).unwrap();
    let base = mu_sweep(&m, &k, 1.0, &Matrix6::identity(), &grid, SweptGain::Base).unwrap();
    let at_one = tip.iter().find(|s| s.gamma_scale == 1.0).unwrap().mu_max;
    let tip_ok = unimodal_around(&tip, 3f64.sqrt());
    let base_ok = unimodal_around(&base, 1.0 / 3f64.sqrt());
    outcome(
        tip_ok && base_ok && (at_one - MU_AT_ONE).abs() <= MU_TOL,
        format!("tip peak at sqrt3 {tip_ok}, base peak at 1/sqrt3 {base_ok}, mu(1) {at_one:.6}"),
    )
}

fn kirchhoff(truth: &GroundTruth, p: &RodParameters) -> Outcome {
    let (mut num, mut den) = (0.0, 0.0);
    for x in &truth.states {
        let rs: Vec<_> = x.poses.iter().map(|g| g.rotation).collect();
        let ws: Vec<_> = x.velocities.iter().map(|v| v.angular()).collect();
        let v = kirchhoff_linear_velocity(p, &rs, &ws, x.velocities[0].linear()).unwrap();
        for (vk, xk) in v.iter().zip(&x.velocities) {
            num += (vk - xk.linear()).norm_squared();
            den += xk.linear().norm_squared();
        }
    }
    let rel = (num / den).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut theta = Vec::with_capacity(50);
        let mut acc: f64 = rng.random_range(-3.0..3.0);
        for _ in 0..50 {
            acc += rng.random_range(-0.5..0.5);
            theta.push(acc);
        }
        let tangents: Vec<Vector2<f64>> = theta.iter().map(|t| Vector2::new(-t.sin(), t.cos())).collect();
        let mut back = planar_angle_from_positions(&tangents).unwrap();
        let shift = 2.0 * std::f64::consts::PI * ((theta[0] - back[0]) / (2.0 * std::f64::consts::PI)).round();
        back.iter_mut().for_each(|b| *b += shift);
        worst = worst.max(theta.iter().zip(&back).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    outcome(
        rel <= KIRCHHOFF_REL_L2 && worst <= PLANAR_TOL,
        format!("velocity rel L2 {rel:.2e} over {} states, planar roundtrip {worst:.1e}", truth.states.len()),
    )
}

fn robustness(sc: &Scenario, truth: &GroundTruth) -> Outcome {
    let ss = |v: ObserverVariant| {
        run_scenario(sc, truth, v, 1.0, sc.config.scenario.seed)
            .map(|o| o.report.steady_state_errors.tip_position_m)
            .unwrap_or(f64::INFINITY)
    };
    let d = ss(ObserverVariant::TipD);
    let pd = ss(ObserverVariant::TipPD);
    let c = ss(ObserverVariant::Combined);
    outcome(
        pd < d && c <= COMBINED_VS_PD_SLACK * pd,
        format!(
            "K x{} mismatch, steady tip error tipD {d:.3e} m, tipPD {pd:.3e} m, combined {c:.3e} m",
            sc.config.scenario.model_stiffness_factor
        ),
    )
}

fn real_time(base: &Config) -> Outcome {
    let mut rtfs = Vec::new();
    for n in [30usize, 35, 40, 45] {
        let mut cfg = base.clone();
        cfg.rod.node_count = n;
        cfg.rod.tendons.iter_mut().for_each(|t| t.termination_node = None);
        let sc = Scenario::new(cfg).unwrap();
        let truth = synthesize_ground_truth(&sc).unwrap();
        // Best of three against scheduler noise.
        let best = (0..3)
            .map(|_| run_scenario(&sc, &truth, ObserverVariant::Base, 1.0, 1).unwrap().report.real_time_factor)
            .fold(0.0, f64::max);
        rtfs.push(best);
    }
    let monotone = rtfs.windows(2).all(|w| w[1] <= w[0] * RTF_NOISE);
    let s: Vec<String> = rtfs.iter().map(|r| format!("{r:.1}")).collect();
    outcome(
        rtfs[0] >= RTF_MIN && monotone,
        format!("30 Hz base observer rtf at N=30,35,40,45: {}", s.join(", ")),
    )
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let o = f();
        let el = start.elapsed();
        let ok = o.ok && el <= budget;
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {id:>2}: {} ({:.2} s of {} s) {}",
            if ok { "PASS" } else { "FAIL" },
            el.as_secs_f64(),
            budget.as_secs(),
            o.detail
        );
    };
    report(1, Duration::from_secs(5), &mut lie_group);
    report(2, Duration::from_secs(10), &mut cantilever);
    report(3, Duration::from_secs(60), &mut energy);
    let (sc, truth) = balanced();
    report(4, Duration::from_secs(120), &mut || base_settle(&sc, &truth));
    report(5, Duration::from_secs(900), &mut || convexity(&sc, &truth));
    report(6, Duration::from_secs(5), &mut absorbing_gains);
    report(7, Duration::from_secs(1), &mut scalar_rates);
    let tendon = Scenario::new(config("tendon_mismatch.toml")).unwrap();
    let tendon_truth = synthesize_ground_truth(&tendon).unwrap();
    report(8, Duration::from_secs(120), &mut || kirchhoff(&tendon_truth, &tendon.truth_params));
    report(9, Duration::from_secs(600), &mut || robustness(&tendon, &tendon_truth));
    report(10, Duration::from_secs(300), &mut || real_time(&tendon.config));
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
