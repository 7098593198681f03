//! Acceptance gate. Each test prints one `criterion N ... PASS|FAIL` line
//! (visible with `--nocapture`) and then asserts it.
//!
//! Reference setting: 4 clients, beta = 10, delta = 10, a = 0.3, b = 0,
//! nu ~ U[0.1, 0.5], gamma = 1, T = 1.

use std::time::Instant;

use crowdfl::admission::{self, admission_objective, AdmissionConfig, Boundary};
use crowdfl::best_response::{best_response, client_utility, g_of_r, h_of_theta, RewardRate, DEFAULT_TOL};
use crowdfl::cost::ClientProfile;
use crowdfl::fedsim::{make_synthetic, run_federated, AggregationMode, FedConfig, PartitionMode};
use crowdfl::reproduce::reference_server;
use crowdfl::rng::SeededRng;
use crowdfl::scenario::ClientDistribution;
use crowdfl::stackelberg::{
    kkt_iteration_budget, optimal_x, solve_alg2, solve_baseline, solve_opt, verify_equilibrium, ServerConfig,
    SolverOptions, EQUILIBRIUM_TOL,
};

fn report(n: u32, name: &str, pass: bool, detail: String) {
    println!("criterion {n} [{name}]: {} ({detail})", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn reference_clients(seed: u64) -> Vec<ClientProfile> {
    ClientDistribution::reference().draw(seed).unwrap()
}

/// Linear-interpolation percentile, `q` in `[0, 1]`.
fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

fn ols_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Lower branch `W_{-1}(x)` for `x = -e^{-g}`, `g > 1`, by Halley's method.
fn lambert_wm1_of_neg_exp(g: f64) -> f64 {
    let x = -(-g).exp();
    let mut w = if g < 1.5 {
        // branch-point series in p = -sqrt(2 (1 + e x)); 1 + e x = -expm1(1 - g)
        let p = -(2.0 * -(1.0 - g).exp_m1()).sqrt();
        -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p
    } else {
        let l1 = -g;
        let l2 = (g).ln();
        l1 - l2 + l2 / l1
    };
    for _ in 0..100 {
        let ew = w.exp();
        let f = w * ew - x;
        let denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0);
        let step = f / denom;
        w -= step;
        if step.abs() <= 1e-16 * w.abs() {
            break;
        }
    }
    w
}

const C1_TOL: f64 = 1e-6;
const C1_SEEDS: u64 = 50;
const C1_THETAS: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.6];
const C1_SECONDS: f64 = 10.0;

#[test]
fn criterion_1_alg2_matches_opt() {
    let opts = SolverOptions::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for &th in &C1_THETAS {
        for seed in 0..C1_SEEDS {
            let cfg = ServerConfig { theta_th: th, ..reference_server() };
            let clients = reference_clients(seed);
            let opt = solve_opt(&cfg, &clients, &opts).unwrap();
            let alg = solve_alg2(&cfg, &clients, &opts).unwrap();
            let diff = if opt.server_utility == alg.server_utility { 0.0 } else { (opt.server_utility - alg.server_utility).abs() };
            worst = worst.max(diff);
            count += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        1,
        "ALG2 = OPT",
        worst <= C1_TOL && secs < C1_SECONDS,
        format!("max |U_alg2 - U_opt| = {worst:.3e} <= {C1_TOL:e} over {count} instances, {secs:.2} s < {C1_SECONDS} s"),
    );
}

const C2_MIN_MEDIAN_GAP: f64 = 0.15;
const C2_REFERENCE_GAP: f64 = 0.22;
const C2_BAND: f64 = 0.10;
const C2_SECONDS: f64 = 30.0;

#[test]
fn criterion_2_baseline_gap() {
    let opts = SolverOptions::default();
    let start = Instant::now();
    let mut medians = Vec::new();
    for th in [0.2, 0.3, 0.4] {
        let cfg = ServerConfig { theta_th: th, ..reference_server() };
        let gaps: Vec<f64> = (0..50)
            .map(|seed| {
                let clients = reference_clients(seed);
                let b = solve_baseline(&cfg, &clients, &opts).unwrap().r_star.get();
                let a = solve_alg2(&cfg, &clients, &opts).unwrap().r_star.get();
                (b - a) / b
            })
            .collect();
        medians.push((th, percentile(&gaps, 0.5)));
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = medians.iter().all(|m| m.1 >= C2_MIN_MEDIAN_GAP) && secs < C2_SECONDS;
    let within: Vec<bool> = medians.iter().map(|m| (m.1 - C2_REFERENCE_GAP).abs() <= C2_BAND).collect();
    let shown: Vec<String> = medians.iter().map(|(t, m)| format!("theta_th {t}: {:.1}%", 100.0 * m)).collect();
    report(
        2,
        "baseline reward gap",
        pass,
        format!(
            "median gaps [{}] >= {:.0}%; within {:.0}% +/- {:.0}pp: {within:?}; {secs:.2} s",
            shown.join(", "),
            100.0 * C2_MIN_MEDIAN_GAP,
            100.0 * C2_REFERENCE_GAP,
            100.0 * C2_BAND
        ),
    );
}

const C3_SEEDS: u64 = 100;
const C3_BASELINE_TARGET: f64 = 18.0;
const C3_ALG2_BAND: (f64, f64) = (2.0, 9.0);

#[test]
fn criterion_3_table_scale() {
    let opts = SolverOptions::default();
    let cfg = ServerConfig { a: 0.3, b: -1.0, theta_th: 0.2, ..reference_server() };
    let dist = ClientDistribution { gamma: (1.0, 5.0), ..ClientDistribution::reference() };
    let (mut base, mut alg) = (Vec::new(), Vec::new());
    for seed in 0..C3_SEEDS {
        let clients = dist.draw(seed).unwrap();
        base.push(solve_baseline(&cfg, &clients, &opts).unwrap().r_star.get());
        alg.push(solve_alg2(&cfg, &clients, &opts).unwrap().r_star.get());
    }
    let (b10, b90) = (percentile(&base, 0.1), percentile(&base, 0.9));
    let (a10, a50, a90) = (percentile(&alg, 0.1), percentile(&alg, 0.5), percentile(&alg, 0.9));
    let rank = base.iter().filter(|&&b| b < C3_BASELINE_TARGET).count() as f64 / base.len() as f64;
    let base_ok = (b10..=b90).contains(&C3_BASELINE_TARGET);
    let alg_ok = a10 >= C3_ALG2_BAND.0 && a90 <= C3_ALG2_BAND.1;
    report(
        3,
        "table scale",
        base_ok && alg_ok,
        format!(
            "baseline p10..p90 = [{b10:.2}, {b90:.2}] contains {C3_BASELINE_TARGET}: {base_ok} (18 sits at the {:.0}th percentile); \
             alg2 p10/p50/p90 = {a10:.2}/{a50:.2}/{a90:.2} within [{}, {}]: {alg_ok}",
            100.0 * rank,
            C3_ALG2_BAND.0,
            C3_ALG2_BAND.1
        ),
    );
}

/// Relative slack for "non-increasing", the 1-D maximizer's resolution.
const C4_SLACK: f64 = 1e-7;

#[test]
fn criterion_4_reward_monotone() {
    let opts = SolverOptions::default();
    let mut violations = 0;
    let mut ties = 0;
    for seed in 0..50 {
        let clients = reference_clients(seed);
        let r: Vec<f64> = C1_THETAS
            .iter()
            .map(|&th| solve_alg2(&ServerConfig { theta_th: th, ..reference_server() }, &clients, &opts).unwrap().r_star.get())
            .collect();
        for w in r.windows(2) {
            if w[1] > w[0] * (1.0 + C4_SLACK) {
                violations += 1;
            } else if w[1] > w[0] {
                ties += 1;
            }
        }
    }
    report(
        4,
        "reward monotone in theta_th",
        violations == 0,
        format!("{violations} violations over 50 seeds x 5 thresholds; {ties} equal-within-{C4_SLACK:e} steps"),
    );
}

#[test]
fn criterion_5_optimal_x() {
    let mut rng = SeededRng::new(5);
    let n = 100_000;
    let mut worst = 0.0f64;
    let mut ok = true;
    for _ in 0..100 {
        let cfg = ServerConfig {
            a: rng.uniform_in(0.01, 1.0),
            b: rng.uniform_in(-2.0, 0.0),
            beta: rng.uniform_in(1.0, 20.0),
            delta: rng.uniform_in(1.0, 20.0),
            ..reference_server()
        };
        let theta = rng.uniform_in(0.0, 0.99);
        // grid over [0, 2 delta]; infeasible points are excluded
        let hi = 2.0 * cfg.delta;
        let step = hi / (n - 1) as f64;
        let bound = cfg.delta * (1.0 - theta);
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in 0..n {
            let x = i as f64 * step;
            if x > bound {
                break;
            }
            let v = cfg.beta * (1.0 - 10f64.powf(-(cfg.a * x + cfg.b)));
            if v > best.1 {
                best = (x, v);
            }
        }
        let x = optimal_x(&cfg, theta).unwrap();
        let kkt = kkt_iteration_budget(&cfg, theta).unwrap();
        worst = worst.max((x - best.0).abs() / step);
        ok &= (x - best.0).abs() <= step && kkt.multiplier > 0.0 && kkt.x == x;
    }
    report(5, "optimal x", ok, format!("max |x* - x_grid| = {worst:.3} grid steps (limit 1), multipliers positive"));
}

const C6_H_TOL: f64 = 1e-8;
const C6_FD_TOL: f64 = 1e-5;
const C6_W_TOL: f64 = 1e-9;

#[test]
fn criterion_6_best_response() {
    let mut rng = SeededRng::new(6);
    let (mut worst_h, mut worst_fd, mut worst_w) = (0.0f64, 0.0f64, 0.0f64);
    let mut interior = 0;
    for id in 0..1000 {
        let p = ClientProfile::new(id, rng.uniform_in(0.0, 0.9), rng.uniform_in(0.5, 5.0), rng.uniform_in(0.1, 2.0));
        let r = RewardRate::new(rng.uniform_in(0.0, 20.0)).unwrap();
        let br = best_response(&p, r, 1.0, DEFAULT_TOL).unwrap();
        let g = g_of_r(&p, r).unwrap();
        if g < 1.0 {
            assert_eq!(br.theta_star, 1.0);
            continue;
        }
        let theta = br.theta_star;
        worst_h = worst_h.max((h_of_theta(theta).unwrap() - g).abs());
        let w = lambert_wm1_of_neg_exp(g);
        worst_w = worst_w.max((-1.0 / w - theta).abs());
        if theta < 1.0 {
            interior += 1;
            let step = 1e-5 * theta.min(1.0 - theta);
            let u = |t: f64| client_utility(&p, r, t).unwrap();
            worst_fd = worst_fd.max(((u(theta + step) - u(theta - step)) / (2.0 * step)).abs());
        }
    }
    report(
        6,
        "best response",
        worst_h <= C6_H_TOL && worst_fd <= C6_FD_TOL && worst_w <= C6_W_TOL,
        format!(
            "max |h - g| = {worst_h:.2e} (<= {C6_H_TOL:e}), max |du/dtheta| = {worst_fd:.2e} over {interior} interior (<= {C6_FD_TOL:e}), \
             max |theta - theta_W| = {worst_w:.2e} (<= {C6_W_TOL:e})"
        ),
    );
}

const C7_TOL: f64 = 1e-4;
const C7_SECONDS: f64 = 5.0;

fn grid_argmax(c: &AdmissionConfig, n: usize) -> f64 {
    let mut best = (c.theta_min, f64::NEG_INFINITY);
    for i in 0..n {
        let t = (c.theta_min + (c.theta_max - c.theta_min) * i as f64 / (n - 1) as f64).min(c.theta_max);
        let v = admission_objective(c, t).unwrap();
        if v > best.1 {
            best = (t, v);
        }
    }
    best.0
}

#[test]
fn criterion_7_admission() {
    let start = Instant::now();
    let mut rng = SeededRng::new(7);
    let solve = |c: &AdmissionConfig| admission::solve_threshold(c, admission::DEFAULT_TOL, admission::DEFAULT_MAX_ITER).unwrap();
    let mut worst = 0.0f64;
    let mut k_violations = 0;
    for _ in 0..100 {
        let theta_min = rng.uniform_in(0.01, 0.5);
        let c = AdmissionConfig {
            k: rng.uniform_in(0.0, 100.0),
            theta_min,
            theta_max: rng.uniform_in(theta_min + 0.05, 1.0),
            server: ServerConfig {
                a: rng.uniform_in(0.05, 1.0),
                b: rng.uniform_in(-2.0, 0.0),
                beta: rng.uniform_in(1.0, 20.0),
                delta: rng.uniform_in(1.0, 20.0),
                ..reference_server()
            },
        };
        worst = worst.max((solve(&c).theta_star - grid_argmax(&c, 100_000)).abs());
        let ts: Vec<f64> = (0..=10).map(|i| solve(&AdmissionConfig { k: 10.0 * i as f64, ..c }).theta_star).collect();
        k_violations += ts.windows(2).filter(|w| w[1] < w[0]).count();
    }
    // delta trend on the threshold-curve family
    let mut d_violations = 0;
    for (a, b) in [(0.35, -1.0), (0.3, -1.0), (0.65, -1.0)] {
        for k in 0..=50 {
            let ts: Vec<f64> = [6.0, 8.0, 10.0, 12.0]
                .iter()
                .map(|&delta| {
                    let mut c = crowdfl::reproduce::admission_base(a, b);
                    c.k = k as f64;
                    c.server.delta = delta;
                    let r = solve(&c);
                    assert!(r.boundary != Boundary::AtMax);
                    r.theta_star
                })
                .collect();
            d_violations += ts.windows(2).filter(|w| w[1] < w[0]).count();
        }
    }
    let secs = start.elapsed().as_secs_f64();
    report(
        7,
        "admission threshold",
        worst <= C7_TOL && k_violations == 0 && d_violations == 0 && secs < C7_SECONDS,
        format!(
            "max |theta* - grid| = {worst:.2e} (<= {C7_TOL:e}) on 100 configs; K violations {k_violations}, delta violations {d_violations}; {secs:.2} s"
        ),
    );
}

const C8_SLOPE: (f64, f64) = (0.6, 1.4);
const C8_W_TOL: f64 = 1e-4;
const C8_GAP: f64 = 1e-6;
const C8_SECONDS: f64 = 60.0;
const C8_LAMBDA: f64 = 1.0;
const C8_SEEDS: [u64; 3] = [0, 1, 2];

#[test]
fn criterion_8_iteration_law() {
    let start = Instant::now();
    let mut slopes = Vec::new();
    let mut worst_err = 0.0f64;
    let mut all_converged = true;
    for seed in C8_SEEDS {
        let ds = make_synthetic(seed, 200, 10, 4, 0.1, PartitionMode::Even).unwrap();
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for i in 1..=9 {
            let theta = i as f64 / 10.0;
            let cfg = FedConfig {
                lambda: C8_LAMBDA,
                theta_target: theta,
                epsilon_target: C8_GAP,
                max_rounds: 20_000,
                mode: AggregationMode::Consistent,
                seed,
                ..FedConfig::default()
            };
            let trace = run_federated(&ds, &cfg).unwrap();
            all_converged &= trace.converged;
            let w = trace.model(&ds);
            worst_err = worst_err.max((&w - &trace.oracle.w).norm() / trace.oracle.w.norm());
            xs.push((1.0 / (1.0 - theta)).ln());
            ys.push((trace.rounds() as f64).ln());
        }
        slopes.push(ols_slope(&xs, &ys));
    }
    let secs = start.elapsed().as_secs_f64();
    let slope_ok = slopes.iter().all(|s| (C8_SLOPE.0..=C8_SLOPE.1).contains(s));
    let err_ok = worst_err <= C8_W_TOL;
    let shown: Vec<String> = slopes.iter().map(|s| format!("{s:.3}")).collect();
    report(
        8,
        "iteration law",
        slope_ok && err_ok && all_converged && secs < C8_SECONDS,
        format!(
            "slopes [{}] in [{}, {}]: {slope_ok}; max rel w error at gap {C8_GAP:e} = {worst_err:.2e} (<= {C8_W_TOL:e}): {err_ok}; \
             converged: {all_converged}; {secs:.2} s",
            shown.join(", "),
            C8_SLOPE.0,
            C8_SLOPE.1
        ),
    );
}

const C9_GRID: usize = 10_000;
const C9_MIN_FRACTION: f64 = 0.9;

#[test]
fn criterion_9_equilibrium() {
    let opts = SolverOptions::default();
    let (mut worst_opt, mut positive, mut total) = (0.0f64, 0, 0);
    for &th in &[0.2, 0.3, 0.4] {
        let cfg = ServerConfig { theta_th: th, ..reference_server() };
        for seed in 0..50 {
            let clients = reference_clients(seed);
            let opt = solve_opt(&cfg, &clients, &opts).unwrap();
            let rep = verify_equilibrium(&cfg, &clients, &opt, C9_GRID, &opts).unwrap();
            worst_opt = worst_opt.max(rep.stage1_violation).max(rep.stage2_violation);
            let base = solve_baseline(&cfg, &clients, &opts).unwrap();
            let rep = verify_equilibrium(&cfg, &clients, &base, C9_GRID, &opts).unwrap();
            positive += usize::from(rep.stage1_violation > 0.0);
            total += 1;
        }
    }
    let frac = positive as f64 / total as f64;
    report(
        9,
        "equilibrium verification",
        worst_opt <= EQUILIBRIUM_TOL && frac >= C9_MIN_FRACTION,
        format!(
            "OPT max violation {worst_opt:.2e} (<= {EQUILIBRIUM_TOL:e}); baseline Stage-I violation > 0 on {:.0}% of {total} (>= {:.0}%)",
            100.0 * frac,
            100.0 * C9_MIN_FRACTION
        ),
    );
}
