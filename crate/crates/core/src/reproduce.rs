//! Data series for the reference experiments: four clients, `beta = 10`,
//! `delta = 10`, `nu ~ U[0.1, 0.5]`, unit communication time.
//!
//! Every row is produced by calling the public solvers directly.

use crate::admission::{self, AdmissionConfig, Boundary};
use crate::best_response::{best_response, RewardRate, DEFAULT_TOL};
use crate::cost::{client_cost, communication_expenditure, ClientProfile, CommMode};
use crate::error::Result;
use crate::report::{fmt_g, Table, Value};
use crate::scenario::{solve, ClientDistribution};
use crate::stackelberg::{Method, ServerConfig, SolverOptions};

pub const THETA_SWEEP: [f64; 5] = [0.2, 0.3, 0.4, 0.5, 0.6];
pub const TABLE_THETAS: [f64; 6] = [0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
pub const TABLE_AB: [(f64, f64); 3] = [(0.3, -1.0), (0.35, -1.0), (0.65, -1.0)];
pub const TABLE_GAMMA: (f64, f64) = (1.0, 5.0);
pub const FIG8_DELTAS: [f64; 4] = [6.0, 8.0, 10.0, 12.0];

pub fn reference_server() -> ServerConfig {
    ServerConfig { a: 0.3, b: 0.0, beta: 10.0, delta: 10.0, zeta: 1.0, theta_th: 0.2, budget: None }
}

/// Best responses of four seeded clients over `r in [0, 10]` with no
/// accuracy ceiling.
pub fn fig4(seed: u64) -> Result<Table> {
    let clients = ClientDistribution::reference().draw(seed)?;
    let mut cols = vec!["r".to_owned()];
    cols.extend(clients.iter().map(|c| format!("theta_{}", c.id)));
    let mut t = Table::new(cols);
    for i in 0..=100 {
        let r = RewardRate::new(i as f64 * 0.1)?;
        let mut row: Vec<Value> = vec![r.get().into()];
        for c in &clients {
            row.push(best_response(c, r, 1.0, DEFAULT_TOL)?.theta_star.into());
        }
        t.push(row);
    }
    Ok(t)
}

fn comparison(cfg: ServerConfig, clients: &[ClientProfile], methods: &[Method]) -> Result<Vec<(f64, f64)>> {
    let opts = SolverOptions::default();
    methods
        .iter()
        .map(|&m| solve(m, &cfg, clients, &opts).map(|r| (r.r_star.get(), r.server_utility)))
        .collect()
}

/// Reward and server utility of the three schemes over `theta_th`.
pub fn fig5(seed: u64) -> Result<Table> {
    let clients = ClientDistribution::reference().draw(seed)?;
    let methods = [Method::Baseline, Method::Alg2, Method::Opt];
    let mut t = Table::new(["theta_th", "r_baseline", "r_alg2", "r_opt", "u_baseline", "u_alg2", "u_opt"]);
    for th in THETA_SWEEP {
        let res = comparison(ServerConfig { theta_th: th, ..reference_server() }, &clients, &methods)?;
        let mut row: Vec<Value> = vec![th.into()];
        row.extend(res.iter().map(|p| Value::from(p.0)));
        row.extend(res.iter().map(|p| Value::from(p.1)));
        t.push(row);
    }
    Ok(t)
}

/// Same sweep with identical local solvers (`gamma = 1`) versus
/// `gamma ~ U[1, 5]`, for one seed.
pub fn fig6(seed: u64) -> Result<Table> {
    let fixed = ClientDistribution::reference().draw(seed)?;
    let random = ClientDistribution { gamma: TABLE_GAMMA, ..ClientDistribution::reference() }.draw(seed)?;
    let methods = [Method::Baseline, Method::Alg2];
    let mut t = Table::new([
        "theta_th",
        "r_baseline_gamma_fixed",
        "r_alg2_gamma_fixed",
        "u_alg2_gamma_fixed",
        "r_baseline_gamma_random",
        "r_alg2_gamma_random",
        "u_alg2_gamma_random",
    ]);
    for th in THETA_SWEEP {
        let cfg = ServerConfig { theta_th: th, ..reference_server() };
        let a = comparison(cfg, &fixed, &methods)?;
        let b = comparison(cfg, &random, &methods)?;
        t.push(vec![th.into(), a[0].0.into(), a[1].0.into(), a[1].1.into(), b[0].0.into(), b[1].0.into(), b[1].1.into()]);
    }
    Ok(t)
}

/// Response and communication expenditure over `(T, r)` for reluctant,
/// rational and sensitive clients (`nu = 0.1, 0.5, 0.7`).
pub fn fig7() -> Result<Table> {
    let mut t = Table::new(["nu", "comm_time", "r", "theta_star", "comm_expenditure", "cost"]);
    for nu in [0.1, 0.5, 0.7] {
        for i in 1..=10 {
            let comm = i as f64 * 0.1;
            let client = ClientProfile::new(0, nu, 1.0, comm);
            for j in 1..=10 {
                let r = RewardRate::new(j as f64 * 0.5)?;
                let theta = best_response(&client, r, 1.0, DEFAULT_TOL)?.theta_star;
                t.push(vec![
                    nu.into(),
                    comm.into(),
                    r.get().into(),
                    theta.into(),
                    communication_expenditure(comm, theta, CommMode::Approx)?.into(),
                    client_cost(&client, theta)?.into(),
                ]);
            }
        }
    }
    Ok(t)
}

fn boundary_name(b: Boundary) -> &'static str {
    match b {
        Boundary::Interior => "interior",
        Boundary::AtMin => "at_min",
        Boundary::AtMax => "at_max",
    }
}

/// Admission threshold for every `(K, delta)` pair, one row each.
pub fn admission_curve(base: &AdmissionConfig, ks: &[usize], deltas: &[f64]) -> Result<Table> {
    let mut t = Table::new(["K", "delta", "theta_star", "accepted_n", "boundary", "newton_iterations", "residual"]);
    for &delta in deltas {
        for &k in ks {
            let mut cfg = *base;
            cfg.k = k as f64;
            cfg.server.delta = delta;
            let r = admission::solve_threshold(&cfg, admission::DEFAULT_TOL, admission::DEFAULT_MAX_ITER)?;
            t.push(vec![
                k.into(),
                delta.into(),
                r.theta_star.into(),
                r.accepted_n.into(),
                boundary_name(r.boundary).into(),
                r.newton_iterations.into(),
                r.residual.into(),
            ]);
        }
    }
    Ok(t)
}

pub fn admission_base(a: f64, b: f64) -> AdmissionConfig {
    AdmissionConfig {
        k: 0.0,
        theta_min: 0.1,
        theta_max: 0.9,
        server: ServerConfig { a, b, ..reference_server() },
    }
}

/// Threshold versus `K = 0..=50` for several `delta`, one column per delta.
pub fn fig8(a: f64, b: f64) -> Result<Table> {
    let base = admission_base(a, b);
    let mut cols = vec!["K".to_owned()];
    cols.extend(FIG8_DELTAS.iter().map(|d| format!("theta_th_delta_{}", fmt_g(*d))));
    let mut t = Table::new(cols);
    for k in 0..=50usize {
        let mut row: Vec<Value> = vec![k.into()];
        for &delta in &FIG8_DELTAS {
            let cfg = AdmissionConfig { k: k as f64, server: ServerConfig { delta, ..base.server }, ..base };
            row.push(admission::solve_threshold(&cfg, admission::DEFAULT_TOL, admission::DEFAULT_MAX_ITER)?.theta_star.into());
        }
        t.push(row);
    }
    Ok(t)
}

fn ab_label(prefix: &str, (a, b): (f64, f64)) -> String {
    format!("{prefix}_a{}_b{}", fmt_g(a), fmt_g(b))
}

fn table_clients(seed: u64, gamma: (f64, f64)) -> Result<Vec<ClientProfile>> {
    ClientDistribution { gamma, ..ClientDistribution::reference() }.draw(seed)
}

/// Offered reward: baseline and Algorithm 2 per `(a, b)` over `theta_th`.
pub fn table_a(seed: u64, abs: &[(f64, f64)], gamma: (f64, f64)) -> Result<Table> {
    let clients = table_clients(seed, gamma)?;
    let mut cols = vec!["theta_th".to_owned(), "r_baseline".to_owned()];
    cols.extend(abs.iter().map(|&ab| ab_label("r_alg2", ab)));
    let mut t = Table::new(cols);
    let opts = SolverOptions::default();
    for th in TABLE_THETAS {
        let base_cfg = ServerConfig { theta_th: th, ..reference_server() };
        let base = solve(Method::Baseline, &base_cfg, &clients, &opts)?;
        let mut row: Vec<Value> = vec![th.into(), base.r_star.get().into()];
        for &(a, b) in abs {
            let cfg = ServerConfig { a, b, ..base_cfg };
            row.push(solve(Method::Alg2, &cfg, &clients, &opts)?.r_star.get().into());
        }
        t.push(row);
    }
    Ok(t)
}

/// Server utility of Algorithm 2 per `(a, b)` over `theta_th`.
pub fn table_b(seed: u64, abs: &[(f64, f64)], gamma: (f64, f64)) -> Result<Table> {
    let clients = table_clients(seed, gamma)?;
    let mut cols = vec!["theta_th".to_owned()];
    cols.extend(abs.iter().map(|&ab| ab_label("u_alg2", ab)));
    let mut t = Table::new(cols);
    let opts = SolverOptions::default();
    for th in TABLE_THETAS {
        let mut row: Vec<Value> = vec![th.into()];
        for &(a, b) in abs {
            let cfg = ServerConfig { a, b, theta_th: th, ..reference_server() };
            row.push(solve(Method::Alg2, &cfg, &clients, &opts)?.server_utility.into());
        }
        t.push(row);
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        assert_eq!(fig4(0).unwrap().columns.len(), 5);
        let f5 = fig5(0).unwrap();
        assert_eq!(f5.columns, ["theta_th", "r_baseline", "r_alg2", "r_opt", "u_baseline", "u_alg2", "u_opt"]);
        assert_eq!(f5.rows.len(), 5);
        assert_eq!(fig7().unwrap().rows.len(), 300);
        let ta = table_a(1, &TABLE_AB, TABLE_GAMMA).unwrap();
        assert_eq!(ta.columns[2], "r_alg2_a0.3_b-1");
        assert_eq!(ta.rows.len(), 6);
        assert_eq!(table_b(1, &TABLE_AB, TABLE_GAMMA).unwrap().columns.len(), 4);
        assert_eq!(fig8(0.35, -1.0).unwrap().rows.len(), 51);
    }

    #[test]
    fn fig5_rows_rederive() {
        let t = fig5(2).unwrap();
        let clients = ClientDistribution::reference().draw(2).unwrap();
        let cfg = ServerConfig { theta_th: 0.3, ..reference_server() };
        let r = solve(Method::Opt, &cfg, &clients, &SolverOptions::default()).unwrap();
        assert_eq!(t.rows[1][3].as_f64(), Some(r.r_star.get()));
    }

    #[test]
    fn deterministic_csv() {
        assert_eq!(fig6(5).unwrap().to_csv(), fig6(5).unwrap().to_csv());
    }
}
