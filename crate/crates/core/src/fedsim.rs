//! Federated ridge regression by dual decomposition.
//!
//! Samples are the columns `x_i` of a `d x D` matrix, split over `K`
//! clients. With quadratic loss `f_i(a) = (a - y_i)^2 / 2` the dual is
//! `G(a) = (1/D) sum_i (a_i y_i - a_i^2 / 2) - (lambda / 2) |X a / (lambda D)|^2`
//! and the primal model is `w(a) = phi(a) = X a / (lambda D)`.
//!
//! Each round every client approximately maximizes its local subproblem
//! by randomized coordinate ascent until a target relative accuracy
//! `theta` is met (measured exactly against a closed-form local solve),
//! then the server aggregates.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    #[default]
    Even,
    Uneven,
}

/// How local steps enter the global dual vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationMode {
    /// `alpha += rho`, `phi += (1/K) sum delta_phi`. For `K > 1` the shared
    /// vector drifts away from `X alpha / (lambda D)`.
    #[default]
    Averaged,
    /// `alpha += rho / K`, keeping `phi = X alpha / (lambda D)` exact.
    Consistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// `d x D`, one sample per column.
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Disjoint, non-empty index sets covering `0..D`.
    pub partition: Vec<Vec<usize>>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, partition: Vec<Vec<usize>>) -> Result<Self> {
        let n = x.ncols();
        if y.len() != n {
            return Err(domain(format!("{} labels for {n} samples", y.len())));
        }
        if partition.is_empty() || partition.iter().any(|p| p.is_empty()) {
            return Err(domain("every client needs at least one sample"));
        }
        let mut seen = vec![false; n];
        for &i in partition.iter().flatten() {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(domain(format!("partition index {i} out of range or repeated")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(domain("partition does not cover every sample"));
        }
        Ok(Self { x, y, partition })
    }

    pub fn samples(&self) -> usize {
        self.x.ncols()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn clients(&self) -> usize {
        self.partition.len()
    }
}

/// Gaussian features and weights, `y = X^T w_true + noise`.
///
/// Draw order: `X` column by column, then `w_true`, then the noise, then
/// (uneven mode) client weights and sample assignments, then the shuffle
/// that maps samples to clients.
pub fn make_synthetic(
    seed: u64,
    samples: usize,
    dim: usize,
    clients: usize,
    noise_sd: f64,
    mode: PartitionMode,
) -> Result<Dataset> {
    if clients == 0 || samples < clients {
        return Err(domain(format!("need samples >= clients >= 1, got D = {samples}, K = {clients}")));
    }
    if dim == 0 || noise_sd.is_nan() || noise_sd < 0.0 {
        return Err(domain("need d >= 1 and noise_sd >= 0"));
    }
    let mut rng = SeededRng::new(seed);
    let mut x = DMatrix::zeros(dim, samples);
    for j in 0..samples {
        for i in 0..dim {
            x[(i, j)] = rng.normal();
        }
    }
    let w_true = DVector::from_fn(dim, |_, _| rng.normal());
    let mut y = x.tr_mul(&w_true);
    for v in y.iter_mut() {
        *v += noise_sd * rng.normal();
    }
    let sizes = match mode {
        PartitionMode::Even => (0..clients).map(|k| samples / clients + usize::from(k < samples % clients)).collect(),
        PartitionMode::Uneven => {
            let weights: Vec<f64> = (0..clients).map(|_| rng.uniform_in(0.1, 1.0)).collect();
            let total: f64 = weights.iter().sum();
            let mut sizes = vec![1usize; clients];
            for _ in clients..samples {
                let mut u = rng.uniform() * total;
                let mut k = 0;
                while k + 1 < clients && u >= weights[k] {
                    u -= weights[k];
                    k += 1;
                }
                sizes[k] += 1;
            }
            sizes
        }
    };
    let mut order: Vec<usize> = (0..samples).collect();
    rng.shuffle(&mut order);
    let mut partition = Vec::with_capacity(clients);
    let mut start = 0;
    for s in sizes {
        let mut part = order[start..start + s].to_vec();
        part.sort_unstable();
        partition.push(part);
        start += s;
    }
    Dataset::new(x, y, partition)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub alpha: DVector<f64>,
    pub phi: DVector<f64>,
    pub round: usize,
    pub lambda: f64,
}

impl DualState {
    pub fn zeros(ds: &Dataset, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(Self {
            alpha: DVector::zeros(ds.samples()),
            phi: DVector::zeros(ds.dim()),
            round: 0,
            lambda,
        })
    }

    /// `phi` for the current dual vector, `X alpha / (lambda D)`.
    pub fn consistent_phi(&self, ds: &Dataset) -> DVector<f64> {
        &ds.x * &self.alpha / (self.lambda * ds.samples() as f64)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && lambda > 0.0 {
        Ok(())
    } else {
        Err(domain(format!("lambda must be > 0, got {lambda}")))
    }
}

pub fn dual_objective(ds: &Dataset, lambda: f64, alpha: &DVector<f64>) -> f64 {
    let n = ds.samples() as f64;
    let loss: f64 = alpha.iter().zip(ds.y.iter()).map(|(a, y)| a * y - 0.5 * a * a).sum();
    let w = &ds.x * alpha / (lambda * n);
    loss / n - 0.5 * lambda * w.norm_squared()
}

/// `(1/D) sum_i (x_i^T w - y_i)^2 / 2 + (lambda / 2) |w|^2`.
pub fn primal_objective(ds: &Dataset, lambda: f64, w: &DVector<f64>) -> f64 {
    let r = ds.x.tr_mul(w) - &ds.y;
    0.5 * r.norm_squared() / ds.samples() as f64 + 0.5 * lambda * w.norm_squared()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeOracle {
    pub w: DVector<f64>,
    pub alpha: DVector<f64>,
    pub dual_value: f64,
}

/// `w* = (X X^T / D + lambda I)^-1 X y / D`, `alpha*_i = y_i - x_i^T w*`.
pub fn ridge_oracle(ds: &Dataset, lambda: f64) -> Result<RidgeOracle> {
    check_lambda(lambda)?;
    let n = ds.samples() as f64;
    let a = &ds.x * ds.x.transpose() / n + DMatrix::identity(ds.dim(), ds.dim()) * lambda;
    let chol = a.cholesky().ok_or_else(|| Error::Domain("ridge system is not positive definite".into()))?;
    let w = chol.solve(&(&ds.x * &ds.y / n));
    let alpha = &ds.y - ds.x.tr_mul(&w);
    let dual_value = dual_objective(ds, lambda, &alpha);
    Ok(RidgeOracle { w, alpha, dual_value })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub client: usize,
    /// Length `D`, zero outside the client's samples.
    pub rho: DVector<f64>,
    /// `X_k rho / (lambda D)`.
    pub delta_phi: DVector<f64>,
    /// `(G_k* - G_k(rho)) / (G_k* - G_k(0))`, in `[0, 1]`.
    pub measured_theta: f64,
    /// Coordinate steps taken.
    pub steps: usize,
}

/// Per-client data and the factored local system.
struct LocalProblem {
    idx: Vec<usize>,
    /// `d x D_k`.
    xk: DMatrix<f64>,
    col_sq: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl LocalProblem {
    fn new(ds: &Dataset, k: usize, lambda: f64) -> Result<Self> {
        let idx = ds.partition.get(k).ok_or_else(|| domain(format!("no client {k}")))?.clone();
        let xk = ds.x.select_columns(&idx);
        let scale = lambda * ds.samples() as f64;
        let m = DMatrix::identity(idx.len(), idx.len()) + xk.tr_mul(&xk) / scale;
        let chol = m.cholesky().ok_or_else(|| Error::Domain("local system is not positive definite".into()))?;
        let col_sq = (0..idx.len()).map(|j| xk.column(j).norm_squared()).collect();
        Ok(Self { idx, xk, col_sq, chol })
    }
}

/// Incremental evaluation of
/// `G_k(rho) = -1/K + (1/D) [sum_i (a_i y_i - a_i^2/2) - phi^T v - |v|^2 / (2 lambda D)]`
/// with `a = alpha + rho`, `v = X_k rho`.
struct Ascent<'a> {
    p: &'a LocalProblem,
    y: Vec<f64>,
    phi_dot: Vec<f64>,
    base: Vec<f64>,
    rho: Vec<f64>,
    v: DVector<f64>,
    loss: f64,
    phi_v: f64,
    v_sq: f64,
    n: f64,
    scale: f64,
    offset: f64,
}

impl<'a> Ascent<'a> {
    fn new(ds: &Dataset, state: &DualState, p: &'a LocalProblem) -> Self {
        let y: Vec<f64> = p.idx.iter().map(|&i| ds.y[i]).collect();
        let base: Vec<f64> = p.idx.iter().map(|&i| state.alpha[i]).collect();
        let phi_dot = (0..p.idx.len()).map(|j| p.xk.column(j).dot(&state.phi)).collect();
        let loss = base.iter().zip(&y).map(|(a, y)| a * y - 0.5 * a * a).sum();
        Self {
            p,
            y,
            phi_dot,
            rho: vec![0.0; base.len()],
            base,
            v: DVector::zeros(ds.dim()),
            loss,
            phi_v: 0.0,
            v_sq: 0.0,
            n: ds.samples() as f64,
            scale: state.lambda * ds.samples() as f64,
            offset: -1.0 / ds.clients() as f64,
        }
    }

    fn value(&self) -> f64 {
        self.offset + (self.loss - self.phi_v - 0.5 * self.v_sq / self.scale) / self.n
    }

    fn value_at(&self, rho: &DVector<f64>) -> f64 {
        let v = &self.p.xk * rho;
        let loss: f64 = (0..rho.len())
            .map(|j| {
                let a = self.base[j] + rho[j];
                a * self.y[j] - 0.5 * a * a
            })
            .sum();
        let phi_v: f64 = (0..rho.len()).map(|j| rho[j] * self.phi_dot[j]).sum();
        self.offset + (loss - phi_v - 0.5 * v.norm_squared() / self.scale) / self.n
    }

    /// Exact maximizer: `(I + X_k^T X_k / (lambda D)) rho = y_k - alpha_k - X_k^T phi`.
    fn optimum(&self) -> f64 {
        let rhs = DVector::from_fn(self.rho.len(), |j, _| self.y[j] - self.base[j] - self.phi_dot[j]);
        self.value_at(&self.p.chol.solve(&rhs))
    }

    fn step(&mut self, j: usize) {
        let a = self.base[j] + self.rho[j];
        let col = self.p.xk.column(j);
        let xv = col.dot(&self.v);
        let delta = (self.y[j] - a - self.phi_dot[j] - xv / self.scale) / (1.0 + self.p.col_sq[j] / self.scale);
        if delta == 0.0 {
            return;
        }
        let a_new = a + delta;
        self.loss += (a_new * self.y[j] - 0.5 * a_new * a_new) - (a * self.y[j] - 0.5 * a * a);
        self.phi_v += delta * self.phi_dot[j];
        self.v_sq += 2.0 * delta * xv + delta * delta * self.p.col_sq[j];
        self.v.axpy(delta, &col, 1.0);
        self.rho[j] += delta;
    }

    /// Runs randomized passes. With a target, stops at the first step whose
    /// measured accuracy reaches it.
    fn run(&mut self, max_passes: usize, target: Option<f64>, rng: &mut SeededRng) -> (f64, usize) {
        let g0 = self.value();
        let g_star = self.optimum();
        let span = g_star - g0;
        let theta = |v: f64| if span > 0.0 { ((g_star - v) / span).clamp(0.0, 1.0) } else { 0.0 };
        let mut steps = 0;
        if let Some(t) = target {
            if theta(g0) <= t {
                return (theta(g0), 0);
            }
        }
        let mut order: Vec<usize> = (0..self.rho.len()).collect();
        for _ in 0..max_passes {
            rng.shuffle(&mut order);
            for &j in &order {
                self.step(j);
                steps += 1;
                if let Some(t) = target {
                    let th = theta(self.value());
                    if th <= t {
                        return (th, steps);
                    }
                }
            }
        }
        (theta(self.value()), steps)
    }

    fn finish(self, ds: &Dataset, client: usize, theta: f64, steps: usize) -> LocalUpdate {
        let mut rho = DVector::zeros(ds.samples());
        for (j, &i) in self.p.idx.iter().enumerate() {
            rho[i] = self.rho[j];
        }
        LocalUpdate { client, rho, delta_phi: self.v / self.scale, measured_theta: theta, steps }
    }
}

/// Local subproblem value `G_k(rho)` for a full-length `rho` (entries
/// outside client `k` are ignored).
pub fn local_objective(ds: &Dataset, state: &DualState, k: usize, rho: &DVector<f64>) -> Result<f64> {
    let p = LocalProblem::new(ds, k, state.lambda)?;
    let asc = Ascent::new(ds, state, &p);
    let local = DVector::from_fn(p.idx.len(), |j, _| rho[p.idx[j]]);
    Ok(asc.value_at(&local))
}

/// `passes` epochs of randomized exact coordinate ascent.
pub fn local_solve(ds: &Dataset, state: &DualState, k: usize, passes: usize, seed: u64) -> Result<LocalUpdate> {
    if passes == 0 {
        return Err(domain("passes must be >= 1"));
    }
    let p = LocalProblem::new(ds, k, state.lambda)?;
    let mut asc = Ascent::new(ds, state, &p);
    let (theta, steps) = asc.run(passes, None, &mut SeededRng::new(seed));
    Ok(asc.finish(ds, k, theta, steps))
}

/// Coordinate ascent until the measured accuracy is at most `theta_target`
/// or `max_passes` epochs are spent.
pub fn local_solve_to_accuracy(
    ds: &Dataset,
    state: &DualState,
    k: usize,
    theta_target: f64,
    max_passes: usize,
    seed: u64,
) -> Result<LocalUpdate> {
    let p = LocalProblem::new(ds, k, state.lambda)?;
    calibrated(ds, state, k, &p, theta_target, max_passes, seed)
}

fn calibrated(
    ds: &Dataset,
    state: &DualState,
    k: usize,
    p: &LocalProblem,
    theta_target: f64,
    max_passes: usize,
    seed: u64,
) -> Result<LocalUpdate> {
    if !(0.0..=1.0).contains(&theta_target) {
        return Err(domain(format!("theta target must be in [0, 1], got {theta_target}")));
    }
    let mut asc = Ascent::new(ds, state, p);
    let (theta, steps) = asc.run(max_passes, Some(theta_target), &mut SeededRng::new(seed));
    Ok(asc.finish(ds, k, theta, steps))
}

/// Applies one update per client in client-index order.
pub fn aggregate(state: &DualState, updates: &[LocalUpdate], mode: AggregationMode) -> Result<DualState> {
    let k = updates.len().max(1) as f64;
    let mut seen = std::collections::BTreeSet::new();
    let mut sorted: Vec<&LocalUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client);
    let mut next = state.clone();
    for u in sorted {
        if !seen.insert(u.client) {
            return Err(Error::DuplicateUpdate(u.client));
        }
        match mode {
            AggregationMode::Averaged => next.alpha += &u.rho,
            AggregationMode::Consistent => next.alpha.axpy(1.0 / k, &u.rho, 1.0),
        }
        next.phi.axpy(1.0 / k, &u.delta_phi, 1.0);
    }
    next.round += 1;
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FedConfig {
    pub lambda: f64,
    pub theta_target: f64,
    /// Stop once `(G* - G(alpha)) / (G* - G(0)) <= epsilon_target`.
    pub epsilon_target: f64,
    pub max_rounds: usize,
    #[serde(default)]
    pub mode: AggregationMode,
    #[serde(default)]
    pub seed: u64,
    /// Epoch cap for one client's local solve.
    #[serde(default = "default_passes")]
    pub max_local_passes: usize,
    /// Simulated upload/download time per round.
    #[serde(default = "default_comm_ms")]
    pub comm_ms: f64,
    /// Simulated compute time of one local epoch.
    #[serde(default = "default_pass_ms")]
    pub pass_ms: f64,
}

fn default_passes() -> usize {
    1000
}
fn default_comm_ms() -> f64 {
    10.0
}
fn default_pass_ms() -> f64 {
    1.0
}

impl Default for FedConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            theta_target: 0.5,
            epsilon_target: 1e-6,
            max_rounds: 10_000,
            mode: AggregationMode::Averaged,
            seed: 0,
            max_local_passes: default_passes(),
            comm_ms: default_comm_ms(),
            pass_ms: default_pass_ms(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Relative dual suboptimality after the round.
    pub gap: f64,
    /// Worst measured local accuracy in the round.
    pub max_theta: f64,
    /// Simulated elapsed time: per round, communication plus the slowest
    /// client's local epochs. Deterministic, not a real clock.
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<RoundRecord>,
    pub converged: bool,
    pub state: DualState,
    pub oracle: RidgeOracle,
}

impl Trace {
    pub fn rounds(&self) -> usize {
        self.records.len()
    }

    pub fn final_gap(&self) -> f64 {
        self.records.last().map_or(1.0, |r| r.gap)
    }

    /// Model `X alpha / (lambda D)` of the final dual vector.
    pub fn model(&self, ds: &Dataset) -> DVector<f64> {
        self.state.consistent_phi(ds)
    }
}

/// Runs rounds of local solves and aggregation until the relative dual gap
/// is within `epsilon_target` or `max_rounds` is reached.
pub fn run_federated(ds: &Dataset, cfg: &FedConfig) -> Result<Trace> {
    check_lambda(cfg.lambda)?;
    if !(cfg.theta_target > 0.0 && cfg.theta_target < 1.0) {
        return Err(domain(format!("theta target must be in (0, 1), got {}", cfg.theta_target)));
    }
    if !(cfg.epsilon_target > 0.0 && cfg.epsilon_target < 1.0) {
        return Err(domain(format!("epsilon target must be in (0, 1), got {}", cfg.epsilon_target)));
    }
    let oracle = ridge_oracle(ds, cfg.lambda)?;
    let problems = (0..ds.clients()).map(|k| LocalProblem::new(ds, k, cfg.lambda)).collect::<Result<Vec<_>>>()?;
    let g0 = 0.0;
    let span = oracle.dual_value - g0;
    let rel_gap = |alpha: &DVector<f64>| {
        if span > 0.0 {
            (oracle.dual_value - dual_objective(ds, cfg.lambda, alpha)) / span
        } else {
            0.0
        }
    };

    let mut state = DualState::zeros(ds, cfg.lambda)?;
    let mut records = Vec::new();
    let mut wall = 0.0;
    let mut converged = false;
    for round in 1..=cfg.max_rounds {
        let mut updates = Vec::with_capacity(problems.len());
        let mut slowest = 0.0f64;
        for (k, p) in problems.iter().enumerate() {
            let seed = SeededRng::derived(cfg.seed, round as u64, k as u64).next_u64();
            let u = calibrated(ds, &state, k, p, cfg.theta_target, cfg.max_local_passes, seed)?;
            slowest = slowest.max(u.steps as f64 / p.idx.len() as f64);
            updates.push(u);
        }
        let max_theta = updates.iter().map(|u| u.measured_theta).fold(0.0, f64::max);
        state = aggregate(&state, &updates, cfg.mode)?;
        wall += cfg.comm_ms + cfg.pass_ms * slowest;
        let gap = rel_gap(&state.alpha);
        if !gap.is_finite() {
            return Err(Error::Divergence(format!("dual gap became {gap} in round {round}")));
        }
        records.push(RoundRecord { round, gap, max_theta, wall_ms: wall });
        if gap <= cfg.epsilon_target {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("fedsim: no convergence within {} rounds", cfg.max_rounds);
    }
    Ok(Trace { records, converged, state, oracle })
}
