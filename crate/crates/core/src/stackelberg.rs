//! Stage-I: the server picks the uniform reward rate that maximizes
//! `beta (1 - 10^-(a x* + b)) - r sum_{k: z_k = 1} (1 - theta*_k(r))` with
//! `x* = delta (1 - max_{k: z_k = 1} theta*_k(r))`.
//!
//! A client participates (`z_k = 1`) iff `r > r_hat_k`, so as `r` grows the
//! participant set is a prefix of the clients sorted by `r_hat`. Between two
//! consecutive thresholds the objective is continuous in `r`; at each
//! threshold a new client joins with accuracy close to `theta_th`, which
//! makes the objective jump. All solvers below optimize one such piece (or
//! a union of pieces with a fixed active set) at a time.

use serde::{Deserialize, Serialize};

use crate::best_response::{BestResponse, ResponseModel, RewardRate};
use crate::cost::ClientProfile;
use crate::error::{domain, Error, Result};
use crate::numeric::grid_golden_max;

/// `r > r_hat` realized as `r >= r_hat + STRICT_MARGIN`.
pub const STRICT_MARGIN: f64 = 1e-9;

/// Exhaustive search refuses larger instances.
pub const MAX_EXHAUSTIVE_CLIENTS: usize = 20;

/// Server-side parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    pub a: f64,
    pub b: f64,
    pub beta: f64,
    /// Upper bound on global iterations.
    pub delta: f64,
    #[serde(default = "one")]
    pub zeta: f64,
    pub theta_th: f64,
    #[serde(default)]
    pub budget: Option<f64>,
}

fn one() -> f64 {
    1.0
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self { a: 0.3, b: 0.0, beta: 10.0, delta: 10.0, zeta: 1.0, theta_th: 0.2, budget: None }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a.is_finite()
            && self.a >= 0.0
            && self.b.is_finite()
            && self.b <= 0.0
            && self.beta.is_finite()
            && self.beta > 0.0
            && self.delta.is_finite()
            && self.delta > 0.0
            && self.zeta.is_finite()
            && self.zeta > 0.0;
        if !ok {
            return Err(domain(format!(
                "server config requires a >= 0, b <= 0, beta > 0, delta > 0, zeta > 0; got {self:?}"
            )));
        }
        if !(self.theta_th > 0.0 && self.theta_th <= 1.0) {
            return Err(domain(format!("theta_th must be in (0, 1], got {}", self.theta_th)));
        }
        if let Some(b) = self.budget {
            if !(b.is_finite() && b >= 0.0) {
                return Err(domain(format!("budget must be >= 0, got {b}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Opt,
    Alg2,
    Baseline,
    Budget,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Opt => "opt",
            Method::Alg2 => "alg2",
            Method::Baseline => "baseline",
            Method::Budget => "budget",
        })
    }
}

/// Lower end of Algorithm 2's per-candidate search interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alg2LowerBound {
    /// `r > r_hat_1` for every active set.
    #[default]
    First,
    /// `r > r_hat_j`, the marginal client of the active set.
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Grid points per 1-D maximization before golden-section refinement.
    pub grid_points: usize,
    /// Residual tolerance of the best-response root finder.
    pub tol: f64,
    pub alg2_lower: Alg2LowerBound,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { grid_points: 2000, tol: crate::best_response::DEFAULT_TOL, alg2_lower: Alg2LowerBound::First }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub method: Method,
    pub r_star: RewardRate,
    pub responses: Vec<BestResponse>,
    pub x_star: f64,
    pub server_utility: f64,
    pub participants: Vec<usize>,
    /// Algorithm 2 found no admissible candidate and returned the baseline.
    #[serde(default)]
    pub fallback: bool,
}

/// `U(x) = 1 - 10^-(a x + b)`. Negative for `a x + b < 0`.
pub fn server_satisfaction(cfg: &ServerConfig, x: f64) -> Result<f64> {
    if !(x.is_finite() && x >= 0.0) {
        return Err(domain(format!("iteration count must be >= 0, got {x}")));
    }
    Ok(satisfaction(cfg, x))
}

#[inline]
fn satisfaction(cfg: &ServerConfig, x: f64) -> f64 {
    1.0 - 10f64.powf(-(cfg.a * x + cfg.b))
}

/// Optimal iteration budget `delta (1 - theta_worst)`.
pub fn optimal_x(cfg: &ServerConfig, theta_worst: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&theta_worst) {
        return Err(domain(format!("theta must be in [0, 1], got {theta_worst}")));
    }
    Ok(cfg.delta * (1.0 - theta_worst))
}

/// Primal-dual point of `max_x beta U(x)` s.t. `x <= delta (1 - theta_worst)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktPoint {
    pub x: f64,
    /// Multiplier of the iteration-bound constraint.
    pub multiplier: f64,
}

/// KKT solution of the iteration-budget subproblem. With `a > 0` the
/// objective is strictly increasing, so the constraint is active and the
/// multiplier equals `dU/dx` at the bound: `beta a ln(10) 10^-(a x + b)`.
pub fn kkt_iteration_budget(cfg: &ServerConfig, theta_worst: f64) -> Result<KktPoint> {
    let x = optimal_x(cfg, theta_worst)?;
    let multiplier = cfg.beta * cfg.a * std::f64::consts::LN_10 * 10f64.powf(-(cfg.a * x + cfg.b));
    Ok(KktPoint { x, multiplier })
}

/// Server utility for responses evaluated at reward `r`. Only clients with
/// `z_k = 1` are paid and enter the worst-case accuracy. Returns
/// `f64::NEG_INFINITY` when nobody participates.
pub fn server_utility(cfg: &ServerConfig, r: RewardRate, responses: &[BestResponse]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    let mut improvement = 0.0;
    for br in responses.iter().filter(|b| b.participates) {
        worst = worst.max(br.theta_star);
        improvement += 1.0 - br.theta_star;
    }
    if worst == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    cfg.beta * satisfaction(cfg, cfg.delta * (1.0 - worst)) - r.get() * improvement
}

/// Shared state of the Stage-I solvers for one instance.
pub(crate) struct Game<'a> {
    cfg: &'a ServerConfig,
    opts: &'a SolverOptions,
    models: Vec<ResponseModel>,
    h_th: f64,
    r_hats: Vec<f64>,
}

impl<'a> Game<'a> {
    pub fn new(cfg: &'a ServerConfig, opts: &'a SolverOptions, profiles: &[ClientProfile]) -> Result<Self> {
        cfg.validate()?;
        let models = profiles.iter().map(ResponseModel::new).collect::<Result<Vec<_>>>()?;
        let h_th = crate::best_response::h_of_theta(cfg.theta_th)?;
        let r_hats = models.iter().map(|m| m.r_hat(h_th)).collect();
        Ok(Self { cfg, opts, models, h_th, r_hats })
    }

    pub fn r_hats(&self) -> &[f64] {
        &self.r_hats
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    fn clamped(&self, k: usize, r: f64) -> f64 {
        // unclamped() only fails for pathological g beyond the floor
        self.models[k].unclamped(r, self.opts.tol).unwrap_or(1.0).min(self.cfg.theta_th)
    }

    /// Objective with a fixed active set: every member is paid and enters
    /// the worst case with its clamped response.
    pub fn set_utility(&self, r: f64, members: &[usize]) -> f64 {
        if members.is_empty() {
            return f64::NEG_INFINITY;
        }
        let mut worst = 0.0f64;
        let mut improvement = 0.0;
        for &k in members {
            let t = self.clamped(k, r);
            worst = worst.max(t);
            improvement += 1.0 - t;
        }
        self.cfg.beta * satisfaction(self.cfg, self.cfg.delta * (1.0 - worst)) - r * improvement
    }

    /// Payment `r sum (1 - theta)` of a fixed active set.
    pub fn set_spend(&self, r: f64, members: &[usize]) -> f64 {
        r * members.iter().map(|&k| 1.0 - self.clamped(k, r)).sum::<f64>()
    }

    pub fn responses(&self, r: f64) -> Result<Vec<BestResponse>> {
        self.models.iter().map(|m| m.respond(r, self.cfg.theta_th, self.h_th, self.opts.tol)).collect()
    }

    /// Server utility with participation decided by each client's threshold.
    pub fn true_utility(&self, r: f64) -> f64 {
        let members: Vec<usize> = (0..self.len()).filter(|&k| r > self.r_hats[k]).collect();
        self.set_utility(r, &members)
    }

    /// Upper end of the search range. Past this point the payment to the
    /// full participant set exceeds any attainable satisfaction gain.
    pub fn r_cap(&self) -> f64 {
        let k = self.len().max(1) as f64;
        let max_hat = self.r_hats.iter().copied().fold(0.0, f64::max);
        let r_lo = max_hat + STRICT_MARGIN;
        let slack = 10f64.powf(-(self.cfg.a * self.cfg.delta * (1.0 - self.cfg.theta_th) + self.cfg.b));
        let dominated = (self.cfg.beta * slack + k * r_lo) / (k * (1.0 - self.cfg.theta_th).max(1e-3));
        (2.0 * max_hat).max(dominated).max(r_lo + 1.0)
    }

    fn maximize(&self, lo: f64, hi: f64, members: &[usize]) -> (f64, f64) {
        let m = grid_golden_max(|r| self.set_utility(r, members), lo, hi, self.opts.grid_points);
        (m.x, m.value)
    }

    pub fn result(&self, method: Method, r: f64) -> Result<EquilibriumResult> {
        let responses = self.responses(r)?;
        let r_star = RewardRate::new(r)?;
        let utility = server_utility(self.cfg, r_star, &responses);
        let participants: Vec<usize> =
            responses.iter().enumerate().filter(|(_, b)| b.participates).map(|(i, _)| i).collect();
        let worst = participants.iter().map(|&i| responses[i].theta_star).fold(f64::NAN, f64::max);
        let x_star = if worst.is_nan() { 0.0 } else { optimal_x(self.cfg, worst)? };
        Ok(EquilibriumResult {
            method,
            r_star,
            responses,
            x_star,
            server_utility: utility,
            participants,
            fallback: false,
        })
    }

    fn sorted_by_r_hat(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&i, &j| self.r_hats[i].total_cmp(&self.r_hats[j]).then(i.cmp(&j)));
        order
    }
}

fn better(candidate: (f64, f64), best: Option<(f64, f64)>) -> bool {
    match best {
        None => candidate.1 > f64::NEG_INFINITY,
        Some((r, u)) => candidate.1 > u || (candidate.1 == u && candidate.0 < r),
    }
}

/// Exhaustive search over all `2^K` participation vectors. For each vector
/// the feasible rewards are `r > r_hat_k` for members and `r <= r_hat_k`
/// for the others; the objective is maximized on that interval.
pub fn solve_opt(cfg: &ServerConfig, profiles: &[ClientProfile], opts: &SolverOptions) -> Result<EquilibriumResult> {
    if profiles.len() > MAX_EXHAUSTIVE_CLIENTS {
        return Err(Error::TooManyClients { clients: profiles.len(), limit: MAX_EXHAUSTIVE_CLIENTS });
    }
    let game = Game::new(cfg, opts, profiles)?;
    let k = game.len();
    let r_hats = game.r_hats();
    let cap = game.r_cap();
    let mut best: Option<(f64, f64)> = None;
    for mask in 1u32..(1u32 << k) {
        let mut lo = 0.0f64;
        let mut hi = cap;
        for (i, &rh) in r_hats.iter().enumerate() {
            if mask & (1 << i) != 0 {
                lo = lo.max(rh + STRICT_MARGIN);
            } else {
                hi = hi.min(rh);
            }
        }
        if lo > hi {
            continue;
        }
        let members: Vec<usize> = (0..k).filter(|i| mask & (1 << i) != 0).collect();
        let cand = game.maximize(lo, hi, &members);
        if better(cand, best) {
            best = Some(cand);
        }
    }
    match best {
        Some((r, _)) => game.result(Method::Opt, r),
        // K = 0 or nothing feasible: report the no-participation sentinel
        None => game.result(Method::Opt, 0.0),
    }
}

/// Algorithm 2: sort by threshold price, then for active sets
/// `{1..K}, {1..K-1}, ..., {1}` solve the 1-D problem and keep candidates
/// whose reward admits the marginal client.
///
/// The search for active set `{1..j}` is capped at `r_hat_{j+1}` so that no
/// client outside the set crosses its threshold; the candidate's objective
/// then equals the true server utility.
pub fn solve_alg2(cfg: &ServerConfig, profiles: &[ClientProfile], opts: &SolverOptions) -> Result<EquilibriumResult> {
    if profiles.is_empty() {
        return Err(domain("alg2 needs at least one client"));
    }
    let game = Game::new(cfg, opts, profiles)?;
    let order = game.sorted_by_r_hat();
    let r_hats = game.r_hats();
    let cap = game.r_cap();
    let first = r_hats[order[0]];
    let mut best: Option<(f64, f64)> = None;
    for j in (1..=order.len()).rev() {
        let active = &order[..j];
        let marginal = r_hats[order[j - 1]];
        let lo = match opts.alg2_lower {
            Alg2LowerBound::First => first,
            Alg2LowerBound::Marginal => marginal,
        } + STRICT_MARGIN;
        let hi = if j < order.len() { r_hats[order[j]] } else { cap };
        if lo > hi {
            continue;
        }
        let (r_j, _) = game.maximize(lo, hi, active);
        if r_j > marginal {
            let u = game.true_utility(r_j);
            if better((r_j, u), best) {
                best = Some((r_j, u));
            }
        }
    }
    match best {
        Some((r, _)) => game.result(Method::Alg2, r),
        None => {
            log::warn!("alg2: no admissible candidate, falling back to baseline pricing");
            let mut res = solve_baseline(cfg, profiles, opts)?;
            res.fallback = true;
            Ok(res)
        }
    }
}

/// Prices every client to the threshold: `r = max_k r_hat_k` (plus the
/// strict-inequality margin), paying for the worst case.
pub fn solve_baseline(cfg: &ServerConfig, profiles: &[ClientProfile], opts: &SolverOptions) -> Result<EquilibriumResult> {
    if profiles.is_empty() {
        return Err(domain("baseline needs at least one client"));
    }
    let game = Game::new(cfg, opts, profiles)?;
    let r = game.r_hats().iter().copied().fold(0.0, f64::max) + STRICT_MARGIN;
    game.result(Method::Baseline, r)
}

/// Budget-constrained variant with every client's `z_k` fixed to 1:
/// maximize the server utility over `r` subject to
/// `r sum_k (1 - theta*_k(r)) <= B`. The spend is non-decreasing in `r`,
/// so the feasible set is `[0, r_B]`.
pub fn solve_budget(cfg: &ServerConfig, profiles: &[ClientProfile], opts: &SolverOptions) -> Result<EquilibriumResult> {
    let budget = cfg.budget.ok_or_else(|| domain("budget solver needs `budget`"))?;
    if profiles.is_empty() {
        return Err(domain("budget solver needs at least one client"));
    }
    let game = Game::new(cfg, opts, profiles)?;
    let all: Vec<usize> = (0..game.len()).collect();
    let cap = game.r_cap();
    let r_budget = budget_limit(&game, &all, budget, cap);
    let (r, _) = if r_budget > 0.0 { game.maximize(0.0, r_budget, &all) } else { (0.0, 0.0) };
    let mut res = game.result(Method::Budget, r)?;
    let worst = res.responses.iter().map(|b| b.theta_star).fold(0.0, f64::max);
    res.x_star = optimal_x(cfg, worst)?;
    res.server_utility = game.set_utility(r, &all);
    res.participants = all;
    Ok(res)
}

/// Largest `r <= cap` whose spend stays within `budget`.
fn budget_limit(game: &Game<'_>, members: &[usize], budget: f64, cap: f64) -> f64 {
    if game.set_spend(cap, members) <= budget {
        return cap;
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if game.set_spend(mid, members) <= budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    lo
}

/// Payment `r sum_k (1 - theta*_k(r))` with every client participating.
pub fn total_spend(cfg: &ServerConfig, profiles: &[ClientProfile], r: RewardRate, opts: &SolverOptions) -> Result<f64> {
    let game = Game::new(cfg, opts, profiles)?;
    let all: Vec<usize> = (0..game.len()).collect();
    Ok(game.set_spend(r.get(), &all))
}

/// Equilibrium check: how much either stage could gain by deviating.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumReport {
    /// `max_r U(r) - U(r*)` over the grid, floored at 0.
    pub stage1_violation: f64,
    /// Grid reward attaining the Stage-I maximum.
    pub stage1_best_r: f64,
    /// Largest per-participant gain `max_theta u_k(r*, theta) - u_k(r*, theta*)`.
    pub stage2_violation: f64,
    pub stage2_per_client: Vec<Option<f64>>,
}

/// Grid tolerance used when judging a report.
pub const EQUILIBRIUM_TOL: f64 = 1e-7;

impl EquilibriumReport {
    pub fn is_equilibrium(&self, tol: f64) -> bool {
        self.stage1_violation <= tol && self.stage2_violation <= tol
    }
}

/// Checks the Stackelberg conditions on grids: no reward on a
/// `grid_resolution`-point grid over `[0, r_cap]` beats `r*` given the
/// clients' best responses, and no participating client gains by moving
/// to another accuracy on a `grid_resolution`-point grid over `(0, 1]`.
/// Non-participants are dropped by the server and are not checked.
pub fn verify_equilibrium(
    cfg: &ServerConfig,
    profiles: &[ClientProfile],
    result: &EquilibriumResult,
    grid_resolution: usize,
    opts: &SolverOptions,
) -> Result<EquilibriumReport> {
    let game = Game::new(cfg, opts, profiles)?;
    let n = grid_resolution.max(2);
    let r_star = result.r_star.get();
    let u_star = game.true_utility(r_star);
    let cap = game.r_cap().max(r_star);
    let mut best = (r_star, u_star);
    for i in 0..n {
        let r = cap * i as f64 / (n - 1) as f64;
        let u = game.true_utility(r);
        if u > best.1 {
            best = (r, u);
        }
    }
    let stage1 = if u_star == f64::NEG_INFINITY && best.1 == f64::NEG_INFINITY {
        0.0
    } else {
        (best.1 - u_star).max(0.0)
    };

    let responses = game.responses(r_star)?;
    let mut per_client = Vec::with_capacity(responses.len());
    let mut stage2 = 0.0f64;
    for (k, br) in responses.iter().enumerate() {
        if !br.participates {
            per_client.push(None);
            continue;
        }
        let model = &game.models[k];
        let u_star = model.utility(r_star, br.theta_star);
        let gain = (1..=n)
            .map(|i| model.utility(r_star, i as f64 / n as f64) - u_star)
            .fold(0.0, f64::max);
        stage2 = stage2.max(gain);
        per_client.push(Some(gain));
    }
    Ok(EquilibriumReport {
        stage1_violation: stage1,
        stage1_best_r: best.0,
        stage2_violation: stage2,
        stage2_per_client: per_client,
    })
}
