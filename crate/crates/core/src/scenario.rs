//! Scenario files and seeded client populations.
//!
//! A scenario is a TOML file of flat `key = value` pairs under four
//! sections; unknown keys are rejected.
//!
//! ```toml
//! [scenario]
//! name = "four-clients"
//! seed = 7
//! solver = "all"          # opt | alg2 | baseline | budget | all
//!
//! [server]
//! a = 0.3
//! b = 0.0
//! beta = 10.0
//! delta = 10.0
//! theta_th = 0.2
//!
//! [clients]               # either a distribution ...
//! count = 4
//! nu_lo = 0.1
//! nu_hi = 0.5
//! # ... or explicit lists: nu = [..], gamma = [..], comm_time = [..]
//!
//! [sweep]                 # optional
//! parameter = "theta_th"
//! start = 0.2
//! stop = 0.6
//! step = 0.1
//! ```

use serde::Deserialize;

use crate::cost::ClientProfile;
use crate::error::{Error, Result};
use crate::report::{Table, Value};
use crate::rng::SeededRng;
use crate::stackelberg::{self, Method, ServerConfig, SolverOptions};

/// `count` clients with `nu`, `gamma` and `comm_time` drawn uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClientDistribution {
    pub count: usize,
    pub nu: (f64, f64),
    pub gamma: (f64, f64),
    pub comm_time: (f64, f64),
}

impl ClientDistribution {
    /// Four clients with `nu ~ U[0.1, 0.5]`, `gamma = 1`, `T = 1`.
    pub fn reference() -> Self {
        Self { count: 4, nu: (0.1, 0.5), gamma: (1.0, 1.0), comm_time: (1.0, 1.0) }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64), legal: &dyn Fn(f64) -> bool| {
            if lo.is_finite() && hi.is_finite() && lo <= hi && legal(lo) && legal(hi) {
                Ok(())
            } else {
                Err(Error::Config(format!("clients.{name}: invalid range [{lo}, {hi}]")))
            }
        };
        check("nu", self.nu, &|v| (0.0..1.0).contains(&v))?;
        check("gamma", self.gamma, &|v| v > 0.0)?;
        check("comm_time", self.comm_time, &|v| v > 0.0)
    }

    /// Draws three uniforms per client, in the order `nu`, `gamma`,
    /// `comm_time`, from `SeededRng::new(seed)`. Degenerate ranges still
    /// consume their draw so populations stay aligned across settings.
    pub fn draw(&self, seed: u64) -> Result<Vec<ClientProfile>> {
        self.validate()?;
        let mut rng = SeededRng::new(seed);
        Ok((0..self.count)
            .map(|id| {
                let nu = rng.uniform_in(self.nu.0, self.nu.1);
                let gamma = rng.uniform_in(self.gamma.0, self.gamma.1);
                let t = rng.uniform_in(self.comm_time.0, self.comm_time.1);
                ClientProfile::new(id, nu, gamma, t)
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    Opt,
    Alg2,
    Baseline,
    Budget,
    All,
}

impl SolverChoice {
    pub fn methods(self) -> Vec<Method> {
        match self {
            SolverChoice::Opt => vec![Method::Opt],
            SolverChoice::Alg2 => vec![Method::Alg2],
            SolverChoice::Baseline => vec![Method::Baseline],
            SolverChoice::Budget => vec![Method::Budget],
            SolverChoice::All => vec![Method::Baseline, Method::Alg2, Method::Opt],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioMeta {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all")]
    pub solver: SolverChoice,
}

fn all() -> SolverChoice {
    SolverChoice::All
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientsSection {
    pub count: Option<usize>,
    pub nu_lo: Option<f64>,
    pub nu_hi: Option<f64>,
    pub gamma_lo: Option<f64>,
    pub gamma_hi: Option<f64>,
    pub t_lo: Option<f64>,
    pub t_hi: Option<f64>,
    pub nu: Option<Vec<f64>>,
    pub gamma: Option<Vec<f64>>,
    pub comm_time: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    ThetaTh,
    A,
    B,
    Beta,
    Delta,
    Budget,
}

impl SweepParameter {
    fn name(self) -> &'static str {
        match self {
            SweepParameter::ThetaTh => "theta_th",
            SweepParameter::A => "a",
            SweepParameter::B => "b",
            SweepParameter::Beta => "beta",
            SweepParameter::Delta => "delta",
            SweepParameter::Budget => "budget",
        }
    }

    fn apply(self, cfg: &mut ServerConfig, v: f64) {
        match self {
            SweepParameter::ThetaTh => cfg.theta_th = v,
            SweepParameter::A => cfg.a = v,
            SweepParameter::B => cfg.b = v,
            SweepParameter::Beta => cfg.beta = v,
            SweepParameter::Delta => cfg.delta = v,
            SweepParameter::Budget => cfg.budget = Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Sweep {
    /// `start + i step` for `i = 0..=n`, `n = round((stop - start) / step)`.
    pub fn points(&self) -> Result<Vec<f64>> {
        let ok = self.start.is_finite() && self.stop >= self.start && self.step > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "sweep: need start <= stop and step > 0, got {} {} {}",
                self.start, self.stop, self.step
            )));
        }
        let n = ((self.stop - self.start) / self.step).round() as usize;
        Ok((0..=n).map(|i| self.start + i as f64 * self.step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub scenario: ScenarioMeta,
    pub server: ServerConfig,
    pub clients: ClientsSection,
    pub sweep: Option<Sweep>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.server.validate().map_err(|e| Error::Config(format!("server: {e}")))?;
        s.profiles()?;
        if let Some(sw) = &s.sweep {
            sw.points()?;
        }
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn profiles(&self) -> Result<Vec<ClientProfile>> {
        let c = &self.clients;
        let has_lists = c.nu.is_some() || c.gamma.is_some() || c.comm_time.is_some();
        let has_dist = c.count.is_some()
            || [c.nu_lo, c.nu_hi, c.gamma_lo, c.gamma_hi, c.t_lo, c.t_hi].iter().any(Option::is_some);
        if has_lists && has_dist {
            return Err(Error::Config("clients: give either count/ranges or explicit lists, not both".into()));
        }
        if has_lists {
            let nu = c.nu.as_ref().ok_or_else(|| Error::Config("clients.nu missing".into()))?;
            let n = nu.len();
            let gamma = c.gamma.clone().unwrap_or_else(|| vec![1.0; n]);
            let t = c.comm_time.clone().unwrap_or_else(|| vec![1.0; n]);
            if gamma.len() != n || t.len() != n {
                return Err(Error::Config("clients: nu, gamma and comm_time lists differ in length".into()));
            }
            let profiles: Vec<ClientProfile> =
                (0..n).map(|i| ClientProfile::new(i, nu[i], gamma[i], t[i])).collect();
            for p in &profiles {
                p.validate().map_err(|e| Error::Config(format!("clients: {e}")))?;
                if p.nu >= 1.0 {
                    return Err(Error::Config(format!("clients.nu[{}] must be < 1", p.id)));
                }
            }
            return Ok(profiles);
        }
        let count = c.count.ok_or_else(|| Error::Config("clients.count missing".into()))?;
        let pair = |lo: Option<f64>, hi: Option<f64>, default: (f64, f64)| match (lo, hi) {
            (None, None) => default,
            (Some(l), None) => (l, l),
            (None, Some(h)) => (h, h),
            (Some(l), Some(h)) => (l, h),
        };
        let dist = ClientDistribution {
            count,
            nu: pair(c.nu_lo, c.nu_hi, (0.1, 0.5)),
            gamma: pair(c.gamma_lo, c.gamma_hi, (1.0, 1.0)),
            comm_time: pair(c.t_lo, c.t_hi, (1.0, 1.0)),
        };
        dist.draw(self.scenario.seed)
    }
}

pub fn solve(method: Method, cfg: &ServerConfig, profiles: &[ClientProfile], opts: &SolverOptions) -> Result<stackelberg::EquilibriumResult> {
    match method {
        Method::Opt => stackelberg::solve_opt(cfg, profiles, opts),
        Method::Alg2 => stackelberg::solve_alg2(cfg, profiles, opts),
        Method::Baseline => stackelberg::solve_baseline(cfg, profiles, opts),
        Method::Budget => stackelberg::solve_budget(cfg, profiles, opts),
    }
}

/// One row per sweep point (a single row without a sweep) with reward,
/// server utility and participant count for each selected solver.
pub fn run_scenario(s: &Scenario) -> Result<Table> {
    let profiles = s.profiles()?;
    let methods = s.scenario.solver.methods();
    let opts = SolverOptions::default();
    let mut columns = Vec::new();
    if let Some(sw) = &s.sweep {
        columns.push(sw.parameter.name().to_owned());
    }
    for m in &methods {
        columns.extend([format!("r_{m}"), format!("u_{m}"), format!("n_{m}")]);
    }
    let mut table = Table::new(columns);
    let points: Vec<Option<f64>> = match &s.sweep {
        Some(sw) => sw.points()?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    for p in points {
        let mut cfg = s.server;
        let mut row: Vec<Value> = Vec::new();
        if let (Some(v), Some(sw)) = (p, &s.sweep) {
            sw.parameter.apply(&mut cfg, v);
            row.push(v.into());
        }
        cfg.validate().map_err(|e| Error::Config(format!("sweep point: {e}")))?;
        for &m in &methods {
            let r = solve(m, &cfg, &profiles, &opts)?;
            row.extend([r.r_star.get().into(), r.server_utility.into(), r.participants.len().into()]);
        }
        table.push(row);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
[scenario]
name = "demo"
seed = 3
solver = "all"

[server]
a = 0.3
b = 0.0
beta = 10.0
delta = 10.0
theta_th = 0.2

[clients]
count = 4
nu_lo = 0.1
nu_hi = 0.5

[sweep]
parameter = "theta_th"
start = 0.2
stop = 0.6
step = 0.1
"#;

    #[test]
    fn parses_and_runs() {
        let s = Scenario::parse(EXAMPLE).unwrap();
        assert_eq!(s.profiles().unwrap().len(), 4);
        let t = run_scenario(&s).unwrap();
        assert_eq!(t.rows.len(), 5);
        assert_eq!(t.columns[0], "theta_th");
        assert_eq!(run_scenario(&s).unwrap().to_csv(), t.to_csv());
    }

    #[test]
    fn unknown_key_reports_position() {
        let bad = EXAMPLE.replace("beta = 10.0", "beta = 10.0\ngamma = 2.0");
        match Scenario::parse(&bad) {
            Err(Error::Config(m)) => assert!(m.contains("line") && m.contains("gamma"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_ranges_name_the_field() {
        let bad = EXAMPLE.replace("nu_hi = 0.5", "nu_hi = 1.5");
        match Scenario::parse(&bad) {
            Err(Error::Config(m)) => assert!(m.contains("clients.nu"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn explicit_lists() {
        let text = EXAMPLE.replace(
            "count = 4\nnu_lo = 0.1\nnu_hi = 0.5",
            "nu = [0.1, 0.3]\ngamma = [1.0, 2.0]\ncomm_time = [1.0, 0.5]",
        );
        let p = Scenario::parse(&text).unwrap().profiles().unwrap();
        assert_eq!(p[1], ClientProfile::new(1, 0.3, 2.0, 0.5));
    }

    #[test]
    fn draws_are_seeded_and_in_range() {
        let d = ClientDistribution { count: 50, nu: (0.1, 0.5), gamma: (1.0, 5.0), comm_time: (0.1, 1.0) };
        let a = d.draw(9).unwrap();
        assert_eq!(a, d.draw(9).unwrap());
        assert_ne!(a, d.draw(10).unwrap());
        assert!(a.iter().all(|p| (0.1..0.5).contains(&p.nu) && (1.0..5.0).contains(&p.gamma)));
    }

    #[test]
    fn sweep_points_avoid_drift() {
        let sw = Sweep { parameter: SweepParameter::ThetaTh, start: 0.2, stop: 0.6, step: 0.1 };
        let p = sw.points().unwrap();
        assert_eq!(p.len(), 5);
        assert!((p[4] - 0.6).abs() < 1e-15);
    }
}
