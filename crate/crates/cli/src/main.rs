//! `crowdfl`: command-line front end for the incentive-mechanism library.
//!
//! Exit status: 0 on success, 1 on numeric failure, 2 on usage or
//! configuration errors.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use crowdfl::admission::AdmissionConfig;
use crowdfl::best_response::{best_response, RewardRate, DEFAULT_TOL};
use crowdfl::cost::ClientProfile;
use crowdfl::fedsim::{self, AggregationMode, FedConfig, PartitionMode};
use crowdfl::report::{Table, Value};
use crowdfl::reproduce;
use crowdfl::scenario::{self, ClientDistribution, Scenario};
use crowdfl::stackelberg::{Method, ServerConfig, SolverOptions};
use crowdfl::Error;

#[derive(Parser)]
#[command(name = "crowdfl", version, about = "Incentive mechanism and FL simulator")]
struct Cli {
    /// Seed for client populations and simulator randomness.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Write `<name>.<format>` here instead of printing to stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Best response of one client to a reward rate.
    BestResponse {
        #[arg(long, allow_negative_numbers = true)]
        nu: f64,
        #[arg(long = "T", alias = "comm-time", default_value_t = 1.0)]
        comm_time: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, allow_negative_numbers = true)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        theta_th: f64,
    },
    /// Stage-I solution for a seeded client population.
    Equilibrium {
        #[arg(value_enum)]
        method: MethodArg,
        #[command(flatten)]
        server: ServerArgs,
        #[command(flatten)]
        clients: ClientArgs,
        #[arg(long)]
        budget: Option<f64>,
    },
    /// Admission threshold over a range of expected client counts.
    Admission {
        #[arg(long, default_value_t = 0.35)]
        a: f64,
        #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
        b: f64,
        #[arg(long, default_value_t = 10.0)]
        beta: f64,
        /// One or more comma-separated values.
        #[arg(long, value_delimiter = ',', default_value = "10")]
        delta: Vec<f64>,
        /// `N` or `LO..HI` (inclusive).
        #[arg(long = "K", default_value = "0..50")]
        k: String,
        #[arg(long, default_value_t = 0.1)]
        theta_min: f64,
        #[arg(long, default_value_t = 0.9)]
        theta_max: f64,
    },
    /// Federated ridge regression trace (round, gap, max_theta, wall_ms).
    Fedsim {
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        clients: usize,
        #[arg(long, default_value_t = 0.1)]
        noise: f64,
        #[arg(long, value_enum, default_value_t = PartitionArg::Even)]
        partition: PartitionArg,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        max_rounds: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Consistent)]
        mode: ModeArg,
    },
    /// Regenerate a reference figure or table as data.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
        /// `a,b` pairs for tables and fig8, e.g. `--ab 0.3,-1 --ab 0.65,-1`.
        #[arg(long, allow_negative_numbers = true)]
        ab: Vec<String>,
        /// `lo,hi` of the uniform gamma distribution for tables.
        #[arg(long, allow_negative_numbers = true)]
        gamma_dist: Option<String>,
    },
    /// Run a scenario file.
    Run { config: PathBuf },
}

#[derive(clap::Args)]
struct ServerArgs {
    #[arg(long, default_value_t = 0.3)]
    a: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    b: f64,
    #[arg(long, default_value_t = 10.0)]
    beta: f64,
    #[arg(long, default_value_t = 10.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.2)]
    theta_th: f64,
}

#[derive(clap::Args)]
struct ClientArgs {
    #[arg(long = "K", default_value_t = 4)]
    count: usize,
    /// `lo,hi`
    #[arg(long, default_value = "0.1,0.5")]
    nu_range: String,
    #[arg(long, default_value = "1,1")]
    gamma_range: String,
    #[arg(long = "T-range", default_value = "1,1")]
    t_range: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Opt,
    Alg2,
    Baseline,
    Budget,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Even,
    Uneven,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Averaged,
    Consistent,
}

#[derive(Clone, Copy, ValueEnum)]
enum Target {
    Fig4,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    TableA,
    TableB,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Domain(_) | Error::Config(_) | Error::TooManyClients { .. } | Error::DegenerateClient { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

fn pair(s: &str, what: &str) -> Result<(f64, f64), Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(usage(format!("{what}: expected two numbers `lo,hi`, got `{s}`"))),
        },
        _ => Err(usage(format!("{what}: expected `lo,hi`, got `{s}`"))),
    }
}

fn k_range(s: &str) -> Result<Vec<usize>, Failure> {
    let bad = || usage(format!("--K: expected `N` or `LO..HI`, got `{s}`"));
    if let Some((lo, hi)) = s.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        Ok((lo..=hi).collect())
    } else {
        Ok(vec![s.trim().parse().map_err(|_| bad())?])
    }
}

fn to_json(table: &Table) -> String {
    let rows: Vec<serde_json::Value> = table
        .rows
        .iter()
        .map(|row| {
            let obj = table
                .columns
                .iter()
                .zip(row)
                .map(|(c, v)| {
                    let v = match v {
                        Value::Num(x) if x.is_finite() => serde_json::json!(x),
                        Value::Num(x) => serde_json::json!(crowdfl::report::fmt_g(*x)),
                        Value::Int(i) => serde_json::json!(i),
                        Value::Text(s) => serde_json::json!(s),
                        Value::Bool(b) => serde_json::json!(b),
                    };
                    (c.clone(), v)
                })
                .collect::<serde_json::Map<_, _>>();
            serde_json::Value::Object(obj)
        })
        .collect();
    let mut s = serde_json::to_string_pretty(&rows).expect("table serializes");
    s.push('\n');
    s
}

fn emit(cli: &Cli, name: &str, table: &Table) -> Result<(), Failure> {
    let (body, ext) = match cli.format {
        Format::Csv => (table.to_csv(), "csv"),
        Format::Json => (to_json(table), "json"),
    };
    match &cli.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            let path = dir.join(format!("{name}.{ext}"));
            std::fs::write(&path, body).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            log::info!("wrote {}", path.display());
        }
        None => {
            let mut out = std::io::stdout().lock();
            // a closed pipe is not an error worth reporting
            let _ = out.write_all(body.as_bytes());
        }
    }
    Ok(())
}

fn best_response_table(profile: &ClientProfile, r: f64, theta_th: f64) -> Result<Table, Failure> {
    let br = best_response(profile, RewardRate::new(r)?, theta_th, DEFAULT_TOL)?;
    let mut t = Table::new([
        "nu", "comm_time", "gamma", "r", "theta_th", "theta_star", "unclamped_theta", "participates", "r_hat", "utility",
    ]);
    t.push(vec![
        profile.nu.into(),
        profile.comm_time()?.into(),
        profile.gamma.into(),
        r.into(),
        theta_th.into(),
        br.theta_star.into(),
        br.unclamped_theta.into(),
        br.participates.into(),
        br.r_hat.into(),
        br.utility.into(),
    ]);
    Ok(t)
}

fn equilibrium_table(method: Method, cfg: &ServerConfig, clients: &[ClientProfile]) -> Result<Table, Failure> {
    let res = scenario::solve(method, cfg, clients, &SolverOptions::default())?;
    let mut t = Table::new([
        "method", "r_star", "server_utility", "x_star", "client", "nu", "gamma", "comm_time", "r_hat", "theta_star",
        "participates",
    ]);
    for (c, br) in clients.iter().zip(&res.responses) {
        t.push(vec![
            method.to_string().into(),
            res.r_star.get().into(),
            res.server_utility.into(),
            res.x_star.into(),
            c.id.into(),
            c.nu.into(),
            c.gamma.into(),
            c.comm_time()?.into(),
            br.r_hat.into(),
            br.theta_star.into(),
            br.participates.into(),
        ]);
    }
    Ok(t)
}

fn parse_ab(list: &[String]) -> Result<Vec<(f64, f64)>, Failure> {
    if list.is_empty() {
        return Ok(reproduce::TABLE_AB.to_vec());
    }
    list.iter().map(|s| pair(s, "--ab")).collect()
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::BestResponse { nu, comm_time, gamma, r, theta_th } => {
            let profile = ClientProfile::new(0, *nu, *gamma, *comm_time);
            profile.validate()?;
            emit(cli, "best-response", &best_response_table(&profile, *r, *theta_th)?)
        }
        Command::Equilibrium { method, server, clients, budget } => {
            let cfg = ServerConfig {
                a: server.a,
                b: server.b,
                beta: server.beta,
                delta: server.delta,
                zeta: 1.0,
                theta_th: server.theta_th,
                budget: *budget,
            };
            let dist = ClientDistribution {
                count: clients.count,
                nu: pair(&clients.nu_range, "--nu-range")?,
                gamma: pair(&clients.gamma_range, "--gamma-range")?,
                comm_time: pair(&clients.t_range, "--T-range")?,
            };
            let profiles = dist.draw(cli.seed)?;
            let method = match method {
                MethodArg::Opt => Method::Opt,
                MethodArg::Alg2 => Method::Alg2,
                MethodArg::Baseline => Method::Baseline,
                MethodArg::Budget => Method::Budget,
            };
            emit(cli, &format!("equilibrium-{method}"), &equilibrium_table(method, &cfg, &profiles)?)
        }
        Command::Admission { a, b, beta, delta, k, theta_min, theta_max } => {
            let mut base: AdmissionConfig = reproduce::admission_base(*a, *b);
            base.server.beta = *beta;
            base.theta_min = *theta_min;
            base.theta_max = *theta_max;
            base.validate()?;
            emit(cli, "admission", &reproduce::admission_curve(&base, &k_range(k)?, delta)?)
        }
        Command::Fedsim { samples, dim, clients, noise, partition, lambda, theta, epsilon, max_rounds, mode } => {
            let partition = match partition {
                PartitionArg::Even => PartitionMode::Even,
                PartitionArg::Uneven => PartitionMode::Uneven,
            };
            let ds = fedsim::make_synthetic(cli.seed, *samples, *dim, *clients, *noise, partition)?;
            let cfg = FedConfig {
                lambda: *lambda,
                theta_target: *theta,
                epsilon_target: *epsilon,
                max_rounds: *max_rounds,
                mode: match mode {
                    ModeArg::Averaged => AggregationMode::Averaged,
                    ModeArg::Consistent => AggregationMode::Consistent,
                },
                seed: cli.seed,
                ..FedConfig::default()
            };
            let trace = fedsim::run_federated(&ds, &cfg)?;
            let mut t = Table::new(["round", "gap", "max_theta", "wall_ms"]);
            for r in &trace.records {
                t.push(vec![r.round.into(), r.gap.into(), r.max_theta.into(), r.wall_ms.into()]);
            }
            emit(cli, "fedsim", &t)?;
            if !trace.converged {
                return Err(Failure { code: 1, message: format!("no convergence within {max_rounds} rounds") });
            }
            Ok(())
        }
        Command::Reproduce { target, ab, gamma_dist } => {
            let gamma = match gamma_dist {
                Some(s) => pair(s, "--gamma-dist")?,
                None => reproduce::TABLE_GAMMA,
            };
            let (name, table) = match target {
                Target::Fig4 => ("fig4", reproduce::fig4(cli.seed)?),
                Target::Fig5 => ("fig5", reproduce::fig5(cli.seed)?),
                Target::Fig6 => ("fig6", reproduce::fig6(cli.seed)?),
                Target::Fig7 => ("fig7", reproduce::fig7()?),
                Target::Fig8 => {
                    let (a, b) = if ab.is_empty() { (0.35, -1.0) } else { pair(&ab[0], "--ab")? };
                    ("fig8", reproduce::fig8(a, b)?)
                }
                Target::TableA => ("table-a", reproduce::table_a(cli.seed, &parse_ab(ab)?, gamma)?),
                Target::TableB => ("table-b", reproduce::table_b(cli.seed, &parse_ab(ab)?, gamma)?),
            };
            emit(cli, name, &table)
        }
        Command::Run { config } => {
            let s = Scenario::load(config)?;
            let table = scenario::run_scenario(&s)?;
            emit(cli, &s.scenario.name, &table)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
