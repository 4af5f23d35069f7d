//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::cournot::{to_congestion_game, IsomorphismMap, Oligopoly};
use crate::error::{Error, Result};
use crate::game::Game;
use crate::instance::{self, Instance, Report, FORMAT_VERSION};
use crate::integral::{
    game_rho_gcd, gap_bound, is_valid_packet_size, packet_size, predicted_work, solve_integral_with,
    EquilibriumResult, Move, SolveOptions,
};
use crate::rational::Rational;
use crate::verify::{epsilon_gap, GapCertificate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;
pub const EXIT_INTERNAL: i32 = 5;

const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "polysplit", version, about = "Approximate equilibria of splittable polymatroid congestion games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute an approximate equilibrium of a congestion instance.
    Solve(SolveArgs),
    /// Report the continuous deviation gains of a stored profile.
    Verify(VerifyArgs),
    /// Solve a multimarket oligopoly through its congestion-game reduction.
    Cournot(SolveArgs),
    /// Parse and check an instance without solving it.
    Validate { instance: PathBuf },
    /// Measured gap against the theoretical bound for several packet sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
struct SolveArgs {
    instance: PathBuf,
    /// Target accuracy; selects the packet size automatically.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Explicit packet size such as `1/8`; overrides the automatic choice.
    #[arg(long)]
    k: Option<Rational>,
    /// Best-response tolerance (default epsilon/100, or 1e-6 without epsilon).
    #[arg(long)]
    tol: Option<f64>,
    /// Refuse to run when (delta/k)^3 exceeds this.
    #[arg(long, default_value_t = 1e9)]
    budget: f64,
    /// Run even when over budget.
    #[arg(long)]
    force: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the move sequence as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    instance: PathBuf,
    /// JSON file with a `profile` field of exact loads (reports qualify).
    #[arg(long)]
    profile: PathBuf,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
}

#[derive(Debug, Args)]
struct BenchArgs {
    instance: PathBuf,
    /// Comma-separated packet sizes.
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<Rational>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, default_value_t = 1e9)]
    budget: f64,
    #[arg(long)]
    force: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Parse(_) | Error::Input(_) | Error::Io(_) => EXIT_PARSE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::Budget { .. } => EXIT_BUDGET,
        Error::Internal(_) | Error::NonTermination { .. } | Error::Convergence { .. } => {
            EXIT_INTERNAL
        }
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Solve(args) => {
            let game = expect_congestion(instance::parse_instance(&args.instance)?)?;
            let report = solve_game(&game, None, &args)?;
            emit(&report.to_json(), args.out.as_deref())
        }
        Command::Cournot(args) => {
            let oligopoly = match instance::parse_instance(&args.instance)? {
                Instance::Cournot(o) => o,
                Instance::Congestion(_) => {
                    return Err(Error::Parse("kind: expected \"cournot\"".into()))
                }
            };
            let (game, map) = to_congestion_game(&oligopoly)?;
            let report = solve_game(&game, Some((&oligopoly, &map)), &args)?;
            emit(&report.to_json(), args.out.as_deref())
        }
        Command::Verify(args) => verify(&args),
        Command::Validate { instance } => {
            let summary = match instance::parse_instance(&instance)? {
                Instance::Congestion(g) => format!(
                    "ok: congestion game, {} players, {} resources, delta = {}, rho_gcd = {}, L = {}",
                    g.n(),
                    g.m(),
                    g.delta(),
                    game_rho_gcd(&g),
                    g.lipschitz()
                ),
                Instance::Cournot(o) => {
                    let (g, _) = to_congestion_game(&o)?;
                    format!(
                        "ok: oligopoly, {} firms, {} markets; reduced game delta = {}, L = {}",
                        o.firms().len(),
                        o.markets().len(),
                        g.delta(),
                        g.lipschitz()
                    )
                }
            };
            println!("{summary}");
            Ok(())
        }
        Command::Bench(args) => bench(&args),
    }
}

fn expect_congestion(inst: Instance) -> Result<Game> {
    match inst {
        Instance::Congestion(g) => Ok(g),
        Instance::Cournot(_) => Err(Error::Parse(
            "kind: expected \"congestion\" (use the cournot command)".into(),
        )),
    }
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn check_budget(game: &Game, k: &Rational, budget: f64, force: bool) -> Result<()> {
    let packets = game.delta() / k;
    let work = predicted_work(game, k);
    eprintln!("predicted packets delta/k = {packets}, work (delta/k)^3 = {work:.3e}");
    if work > budget && !force {
        return Err(Error::Budget {
            predicted: work,
            budget,
        });
    }
    Ok(())
}

fn choose_k(game: &Game, epsilon: Option<f64>, k: Option<&Rational>) -> Result<Rational> {
    match (k, epsilon) {
        (Some(k), _) => {
            if !is_valid_packet_size(game, k) {
                return Err(Error::Input(format!(
                    "packet size {k} must be positive and divide every rank value and demand"
                )));
            }
            Ok(k.clone())
        }
        (None, Some(eps)) => Ok(packet_size(game, eps)?.k),
        (None, None) => Err(Error::Input("one of --epsilon or --k is required".into())),
    }
}

fn solve_game(
    game: &Game,
    cournot: Option<(&Oligopoly, &IsomorphismMap)>,
    args: &SolveArgs,
) -> Result<Report> {
    if let Some(eps) = args.epsilon {
        if !(eps.is_finite() && eps > 0.0) {
            return Err(Error::Input(format!("--epsilon must be positive, got {eps}")));
        }
    }
    let k = choose_k(game, args.epsilon, args.k.as_ref())?;
    let tol = args
        .tol
        .unwrap_or_else(|| args.epsilon.map_or(DEFAULT_TOL, |e| e / 100.0));
    check_budget(game, &k, args.budget, args.force)?;

    let started = Instant::now();
    let opts = SolveOptions {
        record_trace: args.trace.is_some(),
    };
    let eq = solve_integral_with(game, &k, &opts)?;
    let cert = epsilon_gap(game, &eq.profile, tol)?;
    let wall = started.elapsed().as_secs_f64();

    if let (Some(eps), None) = (args.epsilon, &args.k) {
        if cert.max_gap > eps {
            return Err(Error::Internal(format!(
                "equilibrium at k = {k} has gap {} above epsilon = {eps}",
                cert.max_gap
            )));
        }
    }
    if let Some(path) = &args.trace {
        write_trace(path, game, &eq.trace)?;
    }
    eprintln!(
        "k = {k}, best responses = {}, max gap = {:.3e}, time = {wall:.3}s",
        eq.best_response_count, cert.max_gap
    );
    build_report(game, cournot, args.epsilon, &eq, &cert, wall)
}

fn build_report(
    game: &Game,
    cournot: Option<(&Oligopoly, &IsomorphismMap)>,
    epsilon: Option<f64>,
    eq: &EquilibriumResult,
    cert: &GapCertificate,
    wall: f64,
) -> Result<Report> {
    let profile = (0..game.n())
        .map(|i| {
            eq.profile
                .exact_player_loads(i)
                .ok_or_else(|| Error::Internal("equilibrium is not integral".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (kind, markets, quantities, utilities) = match cournot {
        None => ("congestion", None, None, None),
        Some((o, map)) => {
            let q: Vec<Vec<Rational>> = profile
                .iter()
                .enumerate()
                .map(|(i, y)| map.unmap_strategy(i, y))
                .collect();
            let qf: Vec<Vec<f64>> = q
                .iter()
                .map(|r| r.iter().map(Rational::to_f64).collect())
                .collect();
            let u = o.firm_utility(&qf)?;
            ("cournot", Some(o.markets().to_vec()), Some(q), Some(u))
        }
    };
    Ok(Report {
        version: FORMAT_VERSION,
        kind: kind.into(),
        resources: game.resources().to_vec(),
        epsilon,
        k: eq.k.clone(),
        lipschitz: game.lipschitz(),
        delta: game.delta(),
        rho_gcd: game_rho_gcd(game),
        predicted_packets: game.delta() / &eq.k,
        best_response_count: eq.best_response_count,
        demand_increments: eq.demand_increments,
        profile,
        gaps: cert.gaps.clone(),
        max_gap: cert.max_gap,
        tol: cert.tol,
        markets,
        quantities,
        utilities,
        wall_time_secs: wall,
    })
}

fn write_trace(path: &Path, game: &Game, trace: &[Move]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    w.write_record(["step", "player", "kind", "to", "from", "gain"])
        .map_err(csv_error)?;
    let names = game.resources();
    for (step, mv) in trace.iter().enumerate() {
        let step = step.to_string();
        match mv {
            Move::Increment { player, resource } => w.write_record([
                step.as_str(),
                &player.to_string(),
                "increment",
                &names[*resource],
                "",
                "",
            ]),
            Move::Exchange {
                player,
                to,
                from,
                gain,
            } => w.write_record([
                step.as_str(),
                &player.to_string(),
                "exchange",
                &names[*to],
                &names[*from],
                &gain.to_string(),
            ]),
        }
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn verify(args: &VerifyArgs) -> Result<()> {
    let game = match instance::parse_instance(&args.instance)? {
        Instance::Congestion(g) => g,
        Instance::Cournot(o) => to_congestion_game(&o)?.0,
    };
    let profile = instance::load_profile(&args.profile)?;
    if profile.n() != game.n() {
        return Err(Error::Infeasible(format!(
            "profile has {} players, instance has {}",
            profile.n(),
            game.n()
        )));
    }
    game.check_profile(&profile)
        .map_err(|e| Error::Infeasible(e.to_string()))?;
    let cert = epsilon_gap(&game, &profile, args.tol)?;
    let out = serde_json::json!({
        "gaps": cert.gaps,
        "max_gap": cert.max_gap,
        "tol": cert.tol,
        "certified_epsilon": cert.certified_epsilon(),
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json value serializes"));
    Ok(())
}

fn bench(args: &BenchArgs) -> Result<()> {
    let game = expect_congestion(instance::parse_instance(&args.instance)?)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["k", "max_gap", "bound", "best_responses", "seconds"])
        .map_err(csv_error)?;
    for k in &args.k {
        let k = choose_k(&game, None, Some(k))?;
        check_budget(&game, &k, args.budget, args.force)?;
        let started = Instant::now();
        let eq = solve_integral_with(&game, &k, &SolveOptions::default())?;
        let cert = epsilon_gap(&game, &eq.profile, args.tol)?;
        let secs = started.elapsed().as_secs_f64();
        w.write_record([
            k.to_string(),
            cert.max_gap.to_string(),
            gap_bound(&game, &k).to_string(),
            eq.best_response_count.to_string(),
            format!("{secs:.6}"),
        ])
        .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    emit(&String::from_utf8_lossy(&bytes), args.out.as_deref())
}
