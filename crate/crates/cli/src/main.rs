//! Command-line front end: scenario builders, model ingestion, subcommand
//! dispatch and CSV/JSON report emission.
//!
//! Exit codes: 0 success, 2 invalid model or configuration, 3 iteration cap
//! exceeded, 4 verification or property failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gccsolver::dynkin::{
    nash_iterate, verify_nep_exhaustive, verify_nep_snell, FirstMover, GccSpec, NepReport,
};
use gccsolver::indifference::Valuer;
use gccsolver::io as gio;
use gccsolver::lattice::{lattice_nash_iterate, lattice_verify_nep, LatticeRule};
use gccsolver::measure::{emmm_tree, Agent};
use gccsolver::model;
use gccsolver::scenario::{build_scenario, Built, EngineChoice, Overrides, SCENARIO_NAMES};
use gccsolver::selftest::{game_suite, property_suite, SuiteConfig};
use gccsolver::snell::snell_envelope;
use gccsolver::tree::{AdaptedProcess, EventTree, TerminalClaim};
use gccsolver::SolverError;

const EXIT_INVALID: u8 = 2;
const EXIT_NO_CONVERGENCE: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;

/// Prints without panicking when stdout is a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

#[derive(Parser)]
#[command(
    name = "gccsolver",
    about = "Indifference valuation, optimal stopping and equilibrium stopping pairs \
             for game contingent claims on finite event trees"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Price a terminal claim by exponential indifference valuation.
    Price(RunArgs),
    /// Solve the optimal-stopping problem of a payoff process.
    American(RunArgs),
    /// Compute an equilibrium stopping pair by best-response iteration.
    Nash(RunArgs),
    /// Verify a stopping pair from a rules file against the model.
    Verify(VerifyArgs),
    /// Run the randomized property suites.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MoverArg {
    Buyer,
    Seller,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EngineArg {
    Auto,
    Tree,
    Lattice,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleArg {
    Riskneutral,
}

#[derive(Args)]
struct RunArgs {
    /// Model file in gccsolver-model-v1 JSON.
    #[arg(long, conflicts_with = "scenario")]
    model: Option<PathBuf>,
    /// Builtin scenario name.
    #[arg(long)]
    scenario: Option<String>,
    /// Solver backend; auto picks the recombining lattice for large
    /// walk-expressible scenarios.
    #[arg(long, value_enum, default_value = "auto")]
    engine: EngineArg,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    alpha_a: Option<f64>,
    #[arg(long)]
    alpha_b: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Seller endowment as an affine expression in the walk and time,
    /// e.g. "w+0.5t".
    #[arg(long)]
    endowment_a: Option<String>,
    #[arg(long, value_enum, default_value = "buyer")]
    first_mover: MoverArg,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
    /// Verification tolerance on equilibrium gaps.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    /// Output directory for CSV and JSON reports.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Worker threads for wide-slice solves (0 = library default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Print the scenario description and exit.
    #[arg(long, default_value_t = false)]
    describe: bool,
    /// Also print an independent oracle value (price command only).
    #[arg(long, value_enum)]
    oracle: Option<OracleArg>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Rules file: the equilibrium JSON written by the nash command.
    #[arg(long)]
    rules: PathBuf,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Number of randomized trees/games per suite.
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Martingale-measure samples per tree for the dual checks.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Deliberately break one property to prove the harness fails (meta-test).
    #[arg(long, hide = true, default_value_t = false)]
    inject_fault: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Price(args) => run_guarded(args, cmd_price),
        Command::American(args) => run_guarded(args, cmd_american),
        Command::Nash(args) => run_guarded(args, cmd_nash),
        Command::Verify(args) => {
            init_threads(args.run.threads);
            match cmd_verify(&args) {
                Ok(code) => code,
                Err(e) => report_error(e),
            }
        }
        Command::Selftest(args) => {
            init_threads(args.threads);
            match cmd_selftest(&args) {
                Ok(code) => code,
                Err(e) => report_error(e),
            }
        }
    };
    ExitCode::from(code)
}

fn run_guarded(args: RunArgs, f: impl FnOnce(&RunArgs) -> Result<u8, SolverError>) -> u8 {
    init_threads(args.threads);
    match f(&args) {
        Ok(code) => code,
        Err(e) => report_error(e),
    }
}

fn report_error(e: SolverError) -> u8 {
    eprintln!("error: {e}");
    match e {
        SolverError::NoConvergence(_) => EXIT_NO_CONVERGENCE,
        SolverError::Internal(_) | SolverError::Numeric(_) => EXIT_VERIFICATION,
        _ => EXIT_INVALID,
    }
}

fn init_threads(threads: usize) {
    if threads > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn overrides(args: &RunArgs) -> Overrides {
    Overrides {
        steps: args.steps,
        alpha_a: args.alpha_a,
        alpha_b: args.alpha_b,
        mu: args.mu,
        delta: args.delta,
        endowment_a: args.endowment_a.clone(),
    }
}

fn engine_choice(args: &RunArgs) -> EngineChoice {
    match args.engine {
        EngineArg::Auto => EngineChoice::Auto,
        EngineArg::Tree => EngineChoice::Tree,
        EngineArg::Lattice => EngineChoice::Lattice,
    }
}

fn mover(args: &RunArgs) -> FirstMover {
    match args.first_mover {
        MoverArg::Buyer => FirstMover::Buyer,
        MoverArg::Seller => FirstMover::Seller,
    }
}

/// Inputs resolved from either a model file or a builtin scenario.
enum Source {
    Tree {
        tree: EventTree,
        x: AdaptedProcess,
        y: AdaptedProcess,
        claim: TerminalClaim,
        buyer: Agent,
        seller: Agent,
    },
    Lattice(gccsolver::scenario::LatticeScenario),
}

fn resolve_source(args: &RunArgs) -> Result<Source, SolverError> {
    if let Some(path) = &args.model {
        let loaded = model::load_model(path)?;
        let tree = loaded.tree;
        let claim = loaded
            .claims
            .get("H")
            .cloned()
            .or_else(|| {
                (loaded.claims.len() == 1).then(|| loaded.claims.values().next().unwrap().clone())
            })
            .unwrap_or_else(|| TerminalClaim::zero(&tree));
        let x = loaded
            .processes
            .get("X")
            .or_else(|| loaded.processes.get("L"))
            .cloned()
            .unwrap_or_else(|| AdaptedProcess::constant(&tree, 0.0));
        let y = loaded.processes.get("Y").cloned().unwrap_or_else(|| x.clone());
        let endow_b =
            loaded.claims.get("CB").cloned().unwrap_or_else(|| TerminalClaim::zero(&tree));
        let endow_a =
            loaded.claims.get("CA").cloned().unwrap_or_else(|| TerminalClaim::zero(&tree));
        let buyer = Agent::new(args.alpha_b.unwrap_or(1.0), endow_b)?;
        let seller = Agent::new(args.alpha_a.unwrap_or(1.0), endow_a)?;
        return Ok(Source::Tree { tree, x, y, claim, buyer, seller });
    }
    let name = args.scenario.as_deref().ok_or_else(|| {
        SolverError::InvalidModel(format!(
            "pass --model FILE or --scenario NAME (one of: {})",
            SCENARIO_NAMES.join(", ")
        ))
    })?;
    let (info, built) = build_scenario(name, &overrides(args), engine_choice(args))?;
    if args.describe {
        say!("{}", info.describe);
    }
    Ok(match built {
        Built::Tree(s) => Source::Tree {
            tree: s.tree,
            x: s.x,
            y: s.y,
            claim: s.claim,
            buyer: s.buyer,
            seller: s.seller,
        },
        Built::Lattice(s) => Source::Lattice(s),
    })
}

fn write_out(out_dir: &Path, name: &str, contents: &str) -> Result<PathBuf, SolverError> {
    std::fs::create_dir_all(out_dir).map_err(|e| {
        SolverError::InvalidModel(format!("cannot create {}: {e}", out_dir.display()))
    })?;
    let path = out_dir.join(name);
    std::fs::write(&path, contents)
        .map_err(|e| SolverError::InvalidModel(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

fn cmd_price(args: &RunArgs) -> Result<u8, SolverError> {
    match resolve_source(args)? {
        Source::Tree { tree, claim, buyer, .. } => {
            if args.describe {
                return Ok(0);
            }
            let valuer = Valuer::new(&tree, buyer)?;
            let process = valuer.value_process(&claim)?;
            let csv = gio::value_process_csv(&tree, &process);
            let path = write_out(&args.out, "price.csv", &csv)?;
            let diagnostics = gio::pricing_diagnostics_csv(&tree, &valuer)?;
            write_out(&args.out, "pricing_diagnostics.csv", &diagnostics)?;
            say!("root value {}", gio::fmt17(process.values[0]));
            if let Some(OracleArg::Riskneutral) = args.oracle {
                let q = emmm_tree(&tree)?;
                let oracle = tree.core().terminal_expectation(&q.edge_prob, &claim.values);
                say!("risk-neutral oracle {}", gio::fmt17(oracle));
            }
            say!("wrote {}", path.display());
            Ok(0)
        }
        Source::Lattice(s) => {
            if args.describe {
                return Ok(0);
            }
            let v = gccsolver::lattice::lattice_claim_value(&s.lattice, &s.gcc.buyer, &s.claim)?;
            say!("root value {}", gio::fmt17(v));
            Ok(0)
        }
    }
}

fn cmd_american(args: &RunArgs) -> Result<u8, SolverError> {
    match resolve_source(args)? {
        Source::Tree { tree, x, buyer, .. } => {
            if args.describe {
                return Ok(0);
            }
            let valuer = Valuer::new(&tree, buyer)?;
            let result = snell_envelope(&valuer, &x)?;
            let csv = gio::snell_csv(&tree, &x, &result);
            let path = write_out(&args.out, "american.csv", &csv)?;
            say!("root value {}", gio::fmt17(result.root_value));
            say!("wrote {}", path.display());
            Ok(0)
        }
        Source::Lattice(_) => Err(SolverError::InvalidModel(
            "the american command runs on explicit trees; pass --engine tree".into(),
        )),
    }
}

fn cmd_nash(args: &RunArgs) -> Result<u8, SolverError> {
    match resolve_source(args)? {
        Source::Tree { tree, x, y, buyer, seller, .. } => {
            if args.describe {
                return Ok(0);
            }
            let gcc = GccSpec::new(&tree, x, y, buyer, seller)?;
            let result = nash_iterate(&tree, &gcc, mover(args), args.max_iter)?;
            let report = verify_nep_snell(&tree, &gcc, &result.buyer_rule, &result.seller_rule)?;
            write_out(&args.out, "trace.csv", &gio::trace_csv(&tree, &result))?;
            let json = gio::equilibrium_report_tree(&tree, &result, &report);
            let path = write_out(
                &args.out,
                "equilibrium.json",
                &serde_json::to_string_pretty(&json).unwrap(),
            )?;
            say!(
                "j_buyer {}  j_seller {}  gaps {} {}",
                gio::fmt17(result.j_buyer),
                gio::fmt17(result.j_seller),
                gio::fmt17(report.buyer_gap),
                gio::fmt17(report.seller_gap),
            );
            say!("wrote {}", path.display());
            Ok(if gaps_ok(&report, args.tol) { 0 } else { EXIT_VERIFICATION })
        }
        Source::Lattice(s) => {
            if args.describe {
                return Ok(0);
            }
            let result = lattice_nash_iterate(&s.lattice, &s.gcc, mover(args), args.max_iter)?;
            let report =
                lattice_verify_nep(&s.lattice, &s.gcc, &result.buyer_rule, &result.seller_rule)?;
            write_out(&args.out, "trace.csv", &gio::lattice_trace_csv(&result))?;
            let json = gio::equilibrium_report_lattice(&s.lattice, &result, &report);
            let path = write_out(
                &args.out,
                "equilibrium.json",
                &serde_json::to_string_pretty(&json).unwrap(),
            )?;
            say!(
                "j_buyer {}  j_seller {}  gaps {} {}",
                gio::fmt17(result.j_buyer),
                gio::fmt17(result.j_seller),
                gio::fmt17(report.buyer_gap),
                gio::fmt17(report.seller_gap),
            );
            say!("wrote {}", path.display());
            Ok(if gaps_ok(&report, args.tol) { 0 } else { EXIT_VERIFICATION })
        }
    }
}

fn gaps_ok(report: &NepReport, tol: f64) -> bool {
    report.buyer_gap <= tol && report.seller_gap <= tol
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8, SolverError> {
    let rules_json: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&args.rules)
            .map_err(|e| SolverError::InvalidModel(format!("cannot read rules file: {e}")))?,
    )
    .map_err(|e| SolverError::InvalidModel(format!("malformed rules file: {e}")))?;

    match resolve_source(&args.run)? {
        Source::Tree { tree, x, y, buyer, seller, .. } => {
            let gcc = GccSpec::new(&tree, x, y, buyer, seller)?;
            let (tau, sigma) = gio::rules_from_report(&tree, &rules_json)?;
            let snell_rep = verify_nep_snell(&tree, &gcc, &tau, &sigma)?;
            let exhaustive = if tree.n_non_terminal() <= 16 {
                Some(verify_nep_exhaustive(&tree, &gcc, &tau, &sigma, 16)?)
            } else {
                None
            };
            let ok = gaps_ok(&snell_rep, args.run.tol)
                && exhaustive.as_ref().map_or(true, |r| gaps_ok(r, args.run.tol));
            let json = serde_json::json!({
                "engine": "tree",
                "j_buyer": snell_rep.j_buyer,
                "j_seller": snell_rep.j_seller,
                "buyer_gap": snell_rep.buyer_gap,
                "seller_gap": snell_rep.seller_gap,
                "exhaustive_buyer_gap": exhaustive.as_ref().map(|r| r.buyer_gap),
                "exhaustive_seller_gap": exhaustive.as_ref().map(|r| r.seller_gap),
                "verified": ok,
            });
            let path = write_out(
                &args.run.out,
                "verify.json",
                &serde_json::to_string_pretty(&json).unwrap(),
            )?;
            say!(
                "gaps {} {}  verified {}",
                gio::fmt17(snell_rep.buyer_gap),
                gio::fmt17(snell_rep.seller_gap),
                ok
            );
            say!("wrote {}", path.display());
            Ok(if ok { 0 } else { EXIT_VERIFICATION })
        }
        Source::Lattice(s) => {
            let (tau, sigma) = lattice_rules_from_report(&s.lattice, &rules_json)?;
            let rep = lattice_verify_nep(&s.lattice, &s.gcc, &tau, &sigma)?;
            let ok = gaps_ok(&rep, args.run.tol);
            let json = serde_json::json!({
                "engine": "lattice",
                "j_buyer": rep.j_buyer,
                "j_seller": rep.j_seller,
                "buyer_gap": rep.buyer_gap,
                "seller_gap": rep.seller_gap,
                "verified": ok,
            });
            let path = write_out(
                &args.run.out,
                "verify.json",
                &serde_json::to_string_pretty(&json).unwrap(),
            )?;
            say!(
                "gaps {} {}  verified {}",
                gio::fmt17(rep.buyer_gap),
                gio::fmt17(rep.seller_gap),
                ok
            );
            say!("wrote {}", path.display());
            Ok(if ok { 0 } else { EXIT_VERIFICATION })
        }
    }
}

fn lattice_rules_from_report(
    lat: &gccsolver::lattice::Lattice,
    json: &serde_json::Value,
) -> Result<(LatticeRule, LatticeRule), SolverError> {
    let pick = |key: &str| -> Result<LatticeRule, SolverError> {
        let arr = json
            .get(key)
            .and_then(|v| v.as_array())
            .ok_or_else(|| SolverError::InvalidModel(format!("report lacks {key}")))?;
        let mut rule = LatticeRule::at_horizon(lat);
        for pair in arr {
            let coords = pair
                .as_array()
                .filter(|p| p.len() == 2)
                .ok_or_else(|| SolverError::InvalidModel(format!("{key} holds a non-pair")))?;
            let t = coords[0].as_u64().unwrap_or(u64::MAX) as usize;
            let j = coords[1].as_u64().unwrap_or(u64::MAX) as usize;
            if t > lat.steps() || j > t {
                return Err(SolverError::InvalidModel(format!(
                    "{key}: ({t}, {j}) outside the lattice"
                )));
            }
            let node = lat.core().slice(t).start + j;
            rule.marks[node] = true;
        }
        Ok(rule)
    };
    Ok((pick("buyer_stops")?, pick("seller_stops")?))
}

fn cmd_selftest(args: &SelftestArgs) -> Result<u8, SolverError> {
    let cfg = SuiteConfig {
        seed: args.seed,
        n_trees: args.trees,
        dual_samples: args.samples,
        inject_fault: args.inject_fault,
    };
    let mut ok = true;
    for (title, report) in
        [("valuation properties", property_suite(&cfg)?), ("game iteration", game_suite(&cfg)?)]
    {
        say!("{title}:");
        for line in &report.lines {
            say!(
                "  {} {} (worst {:.3e}, tolerance {:.1e})",
                if line.passed() { "PASS" } else { "FAIL" },
                line.name,
                line.worst,
                line.tolerance
            );
        }
        ok &= report.passed();
    }
    Ok(if ok { 0 } else { EXIT_VERIFICATION })
}
