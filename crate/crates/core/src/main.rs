use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use ftcsim::engine::{self, FixedTimeBound};
use ftcsim::observer;
use ftcsim::report;
use ftcsim::scenario::{load_scenario, ModeSection};
use ftcsim::Error;

const EXIT_OK: u8 = 0;
const EXIT_CONFIG: u8 = 1;
const EXIT_DIVERGENCE: u8 = 2;
const EXIT_GAINS: u8 = 3;

#[derive(Parser)]
#[command(name = "ftcsim", version, about = "Event-triggered fixed-time consensus simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export trace, summary, and optional figures.
    Run(RunArgs),
    /// Evaluate the fixed-time settling bound, optionally verifying it
    /// against the scalar comparison ODE.
    Bound(BoundArgs),
    /// Report observer companion eigenvalues, Hurwitz verdict, and the
    /// Lyapunov certificate.
    CheckGains(CheckGainsArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (created if absent).
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// Override the scenario's integration step, in seconds.
    #[arg(long)]
    dt: Option<f64>,
    /// Override the scenario's horizon, in seconds.
    #[arg(long)]
    t_final: Option<f64>,
    /// Override the trigger mode.
    #[arg(long, value_enum)]
    mode: Option<CliMode>,
    /// Also emit SVG figures (tracking, estimates, event raster).
    #[arg(long)]
    emit_svg: bool,
    /// Write the effective scenario (after flag overrides) to this path.
    #[arg(long)]
    dump_effective_config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliMode {
    Event,
    Periodic,
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    a: f64,
    #[arg(long)]
    b: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    #[arg(long)]
    fraction: f64,
    /// Integrate the comparison ODE and report the entry time.
    #[arg(long)]
    verify: bool,
    /// Initial value for --verify.
    #[arg(long, default_value_t = 1.0)]
    v0: f64,
    /// Integration step for --verify.
    #[arg(long, default_value_t = 1e-4)]
    dt: f64,
}

#[derive(Args)]
struct CheckGainsArgs {
    /// Take gains (and rho) from a scenario file, one report per agent.
    #[arg(long, conflicts_with_all = ["gains", "rho"])]
    scenario: Option<PathBuf>,
    /// Comma-separated observer gains, e.g. "-15,-80".
    #[arg(long, allow_hyphen_values = true)]
    gains: Option<String>,
    /// Lyapunov right-hand-side scale.
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
}

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Verbosity {
    Quiet,
    Info,
    Debug,
}

fn verbosity() -> Verbosity {
    match std::env::var("FXC_LOG").as_deref() {
        Ok("quiet") => Verbosity::Quiet,
        Ok("debug") => Verbosity::Debug,
        _ => Verbosity::Info,
    }
}

fn info(msg: &str) {
    if verbosity() >= Verbosity::Info {
        eprintln!("{msg}");
    }
}

fn debug(msg: &str) {
    if verbosity() >= Verbosity::Debug {
        eprintln!("[debug] {msg}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bound(args) => cmd_bound(args),
        Command::CheckGains(args) => cmd_check_gains(args),
    };
    ExitCode::from(code)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Divergence { .. } | Error::NonFiniteState { .. } => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn cmd_run(args: RunArgs) -> u8 {
    let (mut file, _) = match load_scenario(&args.scenario) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Some(dt) = args.dt {
        file.sim.dt = dt;
    }
    if let Some(t_final) = args.t_final {
        file.sim.t_final = t_final;
    }
    if let Some(mode) = args.mode {
        file.sim.mode = match mode {
            CliMode::Event => ModeSection::Event,
            CliMode::Periodic => ModeSection::Periodic,
        };
    }
    if let Some(path) = &args.dump_effective_config {
        if let Err(e) = std::fs::write(path, file.to_json()) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
        info(&format!("effective config written to {}", path.display()));
    }
    let scenario = match file.build() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    debug(&format!(
        "running {} agents, order {}, dt = {}, t_final = {}",
        scenario.agents.len(),
        scenario.order(),
        scenario.dt,
        scenario.t_final
    ));
    let trace = match engine::run(&scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let kappa1: Vec<f64> = scenario.agents.iter().map(|a| a.params.kappa[0]).collect();
    let tail_start = scenario.t_final / 4.0;
    let mut text = format!(
        "scenario: {}\nmode override: {}\ndt override: {}\nt_final override: {}\n",
        args.scenario.display(),
        args.mode.map(|_| "yes").unwrap_or("no"),
        args.dt.map(|v| v.to_string()).unwrap_or_else(|| "no".into()),
        args.t_final.map(|v| v.to_string()).unwrap_or_else(|| "no".into()),
    );
    match report::summary(&trace, &kappa1, tail_start, 0.1) {
        Ok(s) => text.push_str(&s),
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code_for(&e);
        }
    }
    let csv_path = args.out.join("trace.csv");
    let summary_path = args.out.join("summary.txt");
    if let Err(e) = std::fs::write(&csv_path, report::trace_to_csv(&trace)) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if let Err(e) = std::fs::write(&summary_path, &text) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if args.emit_svg {
        if let Err(e) = report::write_svgs(&trace, &args.out) {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    info(&format!(
        "wrote {} and {}",
        csv_path.display(),
        summary_path.display()
    ));
    print!("{text}");
    EXIT_OK
}

fn cmd_bound(args: BoundArgs) -> u8 {
    let bound = FixedTimeBound {
        a_bar: args.a,
        b_bar: args.b,
        alpha_exp: args.alpha,
        beta_exp: args.beta,
        c_bar: args.c,
        fraction: args.fraction,
    };
    let t_max = match engine::settling_bound(&bound) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    println!("T_max = {t_max}");
    if args.verify {
        match engine::verify_fixed_time(&bound, args.v0, args.dt) {
            Ok(out) => {
                if out.entered {
                    println!("entered residual set at t = {}", out.t_enter);
                } else {
                    println!("did not enter residual set before T_max = {t_max}");
                }
            }
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    EXIT_OK
}

fn report_gains(label: &str, gains: &[f64], rho: f64) -> u8 {
    let gains = DVector::from_row_slice(gains);
    let chi = match observer::companion_matrix(&gains) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let eigs = chi.complex_eigenvalues();
    let rendered: Vec<String> = eigs.iter().map(|e| format!("{:.6}{:+.6}i", e.re, e.im)).collect();
    println!("{label} eigenvalues: {}", rendered.join(", "));
    let hurwitz = observer::is_hurwitz(&chi).unwrap();
    println!("{label} Hurwitz: {}", if hurwitz { "yes" } else { "no" });
    if !hurwitz {
        return EXIT_GAINS;
    }
    match observer::solve_lyapunov(&chi, rho) {
        Ok(cert) => {
            println!("{label} Lyapunov residual: {:.3e}", cert.residual);
            println!("{label} min eigenvalue of H: {:.6}", cert.min_eigenvalue());
            println!(
                "{label} margin lambda_max(H chi + chi^T H + (2+n)I): {:.6}",
                observer::stability_margin(&cert, &chi)
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_GAINS
        }
    }
}

fn cmd_check_gains(args: CheckGainsArgs) -> u8 {
    if let Some(path) = &args.scenario {
        let (file, _) = match load_scenario(path) {
            Ok(v) => v,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        };
        let mut worst = EXIT_OK;
        for (i, agent) in file.agents.iter().enumerate() {
            let code = report_gains(
                &format!("agent {}:", i + 1),
                &agent.observer.gains,
                agent.observer.rho,
            );
            worst = worst.max(code);
        }
        return worst;
    }
    let Some(raw) = &args.gains else {
        eprintln!("error: provide --scenario or --gains");
        return EXIT_CONFIG;
    };
    let parsed: std::result::Result<Vec<f64>, _> =
        raw.split(',').map(|s| s.trim().parse::<f64>()).collect();
    match parsed {
        Ok(gains) if !gains.is_empty() => report_gains("gains:", &gains, args.rho),
        _ => {
            eprintln!("error: could not parse --gains {raw:?} as comma-separated reals");
            EXIT_CONFIG
        }
    }
}
