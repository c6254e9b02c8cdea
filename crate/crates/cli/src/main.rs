use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use coexist_core::channel::build_channels;
use coexist_core::ei::{delay_budget, upload_delay, ul_rate, DelayMode, Representation};
use coexist_core::evaluator::{run_sweep_on, write_diagnostics_csv, write_tradeoff_csv, SweepOptions};
use coexist_core::framesim::{simulate_with_placement, UlPlacement};
use coexist_core::scenario::{linspace01, load_scenario_file, Scenario};
use coexist_core::solver::{solve_compute_unaware, solve_problem_p};
use coexist_core::verify::{run_verify, Fault, VerifyOptions};
use coexist_core::Error;

mod manifest;

use manifest::RunManifest;

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_VERIFICATION: u8 = 3;
const MAX_VERIFY_F: usize = 6;

#[derive(Parser)]
#[command(name = "coexist", version, about = "ISAC and edge-inference resource allocation")]
struct Cli {
    /// Worker threads (0 uses all cores). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario file and print its derived constants.
    Validate { scenario: PathBuf },

    /// Solve one allocation and print it as JSON.
    Solve {
        scenario: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0.5)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = StrategyArg::Aware)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Estimate goal effectiveness with this many trials.
        #[arg(long)]
        trials: Option<u64>,
        /// Include per-subcarrier powers.
        #[arg(long)]
        powers: bool,
    },

    /// Sweep sigma for every model and strategy; writes tradeoff.csv,
    /// diagnostics.csv and manifest.json.
    Sweep {
        scenario: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "COEXIST_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
        /// Monte-Carlo trials per goal-effectiveness estimate.
        #[arg(long)]
        trials: Option<u64>,
        /// Replace the scenario's sigma grid by this many points on [0, 1].
        #[arg(long)]
        sigma_points: Option<usize>,
    },

    /// Run the frame-level TDD simulator; writes frames.csv, batches.csv and
    /// manifest.json.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        model: String,
        /// Bottleneck size.
        #[arg(long)]
        c: u32,
        /// UL fraction of each frame; defaults to the planned split.
        #[arg(long)]
        rho_ul: Option<f64>,
        #[arg(long, default_value_t = 100)]
        batches: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = PlacementArg::Tail)]
        placement: PlacementArg,
        #[arg(long, env = "COEXIST_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
    },

    /// Cross-check the solver and the CRB algebra against reference
    /// computations on random instances.
    Verify {
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 4)]
        max_f: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale solver powers by this factor before checking.
        #[arg(long, hide = true)]
        inject_fault: Option<f64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Aware,
    Unaware,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlacementArg {
    Tail,
    Head,
}

/// Failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn io(context: &str, e: impl std::fmt::Display) -> Self {
        Failure {
            code: EXIT_IO,
            message: format!("{context}: {e}"),
        }
    }

    fn validation(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_VALIDATION,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. } => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_scenario(path: &Path) -> Result<(Scenario, String), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(&format!("reading {}", path.display()), e))?;
    let scenario = load_scenario_file(path)?;
    Ok((scenario, text))
}

fn create_dir(dir: &Path) -> CmdResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::io(&format!("creating {}", dir.display()), e))
}

fn cmd_validate(path: &Path) -> CmdResult {
    let (s, _) = read_scenario(path)?;
    let dc = s.derived_constants();
    println!("{}: ok", path.display());
    println!("  subcarriers        {} x {} Hz", s.num_sc, s.sc_spacing_hz);
    println!("  wavelength         {:.6e} m", dc.wavelength_m);
    println!("  noise per SC       {:.6e} W", dc.noise_power_w_per_sc);
    println!(
        "  distances (m)      device {:.3}, user {:.3}, target {:.3}",
        dc.distances_m.ei_device, dc.distances_m.dl_user, dc.distances_m.target
    );
    println!(
        "  angles (rad)       device {:.6}, user {:.6}, target {:.6}",
        dc.angles_rad.ei_device, dc.angles_rad.dl_user, dc.angles_rad.target
    );
    let names: Vec<&str> = s.models.iter().map(|m| m.name.as_str()).collect();
    println!("  models             {}", names.join(", "));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_solve(
    path: &Path,
    model_name: &str,
    sigma: f64,
    strategy: StrategyArg,
    seed: u64,
    trials: Option<u64>,
    powers: bool,
) -> CmdResult {
    let (s, _) = read_scenario(path)?;
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Failure::validation(format!("--sigma must lie in [0, 1], got {sigma}")));
    }
    let model = s
        .model(model_name)
        .ok_or_else(|| Failure::validation(format!("unknown model `{model_name}`")))?;
    let cs = build_channels(&s, seed)?;
    let alloc = match strategy {
        StrategyArg::Aware => solve_problem_p(&s, &cs, model, sigma),
        StrategyArg::Unaware => {
            let planning = s.heaviest_model().expect("validated scenario has models");
            solve_compute_unaware(&s, &cs, planning, sigma)
        }
    };
    let ge = match (trials, alloc.c_choice) {
        (Some(n), Some(c)) if alloc.feasible => {
            let rep = Representation::new(&s, c)?;
            let mi = s.models.iter().position(|m| m.name == model.name).unwrap_or(0);
            Some(coexist_core::ei::goal_effectiveness(
                &s,
                rep,
                model,
                alloc.rho_dl,
                &cs,
                n,
                coexist_core::evaluator::model_seed(seed, mi),
            ))
        }
        _ => None,
    };
    let failures: Vec<_> = alloc
        .failures
        .iter()
        .map(|(c, why)| json!({ "c": c, "reason": why }))
        .collect();
    let mut out = json!({
        "model": model.name,
        "strategy": match strategy { StrategyArg::Aware => "aware", StrategyArg::Unaware => "unaware" },
        "sigma": sigma,
        "feasible": alloc.feasible,
        "c": alloc.c_choice,
        "n_b": alloc.n_b,
        "rho_dl": finite(alloc.rho_dl),
        "objective": finite(alloc.objective),
        "total_power_w": finite(alloc.total_power_w),
        "crb_rad2": finite(alloc.achieved_crb),
        "rate_bps": finite(alloc.achieved_rate_bps),
        "kkt_residual": finite(alloc.kkt_residual),
        "lambda": finite(alloc.lambda),
        "mu": finite(alloc.mu),
        "goal_effectiveness": ge,
        "rejected": failures,
    });
    if powers {
        out["p_dl_w"] = json!(alloc.p_dl);
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
    Ok(())
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn cmd_sweep(
    path: &Path,
    seed: u64,
    out_dir: &Path,
    trials: Option<u64>,
    sigma_points: Option<usize>,
    jobs: usize,
) -> CmdResult {
    let (s, text) = read_scenario(path)?;
    let mut opts = SweepOptions::from_scenario(&s);
    if let Some(n) = sigma_points {
        if n == 0 {
            return Err(Failure::validation("--sigma-points must be at least 1"));
        }
        opts.sigma_grid = linspace01(n);
    }
    if let Some(t) = trials {
        if t == 0 {
            return Err(Failure::validation("--trials must be at least 1"));
        }
        opts.trials = t;
    }
    let cs = build_channels(&s, seed)?;
    info!(
        "sweeping {} sigma values x {} models with {} trials",
        opts.sigma_grid.len(),
        s.models.len(),
        opts.trials
    );
    let result = run_sweep_on(&s, &cs, seed, &opts)?;

    create_dir(out_dir)?;
    let mut manifest = RunManifest::new(
        "sweep",
        path,
        &text,
        seed,
        json!({ "trials": opts.trials, "sigma_points": opts.sigma_grid.len(), "jobs": jobs }),
    );
    let mut tradeoff = Vec::new();
    write_tradeoff_csv(&result.points, &mut tradeoff).map_err(|e| Failure::io("formatting tradeoff.csv", e))?;
    let mut diagnostics = Vec::new();
    write_diagnostics_csv(&result.diagnostics, &mut diagnostics)
        .map_err(|e| Failure::io("formatting diagnostics.csv", e))?;
    for (name, bytes) in [("tradeoff.csv", &tradeoff), ("diagnostics.csv", &diagnostics)] {
        manifest
            .write_output(out_dir, name, bytes)
            .map_err(|e| Failure::io(&format!("writing {name}"), e))?;
    }
    manifest.save(out_dir).map_err(|e| Failure::io("writing manifest.json", e))?;
    let infeasible = result.points.iter().filter(|p| !p.feasible).count();
    println!(
        "wrote {} points ({infeasible} infeasible) to {}",
        result.points.len(),
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    path: &Path,
    model_name: &str,
    c: u32,
    rho_ul: Option<f64>,
    batches: u64,
    seed: u64,
    placement: PlacementArg,
    out_dir: &Path,
) -> CmdResult {
    let (s, text) = read_scenario(path)?;
    let model = s
        .model(model_name)
        .ok_or_else(|| Failure::validation(format!("unknown model `{model_name}`")))?;
    let rep = Representation::new(&s, c)?;
    let cs = build_channels(&s, seed)?;
    let rho_ul = match rho_ul {
        Some(r) => r,
        None => {
            let budget = delay_budget(&s, &cs, rep, model.planning_delay_s());
            if let Some(v) = budget.violation {
                return Err(Failure::validation(format!(
                    "no planned split for c={c} with {}: {v}; pass --rho-ul",
                    model.name
                )));
            }
            1.0 - budget.rho_dl_star
        }
    };
    let placement = match placement {
        PlacementArg::Tail => UlPlacement::Tail,
        PlacementArg::Head => UlPlacement::Head,
    };
    let trace = simulate_with_placement(&s, &cs, rep, model, rho_ul, batches, seed, placement)?;

    create_dir(out_dir)?;
    let mut manifest = RunManifest::new(
        "simulate",
        path,
        &text,
        seed,
        json!({ "model": model.name, "c": c, "rho_ul": rho_ul, "batches": batches }),
    );
    let mut frames = Vec::new();
    trace.write_frames_csv(&mut frames).map_err(|e| Failure::io("formatting frames.csv", e))?;
    let mut batch_rows = Vec::new();
    trace.write_batches_csv(&mut batch_rows).map_err(|e| Failure::io("formatting batches.csv", e))?;
    for (name, bytes) in [("frames.csv", &frames), ("batches.csv", &batch_rows)] {
        manifest
            .write_output(out_dir, name, bytes)
            .map_err(|e| Failure::io(&format!("writing {name}"), e))?;
    }
    manifest.save(out_dir).map_err(|e| Failure::io("writing manifest.json", e))?;

    let rate = ul_rate(&s, &cs, rho_ul);
    let ceil_delay = upload_delay(rep.n_b as f64, rate, s.frame_duration_s, DelayMode::Exact);
    let approx_delay = upload_delay(rep.n_b as f64, rate, s.frame_duration_s, DelayMode::Approximate);
    let success = trace
        .batches
        .iter()
        .filter(|b| b.l_tot_s <= s.requirements.l_max_s)
        .count();
    println!("rho_ul {rho_ul:.6}, {} frames, {} batches", trace.frames.len(), trace.batches.len());
    println!("  L_comm per batch   {:.6e} s (ceiling form {ceil_delay:.6e} s, n_b/R {approx_delay:.6e} s)", trace.batches.first().map_or(f64::NAN, |b| b.l_comm_s));
    println!("  within L_max       {success}/{}", trace.batches.len());
    Ok(())
}

fn cmd_verify(instances: usize, max_f: usize, seed: u64, inject_fault: Option<f64>) -> CmdResult {
    if max_f == 0 || max_f > MAX_VERIFY_F {
        return Err(Failure::validation(format!(
            "--max-f must lie in 1..={MAX_VERIFY_F}, got {max_f}"
        )));
    }
    let report = run_verify(&VerifyOptions {
        instances,
        max_f,
        seed,
        fault: inject_fault.map(Fault::ScaleSolverPower),
    });
    print!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VERIFICATION,
            message: "verification failed; replay a violation with its seed".into(),
        })
    }
}

fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Validate { scenario } => cmd_validate(&scenario),
        Command::Solve {
            scenario,
            model,
            sigma,
            strategy,
            seed,
            trials,
            powers,
        } => cmd_solve(&scenario, &model, sigma, strategy, seed, trials, powers),
        Command::Sweep {
            scenario,
            seed,
            out_dir,
            trials,
            sigma_points,
        } => cmd_sweep(&scenario, seed, &out_dir, trials, sigma_points, cli.jobs),
        Command::Simulate {
            scenario,
            model,
            c,
            rho_ul,
            batches,
            seed,
            placement,
            out_dir,
        } => cmd_simulate(&scenario, &model, c, rho_ul, batches, seed, placement, &out_dir),
        Command::Verify {
            instances,
            max_f,
            seed,
            inject_fault,
        } => cmd_verify(instances, max_f, seed, inject_fault),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build();
    let result = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(Failure::io("starting worker threads", e)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
