//! `quantdmpc` command-line front end.
//!
//! Every subcommand reads one TOML run configuration, writes CSV files and an
//! echo of the effective configuration into the output directory, and exits
//! with a code chosen by the error family (see `--help`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use quantdmpc::config::RunConfig;
use quantdmpc::design::optimize_design;
use quantdmpc::dmpc::formation_references;
use quantdmpc::sim::benchmark::{benchmark_random_qp, benchmark_rho};
use quantdmpc::sim::{formation_rho, run_closed_loop, ClosedLoopLog, FormationScenario, OfflineStage, RhoSource};
use quantdmpc::{Error, QuantizationDesign, Result};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  command-line usage error
  2  configuration error (parse failure, missing or unknown field, bad value)
  3  problem construction error (graph, dimensions, convexity, layout)
  4  quantizer or codec error
  5  design error (no feasible design, infeasible subproblem)
  6  solver error (projection, oracle, iteration budget)
  7  vehicle model error (singularity, controllability, Riccati)
  8  file or CSV error";

#[derive(Debug, Parser)]
#[command(name = "quantdmpc", version, about = "Quantized distributed MPC toolkit", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace the seed of the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Print key results as `key = value` lines.
    #[arg(long)]
    summary: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Optimize the quantization design; writes design.toml and design_grid.csv.
    Design {
        #[command(flatten)]
        common: Common,
    },
    /// Random-QP benchmark; writes benchmark.csv (one file per seed with --seeds).
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Run this many consecutive seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Closed-loop formation run; writes trajectory, sub-optimality and formation CSVs.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Fixed design `κ,n,K,Cα,Cβ` replacing the offline search.
        #[arg(long, value_parser = parse_design)]
        design: Option<QuantizationDesign>,
    },
    /// Estimate the drift bound ρ; writes rho.csv.
    RhoEstimate {
        #[command(flatten)]
        common: Common,
    },
    /// Print a starting configuration to standard output.
    Template {
        #[arg(value_enum)]
        kind: TemplateKind,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TemplateKind {
    Design,
    Benchmark,
    Convergence,
    Disturbed,
}

fn parse_design(s: &str) -> std::result::Result<QuantizationDesign, String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 5 {
        return Err("expected κ,n,K,Cα,Cβ".into());
    }
    let f = |i: usize| parts[i].parse::<f64>().map_err(|e| format!("{}: {e}", parts[i]));
    let u = |i: usize| parts[i].parse::<u32>().map_err(|e| format!("{}: {e}", parts[i]));
    Ok(QuantizationDesign::manual(f(0)?, u(1)?, u(2)?, f(3)?, f(4)?))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.family().exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Design { common } => cmd_design(&common),
        Command::Benchmark { common, seeds } => cmd_benchmark(&common, seeds),
        Command::Simulate { common, design } => cmd_simulate(&common, design),
        Command::RhoEstimate { common } => cmd_rho(&common),
        Command::Template { kind } => template(kind),
    }
}

/// Load the configuration, apply the seed override and echo it to the output directory.
fn prepare(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&common.out)?;
    fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
    Ok(cfg)
}

fn missing(section: &str) -> Error {
    Error::Config(format!("missing field `{section}`"))
}

fn cmd_design(common: &Common) -> Result<String> {
    let cfg = prepare(common)?;
    let d = cfg.design.as_ref().ok_or_else(|| missing("design"))?;
    let params = d.bound_params()?;
    let search = optimize_design(&params, &d.options)?;
    let report = search.report();
    fs::write(common.out.join("design.toml"), &report)?;
    search.write_grid_csv(&common.out.join("design_grid.csv"))?;
    let mut s = String::new();
    if common.summary {
        let b = &search.best;
        let _ = writeln!(s, "kappa = {}", b.kappa);
        let _ = writeln!(s, "bits = {}", b.bits);
        let _ = writeln!(s, "iterations = {}", b.iterations);
        let _ = writeln!(s, "c_alpha = {}", b.c_alpha);
        let _ = writeln!(s, "c_beta = {}", b.c_beta);
        let _ = writeln!(s, "epsilon = {}", b.epsilon);
        let _ = writeln!(s, "gamma = {}", params.gamma());
        let _ = writeln!(s, "grid_rows = {}", search.grid.len());
        let _ = writeln!(s, "kappa_values = {}", search.kappas.len());
    }
    Ok(s)
}

fn cmd_benchmark(common: &Common, seeds: u64) -> Result<String> {
    let cfg = prepare(common)?;
    let bc = cfg.benchmark.as_ref().ok_or_else(|| missing("benchmark"))?;
    if seeds == 0 {
        return Err(Error::Config("--seeds must be positive".into()));
    }
    let mut s = String::new();
    for k in 0..seeds {
        let seed = cfg.seed.wrapping_add(k);
        let report = benchmark_random_qp(bc, seed)?;
        let name = if seeds == 1 { "benchmark.csv".to_string() } else { format!("benchmark_seed{seed}.csv") };
        report.write_csv(&common.out.join(name))?;
        if common.summary {
            let q: Vec<_> = report.quantized().collect();
            let dominated = q.iter().filter(|r| r.dominated).count();
            let _ = writeln!(s, "seed = {seed}");
            let _ = writeln!(s, "quantized_rows = {}", q.len());
            let _ = writeln!(s, "dominated_rows = {dominated}");
            let _ = writeln!(s, "unexplained_violations = {}", report.unexplained_violations().len());
        }
    }
    Ok(s)
}

fn write_run(out: &Path, prefix: &str, offline: &OfflineStage, log: &ClosedLoopLog) -> Result<()> {
    log.write_trajectory_csv(&out.join(format!("{prefix}trajectory.csv")))?;
    log.write_suboptimality_csv(&out.join(format!("{prefix}suboptimality.csv")))?;
    log.write_formation_csv(&out.join(format!("{prefix}formation.csv")))?;
    if let Some(search) = &offline.search {
        search.write_grid_csv(&out.join(format!("{prefix}design_grid.csv")))?;
    }
    Ok(())
}

fn summarize(s: &mut String, prefix: &str, scenario: &FormationScenario, offline: &OfflineStage, log: &ClosedLoopLog) -> Result<()> {
    let d = &offline.design;
    let _ = writeln!(s, "{prefix}design = \"{},{},{},{},{}\"", d.kappa, d.bits, d.iterations, d.c_alpha, d.c_beta);
    let _ = writeln!(s, "{prefix}epsilon = {}", d.epsilon);
    if let Some(r) = &offline.rho {
        let _ = writeln!(s, "{prefix}rho = {}", r.pairwise);
    }
    let spec = &scenario.dmpc;
    let refs = formation_references(scenario.initial_positions.len(), spec.leader, spec.setpoint, &spec.edges)?;
    for (i, r) in refs.iter().enumerate() {
        match log.settling_time(i, r, 0.05) {
            Some(t) => {
                let _ = writeln!(s, "{prefix}agent{i}_settling_time = {t}");
            }
            None => {
                let _ = writeln!(s, "{prefix}agent{i}_settling_time = nan");
            }
        }
    }
    if let Some(m) = log.median_suboptimality() {
        let _ = writeln!(s, "{prefix}median_suboptimality = {m:e}");
    }
    let end = log.records.last().map(|r| r.time).unwrap_or(0.0);
    let _ = writeln!(s, "{prefix}final_formation_error = {:e}", log.formation_band(end));
    let _ = writeln!(s, "{prefix}max_violation = {:e}", log.max_violation());
    let _ = writeln!(s, "{prefix}max_input_violation = {:e}", log.max_input_violation());
    Ok(())
}

fn cmd_simulate(common: &Common, design: Option<QuantizationDesign>) -> Result<String> {
    let mut cfg = prepare(common)?;
    let fc = cfg.formation.as_mut().ok_or_else(|| missing("formation"))?;
    if design.is_some() {
        fc.design = design;
        fs::write(common.out.join("config.toml"), cfg.to_toml()?)?;
    }
    let fc = cfg.formation.as_ref().expect("checked above");
    let scenario = fc.scenario(cfg.seed)?;
    let (offline, log) = run_closed_loop(&scenario, None)?;
    write_run(&common.out, "", &offline, &log)?;
    let mut s = String::new();
    if common.summary {
        summarize(&mut s, "", &scenario, &offline, &log)?;
    }
    if let Some(other) = fc.compare {
        let (offline_b, log_b) = run_closed_loop(&scenario, Some(other))?;
        write_run(&common.out, "compare_", &offline_b, &log_b)?;
        if common.summary {
            summarize(&mut s, "compare_", &scenario, &offline_b, &log_b)?;
            if let (Some(a), Some(b)) = (log.median_suboptimality(), log_b.median_suboptimality()) {
                let _ = writeln!(s, "suboptimality_ratio = {}", b / a);
            }
        }
    }
    Ok(s)
}

fn cmd_rho(common: &Common) -> Result<String> {
    let cfg = prepare(common)?;
    let mut rows = Vec::new();
    if let Some(bc) = &cfg.benchmark {
        for (i, r) in benchmark_rho(bc, cfg.seed)?.into_iter().enumerate() {
            rows.push((format!("benchmark{i}"), r));
        }
    }
    if let Some(fc) = &cfg.formation {
        let scenario = fc.scenario(cfg.seed)?;
        let (runs, steps, spread) = match scenario.rho {
            RhoSource::Sampled { runs, steps, spread } => (runs, steps, spread),
            RhoSource::Fixed { .. } => (20, scenario.steps, 0.5),
        };
        rows.push(("formation".into(), formation_rho(&scenario, runs, steps, spread)?));
    }
    if rows.is_empty() {
        return Err(Error::Config("rho-estimate needs a `benchmark` or `formation` section".into()));
    }
    let mut table = String::from("source,pairwise,consecutive,runs,samples\n");
    let mut s = String::new();
    for (name, r) in &rows {
        let _ = writeln!(table, "{name},{:e},{:e},{},{}", r.pairwise, r.consecutive, r.runs, r.samples);
        if common.summary {
            let _ = writeln!(s, "{name}_rho = {}", r.pairwise);
            let _ = writeln!(s, "{name}_consecutive = {}", r.consecutive);
        }
    }
    fs::write(common.out.join("rho.csv"), table)?;
    Ok(s)
}

fn template(kind: TemplateKind) -> Result<String> {
    let cfg = match kind {
        TemplateKind::Design => RunConfig::design_preset(),
        TemplateKind::Benchmark => RunConfig::benchmark_preset(),
        TemplateKind::Convergence => RunConfig::formation_preset(&FormationScenario::convergence())?,
        TemplateKind::Disturbed => {
            let mut c = RunConfig::formation_preset(&FormationScenario::disturbed())?;
            let f = c.formation.as_mut().expect("formation preset");
            f.design = Some(QuantizationDesign::manual(0.51, 20, 5, 65.85, 66.23));
            f.compare = Some(QuantizationDesign::manual(0.95, 30, 3, 693.51, 693.72));
            c
        }
    };
    cfg.to_toml()
}
