//! Batch front end for separable-effects analyses.
//!
//! Exit status: 0 ok, 1 data findings, 2 usage, 3 model failure,
//! 4 positivity breach, 5 internal.

mod config;
mod error;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};
use separable::causal_graph::{check_dismissible, classify, CausalGraph, LPartition};
use separable::estimators::BootstrapOptions;
use separable::event_history::{read_long_csv, save_long_csv, validate, ReadOptions};
use separable::oracle::{simulate, DgpSpec};
use separable::par::Execution;

use config::RunConfig;
use error::{usage, CliError, CliResult};
use pipeline::{manifest_text, sha256_hex, write_file, Plan};

#[derive(Parser)]
#[command(name = "separable", version, about = "Separable effects with competing events in discrete time")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a long-format dataset against the structural rules.
    Validate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the data path in the config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Classify a causal graph: isolation, common-cause splits and the
    /// dismissible conditions.
    CheckGraph {
        graph: PathBuf,
        /// Check only this partition: comma-separated covariates in the A_Y
        /// block (an empty string puts every covariate in the A_D block).
        #[arg(long)]
        ay: Option<String>,
    },
    /// Simulate a trial from a data-generating process.
    Simulate {
        #[arg(long)]
        dgp: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Point estimates of the risk curves and effects.
    Estimate(RunArgs),
    /// Point estimates with percentile bootstrap intervals.
    Bootstrap(RunArgs),
    /// Outcome-weighted estimates over a grid of sensitivity offsets.
    Sensitivity(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Simulation seed for a DGP source; for `bootstrap`, the resampling seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

fn read_config(path: &Path) -> CliResult<(RunConfig, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    cfg.resolve(path.parent().unwrap_or(Path::new(".")));
    Ok((cfg, text))
}

fn cmd_validate(config: &Path, data: Option<PathBuf>) -> CliResult<()> {
    let (mut cfg, _) = read_config(config)?;
    if let Some(d) = data {
        cfg.data = Some(d);
        cfg.dgp = None;
    }
    if let Some(path) = &cfg.data {
        let schema = cfg.declared_schema()?;
        let horizon = cfg.horizon.ok_or_else(|| usage("config: missing key horizon"))?;
        let ds = read_long_csv(path, &schema, horizon, ReadOptions { locf: cfg.locf })?;
        let report = validate(&ds);
        println!("{report}");
        if !report.is_clean() {
            return Err(CliError::Findings(report.findings.len()));
        }
        return Ok(());
    }
    let (ds, _) = pipeline::load_dataset(&cfg, None)?;
    println!("{}", validate(&ds));
    Ok(())
}

fn cmd_check_graph(path: &Path, ay: Option<String>) -> CliResult<()> {
    let text = std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let g = CausalGraph::parse(&text)?;
    if let Some(list) = ay {
        let names: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        let lp = LPartition::with_ay(&g, &names);
        let report = check_dismissible(&g, &lp)?;
        println!("{lp}: {}", if report.all_hold() { "all conditions hold" } else { "fails" });
        println!("{report}");
        return Ok(());
    }
    let summary = classify(&g)?;
    println!("{}", summary.headline());
    println!("isolation: {}", summary.isolation);
    println!("common-cause splits passing: {} of {}", summary.zk_splits.len(), summary.zk_total);
    for s in &summary.zk_splits {
        println!("  Z_AY={{{}}} Z_AD={{{}}}", s.ay.join(","), s.ad.join(","));
    }
    println!("partitions passing: {} of {}", summary.passing_partitions.len(), summary.partition_total);
    let measured: Vec<String> =
        g.nodes().iter().filter(|n| n.kind.is_measured_covariate()).map(|n| n.label.clone()).collect();
    for m in 0..summary.partition_total {
        let ay: Vec<&str> = measured.iter().enumerate().filter(|(i, _)| m >> i & 1 == 1).map(|(_, l)| l.as_str()).collect();
        let lp = LPartition::with_ay(&g, &ay);
        let report = check_dismissible(&g, &lp)?;
        println!("{lp}: {}", if report.all_hold() { "all conditions hold" } else { "fails" });
        println!("{report}");
    }
    Ok(())
}

fn cmd_simulate(dgp: &Path, n: usize, seed: u64, out: &Path) -> CliResult<()> {
    let spec = DgpSpec::from_path(dgp)?;
    let ds = simulate(&spec, n, seed, Execution::Parallel)?;
    std::fs::create_dir_all(out).map_err(|source| CliError::Output { path: out.display().to_string(), source })?;
    let data = out.join("data.csv");
    save_long_csv(&ds, &data)?;
    let dgp_text = std::fs::read(dgp).map_err(|e| usage(format!("cannot read {}: {e}", dgp.display())))?;
    let schema: Vec<Value> = ds
        .schema()
        .entries()
        .iter()
        .map(|c| json!({"name": c.name, "kind": format!("{:?}", c.kind), "timing": format!("{:?}", c.timing)}))
        .collect();
    let manifest = json!({
        "command": "simulate",
        "version": env!("CARGO_PKG_VERSION"),
        "dgp": dgp.display().to_string(),
        "dgp_sha256": sha256_hex(&dgp_text),
        "n": n,
        "seed": seed,
        "horizon": ds.horizon(),
        "schema": schema,
        "records": ds.records().len(),
    });
    write_file(out, "manifest.json", &manifest_text(&manifest))?;
    println!("{}", data.display());
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum RunKind {
    Estimate,
    Bootstrap,
    Sensitivity,
}

fn cmd_run(kind: RunKind, args: &RunArgs) -> CliResult<()> {
    let (cfg, text) = read_config(&args.config)?;
    let sim_seed = if kind == RunKind::Bootstrap { None } else { args.seed };
    let (ds, source) = pipeline::load_dataset(&cfg, sim_seed)?;
    let plan = Plan::new(&cfg, &ds)?;
    let mut manifest = json!({
        "command": match kind { RunKind::Estimate => "estimate", RunKind::Bootstrap => "bootstrap", RunKind::Sensitivity => "sensitivity" },
        "version": env!("CARGO_PKG_VERSION"),
        "config": text,
        "config_sha256": sha256_hex(text.as_bytes()),
        "source": source,
        "subjects": ds.n_subjects(),
        "records": ds.records().len(),
        "partition": {"ay": plan.partition.ay_names(ds.schema())},
    });

    let mut written = Vec::new();
    if kind == RunKind::Sensitivity {
        let (grid, ns) = pipeline::sensitivity_grid(&ds, &cfg, &plan)?;
        manifest["diagnostics"] = pipeline::model_diagnostics(&ns);
        written.push(write_file(&args.out, "sensitivity.csv", &grid)?);
    } else {
        let est = pipeline::estimate(&ds, &plan)?;
        let ci = if kind == RunKind::Bootstrap {
            let opts = BootstrapOptions {
                resamples: cfg.bootstrap.resamples,
                seed: args.seed.unwrap_or(cfg.bootstrap.seed),
                level: cfg.bootstrap.level,
                ..Default::default()
            };
            let b = pipeline::bootstrap(&ds, &plan, &opts)?;
            manifest["bootstrap"] =
                json!({"resamples": opts.resamples, "succeeded": b.resamples, "failed": b.failed, "seed": opts.seed, "level": opts.level});
            Some(b)
        } else {
            None
        };
        if let Some(ns) = &est.models {
            manifest["diagnostics"] = pipeline::model_diagnostics(ns);
        }
        manifest["weights"] = pipeline::weight_summaries(&ds, &est)?;
        manifest["clipped"] = pipeline::clipped(&est);
        let (curves, effects) = pipeline::render(&est, ci.as_ref());
        written.push(write_file(&args.out, "results.csv", &curves)?);
        written.push(write_file(&args.out, "effects.csv", &effects)?);
    }
    manifest["outputs"] = json!(written.iter().map(|p| p.file_name().unwrap().to_string_lossy()).collect::<Vec<_>>());
    written.push(write_file(&args.out, "manifest.json", &manifest_text(&manifest))?);
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Validate { config, data } => cmd_validate(config, data.clone()),
        Command::CheckGraph { graph, ay } => cmd_check_graph(graph, ay.clone()),
        Command::Simulate { dgp, n, seed, out } => cmd_simulate(dgp, *n, *seed, out),
        Command::Estimate(a) => cmd_run(RunKind::Estimate, a),
        Command::Bootstrap(a) => cmd_run(RunKind::Bootstrap, a),
        Command::Sensitivity(a) => cmd_run(RunKind::Sensitivity, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
