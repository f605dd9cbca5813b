//! `mbr` — load finite Bayesian MDP instances, compute exact regret values,
//! evaluate every regret bound, and run the randomized verification suites.
//!
//! Exit status: 0 when every asserted inequality holds, 1 when any fails,
//! 2 on usage, parse, or validation errors. Given the same seed and inputs,
//! output files are byte-identical across runs.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mbr_core::gen::{generate_random_instance, InstanceKind, SizeCaps};
use mbr_core::instance::{instance_to_json, load_instance, InstanceFile};
use mbr_core::report::{evaluate_all, report_csv_rows, report_to_json, CSV_HEADER};
use mbr_core::suites::{check_report, dpi_suite, soundness_suite, sweep_t_suite};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SOUNDNESS_COUNT: usize = 500;
const DPI_COUNT: usize = 200;

#[derive(Parser)]
#[command(
    name = "mbr",
    version,
    about = "Exact minimum Bayesian regret and bound verification for finite Bayesian MDPs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline on instance files and/or the randomized suites.
    Run(RunArgs),
    /// Generate random instance files.
    Gen(GenArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Instance files (globs allowed), evaluated by the `bounds` suite.
    #[arg(long, num_args = 0.., value_name = "GLOB")]
    instances: Vec<String>,
    /// Seed for every randomized suite.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// History-tree node budget; the MBR_NODE_BUDGET environment variable
    /// overrides it.
    #[arg(long, default_value_t = 1_000_000)]
    budget: usize,
    /// Output directory for reports and summaries.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Comma-separated suite set: bounds, soundness, dpi, sweep-T.
    #[arg(long, value_delimiter = ',', default_value = "bounds")]
    suites: Vec<String>,
    /// Comma-separated artifact formats: json, csv.
    #[arg(long, value_delimiter = ',', default_value = "json,csv")]
    emit: Vec<String>,
    /// Also dump the enumerated Thompson history tree of each instance to
    /// `out/trees/<name>.json` (debugging aid).
    #[arg(long, default_value_t = false)]
    dump_tree: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Base seed; instance i uses seed + i.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// How many instances to write.
    #[arg(long, default_value_t = 10)]
    count: usize,
    /// Size caps, e.g. s=3,a=3,y=3,theta=3,T=3.
    #[arg(long, default_value = "s=3,a=3,y=3,theta=3,T=3")]
    caps: String,
    /// Output directory for the instance files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => run(args),
        Command::Gen(args) => gen(args),
    };
    match outcome {
        Ok(0) => ExitCode::SUCCESS,
        Ok(failures) => {
            eprintln!("{failures} inequality failure(s)");
            ExitCode::from(1)
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn parse_caps(text: &str) -> Result<SizeCaps> {
    let mut caps = SizeCaps::default();
    for part in text.split(',') {
        let (key, value) = part
            .split_once('=')
            .with_context(|| format!("cap `{part}` is not key=value"))?;
        let value: usize = value
            .trim()
            .parse()
            .with_context(|| format!("cap `{part}` has a non-integer value"))?;
        if value == 0 {
            bail!("cap `{part}` must be positive");
        }
        match key.trim() {
            "s" => caps.states = value,
            "a" => caps.actions = value,
            "y" => caps.outcomes = value,
            "theta" => caps.params = value,
            "T" | "t" => caps.horizon = value,
            other => bail!("unknown cap `{other}` (expected s, a, y, theta, T)"),
        }
    }
    Ok(caps)
}

fn expand_globs(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for pattern in patterns {
        if pattern.contains('*') || pattern.contains('?') || pattern.contains('[') {
            let matches = glob::glob(pattern).with_context(|| format!("bad glob `{pattern}`"))?;
            let mut found = false;
            for entry in matches {
                paths.push(entry.context("unreadable glob entry")?);
                found = true;
            }
            if !found {
                bail!("glob `{pattern}` matched no files");
            }
        } else {
            paths.push(PathBuf::from(pattern));
        }
    }
    paths.sort();
    paths.dedup();
    Ok(paths)
}

fn write_artifact(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create {}", parent.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn run(args: RunArgs) -> Result<usize> {
    let budget = match std::env::var("MBR_NODE_BUDGET") {
        Ok(text) => text
            .parse()
            .context("MBR_NODE_BUDGET is not a non-negative integer")?,
        Err(_) => args.budget,
    };
    let emit_json = args.emit.iter().any(|e| e == "json");
    let emit_csv = args.emit.iter().any(|e| e == "csv");
    if !emit_json && !emit_csv {
        bail!("--emit must include json and/or csv");
    }
    let mut failures = 0usize;

    for suite in &args.suites {
        match suite.as_str() {
            "bounds" => {
                let paths = expand_globs(&args.instances)?;
                if paths.is_empty() {
                    bail!("the bounds suite needs --instances");
                }
                let mut csv = String::from(CSV_HEADER);
                csv.push('\n');
                for path in &paths {
                    let (file, instance) = load_instance(path)?;
                    // An instance file may override the discrete default
                    // metric on the joint outcome-state cells.
                    let config = match &file.product_metric {
                        Some(matrix) => {
                            let metric = mbr_core::info::FiniteMetric::new(matrix.clone())
                                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
                            let (psi, _) =
                                mbr_core::planning::optimal_policy_known_theta(instance.base());
                            Some(
                                mbr_core::bounds::BoundConfig::with_product_metric(
                                    &instance, &psi, metric,
                                )
                                .map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?,
                            )
                        }
                        None => None,
                    };
                    let report = evaluate_all(&instance, &file.name, config.as_ref(), budget)
                        .map_err(|e| anyhow::anyhow!("evaluating {}: {e}", path.display()))?;
                    let mut report_failures = Vec::new();
                    check_report(&report, &mut report_failures);
                    for failure in &report_failures {
                        eprintln!("bounds: {failure}");
                    }
                    failures += report_failures.len();
                    if emit_json {
                        write_artifact(
                            &args.out.join("reports").join(format!("{}.json", file.name)),
                            &report_to_json(&report),
                        )?;
                    }
                    if args.dump_tree {
                        let spec = instance.base();
                        let (psi, _) = mbr_core::planning::optimal_policy_known_theta(spec);
                        let tree = mbr_core::planning::thompson_policy(spec, &psi, budget)
                            .map_err(|e| anyhow::anyhow!("tree dump for {}: {e}", file.name))?;
                        write_artifact(
                            &args.out.join("trees").join(format!("{}.json", file.name)),
                            &mbr_core::report::tree_to_json(&tree),
                        )?;
                    }
                    csv.push_str(&report_csv_rows(&report));
                }
                if emit_csv {
                    write_artifact(&args.out.join("bounds.csv"), &csv)?;
                }
            }
            "soundness" => {
                let outcome =
                    soundness_suite(args.seed, SOUNDNESS_COUNT, &SizeCaps::default(), budget)
                        .map_err(|e| anyhow::anyhow!("soundness suite: {e}"))?;
                for failure in &outcome.failures {
                    eprintln!("soundness: {failure}");
                }
                failures += outcome.failures.len();
                if emit_csv {
                    let mut csv = String::from(CSV_HEADER);
                    csv.push('\n');
                    for report in &outcome.reports {
                        csv.push_str(&report_csv_rows(report));
                    }
                    write_artifact(&args.out.join("soundness.csv"), &csv)?;
                }
                if emit_json {
                    let doc = json!({
                        "schema_version": mbr_core::report::SCHEMA_VERSION,
                        "suite": "soundness",
                        "seed": args.seed,
                        "instances": outcome.reports.len(),
                        "failures": outcome.failures,
                    });
                    write_artifact(
                        &args.out.join("soundness_summary.json"),
                        &format!("{}\n", serde_json::to_string_pretty(&doc)?),
                    )?;
                }
            }
            "dpi" => {
                let outcome = dpi_suite(args.seed, DPI_COUNT, budget)
                    .map_err(|e| anyhow::anyhow!("dpi suite: {e}"))?;
                for failure in &outcome.failures {
                    eprintln!("dpi: {failure}");
                }
                failures += outcome.failures.len();
                if emit_csv {
                    let mut csv =
                        String::from("triple_id,knowledge_value,processed_value,slack,holds\n");
                    for r in &outcome.results {
                        csv.push_str(&format!(
                            "{},{},{},{},{}\n",
                            r.triple_id,
                            r.knowledge_value,
                            r.processed_value,
                            r.knowledge_value - r.processed_value,
                            r.holds
                        ));
                    }
                    write_artifact(&args.out.join("dpi.csv"), &csv)?;
                }
                if emit_json {
                    let doc = json!({
                        "schema_version": mbr_core::report::SCHEMA_VERSION,
                        "suite": "dpi",
                        "seed": args.seed,
                        "triples": outcome.results.len(),
                        "failures": outcome.failures,
                    });
                    write_artifact(
                        &args.out.join("dpi_summary.json"),
                        &format!("{}\n", serde_json::to_string_pretty(&doc)?),
                    )?;
                }
            }
            "sweep-T" | "sweep-t" => {
                let outcome = sweep_t_suite(args.seed, budget)
                    .map_err(|e| anyhow::anyhow!("sweep-T suite: {e}"))?;
                for failure in &outcome.failures {
                    eprintln!("sweep-T: {failure}");
                }
                failures += outcome.failures.len();
                if emit_csv {
                    let mut csv =
                        String::from("instance_id,horizon,information_sum,entropy_cap,holds\n");
                    for row in &outcome.rows {
                        csv.push_str(&format!(
                            "{},{},{},{},{}\n",
                            row.instance_id,
                            row.horizon,
                            row.information_sum,
                            row.entropy_cap,
                            row.holds
                        ));
                    }
                    write_artifact(&args.out.join("sweep_t.csv"), &csv)?;
                }
                if emit_json {
                    let doc = json!({
                        "schema_version": mbr_core::report::SCHEMA_VERSION,
                        "suite": "sweep-T",
                        "seed": args.seed,
                        "rows": outcome.rows.len(),
                        "failures": outcome.failures,
                    });
                    write_artifact(
                        &args.out.join("sweep_t_summary.json"),
                        &format!("{}\n", serde_json::to_string_pretty(&doc)?),
                    )?;
                }
            }
            other => bail!("unknown suite `{other}` (expected bounds, soundness, dpi, sweep-T)"),
        }
    }
    Ok(failures)
}

fn gen(args: GenArgs) -> Result<usize> {
    let caps = parse_caps(&args.caps)?;
    for i in 0..args.count {
        let kind = InstanceKind::cycle(i);
        let seed = args.seed.wrapping_add(i as u64);
        let instance = generate_random_instance(seed, &caps, kind);
        let name = format!("gen-{}-{}", kind.tag(), seed);
        let file = InstanceFile::from_instance(&name, &instance);
        write_artifact(
            &args.out.join(format!("{name}.json")),
            &instance_to_json(&file),
        )?;
    }
    Ok(0)
}
