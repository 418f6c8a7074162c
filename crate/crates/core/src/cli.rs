//! `rsma` command-line front end.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime failures. Every file is written inside `output.dir`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::experiments::{self, parse_assignment, ExperimentConfig, ScenarioKind};
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "rsma", version, about = "Rate-splitting multiple access experiments")]
struct Cli {
    /// TOML experiment config; defaults are used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed (overrides scenario.master_seed).
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "RSMA_THREADS", value_name = "N")]
    threads: Option<usize>,
    /// Config override, e.g. `scenario.trials=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VAL")]
    overrides: Vec<String>,
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the configured experiment and write the results CSV.
    Run,
    /// Trace the two-user uplink region and write the RSMA and pentagon point clouds.
    Region {
        /// File name of the RSMA cloud inside the output directory.
        #[arg(long, default_value = "region_rsma.csv")]
        points_file: String,
        /// File name of the pentagon vertices inside the output directory.
        #[arg(long, default_value = "region_pentagon.csv")]
        pentagon_file: String,
    },
    /// Run the cartesian product of value lists over config keys.
    Sweep {
        /// `KEY=v1,v2,...`; commas inside brackets do not split. Repeatable.
        #[arg(long = "grid", value_name = "KEY=VALUES", required = true)]
        grid: Vec<String>,
    },
    /// Parse the config and check dimensions without running.
    Validate,
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn error(&self) -> &Error {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => e,
        }
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e)
}

fn runtime_err(e: Error) -> Failure {
    Failure::Runtime(e)
}

/// Entry point; `argv[0]` is the program name.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    match dispatch(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("rsma: {}", f.error());
            f.code()
        }
    }
}

fn base_overrides(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut overrides = cli.overrides.iter().map(|s| parse_assignment(s)).collect::<Result<Vec<_>>>()?;
    if let Some(seed) = cli.seed {
        overrides.push(("scenario.master_seed".into(), seed.to_string()));
    }
    if let Some(dir) = &cli.out {
        let dir = dir.to_str().ok_or_else(|| Error::config("--out", "path is not valid UTF-8"))?;
        overrides.push(("output.dir".into(), toml_string(dir)));
    }
    Ok(overrides)
}

fn toml_string(s: &str) -> String {
    toml::Value::String(s.into()).to_string()
}

fn load(cli: &Cli, extra: &[(String, String)]) -> Result<ExperimentConfig> {
    let mut overrides = base_overrides(cli)?;
    overrides.extend_from_slice(extra);
    match &cli.config {
        Some(path) => ExperimentConfig::from_file(path, &overrides),
        None => ExperimentConfig::from_toml_str("", &overrides),
    }
}

fn dispatch(cli: &Cli) -> std::result::Result<(), Failure> {
    match &cli.command {
        Command::Validate => {
            let config = load(cli, &[]).map_err(config_err)?;
            dry_run(&config).map_err(config_err)?;
            println!("{}", summary_line(&config));
            Ok(())
        }
        Command::Run => {
            let config = load(cli, &[]).map_err(config_err)?;
            if config.scenario.kind == ScenarioKind::Region {
                return region(&config, cli.threads, "region_rsma.csv", "region_pentagon.csv");
            }
            run_one(&config, cli.threads, &config.output_path())
        }
        Command::Region {
            points_file,
            pentagon_file,
        } => {
            let mut extra = vec![("scenario.kind".to_string(), "\"region\"".to_string())];
            if cli.overrides.iter().all(|o| !o.trim_start().starts_with("scenario.n_users")) {
                extra.push(("scenario.n_users".into(), "2".into()));
            }
            let config = load(cli, &extra).map_err(config_err)?;
            for (flag, name) in [("--points-file", points_file), ("--pentagon-file", pentagon_file)] {
                check_plain_name(flag, name).map_err(config_err)?;
            }
            region(&config, cli.threads, points_file, pentagon_file)
        }
        Command::Sweep { grid } => sweep(cli, grid),
    }
}

fn check_plain_name(flag: &str, name: &str) -> Result<()> {
    if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
        return Err(Error::config(flag, "must be a plain file name inside the output directory"));
    }
    Ok(())
}

fn summary_line(config: &ExperimentConfig) -> String {
    let s = &config.scenario;
    let csit = s.alpha.map_or("perfect CSIT".to_string(), |a| format!("alpha={a}"));
    let schemes: Vec<&str> = s.schemes.iter().map(|x| x.as_str()).collect();
    format!(
        "ok: {} M={} K={} snr_points={} trials={} schemes={} {} rows={} -> {}",
        s.kind.as_str(),
        s.n_tx,
        s.n_users,
        s.snr_grid_db.len(),
        s.trials,
        schemes.join(","),
        csit,
        config.expected_rows(),
        config.output.dir.display()
    )
}

/// Builds the first cell's channel to exercise the dimension checks.
fn dry_run(config: &ExperimentConfig) -> Result<()> {
    let s = &config.scenario;
    if let Some(rows) = &s.fixture {
        let rows = rows
            .iter()
            .map(|r| r.iter().map(|[re, im]| crate::Complex64::new(*re, *im)).collect())
            .collect();
        crate::channel::deterministic_channel(rows, 1.0)?;
    }
    crate::channel::sample_rayleigh(s.n_tx, s.n_users, 1.0, experiments::cell_seed(s.master_seed, 0, 0))?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run_one(config: &ExperimentConfig, threads: Option<usize>, path: &Path) -> std::result::Result<(), Failure> {
    let table = experiments::run_with_threads(config, threads).map_err(runtime_err)?;
    experiments::write_csv(&table, path).map_err(runtime_err)?;
    let failed = table.rows.iter().filter(|r| !r.is_ok()).count();
    log::info!("wrote {} rows ({failed} not ok) to {}", table.rows.len(), path.display());
    Ok(())
}

fn region(config: &ExperimentConfig, threads: Option<usize>, points: &str, pentagon: &str) -> std::result::Result<(), Failure> {
    let table = experiments::run_region(config, threads).map_err(runtime_err)?;
    let dir = &config.output.dir;
    write_text(&dir.join(points), &experiments::region_points_csv(&table)).map_err(runtime_err)?;
    write_text(&dir.join(pentagon), &experiments::region_pentagon_csv(&table)).map_err(runtime_err)?;
    log::info!("wrote region clouds for {} cells to {}", table.cells.len(), dir.display());
    Ok(())
}

/// Splits a value list on top-level commas.
fn split_values(list: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut quoted = false;
    let mut current = String::new();
    for ch in list.chars() {
        match ch {
            '"' => quoted = !quoted,
            '[' if !quoted => depth += 1,
            ']' if !quoted => depth -= 1,
            ',' if depth == 0 && !quoted => {
                out.push(std::mem::take(&mut current).trim().to_string());
                continue;
            }
            _ => {}
        }
        current.push(ch);
    }
    out.push(current.trim().to_string());
    out
}

fn parse_grid(grid: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    grid.iter()
        .map(|g| {
            let (key, values) = parse_assignment(g)?;
            let values = split_values(&values);
            if values.iter().any(|v| v.is_empty()) {
                return Err(Error::config(key, "sweep value list has an empty entry"));
            }
            Ok((key, values))
        })
        .collect()
}

/// Cartesian product, last key varying fastest.
fn expand(axes: &[(String, Vec<String>)]) -> Vec<Vec<(String, String)>> {
    axes.iter().fold(vec![Vec::new()], |acc, (key, values)| {
        acc.into_iter()
            .flat_map(|prefix| {
                values.iter().map(move |v| {
                    let mut next = prefix.clone();
                    next.push((key.clone(), v.clone()));
                    next
                })
            })
            .collect()
    })
}

fn sweep(cli: &Cli, grid: &[String]) -> std::result::Result<(), Failure> {
    let axes = parse_grid(grid).map_err(config_err)?;
    let points = expand(&axes);
    let configs = points
        .iter()
        .map(|p| load(cli, p))
        .collect::<Result<Vec<_>>>()
        .map_err(config_err)?;
    let dir = configs[0].output.dir.clone();
    if configs.iter().any(|c| c.output.dir != dir) {
        return Err(config_err(Error::config("output.dir", "cannot be swept")));
    }
    let mut index = String::from("index,file");
    for (key, _) in &axes {
        index.push(',');
        index.push_str(key);
    }
    index.push('\n');
    for (i, (config, point)) in configs.iter().zip(&points).enumerate() {
        let stem = Path::new(&config.output.file)
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("results");
        let name = format!("{stem}_{i:03}.csv");
        if config.scenario.kind == ScenarioKind::Region {
            region(config, cli.threads, &format!("{stem}_{i:03}_rsma.csv"), &format!("{stem}_{i:03}_pentagon.csv"))?;
        } else {
            run_one(config, cli.threads, &dir.join(&name))?;
        }
        index.push_str(&format!("{i},{name}"));
        for (_, v) in point {
            index.push(',');
            index.push_str(&csv_field(v));
        }
        index.push('\n');
    }
    write_text(&dir.join("sweep_index.csv"), &index).map_err(runtime_err)
}

fn csv_field(v: &str) -> String {
    if v.contains([',', '"', '\n']) {
        format!("\"{}\"", v.replace('"', "\"\""))
    } else {
        v.to_string()
    }
}
