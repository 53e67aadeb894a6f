//! `spiketest`: compute spiked-model asymptotics, test factor counts on data,
//! simulate sample spectra, and reproduce Monte Carlo size/power tables.
//!
//! Exit codes: 0 success (or "accept" for `test`), 1 reject (for `test`),
//! 2 validation/config error, 3 spike below the detection threshold,
//! 4 empty critical-value search range, 5 i/o error.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;

use spiketest_core::asymptotics::AsymptoticSummary;
use spiketest_core::error::SpikeError;
use spiketest_core::factor::{run_test, FactorTestConfig};
use spiketest_core::montecarlo::{render_table, run_scenario, MCReport};
use spiketest_core::numeric::substream_seed;
use spiketest_core::simulate::{sample_spectrum, spectrum_to_csv};

use config::{AsymptoticsConfig, McTableConfig, SimulateConfig, TestConfig};

#[derive(Parser)]
#[command(name = "spiketest", version, about = "Spiked-covariance asymptotics and factor-count tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the asymptotic summary (JSON) for a spiked model.
    Asymptotics {
        /// JSON model config.
        #[arg(short, long)]
        config: PathBuf,
    },
    /// Run the factor-count test on eigenvalue data (exit 0 accept, 1 reject).
    Test {
        /// JSON test config.
        #[arg(short, long)]
        config: PathBuf,
        /// Eigenvalue CSV (one per line, descending) or a raw n x p data
        /// matrix (comma-separated rows).
        #[arg(short, long)]
        data: PathBuf,
    },
    /// Simulate one sample spectrum and write it as CSV.
    Simulate {
        /// JSON simulation config.
        #[arg(short, long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(short, long)]
        output: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run Monte Carlo scenarios and write the size/power table as CSV.
    McTable {
        /// JSON scenario list.
        #[arg(short, long)]
        config: PathBuf,
        /// Output CSV path.
        #[arg(short, long)]
        output: PathBuf,
        /// Override the replication count of every scenario.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the master seed (scenario i runs under a substream of this).
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the full JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn exit_code_for(err: &SpikeError) -> u8 {
    match err {
        SpikeError::NotDistantSpike { .. } | SpikeError::BelowThreshold { .. } => 3,
        SpikeError::EmptyRange { .. } => 4,
        SpikeError::Io(_) => 5,
        _ => 2,
    }
}

fn fail(code: u8, msg: &str) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (5u8, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| (2u8, format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Asymptotics { config } => cmd_asymptotics(&config),
        Command::Test { config, data } => cmd_test(&config, &data),
        Command::Simulate { config, output, seed } => cmd_simulate(&config, &output, seed),
        Command::McTable { config, output, reps, seed, json } => {
            cmd_mc_table(&config, &output, reps, seed, json.as_deref())
        }
    }
}

fn cmd_asymptotics(config: &Path) -> ExitCode {
    let cfg: AsymptoticsConfig = match load_json(config) {
        Ok(c) => c,
        Err((code, msg)) => return fail(code, &msg),
    };
    let model = match cfg.build_model() {
        Ok(m) => m,
        Err(e) => return fail(exit_code_for(&e), &e.to_string()),
    };
    match AsymptoticSummary::compute(&model) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => fail(exit_code_for(&e), &e.to_string()),
    }
}

/// Parse the data file: either one eigenvalue per line (descending, `#`
/// comments allowed) or a raw n x p matrix with comma-separated rows, which is
/// decomposed into the full sample-covariance spectrum.
fn load_eigenvalues(path: &Path, p_expected: usize) -> Result<Vec<f64>, (u8, String)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| (5u8, format!("cannot read {}: {e}", path.display())))?;
    let rows: Vec<&str> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect();
    if rows.is_empty() {
        return Err((2, "data file contains no values".into()));
    }
    let parse = |tok: &str| -> Result<f64, (u8, String)> {
        tok.trim()
            .parse::<f64>()
            .map_err(|e| (2u8, format!("bad number {tok:?}: {e}")))
    };
    if rows[0].contains(',') {
        // raw data matrix: rows are observations
        let n = rows.len();
        let mut values = Vec::new();
        let p = rows[0].split(',').count();
        for row in &rows {
            let cols: Vec<&str> = row.split(',').collect();
            if cols.len() != p {
                return Err((2, "ragged matrix rows in data file".into()));
            }
            for tok in cols {
                values.push(parse(tok)?);
            }
        }
        if p != p_expected {
            return Err((2, format!("matrix has p={p} columns, config says p={p_expected}")));
        }
        let x = DMatrix::from_row_slice(n, p, &values);
        let gram = if p <= n {
            x.tr_mul(&x) / n as f64
        } else {
            &x * x.transpose() / n as f64
        };
        let mut eigs = gram.symmetric_eigen().eigenvalues.as_slice().to_vec();
        eigs.sort_by(|a, b| b.partial_cmp(a).unwrap());
        for e in &mut eigs {
            *e = e.max(0.0);
        }
        eigs.resize(p, 0.0);
        Ok(eigs)
    } else {
        let mut eigs = Vec::with_capacity(rows.len());
        for row in rows {
            eigs.push(parse(row)?);
        }
        Ok(eigs)
    }
}

fn cmd_test(config: &Path, data: &Path) -> ExitCode {
    let cfg: TestConfig = match load_json(config) {
        Ok(c) => c,
        Err((code, msg)) => return fail(code, &msg),
    };
    let eigs = match load_eigenvalues(data, cfg.p) {
        Ok(e) => e,
        Err((code, msg)) => return fail(code, &msg),
    };
    let test_cfg = FactorTestConfig {
        m0: cfg.m0,
        c: cfg.c,
        alpha_level: cfg.alpha_level,
        p: cfg.p,
        n: cfg.n,
    };
    match run_test(&eigs, &test_cfg, cfg.corrected) {
        Ok(outcome) => {
            let verdict = if outcome.reject { "reject" } else { "accept" };
            println!(
                "{verdict} H0 (m0={}, c={}): T={:.6} vs q*={:.6}",
                cfg.m0, cfg.c, outcome.statistic, outcome.critical_value
            );
            println!("{}", serde_json::to_string(&outcome).expect("serializable"));
            if outcome.reject {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => fail(exit_code_for(&e), &e.to_string()),
    }
}

fn cmd_simulate(config: &Path, output: &Path, seed: Option<u64>) -> ExitCode {
    let cfg: SimulateConfig = match load_json(config) {
        Ok(c) => c,
        Err((code, msg)) => return fail(code, &msg),
    };
    let spec = match cfg.population() {
        Ok(s) => s,
        Err(e) => return fail(exit_code_for(&e), &e.to_string()),
    };
    let seed = seed.unwrap_or(cfg.seed);
    match sample_spectrum(&spec, cfg.p, cfg.n, cfg.dist, seed) {
        Ok(sample) => {
            if let Err(e) = std::fs::write(output, spectrum_to_csv(&sample)) {
                return fail(5, &format!("cannot write {}: {e}", output.display()));
            }
            println!(
                "wrote {} eigenvalues (p={}, n={}, seed={}) to {}",
                sample.eigs.len(),
                sample.p,
                sample.n,
                sample.seed,
                output.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => fail(exit_code_for(&e), &e.to_string()),
    }
}

fn cmd_mc_table(
    config: &Path,
    output: &Path,
    reps: Option<usize>,
    seed: Option<u64>,
    json: Option<&Path>,
) -> ExitCode {
    let cfg: McTableConfig = match load_json(config) {
        Ok(c) => c,
        Err((code, msg)) => return fail(code, &msg),
    };
    let mut scenarios = cfg.scenarios;
    if let Some(r) = reps {
        for s in &mut scenarios {
            s.reps = r;
        }
    }
    if let Some(master) = seed {
        for (i, s) in scenarios.iter_mut().enumerate() {
            s.master_seed = substream_seed(master, i as u64);
        }
    }
    let mut reports: Vec<MCReport> = Vec::with_capacity(scenarios.len());
    for s in &scenarios {
        match run_scenario(s) {
            Ok(report) => {
                for row in &report.rows {
                    println!(
                        "p={} n={} c={} t={:?} {}: rate={:.4} se={:.4} ({} reps, {} failures)",
                        s.p, s.n, s.c, s.t_list, row.procedure, row.rejection_rate,
                        row.mc_standard_error, row.reps_used, row.failures
                    );
                }
                reports.push(report);
            }
            Err(e) => return fail(exit_code_for(&e), &e.to_string()),
        }
    }
    if let Err(e) = std::fs::write(output, render_table(&scenarios, &reports)) {
        return fail(5, &format!("cannot write {}: {e}", output.display()));
    }
    if let Some(json_path) = json {
        let payload = serde_json::json!({
            "scenarios": scenarios,
            "reports": reports,
        });
        if let Err(e) = std::fs::write(json_path, serde_json::to_string_pretty(&payload).unwrap()) {
            return fail(5, &format!("cannot write {}: {e}", json_path.display()));
        }
    }
    ExitCode::SUCCESS
}
