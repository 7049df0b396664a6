use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use gridhedge_core::ces::ces_allocations;
use gridhedge_core::process::{chi_square_gof, fit_log_returns};
use gridhedge_core::scenario::savings_pct;
use gridhedge_core::{calibrate_step_model, run_case_study, tes_allocation};

use crate::config::ConfigFile;
use crate::error::Failure;
use crate::manifest::{self, write_atomic, RunManifest};
use crate::output::{case_counts_csv, results_csv, summary};
use crate::timeseries::{read_series_file, TimeWindow};
use crate::validate::{self, Fault, Suite};

#[derive(Debug, Parser)]
#[command(name = "gridhedge", version, about = "Battery sizing for pooled microgrid generation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Ces,
    Tes,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit GBM drift and volatility to a generation series.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// Sampling interval in minutes; a multiple of the file spacing.
        #[arg(long)]
        interval: Option<u32>,
        /// Daily window, e.g. 10:00-17:00.
        #[arg(long)]
        window: Option<TimeWindow>,
        /// Equal-probability bins for the chi-square test.
        #[arg(long, default_value_t = 16)]
        bins: usize,
    },
    /// Battery allocation at one rebalance time.
    Allocate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Tes)]
        mode: Mode,
        /// Hours since the start of the horizon.
        #[arg(long, default_value_t = 0.0)]
        time: f64,
        /// Generation per microgrid in kW, comma separated; defaults to the initial levels.
        #[arg(long, value_delimiter = ',')]
        generation: Option<Vec<f64>>,
        /// Node budget for the explicit tree.
        #[arg(long)]
        max_nodes: Option<usize>,
    },
    /// Monte Carlo case study writing results.csv, case_counts.csv and a manifest.
    Simulate {
        #[arg(long, required_unless_present = "from_manifest")]
        config: Option<PathBuf>,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Terminal case, e.g. "ge,lt"; "all" disables filtering.
        #[arg(long)]
        case_filter: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Re-run the configuration recorded in a manifest.
        #[arg(long, conflicts_with = "config")]
        from_manifest: Option<PathBuf>,
    },
    /// Run the built-in oracle and calibration checks.
    Validate {
        #[arg(long, value_enum, default_value_t = Suite::All)]
        suite: Suite,
        #[arg(long, value_enum)]
        inject_fault: Option<Fault>,
    },
}

/// Executes `cli` and returns the report to print on success.
pub fn run(cli: Cli) -> Result<String, Failure> {
    match cli.command {
        Command::Estimate { input, interval, window, bins } => estimate(&input, interval, window, bins),
        Command::Allocate { config, mode, time, generation, max_nodes } => {
            let mut cfg = ConfigFile::load(&config)?;
            if let Some(m) = max_nodes {
                cfg.max_nodes = m;
            }
            allocate(&cfg, mode, time, generation)
        }
        Command::Simulate { config, paths, seed, case_filter, out, from_manifest } => {
            let mut cfg = match (&config, &from_manifest) {
                (_, Some(m)) => RunManifest::load(m)?.config()?,
                (Some(c), None) => ConfigFile::load(c)?,
                (None, None) => return Err(Failure::Input("--config or --from-manifest is required".into())),
            };
            if let Some(p) = paths {
                cfg.n_paths = p;
                cfg.max_attempts = None;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            match case_filter.as_deref() {
                Some("all") => cfg.case_filter = None,
                Some(f) => cfg.case_filter = Some(f.to_string()),
                None => {}
            }
            simulate(&cfg, &out)
        }
        Command::Validate { suite, inject_fault } => {
            let checks = validate::run(suite, inject_fault);
            let report = checks.iter().fold(String::new(), |mut s, c| {
                let _ = writeln!(s, "{c}");
                s
            });
            let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name).collect();
            if failed.is_empty() {
                Ok(report)
            } else {
                Err(Failure::Validation(format!("{}\n{report}", failed.join(", "))))
            }
        }
    }
}

fn estimate(input: &Path, interval: Option<u32>, window: Option<TimeWindow>, bins: usize) -> Result<String, Failure> {
    let mut series = read_series_file(input)?;
    if let Some(minutes) = interval {
        let spacing = series.spacing().num_seconds();
        let want = i64::from(minutes) * 60;
        if want == 0 || spacing == 0 || want % spacing != 0 {
            return Err(Failure::Input(format!(
                "interval of {minutes} min is not a multiple of the {} s sampling",
                spacing
            )));
        }
        series = series.subsample((want / spacing) as usize);
    }
    let dt = series.spacing_hours();
    let mut returns = Vec::new();
    for seg in series.segments(window.as_ref()) {
        if let Some((i, v)) = seg.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
            return Err(Failure::Input(format!("non-positive power {v} at segment position {i}")));
        }
        returns.extend(seg.windows(2).map(|w| (w[1] / w[0]).ln()));
    }
    let fit = fit_log_returns(returns, dt)?;
    let params = fit.params()?;
    let gof = chi_square_gof(&fit.log_returns, &params, dt, bins)?;
    Ok(format!(
        "samples {}\ndt_hours {dt}\nmu {:.6}\nsigma {:.6}\nchi2 {:.4}\ndof {}\np_value {:.4}\n",
        fit.log_returns.len(),
        fit.mu,
        fit.sigma,
        gof.statistic,
        gof.dof,
        gof.p_value
    ))
}

fn allocate(cfg: &ConfigFile, mode: Mode, t: f64, generation: Option<Vec<f64>>) -> Result<String, Failure> {
    let scenario = cfg.scenario()?;
    if !(t >= 0.0 && t < scenario.t_f) {
        return Err(Failure::Precondition(format!(
            "time out of range: {t} is outside [0, {})",
            scenario.t_f
        )));
    }
    let state = generation.unwrap_or_else(|| scenario.initial.clone());
    let grid = &scenario.grid;
    grid.check_state(&state)?;
    let p_b = grid.battery_unit();
    let ces = ces_allocations(&state, grid.microgrids(), t, scenario.t_f, p_b)?;
    let b_ces: f64 = ces.iter().map(|c| c.b_hat).sum();
    let v_ces: f64 = ces.iter().map(|c| c.value_hat).sum();
    let mut out = String::new();
    match mode {
        Mode::Ces => {
            for (spec, c) in grid.microgrids().iter().zip(&ces) {
                let _ = writeln!(out, "{} a_hat {:.10} b_hat {:.10} value {:.10}", spec.label, c.a_hat, c.b_hat, c.value_hat);
            }
            let _ = writeln!(out, "b_total {b_ces:.10}\nvalue_total {v_ces:.10}");
        }
        Mode::Tes => {
            let dt = scenario.dt();
            let model = calibrate_step_model(grid, dt)?;
            let remaining = ((scenario.t_f - t) / dt).round() as usize;
            let tes = tes_allocation(grid, &model, &state, remaining, &vec![0.0; grid.len()], scenario.engine)?;
            for (spec, a) in grid.microgrids().iter().zip(&tes.allocation.a) {
                let _ = writeln!(out, "{} a {:.10}", spec.label, a);
            }
            let _ = writeln!(
                out,
                "b {:.10}\nvalue {:.10}\nreplication_residual {:.3e}\nremaining_steps {remaining}\nces_b_total {b_ces:.10}\nsavings_pct {:.4}",
                tes.allocation.b,
                tes.value,
                tes.allocation.residual,
                savings_pct(tes.allocation.b, b_ces)
            );
        }
    }
    Ok(out)
}

fn simulate(cfg: &ConfigFile, out: &Path) -> Result<String, Failure> {
    let scenario = cfg.scenario()?;
    let result = run_case_study(&scenario)?;
    fs::create_dir_all(out)?;
    let results = results_csv(&result)?;
    let counts = case_counts_csv(&result)?;
    let mut m = RunManifest::new("simulate", cfg)?;
    write_atomic(&out.join("results.csv"), &results)?;
    m.add_output("results.csv", &results);
    write_atomic(&out.join("case_counts.csv"), &counts)?;
    m.add_output("case_counts.csv", &counts);
    write_atomic(&out.join(manifest::FILE_NAME), m.render().as_bytes())?;
    Ok(summary(&result))
}
