use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use hetnet_noma::analytic::{AnalyticModel, AnalyticOptions, PslMode};
use hetnet_noma::config::Scenario;
use hetnet_noma::experiment::{run_figure, run_sweep, Axis, FigureOptions, Mode, SweepSpec};
use hetnet_noma::simulator::estimate;
use hetnet_noma::QuadratureSpec;

/// Coverage, rate and QoE of NOMA multicast in a two-tier cellular network.
#[derive(Parser, Debug)]
#[command(name = "hetnet-noma", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` configuration file applied on top of the defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set bias_b=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(long, global = true)]
    alpha_p: Option<f64>,
    #[arg(long, global = true)]
    rate_pl: Option<f64>,
    #[arg(long, global = true)]
    rate_sl: Option<f64>,
    /// Monte Carlo trials per run.
    #[arg(long, global = true, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// analytic, sim or both.
    #[arg(long, global = true, default_value = "both")]
    mode: Mode,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    workers: usize,
    /// Relative tolerance of the analytic quadrature.
    #[arg(long, global = true)]
    rel_tol: Option<f64>,
    /// Both-layer case-3 evaluation: `direct` or `verbatim`.
    #[arg(long, global = true, default_value = "direct")]
    psl_mode: String,
    /// Record per-row wall-clock time (makes output non-reproducible).
    #[arg(long, global = true)]
    timing: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reproduce one of the figures: CSV, gnuplot script and checks.
    Figure {
        #[arg(long)]
        fig: u32,
        /// Power splits of the rate and MOS figures.
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.7,0.9")]
        alpha_p_set: Vec<f64>,
        #[arg(long, env = "HETNET_NOMA_OUT_DIR", default_value = "out")]
        out_dir: PathBuf,
    },
    /// Sweep one parameter and write the result table.
    Sweep {
        /// rate_pl, rate_sl or alpha_p.
        #[arg(long)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        /// Power splits, one series each.
        #[arg(long, value_delimiter = ',')]
        series: Vec<f64>,
        /// Also compute the analytic average rate.
        #[arg(long)]
        rates: bool,
        /// CSV destination; standard output if omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a single parameter point and print a summary.
    Point,
    /// Print the effective configuration as a config file.
    Config,
}

impl Common {
    fn scenario(&self) -> Result<Scenario> {
        let mut s = match &self.config {
            Some(p) => Scenario::from_config_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => Scenario::default(),
        };
        for kv in &self.set {
            let Some((k, v)) = kv.split_once('=') else {
                bail!("`--set {kv}`: expected KEY=VALUE");
            };
            s.set(k.trim(), v)?;
        }
        if let Some(v) = self.alpha_p {
            s.noma.alpha_p = v;
        }
        if let Some(v) = self.rate_pl {
            s.noma.rate_pl = v;
        }
        if let Some(v) = self.rate_sl {
            s.noma.rate_sl = v;
        }
        s.validate()?;
        Ok(s)
    }

    fn analytic(&self) -> Result<AnalyticOptions> {
        let mut o = AnalyticOptions::default();
        if let Some(r) = self.rel_tol {
            o.quad = QuadratureSpec {
                rel_tol: r,
                ..o.quad
            };
        }
        o.psl_mode = match self.psl_mode.as_str() {
            "direct" => PslMode::Direct,
            "verbatim" => PslMode::Verbatim,
            other => bail!("unknown --psl-mode `{other}` (expected direct or verbatim)"),
        };
        Ok(o)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn figure(c: &Common, fig: u32, alpha_set: Vec<f64>, out_dir: &Path) -> Result<bool> {
    let opts = FigureOptions {
        base: c.scenario()?,
        overrides: Vec::new(),
        mode: c.mode,
        n_trials: c.trials,
        seed: c.seed,
        alpha_set,
        analytic: c.analytic()?,
        workers: c.workers,
        timing: c.timing,
    };
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let csv_path = out_dir.join(format!("fig{fig}.csv"));
    let mut csv = create(&csv_path)?;
    let run = run_figure(fig, &opts, Some(&mut csv))?;
    csv.flush()?;
    let gp_path = out_dir.join(format!("fig{fig}.gp"));
    std::fs::write(&gp_path, &run.plot_script)?;
    let mut checks = String::new();
    for check in &run.checks {
        println!("{check}");
        checks.push_str(&format!("{check}\n"));
    }
    std::fs::write(out_dir.join(format!("fig{fig}.checks.txt")), checks)?;
    eprintln!("wrote {} and {}", csv_path.display(), gp_path.display());
    Ok(run.passed())
}

fn sweep(c: &Common, axis: Axis, values: Vec<f64>, series: Vec<f64>, rates: bool, output: Option<PathBuf>) -> Result<()> {
    let spec = SweepSpec {
        base: c.scenario()?,
        series,
        mode: c.mode,
        n_trials: c.trials,
        seed: c.seed,
        analytic_rates: rates,
        analytic: c.analytic()?,
        workers: c.workers,
        timing: c.timing,
        ..SweepSpec::new(axis, values)
    };
    let table = match output {
        Some(p) => {
            let mut w = create(&p)?;
            let t = run_sweep(&spec, Some(&mut w))?;
            w.flush()?;
            t
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            run_sweep(&spec, Some(&mut lock))?
        }
    };
    for row in table.rows.iter().filter(|r| r.error.is_some()) {
        log::warn!("{} {}={}: {}", row.series, axis, row.axis_value, row.error.as_deref().unwrap_or(""));
    }
    Ok(())
}

fn point(c: &Common) -> Result<()> {
    let s = c.scenario()?;
    let noma = s.noma;
    println!("alpha_p = {}, rate_pl = {}, rate_sl = {}", noma.alpha_p, noma.rate_pl, noma.rate_sl);
    if c.mode.analytic() {
        let model = AnalyticModel::new(&s.network, c.analytic()?);
        let pl = model.coverage_pl(&noma, noma.t_pl())?;
        let both = model.coverage_both_layers(&noma)?;
        let shares = model.case_probabilities()?;
        println!(
            "analytic  p_pl {:.6} (+/- {:.1e})  p_psl {:.6} (+/- {:.1e})",
            pl.total.value, pl.total.error, both.total.value, both.total.error
        );
        println!(
            "analytic  p_pl by case {:.6} {:.6} {:.6}  case shares {:.6} {:.6} {:.6}",
            pl.case1.value, pl.case2.value, pl.case3.total.value, shares[0].value, shares[1].value, shares[2].value
        );
    }
    if c.mode.sim() {
        let est = estimate(&s.network, &noma, c.trials, c.seed);
        println!(
            "sim       p_pl {:.6} (+/- {:.1e})  p_psl {:.6} (+/- {:.1e})  avg rate {:.6} (+/- {:.1e})",
            est.p_pl.value,
            est.p_pl.half_width_95,
            est.p_psl.value,
            est.p_psl.half_width_95,
            est.avg_rate.mean,
            est.avg_rate.half_width_95
        );
        println!(
            "sim       p_pl by case {:.6} {:.6} {:.6}  case shares {:.6} {:.6} {:.6}",
            est.p_pl_by_case[0].value,
            est.p_pl_by_case[1].value,
            est.p_pl_by_case[2].value,
            est.case_shares[0].value,
            est.case_shares[1].value,
            est.case_shares[2].value
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    let c = &cli.common;
    match cli.command {
        Command::Figure { fig, alpha_p_set, out_dir } => figure(c, fig, alpha_p_set, &out_dir),
        Command::Sweep {
            axis,
            values,
            series,
            rates,
            output,
        } => sweep(c, axis, values, series, rates, output).map(|_| true),
        Command::Point => point(c).map(|_| true),
        Command::Config => {
            print!("{}", c.scenario()?.to_config_text());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more gated checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
