use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use netkrig::config::{Config, Traffic};
use netkrig::eval::anomaly::anomaly_experiment;
use netkrig::eval::calibration::{gamma_regression, sweep, SweepParameter, SweepReport};
use netkrig::eval::report;
use netkrig::eval::run_scenario;
use netkrig::topology::RoutingMatrix;

#[derive(Parser)]
#[command(name = "netkrig", version, about = "Link traffic prediction from partial observations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write simulated flow and link traces.
    Simulate(Args),
    /// Learn the factor matrix and the mean-variance exponent.
    FitFactors(Args),
    /// Predict the unobserved links of one scenario with one method.
    Predict(Args),
    /// Compare the predictors over scenarios and seeds.
    Evaluate(Args),
    /// ReMSE over a grid of one model parameter.
    Sweep(Args),
    /// Inject a mean shift and chart the monitored links.
    Chart(Args),
}

#[derive(clap::Args)]
struct Args {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_file(dir: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> netkrig::Result<()>) -> Result<()> {
    let mut out = create(dir, name)?;
    f(&mut out).with_context(|| format!("writing {name}"))?;
    out.flush().with_context(|| format!("writing {name}"))?;
    info!("wrote {}", dir.join(name).display());
    Ok(())
}

struct Session {
    cfg: Config,
    a: RoutingMatrix,
    out: PathBuf,
}

impl Session {
    fn open(args: &Args) -> Result<Self> {
        let cfg = Config::load(&args.config)?;
        let a = cfg.routing().context("building the routing matrix")?;
        let out = args.output.clone().unwrap_or_else(|| cfg.output_dir());
        fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(Self { cfg, a, out })
    }

    fn seeds(&self) -> Vec<Option<u64>> {
        if self.cfg.simulated() {
            self.cfg.traffic.seeds.iter().map(|&s| Some(s)).collect()
        } else {
            vec![None]
        }
    }

    fn first_seed(&self) -> u64 {
        self.cfg.traffic.seeds[0]
    }

    fn traffic(&self, seed: Option<u64>) -> Result<Traffic> {
        let s = seed.unwrap_or_else(|| self.first_seed());
        self.cfg.traffic(&self.a, s).with_context(|| format!("loading traffic (seed {s})"))
    }

    fn suffix(&self, seed: Option<u64>) -> String {
        match seed {
            Some(s) if self.cfg.traffic.seeds.len() > 1 => format!("_seed{s}"),
            _ => String::new(),
        }
    }
}

fn simulate(s: &Session) -> Result<()> {
    write_file(&s.out, "routing.txt", |o| s.a.write_matrix(o))?;
    for seed in s.seeds() {
        let t = s.traffic(seed)?;
        let sfx = s.suffix(seed);
        if let Some(flows) = &t.flows {
            write_file(&s.out, &format!("flows{sfx}.csv"), |o| flows.write_delimited(o))?;
        }
        write_file(&s.out, &format!("links{sfx}.csv"), |o| t.links.write_delimited(o))?;
    }
    Ok(())
}

fn fit_factors(s: &Session) -> Result<()> {
    let seed = s.first_seed();
    let t = s.traffic(Some(seed))?;
    let fm = s.cfg.factors(&s.a, &t, seed).context("fit_factor_matrix")?;
    write_file(&s.out, "factors.txt", |o| fm.write(o))?;
    if let Some(flows) = &t.flows {
        let g = gamma_regression(flows, 0, flows.len()).context("gamma_regression")?;
        write_file(&s.out, "gamma.csv", |o| report::write_gamma(o, &g))?;
        println!("gamma_hat {:.4} (R^2 {:.4})", g.gamma_hat, g.r_squared);
    }
    Ok(())
}

fn predict(s: &Session) -> Result<()> {
    let seed = s.first_seed();
    let t = s.traffic(Some(seed))?;
    let method = s.cfg.method()?;
    let scenario = s.cfg.scenario()?;
    let factors = s.cfg.factors(&s.a, &t, seed).context("fit_factor_matrix")?;
    let run = run_scenario(
        &t.links,
        &s.a,
        &scenario,
        method,
        &s.cfg.model_config(),
        Some(&factors),
        &s.cfg.run_options(),
    )
    .with_context(|| format!("run_scenario ({method})"))?;
    write_file(&s.out, "predictions.csv", |o| report::write_predictions(o, &run))?;
    println!("{method} remse {:.6}", run.remse);
    Ok(())
}

fn evaluate(s: &Session) -> Result<()> {
    let methods = s.cfg.methods()?;
    let scenarios = s.cfg.scenarios()?;
    let model = s.cfg.model_config();
    let opts = s.cfg.run_options();
    let mut runs = Vec::new();
    for seed in s.seeds() {
        let t = s.traffic(seed)?;
        let factors = s
            .cfg
            .factors(&s.a, &t, seed.unwrap_or_else(|| s.first_seed()))
            .context("fit_factor_matrix")?;
        for sc in &scenarios {
            for &m in &methods {
                let run = run_scenario(&t.links, &s.a, sc, m, &model, Some(&factors), &opts).with_context(|| {
                    format!("run_scenario (scenario {}, {m})", sc.scenario_id().unwrap_or(0))
                })?;
                runs.push((seed, run));
            }
        }
    }
    write_file(&s.out, "evaluation.csv", |o| report::write_evaluation(o, &runs))?;
    write_file(&s.out, "remse_table.csv", |o| report::write_remse_table(o, &runs))?;
    Ok(())
}

fn sweep_cmd(s: &Session) -> Result<()> {
    let parameter = s.cfg.sweep_parameter()?;
    let scenarios = s.cfg.scenarios()?;
    let rank = match parameter {
        SweepParameter::P => s.cfg.sweep.grid.iter().fold(0.0f64, |m, &v| m.max(v)) as usize,
        _ => s.cfg.model.p,
    };
    let mut reports: Vec<SweepReport> = Vec::new();
    for seed in s.seeds() {
        let t = s.traffic(seed)?;
        let factors = s
            .cfg
            .factors_with_rank(&s.a, &t, seed.unwrap_or_else(|| s.first_seed()), rank)
            .context("fit_factor_matrix")?;
        let r = sweep(
            parameter,
            &s.cfg.sweep.grid,
            &scenarios,
            &t.links,
            &s.a,
            &factors,
            &s.cfg.model_config(),
            &s.cfg.run_options(),
        )
        .with_context(|| format!("sweep ({parameter})"))?;
        reports.push(r);
    }
    let mut avg = reports[0].clone();
    for (i, row) in avg.remse.iter_mut().enumerate() {
        for (k, cell) in row.iter_mut().enumerate() {
            let vals: Option<Vec<f64>> = reports.iter().map(|r| r.remse[i][k]).collect();
            *cell = vals.map(|v| v.iter().sum::<f64>() / v.len() as f64);
        }
    }
    write_file(&s.out, "sweep.csv", |o| report::write_sweep(o, &avg))?;
    Ok(())
}

fn chart(s: &Session) -> Result<()> {
    let seed = s.first_seed();
    let t = s.traffic(Some(seed))?;
    let flows = t
        .flows
        .as_ref()
        .context("the chart experiment needs flow traces or a simulation spec")?;
    let factors = s.cfg.factors(&s.a, &t, seed).context("fit_factor_matrix")?;
    let cfg = s.cfg.anomaly_config(&s.a, &t)?;
    let outcome = anomaly_experiment(flows, &s.a, &factors, &cfg).context("anomaly_experiment")?;
    write_file(&s.out, "anomaly.csv", |o| report::write_anomaly(o, &outcome, s.a.route_labels()))?;
    for c in &outcome.charts {
        write_file(&s.out, &format!("chart_link{}_lrd.csv", c.link), |o| c.lrd.write(o))?;
        write_file(&s.out, &format!("chart_link{}_iid.csv", c.link), |o| c.iid.write(o))?;
    }
    let names: Vec<String> = outcome.implicated.iter().map(|j| (j + 1).to_string()).collect();
    println!(
        "implicated flows: {}",
        if names.is_empty() { "none".to_string() } else { names.join(" ") }
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let (args, verb): (&Args, fn(&Session) -> Result<()>) = match &cli.command {
        Command::Simulate(a) => (a, simulate),
        Command::FitFactors(a) => (a, fit_factors),
        Command::Predict(a) => (a, predict),
        Command::Evaluate(a) => (a, evaluate),
        Command::Sweep(a) => (a, sweep_cmd),
        Command::Chart(a) => (a, chart),
    };
    verb(&Session::open(args)?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = e
                .chain()
                .filter_map(|c| c.downcast_ref::<netkrig::Error>())
                .any(netkrig::Error::is_numerical);
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
