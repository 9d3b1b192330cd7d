//! Comma-delimited result tables.

use std::io::Write;

use super::anomaly::{AnomalyOutcome, LinkChart};
use super::calibration::{GammaCalibration, SweepReport};
use super::misspec::MisspecTable;
use super::{Method, PredictionRun};
use crate::error::Result;
use crate::topology::ObservationScenario;

fn scenario_label(s: &ObservationScenario) -> String {
    s.scenario_id().map_or_else(|| "custom".to_string(), |id| id.to_string())
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// `seed,scenario,method,remse,bins,pseudo_inverse_bins`; the seed column
/// is `-` for traffic read from files.
pub fn write_evaluation<W: Write>(mut out: W, runs: &[(Option<u64>, PredictionRun)]) -> Result<()> {
    writeln!(out, "seed,scenario,method,remse,bins,pseudo_inverse_bins")?;
    for (seed, r) in runs {
        writeln!(
            out,
            "{},{},{},{:.10e},{},{}",
            seed.map_or_else(|| "-".to_string(), |s| s.to_string()),
            scenario_label(&r.scenario),
            r.method,
            r.remse,
            r.times.len(),
            r.pseudo_inverse_bins
        )?;
    }
    Ok(())
}

/// Seed-averaged ReMSE with one row per method and one column per scenario.
pub fn write_remse_table<W: Write>(mut out: W, runs: &[(Option<u64>, PredictionRun)]) -> Result<()> {
    let mut scenarios: Vec<String> = Vec::new();
    let mut methods: Vec<Method> = Vec::new();
    for (_, r) in runs {
        let s = scenario_label(&r.scenario);
        if !scenarios.contains(&s) {
            scenarios.push(s);
        }
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    writeln!(out, "method,{}", scenarios.iter().map(|s| format!("s{s}")).collect::<Vec<_>>().join(","))?;
    for m in methods {
        let cells: Vec<String> = scenarios
            .iter()
            .map(|s| {
                let vals: Vec<f64> = runs
                    .iter()
                    .filter(|(_, r)| r.method == m && &scenario_label(&r.scenario) == s)
                    .map(|(_, r)| r.remse)
                    .collect();
                if vals.is_empty() {
                    "NA".to_string()
                } else {
                    format!("{:.4}", vals.iter().sum::<f64>() / vals.len() as f64)
                }
            })
            .collect();
        writeln!(out, "{m},{}", cells.join(","))?;
    }
    Ok(())
}

/// `bin` then predicted, actual and error variance per unobserved link.
pub fn write_predictions<W: Write>(mut out: W, run: &PredictionRun) -> Result<()> {
    write!(out, "bin")?;
    for l in run.scenario.unobserved() {
        write!(out, ",predicted_link{l},actual_link{l},error_variance_link{l}")?;
    }
    writeln!(out)?;
    for (k, t) in run.times.iter().enumerate() {
        write!(out, "{t}")?;
        for i in 0..run.predicted.nrows() {
            write!(
                out,
                ",{},{},{}",
                run.predicted[(i, k)],
                run.actual[(i, k)],
                run.error_variance[(i, k)]
            )?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Long format: `scenario,<parameter>,remse` with `NA` for failed cells.
pub fn write_sweep<W: Write>(mut out: W, report: &SweepReport) -> Result<()> {
    writeln!(out, "scenario,{},remse", report.parameter)?;
    for (s, row) in report.scenarios.iter().zip(&report.remse) {
        for (v, cell) in report.grid.iter().zip(row) {
            match cell {
                Some(x) => writeln!(out, "{},{v},{x:.10e}", scenario_label(s))?,
                None => writeln!(out, "{},{v},NA", scenario_label(s))?,
            }
        }
    }
    Ok(())
}

/// One row per regime: baseline MSE then one column per window.
pub fn write_misspec<W: Write>(mut out: W, table: &MisspecTable) -> Result<()> {
    let cols: Vec<String> = table.windows.iter().map(|m| format!("m={m}")).collect();
    writeln!(out, "regime,true_moments,{}", cols.join(","))?;
    for row in [&table.stationary, &table.nonstationary] {
        let vals: Vec<String> = row.model.iter().map(|v| format!("{v:.6e}")).collect();
        writeln!(out, "{},{:.6e},{}", row.regime, row.baseline, vals.join(","))?;
    }
    Ok(())
}

/// `gamma_hat,r_squared,window_start,window_len`.
pub fn write_gamma<W: Write>(mut out: W, g: &GammaCalibration) -> Result<()> {
    writeln!(out, "gamma_hat,r_squared,window_start,window_len")?;
    writeln!(out, "{:.6},{:.6},{},{}", g.gamma_hat, g.r_squared, g.window.0, g.window.1)?;
    Ok(())
}

/// One row per monitored link followed by the implicated routes.
pub fn write_anomaly<W: Write>(mut out: W, outcome: &AnomalyOutcome, labels: &[(String, String)]) -> Result<()> {
    writeln!(
        out,
        "link,observed,hurst,hurst_clamped,sigma2,pre_rate_lrd,post_rate_lrd,pre_rate_iid,post_rate_iid,alarming"
    )?;
    for c in &outcome.charts {
        writeln!(
            out,
            "{},{},{:.4},{},{:.6e},{:.4},{:.4},{:.4},{:.4},{}",
            c.link,
            join_ids(&c.observed),
            c.hurst.hurst,
            c.hurst.clamped,
            c.sigma2,
            LinkChart::pre_onset_rate(&c.lrd),
            LinkChart::post_onset_rate(&c.lrd),
            LinkChart::pre_onset_rate(&c.iid),
            LinkChart::post_onset_rate(&c.iid),
            c.alarming
        )?;
    }
    let names: Vec<String> = outcome
        .implicated
        .iter()
        .map(|&j| match labels.get(j) {
            Some((s, d)) => format!("{}:{s}->{d}", j + 1),
            None => (j + 1).to_string(),
        })
        .collect();
    writeln!(out, "# implicated flows: {}", if names.is_empty() { "none".into() } else { names.join(" ") })?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::calibration::SweepParameter;
    use crate::topology::scenario;

    #[test]
    fn sweep_table_marks_failures() {
        let report = SweepReport {
            parameter: SweepParameter::Gamma,
            grid: vec![0.5, 1.0],
            scenarios: vec![scenario(1).unwrap()],
            remse: vec![vec![Some(0.25), None]],
        };
        let mut buf = Vec::new();
        write_sweep(&mut buf, &report).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "scenario,gamma,remse\n1,0.5,2.5000000000e-1\n1,1,NA\n");
    }

    #[test]
    fn gamma_table() {
        let g = GammaCalibration { gamma_hat: 0.75, r_squared: 0.9, window: (10, 200) };
        let mut buf = Vec::new();
        write_gamma(&mut buf, &g).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "gamma_hat,r_squared,window_start,window_len\n0.750000,0.900000,10,200\n");
    }
}
