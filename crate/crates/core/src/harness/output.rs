//! CSV artifacts of a sweep and the text summary built from them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::sweep::SweepResult;
use super::HarnessError;

pub const CURVES_HEADER: &str = "algorithm,episode,mean_expected_reward,std_expected_reward,mean_cum_regret";
pub const RUNS_HEADER: &str = "algorithm,sim,seed,convergence_episode,coverage_all_t,final_reward";
pub const ANALYSIS_HEADER: &str = "algorithm,sim,seed,optimal_reward,gamma,gamma_strict,h,regret_bound_final,\
bound_violations,finite_sample_threshold,convergence_threshold,coverage_rate,decomposition_checked,\
decomposition_violations,radius_checked,radius_violations,radius_unchecked,radius_tight_violations,\
radius_pooled_violations,max_xi,coverage_losses,frozen_regret_violations,cum_regret_final";

/// 12 significant digits in positional notation.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci.split_once('e').unwrap().1.parse().unwrap();
    let decimals = (11 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(format_number).unwrap_or_default()
}

pub fn curves_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(CURVES_HEADER);
    out.push('\n');
    for curve in &result.curves {
        for t in 0..curve.mean_reward.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                curve.algorithm,
                t + 1,
                format_number(curve.mean_reward[t]),
                format_number(curve.std_reward[t]),
                format_number(curve.mean_cumulative_regret[t]),
            );
        }
    }
    out
}

pub fn runs_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(RUNS_HEADER);
    out.push('\n');
    for &alg in &result.config.algorithms {
        for sim in &result.simulations {
            let run = sim.runs.iter().find(|r| r.algorithm == alg).expect("every algorithm runs");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                alg,
                sim.sim,
                sim.seed,
                opt(run.convergence_episode),
                opt(run.coverage_all_t),
                format_number(run.final_reward()),
            );
        }
    }
    out
}

pub fn analysis_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(ANALYSIS_HEADER);
    out.push('\n');
    for &alg in &result.config.algorithms {
        for sim in &result.simulations {
            let run = sim.runs.iter().find(|r| r.algorithm == alg).expect("every algorithm runs");
            let fields = [
                alg.to_string(),
                sim.sim.to_string(),
                sim.seed.to_string(),
                format_number(sim.optimal_reward),
                format_number(sim.gamma),
                format_number(sim.gamma_strict),
                format_number(sim.h),
                opt_num(sim.regret_bound_final),
                run.bound_violations.to_string(),
                opt(sim.finite_sample_threshold),
                opt(sim.convergence_threshold),
                opt_num(run.coverage_rate),
                run.decomposition.checked.to_string(),
                run.decomposition.violations.to_string(),
                run.radius.checked.to_string(),
                run.radius.violations.to_string(),
                run.radius.unchecked.to_string(),
                run.radius.tight_violations.to_string(),
                run.radius.pooled_violations.to_string(),
                format_number(run.radius.max_xi),
                run.coverage_losses.to_string(),
                run.frozen_regret_violations.to_string(),
                format_number(run.cumulative_regret.last().copied().unwrap_or(0.0)),
            ];
            out.push_str(&fields.join(","));
            out.push('\n');
        }
    }
    out
}

pub fn instances_txt(result: &SweepResult) -> String {
    let mut out = String::new();
    for sim in &result.simulations {
        let _ = writeln!(out, "# sim {} seed {}", sim.sim, sim.seed);
        out.push_str(&sim.instance);
    }
    out
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|source| HarnessError::Io { path, source })
}

/// Writes `curves.csv`, `runs.csv`, `analysis.csv`, `instances.txt` and
/// `config.echo` into `dir`, creating it if needed.
pub fn write_csv(result: &SweepResult, dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_file(dir, "curves.csv", &curves_csv(result))?;
    write_file(dir, "runs.csv", &runs_csv(result))?;
    write_file(dir, "analysis.csv", &analysis_csv(result))?;
    write_file(dir, "instances.txt", &instances_txt(result))?;
    write_file(dir, "config.echo", &result.config.echo())?;
    Ok(())
}

/// Rows of one CSV file keyed by header name.
struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn parse(path: PathBuf, text: &str, expected: &str) -> Result<Self, HarnessError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != expected {
            return Err(HarnessError::Malformed {
                path,
                reason: "unexpected header".into(),
            });
        }
        let header: Vec<String> = header.split(',').map(String::from).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row: Vec<String> = line.split(',').map(String::from).collect();
            if row.len() != header.len() {
                return Err(HarnessError::Malformed {
                    path,
                    reason: format!("line {} has {} fields, expected {}", i + 2, row.len(), header.len()),
                });
            }
            rows.push(row);
        }
        Ok(Self { path, header, rows })
    }

    fn column(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).expect("known column")
    }

    fn rows_for<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a Vec<String>> + 'a {
        self.rows.iter().filter(move |r| r[0] == algorithm)
    }

    fn number(&self, row: &[String], name: &str) -> Result<Option<f64>, HarnessError> {
        let raw = &row[self.column(name)];
        if raw.is_empty() {
            return Ok(None);
        }
        raw.parse().map(Some).map_err(|_| HarnessError::Malformed {
            path: self.path.clone(),
            reason: format!("`{raw}` in column {name} is not a number"),
        })
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Linear-interpolation quantile of sorted values.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn summarize_tables(curves: &Table, runs: &Table, analysis: &Table) -> Result<String, HarnessError> {
    let mut algorithms: Vec<&str> = Vec::new();
    for row in &runs.rows {
        if !algorithms.contains(&row[0].as_str()) {
            algorithms.push(&row[0]);
        }
    }
    let mut out = String::new();
    for alg in algorithms {
        let mut rewards = Vec::new();
        for row in curves.rows_for(alg) {
            rewards.push(curves.number(row, "mean_expected_reward")?.unwrap_or(0.0));
        }
        let early = &rewards[..rewards.len().min(200)];
        let late = &rewards[rewards.len().saturating_sub(500)..];

        let mut sims = 0;
        let mut converged = Vec::new();
        let mut covered = 0;
        let mut with_coverage = 0;
        for row in runs.rows_for(alg) {
            sims += 1;
            if let Some(ep) = runs.number(row, "convergence_episode")? {
                converged.push(ep);
            }
            match row[runs.column("coverage_all_t")].as_str() {
                "true" => {
                    covered += 1;
                    with_coverage += 1;
                }
                "false" => with_coverage += 1,
                _ => {}
            }
        }
        converged.sort_by(f64::total_cmp);

        let columns = [
            "bound_violations",
            "decomposition_checked",
            "decomposition_violations",
            "radius_checked",
            "radius_violations",
            "radius_unchecked",
            "radius_tight_violations",
            "radius_pooled_violations",
            "coverage_losses",
            "frozen_regret_violations",
        ];
        let mut totals = [0.0; 10];
        let mut optimal = Vec::new();
        for row in analysis.rows_for(alg) {
            for (total, name) in totals.iter_mut().zip(columns) {
                *total += analysis.number(row, name)?.unwrap_or(0.0);
            }
            optimal.extend(analysis.number(row, "optimal_reward")?);
        }

        let _ = writeln!(out, "algorithm: {alg}");
        let _ = writeln!(out, "  simulations: {sims}");
        let _ = writeln!(out, "  mean optimal reward: {}", opt_num(mean(&optimal)));
        let _ = writeln!(out, "  final mean reward: {}", opt_num(rewards.last().copied()));
        let _ = writeln!(out, "  early-window mean reward (episodes 1-200): {}", opt_num(mean(early)));
        let _ = writeln!(out, "  final-500 mean reward: {}", opt_num(mean(late)));
        if converged.is_empty() {
            let _ = writeln!(out, "  convergence episode quartiles: none (0 of {sims} converged)");
        } else {
            let _ = writeln!(
                out,
                "  convergence episode quartiles: {} / {} / {} ({} of {sims} converged)",
                format_number(quantile(&converged, 0.25)),
                format_number(quantile(&converged, 0.5)),
                format_number(quantile(&converged, 0.75)),
                converged.len(),
            );
        }
        if with_coverage > 0 {
            let _ = writeln!(
                out,
                "  coverage rate (all episodes): {}",
                format_number(covered as f64 / with_coverage as f64)
            );
        }
        let _ = writeln!(
            out,
            "  decomposition violations: {} of {} checked",
            totals[2], totals[1]
        );
        let _ = writeln!(
            out,
            "  radius violations: {} of {} checked ({} unchecked, {} tight-form, {} pooled-gamma)",
            totals[4], totals[3], totals[5], totals[6], totals[7]
        );
        let _ = writeln!(out, "  regret bound violations: {}", totals[0]);
        let _ = writeln!(out, "  frozen-policy regret violations: {}", totals[9]);
        let _ = writeln!(out, "  coverage-loss events: {}", totals[8]);
    }
    Ok(out)
}

fn tables_from(
    dir: &Path,
    curves: &str,
    runs: &str,
    analysis: &str,
) -> Result<(Table, Table, Table), HarnessError> {
    Ok((
        Table::parse(dir.join("curves.csv"), curves, CURVES_HEADER)?,
        Table::parse(dir.join("runs.csv"), runs, RUNS_HEADER)?,
        Table::parse(dir.join("analysis.csv"), analysis, ANALYSIS_HEADER)?,
    ))
}

/// Text summary of a sweep; identical to [`summarize_dir`] on its output.
pub fn summarize(result: &SweepResult) -> String {
    let (c, r, a) = tables_from(
        &result.config.out,
        &curves_csv(result),
        &runs_csv(result),
        &analysis_csv(result),
    )
    .expect("rendered tables parse");
    summarize_tables(&c, &r, &a).expect("rendered tables are numeric")
}

/// Text summary from the files written by [`write_csv`].
pub fn summarize_dir(dir: &Path) -> Result<String, HarnessError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|source| HarnessError::Io { path, source })
    };
    let (c, r, a) = tables_from(dir, &read("curves.csv")?, &read("runs.csv")?, &read("analysis.csv")?)?;
    summarize_tables(&c, &r, &a)
}
