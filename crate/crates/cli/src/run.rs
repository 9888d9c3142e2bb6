//! Subcommand dispatch.

use std::fs;
use std::path::Path;

use mvsde::coefficients::validate::validate_hypotheses;
use mvsde::diagnostics::{
    degeneracy_check, increment_moment4, independence_test, ladder, moment_sup4, IndependenceReport,
};
use mvsde::integrator::{simulate, TrajectoryStore};
use mvsde::persistence::save_store;
use mvsde::report::RunReport;

use crate::config::RunConfig;

pub type Error = Box<dyn std::error::Error + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Validate,
    Ladder,
    Diagnose,
    Independence,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Validate => "validate",
            Subcommand::Ladder => "ladder",
            Subcommand::Diagnose => "diagnose",
            Subcommand::Independence => "independence",
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| mvsde::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn simulate_and_save(config: &RunConfig, out: &Path, report: &mut RunReport) -> Result<TrajectoryStore, Error> {
    let store = simulate(&config.simulation)?;
    let manifest = save_store(&store, out)?;
    report.artifacts.push(mvsde::persistence::MANIFEST.into());
    report.artifacts.extend(
        manifest
            .snapshots
            .iter()
            .chain(&manifest.increments)
            .chain(&manifest.copies)
            .map(|b| b.file.clone()),
    );
    Ok(store)
}

fn structural(store: &TrajectoryStore, config: &RunConfig, report: &mut RunReport) -> Result<(), Error> {
    let cs = config.simulation.coefficients()?;
    report.degeneracy = Some(degeneracy_check(store, cs.as_ref())?);
    if store.snapshots.len() >= 2 {
        report.sup_moment = Some(moment_sup4(store)?);
    }
    Ok(())
}

fn independence_csv(rows: &[IndependenceReport]) -> String {
    let mut s = String::from("f,g,mean_fg,mean_f_mean_g,difference,std_error,statistic,pass\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.f, r.g, r.mean_fg, r.mean_f_mean_g, r.difference, r.std_error, r.statistic, r.pass
        ));
    }
    s
}

/// Runs one subcommand, writes its artifacts under `out` and returns the
/// summary line.
pub fn run(cmd: Subcommand, mut config: RunConfig, out: &Path) -> Result<String, Error> {
    if cmd == Subcommand::Independence {
        config.simulation.retain_increments = true;
    }
    fs::create_dir_all(out).map_err(|e| mvsde::Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let mut report = RunReport::new(cmd.name(), &config)?;
    let sim = &config.simulation;
    let summary = match cmd {
        Subcommand::Simulate => {
            let store = simulate_and_save(&config, out, &mut report)?;
            structural(&store, &config, &mut report)?;
            let sup = report.sup_moment.as_ref().and_then(|m| m.sup_moment);
            let deg = report.degeneracy.as_ref().map(|d| d.pass).unwrap_or(false);
            format!(
                "summary: simulate system={} n={} N={} steps={} sup4={} degeneracy={}",
                sim.system,
                sim.level,
                sim.particles,
                sim.steps,
                sup.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "n/a".into()),
                if deg { "pass" } else { "FAIL" }
            )
        }
        Subcommand::Validate => {
            let cs = sim.coefficients()?;
            let r = validate_hypotheses(cs.as_ref(), &config.validate)?;
            let line = format!(
                "summary: validate system={} n={} all_pass={} bound_margin={:.6e} ellipticity_margin={:.6e}",
                r.system, r.level, r.all_pass, r.bound.margin, r.ellipticity.margin
            );
            report.hypotheses.push(r);
            line
        }
        Subcommand::Diagnose => {
            let store = simulate_and_save(&config, out, &mut report)?;
            structural(&store, &config, &mut report)?;
            let m = increment_moment4(&store, &config.lags, config.block)?;
            write_text(&out.join("moments.csv"), &m.to_csv())?;
            let line = format!(
                "summary: diagnose system={} n={} slope={} sup4={}",
                sim.system,
                sim.level,
                m.slope.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into()),
                report
                    .sup_moment
                    .as_ref()
                    .and_then(|s| s.sup_moment)
                    .map(|v| format!("{v:.6e}"))
                    .unwrap_or_else(|| "n/a".into()),
            );
            report.increment_moment = Some(m);
            line
        }
        Subcommand::Ladder => {
            let r = ladder(sim, config.ladder_axis, &config.ladder_levels, config.ladder_reference)?;
            write_text(&out.join("ladder.csv"), &r.to_csv())?;
            let ds: Vec<String> = r.distances.iter().map(|d| format!("{:.6e}", d.distance)).collect();
            let line = format!("summary: ladder distances=[{}] verdict={}", ds.join(","), r.verdict.replace(' ', "-"));
            report.ladder = Some(r);
            line
        }
        Subcommand::Independence => {
            let store = simulate_and_save(&config, out, &mut report)?;
            for (f, g) in &config.independence_pairs {
                report.independence.push(independence_test(&store, &config.independence_times, *f, *g)?);
            }
            write_text(&out.join("independence.csv"), &independence_csv(&report.independence))?;
            let passed = report.independence.iter().filter(|r| r.pass).count();
            format!(
                "summary: independence n={} passed={}/{} at 3-sigma",
                sim.level,
                passed,
                report.independence.len()
            )
        }
    };
    report.summary = summary.clone();
    report.write(out)?;
    Ok(summary)
}
