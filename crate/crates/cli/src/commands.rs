use std::path::{Path, PathBuf};

use equizero::bergman::{l1loc_error, BergmanField, BoundingBox};
use equizero::chebyshev::{chebyshev_constants, Basis, BasisFile};
use equizero::ensemble::{hypothesis_check, moment_constant, derive_seed};
use equizero::multiindex::dimension;
use equizero::stats::{expectation_experiment, sequence_experiment, variance_experiment, ExperimentPlan, Summary};
use equizero::Error;
use serde::Serialize;

use crate::config::{self, RunConfig};
use crate::manifest::{now, OutDir};
use crate::{Common, Failure};

pub fn run(name: &str, args: &Common) -> Result<(), Failure> {
    let started = now();
    let loaded = config::load(&args.config)?;
    let mut out = OutDir::create(&args.out)?;
    let cfg = &loaded.config;
    let (seed, outcome) = match name {
        "basis" => (None, cmd_basis(cfg, &mut out)),
        "green" => (None, cmd_green(cfg, &mut out)),
        "moment" => {
            let seed = args.seed.or(cfg.moment.as_ref().map(|m| m.seed));
            (seed, cmd_moment(cfg, seed, &mut out))
        }
        _ => {
            let mut plan = cfg.experiment.clone().unwrap_or_else(ExperimentPlan::default_plan);
            if let Some(s) = args.seed {
                plan.seed = s;
            }
            (Some(plan.seed), cmd_experiment(name, &plan, &mut out))
        }
    };
    // the manifest is written even when checks fail, so the artifacts stay traceable
    let pass = outcome?;
    out.finish(name, &loaded.canonical, seed, started)?;
    if pass {
        Ok(())
    } else {
        Err(Failure::experiment(format!("{name}: at least one check failed")))
    }
}

fn solver_context(e: Error) -> Failure {
    match &e {
        Error::NonConvergence {
            iterations,
            residual,
            lower_bound,
            ..
        } => Failure::solver(format!(
            "minimax solver did not converge: {iterations} iterations, residual {residual:e}, lower bound {lower_bound:e}"
        )),
        _ => Failure::from(e),
    }
}

fn csv<F>(write: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf).map_err(|e| Failure::experiment(e.to_string()))?;
    Ok(buf)
}

fn cmd_basis(cfg: &RunConfig, out: &mut OutDir) -> Result<bool, Failure> {
    let sec = cfg.basis.as_ref().ok_or_else(|| Failure::config("config has no basis section"))?;
    sec.set.validate()?;
    let basis = Basis::build(&sec.set, sec.family, sec.degree, &sec.options).map_err(solver_context)?;
    out.write_json(&sec.file, &basis.to_file())?;
    let report = chebyshev_constants(&basis);
    out.write("chebyshev_report.csv", &csv(|b| report.write_csv(b))?)?;
    Ok(true)
}

fn resolve(root: &Path, file: &str) -> PathBuf {
    let p = Path::new(file);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}

fn load_basis(path: &Path) -> Result<Basis, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::missing(format!("basis file {}: {e}", path.display())))?;
    let file: BasisFile =
        serde_json::from_str(&text).map_err(|e| Failure::missing(format!("basis file {} is unreadable: {e}", path.display())))?;
    Ok(Basis::from_file(file)?)
}

#[derive(Serialize)]
struct GreenRow {
    degree: usize,
    error: f64,
    raw: f64,
    max_excess: f64,
}

#[derive(Serialize)]
struct GreenSummary {
    degree: usize,
    resolution: usize,
    bounds: BoundingBox,
    l1loc_error: f64,
    l1_raw: f64,
    max_excess: f64,
    sweep: Vec<GreenRow>,
    sweep_non_increasing: bool,
}

fn cmd_green(cfg: &RunConfig, out: &mut OutDir) -> Result<bool, Failure> {
    let sec = cfg.green.as_ref().ok_or_else(|| Failure::config("config has no green section"))?;
    let basis = load_basis(&resolve(out.root(), &sec.basis_file))?;
    let set = basis.set().clone();
    let bounds = sec.bounds.clone().unwrap_or_else(|| BoundingBox::centered(set.dim(), 2.0));
    let field = BergmanField::build(&basis, &set, &bounds, sec.resolution)?;
    out.write("green_field.csv", &csv(|b| field.write_csv(b))?)?;
    let raw = field.l1_raw();
    let mut sweep = Vec::new();
    for &n in &sec.sweep {
        if n == 0 || n > basis.degree() {
            return Err(Failure::config(format!("sweep degree {n} outside 1..={}", basis.degree())));
        }
        let r = l1loc_error(&basis.truncate(n)?, &set, &bounds, sec.resolution)?;
        sweep.push(GreenRow {
            degree: n,
            error: r.error,
            raw: r.raw,
            max_excess: r.max_excess,
        });
    }
    let non_increasing = sweep.windows(2).all(|w| w[1].error <= w[0].error);
    let summary = GreenSummary {
        degree: basis.degree(),
        resolution: sec.resolution,
        l1loc_error: raw / bounds.volume(),
        l1_raw: raw,
        max_excess: field.max_excess(),
        bounds,
        sweep,
        sweep_non_increasing: non_increasing,
    };
    out.write_json("green_summary.json", &summary)?;
    Ok(non_increasing)
}

fn cmd_moment(cfg: &RunConfig, seed: Option<u64>, out: &mut OutDir) -> Result<bool, Failure> {
    let sec = cfg.moment.as_ref().ok_or_else(|| Failure::config("config has no moment section"))?;
    let seed = seed.unwrap_or(sec.seed);
    if sec.degrees.is_empty() {
        return Err(Failure::config("moment section needs at least one degree"));
    }
    let mut dims = Vec::new();
    for &n in &sec.degrees {
        dims.push((n, dimension(sec.variables, n)?));
    }
    let constants: Result<Vec<_>, Error> = dims
        .iter()
        .map(|&(n, d)| moment_constant(&sec.measure, d, sec.directions, sec.trials, derive_seed(seed, &[n as u64])))
        .collect();
    let constants = constants?;
    let mut lines = String::new();
    for c in &constants {
        lines.push_str(&serde_json::to_string(c).map_err(|e| Failure::experiment(e.to_string()))?);
        lines.push('\n');
    }
    out.write("moment_constants.jsonl", lines.as_bytes())?;
    if dims.len() >= 2 {
        let report = hypothesis_check(&sec.measure, &dims, sec.directions, sec.trials, seed)?;
        out.write_json("moment_hypotheses.json", &report)?;
    }
    Ok(true)
}

fn cmd_experiment(name: &str, plan: &ExperimentPlan, out: &mut OutDir) -> Result<bool, Failure> {
    let summary = match name {
        "expect" => {
            let (series, checks) = expectation_experiment(plan).map_err(solver_context)?;
            out.write("expect.csv", &csv(|b| series.write_csv(b))?)?;
            Summary::new(name, plan, checks).with_series(&series)
        }
        "variance" => {
            let (series, checks) = variance_experiment(plan).map_err(solver_context)?;
            out.write("variance.csv", &csv(|b| series.write_csv(b))?)?;
            Summary::new(name, plan, checks).with_series(&series)
        }
        "sequence" => {
            let (trace, checks) = sequence_experiment(plan).map_err(solver_context)?;
            out.write("sequence.csv", &csv(|b| trace.write_csv(b))?)?;
            Summary::new(name, plan, checks)
        }
        other => return Err(Failure::config(format!("unknown command {other}"))),
    };
    for c in summary.checks.iter().filter(|c| !c.pass) {
        eprintln!("FAIL {} {}: {}", c.name, c.scope, c.detail);
    }
    out.write_json(&format!("{name}_summary.json"), &summary)?;
    Ok(summary.all_pass)
}
