use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use mcpr_core::ils::{ils_batch, ils_run, ils_run_traced};
use mcpr_core::instance::Instance;
use mcpr_core::model::{build_conic_model, build_li_milp, build_mtz_model, write_lp, WBounds};
use mcpr_core::oracle::brute_force_optimum;
use mcpr_core::solver::{cp_mtz, nested_branch_and_cut, nested_cutting_plane, SolveReport};

use crate::{fmt_f64, read_instance, Method, SolveArgs, SolverOpts};

/// Runs an optimization method; export methods are rejected.
pub fn run_method(inst: &Instance, method: Method, opts: &SolverOpts) -> Result<SolveReport> {
    let cfg = opts.solve_config();
    Ok(match method {
        Method::Ncp => nested_cutting_plane(inst, &cfg)?,
        Method::Nbc => nested_branch_and_cut(inst, &cfg)?,
        Method::CpMtz => cp_mtz(inst, &cfg)?,
        Method::Ils => ils_batch(inst, &opts.ils_config()),
        Method::Brute => brute_force_optimum(inst)?,
        m => bail!("{} writes a model file and does not solve", m.name()),
    })
}

/// One local-search run with an explicit seed.
pub fn run_ils_seed(inst: &Instance, opts: &SolverOpts, seed: u64) -> SolveReport {
    ils_run(inst, &opts.ils_config(), seed)
}

/// Writes the model of an export method to `dir` and returns its path.
pub fn export_model(inst: &Instance, method: Method, dir: &Path) -> Result<PathBuf> {
    let (suffix, text) = match method {
        Method::MilpExport => ("li-milp", write_lp(&build_li_milp(inst, &WBounds::default_for(inst))?)),
        Method::ConicExport => ("conic", write_lp(&build_conic_model(inst).model)),
        Method::MtzExport => ("mtz", write_lp(&build_mtz_model(inst))),
        m => bail!("{} is not an export method", m.name()),
    };
    std::fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}.{suffix}.lp", inst.name));
    std::fs::write(&path, text)?;
    Ok(path)
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<()> {
    let inst = read_instance(&args.instance)?;
    if args.method.is_export() {
        let path = export_model(&inst, args.method, &args.out)?;
        writeln!(out, "wrote {}", path.display())?;
        return Ok(());
    }
    let report = run_method(&inst, args.method, &args.opts)?;
    print_report(&inst, args.method, &report, out)?;
    if args.opts.trace {
        print_trace(&inst, args.method, &args.opts, &report, out)?;
    }
    Ok(())
}

pub fn print_report(inst: &Instance, method: Method, r: &SolveReport, out: &mut dyn Write) -> Result<()> {
    let tour: Vec<String> = r.best_tour.iter().map(|v| v.to_string()).collect();
    writeln!(out, "instance: {}", inst.name)?;
    writeln!(out, "method: {}", method.name())?;
    writeln!(out, "status: {}", r.status)?;
    writeln!(out, "objective: {}", fmt_f64(r.objective))?;
    writeln!(out, "bound: {}", r.bound.map(fmt_f64).unwrap_or_else(|| "-".into()))?;
    writeln!(out, "tour: {}", tour.join(" "))?;
    writeln!(out, "time_s: {:.3}", r.wall_time.as_secs_f64())?;
    writeln!(out, "outer_iters: {}", r.stats.outer_iters)?;
    writeln!(out, "sec_iters: {}", r.stats.sec_rounds)?;
    writeln!(out, "cuts: {}", r.stats.total_cuts())?;
    Ok(())
}

fn print_trace(inst: &Instance, method: Method, opts: &SolverOpts, r: &SolveReport, out: &mut dyn Write) -> Result<()> {
    if method == Method::Ils {
        let cfg = opts.ils_config();
        writeln!(out, "run,iteration,current,best,operator")?;
        for run in 0..cfg.runs.max(1) {
            let (_, rows) = ils_run_traced(inst, &cfg, cfg.seed, run as u64);
            for row in rows {
                writeln!(out, "{run},{},{},{},{}", row.iteration, row.current, row.best, row.operator)?;
            }
        }
        return Ok(());
    }
    writeln!(out, "iteration,theta_sum,objective,cuts_added,sec_rounds")?;
    for row in &r.trace {
        writeln!(out, "{},{},{},{},{}", row.iteration, row.theta_sum, row.objective, row.cuts_added, row.sec_rounds)?;
    }
    Ok(())
}
