use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mcpr_core::instance::{derive_budget_variants, Instance};
use mcpr_core::oracle::{brute_force_optimum, BRUTE_FORCE_GUARD};
use mcpr_core::solver::{SolveReport, Status};

use crate::solve::{run_ils_seed, run_method};
use crate::{budget_variant_name, fmt_f64, read_instance, BenchArgs, Method, SolverOpts, INSTANCE_EXT};

pub const CSV_HEADER: [&str; 10] =
    ["instance", "method", "seed", "objective", "bound", "status", "time_s", "outer_iters", "sec_iters", "cuts"];

/// Objectives closer than this count as equal.
const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRow {
    pub instance: String,
    pub method: String,
    /// Set for local-search rows only.
    pub seed: Option<u64>,
    /// Missing when the cell failed.
    pub objective: Option<f64>,
    pub bound: Option<f64>,
    /// Solver status, or `ERROR`.
    pub status: String,
    pub time_s: f64,
    pub outer_iters: usize,
    pub sec_iters: usize,
    pub cuts: usize,
}

impl BenchmarkRow {
    fn from_report(instance: &str, method: Method, seed: Option<u64>, r: &SolveReport) -> Self {
        BenchmarkRow {
            instance: instance.to_string(),
            method: method.name().to_string(),
            seed,
            objective: Some(r.objective),
            bound: r.bound,
            status: r.status.to_string(),
            time_s: r.wall_time.as_secs_f64(),
            outer_iters: r.stats.outer_iters,
            sec_iters: r.stats.sec_rounds,
            cuts: r.stats.total_cuts(),
        }
    }

    fn failed(instance: &str, method: Method) -> Self {
        BenchmarkRow {
            instance: instance.to_string(),
            method: method.name().to_string(),
            seed: None,
            objective: None,
            bound: None,
            status: "ERROR".to_string(),
            time_s: 0.0,
            outer_iters: 0,
            sec_iters: 0,
            cuts: 0,
        }
    }

    fn record(&self) -> [String; 10] {
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        [
            self.instance.clone(),
            self.method.clone(),
            self.seed.map(|s| s.to_string()).unwrap_or_default(),
            opt(self.objective),
            opt(self.bound),
            self.status.clone(),
            format!("{:.6}", self.time_s),
            self.outer_iters.to_string(),
            self.sec_iters.to_string(),
            self.cuts.to_string(),
        ]
    }

    fn parse(rec: &csv::StringRecord) -> Result<Self> {
        if rec.len() != CSV_HEADER.len() {
            bail!("expected {} fields, found {}", CSV_HEADER.len(), rec.len());
        }
        let opt = |s: &str| -> Result<Option<f64>> { Ok(if s.is_empty() { None } else { Some(s.parse()?) }) };
        Ok(BenchmarkRow {
            instance: rec[0].to_string(),
            method: rec[1].to_string(),
            seed: if rec[2].is_empty() { None } else { Some(rec[2].parse()?) },
            objective: opt(&rec[3])?,
            bound: opt(&rec[4])?,
            status: rec[5].to_string(),
            time_s: rec[6].parse()?,
            outer_iters: rec[7].parse()?,
            sec_iters: rec[8].parse()?,
            cuts: rec[9].parse()?,
        })
    }
}

/// Aggregate line of the Markdown table.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub method: String,
    pub rows: usize,
    pub instances: usize,
    pub n_opt: usize,
    pub n_best: usize,
    pub mean_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOutcome {
    pub rows: Vec<BenchmarkRow>,
    pub summary: Vec<MethodSummary>,
}

/// Instance files of `dir`, sorted by path.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("cannot read directory {}", dir.display()))? {
        let path = entry?.path();
        if path.extension().is_some_and(|e| e == INSTANCE_EXT) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Solves every instance with every method and aggregates the results.
pub fn run_bench(instances: &[Instance], methods: &[Method], opts: &SolverOpts) -> Result<BenchOutcome> {
    if let Some(m) = methods.iter().find(|m| m.is_export()) {
        bail!("{} cannot be benchmarked", m.name());
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let mut rows = Vec::new();
    for inst in instances {
        for &method in &methods {
            if method == Method::Ils {
                for seed in opts.seed..opts.seed + opts.runs.max(1) as u64 {
                    let r = run_ils_seed(inst, opts, seed);
                    rows.push(BenchmarkRow::from_report(&inst.name, method, Some(seed), &r));
                }
                continue;
            }
            match run_method(inst, method, opts) {
                Ok(r) => rows.push(BenchmarkRow::from_report(&inst.name, method, None, &r)),
                Err(e) => {
                    log::error!("{} on {}: {e:#}", method.name(), inst.name);
                    rows.push(BenchmarkRow::failed(&inst.name, method));
                }
            }
        }
    }
    let oracle: BTreeMap<&str, f64> = instances
        .iter()
        .filter(|i| i.m <= BRUTE_FORCE_GUARD)
        .filter_map(|i| brute_force_optimum(i).ok().map(|r| (i.name.as_str(), r.objective)))
        .collect();
    let summary = summarize(&rows, &methods, &oracle);
    Ok(BenchOutcome { rows, summary })
}

/// Per-method counts. An instance counts as solved to optimality when its
/// best objective matches the oracle, or, without an oracle, when some row
/// reports `OPTIMAL`.
fn summarize(rows: &[BenchmarkRow], methods: &[Method], oracle: &BTreeMap<&str, f64>) -> Vec<MethodSummary> {
    let mut per_cell: BTreeMap<(&str, &str), (Option<f64>, bool)> = BTreeMap::new();
    for r in rows {
        let cell = per_cell.entry((r.instance.as_str(), r.method.as_str())).or_insert((None, false));
        if let Some(v) = r.objective {
            cell.0 = Some(cell.0.map_or(v, |b: f64| b.max(v)));
        }
        cell.1 |= r.status == Status::Optimal.to_string();
    }
    let mut best: BTreeMap<&str, f64> = BTreeMap::new();
    for (&(inst, _), &(v, _)) in &per_cell {
        if let Some(v) = v {
            let b = best.entry(inst).or_insert(v);
            *b = b.max(v);
        }
    }
    methods
        .iter()
        .map(|m| {
            let name = m.name();
            let mine: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.method == name).collect();
            let cells: Vec<(&str, Option<f64>, bool)> =
                per_cell.iter().filter(|(k, _)| k.1 == name).map(|(k, v)| (k.0, v.0, v.1)).collect();
            let n_opt = cells
                .iter()
                .filter(|(inst, v, opt)| match (oracle.get(inst), v) {
                    (Some(o), Some(v)) => (o - v).abs() <= MATCH_TOL,
                    (Some(_), None) => false,
                    (None, _) => *opt,
                })
                .count();
            let n_best = cells.iter().filter(|(inst, v, _)| v.is_some_and(|v| v >= best[inst] - MATCH_TOL)).count();
            let mean_time = if mine.is_empty() { 0.0 } else { mine.iter().map(|r| r.time_s).sum::<f64>() / mine.len() as f64 };
            MethodSummary { method: name.to_string(), rows: mine.len(), instances: cells.len(), n_opt, n_best, mean_time }
        })
        .collect()
}

pub fn write_csv(rows: &[BenchmarkRow], w: impl Write) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(CSV_HEADER)?;
    for r in rows {
        wr.write_record(r.record())?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<BenchmarkRow>> {
    let mut rd = csv::Reader::from_path(path)?;
    if rd.headers()?.iter().ne(CSV_HEADER) {
        bail!("unexpected CSV header in {}", path.display());
    }
    rd.records().map(|rec| BenchmarkRow::parse(&rec?)).collect()
}

pub fn markdown_table(summary: &[MethodSummary]) -> String {
    let mut s = String::from("| method | rows | instances | #Opt | #Best | mean time (s) |\n|---|---|---|---|---|---|\n");
    for m in summary {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.3} |\n",
            m.method, m.rows, m.instances, m.n_opt, m.n_best, m.mean_time
        ));
    }
    let total: usize = summary.iter().map(|m| m.rows).sum();
    s.push_str(&format!("\nTotal rows: {total}\n"));
    s
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> Result<()> {
    let mut instances = Vec::new();
    for path in instance_files(&args.dir)? {
        let inst = read_instance(&path)?;
        if args.budgets.is_empty() {
            instances.push(inst);
            continue;
        }
        for (mut v, &k) in derive_budget_variants(&inst, &args.budgets).into_iter().zip(&args.budgets) {
            v.name = budget_variant_name(&inst.name, k);
            instances.push(v);
        }
    }
    let outcome = run_bench(&instances, &args.method, &args.opts)?;
    std::fs::create_dir_all(&args.out)?;
    let csv_path = args.out.join("results.csv");
    write_csv(&outcome.rows, std::fs::File::create(&csv_path)?)?;
    let table = markdown_table(&outcome.summary);
    std::fs::write(args.out.join("results.md"), &table)?;
    out.write_all(table.as_bytes())?;
    Ok(())
}
