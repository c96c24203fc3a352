//! Command-line driver: single runs and the benchmark sweep.
//!
//! Everything here returns values instead of exiting so that the binary
//! stays a thin argument parser and the logic can be exercised in tests.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::Serialize;

use hyflow_core::engine::{simulate, Flowpipe, SimConfig};
use hyflow_core::integrator::ButcherTable;
use hyflow_core::validate::{validate_monte_carlo, RefCfg, Report};

use crate::bench::{find, BenchmarkEntry, REGISTRY};
use crate::dsl::load_dsl;
use crate::json_model::parse_json_automaton;
use crate::model::Model;
use crate::output::{emit_csv, emit_json, emit_svg, report_value};

/// Process exit statuses.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_PARTIAL: i32 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
            Format::Svg => "svg",
        }
    }
}

/// Parse a comma separated list such as `csv,svg`. Duplicates collapse.
pub fn parse_formats(list: &str) -> Result<Vec<Format>, String> {
    let mut out = Vec::new();
    for part in list.split(',').map(str::trim) {
        let f = match part {
            "csv" => Format::Csv,
            "json" => Format::Json,
            "svg" => Format::Svg,
            "" => continue,
            other => return Err(format!("unknown output format `{other}` (expected csv, json or svg)")),
        };
        if !out.contains(&f) {
            out.push(f);
        }
    }
    if out.is_empty() {
        return Err("at least one output format is required".into());
    }
    Ok(out)
}

/// Command-line replacements for model settings.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub max_dt: Option<f64>,
    pub tol: Option<f64>,
    pub zc_precision: Option<f64>,
    pub scheme: Option<String>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut SimConfig) -> Result<(), String> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(v)
            } else {
                Err(format!("--{name} must be a positive number, got {v}"))
            }
        };
        if let Some(v) = self.duration {
            cfg.t_f = cfg.t0 + positive("duration", v)?;
        }
        if let Some(v) = self.dt {
            cfg.dt = positive("dt", v)?;
        }
        if let Some(v) = self.max_dt {
            cfg.integ.h_max = positive("max-dt", v)?;
        }
        if let Some(v) = self.tol {
            cfg.integ.tol = positive("tol", v)?;
        }
        if let Some(v) = self.zc_precision {
            cfg.zc.precision = positive("zc-precision", v)?;
        }
        if let Some(name) = &self.scheme {
            cfg.scheme = ButcherTable::by_name(name).ok_or_else(|| format!("unknown scheme `{name}` (expected ode23 or rk4)"))?;
        }
        if cfg.dt > cfg.integ.h_max {
            cfg.dt = cfg.integ.h_max;
        }
        cfg.validate().map_err(|e| format!("invalid configuration: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Path(PathBuf),
    Bench(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRequest {
    pub input: Input,
    pub overrides: Overrides,
    pub formats: Vec<Format>,
    pub out_dir: PathBuf,
    /// Monte-Carlo samples; zero skips validation.
    pub validate: usize,
    pub seed: u64,
}

/// Load a model file; `.json` selects the automaton format, anything else
/// the text language. Errors are rendered for the terminal.
pub fn load_model_file(path: &Path) -> Result<Model, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("error: cannot read {}: {e}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let loaded = if is_json { parse_json_automaton(&text) } else { load_dsl(&text) };
    loaded.map_err(|e| e.render(&path.display().to_string(), &text))
}

fn load_bench(entry: &BenchmarkEntry) -> Result<Model, String> {
    entry.load().map_err(|e| e.render(&format!("<{}>", entry.name), entry.text()))
}

#[derive(Debug)]
pub struct RunOutcome {
    pub flowpipe: Flowpipe,
    pub report: Option<Report>,
    pub written: Vec<PathBuf>,
    pub elapsed: Duration,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.as_ref().is_some_and(|r| !r.violations.is_empty()) {
            EXIT_ERROR
        } else if self.flowpipe.complete {
            EXIT_OK
        } else {
            EXIT_PARTIAL
        }
    }
}

fn write_file(path: PathBuf, text: &str, written: &mut Vec<PathBuf>) -> Result<(), String> {
    fs::write(&path, text).map_err(|e| format!("error: cannot write {}: {e}", path.display()))?;
    written.push(path);
    Ok(())
}

fn artifact(m: &Model, fp: &Flowpipe, f: Format) -> String {
    match f {
        Format::Csv => emit_csv(fp),
        Format::Json => emit_json(fp),
        Format::Svg => emit_svg(fp, &m.plot),
    }
}

pub fn run(req: &RunRequest) -> Result<RunOutcome, String> {
    let (mut model, stem) = match &req.input {
        Input::Path(p) => {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "model".into());
            (load_model_file(p)?, stem)
        }
        Input::Bench(name) => {
            let entry = find(name).ok_or_else(|| format!("error: unknown benchmark `{name}`; known: {}", bench_names()))?;
            (load_bench(entry)?, entry.name.to_string())
        }
    };
    req.overrides.apply(&mut model.cfg)?;
    let start = Instant::now();
    let fp = simulate(&model.ha, &model.cfg).map_err(|e| format!("error: simulation failed: {e}"))?;
    let elapsed = start.elapsed();
    let report = (req.validate > 0).then(|| validate_monte_carlo(&model.ha, &fp, req.validate, req.seed, &RefCfg::default()));
    fs::create_dir_all(&req.out_dir).map_err(|e| format!("error: cannot create {}: {e}", req.out_dir.display()))?;
    let mut written = Vec::new();
    for &f in &req.formats {
        let path = req.out_dir.join(format!("{stem}.{}", f.extension()));
        write_file(path, &artifact(&model, &fp, f), &mut written)?;
    }
    if let Some(r) = &report {
        let mut text = serde_json::to_string_pretty(&report_value(r)).expect("serializable");
        text.push('\n');
        write_file(req.out_dir.join(format!("{stem}.validation.json")), &text, &mut written)?;
    }
    Ok(RunOutcome { flowpipe: fp, report, written, elapsed })
}

pub fn bench_names() -> String {
    REGISTRY.iter().map(|e| e.name).collect::<Vec<_>>().join(", ")
}

/// One line of the benchmark sweep.
#[derive(Debug)]
pub struct BenchRow {
    pub entry: &'static BenchmarkEntry,
    pub outcome: Result<(Flowpipe, Option<Report>), String>,
    pub elapsed: Duration,
}

impl BenchRow {
    pub fn passed(&self) -> bool {
        match &self.outcome {
            Ok((fp, r)) => fp.complete && r.as_ref().map_or(true, |r| r.violations.is_empty() && r.skipped.is_empty()),
            Err(_) => false,
        }
    }
}

fn bench_one(entry: &'static BenchmarkEntry, samples: usize, seed: u64) -> BenchRow {
    let start = Instant::now();
    let outcome = load_bench(entry).and_then(|m| {
        let fp = simulate(&m.ha, &m.cfg).map_err(|e| format!("simulation failed: {e}"))?;
        let report = (samples > 0).then(|| validate_monte_carlo(&m.ha, &fp, samples, seed, &RefCfg::default()));
        Ok((fp, report))
    });
    BenchRow { entry, outcome, elapsed: start.elapsed() }
}

/// Threads for the sweep, from `HYFLOW_THREADS` when set to a positive
/// integer; rayon's default otherwise.
pub fn thread_cap() -> Option<usize> {
    std::env::var("HYFLOW_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n: &usize| n > 0)
}

/// Run every registered benchmark, in parallel, keeping registry order.
pub fn bench_all(samples: usize, seed: u64) -> Vec<BenchRow> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let work = || REGISTRY.par_iter().map(|e| bench_one(e, samples, seed)).collect();
    match builder.build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    }
}

#[derive(Serialize)]
struct BenchDoc<'a> {
    name: &'a str,
    summary: &'a str,
    reconstruction: bool,
    fixed_step: bool,
    complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    t_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    crossings: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    branches: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_widths: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validation: Option<serde_json::Value>,
}

/// Machine-readable sweep summary. Wall times are left out so that the
/// document only depends on the inputs.
pub fn bench_json(rows: &[BenchRow], samples: usize, seed: u64) -> String {
    let docs: Vec<BenchDoc> = rows
        .iter()
        .map(|row| {
            let e = row.entry;
            let mut doc = BenchDoc {
                name: e.name,
                summary: e.summary,
                reconstruction: e.reconstruction,
                fixed_step: e.fixed_step,
                complete: false,
                error: None,
                t_final: None,
                steps: None,
                crossings: None,
                branches: None,
                final_widths: None,
                validation: None,
            };
            match &row.outcome {
                Ok((fp, report)) => {
                    doc.complete = fp.complete;
                    doc.t_final = Some(fp.t_f);
                    doc.steps = Some(fp.stats.steps);
                    doc.crossings = Some(fp.stats.crossings);
                    doc.branches = Some(fp.branches.len());
                    doc.final_widths = fp.final_enclosure().map(|b| b.iter().map(|i| i.width()).collect());
                    doc.validation = report.as_ref().map(report_value);
                }
                Err(msg) => doc.error = Some(msg),
            }
            doc
        })
        .collect();
    let all = serde_json::json!({
        "samples": samples,
        "seed": seed,
        "benchmarks": docs,
    });
    let mut s = serde_json::to_string_pretty(&all).expect("serializable");
    s.push('\n');
    s
}

/// Human-readable table, including wall times.
pub fn bench_table(rows: &[BenchRow]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<18} {:>8} {:>7} {:>6} {:>10} {:>10}  widths", "benchmark", "complete", "steps", "jumps", "contained", "time [s]");
    for row in rows {
        let name = row.entry.name;
        let secs = row.elapsed.as_secs_f64();
        match &row.outcome {
            Ok((fp, report)) => {
                let rate = report.as_ref().map_or("-".to_string(), |r| format!("{:.1}%", 100.0 * r.rate()));
                let widths = fp
                    .final_enclosure()
                    .map(|b| b.iter().map(|i| format!("{:.3e}", i.width())).collect::<Vec<_>>().join(" "))
                    .unwrap_or_default();
                let _ = writeln!(
                    s,
                    "{name:<18} {:>8} {:>7} {:>6} {rate:>10} {secs:>10.2}  {widths}",
                    if fp.complete { "yes" } else { "no" },
                    fp.stats.steps,
                    fp.stats.crossings
                );
            }
            Err(msg) => {
                let _ = writeln!(s, "{name:<18} {:>8} {:>7} {:>6} {:>10} {secs:>10.2}  {msg}", "error", "-", "-", "-");
            }
        }
    }
    s
}

/// Write `<name>.csv` per successful benchmark plus `bench.json`.
pub fn write_bench_artifacts(rows: &[BenchRow], samples: usize, seed: u64, out_dir: &Path) -> Result<Vec<PathBuf>, String> {
    fs::create_dir_all(out_dir).map_err(|e| format!("error: cannot create {}: {e}", out_dir.display()))?;
    let mut written = Vec::new();
    for row in rows {
        if let Ok((fp, _)) = &row.outcome {
            write_file(out_dir.join(format!("{}.csv", row.entry.name)), &emit_csv(fp), &mut written)?;
        }
    }
    write_file(out_dir.join("bench.json"), &bench_json(rows, samples, seed), &mut written)?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats() {
        assert_eq!(parse_formats("csv,svg").unwrap(), vec![Format::Csv, Format::Svg]);
        assert_eq!(parse_formats("json, json").unwrap(), vec![Format::Json]);
        assert!(parse_formats("").is_err());
        assert!(parse_formats("png").unwrap_err().contains("png"));
    }

    #[test]
    fn overrides_apply_and_validate() {
        let mut cfg = crate::model::default_config();
        let o = Overrides { duration: Some(1.0), max_dt: Some(0.001), scheme: Some("rk4".into()), ..Overrides::default() };
        o.apply(&mut cfg).unwrap();
        assert_eq!(cfg.t_f, 1.0);
        assert_eq!(cfg.integ.h_max, 0.001);
        assert_eq!(cfg.dt, 0.001);
        assert_eq!(cfg.scheme.name, "rk4");
        let bad = Overrides { tol: Some(-1.0), ..Overrides::default() };
        assert!(bad.apply(&mut cfg).unwrap_err().contains("--tol"));
        let bad = Overrides { scheme: Some("dopri".into()), ..Overrides::default() };
        assert!(bad.apply(&mut cfg).is_err());
    }

    #[test]
    fn missing_file_is_an_error_without_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let req = RunRequest {
            input: Input::Path(dir.path().join("nope.hs")),
            overrides: Overrides::default(),
            formats: vec![Format::Csv],
            out_dir: out.clone(),
            validate: 0,
            seed: 0,
        };
        let err = run(&req).unwrap_err();
        assert!(err.contains("cannot read"));
        assert!(!out.exists());
    }

    #[test]
    fn unknown_bench_lists_known_names() {
        let req = RunRequest {
            input: Input::Bench("nope".into()),
            overrides: Overrides::default(),
            formats: vec![Format::Csv],
            out_dir: PathBuf::from("unused"),
            validate: 0,
            seed: 0,
        };
        assert!(run(&req).unwrap_err().contains("brusselator"));
    }
}
