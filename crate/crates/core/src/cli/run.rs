//! Command dispatch and report emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::determinacy::{hardy_test, stopped_sum_determinacy, DeterminacyVerdict};
use crate::moments::{
    default_hill_k, hill_estimate, loglog_slope_estimate, predict_moment_index, predict_moment_index_corollary,
};
use crate::scales::{scale_index, GridSpec, RatioLiminfEstimate, ScaleFunction};
use crate::stopped_sum::{
    classify_dominance, empirical_hazard_partial, simulate_pairs, verify_corollary_limit, verify_scale_membership,
    write_sample_file, EmpiricalTail, SimulationOptions, StoppedSumSpec, DEFAULT_DELTA, DEFAULT_STOPPING_CAP,
};
use crate::zigzag::{build_pair, count_tail_crossings, ZigzagEnvelopes, ZigzagOptions};

use super::config::{Command, ExperimentConfig};
use super::CliError;

pub const REPORT_FILE: &str = "report.json";

const DEFAULT_ZIGZAG_TERMS: usize = 8;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub dump_samples: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool_version: String,
    pub command: Command,
    pub config_echo: ExperimentConfig,
    pub verdicts: BTreeMap<String, Value>,
    pub predictions: BTreeMap<String, Value>,
    pub estimates: BTreeMap<String, Value>,
    /// Files written under the output directory.
    pub traces: Vec<String>,
    pub errors: Vec<String>,
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: cfg.command,
            config_echo: cfg.clone(),
            verdicts: BTreeMap::new(),
            predictions: BTreeMap::new(),
            estimates: BTreeMap::new(),
            traces: Vec::new(),
            errors: Vec::new(),
            timings: BTreeMap::new(),
        }
    }

    /// One line per verdict, prediction and estimate.
    pub fn summary(&self) -> String {
        let mut out = format!("{:?}: {} written\n", self.command, REPORT_FILE);
        for (section, map) in [
            ("verdict", &self.verdicts),
            ("prediction", &self.predictions),
            ("estimate", &self.estimates),
        ] {
            for (k, v) in map {
                let headline = v
                    .get("verdict")
                    .or_else(|| v.get("value"))
                    .or_else(|| v.get("estimate"))
                    .or_else(|| v.get("rule"))
                    .map(Value::to_string)
                    .unwrap_or_else(|| "see report".into());
                let _ = writeln!(out, "  {section} {k}: {headline}");
            }
        }
        out.trim_end().to_string()
    }
}

/// Grid and seed behind a numeric claim.
fn provenance(grid: Option<&GridSpec>, cfg: &ExperimentConfig, seeded: bool) -> Value {
    let mut p = serde_json::Map::new();
    if let Some(g) = grid {
        p.insert("grid".into(), serde_json::to_value(g).unwrap());
    }
    if seeded {
        p.insert("master_seed".into(), cfg.master_seed.into());
        p.insert("replicates".into(), cfg.replicates.into());
    }
    Value::Object(p)
}

fn claim(value: impl Serialize, grid: Option<&GridSpec>, cfg: &ExperimentConfig, seeded: bool) -> Value {
    let mut v = serde_json::to_value(value).unwrap();
    let prov = provenance(grid, cfg, seeded);
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("provenance".into(), prov);
            v
        }
        None => json!({ "value": v, "provenance": prov }),
    }
}

/// Ratio estimate without its trace; traces go to CSV.
fn ratio_summary(est: &RatioLiminfEstimate) -> Value {
    json!({
        "value": est.value,
        "window_lo": est.window_lo,
        "window_max": est.window_max(),
        "window_log_slope": est.window_log_slope(),
    })
}

fn module_err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

struct Outputs {
    root: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self, CliError> {
        for sub in ["traces", "plotdata"] {
            fs::create_dir_all(root.join(sub))
                .map_err(|e| CliError::IoFailure(format!("{}: {e}", root.join(sub).display())))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, contents: &str) -> Result<(), CliError> {
        let path = self.root.join(rel);
        fs::write(&path, contents).map_err(|e| CliError::IoFailure(format!("{}: {e}", path.display())))?;
        self.written.push(rel.to_string());
        Ok(())
    }
}

fn trace_csv(est: &RatioLiminfEstimate) -> String {
    let mut out = String::from("x,ratio,in_window\n");
    for &(x, r) in &est.trace {
        let _ = writeln!(out, "{x:e},{r:e},{}", est.grid.in_window(x) as u8);
    }
    out
}

fn plot_csv(tail: &EmpiricalTail, scales: &[&ScaleFunction], grid: &GridSpec) -> String {
    let mut out = String::from("x,empirical_hazard");
    for i in 1..=scales.len() {
        let _ = write!(out, ",scale_{i}");
    }
    out.push('\n');
    for (x, r) in empirical_hazard_partial(tail, grid) {
        let _ = write!(out, "{x:e},");
        if let Some(r) = r {
            let _ = write!(out, "{r:e}");
        }
        for h in scales {
            let _ = write!(out, ",{:e}", h.eval(x));
        }
        out.push('\n');
    }
    out
}

/// Writes `x, empirical_hazard, scale_1, …, scale_k` for every grid point;
/// the hazard cell is empty where the empirical tail has vanished.
pub fn emit_plot_data(
    tail: &EmpiricalTail,
    scales: &[ScaleFunction],
    grid: &GridSpec,
    path: &Path,
) -> Result<(), CliError> {
    let refs: Vec<&ScaleFunction> = scales.iter().collect();
    fs::write(path, plot_csv(tail, &refs, grid)).map_err(|e| CliError::IoFailure(format!("{}: {e}", path.display())))
}

fn spec_of(cfg: &ExperimentConfig) -> Result<StoppedSumSpec, CliError> {
    let mut spec = StoppedSumSpec::new(
        cfg.model("increment", &cfg.roles.increment)?.clone(),
        cfg.model("stopping", &cfg.roles.stopping)?.clone(),
    );
    spec.c1 = cfg.settings.c1;
    spec.delta = cfg.settings.delta.unwrap_or(DEFAULT_DELTA);
    spec.mean_increment = cfg.settings.mean_increment;
    Ok(spec)
}

fn sim_options(cfg: &ExperimentConfig) -> SimulationOptions {
    SimulationOptions {
        workers: cfg.settings.workers,
        stopping_cap: cfg.settings.stopping_cap.unwrap_or(DEFAULT_STOPPING_CAP),
    }
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    report: RunReport,
    out: Outputs,
}

impl Ctx<'_> {
    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let v = f();
        self.report.timings.insert(stage.to_string(), t.elapsed().as_secs_f64());
        v
    }

    /// Simulates `S_N`, optionally dumping the raw samples.
    fn simulate(&mut self, spec: &StoppedSumSpec) -> Result<EmpiricalTail, String> {
        let (cfg, opts) = (self.cfg, self.opts);
        let pairs = self
            .timed("simulate", || {
                simulate_pairs(spec, cfg.replicates, cfg.master_seed, &sim_options(cfg))
            })
            .map_err(module_err)?;
        let sums: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if opts.dump_samples {
            let path = self.out.root.join("samples.bin");
            write_sample_file(&path, &sums).map_err(|e| format!("{}: {e}", path.display()))?;
            self.out.written.push("samples.bin".into());
        }
        Ok(EmpiricalTail::new(sums))
    }

    fn tail_estimates(&mut self, tail: &EmpiricalTail) {
        let cfg = self.cfg;
        let n = tail.count();
        let k = cfg.settings.hill_k.unwrap_or_else(|| default_hill_k(n).max(10));
        let hill = match hill_estimate(tail.sorted_samples(), k) {
            Ok(h) => claim(h, None, cfg, true),
            Err(e) => json!({ "error": e.to_string() }),
        };
        self.report.estimates.insert("hill".into(), hill);
        let slope = match loglog_slope_estimate(tail, &cfg.grid) {
            Ok(s) => claim(s, Some(&cfg.grid), cfg, true),
            Err(e) => json!({ "error": e.to_string() }),
        };
        self.report.estimates.insert("loglog_slope".into(), slope);
    }

    fn write_trace(&mut self, name: &str, est: &RatioLiminfEstimate) -> Result<(), CliError> {
        self.out.write(&format!("traces/{name}.csv"), &trace_csv(est))
    }

    fn hazard_trace(&mut self, tail: &EmpiricalTail) -> Result<(), CliError> {
        let mut csv = String::from("x,empirical_hazard\n");
        for (x, r) in empirical_hazard_partial(tail, &self.cfg.grid) {
            let _ = writeln!(csv, "{x:e},{}", r.map(|r| format!("{r:e}")).unwrap_or_default());
        }
        self.out.write("traces/empirical_hazard.csv", &csv)
    }

    fn plot(&mut self, name: &str, tail: &EmpiricalTail, scales: &[(&str, &ScaleFunction)]) -> Result<(), CliError> {
        let refs: Vec<&ScaleFunction> = scales.iter().map(|s| s.1).collect();
        let csv = plot_csv(tail, &refs, &self.cfg.grid);
        self.out.write(&format!("plotdata/{name}.csv"), &csv)?;
        let columns: BTreeMap<String, &str> = scales
            .iter()
            .enumerate()
            .map(|(i, s)| (format!("scale_{}", i + 1), s.0))
            .collect();
        self.report
            .estimates
            .insert(format!("plot_columns_{name}"), serde_json::to_value(columns).unwrap());
        Ok(())
    }
}

fn run_simulate(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let spec = spec_of(cfg).map_err(module_err)?;
    let tail = ctx.simulate(&spec)?;
    ctx.tail_estimates(&tail);
    ctx.hazard_trace(&tail).map_err(module_err)?;
    let scales: Vec<(&str, &ScaleFunction)> = cfg.scales.iter().map(|(k, v)| (k.as_str(), v)).collect();
    ctx.plot("hazard_vs_scales", &tail, &scales).map_err(module_err)
}

fn run_classify(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let spec = spec_of(cfg).map_err(module_err)?;
    let h_x = cfg.scale("h_x", &cfg.roles.h_x).map_err(module_err)?;
    let h_n = cfg.scale("h_n", &cfg.roles.h_n).map_err(module_err)?;
    let report = ctx
        .timed("classify", || classify_dominance(&spec, h_x, h_n, &cfg.grid))
        .map_err(module_err)?;
    if let Some(t) = &report.condition_traces.0 {
        ctx.write_trace("condition_1", t).map_err(module_err)?;
    }
    if let Some(t) = &report.condition_traces.1 {
        ctx.write_trace("condition_2", t).map_err(module_err)?;
    }
    ctx.report
        .verdicts
        .insert("dominance".into(), claim(&report, Some(&cfg.grid), cfg, false));
    Ok(())
}

fn run_moment_index(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let spec = spec_of(cfg).map_err(module_err)?;
    let drift = cfg
        .settings
        .drift
        .ok_or("settings.drift is required for moment_index")?;
    let prediction = predict_moment_index(&spec.increment, &spec.stopping, drift).map_err(module_err)?;
    ctx.report
        .predictions
        .insert("moment_index".into(), claim(&prediction, None, cfg, false));
    let corollary = match predict_moment_index_corollary(&spec.increment, &spec.stopping) {
        Ok(p) => claim(&p, None, cfg, false),
        Err(e) => json!({ "not_applicable": e.to_string() }),
    };
    ctx.report.predictions.insert("corollary".into(), corollary);
    let tail = ctx.simulate(&spec)?;
    ctx.tail_estimates(&tail);
    Ok(())
}

fn determinacy_traces(ctx: &mut Ctx, v: &DeterminacyVerdict) -> Result<(), String> {
    for (i, r) in v.ratios.iter().enumerate() {
        ctx.write_trace(&format!("determinacy_{}", i + 1), r)
            .map_err(module_err)?;
    }
    Ok(())
}

fn run_determinacy(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let verdict = if cfg.roles.stopping.is_some() {
        let spec = spec_of(cfg).map_err(module_err)?;
        let h_x = cfg.scale("h_x", &cfg.roles.h_x).map_err(module_err)?;
        let h_n = cfg.scale("h_n", &cfg.roles.h_n).map_err(module_err)?;
        stopped_sum_determinacy(&spec, h_x, h_n, &cfg.grid).map_err(module_err)?
    } else {
        let model = cfg.model("increment", &cfg.roles.increment).map_err(module_err)?;
        let scale = match &cfg.roles.h_x {
            Some(_) => Some(cfg.scale("h_x", &cfg.roles.h_x).map_err(module_err)?),
            None => None,
        };
        hardy_test(model, &cfg.grid, scale).map_err(module_err)?
    };
    determinacy_traces(ctx, &verdict)?;
    ctx.report
        .verdicts
        .insert("determinacy".into(), claim(&verdict, Some(&cfg.grid), cfg, false));
    Ok(())
}

fn run_zigzag(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    let [h1, h2, h3, h4] = cfg.envelopes().map_err(module_err)?;
    let env = ZigzagEnvelopes::new(h1.clone(), h2.clone(), h3.clone(), h4.clone());
    let options = ZigzagOptions {
        y_recursion: cfg.settings.y_recursion.unwrap_or_default(),
        ..ZigzagOptions::default()
    };
    let terms = cfg.settings.zigzag_terms.unwrap_or(DEFAULT_ZIGZAG_TERMS);
    let pair = build_pair(&env, terms, &options).map_err(module_err)?;
    ctx.out
        .write("traces/zigzag_atoms.csv", &pair.to_csv())
        .map_err(module_err)?;
    let crossings = count_tail_crossings(&pair, &cfg.grid);
    ctx.report
        .estimates
        .insert("tail_crossings".into(), claim(crossings, Some(&cfg.grid), cfg, false));
    ctx.report
        .estimates
        .insert("sequences".into(), serde_json::to_value(&pair.sequences).unwrap());
    let (x, y) = (pair.x_model(), pair.y_model());
    for (name, model, h) in [("x_index_h1", &x, h1), ("y_index_h2", &y, h2)] {
        let v = match scale_index(model, h, &cfg.grid) {
            Ok(est) => claim(ratio_summary(&est), Some(&cfg.grid), cfg, false),
            Err(e) => json!({ "error": e.to_string() }),
        };
        ctx.report.estimates.insert(name.into(), v);
    }
    let mut csv = String::from("x,tail_x,tail_y\n");
    for p in cfg.grid.points() {
        let _ = writeln!(csv, "{p:e},{:e},{:e}", x.tail(p), y.tail(p));
    }
    ctx.out.write("plotdata/zigzag_tails.csv", &csv).map_err(module_err)
}

fn run_verify(ctx: &mut Ctx) -> Result<(), String> {
    let cfg = ctx.cfg;
    run_classify(ctx)?;
    let spec = spec_of(cfg).map_err(module_err)?;
    let h_x = cfg.scale("h_x", &cfg.roles.h_x).map_err(module_err)?;
    let h_n = cfg.scale("h_n", &cfg.roles.h_n).map_err(module_err)?;
    let dominance = &ctx.report.verdicts["dominance"];
    let certifying: Option<ScaleFunction> =
        serde_json::from_value(dominance["certifying_scale"].clone()).map_err(module_err)?;
    let certifying = certifying.ok_or("dominance undetermined: no certifying scale to verify")?;
    let tail = ctx.simulate(&spec)?;
    ctx.tail_estimates(&tail);
    ctx.hazard_trace(&tail).map_err(module_err)?;
    let membership = verify_scale_membership(&tail, &certifying, &cfg.grid).map_err(module_err)?;
    ctx.write_trace("scale_membership", &membership).map_err(module_err)?;
    ctx.report.estimates.insert(
        "scale_membership".into(),
        claim(ratio_summary(&membership), Some(&cfg.grid), cfg, true),
    );
    let corollary = match verify_corollary_limit(&spec, &tail, &certifying, &cfg.grid) {
        Ok((sup, inf)) => claim(
            json!({ "sup_ratio": sup, "inf_ratio": inf }),
            Some(&cfg.grid),
            cfg,
            true,
        ),
        Err(e) => json!({ "not_applicable": e.to_string() }),
    };
    ctx.report.estimates.insert("corollary_limit".into(), corollary);
    let stopping_scale = h_n.clone().dilated(spec.mean().unwrap_or(1.0));
    ctx.plot(
        "verify",
        &tail,
        &[
            ("certifying", &certifying),
            ("h_x", h_x),
            ("h_n(E(X) x)", &stopping_scale),
        ],
    )
    .map_err(module_err)
}

/// Runs one experiment. The report is written even when the command fails;
/// the failure is listed under `errors` and returned as [`CliError::Module`].
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport, CliError> {
    cfg.validate()?;
    let out = Outputs::new(&cfg.output_dir)?;
    let mut ctx = Ctx {
        cfg,
        opts,
        report: RunReport::new(cfg),
        out,
    };
    let started = Instant::now();
    let result = match cfg.command {
        Command::Simulate => run_simulate(&mut ctx),
        Command::Classify => run_classify(&mut ctx),
        Command::MomentIndex => run_moment_index(&mut ctx),
        Command::Determinacy => run_determinacy(&mut ctx),
        Command::Zigzag => run_zigzag(&mut ctx),
        Command::Verify => run_verify(&mut ctx),
    };
    if let Err(e) = &result {
        ctx.report.errors.push(e.clone());
    }
    ctx.report
        .timings
        .insert("total".into(), started.elapsed().as_secs_f64());
    ctx.report.traces = ctx.out.written.clone();
    let json = serde_json::to_string_pretty(&ctx.report).expect("report serializes");
    let path = cfg.output_dir.join(REPORT_FILE);
    fs::write(&path, json + "\n").map_err(|e| CliError::IoFailure(format!("{}: {e}", path.display())))?;
    match result {
        Ok(()) => Ok(ctx.report),
        Err(e) => Err(CliError::Module(e)),
    }
}
