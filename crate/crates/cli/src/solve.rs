use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, ValueEnum};
use relu_zono::network::{empirical_loss, gradient_descent, GdOptions, OutputWeights};
use relu_zono::search::{chunked_fit, exact_erm, gls, mgls, random_vertex_fit, SearchResult, SearchSpec, DEFAULT_ACTIVE_TOL, DEFAULT_REGION_CAP, RESULT_SCHEMA};
use relu_zono::{Dataset, LossKind, Result, ShallowReluNet};
use serde::Serialize;
use serde_json::{json, Value};

use crate::io::{accuracy_if_binary, emit, loss_name, parse_loss, parse_output_spec, read_dataset, write_artifact, OutputSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Gls,
    Mgls,
    RandomVertex,
    Chunked,
    Gd,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Exact => "exact",
            Method::Gls => "gls",
            Method::Mgls => "mgls",
            Method::RandomVertex => "random-vertex",
            Method::Chunked => "chunked",
            Method::Gd => "gd",
        }
    }
}

/// Settings for one training run, shared with `bench table`.
#[derive(Debug, Clone)]
pub struct MethodConfig {
    pub method: Method,
    pub m: Option<usize>,
    pub loss: LossKind,
    /// `None` lets gradient descent train the output weights and means
    /// `pm-half` for the searches.
    pub v: Option<OutputSpec>,
    pub seed: u64,
    pub max_steps: usize,
    pub lr: f64,
    pub steps: usize,
    pub fit_output_bias: bool,
    pub cap: u128,
    pub active_tol: f64,
}

#[derive(Args)]
pub struct SolveArgs {
    #[arg(value_enum)]
    method: Method,
    /// Dataset file; stdin when omitted.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Hidden units (ignored by `chunked`).
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, value_parser = parse_loss, default_value = "mse")]
    loss: LossKind,
    /// Output weights: `pm-half` or a comma-separated list. Searches
    /// default to `pm-half`; gradient descent trains them unless given.
    #[arg(long, value_parser = parse_output_spec, allow_hyphen_values = true)]
    v: Option<OutputSpec>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step budget for `gls` and `mgls`; alternation rounds for `random-vertex`.
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    /// Gradient descent learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Gradient descent steps.
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    /// Also optimize the output bias `c`.
    #[arg(long)]
    fit_output_bias: bool,
    /// Most regions `exact` may visit.
    #[arg(long, default_value_t = DEFAULT_REGION_CAP)]
    cap: u128,
    /// Slack below which `mgls` treats a constraint as tight.
    #[arg(long, default_value_t = DEFAULT_ACTIVE_TOL)]
    active_tol: f64,
    /// Directory for result, checkpoint and trace files.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// What a run produced before any I/O.
pub struct Run {
    pub net: ShallowReluNet,
    pub loss: f64,
    pub qp_solves: usize,
    pub details: Value,
    /// `(file name, contents)` pairs written when an output directory is given.
    pub artifacts: Vec<(&'static str, String)>,
}

/// Versioned record printed by `solve`.
#[derive(Debug, Serialize)]
pub struct RunResult {
    pub schema: &'static str,
    pub command: String,
    pub seed: u64,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub qp_solves: usize,
    pub wall_time_ms: u64,
    pub artifact_paths: Vec<String>,
    pub checkpoint: relu_zono::network::Checkpoint,
    pub details: Value,
}

fn search_run(result: SearchResult) -> Run {
    let file = result.to_file();
    let details = json!({
        "best_pattern": file.best_pattern,
        "terminal_reason": file.trace.terminal_reason,
        "accepted_steps": file.trace.steps.len(),
    });
    Run {
        loss: result.loss,
        qp_solves: result.trace.total_qp_solves,
        artifacts: vec![
            ("search.json", serde_json::to_string_pretty(&file).expect("plain data")),
            ("trace.jsonl", result.trace.to_json_lines()),
        ],
        net: result.net,
        details,
    }
}

pub fn run_method(ds: &Dataset, cfg: &MethodConfig) -> Result<Run> {
    let v = || cfg.v.clone().unwrap_or(OutputSpec::PmHalf).resolve(cfg.m);
    match cfg.method {
        Method::Exact | Method::Gls | Method::Mgls => {
            let v = v()?;
            let spec = SearchSpec { dataset: ds, v: &v, loss: cfg.loss, fit_output_bias: cfg.fit_output_bias };
            let result = match cfg.method {
                Method::Exact => exact_erm(&spec, cfg.cap)?,
                Method::Gls => gls(&spec, cfg.max_steps, cfg.seed)?,
                _ => mgls(&spec, cfg.max_steps, cfg.seed, cfg.active_tol)?,
            };
            Ok(search_run(result))
        }
        Method::RandomVertex => {
            let (result, alt) = random_vertex_fit(ds, &v()?, cfg.loss, cfg.seed, cfg.max_steps, 1e-14)?;
            let mut run = search_run(result);
            run.details["history"] = json!(alt.history);
            Ok(run)
        }
        Method::Chunked => {
            let (net, plan) = chunked_fit(ds)?;
            let loss = empirical_loss(&net, ds, LossKind::Mse);
            let details = json!({ "units": net.m(), "max_stage_residual": plan.stage_residuals.iter().fold(0.0f64, |a, &r| a.max(r)) });
            let artifacts = vec![("chunk_plan.json", serde_json::to_string_pretty(&plan).expect("plain data"))];
            Ok(Run { net, loss, qp_solves: 0, details, artifacts })
        }
        Method::Gd => {
            let m = cfg.m.ok_or_else(|| relu_zono::Error::InvalidArgument("gd needs --m".into()))?;
            let mut opts = GdOptions::new(m, cfg.loss, cfg.lr, cfg.steps, cfg.seed);
            if let Some(spec) = &cfg.v {
                opts.output = OutputWeights::Fixed(spec.resolve(Some(m))?);
            }
            let run = gradient_descent(ds, &opts)?;
            let loss = empirical_loss(&run.net, ds, cfg.loss);
            let log: String = run.log.iter().map(|e| serde_json::to_string(e).expect("plain data") + "\n").collect();
            Ok(Run { net: run.net, loss, qp_solves: 0, details: json!({ "steps": cfg.steps }), artifacts: vec![("gd_log.jsonl", log)] })
        }
    }
}

pub fn run(args: SolveArgs) -> Result<()> {
    let start = Instant::now();
    let ds = read_dataset(args.data.as_deref())?;
    let cfg = MethodConfig {
        method: args.method,
        m: args.m,
        loss: args.loss,
        v: args.v,
        seed: args.seed,
        max_steps: args.max_steps,
        lr: args.lr,
        steps: args.steps,
        fit_output_bias: args.fit_output_bias,
        cap: args.cap,
        active_tol: args.active_tol,
    };
    let run = run_method(&ds, &cfg)?;
    let loss_kind = if cfg.method == Method::Chunked { LossKind::Mse } else { cfg.loss };
    let mut result = RunResult {
        schema: RESULT_SCHEMA,
        command: format!("solve {} --loss {}", cfg.method.name(), loss_name(loss_kind)),
        seed: cfg.seed,
        loss: run.loss,
        accuracy: accuracy_if_binary(&run.net, &ds),
        qp_solves: run.qp_solves,
        wall_time_ms: 0,
        artifact_paths: Vec::new(),
        checkpoint: run.net.checkpoint(),
        details: run.details,
    };
    if let Some(dir) = &args.out {
        let checkpoint = serde_json::to_string_pretty(&result.checkpoint).expect("plain data");
        result.artifact_paths.push(write_artifact(dir, "checkpoint.json", &checkpoint)?);
        for (name, text) in &run.artifacts {
            result.artifact_paths.push(write_artifact(dir, name, text)?);
        }
        result.artifact_paths.push(dir.join("result.json").display().to_string());
    }
    result.wall_time_ms = start.elapsed().as_millis() as u64;
    let text = serde_json::to_string_pretty(&result).expect("plain data");
    if let Some(dir) = &args.out {
        write_artifact(dir, "result.json", &text)?;
    }
    emit(None, &text)
}
