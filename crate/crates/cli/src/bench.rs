use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use rayon::prelude::*;
use relu_zono::data::gen_synthetic;
use relu_zono::search::{DEFAULT_ACTIVE_TOL, DEFAULT_REGION_CAP};
use relu_zono::{Dataset, LossKind, Result};

use crate::io::{accuracy_if_binary, emit, median, parse_loss, parse_output_spec, read_dataset, std_dev, OutputSpec};
use crate::solve::{run_method, Method, MethodConfig};

#[derive(Subcommand)]
pub enum BenchCommand {
    /// Median and spread of the final loss over seeds for each method and width.
    Table(TableArgs),
}

#[derive(Args)]
pub struct TableArgs {
    /// Comma-separated methods, e.g. `gls,mgls,gd`.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "gls,random-vertex,gd")]
    methods: Vec<Method>,
    /// Comma-separated hidden widths.
    #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
    ms: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    seeds: u64,
    /// Fixed dataset; otherwise each seed gets its own synthetic dataset.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    m_gen: usize,
    #[arg(long, value_parser = parse_loss, default_value = "mse")]
    loss: LossKind,
    #[arg(long, value_parser = parse_output_spec, default_value = "pm-half", allow_hyphen_values = true)]
    v: OutputSpec,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 100_000)]
    steps: usize,
    #[arg(long)]
    fit_output_bias: bool,
    /// CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub const CSV_HEADER: &str = "method,d,m_gen_or_N,m,median_loss,std_loss,median_acc,std_acc";

struct Cell {
    method: Method,
    m: usize,
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

pub fn run(cmd: BenchCommand) -> Result<()> {
    let BenchCommand::Table(args) = cmd;
    let fixed = args.data.as_deref().map(|p| read_dataset(Some(p))).transpose()?;
    let dataset_for = |seed: u64| -> Dataset { fixed.clone().unwrap_or_else(|| gen_synthetic(args.d, args.m_gen, seed)) };
    let (d, size) = match &fixed {
        Some(ds) => (ds.d(), ds.n()),
        None => (args.d, args.m_gen),
    };
    let cells: Vec<Cell> = args.methods.iter().flat_map(|&method| args.ms.iter().map(move |&m| Cell { method, m })).collect();
    // Each cell is deterministic, and collecting keeps the grid order.
    let rows: Vec<Result<String>> = cells
        .par_iter()
        .map(|cell| {
            let mut losses = Vec::new();
            let mut accs = Vec::new();
            for seed in 0..args.seeds {
                let ds = dataset_for(seed);
                let cfg = MethodConfig {
                    method: cell.method,
                    m: Some(cell.m),
                    loss: args.loss,
                    v: (cell.method != Method::Gd).then(|| args.v.clone()),
                    seed,
                    max_steps: args.max_steps,
                    lr: args.lr,
                    steps: args.steps,
                    fit_output_bias: args.fit_output_bias,
                    cap: DEFAULT_REGION_CAP,
                    active_tol: DEFAULT_ACTIVE_TOL,
                };
                let run = run_method(&ds, &cfg)?;
                losses.push(run.loss);
                if let Some(a) = accuracy_if_binary(&run.net, &ds) {
                    accs.push(a);
                }
            }
            let acc = (!accs.is_empty()).then(|| (median(accs.clone()), std_dev(&accs)));
            let m = if cell.method == Method::Chunked { 0 } else { cell.m };
            Ok(format!(
                "{},{d},{size},{m},{:e},{:e},{},{}",
                cell.method.name(),
                median(losses.clone()),
                std_dev(&losses),
                fmt_opt(acc.map(|a| a.0)),
                fmt_opt(acc.map(|a| a.1)),
            ))
        })
        .collect();
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for row in rows {
        writeln!(csv, "{}", row?).expect("string write");
    }
    emit(args.out.as_deref(), &csv)
}
