use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use relu_zono::data::{gen_appendix_d1, gen_appendix_d2, gen_set_cover_dataset, gen_synthetic, SetCoverDatasetOptions, SetCoverInstance};
use relu_zono::ingest::{build_binary_task, read_idx};
use relu_zono::{Error, Result};

use crate::io::emit;

#[derive(Args)]
pub struct Output {
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
pub enum GenCommand {
    /// Labels from a random teacher network on Gaussian inputs.
    Synth {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        m_gen: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Five collinear points whose best single unit has L1 loss 0.1.
    D1 {
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[command(flatten)]
        output: Output,
    },
    /// Three points whose best single unit has L1 loss 1.25.
    D2 {
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        #[command(flatten)]
        output: Output,
    },
    /// The dataset encoding a set-cover instance.
    Setcover(SetCoverArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Variant {
    Degenerate,
    GeneralPosition,
    Adversarial,
}

#[derive(Args)]
pub struct SetCoverArgs {
    /// Elements are `1..=universe`.
    #[arg(long)]
    universe: usize,
    /// Subsets separated by `;`, elements by `,`, e.g. `1;2;1,2`.
    #[arg(long)]
    subsets: String,
    #[arg(long, value_enum, default_value = "degenerate")]
    variant: Variant,
    /// Lower noise bound; defaults to `0.2 / (2d)`.
    #[arg(long)]
    delta1: Option<f64>,
    /// Upper noise bound; defaults to `0.4 / (2d)`.
    #[arg(long)]
    delta2: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    output: Output,
}

#[derive(Subcommand)]
pub enum IngestCommand {
    /// Two-class task from IDX image and label files, PCA-whitened.
    Idx {
        #[arg(long)]
        images: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Label mapped to 0.
        #[arg(long)]
        class_a: u8,
        /// Label mapped to 1.
        #[arg(long)]
        class_b: u8,
        #[arg(long, default_value_t = 8)]
        pca_dims: usize,
        #[arg(long, default_value_t = 350)]
        n: usize,
        #[command(flatten)]
        output: Output,
    },
}

fn parse_subsets(text: &str) -> Result<Vec<Vec<usize>>> {
    text.split(';')
        .map(|s| {
            s.split(',')
                .map(|e| e.trim().parse::<usize>().map_err(|_| Error::InvalidInstance(format!("bad element {e:?} in {s:?}"))))
                .collect()
        })
        .collect()
}

pub fn run(cmd: GenCommand) -> Result<()> {
    let (ds, output) = match cmd {
        GenCommand::Synth { d, m_gen, seed, output } => {
            if d == 0 || m_gen == 0 {
                return Err(Error::InvalidArgument("--d and --m-gen must be positive".into()));
            }
            (gen_synthetic(d, m_gen, seed), output)
        }
        GenCommand::D1 { epsilon, output } => (gen_appendix_d1(epsilon)?, output),
        GenCommand::D2 { epsilon, output } => (gen_appendix_d2(epsilon)?, output),
        GenCommand::Setcover(args) => {
            let inst = SetCoverInstance::new(args.universe, parse_subsets(&args.subsets)?, 1)?;
            let d = inst.m() + 2;
            let opts = match args.variant {
                Variant::Degenerate => SetCoverDatasetOptions::degenerate(),
                Variant::GeneralPosition => {
                    let scale = 1.0 / (2 * d) as f64;
                    SetCoverDatasetOptions::general_position(
                        args.delta1.unwrap_or(0.2 * scale),
                        args.delta2.unwrap_or(0.4 * scale),
                        args.seed,
                    )
                }
                Variant::Adversarial => SetCoverDatasetOptions::adversarial(args.epsilon),
            };
            (gen_set_cover_dataset(&inst, &opts)?, args.output)
        }
    };
    emit(output.out.as_deref(), &ds.to_json())
}

pub fn ingest(cmd: IngestCommand) -> Result<()> {
    let IngestCommand::Idx { images, labels, class_a, class_b, pca_dims, n, output } = cmd;
    let ds = build_binary_task(&read_idx(images)?, &read_idx(labels)?, class_a, class_b, pca_dims, n)?;
    emit(output.out.as_deref(), &ds.to_json())
}
