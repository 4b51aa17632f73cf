use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use prefix_global::attend::attend;
use prefix_global::config::{worker_threads, Config};
use prefix_global::formats::{flops_table, flops_to_json, mask_to_csv, mask_to_pgm};
use prefix_global::pipeline::{build_to_dir, file_sha256, stats_for_file, BuildOptions};
use prefix_global::{synth, Error, Result};
use prefix_global_core::cost::compare;
use prefix_global_core::pattern::{build_mask, render_mask, AttentionPattern, PatternKind};
use prefix_global_core::pattern::{DEFAULT_BLOCK, DEFAULT_PREFIX, DEFAULT_RADIUS};
use prefix_global_core::sequence::{PageDescPrefix, Task};

#[derive(Parser)]
#[command(name = "prefix-global", version, about = "Structured attention patterns, kernels, cost model and dataset pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone, Copy)]
struct PatternArgs {
    /// Prefix size (prefix-global).
    #[arg(long, default_value_t = DEFAULT_PREFIX)]
    k: usize,
    /// Local radius, per side.
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    r: usize,
    /// Transient block size (tglobal).
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    block: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Render a pattern's mask as a 0/1 grid.
    Mask {
        #[arg(value_parser = parse_kind)]
        pattern: PatternKind,
        #[arg(long)]
        l: usize,
        #[command(flatten)]
        params: PatternArgs,
        #[arg(long, value_enum, default_value_t = GridFormat::Pgm)]
        format: GridFormat,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attended query-key pair counts per pattern and length.
    Flops {
        #[arg(long, value_delimiter = ',', required = true)]
        l: Vec<usize>,
        #[arg(long, value_delimiter = ',', value_parser = parse_kind, default_value = "tglobal,prefix-global,full")]
        patterns: Vec<PatternKind>,
        #[command(flatten)]
        params: PatternArgs,
        #[arg(long, conflicts_with = "table")]
        json: bool,
        /// Aligned text table (the default).
        #[arg(long)]
        table: bool,
    },
    /// Run the sparse kernel on seeded random inputs.
    Attend {
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, value_parser = parse_kind, default_value = "prefix-global")]
        pattern: PatternKind,
        #[command(flatten)]
        params: PatternArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also run the dense oracle; exit 1 if it disagrees.
        #[arg(long)]
        check_oracle: bool,
        /// Leave logits unscaled instead of dividing by sqrt(d).
        #[arg(long)]
        no_scale: bool,
    },
    /// Build one task's dataset from a JSONL corpus.
    Build {
        #[arg(long, value_parser = parse_task)]
        task: Task,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = prefix_global_core::taskpipe::MIN_CONTENT_SECTIONS)]
        min_content_sections: usize,
        #[arg(long, value_enum, default_value_t = PrefixVariant::TitlesFirstSentences)]
        page_prefix: PrefixVariant,
    },
    /// Section taxonomy and per-page distributions of a corpus.
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus.
    GenCorpus {
        #[arg(long, default_value_t = 1000)]
        pages: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum GridFormat {
    Pgm,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrefixVariant {
    TitlesFirstSentences,
    InOrder,
    TitlesOnly,
}

impl From<PrefixVariant> for PageDescPrefix {
    fn from(v: PrefixVariant) -> Self {
        match v {
            PrefixVariant::TitlesFirstSentences => PageDescPrefix::TitlesAndFirstSentences,
            PrefixVariant::InOrder => PageDescPrefix::InOrder,
            PrefixVariant::TitlesOnly => PageDescPrefix::TitlesOnly,
        }
    }
}

fn parse_kind(s: &str) -> std::result::Result<PatternKind, String> {
    s.parse().map_err(|e: prefix_global_core::Error| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    s.parse().map_err(|e: prefix_global_core::Error| e.to_string())
}

fn pattern(kind: PatternKind, l: usize, p: PatternArgs) -> Result<AttentionPattern> {
    AttentionPattern::new(kind, l, p.r, p.k, p.block).map_err(|e| Error::Usage(e.to_string()))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e)),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Mask { pattern: kind, l, params, format, out } => {
            let grid = render_mask(&build_mask(&pattern(kind, l, params)?));
            let text = match format {
                GridFormat::Pgm => mask_to_pgm(&grid),
                GridFormat::Csv => mask_to_csv(&grid),
            };
            emit(out.as_deref(), &text)
        }
        Command::Flops { l, patterns, params, json, table: _ } => {
            let mut all = Vec::with_capacity(l.len() * patterns.len());
            for &len in &l {
                for &kind in &patterns {
                    all.push(pattern(kind, len, params)?);
                }
            }
            let cmp = compare(&all)?;
            let config = Config { k: params.k, r: params.r, block: params.block, ..Config::default() };
            let text = if json { flops_to_json(&cmp, &config) } else { flops_table(&cmp, &patterns) };
            emit(None, &text)
        }
        Command::Attend { l, d, pattern: kind, params, seed, check_oracle, no_scale } => {
            let config = Config { k: params.k, r: params.r, block: params.block, scale_by_sqrt_d: !no_scale, seed };
            let report = attend(pattern(kind, l, params)?, d, &config, check_oracle, worker_threads())?;
            emit(None, &(serde_json::to_string_pretty(&report)? + "\n"))?;
            match &report.oracle {
                Some(o) if !o.pass => Err(Error::Check(format!(
                    "sparse output differs from dense oracle by {:e} (tolerance {:e})",
                    o.max_abs_diff, o.tolerance
                ))),
                _ => Ok(()),
            }
        }
        Command::Build { task, corpus, out, min_content_sections, page_prefix } => {
            let opts = BuildOptions {
                min_content_sections,
                page_prefix: page_prefix.into(),
                threads: worker_threads(),
                ..BuildOptions::new(task)
            };
            let (report, files) = build_to_dir(&corpus, &out, &opts)?;
            eprintln!(
                "{}: {} examples from {} records ({} rejected), report at {}",
                task.name(),
                report.examples_out,
                report.pages_in,
                report.rejected(),
                files.report.display()
            );
            Ok(())
        }
        Command::Stats { corpus, out } => {
            let digest = file_sha256(&corpus)?;
            let (stats, skipped) = stats_for_file(&corpus)?;
            emit(out.as_deref(), &prefix_global::formats::stats_to_json(&stats, skipped, &digest))
        }
        Command::GenCorpus { pages, seed, out } => emit(out.as_deref(), &synth::corpus(pages, seed)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
