//! Corpus → task dataset files, and corpus statistics.
//!
//! The corpus is streamed in fixed-size chunks of lines. Within a chunk,
//! lines are parsed and built on worker threads; results are then consumed
//! in line order, so the written files and reports are the same for any
//! worker count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use prefix_global_core::page::{Page, Split};
use prefix_global_core::sequence::{PageDescPrefix, Task, TaskExample};
use prefix_global_core::taskpipe::{DatasetBuilder, FilterReport, StatsAccumulator, MIN_CONTENT_SECTIONS};
use prefix_global_core::{CorpusStats, Reason};

use crate::config::Config;
use crate::corpus::{lines, parse_page, UrlGuard};
use crate::formats::{example_to_json, BuildReportJson};
use crate::{Error, Result};

/// Lines handed to the workers at a time.
pub const CHUNK_LINES: usize = 256;

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub task: Task,
    pub min_content_sections: usize,
    pub page_prefix: PageDescPrefix,
    pub threads: usize,
    pub config: Config,
}

impl BuildOptions {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            min_content_sections: MIN_CONTENT_SECTIONS,
            page_prefix: PageDescPrefix::default(),
            threads: 1,
            config: Config::default(),
        }
    }
}

pub fn page_prefix_name(p: PageDescPrefix) -> &'static str {
    match p {
        PageDescPrefix::TitlesAndFirstSentences => "titles-first-sentences",
        PageDescPrefix::InOrder => "in-order",
        PageDescPrefix::TitlesOnly => "titles-only",
    }
}

/// SHA-256 of a file's bytes.
pub fn file_sha256(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    std::io::copy(&mut f, &mut hasher).map_err(|e| Error::io(path, e))?;
    Ok(crate::formats::hex(&hasher.finalize()))
}

type Built = (std::result::Result<Page, Reason>, Option<(Vec<TaskExample>, FilterReport)>);

fn parse_line(line: &str) -> std::result::Result<Page, Reason> {
    parse_page(line).map_err(|_| Reason::ParseError)
}

/// Applies `f` to every item on up to `threads` workers, keeping input order.
fn par_map<T: Sync, U: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> U + Sync) -> Vec<U> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let per = items.len().div_ceil(threads);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> =
            items.chunks(per).map(|chunk| scope.spawn(move || chunk.iter().map(f).collect::<Vec<U>>())).collect();
        handles.into_iter().flat_map(|h| h.join().expect("pipeline worker panicked")).collect()
    })
}

/// Streams a corpus file through the builder, calling `sink` for each
/// example in canonical order.
pub fn build_stream(
    corpus: &Path,
    opts: &BuildOptions,
    mut sink: impl FnMut(&TaskExample, Split) -> Result<()>,
) -> Result<FilterReport> {
    let file = File::open(corpus).map_err(|e| Error::io(corpus, e))?;
    let builder = DatasetBuilder {
        min_content_sections: opts.min_content_sections,
        page_prefix: opts.page_prefix,
        ..DatasetBuilder::new(opts.task)
    };
    let mut report = FilterReport::new(opts.task);
    let mut guard = UrlGuard::default();
    let mut chunk: Vec<String> = Vec::with_capacity(CHUNK_LINES);
    let mut lines = lines(BufReader::new(file));
    loop {
        chunk.clear();
        for item in lines.by_ref().take(CHUNK_LINES) {
            let (_, line) = item.map_err(|e| Error::io(corpus, e))?;
            chunk.push(line);
        }
        if chunk.is_empty() {
            break;
        }
        let built: Vec<Built> = par_map(&chunk, opts.threads, |line| {
            let page = parse_line(line);
            let out = page.as_ref().ok().map(|p| builder.process_page(p));
            (page, out)
        });
        for (page, out) in built {
            match guard.admit(page) {
                Ok(page) => {
                    let (examples, page_report) = out.expect("built alongside parse");
                    report.merge(&page_report);
                    for ex in &examples {
                        sink(ex, page.split)?;
                    }
                }
                Err(reason) => {
                    report.pages_in += 1;
                    report.reject(reason);
                }
            }
        }
    }
    Ok(report)
}

/// Paths written by [`build_to_dir`].
#[derive(Debug, Clone)]
pub struct BuildOutputs {
    pub splits: Vec<(Split, PathBuf)>,
    pub report: PathBuf,
}

/// Writes `train.jsonl`, `val.jsonl`, `test.jsonl` and `report.json` into `out`.
pub fn build_to_dir(corpus: &Path, out: &Path, opts: &BuildOptions) -> Result<(FilterReport, BuildOutputs)> {
    let digest = file_sha256(corpus)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let paths: Vec<(Split, PathBuf)> = Split::ALL.iter().map(|&s| (s, out.join(format!("{}.jsonl", s.name())))).collect();
    let mut writers = paths
        .iter()
        .map(|(_, p)| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e)))
        .collect::<Result<Vec<_>>>()?;
    let report = build_stream(corpus, opts, |ex, split| {
        let idx = Split::ALL.iter().position(|&s| s == split).expect("known split");
        let w = &mut writers[idx];
        writeln!(w, "{}", example_to_json(ex)).map_err(|e| Error::io(&paths[idx].1, e))
    })?;
    for (w, (_, p)) in writers.iter_mut().zip(&paths) {
        w.flush().map_err(|e| Error::io(p, e))?;
    }
    let report_path = out.join("report.json");
    let json = BuildReportJson::new(
        &report,
        &opts.config,
        opts.min_content_sections,
        page_prefix_name(opts.page_prefix),
        &digest,
    );
    let text = serde_json::to_string_pretty(&json)? + "\n";
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    Ok((report, BuildOutputs { splits: paths, report: report_path }))
}

/// Records skipped by [`stats_for_file`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Skipped {
    pub parse_errors: u64,
    pub duplicate_urls: u64,
}

/// Statistics over every readable page with a first-seen URL.
pub fn stats_for_file(corpus: &Path) -> Result<(CorpusStats, Skipped)> {
    let file = File::open(corpus).map_err(|e| Error::io(corpus, e))?;
    let mut acc = StatsAccumulator::default();
    let mut guard = UrlGuard::default();
    let mut skipped = Skipped::default();
    for item in lines(BufReader::new(file)) {
        let (_, line) = item.map_err(|e| Error::io(corpus, e))?;
        match guard.admit(parse_line(&line)) {
            Ok(page) => acc.add(&page),
            Err(Reason::DuplicateUrl) => skipped.duplicate_urls += 1,
            Err(_) => skipped.parse_errors += 1,
        }
    }
    Ok((acc.finish(), skipped))
}

/// Reads a whole corpus into memory, one entry per non-blank line.
pub fn read_corpus(corpus: &Path) -> Result<Vec<std::result::Result<Page, Reason>>> {
    let file = File::open(corpus).map_err(|e| Error::io(corpus, e))?;
    let mut guard = UrlGuard::default();
    lines(BufReader::new(file))
        .map(|item| item.map(|(_, l)| guard.admit(parse_line(&l))).map_err(|e| Error::io(corpus, e)))
        .collect()
}
