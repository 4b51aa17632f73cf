//! Serialized forms: mask grids (PGM/CSV), task examples (JSONL), cost
//! tables, filter reports and corpus statistics (JSON).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use sha2::{Digest, Sha256};

use prefix_global_core::cost::{CostComparison, CostReport};
use prefix_global_core::pattern::{AttentionPattern, MaskGrid, PatternKind};
use prefix_global_core::sequence::{SlotContent, TaskExample, TokenSlot};
use prefix_global_core::taskpipe::{CorpusStats, Distribution, FilterReport};
use prefix_global_core::SectionClass;

use crate::config::Config;
use crate::pipeline::Skipped;
use crate::TOOLKIT_VERSION;

/// Plain PGM (P2), white where attention is allowed.
pub fn mask_to_pgm(grid: &MaskGrid) -> String {
    let mut out = format!("P2\n{} {}\n1\n", grid.cols(), grid.rows());
    write_rows(grid, ' ', &mut out);
    out
}

/// One CSV line of 0/1 per query, no header.
pub fn mask_to_csv(grid: &MaskGrid) -> String {
    let mut out = String::new();
    write_rows(grid, ',', &mut out);
    out
}

fn write_rows(grid: &MaskGrid, sep: char, out: &mut String) {
    for i in 0..grid.rows() {
        for (j, c) in grid.row(i).iter().enumerate() {
            if j > 0 {
                out.push(sep);
            }
            out.push(if *c == 1 { '1' } else { '0' });
        }
        out.push('\n');
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

#[derive(Debug, Serialize)]
pub struct PatternJson {
    pub kind: &'static str,
    pub l: usize,
    pub r: usize,
    pub k: usize,
    pub block: usize,
    pub side_keys: usize,
}

impl From<&AttentionPattern> for PatternJson {
    fn from(p: &AttentionPattern) -> Self {
        Self {
            kind: p.kind().name(),
            l: p.len(),
            r: p.radius(),
            k: p.prefix(),
            block: p.block(),
            side_keys: p.side_keys(),
        }
    }
}

#[derive(Debug, Serialize)]
struct SlotJson<'a> {
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    token: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image: Option<&'a str>,
    origin: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    section: Option<usize>,
}

impl<'a> From<&'a TokenSlot> for SlotJson<'a> {
    fn from(s: &'a TokenSlot) -> Self {
        let (kind, token, image) = match &s.content {
            SlotContent::Text(t) => ("text", Some(t.as_str()), None),
            SlotContent::Image(id) => ("image", None, Some(id.as_str())),
        };
        Self { kind, token, image, origin: s.origin.name(), section: s.section }
    }
}

#[derive(Debug, Serialize)]
struct ExampleJson<'a> {
    task: &'static str,
    page_url: &'a str,
    prefix: Vec<SlotJson<'a>>,
    context: Vec<SlotJson<'a>>,
    target: &'a str,
}

/// One JSONL line (without trailing newline) for a built example.
pub fn example_to_json(ex: &TaskExample) -> String {
    let json = ExampleJson {
        task: ex.task.name(),
        page_url: &ex.source_page_url,
        prefix: ex.prefix().iter().map(SlotJson::from).collect(),
        context: ex.context().iter().map(SlotJson::from).collect(),
        target: &ex.target_text,
    };
    serde_json::to_string(&json).expect("example serialization cannot fail")
}

#[derive(Debug, Serialize)]
struct CostJson {
    pattern: PatternJson,
    accounted_pairs: u64,
    mask_nnz: u64,
    ratio_vs_full: f64,
}

impl From<&CostReport> for CostJson {
    fn from(r: &CostReport) -> Self {
        Self {
            pattern: (&r.pattern).into(),
            accounted_pairs: r.accounted_pairs,
            mask_nnz: r.mask_nnz,
            ratio_vs_full: r.ratio_vs_full,
        }
    }
}

#[derive(Debug, Serialize)]
struct GroupJson {
    l: usize,
    reports: Vec<CostJson>,
}

#[derive(Debug, Serialize)]
struct FlopsJson {
    toolkit_version: &'static str,
    config: Config,
    multi_length: bool,
    groups: Vec<GroupJson>,
}

pub fn flops_to_json(cmp: &CostComparison, config: &Config) -> String {
    let json = FlopsJson {
        toolkit_version: TOOLKIT_VERSION,
        config: *config,
        multi_length: cmp.is_multi_length(),
        groups: cmp
            .groups
            .iter()
            .map(|g| GroupJson { l: g.len, reports: g.reports.iter().map(CostJson::from).collect() })
            .collect(),
    };
    serde_json::to_string_pretty(&json).expect("report serialization cannot fail") + "\n"
}

/// Groups digits in threes: `4194304` → `4,194,304`.
pub fn thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn column_title(kind: PatternKind) -> &'static str {
    match kind {
        PatternKind::Full => "Full",
        PatternKind::Local => "Local",
        PatternKind::TGlobal => "TGlobal",
        PatternKind::PrefixGlobal => "Prefix Global",
    }
}

/// Aligned text table: one row per input length, one column per pattern in
/// the order given.
pub fn flops_table(cmp: &CostComparison, columns: &[PatternKind]) -> String {
    let mut header = vec!["Input Length".to_string()];
    header.extend(columns.iter().map(|&k| column_title(k).to_string()));
    let mut rows = vec![header];
    for g in &cmp.groups {
        let mut row = vec![g.len.to_string()];
        for &kind in columns {
            row.push(cmp.get(g.len, kind).map_or_else(|| "-".into(), |r| thousands(r.accounted_pairs)));
        }
        rows.push(row);
    }
    let widths: Vec<usize> =
        (0..rows[0].len()).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    let mut out = String::new();
    for (n, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(cell, &w)| format!("{cell:>w$}")).collect();
        out.push_str(cells.join(" | ").trim_end());
        out.push('\n');
        if n == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            out.push_str(&rule.join("-+-"));
            out.push('\n');
        }
    }
    out
}

#[derive(Debug, Serialize)]
pub struct BuildReportJson<'a> {
    pub toolkit_version: &'static str,
    pub config: Config,
    pub task: &'static str,
    pub min_content_sections: usize,
    pub page_prefix: &'a str,
    pub corpus_sha256: &'a str,
    pub pages_in: u64,
    pub candidates: u64,
    pub examples_out: u64,
    pub rejections: BTreeMap<&'static str, u64>,
    pub per_split: BTreeMap<&'static str, u64>,
}

impl<'a> BuildReportJson<'a> {
    pub fn new(
        report: &FilterReport,
        config: &Config,
        min_content_sections: usize,
        page_prefix: &'a str,
        corpus_sha256: &'a str,
    ) -> Self {
        Self {
            toolkit_version: TOOLKIT_VERSION,
            config: *config,
            task: report.task.name(),
            min_content_sections,
            page_prefix,
            corpus_sha256,
            pages_in: report.pages_in,
            candidates: report.candidates,
            examples_out: report.examples_out,
            rejections: report.rejections.iter().map(|(r, &n)| (r.code(), n)).collect(),
            per_split: report.per_split.iter().map(|(s, &n)| (s.name(), n)).collect(),
        }
    }
}

#[derive(Debug, Serialize)]
struct DistJson {
    median: u64,
    mean: f64,
    max: u64,
    p90: u64,
}

impl From<&Distribution> for DistJson {
    fn from(d: &Distribution) -> Self {
        Self { median: d.median, mean: d.mean, max: d.max, p90: d.p90 }
    }
}

#[derive(Debug, Serialize)]
struct ImagesJson {
    total: u64,
    unique: u64,
}

#[derive(Debug, Serialize)]
struct StatsJson<'a> {
    toolkit_version: &'static str,
    corpus_sha256: &'a str,
    pages: u64,
    parse_errors: u64,
    duplicate_urls: u64,
    sections: u64,
    section_classes: BTreeMap<&'static str, u64>,
    content_sections: u64,
    images: ImagesJson,
    sections_per_page: DistJson,
    images_per_page: DistJson,
}

pub fn stats_to_json(stats: &CorpusStats, skipped: Skipped, corpus_sha256: &str) -> String {
    let mut classes: BTreeMap<&'static str, u64> =
        SectionClass::ALL.iter().map(|c| (c.name(), stats.class_counts.get(c).copied().unwrap_or(0))).collect();
    classes.insert("total", stats.sections);
    let json = StatsJson {
        toolkit_version: TOOLKIT_VERSION,
        corpus_sha256,
        pages: stats.pages,
        parse_errors: skipped.parse_errors,
        duplicate_urls: skipped.duplicate_urls,
        sections: stats.sections,
        section_classes: classes,
        content_sections: stats.content_sections,
        images: ImagesJson { total: stats.total_images, unique: stats.unique_images },
        sections_per_page: (&stats.sections_per_page).into(),
        images_per_page: (&stats.images_per_page).into(),
    };
    serde_json::to_string_pretty(&json).expect("stats serialization cannot fail") + "\n"
}

#[cfg(test)]
mod tests {
    use super::*;
    use prefix_global_core::cost::compare;
    use prefix_global_core::pattern::{build_mask, render_mask};

    #[test]
    fn grids() {
        let g = render_mask(&build_mask(&AttentionPattern::full(3).unwrap()));
        assert_eq!(mask_to_csv(&g), "1,1,1\n1,1,1\n1,1,1\n");
        let g = render_mask(&build_mask(&AttentionPattern::local(2, 0).unwrap()));
        assert_eq!(mask_to_pgm(&g), "P2\n2 2\n1\n1 0\n0 1\n");
    }

    #[test]
    fn digit_grouping() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(1000), "1,000");
        assert_eq!(thousands(16_777_216), "16,777,216");
    }

    #[test]
    fn table_layout() {
        let pats = [AttentionPattern::full(8).unwrap(), AttentionPattern::local(8, 1).unwrap()];
        let t = flops_table(&compare(&pats).unwrap(), &[PatternKind::Local, PatternKind::Full]);
        assert_eq!(t, "Input Length | Local | Full\n-------------+-------+-----\n           8 |    16 |   64\n");
    }

    #[test]
    fn digest() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
