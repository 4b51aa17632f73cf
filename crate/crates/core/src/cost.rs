//! Approximate attention FLOP accounting.
//!
//! The accounted figure counts attended query-key pairs, ignoring heads and
//! embedding width:
//!
//! | pattern      | accounted pairs                 |
//! |--------------|---------------------------------|
//! | Full         | `l²`                            |
//! | Local        | `l·2r`                          |
//! | TGlobal      | `l·(2r + ⌈l/block⌉)`            |
//! | PrefixGlobal | `(l−k)·(2r+k) + k·l`            |
//!
//! Windows are counted as `2r` wide with no self term and no overlap
//! removal. That arithmetic is what the published 1k/2k/4k table uses, so it
//! is kept as is; [`CostReport::mask_nnz`] carries the exact deduplicated
//! pair count next to it.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::pattern::{build_mask, AttentionPattern, PatternKind};

/// Accounted query-key pairs for `p`.
pub fn accounted_pairs(p: &AttentionPattern) -> u64 {
    let l = p.len() as u64;
    let window = 2 * p.radius() as u64;
    match p.kind() {
        PatternKind::Full => l * l,
        PatternKind::Local => l * window,
        PatternKind::TGlobal => l * (window + p.side_keys() as u64),
        PatternKind::PrefixGlobal => {
            let k = p.prefix() as u64;
            (l - k) * (window + k) + k * l
        }
    }
}

/// Exact allowed-pair count without building the mask.
pub fn exact_pairs(p: &AttentionPattern) -> u64 {
    let side = p.side_keys() as u64;
    (0..p.len()).map(|i| p.key_ranges(i).count() as u64 + side).sum()
}

/// Cost of one pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostReport {
    pub pattern: AttentionPattern,
    /// Approximate FLOP proxy.
    pub accounted_pairs: u64,
    /// True deduplicated pair count of the mask, self included.
    pub mask_nnz: u64,
    /// `accounted_pairs / l²`, i.e. against Full at the same length.
    pub ratio_vs_full: f64,
}

impl CostReport {
    pub fn new(pattern: AttentionPattern) -> Self {
        let accounted = accounted_pairs(&pattern);
        let l = pattern.len() as f64;
        Self {
            pattern,
            accounted_pairs: accounted,
            mask_nnz: exact_pairs(&pattern),
            ratio_vs_full: accounted as f64 / (l * l),
        }
    }
}

/// Reports sharing one sequence length, ascending by accounted pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct LengthGroup {
    pub len: usize,
    pub reports: Vec<CostReport>,
}

/// Output of [`compare`]: one group per distinct sequence length.
#[derive(Debug, Clone, PartialEq)]
pub struct CostComparison {
    pub groups: Vec<LengthGroup>,
}

impl CostComparison {
    /// True when more than one sequence length was compared.
    pub fn is_multi_length(&self) -> bool {
        self.groups.len() > 1
    }

    /// Every report, ascending by accounted pairs across all lengths.
    pub fn sorted(&self) -> Vec<CostReport> {
        let mut all: Vec<CostReport> = self.groups.iter().flat_map(|g| g.reports.iter().copied()).collect();
        all.sort_by_key(|r| (r.accounted_pairs, r.pattern.len(), r.pattern.kind()));
        all
    }

    /// Looks up the report for a kind at a length.
    pub fn get(&self, len: usize, kind: PatternKind) -> Option<&CostReport> {
        self.groups
            .iter()
            .find(|g| g.len == len)
            .and_then(|g| g.reports.iter().find(|r| r.pattern.kind() == kind))
    }
}

/// Costs a set of patterns. Lengths are never mixed inside a group; each
/// group is sorted by accounted pairs and groups ascend by length.
pub fn compare(patterns: &[AttentionPattern]) -> Result<CostComparison> {
    if patterns.is_empty() {
        return Err(Error::Pattern("nothing to compare".into()));
    }
    let mut lens: Vec<usize> = patterns.iter().map(AttentionPattern::len).collect();
    lens.sort_unstable();
    lens.dedup();
    let groups = lens
        .into_iter()
        .map(|len| {
            let mut reports: Vec<CostReport> =
                patterns.iter().filter(|p| p.len() == len).map(|&p| CostReport::new(p)).collect();
            reports.sort_by_key(|r| (r.accounted_pairs, r.pattern.kind()));
            LengthGroup { len, reports }
        })
        .collect();
    Ok(CostComparison { groups })
}

/// Mask nnz by enumeration; slower twin of [`exact_pairs`].
pub fn enumerated_pairs(p: &AttentionPattern) -> u64 {
    build_mask(p).nnz() as u64
}
