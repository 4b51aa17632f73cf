//! Attention pattern descriptors and exact mask construction.
//!
//! Row `i` of a mask lists the keys query `i` may attend to. For
//! [`PatternKind::TGlobal`] the transient side slots are appended after the
//! `l` real keys, at indices `l..l + side_keys`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};

/// Default number of global prefix tokens.
pub const DEFAULT_PREFIX: usize = 512;
/// Default local radius (tokens per side).
pub const DEFAULT_RADIUS: usize = 127;
/// Default TGlobal aggregation block.
pub const DEFAULT_BLOCK: usize = 16;

/// Which attention scheme a pattern describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternKind {
    Full,
    Local,
    TGlobal,
    PrefixGlobal,
}

impl PatternKind {
    /// Stable kebab-case name used on the command line and in reports.
    pub fn name(self) -> &'static str {
        match self {
            PatternKind::Full => "full",
            PatternKind::Local => "local",
            PatternKind::TGlobal => "tglobal",
            PatternKind::PrefixGlobal => "prefix-global",
        }
    }
}

impl core::str::FromStr for PatternKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(PatternKind::Full),
            "local" => Ok(PatternKind::Local),
            "tglobal" | "t-global" => Ok(PatternKind::TGlobal),
            "prefix-global" | "prefix" => Ok(PatternKind::PrefixGlobal),
            other => Err(Error::Pattern(format!("unknown pattern `{other}`"))),
        }
    }
}

/// A validated attention pattern over a sequence of `len` tokens.
///
/// Fields a kind does not use are normalized to zero (`radius` for Full,
/// `prefix` outside PrefixGlobal, `block` outside TGlobal), so two patterns
/// compare equal exactly when they describe the same mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AttentionPattern {
    kind: PatternKind,
    len: usize,
    radius: usize,
    prefix: usize,
    block: usize,
}

#[allow(clippy::len_without_is_empty)]
impl AttentionPattern {
    pub fn full(len: usize) -> Result<Self> {
        Self::new(PatternKind::Full, len, 0, 0, 0)
    }

    pub fn local(len: usize, radius: usize) -> Result<Self> {
        Self::new(PatternKind::Local, len, radius, 0, 0)
    }

    pub fn tglobal(len: usize, radius: usize, block: usize) -> Result<Self> {
        Self::new(PatternKind::TGlobal, len, radius, 0, block)
    }

    pub fn prefix_global(len: usize, prefix: usize, radius: usize) -> Result<Self> {
        Self::new(PatternKind::PrefixGlobal, len, radius, prefix, 0)
    }

    /// Generic constructor; parameters irrelevant to `kind` are ignored.
    pub fn new(kind: PatternKind, len: usize, radius: usize, prefix: usize, block: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Pattern("sequence length must be at least 1".into()));
        }
        let (radius, prefix, block) = match kind {
            PatternKind::Full => (0, 0, 0),
            PatternKind::Local => (radius, 0, 0),
            PatternKind::TGlobal => {
                if block == 0 {
                    return Err(Error::Pattern("transient block size must be at least 1".into()));
                }
                (radius, 0, block)
            }
            PatternKind::PrefixGlobal => {
                if prefix > len {
                    return Err(Error::Pattern(format!("prefix {prefix} exceeds sequence length {len}")));
                }
                (radius, prefix, 0)
            }
        };
        Ok(Self { kind, len, radius, prefix, block })
    }

    /// Builds a pattern from signed parameters as they arrive from users.
    pub fn from_signed(kind: PatternKind, len: i64, radius: i64, prefix: i64, block: i64) -> Result<Self> {
        let nonneg = |name: &str, v: i64| {
            usize::try_from(v).map_err(|_| Error::Pattern(format!("{name} must be non-negative, got {v}")))
        };
        Self::new(kind, nonneg("l", len)?, nonneg("r", radius)?, nonneg("k", prefix)?, nonneg("block", block)?)
    }

    #[inline]
    pub fn kind(&self) -> PatternKind {
        self.kind
    }

    /// Sequence length `l`.
    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    /// Local radius `r`.
    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Global prefix size `k` (0 unless PrefixGlobal).
    #[inline]
    pub fn prefix(&self) -> usize {
        self.prefix
    }

    /// Transient aggregation block (0 unless TGlobal).
    #[inline]
    pub fn block(&self) -> usize {
        self.block
    }

    /// Number of transient side slots, `ceil(l / block)` for TGlobal.
    pub fn side_keys(&self) -> usize {
        match self.kind {
            PatternKind::TGlobal => self.len.div_ceil(self.block),
            _ => 0,
        }
    }

    /// Local window of query `i` over real tokens, self included.
    #[inline]
    pub fn window(&self, i: usize) -> Range<usize> {
        i.saturating_sub(self.radius)..(i.saturating_add(self.radius) + 1).min(self.len)
    }

    /// Allowed real-key ranges for query `i`, ascending and disjoint.
    ///
    /// At most two ranges: the global prefix and the local window. Side slots
    /// of TGlobal are not included.
    pub fn key_ranges(&self, i: usize) -> KeyRanges {
        let mut out = KeyRanges::default();
        match self.kind {
            PatternKind::Full => out.push(0..self.len),
            PatternKind::Local | PatternKind::TGlobal => out.push(self.window(i)),
            PatternKind::PrefixGlobal => {
                if i < self.prefix {
                    out.push(0..self.len);
                } else {
                    let w = self.window(i);
                    if w.start <= self.prefix {
                        out.push(0..w.end.max(self.prefix));
                    } else {
                        out.push(0..self.prefix);
                        out.push(w);
                    }
                }
            }
        }
        out
    }
}

/// Up to two disjoint ascending key ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeyRanges {
    spans: [Range<usize>; 2],
    n: usize,
}

impl KeyRanges {
    fn push(&mut self, r: Range<usize>) {
        if !r.is_empty() {
            self.spans[self.n] = r;
            self.n += 1;
        }
    }

    pub fn as_slice(&self) -> &[Range<usize>] {
        &self.spans[..self.n]
    }

    /// Total keys covered.
    pub fn count(&self) -> usize {
        self.as_slice().iter().map(|r| r.len()).sum()
    }

    /// Key indices in ascending order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.as_slice().iter().flat_map(|r| r.clone())
    }
}

/// Per-query allowed key sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttentionMask {
    n_queries: usize,
    n_keys: usize,
    side_keys: usize,
    rows: Vec<Vec<usize>>,
}

impl AttentionMask {
    pub fn n_queries(&self) -> usize {
        self.n_queries
    }

    /// Real (non-side) key count.
    pub fn n_keys(&self) -> usize {
        self.n_keys
    }

    /// Appended transient slots.
    pub fn side_keys(&self) -> usize {
        self.side_keys
    }

    /// Sorted allowed keys of query `i`.
    pub fn row(&self, i: usize) -> &[usize] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<usize>] {
        &self.rows
    }

    /// Number of allowed query-key pairs.
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Largest allowed set of any query.
    pub fn max_row_len(&self) -> usize {
        self.rows.iter().map(Vec::len).max().unwrap_or(0)
    }

    #[inline]
    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.rows[i].binary_search(&j).is_ok()
    }
}

/// Enumerates the allowed key set of every query.
pub fn build_mask(p: &AttentionPattern) -> AttentionMask {
    let side = p.side_keys();
    let rows = (0..p.len)
        .map(|i| {
            let mut row: Vec<usize> = p.key_ranges(i).iter().collect();
            row.extend(p.len..p.len + side);
            row
        })
        .collect();
    AttentionMask { n_queries: p.len, n_keys: p.len, side_keys: side, rows }
}

/// Dense 0/1 rendering of a mask: `n_queries` rows by `n_keys + side_keys` columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskGrid {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
}

impl MaskGrid {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.cells[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.cells[i * self.cols..(i + 1) * self.cols]
    }

    /// Count of ones.
    pub fn ones(&self) -> usize {
        self.cells.iter().map(|&c| c as usize).sum()
    }

    /// Recovers the per-query sets; inverse of [`render_mask`].
    pub fn to_mask(&self, n_keys: usize) -> AttentionMask {
        let rows = (0..self.rows)
            .map(|i| (0..self.cols).filter(|&j| self.get(i, j) == 1).collect())
            .collect();
        AttentionMask { n_queries: self.rows, n_keys, side_keys: self.cols - n_keys, rows }
    }

    /// Additive attention mask (0 allowed, [`crate::MASKED`] blocked).
    pub fn to_additive(&self) -> crate::Matrix {
        crate::Matrix::additive_mask(self.rows, self.cols, |i, j| self.get(i, j) == 1)
    }
}

/// Renders a mask as a dense 0/1 grid.
pub fn render_mask(m: &AttentionMask) -> MaskGrid {
    let cols = m.n_keys + m.side_keys;
    let mut cells = vec![0u8; m.n_queries * cols];
    for (i, row) in m.rows.iter().enumerate() {
        for &j in row {
            cells[i * cols + j] = 1;
        }
    }
    MaskGrid { rows: m.n_queries, cols, cells }
}
