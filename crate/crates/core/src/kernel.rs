//! Block-sparse forward attention.
//!
//! Queries are processed in tiles. A tile pairs a contiguous block of query
//! rows with the union of keys any of them may see, and only that block of
//! scores is ever materialized:
//!
//! - Full: one tile, every query against every key.
//! - PrefixGlobal: one tile for the `k` prefix queries against all keys, then
//!   fixed-height query bands that see the prefix plus a band of width
//!   `QUERY_BLOCK + 2r`.
//! - Local and TGlobal: query bands against their window band (plus the
//!   transient side slots for TGlobal).
//!
//! Within a tile each row is normalized over its own allowed keys in
//! ascending key order, so the result is independent of tiling and of how
//! tiles are spread across threads.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::error::{Error, Result};
use crate::matrix::{matmul, score_scale, Matrix};
use crate::pattern::{AttentionPattern, PatternKind};

/// Query rows per band tile.
pub const QUERY_BLOCK: usize = 64;

/// Already-projected queries, keys and values entering one attention application.
#[derive(Debug, Clone, Copy)]
pub struct AttentionInputs<'a> {
    pub q: &'a Matrix,
    pub k: &'a Matrix,
    pub v: &'a Matrix,
    pub pattern: AttentionPattern,
    pub scale_by_sqrt_d: bool,
}

impl<'a> AttentionInputs<'a> {
    pub fn new(q: &'a Matrix, k: &'a Matrix, v: &'a Matrix, pattern: AttentionPattern) -> Self {
        Self { q, k, v, pattern, scale_by_sqrt_d: true }
    }

    /// Turns 1/√d score scaling on or off.
    pub fn scaled(mut self, on: bool) -> Self {
        self.scale_by_sqrt_d = on;
        self
    }

    fn validate(&self) -> Result<()> {
        let l = self.pattern.len();
        if self.q.rows() != l || self.k.rows() != l || self.v.rows() != l {
            return Err(Error::Shape(format!(
                "pattern length {l} but q/k/v have {}/{}/{} rows",
                self.q.rows(),
                self.k.rows(),
                self.v.rows()
            )));
        }
        if self.q.cols() == 0 || self.q.cols() != self.k.cols() {
            return Err(Error::Shape(format!("query width {} vs key width {}", self.q.cols(), self.k.cols())));
        }
        Ok(())
    }
}

/// Key and value projections applied to block-averaged embeddings to form
/// transient slots.
#[derive(Debug, Clone, Copy)]
pub struct TransientProjection<'a> {
    /// `d_model × d` key projection.
    pub key: &'a Matrix,
    /// `d_model × d_v` value projection.
    pub value: &'a Matrix,
}

/// A contiguous block of query rows and the key ranges it scores against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub queries: Range<usize>,
    /// Ascending, disjoint key ranges; indices `>= l` are transient slots.
    pub keys: Vec<Range<usize>>,
}

impl Tile {
    pub fn key_count(&self) -> usize {
        self.keys.iter().map(|r| r.len()).sum()
    }

    /// Score elements materialized for this tile.
    pub fn score_elems(&self) -> usize {
        self.queries.len() * self.key_count()
    }
}

/// Instrumentation from one kernel run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelStats {
    /// Largest score buffer (in elements) held at any time.
    pub peak_score_elems: usize,
    /// Total score elements computed over all tiles.
    pub computed_scores: usize,
    pub tiles: usize,
}

/// Tiling plan for a pattern.
#[allow(clippy::single_range_in_vec_init)]
pub fn plan_tiles(p: &AttentionPattern) -> Vec<Tile> {
    let l = p.len();
    let side = p.side_keys();
    let mut tiles = Vec::new();
    let first_band = match p.kind() {
        PatternKind::Full => {
            tiles.push(Tile { queries: 0..l, keys: vec![0..l] });
            return tiles;
        }
        PatternKind::PrefixGlobal if p.prefix() > 0 => {
            tiles.push(Tile { queries: 0..p.prefix(), keys: vec![0..l] });
            p.prefix()
        }
        _ => 0,
    };
    let mut start = first_band;
    while start < l {
        let end = (start + QUERY_BLOCK).min(l);
        let band_lo = start.saturating_sub(p.radius()).max(p.prefix());
        let band_hi = (end - 1).saturating_add(p.radius()).saturating_add(1).min(l);
        let mut keys = Vec::with_capacity(3);
        if p.prefix() > 0 {
            keys.push(0..p.prefix());
        }
        if band_lo < band_hi {
            keys.push(band_lo..band_hi);
        }
        if side > 0 {
            keys.push(l..l + side);
        }
        tiles.push(Tile { queries: start..end, keys });
        start = end;
    }
    tiles
}

/// Peak score-buffer elements the kernel will hold for `p`.
pub fn peak_score_elems(p: &AttentionPattern) -> usize {
    plan_tiles(p).iter().map(Tile::score_elems).max().unwrap_or(0)
}

/// A ready-to-run sparse attention: validated inputs plus any transient slots.
#[derive(Debug, Clone)]
pub struct SparseRun<'a> {
    inp: AttentionInputs<'a>,
    scale: f64,
    side_k: Option<Matrix>,
    side_v: Option<Matrix>,
}

impl<'a> SparseRun<'a> {
    /// Prepares a Full, Local or PrefixGlobal run.
    pub fn new(inp: AttentionInputs<'a>) -> Result<Self> {
        inp.validate()?;
        if inp.pattern.kind() == PatternKind::TGlobal {
            return Err(Error::Pattern("TGlobal needs token embeddings; use tglobal_attention".into()));
        }
        Ok(Self { scale: score_scale(inp.q.cols(), inp.scale_by_sqrt_d), inp, side_k: None, side_v: None })
    }

    /// Prepares a TGlobal run, building transient slots by block-averaging
    /// `embeddings` and projecting them with `proj`.
    pub fn transient(inp: AttentionInputs<'a>, embeddings: &Matrix, proj: TransientProjection<'_>) -> Result<Self> {
        inp.validate()?;
        let p = inp.pattern;
        if p.kind() != PatternKind::TGlobal {
            return Err(Error::Pattern(format!("expected a tglobal pattern, got {}", p.kind().name())));
        }
        if embeddings.rows() != p.len() {
            return Err(Error::Shape(format!("{} embedding rows for length {}", embeddings.rows(), p.len())));
        }
        if proj.key.rows() != embeddings.cols() || proj.value.rows() != embeddings.cols() {
            return Err(Error::Shape(format!(
                "projections expect {}/{} input features, embeddings have {}",
                proj.key.rows(),
                proj.value.rows(),
                embeddings.cols()
            )));
        }
        if proj.key.cols() != inp.k.cols() || proj.value.cols() != inp.v.cols() {
            return Err(Error::Shape(format!(
                "projections produce widths {}/{}, keys/values are {}/{}",
                proj.key.cols(),
                proj.value.cols(),
                inp.k.cols(),
                inp.v.cols()
            )));
        }
        let means = block_means(embeddings, p.block())?;
        Ok(Self {
            scale: score_scale(inp.q.cols(), inp.scale_by_sqrt_d),
            inp,
            side_k: Some(matmul(&means, proj.key)?),
            side_v: Some(matmul(&means, proj.value)?),
        })
    }

    pub fn pattern(&self) -> &AttentionPattern {
        &self.inp.pattern
    }

    /// Output width.
    pub fn value_width(&self) -> usize {
        self.inp.v.cols()
    }

    pub fn tiles(&self) -> Vec<Tile> {
        plan_tiles(&self.inp.pattern)
    }

    /// Transient key rows, when present.
    pub fn transient_keys(&self) -> Option<&Matrix> {
        self.side_k.as_ref()
    }

    /// Transient value rows, when present.
    pub fn transient_values(&self) -> Option<&Matrix> {
        self.side_v.as_ref()
    }

    #[inline]
    fn key_row(&self, j: usize) -> &[f64] {
        let l = self.inp.pattern.len();
        match &self.side_k {
            Some(side) if j >= l => side.row(j - l),
            _ => self.inp.k.row(j),
        }
    }

    #[inline]
    fn value_row(&self, j: usize) -> &[f64] {
        let l = self.inp.pattern.len();
        match &self.side_v {
            Some(side) if j >= l => side.row(j - l),
            _ => self.inp.v.row(j),
        }
    }

    #[inline]
    fn allowed(&self, i: usize, j: usize) -> bool {
        let p = &self.inp.pattern;
        if j >= p.len() {
            return true;
        }
        match p.kind() {
            PatternKind::Full => true,
            PatternKind::PrefixGlobal if i < p.prefix() || j < p.prefix() => true,
            _ => i.abs_diff(j) <= p.radius(),
        }
    }

    /// Computes the output rows of one tile into `out`
    /// (`tile.queries.len() × value_width` values). Returns the score
    /// elements materialized.
    pub fn run_tile(&self, tile: &Tile, out: &mut [f64]) -> usize {
        let dv = self.value_width();
        let cols = tile.key_count();
        let keys: Vec<usize> = tile.keys.iter().flat_map(|r| r.clone()).collect();
        let mut scores = vec![0.0; tile.queries.len() * cols];
        for (r, i) in tile.queries.clone().enumerate() {
            let qi = self.inp.q.row(i);
            let srow = &mut scores[r * cols..(r + 1) * cols];
            for (s, &j) in srow.iter_mut().zip(&keys) {
                let kj = self.key_row(j);
                let mut dot = 0.0;
                for (a, b) in qi.iter().zip(kj) {
                    dot += a * b;
                }
                *s = dot * self.scale;
            }
        }
        for (r, i) in tile.queries.clone().enumerate() {
            let srow = &mut scores[r * cols..(r + 1) * cols];
            let mut max = f64::NEG_INFINITY;
            for (&s, &j) in srow.iter().zip(&keys) {
                if self.allowed(i, j) {
                    max = max.max(s);
                }
            }
            let mut sum = 0.0;
            for (s, &j) in srow.iter_mut().zip(&keys) {
                *s = if self.allowed(i, j) { libm::exp(*s - max) } else { 0.0 };
                sum += *s;
            }
            let orow = &mut out[r * dv..(r + 1) * dv];
            orow.iter_mut().for_each(|o| *o = 0.0);
            for (&e, &j) in srow.iter().zip(&keys) {
                if !self.allowed(i, j) {
                    continue;
                }
                let w = e / sum;
                for (o, &x) in orow.iter_mut().zip(self.value_row(j)) {
                    *o += w * x;
                }
            }
        }
        scores.len()
    }

    /// Runs every tile sequentially.
    pub fn run(&self) -> Result<(Matrix, KernelStats)> {
        let l = self.inp.pattern.len();
        let dv = self.value_width();
        let mut out = vec![0.0; l * dv];
        let mut stats = KernelStats::default();
        for tile in self.tiles() {
            let rows = &mut out[tile.queries.start * dv..tile.queries.end * dv];
            let elems = self.run_tile(&tile, rows);
            stats.peak_score_elems = stats.peak_score_elems.max(elems);
            stats.computed_scores += elems;
            stats.tiles += 1;
        }
        Ok((Matrix::from_vec(l, dv, out)?, stats))
    }
}

/// Row means of consecutive blocks of `block` rows; the last block takes the remainder.
pub fn block_means(x: &Matrix, block: usize) -> Result<Matrix> {
    if block == 0 {
        return Err(Error::Pattern("block size must be at least 1".into()));
    }
    let slots = x.rows().div_ceil(block);
    let mut data = vec![0.0; slots * x.cols()];
    for s in 0..slots {
        let rows = s * block..((s + 1) * block).min(x.rows());
        let n = rows.len() as f64;
        let acc = &mut data[s * x.cols()..(s + 1) * x.cols()];
        for i in rows {
            for (a, &v) in acc.iter_mut().zip(x.row(i)) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Matrix::from_vec(slots, x.cols(), data)
}

/// Sparse forward pass for Full, Local and PrefixGlobal patterns.
pub fn sparse_attention(inp: AttentionInputs<'_>) -> Result<Matrix> {
    SparseRun::new(inp)?.run().map(|(m, _)| m)
}

/// TGlobal forward pass: local window plus block-averaged transient slots.
///
/// `embeddings` are the `l × d_model` layer inputs from which `inp.k` and
/// `inp.v` were projected; the same projections build the transient slots.
pub fn tglobal_attention(
    inp: AttentionInputs<'_>,
    embeddings: &Matrix,
    proj: TransientProjection<'_>,
) -> Result<Matrix> {
    SparseRun::transient(inp, embeddings, proj)?.run().map(|(m, _)| m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::dense_attention;
    use crate::pattern::{build_mask, render_mask};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn dense_oracle(q: &Matrix, k: &Matrix, v: &Matrix, p: &AttentionPattern) -> Matrix {
        let grid = render_mask(&build_mask(p));
        dense_attention(q, k, v, &grid.to_additive(), true).unwrap()
    }

    #[test]
    fn full_prefix_equals_unmasked_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (q, k, v) = (random(32, 8, &mut rng), random(32, 8, &mut rng), random(32, 8, &mut rng));
        let p = AttentionPattern::prefix_global(32, 32, 3).unwrap();
        let out = sparse_attention(AttentionInputs::new(&q, &k, &v, p)).unwrap();
        let dense = dense_attention(&q, &k, &v, &Matrix::zeros(32, 32), true).unwrap();
        assert!(out.max_abs_diff(&dense).unwrap() <= 1e-9);
    }

    #[test]
    fn self_only_local_copies_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (q, k, v) = (random(70, 4, &mut rng), random(70, 4, &mut rng), random(70, 6, &mut rng));
        let out = sparse_attention(AttentionInputs::new(&q, &k, &v, AttentionPattern::local(70, 0).unwrap())).unwrap();
        assert_eq!(out, v);
    }

    #[test]
    fn prefix_global_matches_dense_masked() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (q, k, v) = (random(64, 8, &mut rng), random(64, 8, &mut rng), random(64, 8, &mut rng));
        let p = AttentionPattern::prefix_global(64, 8, 3).unwrap();
        let out = sparse_attention(AttentionInputs::new(&q, &k, &v, p)).unwrap();
        assert!(out.max_abs_diff(&dense_oracle(&q, &k, &v, &p)).unwrap() <= 1e-9);
    }

    #[test]
    fn tglobal_is_rejected_by_plain_kernel() {
        let m = Matrix::zeros(4, 2);
        let p = AttentionPattern::tglobal(4, 1, 2).unwrap();
        assert!(matches!(sparse_attention(AttentionInputs::new(&m, &m, &m, p)), Err(Error::Pattern(_))));
    }

    #[test]
    fn shape_errors() {
        let a = Matrix::zeros(4, 2);
        let b = Matrix::zeros(5, 2);
        let p = AttentionPattern::full(4).unwrap();
        assert!(matches!(sparse_attention(AttentionInputs::new(&a, &b, &a, p)), Err(Error::Shape(_))));
        let tp = AttentionPattern::tglobal(4, 1, 2).unwrap();
        let w = Matrix::zeros(3, 2);
        let proj = TransientProjection { key: &w, value: &w };
        let emb = Matrix::zeros(5, 3);
        assert!(matches!(
            tglobal_attention(AttentionInputs::new(&a, &a, &a, tp), &emb, proj),
            Err(Error::Shape(_))
        ));
    }

    struct Projected {
        x: Matrix,
        wk: Matrix,
        wv: Matrix,
        q: Matrix,
        k: Matrix,
        v: Matrix,
    }

    fn projected(l: usize, dm: usize, d: usize, rng: &mut ChaCha8Rng) -> Projected {
        let x = random(l, dm, rng);
        let (wq, wk, wv) = (random(dm, d, rng), random(dm, d, rng), random(dm, d, rng));
        let (q, k, v) = (matmul(&x, &wq).unwrap(), matmul(&x, &wk).unwrap(), matmul(&x, &wv).unwrap());
        Projected { x, wk, wv, q, k, v }
    }

    /// Appends explicitly averaged rows to K and V and runs the dense path.
    fn append_rows_oracle(t: &Projected, p: &AttentionPattern) -> Matrix {
        let l = p.len();
        let slots = p.side_keys();
        let mut means = Matrix::zeros(slots, t.x.cols());
        for s in 0..slots {
            let members: Vec<usize> = (0..l).filter(|i| i / p.block() == s).collect();
            for c in 0..t.x.cols() {
                let m = members.iter().map(|&i| t.x.get(i, c)).sum::<f64>() / members.len() as f64;
                means.set(s, c, m).unwrap();
            }
        }
        let k_all = t.k.vstack(&matmul(&means, &t.wk).unwrap()).unwrap();
        let v_all = t.v.vstack(&matmul(&means, &t.wv).unwrap()).unwrap();
        let mask = Matrix::additive_mask(l, l + slots, |i, j| j >= l || i.abs_diff(j) <= p.radius());
        dense_attention(&t.q, &k_all, &v_all, &mask, true).unwrap()
    }

    fn run_tglobal(t: &Projected, p: AttentionPattern) -> Matrix {
        let proj = TransientProjection { key: &t.wk, value: &t.wv };
        tglobal_attention(AttentionInputs::new(&t.q, &t.k, &t.v, p), &t.x, proj).unwrap()
    }

    #[test]
    fn tglobal_single_slot_sees_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = projected(16, 6, 4, &mut rng);
        let p = AttentionPattern::tglobal(16, 20, 16).unwrap();
        assert!(run_tglobal(&t, p).max_abs_diff(&append_rows_oracle(&t, &p)).unwrap() <= 1e-9);
    }

    #[test]
    fn tglobal_two_slots() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = projected(32, 8, 8, &mut rng);
        let p = AttentionPattern::tglobal(32, 1, 16).unwrap();
        assert!(run_tglobal(&t, p).max_abs_diff(&append_rows_oracle(&t, &p)).unwrap() <= 1e-9);
    }

    #[test]
    fn tglobal_constant_embeddings_duplicate_a_key() {
        // Every slot equals any token's projection, so each slot acts as one
        // more copy of the (shared) key/value row.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let l = 20;
        let row: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Matrix::from_vec(l, 5, row.iter().copied().cycle().take(l * 5).collect()).unwrap();
        let (wq, wk, wv) = (random(5, 3, &mut rng), random(5, 3, &mut rng), random(5, 3, &mut rng));
        let (q, k, v) = (matmul(&x, &wq).unwrap(), matmul(&x, &wk).unwrap(), matmul(&x, &wv).unwrap());
        let p = AttentionPattern::tglobal(l, 2, 8).unwrap();
        let out = tglobal_attention(
            AttentionInputs::new(&q, &k, &v, p),
            &x,
            TransientProjection { key: &wk, value: &wv },
        )
        .unwrap();
        // With all keys identical the weights are uniform, and every value row
        // is the same, so the output is that row regardless of window size.
        for i in 0..l {
            for c in 0..3 {
                assert!((out.get(i, c) - v.get(0, c)).abs() < 1e-12);
            }
        }
        // Local attention over the same inputs, with one duplicated key per
        // slot folded into renormalization, gives the same answer.
        let local = sparse_attention(AttentionInputs::new(&q, &k, &v, AttentionPattern::local(l, 2).unwrap())).unwrap();
        assert!(out.max_abs_diff(&local).unwrap() < 1e-12);
    }

    #[test]
    fn tiles_cover_queries_once() {
        for p in [
            AttentionPattern::full(100).unwrap(),
            AttentionPattern::local(130, 5).unwrap(),
            AttentionPattern::prefix_global(300, 17, 9).unwrap(),
            AttentionPattern::prefix_global(300, 0, 9).unwrap(),
            AttentionPattern::tglobal(129, 3, 16).unwrap(),
        ] {
            let tiles = plan_tiles(&p);
            let mut next = 0;
            for t in &tiles {
                assert_eq!(t.queries.start, next);
                next = t.queries.end;
                for w in t.keys.windows(2) {
                    assert!(w[0].end <= w[1].start);
                }
            }
            assert_eq!(next, p.len());
        }
    }

    #[test]
    fn prefix_global_4k_buffer_below_full_2k() {
        let pg = peak_score_elems(&AttentionPattern::prefix_global(4096, 512, 127).unwrap());
        let full = peak_score_elems(&AttentionPattern::full(2048).unwrap());
        assert_eq!(full, 4_194_304);
        assert_eq!(pg, 512 * 4096);
        assert!(pg < full);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn sparse_equals_dense(seed in any::<u64>(), l in 1usize..160, d in 1usize..10, r in 0usize..12, kf in 0usize..=100, kind in 0usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (q, k, v) = (random(l, d, &mut rng), random(l, d, &mut rng), random(l, d + 1, &mut rng));
            let p = match kind {
                0 => AttentionPattern::full(l),
                1 => AttentionPattern::local(l, r),
                _ => AttentionPattern::prefix_global(l, l * kf / 100, r),
            }.unwrap();
            let (out, stats) = SparseRun::new(AttentionInputs::new(&q, &k, &v, p)).unwrap().run().unwrap();
            prop_assert!(out.max_abs_diff(&dense_oracle(&q, &k, &v, &p)).unwrap() <= 1e-9);
            prop_assert_eq!(stats.peak_score_elems, peak_score_elems(&p));
        }

        #[test]
        fn tglobal_equals_append_rows(seed in any::<u64>(), l in 1usize..120, r in 0usize..8, b in 1usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = projected(l, 5, 4, &mut rng);
            let p = AttentionPattern::tglobal(l, r, b).unwrap();
            prop_assert!(run_tglobal(&t, p).max_abs_diff(&append_rows_oracle(&t, &p)).unwrap() <= 1e-9);
        }

        #[test]
        fn outside_keys_do_not_matter(seed in any::<u64>(), l in 8usize..120, r in 0usize..6, kf in 0usize..50) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let k_pre = l * kf / 100;
            let (q, k, v) = (random(l, 4, &mut rng), random(l, 4, &mut rng), random(l, 3, &mut rng));
            let p = AttentionPattern::prefix_global(l, k_pre, r).unwrap();
            let base = sparse_attention(AttentionInputs::new(&q, &k, &v, p)).unwrap();
            let i = l - 1;
            let far = k_pre.max(i.saturating_sub(r + 1 + rng.random_range(0..4)));
            prop_assume!(far >= k_pre && i - far > r);
            let (mut k2, mut v2) = (k.clone(), v.clone());
            for c in 0..4 { k2.set(far, c, rng.random_range(-5.0..5.0)).unwrap(); }
            for c in 0..3 { v2.set(far, c, rng.random_range(-5.0..5.0)).unwrap(); }
            let pert = sparse_attention(AttentionInputs::new(&q, &k2, &v2, p)).unwrap();
            prop_assert_eq!(base.row(i), pert.row(i));
        }
    }
}
