//! Seeded attention runs with optional dense-oracle checking.
//!
//! Inputs come from ChaCha8 seeded with the run seed, each entry drawn
//! uniformly from `[-1, 1)` in row-major order. Full, Local and
//! PrefixGlobal draw `Q`, `K`, `V` (each `l × d`) in that order. TGlobal
//! draws embeddings `X` (`l × d`) and projections `Wq`, `Wk`, `Wv`
//! (`d × d`), then sets `Q = X·Wq`, `K = X·Wk`, `V = X·Wv`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use prefix_global_core::kernel::{AttentionInputs, KernelStats, SparseRun, TransientProjection};
use prefix_global_core::matrix::{dense_attention, matmul, Matrix};
use prefix_global_core::pattern::{AttentionPattern, PatternKind};

use crate::config::Config;
use crate::formats::{sha256_hex, PatternJson};
use crate::{Error, Result, TOOLKIT_VERSION};

/// Oracle tolerance (max-abs).
pub const ORACLE_TOLERANCE: f64 = 1e-9;
/// Largest sequence length the sparse kernel will run.
pub const MAX_SPARSE_LEN: usize = 65_536;
/// Largest sequence length for which the dense `l × l` grid is built.
pub const MAX_DENSE_LEN: usize = 4096;
/// Largest `l · d` accepted.
pub const MAX_ELEMENTS: usize = 1 << 24;

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    Matrix::from_vec(rows, cols, data).expect("uniform samples are finite")
}

/// Seeded attention inputs.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub q: Matrix,
    pub k: Matrix,
    pub v: Matrix,
    /// Embeddings and key/value projections (TGlobal only).
    pub transient: Option<(Matrix, Matrix, Matrix)>,
}

impl Inputs {
    pub fn generate(pattern: &AttentionPattern, d: usize, seed: u64) -> Self {
        let l = pattern.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if pattern.kind() == PatternKind::TGlobal {
            let x = random_matrix(l, d, &mut rng);
            let wq = random_matrix(d, d, &mut rng);
            let wk = random_matrix(d, d, &mut rng);
            let wv = random_matrix(d, d, &mut rng);
            let project = |w: &Matrix| matmul(&x, w).expect("square projection");
            Self { q: project(&wq), k: project(&wk), v: project(&wv), transient: Some((x, wk, wv)) }
        } else {
            let q = random_matrix(l, d, &mut rng);
            let k = random_matrix(l, d, &mut rng);
            let v = random_matrix(l, d, &mut rng);
            Self { q, k, v, transient: None }
        }
    }

    pub fn run<'a>(&'a self, pattern: AttentionPattern, scale: bool) -> Result<SparseRun<'a>> {
        let inp = AttentionInputs::new(&self.q, &self.k, &self.v, pattern).scaled(scale);
        Ok(match &self.transient {
            Some((x, wk, wv)) => SparseRun::transient(inp, x, TransientProjection { key: wk, value: wv })?,
            None => SparseRun::new(inp)?,
        })
    }

    /// Dense reference: the rendered mask as an additive bias, with
    /// transient rows appended to `K` and `V` when present.
    pub fn dense_oracle(&self, pattern: &AttentionPattern, scale: bool, run: &SparseRun<'_>) -> Result<Matrix> {
        use prefix_global_core::pattern::{build_mask, render_mask};
        let mask = render_mask(&build_mask(pattern)).to_additive();
        let (k, v) = match (run.transient_keys(), run.transient_values()) {
            (Some(sk), Some(sv)) => (self.k.vstack(sk)?, self.v.vstack(sv)?),
            _ => (self.k.clone(), self.v.clone()),
        };
        Ok(dense_attention(&self.q, &k, &v, &mask, scale)?)
    }
}

/// Runs the tiles of `run` on `threads` workers. Tiles are dealt out in
/// contiguous groups; each output row is written by exactly one tile, so the
/// result does not depend on the worker count.
pub fn run_parallel(run: &SparseRun<'_>, threads: usize) -> Result<(Matrix, KernelStats)> {
    let tiles = run.tiles();
    let l = run.pattern().len();
    let dv = run.value_width();
    let per = tiles.len().div_ceil(threads.max(1)).max(1);
    let results: Vec<Vec<(usize, Vec<f64>, usize)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = tiles
            .chunks(per)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|tile| {
                            let mut rows = vec![0.0; tile.queries.len() * dv];
                            let elems = run.run_tile(tile, &mut rows);
                            (tile.queries.start, rows, elems)
                        })
                        .collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("attention worker panicked")).collect()
    });
    let mut out = vec![0.0; l * dv];
    let mut stats = KernelStats::default();
    for (start, rows, elems) in results.into_iter().flatten() {
        out[start * dv..start * dv + rows.len()].copy_from_slice(&rows);
        stats.peak_score_elems = stats.peak_score_elems.max(elems);
        stats.computed_scores += elems;
        stats.tiles += 1;
    }
    Ok((Matrix::from_vec(l, dv, out)?, stats))
}

#[derive(Debug, Serialize)]
pub struct OracleJson {
    pub max_abs_diff: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct AttendReport {
    pub toolkit_version: &'static str,
    pub config: Config,
    pub pattern: PatternJson,
    pub d: usize,
    pub output_sha256: String,
    pub output_equals_v: bool,
    pub peak_score_elems: usize,
    pub computed_scores: usize,
    pub tiles: usize,
    pub oracle: Option<OracleJson>,
}

impl AttendReport {
    /// True when no oracle was requested or it passed.
    pub fn ok(&self) -> bool {
        self.oracle.as_ref().is_none_or(|o| o.pass)
    }
}

/// Refuses runs that would not fit comfortably in memory.
pub fn check_bounds(pattern: &AttentionPattern, d: usize, dense: bool) -> Result<()> {
    let l = pattern.len();
    if d == 0 {
        return Err(Error::Usage("--d must be at least 1".into()));
    }
    if l > MAX_SPARSE_LEN || l.saturating_mul(d) > MAX_ELEMENTS {
        return Err(Error::Usage(format!(
            "refusing l={l}, d={d}: limits are l <= {MAX_SPARSE_LEN} and l*d <= {MAX_ELEMENTS}"
        )));
    }
    if (dense || pattern.kind() == PatternKind::Full) && l > MAX_DENSE_LEN {
        return Err(Error::Usage(format!(
            "refusing l={l}: full attention and the dense oracle need an l x l grid, limit is l <= {MAX_DENSE_LEN}"
        )));
    }
    Ok(())
}

pub fn attend(pattern: AttentionPattern, d: usize, config: &Config, check_oracle: bool, threads: usize) -> Result<AttendReport> {
    check_bounds(&pattern, d, check_oracle)?;
    let inputs = Inputs::generate(&pattern, d, config.seed);
    let run = inputs.run(pattern, config.scale_by_sqrt_d)?;
    let (out, stats) = run_parallel(&run, threads)?;
    let bytes: Vec<u8> = out.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
    let oracle = if check_oracle {
        let dense = inputs.dense_oracle(&pattern, config.scale_by_sqrt_d, &run)?;
        let diff = out.max_abs_diff(&dense)?;
        Some(OracleJson { max_abs_diff: diff, tolerance: ORACLE_TOLERANCE, pass: diff <= ORACLE_TOLERANCE })
    } else {
        None
    };
    Ok(AttendReport {
        toolkit_version: TOOLKIT_VERSION,
        config: *config,
        pattern: (&pattern).into(),
        d,
        output_sha256: sha256_hex(&bytes),
        output_equals_v: out == inputs.v,
        peak_score_elems: stats.peak_score_elems,
        computed_scores: stats.computed_scores,
        tiles: stats.tiles,
        oracle,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_count_does_not_change_output() {
        for pattern in [
            AttentionPattern::prefix_global(300, 40, 7).unwrap(),
            AttentionPattern::tglobal(200, 5, 16).unwrap(),
            AttentionPattern::full(90).unwrap(),
        ] {
            let inputs = Inputs::generate(&pattern, 6, 9);
            let run = inputs.run(pattern, true).unwrap();
            let (one, s1) = run_parallel(&run, 1).unwrap();
            let (many, s7) = run_parallel(&run, 7).unwrap();
            assert_eq!(one.as_slice(), many.as_slice());
            assert_eq!(s1, s7);
            assert_eq!(one, run.run().unwrap().0);
        }
    }

    #[test]
    fn oracle_passes_and_local_zero_copies() {
        let cfg = Config::default();
        let r = attend(AttentionPattern::prefix_global(64, 8, 3).unwrap(), 8, &cfg, true, 2).unwrap();
        assert!(r.ok() && r.oracle.as_ref().unwrap().max_abs_diff <= ORACLE_TOLERANCE);
        let r = attend(AttentionPattern::local(50, 0).unwrap(), 4, &cfg, false, 3).unwrap();
        assert!(r.output_equals_v);
        let r = attend(AttentionPattern::tglobal(80, 3, 16).unwrap(), 5, &cfg, true, 3).unwrap();
        assert!(r.ok());
    }

    #[test]
    fn bounds() {
        let cfg = Config::default();
        assert!(matches!(attend(AttentionPattern::full(5000).unwrap(), 2, &cfg, false, 1), Err(Error::Usage(_))));
        assert!(matches!(
            attend(AttentionPattern::local(100_000, 1).unwrap(), 2, &cfg, false, 1),
            Err(Error::Usage(_))
        ));
        assert!(matches!(attend(AttentionPattern::local(10, 1).unwrap(), 0, &cfg, false, 1), Err(Error::Usage(_))));
    }
}
