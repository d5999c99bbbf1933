//! Batched small-matrix and reduction kernels.
//!
//! Symmetric and lower-triangular 4×4 matrices are stored packed as ten
//! values, row-major over the lower triangle:
//! `(0,0) (1,0) (1,1) (2,0) (2,1) (2,2) (3,0) (3,1) (3,2) (3,3)`.
//! Batches are contiguous vectors of such blocks.
//!
//! Batched operations run in parallel over blocks and each block is
//! processed by the same sequential code, so parallel and sequential results
//! are bit-identical. [`logsumexp_rows`] is per-row and also bit-identical.
//! [`weighted_moments`] parallelises over components and keeps the row
//! summation order fixed, so it is bit-identical as well.

use crate::error::{invalid, Error, Result};
use crate::par;

/// Packed symmetric or lower-triangular 4×4 block.
pub type Packed4 = [f64; 10];

/// Counts below this mark a component as degenerate in the M-step.
pub const EPS_COUNT: f64 = 1e-10;

/// `ln(2π)`.
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[inline]
pub const fn tri_index(i: usize, j: usize) -> usize {
    debug_assert!(j <= i);
    i * (i + 1) / 2 + j
}

pub fn unpack_sym(p: &Packed4) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            m[i][j] = p[tri_index(i, j)];
            m[j][i] = p[tri_index(i, j)];
        }
    }
    m
}

pub fn unpack_lower(p: &Packed4) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            m[i][j] = p[tri_index(i, j)];
        }
    }
    m
}

/// Packs the lower triangle of `m`.
pub fn pack_lower(m: &[[f64; 4]; 4]) -> Packed4 {
    let mut p = [0.0; 10];
    for i in 0..4 {
        for j in 0..=i {
            p[tri_index(i, j)] = m[i][j];
        }
    }
    p
}

pub fn packed_identity() -> Packed4 {
    let mut p = [0.0; 10];
    for i in 0..4 {
        p[tri_index(i, i)] = 1.0;
    }
    p
}

pub fn packed_diag(d: [f64; 4]) -> Packed4 {
    let mut p = [0.0; 10];
    for i in 0..4 {
        p[tri_index(i, i)] = d[i];
    }
    p
}

/// A batch of 4×4 symmetric positive-definite blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedSpd4 {
    blocks: Vec<Packed4>,
}

impl BatchedSpd4 {
    pub fn new(blocks: Vec<Packed4>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Packed4] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }
}

/// A batch of lower-triangular 4×4 factors.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedLower4 {
    blocks: Vec<Packed4>,
}

impl BatchedLower4 {
    pub fn new(blocks: Vec<Packed4>) -> Self {
        Self { blocks }
    }

    pub fn blocks(&self) -> &[Packed4] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn into_blocks(self) -> Vec<Packed4> {
        self.blocks
    }
}

/// Cholesky–Banachiewicz on one packed block. `None` if not positive definite.
pub fn cholesky4(a: &Packed4) -> Option<Packed4> {
    let mut l = [0.0; 10];
    for i in 0..4 {
        for j in 0..=i {
            let mut s = a[tri_index(i, j)];
            for k in 0..j {
                s -= l[tri_index(i, k)] * l[tri_index(j, k)];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[tri_index(i, i)] = s.sqrt();
            } else {
                l[tri_index(i, j)] = s / l[tri_index(j, j)];
            }
        }
    }
    Some(l)
}

/// Factors every block as `L Lᵀ`. Fails with the index of the first block
/// that is not positive definite.
pub fn batched_cholesky(blocks: &BatchedSpd4) -> Result<BatchedLower4> {
    let out = par::map(blocks.len(), |b| cholesky4(&blocks.blocks[b]));
    let mut factors = Vec::with_capacity(out.len());
    for (b, l) in out.into_iter().enumerate() {
        factors.push(l.ok_or(Error::NotPositiveDefinite { component: b })?);
    }
    Ok(BatchedLower4 { blocks: factors })
}

#[inline]
fn forward_substitute(l: &Packed4, rhs: &[f64; 4]) -> [f64; 4] {
    let mut x = [0.0; 4];
    for i in 0..4 {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[tri_index(i, k)] * x[k];
        }
        x[i] = s / l[tri_index(i, i)];
    }
    x
}

fn check_diagonals(factors: &BatchedLower4) -> Result<()> {
    for (b, l) in factors.blocks.iter().enumerate() {
        if (0..4).any(|i| l[tri_index(i, i)] == 0.0) {
            return Err(Error::SingularFactor { block: b });
        }
    }
    Ok(())
}

/// Solves `L_b x_b = rhs_b` for every block by forward substitution.
pub fn batched_tri_solve(factors: &BatchedLower4, rhs: &[[f64; 4]]) -> Result<Vec<[f64; 4]>> {
    if rhs.len() != factors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors but {} right-hand sides",
            factors.len(),
            rhs.len()
        )));
    }
    check_diagonals(factors)?;
    Ok(par::map(rhs.len(), |b| forward_substitute(&factors.blocks[b], &rhs[b])))
}

/// Solves `L_b X_b = B_b` where each `B_b` holds `K` right-hand-side columns.
pub fn batched_tri_solve_cols<const K: usize>(
    factors: &BatchedLower4,
    rhs: &[[[f64; 4]; K]],
) -> Result<Vec<[[f64; 4]; K]>> {
    if rhs.len() != factors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors but {} right-hand-side blocks",
            factors.len(),
            rhs.len()
        )));
    }
    check_diagonals(factors)?;
    Ok(par::map(rhs.len(), |b| {
        let l = &factors.blocks[b];
        let mut out = [[0.0; 4]; K];
        for (o, col) in out.iter_mut().zip(rhs[b].iter()) {
            *o = forward_substitute(l, col);
        }
        out
    }))
}

/// `L⁻¹` for every block, itself lower triangular.
pub fn batched_tri_inverse(factors: &BatchedLower4) -> Result<BatchedLower4> {
    let eye = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    let rhs = vec![eye; factors.len()];
    let cols = batched_tri_solve_cols(factors, &rhs)?;
    Ok(BatchedLower4::new(
        cols.into_iter()
            .map(|c| {
                // column j of the inverse is c[j]
                let mut m = [[0.0; 4]; 4];
                for (j, col) in c.iter().enumerate() {
                    for i in j..4 {
                        m[i][j] = col[i];
                    }
                }
                pack_lower(&m)
            })
            .collect(),
    ))
}

/// `ln Σ exp(row_j)` with the max-shift identity. An all `-∞` row yields `-∞`.
#[inline]
pub fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let mut s = 0.0;
    for &v in row {
        let d = v - max;
        // exp underflows to exactly zero below this
        if d > -745.2 {
            s += d.exp();
        }
    }
    max + s.ln()
}

/// Row-wise [`logsumexp`] of a row-major `rows × cols` matrix.
pub fn logsumexp_rows(matrix: &[f64], cols: usize) -> Result<Vec<f64>> {
    if cols == 0 || matrix.len() % cols != 0 {
        return Err(Error::DimensionMismatch(format!(
            "matrix of {} entries is not a multiple of {cols} columns",
            matrix.len()
        )));
    }
    let rows = matrix.len() / cols;
    Ok(par::map_chunks(rows, par::row_chunk(), |r| {
        r.map(|n| logsumexp(&matrix[n * cols..(n + 1) * cols]))
            .collect::<Vec<_>>()
    })
    .into_iter()
    .flatten()
    .collect())
}

/// Per-component zeroth, first and centred second moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub counts: Vec<f64>,
    pub means: Vec<[f64; 4]>,
    /// Weighted scatter divided by the component count, packed.
    pub scatters: Vec<Packed4>,
    /// Components whose count fell below [`EPS_COUNT`]; their mean and
    /// scatter are left at zero.
    pub degenerate: Vec<usize>,
}

/// Weighted moments of `points` under the linear-domain responsibility
/// matrix `resp` (row-major, `points.len() × m`).
pub fn weighted_moments(points: &[[f64; 4]], resp: &[f64], m: usize) -> Result<Moments> {
    let n = points.len();
    if m == 0 || resp.len() != n * m {
        return Err(Error::DimensionMismatch(format!(
            "responsibility matrix has {} entries, expected {n}×{m}",
            resp.len()
        )));
    }
    for (row_idx, row) in resp.chunks_exact(m).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-9 || row.iter().any(|&g| !(g >= 0.0)) {
            return Err(invalid(format!(
                "responsibility row {row_idx} is not a distribution (sum {s})"
            )));
        }
    }

    let per = par::map(m, |b| {
        let mut count = 0.0;
        let mut sum = [0.0; 4];
        for (i, x) in points.iter().enumerate() {
            let g = resp[i * m + b];
            count += g;
            for d in 0..4 {
                sum[d] += g * x[d];
            }
        }
        if count < EPS_COUNT {
            return (count, [0.0; 4], [0.0; 10], true);
        }
        let mean = sum.map(|s| s / count);
        let mut sc = [0.0; 10];
        for (i, x) in points.iter().enumerate() {
            let g = resp[i * m + b];
            if g == 0.0 {
                continue;
            }
            let dx = [x[0] - mean[0], x[1] - mean[1], x[2] - mean[2], x[3] - mean[3]];
            for r in 0..4 {
                for c in 0..=r {
                    sc[tri_index(r, c)] += g * dx[r] * dx[c];
                }
            }
        }
        for v in &mut sc {
            *v /= count;
        }
        (count, mean, sc, false)
    });

    let mut out = Moments {
        counts: Vec::with_capacity(m),
        means: Vec::with_capacity(m),
        scatters: Vec::with_capacity(m),
        degenerate: Vec::new(),
    };
    for (b, (count, mean, sc, degenerate)) in per.into_iter().enumerate() {
        out.counts.push(count);
        out.means.push(mean);
        out.scatters.push(sc);
        if degenerate {
            out.degenerate.push(b);
        }
    }
    Ok(out)
}

/// Structure-of-arrays table for evaluating `ln π_b + ln N(x | μ_b, Σ_b)`
/// over all components of a mixture from precision factors `P_b = L_b⁻¹`.
#[derive(Debug, Clone)]
pub struct LogDensityTable {
    offset: Vec<f64>,
    mu: [Vec<f64>; 4],
    p: [Vec<f64>; 10],
}

impl LogDensityTable {
    /// `log_weights` may be all zero to obtain plain log-densities.
    pub fn new(
        log_weights: &[f64],
        means: &[[f64; 4]],
        precisions: &[Packed4],
        log_det_terms: &[f64],
    ) -> Self {
        let m = means.len();
        debug_assert!(log_weights.len() == m && precisions.len() == m && log_det_terms.len() == m);
        let offset = (0..m)
            .map(|b| log_weights[b] - 0.5 * 4.0 * LN_2PI + log_det_terms[b])
            .collect();
        let mu = std::array::from_fn(|d| means.iter().map(|v| v[d]).collect());
        let p = std::array::from_fn(|k| precisions.iter().map(|v| v[k]).collect());
        Self { offset, mu, p }
    }

    pub fn len(&self) -> usize {
        self.offset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offset.is_empty()
    }

    /// Additive constant of component `b`: `ln π_b − 2 ln 2π + Σ ln diag P_b`.
    #[inline]
    pub fn offset(&self, b: usize) -> f64 {
        self.offset[b]
    }

    /// Writes the weighted log-density of `x` under every component into `out`.
    #[inline]
    pub fn eval(&self, x: &[f64; 4], out: &mut [f64]) {
        let m = self.offset.len();
        let out = &mut out[..m];
        let (off, mu0, mu1, mu2, mu3) = (
            &self.offset[..m],
            &self.mu[0][..m],
            &self.mu[1][..m],
            &self.mu[2][..m],
            &self.mu[3][..m],
        );
        let [p0, p1, p2, p3, p4, p5, p6, p7, p8, p9] = &self.p;
        let (p0, p1, p2, p3, p4) = (&p0[..m], &p1[..m], &p2[..m], &p3[..m], &p4[..m]);
        let (p5, p6, p7, p8, p9) = (&p5[..m], &p6[..m], &p7[..m], &p8[..m], &p9[..m]);
        for b in 0..m {
            let d0 = x[0] - mu0[b];
            let d1 = x[1] - mu1[b];
            let d2 = x[2] - mu2[b];
            let d3 = x[3] - mu3[b];
            let y0 = p0[b] * d0;
            let y1 = p1[b] * d0 + p2[b] * d1;
            let y2 = p3[b] * d0 + p4[b] * d1 + p5[b] * d2;
            let y3 = p6[b] * d0 + p7[b] * d1 + p8[b] * d2 + p9[b] * d3;
            out[b] = off[b] - 0.5 * (y0 * y0 + y1 * y1 + y2 * y2 + y3 * y3);
        }
    }
}
