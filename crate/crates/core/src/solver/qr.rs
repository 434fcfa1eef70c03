//! Column-pivoted Householder QR that keeps only `R`.
//!
//! The solver never needs `Q`: right-hand sides enter through `Zᵀd`, which
//! is cheap to form from the sparse design, so only the triangular factor
//! and the column permutation are retained.

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Below this many flops per reflector application the update stays serial.
const PAR_THRESHOLD: usize = 1 << 15;

#[derive(Debug, Clone)]
pub(crate) struct PivotedQr {
    /// `rank × q` upper-trapezoidal factor, columns in pivoted order.
    pub r: DMatrix<f64>,
    /// `perm[j]` is the original column stored at pivoted position `j`.
    pub perm: Vec<usize>,
    pub rank: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let o = 4 * i;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn reflect(v: &[f64], tau: f64, col: &mut [f64], norm2: &mut f64, ref_norm2: &mut f64) {
    let s = tau * dot(v, col);
    for (c, vi) in col.iter_mut().zip(v) {
        *c -= s * vi;
    }
    // col[0] now belongs to R; the remaining norm shrinks by its square.
    *norm2 -= col[0] * col[0];
    if *norm2 <= 1e-8 * *ref_norm2 {
        *norm2 = dot(&col[1..], &col[1..]);
        *ref_norm2 = *norm2;
    }
}

impl PivotedQr {
    /// Factors the column-major `m × q` matrix `a` in place.
    ///
    /// Elimination stops once the largest remaining column norm falls below
    /// `rel_tol` times the first pivot; that step count is the rank.
    pub fn factor(mut a: Vec<f64>, m: usize, q: usize, rel_tol: f64) -> PivotedQr {
        assert_eq!(a.len(), m * q);
        let mut perm: Vec<usize> = (0..q).collect();
        let mut norm2: Vec<f64> = a.chunks(m.max(1)).map(|c| dot(c, c)).collect();
        norm2.truncate(q);
        let mut ref_norm2 = norm2.clone();
        let steps = m.min(q);
        let mut rank = steps;
        let mut first_pivot = 0.0f64;
        let mut v = vec![0.0; m];

        for k in 0..steps {
            let j = (k..q)
                .max_by(|&x, &y| norm2[x].total_cmp(&norm2[y]).then(y.cmp(&x)))
                .unwrap_or(k);
            if j != k {
                let (left, right) = a.split_at_mut(j * m);
                left[k * m..(k + 1) * m].swap_with_slice(&mut right[..m]);
                norm2.swap(j, k);
                ref_norm2.swap(j, k);
                perm.swap(j, k);
            }
            let col = &mut a[k * m + k..(k + 1) * m];
            let xnorm = dot(col, col).sqrt();
            if k == 0 {
                first_pivot = xnorm;
            }
            if xnorm == 0.0 || xnorm <= rel_tol * first_pivot {
                rank = k;
                break;
            }
            let alpha = if col[0] > 0.0 { -xnorm } else { xnorm };
            let len = m - k;
            v[..len].copy_from_slice(col);
            v[0] -= alpha;
            let vnorm2 = dot(&v[..len], &v[..len]);
            let tau = 2.0 / vnorm2;
            col[0] = alpha;
            col[1..].fill(0.0);

            let v = &v[..len];
            let trailing = &mut a[(k + 1) * m..];
            let norms = norm2[k + 1..].iter_mut().zip(ref_norm2[k + 1..].iter_mut());
            if len * (q - k - 1) >= PAR_THRESHOLD {
                trailing
                    .par_chunks_mut(m)
                    .zip(norms.collect::<Vec<_>>())
                    .for_each(|(c, (n2, r2))| reflect(v, tau, &mut c[k..], n2, r2));
            } else {
                trailing
                    .chunks_mut(m)
                    .zip(norms)
                    .for_each(|(c, (n2, r2))| reflect(v, tau, &mut c[k..], n2, r2));
            }
        }

        let r = DMatrix::from_fn(rank, q, |i, j| if j >= i { a[j * m + i] } else { 0.0 });
        PivotedQr { r, perm, rank }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col_major(x: &DMatrix<f64>) -> Vec<f64> {
        x.as_slice().to_vec()
    }

    #[test]
    fn reproduces_gram_matrix() {
        let x = DMatrix::from_fn(7, 4, |i, j| {
            ((i * 3 + j * 5) % 7) as f64 - 2.5 + (i == j) as u8 as f64
        });
        let qr = PivotedQr::factor(col_major(&x), 7, 4, 1e-12);
        assert_eq!(qr.rank, 4);
        // (XP)ᵀ(XP) = RᵀR
        let xp = DMatrix::from_fn(7, 4, |i, j| x[(i, qr.perm[j])]);
        let diff = xp.transpose() * &xp - qr.r.transpose() * &qr.r;
        assert!(diff.amax() < 1e-10, "{diff}");
        for i in 1..4 {
            assert!(qr.r[(i, i)].abs() <= qr.r[(i - 1, i - 1)].abs() + 1e-12);
        }
    }

    #[test]
    fn detects_rank_deficiency() {
        // third column = first + second
        let x = DMatrix::from_fn(6, 3, |i, j| match j {
            0 => i as f64,
            1 => (i * i) as f64 - 3.0,
            _ => i as f64 + (i * i) as f64 - 3.0,
        });
        let qr = PivotedQr::factor(col_major(&x), 6, 3, 1e-10);
        assert_eq!(qr.rank, 2);
    }

    #[test]
    fn zero_matrix_has_rank_zero() {
        let qr = PivotedQr::factor(vec![0.0; 6], 3, 2, 1e-10);
        assert_eq!(qr.rank, 0);
    }
}
