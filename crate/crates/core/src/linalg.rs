//! Small dense linear algebra: one-sided Jacobi SVD and a deflated subspace
//! iteration for the second singular value of large normalized joint matrices.

/// Singular value decomposition `A = sum_k s_k u_k v_k^T` with `s` descending.
#[derive(Debug, Clone)]
pub struct Svd {
    pub singular_values: Vec<f64>,
    /// Left singular vectors, each of length `rows`.
    pub left: Vec<Vec<f64>>,
    /// Right singular vectors, each of length `cols`.
    pub right: Vec<Vec<f64>>,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 100;
const OFF_DIAGONAL_TOLERANCE: f64 = 1e-12;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// One-sided (Hestenes) Jacobi SVD of a row-major `rows x cols` matrix.
pub fn jacobi_svd(a: &[f64], rows: usize, cols: usize) -> Svd {
    assert_eq!(
        a.len(),
        rows * cols,
        "matrix buffer does not match its shape"
    );
    assert!(rows > 0 && cols > 0, "empty matrix");
    if rows < cols {
        let mut t = vec![0.0; rows * cols];
        for i in 0..rows {
            for j in 0..cols {
                t[j * rows + i] = a[i * cols + j];
            }
        }
        let s = jacobi_svd(&t, cols, rows);
        return Svd {
            singular_values: s.singular_values,
            left: s.right,
            right: s.left,
            sweeps: s.sweeps,
        };
    }

    // Columns of A, orthogonalized in place; V accumulates the rotations.
    let mut work: Vec<Vec<f64>> = (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();
    let scale: f64 = work.iter().map(|c| dot(c, c)).sum();

    let mut sweeps = 0;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut off = 0.0;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = dot(&work[i], &work[i]);
                let beta = dot(&work[j], &work[j]);
                let gamma = dot(&work[i], &work[j]);
                off += gamma * gamma;
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut work, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if off.sqrt() <= OFF_DIAGONAL_TOLERANCE * scale.max(f64::MIN_POSITIVE) {
            break;
        }
    }

    let mut triples: Vec<(f64, Vec<f64>, Vec<f64>)> = work
        .into_iter()
        .zip(v)
        .map(|(col, right)| {
            let s = norm(&col);
            let left = if s > 0.0 {
                col.iter().map(|x| x / s).collect()
            } else {
                vec![0.0; rows]
            };
            (s, left, right)
        })
        .collect();
    triples.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut out = Svd {
        singular_values: Vec::with_capacity(cols),
        left: Vec::new(),
        right: Vec::new(),
        sweeps,
    };
    for (s, l, r) in triples {
        out.singular_values.push(s);
        out.left.push(l);
        out.right.push(r);
    }
    out
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (a, b) = (&mut lo[i], &mut hi[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Largest singular value of `Q - u1 v1^T`, i.e. the second singular value of a
/// matrix whose top singular pair `(1, u1, v1)` is known. Block subspace
/// iteration with a Rayleigh-Ritz estimate; suited to matrices too large for
/// repeated Jacobi sweeps.
pub fn deflated_top_singular_value(
    q: &[f64],
    rows: usize,
    cols: usize,
    u1: &[f64],
    v1: &[f64],
) -> f64 {
    const MAX_ITERS: usize = 5000;
    const TOL: f64 = 1e-15;
    let block = 4.min(cols.saturating_sub(1)).max(1);

    let apply = |x: &[f64], out: &mut [f64]| {
        // out = Q x - u1 (v1 . x)
        let c = dot(v1, x);
        for i in 0..rows {
            out[i] = dot(&q[i * cols..(i + 1) * cols], x) - u1[i] * c;
        }
    };
    let apply_t = |y: &[f64], out: &mut [f64]| {
        // out = Q^T y - v1 (u1 . y)
        let c = dot(u1, y);
        out.iter_mut().zip(v1).for_each(|(o, v)| *o = -v * c);
        for i in 0..rows {
            let yi = y[i];
            if yi != 0.0 {
                for (o, qij) in out.iter_mut().zip(&q[i * cols..(i + 1) * cols]) {
                    *o += qij * yi;
                }
            }
        }
    };

    // Deterministic, generic starting block.
    let mut basis: Vec<Vec<f64>> = (0..block)
        .map(|b| {
            (0..cols)
                .map(|i| (((i + 1) * (b + 3)) as f64 * 0.618_033_988_75).fract() - 0.5)
                .collect()
        })
        .collect();
    orthonormalize(&mut basis);

    let mut images = vec![vec![0.0; rows]; block];
    let mut prev = f64::NEG_INFINITY;
    let mut stable = 0;
    let mut estimate = 0.0;
    for _ in 0..MAX_ITERS {
        for (b, img) in basis.iter().zip(images.iter_mut()) {
            apply(b, img);
        }
        // Rayleigh-Ritz: largest eigenvalue of the Gram matrix of the images.
        let mut gram = vec![0.0; block * block];
        for i in 0..block {
            for j in 0..block {
                gram[i * block + j] = dot(&images[i], &images[j]);
            }
        }
        estimate = jacobi_svd(&gram, block, block).singular_values[0];
        if (estimate - prev).abs() <= TOL * estimate.max(1e-300) {
            stable += 1;
            if stable >= 3 {
                break;
            }
        } else {
            stable = 0;
        }
        prev = estimate;
        for (img, b) in images.iter().zip(basis.iter_mut()) {
            apply_t(img, b);
        }
        orthonormalize(&mut basis);
    }
    estimate.max(0.0).sqrt()
}

/// Modified Gram-Schmidt; vectors that collapse are replaced by a fresh direction.
fn orthonormalize(vs: &mut [Vec<f64>]) {
    let n = vs.first().map_or(0, Vec::len);
    for k in 0..vs.len() {
        for attempt in 0..=n {
            let (done, rest) = vs.split_at_mut(k);
            let v = &mut rest[0];
            for _ in 0..2 {
                for u in done.iter() {
                    let c = dot(u, v);
                    v.iter_mut().zip(u).for_each(|(x, y)| *x -= c * y);
                }
            }
            let nv = norm(v);
            if nv > 1e-300 {
                v.iter_mut().for_each(|x| *x /= nv);
                break;
            }
            v.iter_mut().for_each(|x| *x = 0.0);
            v[(k + attempt) % n] = 1.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn reconstruct(s: &Svd, rows: usize, cols: usize) -> Vec<f64> {
        let mut a = vec![0.0; rows * cols];
        for k in 0..s.singular_values.len() {
            for i in 0..rows {
                for j in 0..cols {
                    a[i * cols + j] += s.singular_values[k] * s.left[k][i] * s.right[k][j];
                }
            }
        }
        a
    }

    #[test]
    fn diagonal_matrix() {
        let a = [3.0, 0.0, 0.0, 0.0, -5.0, 0.0];
        let s = jacobi_svd(&a, 2, 3);
        assert_abs_diff_eq!(s.singular_values[0], 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(s.singular_values[1], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn known_two_by_two() {
        // [[2,0],[0,1]] rotated: singular values are invariant.
        let (c, s) = (0.6_f64, 0.8_f64);
        let a = [2.0 * c, -s, 2.0 * s, c];
        let svd = jacobi_svd(&a, 2, 2);
        assert_abs_diff_eq!(svd.singular_values[0], 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(svd.singular_values[1], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rank_deficient() {
        let a = [1.0, 2.0, 2.0, 4.0, 3.0, 6.0];
        let s = jacobi_svd(&a, 3, 2);
        assert_abs_diff_eq!(s.singular_values[0], (70.0_f64).sqrt(), epsilon = 1e-13);
        assert!(s.singular_values[1] < 1e-14);
    }

    proptest! {
        #[test]
        fn reconstructs_and_orthonormal(rows in 1usize..7, cols in 1usize..7, seed in any::<u64>()) {
            let mut state = seed | 1;
            let a: Vec<f64> = (0..rows * cols).map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 2001) as f64 / 1000.0 - 1.0
            }).collect();
            let s = jacobi_svd(&a, rows, cols);
            let back = reconstruct(&s, rows, cols);
            for (x, y) in a.iter().zip(&back) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            for w in s.singular_values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
            for i in 0..s.right.len() {
                for j in 0..s.right.len() {
                    let d = dot(&s.right[i], &s.right[j]);
                    let e = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((d - e).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn deflated_iteration_matches_jacobi() {
        // Normalized joint of a 12x9 table; second singular value via both routes.
        let (rows, cols) = (12, 9);
        let mut p: Vec<f64> = (0..rows * cols)
            .map(|k| 1.0 + ((k * 7919) % 13) as f64 + if k % (cols + 1) == 0 { 20.0 } else { 0.0 })
            .collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= total);
        let pu: Vec<f64> = (0..rows)
            .map(|i| p[i * cols..(i + 1) * cols].iter().sum())
            .collect();
        let pv: Vec<f64> = (0..cols)
            .map(|j| (0..rows).map(|i| p[i * cols + j]).sum())
            .collect();
        let q: Vec<f64> = (0..rows * cols)
            .map(|k| p[k] / (pu[k / cols] * pv[k % cols]).sqrt())
            .collect();
        let u1: Vec<f64> = pu.iter().map(|x| x.sqrt()).collect();
        let v1: Vec<f64> = pv.iter().map(|x| x.sqrt()).collect();
        let exact = jacobi_svd(&q, rows, cols).singular_values[1];
        let iter = deflated_top_singular_value(&q, rows, cols, &u1, &v1);
        assert_abs_diff_eq!(exact, iter, epsilon = 1e-10);
    }
}
