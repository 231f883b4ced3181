//! Dense linear algebra for the small per-node matrices (dim <= 6).
//!
//! Everything here works on row-major slices of length n*n and avoids heap
//! allocation so it can sit inside per-node loops.

pub const MAXN: usize = 6;

/// LU factorization with partial pivoting; returns the determinant and writes
/// the inverse into `inv` (row-major, length n*n). A zero (or subnormal)
/// pivot yields determinant 0 and an unspecified inverse.
pub fn det_inverse(a: &[f64], n: usize, inv: &mut [f64]) -> f64 {
    debug_assert!(n <= MAXN);
    let mut m = [0.0f64; MAXN * MAXN];
    m[..n * n].copy_from_slice(&a[..n * n]);
    for i in 0..n {
        for j in 0..n {
            inv[i * n + j] = if i == j { 1.0 } else { 0.0 };
        }
    }
    let mut det = 1.0f64;
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in 0..n {
                m.swap(piv * n + j, col * n + j);
                inv.swap(piv * n + j, col * n + j);
            }
            det = -det;
        }
        let d = m[col * n + col];
        det *= d;
        let dinv = 1.0 / d;
        for j in 0..n {
            m[col * n + j] *= dinv;
            inv[col * n + j] *= dinv;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[r * n + col];
            if f != 0.0 {
                for j in 0..n {
                    m[r * n + j] -= f * m[col * n + j];
                    inv[r * n + j] -= f * inv[col * n + j];
                }
            }
        }
    }
    det
}

/// Determinant only (LU with partial pivoting).
pub fn det(a: &[f64], n: usize) -> f64 {
    debug_assert!(n <= MAXN);
    let mut m = [0.0f64; MAXN * MAXN];
    m[..n * n].copy_from_slice(&a[..n * n]);
    let mut d = 1.0f64;
    for col in 0..n {
        let mut piv = col;
        let mut best = m[col * n + col].abs();
        for r in col + 1..n {
            let v = m[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return 0.0;
        }
        if piv != col {
            for j in col..n {
                m.swap(piv * n + j, col * n + j);
            }
            d = -d;
        }
        let p = m[col * n + col];
        d *= p;
        for r in col + 1..n {
            let f = m[r * n + col] / p;
            if f != 0.0 {
                for j in col..n {
                    m[r * n + j] -= f * m[col * n + j];
                }
            }
        }
    }
    d
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, written to
/// `out[..n]` in ascending order.
pub fn sym_eigenvalues(a: &[f64], n: usize, out: &mut [f64]) {
    debug_assert!(n <= MAXN);
    let mut m = [0.0f64; MAXN * MAXN];
    m[..n * n].copy_from_slice(&a[..n * n]);
    // Symmetrize defensively; inputs are symmetric by construction.
    for i in 0..n {
        for j in i + 1..n {
            let s = 0.5 * (m[i * n + j] + m[j * n + i]);
            m[i * n + j] = s;
            m[j * n + i] = s;
        }
    }
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += m[i * n + j] * m[i * n + j];
            }
        }
        if off <= 1e-30 * (1.0 + frobenius_sq(&m, n)) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = 0.5 * (aqq - app) / apq;
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    for i in 0..n {
        out[i] = m[i * n + i];
    }
    out[..n].sort_by(|x, y| x.partial_cmp(y).unwrap());
}

fn frobenius_sq(m: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n * n {
        s += m[i] * m[i];
    }
    s
}

/// Counts of (negative, positive) eigenvalues of a symmetric matrix.
pub fn inertia(a: &[f64], n: usize) -> (usize, usize) {
    let mut ev = [0.0f64; MAXN];
    sym_eigenvalues(a, n, &mut ev);
    let scale = ev[..n].iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let tol = 1e-14 * scale.max(1e-300);
    let neg = ev[..n].iter().filter(|&&v| v < -tol).count();
    let pos = ev[..n].iter().filter(|&&v| v > tol).count();
    (neg, pos)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverse_of_diagonal() {
        let a = [2.0, 0.0, 0.0, 0.0, 4.0, 0.0, 0.0, 0.0, 8.0];
        let mut inv = [0.0; 9];
        let d = det_inverse(&a, 3, &mut inv);
        assert_relative_eq!(d, 64.0, max_relative = 1e-14);
        assert_relative_eq!(inv[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(inv[4], 0.25, max_relative = 1e-14);
        assert_relative_eq!(inv[8], 0.125, max_relative = 1e-14);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = [
            4.0, 1.0, 0.2, -0.3, 1.0, 3.0, 0.5, 0.1, 0.2, 0.5, 5.0, -0.7, -0.3, 0.1, -0.7, 2.0,
        ];
        let mut inv = [0.0; 16];
        let d = det_inverse(&a, 4, &mut inv);
        assert!(d.abs() > 1.0);
        for i in 0..4 {
            for j in 0..4 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += a[i * 4 + k] * inv[k * 4 + j];
                }
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((s - expect).abs() < 1e-13, "entry ({i},{j}) = {s}");
            }
        }
        assert_relative_eq!(det(&a, 4), d, max_relative = 1e-12);
    }

    #[test]
    fn eigenvalues_and_inertia_of_indefinite_matrix() {
        // diag(-1, 2, 5) conjugated by a rotation keeps its spectrum.
        let c = 0.8f64;
        let s = 0.6f64;
        // R * diag(-1,2,5) * R^T with R a rotation in the (0,1) plane.
        let d = [-1.0, 2.0, 5.0];
        let mut a = [0.0; 9];
        let r = [c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += r[i * 3 + k] * d[k] * r[j * 3 + k];
                }
                a[i * 3 + j] = acc;
            }
        }
        let mut ev = [0.0; MAXN];
        sym_eigenvalues(&a, 3, &mut ev);
        assert_relative_eq!(ev[0], -1.0, max_relative = 1e-12);
        assert_relative_eq!(ev[1], 2.0, max_relative = 1e-12);
        assert_relative_eq!(ev[2], 5.0, max_relative = 1e-12);
        assert_eq!(inertia(&a, 3), (1, 2));
    }
}
