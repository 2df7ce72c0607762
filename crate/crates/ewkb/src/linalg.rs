//! Minimal dense complex matrix support for the small (N ≤ ~6) systems this
//! crate deals with. Hand-rolled on purpose: the eigenproblems downstream need
//! tight control over pivoting and near-null-space extraction close to
//! spectral degeneracies, and the matrices are tiny.

use num_complex::Complex64 as C64;

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct CMat {
    pub n: usize,
    pub a: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize) -> Self {
        CMat { n, a: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "ragged rows");
            for (j, v) in r.iter().enumerate() {
                m[(i, j)] = *v;
            }
        }
        m
    }

    pub fn mul(&self, other: &CMat) -> CMat {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let aik = self[(i, k)];
                if aik.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += aik * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(v.len(), n);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                s += self[(i, j)] * v[j];
            }
            out[i] = s;
        }
        out
    }

    /// v^T · M (no conjugation); used for left eigenvectors stored as rows.
    pub fn vec_mul(&self, v: &[C64]) -> Vec<C64> {
        let n = self.n;
        assert_eq!(v.len(), n);
        let mut out = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for i in 0..n {
                s += v[i] * self[(i, j)];
            }
            out[j] = s;
        }
        out
    }

    pub fn transpose(&self) -> CMat {
        let n = self.n;
        let mut out = CMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    /// Maximum Hermitian-asymmetry |a_ij - conj(a_ji)| over all entries.
    #[cfg(test)]
    pub fn hermiticity_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                d = d.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        d
    }

    /// self - z·I
    pub fn sub_scaled_identity(&self, z: C64) -> CMat {
        let mut m = self.clone();
        for i in 0..self.n {
            m[(i, i)] -= z;
        }
        m
    }

    pub fn frobenius(&self) -> f64 {
        self.a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.a[i * self.n + j]
    }
}

/// Determinant by LU with partial pivoting.
pub(crate) fn det(m: &CMat) -> C64 {
    let n = m.n;
    let mut a = m.clone();
    let mut d = C64::new(1.0, 0.0);
    for k in 0..n {
        // pivot
        let mut p = k;
        let mut best = a[(k, k)].norm();
        for i in (k + 1)..n {
            let v = a[(i, k)].norm();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if p != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
            d = -d;
        }
        d *= a[(k, k)];
        for i in (k + 1)..n {
            let f = a[(i, k)] / a[(k, k)];
            for j in k..n {
                let akj = a[(k, j)];
                a[(i, j)] -= f * akj;
            }
        }
    }
    d
}

/// Approximate null vector of a near-singular matrix, via Gaussian
/// elimination with full pivoting. Intended for matrices of numerical rank
/// n-1 (e.g. H - λI at a simple eigenvalue); returns a unit-norm vector.
pub(crate) fn null_vector(m: &CMat) -> Option<Vec<C64>> {
    let n = m.n;
    let mut a = m.clone();
    let mut col_perm: Vec<usize> = (0..n).collect();
    let mut rank = 0usize;

    for k in 0..n {
        // full pivot over the remaining block
        let mut pi = k;
        let mut pj = k;
        let mut best = 0.0f64;
        for i in k..n {
            for j in k..n {
                let v = a[(i, j)].norm();
                if v > best {
                    best = v;
                    pi = i;
                    pj = j;
                }
            }
        }
        // The last pivot of a rank-(n-1) matrix is ~0; everything below the
        // noise floor of the leading pivot terminates elimination.
        if k > 0 {
            let lead = a[(0, 0)].norm();
            if best <= lead * 1e-13 {
                break;
            }
        } else if best == 0.0 {
            break;
        }
        if pi != k {
            for j in 0..n {
                let tmp = a[(k, j)];
                a[(k, j)] = a[(pi, j)];
                a[(pi, j)] = tmp;
            }
        }
        if pj != k {
            for i in 0..n {
                let tmp = a[(i, k)];
                a[(i, k)] = a[(i, pj)];
                a[(i, pj)] = tmp;
            }
            col_perm.swap(k, pj);
        }
        for i in (k + 1)..n {
            let f = a[(i, k)] / a[(k, k)];
            for j in k..n {
                let akj = a[(k, j)];
                a[(i, j)] -= f * akj;
            }
        }
        rank += 1;
    }

    if rank == n {
        // Numerically nonsingular; treat the weakest pivot direction as null.
        rank = n - 1;
    }

    // Back-substitute with the free variable (permuted column `rank`) set to 1.
    let mut x = vec![C64::new(0.0, 0.0); n];
    x[rank] = C64::new(1.0, 0.0);
    for k in (0..rank).rev() {
        let mut s = C64::new(0.0, 0.0);
        for j in (k + 1)..n {
            s += a[(k, j)] * x[j];
        }
        x[k] = -s / a[(k, k)];
    }

    // Undo the column permutation.
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (k, &orig) in col_perm.iter().enumerate() {
        out[orig] = x[k];
    }
    let nrm = out.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    if nrm == 0.0 || !nrm.is_finite() {
        return None;
    }
    for v in &mut out {
        *v /= nrm;
    }
    Some(out)
}

pub(crate) fn dot_conj(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn dot_plain(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[C64]) -> f64 {
    a.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn det_small() {
        let m = CMat::from_rows(&[
            vec![c(1.0, 0.0), c(2.0, 0.0)],
            vec![c(3.0, 0.0), c(4.0, 0.0)],
        ]);
        let d = det(&m);
        assert!((d - c(-2.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn det_complex_3x3() {
        // det of a triangular-similar matrix equals product of eigenvalues:
        // build A = P D P^{-1} with P unimodular integer shear, D diag(1, i, 2-i)
        let d1 = c(1.0, 0.0);
        let d2 = c(0.0, 1.0);
        let d3 = c(2.0, -1.0);
        let p = CMat::from_rows(&[
            vec![c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        ]);
        let pinv = CMat::from_rows(&[
            vec![c(1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        ]);
        let mut dm = CMat::zeros(3);
        dm[(0, 0)] = d1;
        dm[(1, 1)] = d2;
        dm[(2, 2)] = d3;
        let a = p.mul(&dm).mul(&pinv);
        let expect = d1 * d2 * d3;
        assert!((det(&a) - expect).norm() < 1e-12);
    }

    #[test]
    fn null_vector_rank_deficient() {
        // [[1, 1], [1, 1]] has null vector (1, -1)/sqrt(2)
        let m = CMat::from_rows(&[
            vec![c(1.0, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(1.0, 0.0)],
        ]);
        let v = null_vector(&m).unwrap();
        let image = m.mul_vec(&v);
        assert!(norm(&image) < 1e-12);
        assert!((norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn null_vector_near_singular() {
        // (H - λI) for H = σ_x, λ = 1 + 1e-13: null vector ≈ (1,1)/√2
        let eps = 1e-13;
        let m = CMat::from_rows(&[
            vec![c(-1.0 - eps, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(-1.0 - eps, 0.0)],
        ]);
        let v = null_vector(&m).unwrap();
        let r = (v[0] / v[1] - c(1.0, 0.0)).norm();
        assert!(r < 1e-10, "ratio deviation {r}");
    }

    #[test]
    fn mul_and_transpose() {
        let m = CMat::from_rows(&[
            vec![c(0.0, 1.0), c(1.0, 0.0)],
            vec![c(2.0, 0.0), c(0.0, -1.0)],
        ]);
        let i = CMat::identity(2);
        assert_eq!(m.mul(&i), m);
        assert_eq!(m.transpose().transpose(), m);
        let v = vec![c(1.0, 0.0), c(0.0, 1.0)];
        let mv = m.mul_vec(&v);
        assert!((mv[0] - c(0.0, 2.0)).norm() < 1e-15);
        assert!((mv[1] - c(3.0, 0.0)).norm() < 1e-15);
    }
}
