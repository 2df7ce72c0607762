//! Dense eigensolver for small complex matrices.
//!
//! The Hamiltonians this crate cares about are tiny (N ≤ ~6) but must be
//! diagonalized at arbitrary complex times, where they are *not* Hermitian and
//! often sit near a spectral degeneracy (that is the whole point: turning
//! points are exactly the complex times where two eigenvalues collide). LAPACK
//! bindings buy nothing at this size, so we do it directly:
//!
//! 1. characteristic polynomial by the Faddeev–LeVerrier recurrence (exact in
//!    traces, O(N^4) — irrelevant at this size);
//! 2. all roots simultaneously by Durand–Kerner iteration, optionally seeded
//!    with the eigenvalues from a neighbouring time for fast continuation;
//! 3. right/left eigenvectors from full-pivot null-space extraction of
//!    (H - λI) and its transpose, biorthonormalized so that l_j · r_k = δ_jk.

use num_complex::Complex64 as C64;

use crate::linalg::{self, CMat};

/// Coefficients of det(λI - H), ascending in λ, monic (last entry 1).
pub(crate) fn char_poly(h: &CMat) -> Vec<C64> {
    let n = h.n;
    let one = C64::new(1.0, 0.0);
    let mut coeffs = vec![C64::new(0.0, 0.0); n + 1];
    coeffs[n] = one;
    let mut m = CMat::identity(n); // M_1
    for k in 1..=n {
        let hm = h.mul(&m);
        let c = -hm.trace() / (k as f64);
        coeffs[n - k] = c;
        if k < n {
            m = hm;
            for i in 0..n {
                m[(i, i)] += c;
            }
        }
    }
    coeffs
}

fn poly_eval(coeffs: &[C64], z: C64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * z + c;
    }
    acc
}

/// All roots of a monic polynomial by Durand–Kerner. `seeds`, when given,
/// must have length deg and reasonably separate the roots; they are nudged if
/// coincident. Convergence is certified by the simultaneous-step norm.
pub(crate) fn poly_roots(coeffs: &[C64], seeds: Option<&[C64]>) -> Vec<C64> {
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return vec![];
    }
    let mut z: Vec<C64> = match seeds {
        Some(s) if s.len() == deg => {
            let mut z: Vec<C64> = s.to_vec();
            // split exactly coincident seeds
            for i in 0..deg {
                for j in 0..i {
                    if (z[i] - z[j]).norm() < 1e-12 {
                        z[i] += C64::new(1e-6, 2e-6) * (i as f64 + 1.0);
                    }
                }
            }
            z
        }
        _ => {
            // Cauchy-type bound for the root radius, spread seeds on a spiral
            let r = 1.0 + coeffs[..deg].iter().map(|c| c.norm()).fold(0.0, f64::max);
            let base = C64::new(0.4, 0.9);
            let mut acc = C64::new(1.0, 0.0);
            (0..deg)
                .map(|_| {
                    acc *= base;
                    acc * r
                })
                .collect()
        }
    };

    for _ in 0..400 {
        let mut max_step = 0.0f64;
        for i in 0..deg {
            let mut denom = C64::new(1.0, 0.0);
            for j in 0..deg {
                if j != i {
                    denom *= z[i] - z[j];
                }
            }
            if denom.norm() == 0.0 {
                z[i] += C64::new(1e-9, 1e-9);
                continue;
            }
            let step = poly_eval(coeffs, z[i]) / denom;
            z[i] -= step;
            let rel = step.norm() / (1.0 + z[i].norm());
            if rel > max_step {
                max_step = rel;
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
    z
}

pub(crate) struct EigSystem {
    /// Eigenvalues, in the order produced (callers re-match/sort as needed).
    pub values: Vec<C64>,
    /// Right eigenvectors (columns), unit Euclidean norm before gauge scaling.
    pub right: Vec<Vec<C64>>,
    /// Left eigenvectors (rows), scaled so that left[j] · right[j] = 1.
    pub left: Vec<Vec<C64>>,
}

#[derive(Debug, thiserror::Error)]
pub(crate) enum EigError {
    #[error("eigenvector extraction failed for eigenvalue {0}")]
    NullSpace(C64),
    #[error("near-defective eigenpair at eigenvalue {value} (biorthogonality {defect:.3e})")]
    Defective { value: C64, defect: f64 },
}

/// Full eigen-decomposition. `seeds` carries eigenvalues of a nearby matrix
/// for continuation. Matrices are treated as general complex; the symmetric
/// case (real-coefficient Hamiltonians at complex time) shares the
/// right-vector computation for the left vectors.
pub(crate) fn eig_system(h: &CMat, seeds: Option<&[C64]>) -> Result<EigSystem, EigError> {
    let n = h.n;
    let coeffs = char_poly(h);
    let values = poly_roots(&coeffs, seeds);

    let scale = h.frobenius().max(1e-300);
    let mut sym_defect = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            sym_defect = sym_defect.max((h[(i, j)] - h[(j, i)]).norm());
        }
    }
    let symmetric = sym_defect <= 1e-13 * scale;
    let ht = if symmetric { None } else { Some(h.transpose()) };

    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    for &lam in &values {
        let shifted = h.sub_scaled_identity(lam);
        let r = linalg::null_vector(&shifted).ok_or(EigError::NullSpace(lam))?;
        let l = match &ht {
            None => r.clone(),
            Some(ht) => {
                let shifted_t = ht.sub_scaled_identity(lam);
                linalg::null_vector(&shifted_t).ok_or(EigError::NullSpace(lam))?
            }
        };
        let s = linalg::dot_plain(&l, &r);
        // For a simple eigenpair of a diagonalizable matrix |l·r| is O(1);
        // it collapses only at genuine (near-)defectiveness.
        if s.norm() < 1e-8 {
            return Err(EigError::Defective { value: lam, defect: s.norm() });
        }
        let l_scaled: Vec<C64> = l.iter().map(|v| v / s).collect();
        right.push(r);
        left.push(l_scaled);
    }
    Ok(EigSystem { values, right, left })
}
