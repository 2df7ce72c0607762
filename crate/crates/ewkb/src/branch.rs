//! Eigenvalue/eigenvector continuation along paths in complex time.
//!
//! Off the real axis the spectrum of H(t) is a multivalued function of `t`:
//! each turning point is a square-root branch point where two eigenvalues
//! collide. Branch identity is therefore path-dependent and must be carried
//! explicitly: a [`BranchPath`] walks a polyline from a real anchor, matching
//! eigenvalues and eigenvectors between adjacent samples by continuity.
//!
//! Frames are biorthonormal (`l_j · r_k = δ_jk`, plain dot without
//! conjugation), which reduces to Hermitian orthonormality on the real axis
//! with `epsilon = 0`. The gauge along a path is fixed by discrete parallel
//! transport in the biorthogonal sense: each step rescales the new vectors so
//! that `l_prev · r_new = l_new · r_prev` (geometric-mean normalization),
//! which is the discretization of the condition `l_j · ṙ_j = 0`. Two
//! consequences used throughout the crate:
//!
//! * the diagonal couplings `g_jj = i⟨Ė_j|E_j⟩` vanish identically in this
//!   gauge, so WKB exponents contain only the `η·E_j` part;
//! * the gauge depends analytically on `t`, so the off-diagonal couplings
//!   have honest simple poles at turning points and their residues (the
//!   connection coefficients) are well defined.
//!
//! At the anchor (a real, gapped time) labels are fixed by descending real
//! energy and each vector's phase is rotated so its largest-magnitude
//! component is real positive — a deterministic convention that reproduces
//! the reference sign `g₁₂(0) = i/2` for the linear two-level sweep anchored
//! at or left of the crossing. Level indices are 0-based and ordered by
//! descending energy at the anchor (level 0 is the topmost).

use num_complex::Complex64 as C64;

use crate::analytic::PathPolyline;
use crate::eig;
use crate::linalg::{dot_conj, dot_plain, norm};
use crate::model::ModelSpec;

#[derive(Debug, thiserror::Error)]
pub enum BranchError {
    #[error("level index {index} out of range for a {dim}-level model")]
    BadLevel { index: usize, dim: usize },
    #[error("anchor time must be real, got {0}")]
    AnchorNotReal(C64),
    #[error("spectrum degenerate at the anchor t = {t}: levels {i} and {j} gap {gap:.3e}")]
    AnchorDegenerate { t: f64, i: usize, j: usize, gap: f64 },
    #[error("path passes within tolerance of a degeneracy of levels {i} and {j} near t = {t} (gap {gap:.3e}); route around the turning point instead")]
    Degenerate { t: C64, i: usize, j: usize, gap: f64 },
    #[error("continuation step size underflowed near t = {t}; closest pair {i},{j} with gap {gap:.3e}")]
    StepUnderflow { t: C64, i: usize, j: usize, gap: f64 },
    #[error("eigendecomposition failed at t = {t}: {reason}")]
    Eigen { t: C64, reason: String },
    #[error("t = {0} does not lie on the branch path")]
    NotOnPath(C64),
    #[error("coupling requested too near a turning point at t = {t} (gap {gap:.3e})")]
    TooNearTurningPoint { t: C64, gap: f64 },
    #[error("anchor frame failed orthonormality check (defect {0:.3e})")]
    AnchorNotOrthonormal(f64),
}

type BResult<T> = Result<T, BranchError>;

/// Instantaneous spectral frame at one complex time, in the anchored gauge.
///
/// `right[i]` is the column eigenvector of level `i`, `left[i]` the matching
/// row eigenvector with `left[i] · right[j] = δ_ij` (plain dot). On the real
/// axis with `epsilon = 0` these are Hermitian conjugates of each other and
/// the right vectors are orthonormal.
#[derive(Clone, Debug)]
pub struct EigenFrame {
    pub t: C64,
    /// Energies ordered by branch label (descending real part at the anchor).
    pub energies: Vec<C64>,
    pub right: Vec<Vec<C64>>,
    pub left: Vec<Vec<C64>>,
    /// Real anchor time that fixed labels and gauge.
    pub anchor: f64,
}

impl EigenFrame {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// E_i − E_j under this frame's labeling.
    pub fn gap(&self, i: usize, j: usize) -> C64 {
        self.energies[i] - self.energies[j]
    }

    /// Smallest pairwise energy distance: (i, j, |E_i − E_j|).
    pub fn min_gap(&self) -> (usize, usize, f64) {
        let n = self.dim();
        let mut best = (0, 1, f64::INFINITY);
        for i in 0..n {
            for j in (i + 1)..n {
                let g = self.gap(i, j).norm();
                if g < best.2 {
                    best = (i, j, g);
                }
            }
        }
        best
    }

    /// Max deviation of the right vectors from Hermitian orthonormality.
    /// Meaningful on the real axis with `epsilon = 0`.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let g = dot_conj(&self.right[i], &self.right[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g - C64::new(target, 0.0)).norm());
            }
        }
        worst
    }

    fn energy_scale(&self) -> f64 {
        1.0 + self.energies.iter().map(|e| e.norm()).fold(0.0f64, f64::max)
    }
}

/// A path in complex time together with the dense chain of continued frames
/// along it. Frames at intermediate points are reconstructed by a short
/// transport hop from the nearest stored sample.
#[derive(Clone, Debug)]
pub struct BranchPath {
    path: PathPolyline,
    samples: Vec<EigenFrame>,
}

impl BranchPath {
    pub fn path(&self) -> &PathPolyline {
        &self.path
    }

    pub fn samples(&self) -> &[EigenFrame] {
        &self.samples
    }

    pub fn start(&self) -> &EigenFrame {
        &self.samples[0]
    }

    pub fn end(&self) -> &EigenFrame {
        self.samples.last().expect("branch path has at least the anchor sample")
    }

    /// Frame at a point on the path (within tolerance), by transport from the
    /// nearest stored sample.
    pub fn frame_at(&self, model: &ModelSpec, t: C64) -> BResult<EigenFrame> {
        let tol = 1e-8 * (1.0 + t.norm());
        if self.distance_to_path(t) > tol {
            return Err(BranchError::NotOnPath(t));
        }
        let nearest = self
            .samples
            .iter()
            .min_by(|a, b| {
                let da = (a.t - t).norm();
                let db = (b.t - t).norm();
                da.partial_cmp(&db).unwrap()
            })
            .expect("non-empty samples");
        continue_to(model, nearest, t)
    }

    fn distance_to_path(&self, t: C64) -> f64 {
        self.path
            .segments()
            .into_iter()
            .map(|(a, b)| point_segment_distance(t, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn point_segment_distance(p: C64, a: C64, b: C64) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_sqr();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    // parameter of the orthogonal projection, clamped to the segment
    let s = ((p - a).re * ab.re + (p - a).im * ab.im) / len2;
    let s = s.clamp(0.0, 1.0);
    (p - (a + ab * s)).norm()
}

/// Hermitian-orthonormal frame at a real, gapped time; labels descending by
/// real energy, phases fixed by the largest-component convention.
pub fn anchor_frame(model: &ModelSpec, t0: f64) -> BResult<EigenFrame> {
    let t = C64::new(t0, 0.0);
    let h = model.h_mat(t);
    let sys = eig::eig_system(&h, None)
        .map_err(|e| BranchError::Eigen { t, reason: e.to_string() })?;
    let n = model.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sys.values[b].re.partial_cmp(&sys.values[a].re).unwrap());

    let mut energies = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    for &k in &order {
        let mut r = sys.right[k].clone();
        let mut l = sys.left[k].clone();
        // Deterministic phase: largest-magnitude component (lowest index on
        // ties) rotated to be real positive; l rescaled to keep l·r = 1.
        let mut big = 0usize;
        for (idx, c) in r.iter().enumerate() {
            if c.norm() > r[big].norm() + 1e-15 {
                big = idx;
            }
        }
        let c = r[big];
        if c.norm() > 0.0 {
            let phase = c / c.norm();
            for x in r.iter_mut() {
                *x /= phase;
            }
            for x in l.iter_mut() {
                *x *= phase;
            }
        }
        energies.push(sys.values[k]);
        right.push(r);
        left.push(l);
    }
    let frame = EigenFrame { t, energies, right, left, anchor: t0 };
    let scale = frame.energy_scale();
    let (i, j, gap) = frame.min_gap();
    if gap <= 1e-9 * scale {
        return Err(BranchError::AnchorDegenerate { t: t0, i, j, gap });
    }
    if model.epsilon() == 0.0 {
        let defect = frame.orthonormality_defect();
        if defect > 1e-10 {
            return Err(BranchError::AnchorNotOrthonormal(defect));
        }
    }
    Ok(frame)
}

/// Outcome of a single tentative transport step.
enum StepVerdict {
    Accept(EigenFrame),
    /// Step too large for reliable matching/overlap; halve and retry.
    Refine,
    /// Hard stop: the spectrum is degenerate at the probed point.
    Degenerate { i: usize, j: usize, gap: f64 },
}

fn try_step(model: &ModelSpec, cur: &EigenFrame, t_next: C64) -> StepVerdict {
    let h = model.h_mat(t_next);
    let sys = match eig::eig_system(&h, Some(&cur.energies)) {
        Ok(s) => s,
        Err(_) => return StepVerdict::Refine,
    };
    let n = cur.dim();
    let perm = match best_assignment(&cur.energies, &sys.values) {
        Some(p) => p,
        None => return StepVerdict::Refine,
    };

    // Degeneracy floor at the probed point (hard error: the path is about to
    // run into a turning point, which no step size can fix).
    let scale = 1.0 + sys.values.iter().map(|e| e.norm()).fold(0.0f64, f64::max);
    let mut min_gap = (0usize, 1usize, f64::INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            let g = (sys.values[perm[i]] - sys.values[perm[j]]).norm();
            if g < min_gap.2 {
                min_gap = (i, j, g);
            }
        }
    }
    if min_gap.2 <= 1e-9 * scale {
        return StepVerdict::Degenerate { i: min_gap.0, j: min_gap.1, gap: min_gap.2 };
    }

    // Matching is trustworthy only when each root moved much less than the
    // local spacing.
    let max_moved = (0..n)
        .map(|i| (sys.values[perm[i]] - cur.energies[i]).norm())
        .fold(0.0f64, f64::max);
    if max_moved > 0.25 * min_gap.2 {
        return StepVerdict::Refine;
    }

    let mut energies = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    let mut left = Vec::with_capacity(n);
    for i in 0..n {
        let r_raw = &sys.right[perm[i]];
        let l_raw = &sys.left[perm[i]];
        let overlap = dot_conj(&cur.right[i], r_raw).norm()
            / (norm(&cur.right[i]) * norm(r_raw));
        if overlap < 0.9 {
            return StepVerdict::Refine;
        }
        let alpha = dot_plain(&cur.left[i], r_raw);
        let beta = dot_plain(l_raw, &cur.right[i]);
        if alpha.norm() < 1e-3 || beta.norm() < 1e-3 {
            return StepVerdict::Refine;
        }
        // Geometric-mean gauge: l_prev·r_new = l_new·r_prev = sqrt(αβ), with
        // the square-root branch chosen to keep the frame continuous.
        let mut gamma = (beta / alpha).sqrt();
        if (alpha * gamma).re < 0.0 {
            gamma = -gamma;
        }
        energies.push(sys.values[perm[i]]);
        right.push(r_raw.iter().map(|&x| x * gamma).collect());
        left.push(l_raw.iter().map(|&x| x / gamma).collect());
    }
    StepVerdict::Accept(EigenFrame { t: t_next, energies, right, left, anchor: cur.anchor })
}

/// Minimum-total-distance assignment of new eigenvalues to previous labels.
/// Brute force over permutations; N is tiny.
fn best_assignment(prev: &[C64], new: &[C64]) -> Option<Vec<usize>> {
    let n = prev.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut perm: Vec<usize> = (0..n).collect();
    permute(&mut perm, 0, &mut |p: &[usize]| {
        let cost: f64 = (0..n).map(|i| (new[p[i]] - prev[i]).norm()).sum();
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, p.to_vec()));
        }
    });
    best.map(|(_, p)| p)
}

fn permute(items: &mut Vec<usize>, k: usize, visit: &mut impl FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Continue a frame along the straight segment to `target` with adaptive
/// step control. `record` receives every accepted intermediate frame.
fn continue_segment(
    model: &ModelSpec,
    from: &EigenFrame,
    target: C64,
    record: Option<&mut Vec<EigenFrame>>,
) -> BResult<EigenFrame> {
    continue_segment_capped(model, from, target, record, f64::INFINITY)
}

/// [`continue_segment`] with an explicit step-size cap. The discrete
/// transport accumulates a gauge phase error of order h² per unit length, so
/// contour integrals that need tight gauge accuracy (residue extraction)
/// walk with a small cap instead of the cruiser default.
fn continue_segment_capped(
    model: &ModelSpec,
    from: &EigenFrame,
    target: C64,
    mut record: Option<&mut Vec<EigenFrame>>,
    h_cap: f64,
) -> BResult<EigenFrame> {
    let total = (target - from.t).norm();
    if total == 0.0 {
        return Ok(from.clone());
    }
    let dir = (target - from.t) / total;
    let mut cur = from.clone();
    let mut s = 0.0f64;
    let h_max = (0.05 * (1.0 + from.t.norm().max(target.norm()))).min(h_cap);
    let mut h = total.min(h_max).min(0.02).min(h_cap);
    loop {
        if total - s <= 1e-14 * (1.0 + total) {
            return Ok(cur);
        }
        let step = h.min(total - s);
        let t_next = from.t + dir * (s + step);
        match try_step(model, &cur, t_next) {
            StepVerdict::Accept(next) => {
                s += step;
                cur = next;
                if let Some(rec) = record.as_deref_mut() {
                    rec.push(cur.clone());
                }
                h = (h * 1.6).min(h_max);
            }
            StepVerdict::Degenerate { i, j, gap } => {
                return Err(BranchError::Degenerate { t: t_next, i, j, gap });
            }
            StepVerdict::Refine => {
                h *= 0.5;
                if h < 1e-11 * (1.0 + cur.t.norm()) {
                    let (i, j, gap) = cur.min_gap();
                    return Err(BranchError::StepUnderflow { t: cur.t, i, j, gap });
                }
            }
        }
    }
}

/// Transport `from` to `t` along the straight segment between them.
pub fn continue_to(model: &ModelSpec, from: &EigenFrame, t: C64) -> BResult<EigenFrame> {
    continue_segment(model, from, t, None)
}

/// Transport with a maximum internal step size; see
/// [`continue_segment_capped`] for when this matters.
pub(crate) fn continue_to_capped(
    model: &ModelSpec,
    from: &EigenFrame,
    t: C64,
    h_cap: f64,
) -> BResult<EigenFrame> {
    continue_segment_capped(model, from, t, None, h_cap)
}

/// Walk a polyline whose first vertex is real, recording frames densely.
/// Labels at the anchor follow descending real energy.
pub fn eigen_continued(model: &ModelSpec, path: &PathPolyline) -> BResult<BranchPath> {
    let vertices = path.vertices();
    let first = vertices[0];
    if first.im.abs() > 1e-12 * (1.0 + first.re.abs()) {
        return Err(BranchError::AnchorNotReal(first));
    }
    let start = anchor_frame(model, first.re)?;
    eigen_continued_from(model, &start, path)
}

/// Like [`eigen_continued`], but transport starts from a caller-supplied
/// frame instead of a fresh anchor, so several paths can share one gauge.
/// The path's first vertex must be the start frame's time.
pub(crate) fn eigen_continued_from(
    model: &ModelSpec,
    start: &EigenFrame,
    path: &PathPolyline,
) -> BResult<BranchPath> {
    let vertices = path.vertices();
    let first = vertices[0];
    if (first - start.t).norm() > 1e-10 * (1.0 + first.norm()) {
        return Err(BranchError::NotOnPath(first));
    }
    let mut samples = vec![start.clone()];
    let mut cur = start.clone();
    let walk: Vec<C64> = if path.is_closed() {
        vertices.iter().copied().skip(1).chain(std::iter::once(first)).collect()
    } else {
        vertices[1..].to_vec()
    };
    for &v in &walk {
        cur = continue_segment(model, &cur, v, Some(&mut samples))?;
    }
    Ok(BranchPath { path: path.clone(), samples })
}

/// E_i(t) − E_j(t) under the branch labeling. Uses eigenvalue-only seeded
/// continuation from the nearest stored sample, so it remains usable
/// arbitrarily close to (and at) a turning point, where full frames break
/// down.
pub fn delta_e(model: &ModelSpec, i: usize, j: usize, branch: &BranchPath, t: C64) -> BResult<C64> {
    let n = model.dim();
    for idx in [i, j] {
        if idx >= n {
            return Err(BranchError::BadLevel { index: idx, dim: n });
        }
    }
    let tol = 1e-8 * (1.0 + t.norm());
    if branch.distance_to_path(t) > tol {
        return Err(BranchError::NotOnPath(t));
    }
    let nearest = branch
        .samples
        .iter()
        .min_by(|a, b| (a.t - t).norm().partial_cmp(&(b.t - t).norm()).unwrap())
        .expect("non-empty samples");
    let values = values_continued(model, &nearest.energies, nearest.t, t)?;
    Ok(values[i] - values[j])
}

/// Eigenvalue-only continuation (no vectors, no gauge): robust through the
/// immediate neighbourhood of turning points because root tracking only
/// needs proximity matching, which stays well defined until the step spans
/// the local spacing.
pub(crate) fn values_continued(
    model: &ModelSpec,
    start: &[C64],
    from: C64,
    target: C64,
) -> BResult<Vec<C64>> {
    let total = (target - from).norm();
    if total == 0.0 {
        return Ok(start.to_vec());
    }
    let dir = (target - from) / total;
    let mut cur = start.to_vec();
    let mut s = 0.0f64;
    let mut h = total.min(0.02 * (1.0 + from.norm().max(target.norm())));
    loop {
        if total - s <= 1e-14 * (1.0 + total) {
            return Ok(cur);
        }
        let step = h.min(total - s);
        let t_next = from + dir * (s + step);
        let values = model.eigenvalues(t_next, Some(&cur));
        let n = cur.len();
        let perm = best_assignment(&cur, &values)
            .ok_or(BranchError::NotOnPath(t_next))?;
        let mut min_gap = f64::INFINITY;
        for a in 0..n {
            for b in (a + 1)..n {
                min_gap = min_gap.min((values[perm[a]] - values[perm[b]]).norm());
            }
        }
        let max_moved =
            (0..n).map(|a| (values[perm[a]] - cur[a]).norm()).fold(0.0f64, f64::max);
        // Near a collision the two colliding roots are interchangeable and
        // either assignment gives the same pair difference, so only demand
        // separation when the step is still large.
        if max_moved > 0.25 * min_gap && max_moved > 1e-9 && step > 1e-9 {
            h *= 0.5;
            continue;
        }
        cur = (0..n).map(|a| values[perm[a]]).collect();
        s += step;
        h = (h * 1.6).min(total);
    }
}

/// Nonadiabatic coupling g_jk(t) = i⟨Ė_j|E_k⟩ in the anchored transport
/// gauge, evaluated on the branch path.
///
/// Off-diagonal elements use the resolvent identity
/// g_jk = i · l_j Ḣ r_k / (E_j − E_k), which is exact for polynomial models
/// (no numerical differentiation of the frame). Diagonal elements vanish
/// identically in the transport gauge and are returned as exactly zero.
pub fn coupling_g(
    model: &ModelSpec,
    j: usize,
    k: usize,
    branch: &BranchPath,
    t: C64,
) -> BResult<C64> {
    let frame = branch.frame_at(model, t)?;
    coupling_g_frame(model, j, k, &frame)
}

/// Same as [`coupling_g`], but on an already-continued frame; hot path for
/// contour walkers.
pub(crate) fn coupling_g_frame(
    model: &ModelSpec,
    j: usize,
    k: usize,
    frame: &EigenFrame,
) -> BResult<C64> {
    let n = frame.dim();
    for idx in [j, k] {
        if idx >= n {
            return Err(BranchError::BadLevel { index: idx, dim: n });
        }
    }
    if j == k {
        return Ok(C64::new(0.0, 0.0));
    }
    let gap = frame.gap(j, k);
    if gap.norm() <= 1e-6 * frame.energy_scale() {
        return Err(BranchError::TooNearTurningPoint { t: frame.t, gap: gap.norm() });
    }
    let hdot = model.hdot_mat(frame.t);
    let v = hdot.mul_vec(&frame.right[k]);
    let num = dot_plain(&frame.left[j], &v);
    Ok(C64::new(0.0, 1.0) * num / gap)
}

/// Finite-difference route to the same coupling: central difference of the
/// transported frame along the real axis, g_jk = −i · l_j · ṙ_k, with step
/// h = min(1e−4, gap/10). Kept as an independent cross-check of
/// [`coupling_g`]; the two must agree wherever both are defined.
pub fn coupling_g_fd(
    model: &ModelSpec,
    j: usize,
    k: usize,
    branch: &BranchPath,
    t: C64,
) -> BResult<C64> {
    let frame = branch.frame_at(model, t)?;
    let n = frame.dim();
    for idx in [j, k] {
        if idx >= n {
            return Err(BranchError::BadLevel { index: idx, dim: n });
        }
    }
    let gap = if j == k { f64::INFINITY } else { frame.gap(j, k).norm() };
    if gap <= 1e-6 * frame.energy_scale() {
        return Err(BranchError::TooNearTurningPoint { t: frame.t, gap });
    }
    let h = 1e-4f64.min(gap / 10.0);
    // direction along the path: reuse the local tangent by stepping both ways
    let dir = local_tangent(branch, t);
    let plus = continue_to(model, &frame, t + dir * h)?;
    let minus = continue_to(model, &frame, t - dir * h)?;
    let mut dr = vec![C64::new(0.0, 0.0); n];
    for idx in 0..n {
        dr[idx] = (plus.right[k][idx] - minus.right[k][idx]) / (2.0 * h * dir);
    }
    Ok(-C64::new(0.0, 1.0) * dot_plain(&frame.left[j], &dr))
}

fn local_tangent(branch: &BranchPath, t: C64) -> C64 {
    let (a, b) = branch
        .path
        .segments()
        .into_iter()
        .min_by(|&(a1, b1), &(a2, b2)| {
            point_segment_distance(t, a1, b1)
                .partial_cmp(&point_segment_distance(t, a2, b2))
                .unwrap()
        })
        .expect("path has segments");
    let d = b - a;
    d / d.norm()
}

/// Closed-form g₁₂ for two-level models with real off-diagonal coupling
/// (d_y = 0), on the real axis:
/// g₁₂(t) = (i/2) (ḋ_z d_x − d_z ḋ_x) / (d_x² + d_z²),
/// where H = d₀·1 + d_x σ_x + d_z σ_z. This is the reference for the
/// transported coupling's value and sign.
pub fn closed_form_g12(model: &ModelSpec, t: f64) -> BResult<C64> {
    if model.dim() != 2 {
        return Err(BranchError::BadLevel { index: 2, dim: model.dim() });
    }
    let tc = C64::new(t, 0.0);
    let h = model.h_mat(tc);
    let hd = model.hdot_mat(tc);
    if h[(1, 0)].im.abs() > 1e-12 * (1.0 + h[(1, 0)].norm()) {
        // d_y ≠ 0: the closed form below does not apply
        return Err(BranchError::Eigen {
            t: tc,
            reason: "closed-form g12 requires a real off-diagonal coupling".to_string(),
        });
    }
    let dx = (h[(0, 1)] + h[(1, 0)]).re / 2.0;
    let dz = (h[(0, 0)] - h[(1, 1)]).re / 2.0;
    let dxd = (hd[(0, 1)] + hd[(1, 0)]).re / 2.0;
    let dzd = (hd[(0, 0)] - hd[(1, 1)]).re / 2.0;
    let denom = dx * dx + dz * dz;
    Ok(C64::new(0.0, 0.5) * (dzd * dx - dz * dxd) / denom)
}

/// Biorthonormality defect of a frame: max |l_i · r_j − δ_ij|.
pub fn biorthonormality_defect(frame: &EigenFrame) -> f64 {
    let n = frame.dim();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            let d = (dot_plain(&frame.left[i], &frame.right[j]) - C64::new(target, 0.0)).norm();
            worst = worst.max(d);
        }
    }
    worst
}
