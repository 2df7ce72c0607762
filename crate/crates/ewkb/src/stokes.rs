//! Turning points, Stokes lines, and the assembled Stokes graph.
//!
//! A turning point is a complex time where two adiabatic energies collide;
//! for the gapped models of this crate they come in conjugate pairs off the
//! real axis. The locator works on the spectral discriminant
//! `disc(t) = ∏_{a<b} (E_a − E_b)²`, which — unlike any single `E_i − E_j` —
//! is a single-valued analytic function of `t` (a polynomial built from the
//! characteristic-polynomial coefficients), so argument-principle counting
//! applies: a simple turning point of any pair is a simple zero of `disc`.
//! The colliding pair is then attributed by continuing the eigenvalues
//! vertically from the real axis below (or above) the zero; those vertical
//! continuations also define the sheet convention used everywhere else:
//! branch cuts run from each turning point vertically away from the real
//! axis.
//!
//! Stokes lines are the loci `Re ∫_{t_c}^t ΔE ds = 0`, with the level whose
//! WKB solution grows (`Im ∫ (E_i − E_j) > 0` for level `i`) recorded as
//! dominant. The tracer integrates the unit-speed flow
//! `dt/dσ = ± i·conj(ΔE)/|ΔE|` with RK4 and re-zeroes `Re ∫ΔE` after every
//! step by a Newton correction transverse to the line, so the defining
//! condition cannot drift over long traces. Along the flow
//! `d(Im ∫ΔE)/dσ = ±|ΔE|` is sign-definite, which makes dominance constant
//! along each accepted line by construction.
//!
//! Degenerate graphs (lines terminating on other turning points, as happens
//! for the unperturbed built-ins) are detected and flagged; [`build_graph`]
//! can retry with an escalated degeneracy-breaking `epsilon` per
//! [`EpsilonPolicy`]. Intersections between traced lines are recorded as
//! virtual-turning-point candidates and never connected across.

use std::fmt::Write as _;

use num_complex::Complex64 as C64;

use crate::analytic::{count_zeros, find_root, AnalyticError, PathPolyline, Rectangle};
use crate::branch::{self, BranchError, BranchPath};
use crate::model::{ModelError, ModelSpec};

#[derive(Debug, thiserror::Error)]
pub enum StokesError {
    #[error("search window must exclude the real axis (got im range [{im_min}, {im_max}])")]
    WindowTouchesAxis { im_min: f64, im_max: f64 },
    #[error("turning-point pair must be adjacent levels, got ({0}, {1})")]
    NonAdjacentPair(usize, usize),
    #[error("turning point at {0} is not simple (order {1}); no connection rule applies")]
    NotSimple(C64, usize),
    #[error("turning-point search did not isolate zeros: {0}")]
    SearchFailed(String),
    #[error("unresolved degenerate Stokes graph after epsilon escalation: {}", .flags.join("; "))]
    UnresolvedDegeneracy { flags: Vec<String> },
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error(transparent)]
    Branch(#[from] BranchError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

type SResult<T> = Result<T, StokesError>;

/// A complex time where the energies of `pair` collide.
#[derive(Clone, Debug)]
pub struct TurningPoint {
    pub location: C64,
    /// Colliding levels (i, j), i < j, labeled by descending real-axis order.
    pub pair: (usize, usize),
    /// Zero multiplicity of the discriminant: 1 = simple (square-root branch
    /// point); anything higher is flagged and excluded from connections.
    pub order: usize,
    /// Vertical continuation from the real axis that fixed the pair labels;
    /// ends at a standoff point just off the turning point.
    pub sheet_anchor: BranchPath,
}

/// How a traced line ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    ReachedMaxRadius,
    /// Ran into the capture disk of the turning point with this index.
    HitTurningPoint(usize),
    /// Crossed the vertical branch cut of the turning point with this index
    /// (the continuation leaves the principal sheet there).
    HitCutBoundary(usize),
    StepFailure,
}

impl Termination {
    pub fn label(&self) -> &'static str {
        match self {
            Termination::ReachedMaxRadius => "reached_max_radius",
            Termination::HitTurningPoint(_) => "hit_turning_point",
            Termination::HitCutBoundary(_) => "hit_cut_boundary",
            Termination::StepFailure => "step_failure",
        }
    }
}

/// One traced Stokes line.
#[derive(Clone, Debug)]
pub struct StokesLine {
    /// Index of the originating turning point in the graph's list.
    pub origin: usize,
    /// Level pair of the originating turning point.
    pub pair: (usize, usize),
    pub polyline: PathPolyline,
    /// The level whose WKB solution is dominant along this line.
    pub dominant_index: usize,
    /// First real-axis crossing, if the line reaches the axis.
    pub real_crossing: Option<f64>,
    pub termination: Termination,
    /// Max of |Re ∫ΔE| / (|∫ΔE| + floor) over the trace (Stokes condition
    /// residual; must stay ≤ the trace tolerance).
    pub max_residual: f64,
}

/// One real-axis crossing of a Stokes line.
#[derive(Clone, Copy, Debug)]
pub struct Crossing {
    pub t: f64,
    /// Index into [`StokesGraph::lines`].
    pub line: usize,
}

/// The assembled graph for one model at one epsilon.
#[derive(Clone, Debug)]
pub struct StokesGraph {
    pub model_label: String,
    /// Epsilon actually used (after any escalation).
    pub epsilon_used: f64,
    pub turning_points: Vec<TurningPoint>,
    pub lines: Vec<StokesLine>,
    /// Real-axis crossings sorted by time, ascending.
    pub crossings: Vec<Crossing>,
    /// Human-readable degeneracy conditions; empty for a clean graph.
    pub degeneracy_flags: Vec<String>,
    /// Line-line intersection points: virtual-turning-point candidates,
    /// reported but never connected across.
    pub intersection_flags: Vec<C64>,
}

/// Escalation policy for the degeneracy-breaking perturbation.
#[derive(Clone, Copy, Debug)]
pub struct EpsilonPolicy {
    /// Retry with |ε| ∈ {0.01, 0.05} if the graph at the model's ε is
    /// degenerate.
    pub auto_escalate: bool,
    /// Use negative ε (the graph changes; probabilities must not).
    pub flip_sign: bool,
}

impl Default for EpsilonPolicy {
    fn default() -> Self {
        EpsilonPolicy { auto_escalate: false, flip_sign: false }
    }
}

/// Single-valued spectral discriminant ∏_{a<b}(E_a − E_b)² at complex `t`.
pub(crate) fn discriminant(model: &ModelSpec, t: C64) -> C64 {
    let ev = model.eigenvalues(t, None);
    let mut acc = C64::new(1.0, 0.0);
    for a in 0..ev.len() {
        for b in (a + 1)..ev.len() {
            let d = ev[a] - ev[b];
            acc *= d * d;
        }
    }
    acc
}

/// All turning points (any pair) inside a window that excludes the real
/// axis. Zeros of the discriminant are isolated by recursive
/// argument-principle counting, polished by Newton, then attributed to a
/// level pair by vertical eigenvalue continuation from the real axis.
pub fn find_all_turning_points(model: &ModelSpec, window: Rectangle) -> SResult<Vec<TurningPoint>> {
    if window.im_min <= 0.0 && window.im_max >= 0.0 {
        return Err(StokesError::WindowTouchesAxis {
            im_min: window.im_min,
            im_max: window.im_max,
        });
    }
    let mut raw: Vec<(C64, usize)> = Vec::new();
    let resolve = 1e-5 * (1.0 + window.diagonal());
    subdivide(&mut |t| Ok(discriminant(model, t)), window, resolve, 0, &mut raw)?;

    // Cluster duplicates found through overlapping nudged boundaries.
    let mut clustered: Vec<(C64, usize)> = Vec::new();
    'outer: for (z, n) in raw {
        for c in clustered.iter_mut() {
            if (c.0 - z).norm() < 1e-6 * (1.0 + z.norm()) {
                c.1 = c.1.max(n);
                continue 'outer;
            }
        }
        clustered.push((z, n));
    }

    // Confirm each multiplicity on a tight isolating box.
    let mut points = Vec::new();
    for (z, n_seen) in clustered {
        let half = 1e-4 * (1.0 + z.norm());
        let tight = Rectangle {
            re_min: z.re - half,
            re_max: z.re + half,
            im_min: z.im - half,
            im_max: z.im + half,
        };
        let order = match count_zeros(|t| Ok(discriminant(model, t)), tight) {
            Ok(n) if n > 0 => n,
            _ => n_seen,
        };
        let (pair, sheet_anchor) = attribute_pair(model, z)?;
        points.push(TurningPoint { location: z, pair, order, sheet_anchor });
    }
    // Deterministic order: by real part, then imaginary.
    points.sort_by(|a, b| {
        (a.location.re, a.location.im)
            .partial_cmp(&(b.location.re, b.location.im))
            .unwrap()
    });
    Ok(points)
}

/// Turning points of one adjacent pair in the window.
pub fn find_turning_points(
    model: &ModelSpec,
    pair: (usize, usize),
    window: Rectangle,
) -> SResult<Vec<TurningPoint>> {
    let (i, j) = pair;
    if j != i + 1 || j >= model.dim() {
        return Err(StokesError::NonAdjacentPair(i, j));
    }
    let all = find_all_turning_points(model, window)?;
    Ok(all.into_iter().filter(|tp| tp.pair == pair).collect())
}

fn subdivide(
    f: &mut dyn FnMut(C64) -> Result<C64, AnalyticError>,
    rect: Rectangle,
    resolve: f64,
    depth: usize,
    out: &mut Vec<(C64, usize)>,
) -> SResult<()> {
    if depth > 40 {
        return Err(StokesError::SearchFailed(format!(
            "subdivision depth exceeded near {}",
            rect.corners()[0]
        )));
    }
    let n = count_zeros(&mut *f, rect)?;
    if n == 0 {
        return Ok(());
    }
    let center = C64::new(
        0.5 * (rect.re_min + rect.re_max),
        0.5 * (rect.im_min + rect.im_max),
    );
    if n == 1 {
        // Newton from the center; accept only a root that stayed nearby.
        if let Ok(root) = find_root(&mut *f, center, 1e-13, 80) {
            let fat = Rectangle {
                re_min: rect.re_min - 0.2 * (rect.re_max - rect.re_min),
                re_max: rect.re_max + 0.2 * (rect.re_max - rect.re_min),
                im_min: rect.im_min - 0.2 * (rect.im_max - rect.im_min),
                im_max: rect.im_max + 0.2 * (rect.im_max - rect.im_min),
            };
            if fat.contains(root.location) {
                out.push((root.location, 1));
                return Ok(());
            }
        }
    }
    if rect.diagonal() < resolve {
        // Cannot separate further: report as one (possibly multiple) zero.
        out.push((center, n));
        return Ok(());
    }
    // Split in four, with a fallback off-center split if a zero sits on the
    // dividing lines (the counting then reports a boundary hit).
    for frac in [0.5, 0.47, 0.53] {
        let rm = rect.re_min + frac * (rect.re_max - rect.re_min);
        let im = rect.im_min + frac * (rect.im_max - rect.im_min);
        let quads = [
            Rectangle { re_min: rect.re_min, re_max: rm, im_min: rect.im_min, im_max: im },
            Rectangle { re_min: rm, re_max: rect.re_max, im_min: rect.im_min, im_max: im },
            Rectangle { re_min: rect.re_min, re_max: rm, im_min: im, im_max: rect.im_max },
            Rectangle { re_min: rm, re_max: rect.re_max, im_min: im, im_max: rect.im_max },
        ];
        let mut sub = Vec::new();
        let mut ok = true;
        for q in quads {
            match subdivide(f, q, resolve, depth + 1, &mut sub) {
                Ok(()) => {}
                Err(StokesError::Analytic(AnalyticError::ZeroOnBoundary { .. })) => {
                    ok = false;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if ok {
            out.extend(sub);
            return Ok(());
        }
    }
    Err(StokesError::SearchFailed(format!(
        "could not find a zero-free split of the box around {center}"
    )))
}

/// Which pair collides at `t_c`, decided by continuing the real-axis
/// spectrum vertically to a standoff point near the zero. Also returns the
/// continuation path (with full frames) as the sheet anchor.
fn attribute_pair(model: &ModelSpec, t_c: C64) -> SResult<((usize, usize), BranchPath)> {
    let sgn = if t_c.im >= 0.0 { 1.0 } else { -1.0 };
    let standoff = (1e-2 * t_c.im.abs()).max(1e-4);
    let target = t_c - C64::new(0.0, sgn * standoff);
    let path = PathPolyline::open(vec![C64::new(t_c.re, 0.0), target])
        .map_err(StokesError::Analytic)?;
    let bp = branch::eigen_continued(model, &path)?;
    let end = bp.end();
    let n = end.dim();
    let mut best = (0usize, 1usize, f64::INFINITY);
    for a in 0..n {
        for b in (a + 1)..n {
            let g = end.gap(a, b).norm();
            if g < best.2 {
                best = (a, b, g);
            }
        }
    }
    Ok(((best.0, best.1), bp))
}

/// Local square-root coefficient of ΔE at a simple turning point, estimated
/// from two standoff probes with Richardson extrapolation:
/// ΔE(t) ≈ c (t − t_c)^{1/2}.
fn local_sqrt_coefficient(model: &ModelSpec, tp: &TurningPoint) -> SResult<C64> {
    let t_c = tp.location;
    let sgn = if t_c.im >= 0.0 { 1.0 } else { -1.0 };
    let approach = C64::new(0.0, -sgn); // vertical, toward the real axis
    let rho = (2e-2 * t_c.im.abs()).max(2e-4);
    let frame = tp.sheet_anchor.end();
    let (i, j) = tp.pair;
    let mut cs = Vec::new();
    for r in [rho, rho / 2.0] {
        let probe = t_c + approach * r;
        let vals = branch::values_continued(model, &frame.energies, frame.t, probe)?;
        let de = vals[i] - vals[j];
        cs.push(de / (probe - t_c).sqrt());
    }
    Ok(cs[1] * 2.0 - cs[0])
}

/// The three departure directions of the Stokes lines at a simple turning
/// point: with ΔE ≈ c (t−t_c)^{1/2}, the lines leave where
/// (2c/3)(t−t_c)^{3/2} is purely imaginary.
pub fn initial_directions(model: &ModelSpec, tp: &TurningPoint) -> SResult<[C64; 3]> {
    if tp.order != 1 {
        return Err(StokesError::NotSimple(tp.location, tp.order));
    }
    let c = local_sqrt_coefficient(model, tp)?;
    let gamma = c.arg();
    let mut dirs = [C64::new(0.0, 0.0); 3];
    for (k, d) in dirs.iter_mut().enumerate() {
        let theta = (std::f64::consts::FRAC_PI_2 + k as f64 * std::f64::consts::PI - gamma)
            * 2.0
            / 3.0;
        *d = C64::new(theta.cos(), theta.sin());
    }
    Ok(dirs)
}

/// Knobs for [`trace_line`]; [`TraceOptions::for_cluster`] derives the
/// defaults the graph builder uses.
#[derive(Clone, Copy, Debug)]
pub struct TraceOptions {
    pub max_radius: f64,
    /// Residual bound: |Re ∫ΔE| ≤ trace_tol × (|∫ΔE| + floor).
    pub trace_tol: f64,
    /// Radius around foreign turning points that terminates a line.
    pub capture_radius: f64,
}

impl TraceOptions {
    /// Defaults from the turning-point cluster: max radius
    /// 3 × (largest modulus + 1), capture 1e−2 × nearest spacing.
    pub fn for_cluster(tps: &[TurningPoint]) -> Self {
        let max_mod = tps.iter().map(|tp| tp.location.norm()).fold(0.0f64, f64::max);
        let mut spacing = f64::INFINITY;
        for a in 0..tps.len() {
            for b in (a + 1)..tps.len() {
                spacing = spacing.min((tps[a].location - tps[b].location).norm());
            }
        }
        if !spacing.is_finite() {
            // single turning point: use its distance to the real axis
            spacing = tps.first().map_or(1.0, |tp| 2.0 * tp.location.im.abs().max(0.5));
        }
        TraceOptions {
            max_radius: 3.0 * (max_mod + 1.0),
            trace_tol: 1e-3,
            capture_radius: 1e-2 * spacing,
        }
    }
}

/// Continue the full eigenvalue vector to the line's starting offset: first
/// radially from the attribution standoff, then along a circular arc that
/// avoids the turning point's own branch cut (which points vertically away
/// from the real axis).
fn values_at_line_start(
    model: &ModelSpec,
    tp: &TurningPoint,
    r0: f64,
    direction: C64,
) -> SResult<Vec<C64>> {
    let t_c = tp.location;
    let sgn = if t_c.im >= 0.0 { 1.0 } else { -1.0 };
    let frame = tp.sheet_anchor.end();
    // radial leg to radius r0 on the approach ray
    let phi_start = -sgn * std::f64::consts::FRAC_PI_2;
    let start = t_c + C64::new(0.0, -sgn) * r0;
    let mut vals = branch::values_continued(model, &frame.energies, frame.t, start)?;
    // arc leg: rotate from phi_start to the direction angle without passing
    // the cut angle +sgn·π/2
    let phi_cut = sgn * std::f64::consts::FRAC_PI_2;
    let mut phi_end = direction.arg();
    // express phi_end in the open interval (phi_cut − 2π, phi_cut)
    while phi_end >= phi_cut {
        phi_end -= 2.0 * std::f64::consts::PI;
    }
    while phi_end < phi_cut - 2.0 * std::f64::consts::PI {
        phi_end += 2.0 * std::f64::consts::PI;
    }
    let mut phi0 = phi_start;
    while phi0 >= phi_cut {
        phi0 -= 2.0 * std::f64::consts::PI;
    }
    let sweep = phi_end - phi0;
    let steps = (sweep.abs() / 0.1).ceil().max(1.0) as usize;
    let mut cur_t = start;
    for k in 1..=steps {
        let phi = phi0 + sweep * (k as f64) / (steps as f64);
        let next_t = t_c + C64::new(phi.cos(), phi.sin()) * r0;
        vals = branch::values_continued(model, &vals, cur_t, next_t)?;
        cur_t = next_t;
    }
    Ok(vals)
}

/// Trace one Stokes line from a turning point along one of its three
/// departure directions. `tps` is the full turning-point list (for capture
/// disks and cut rays); `origin` indexes the line's own turning point.
pub fn trace_line(
    model: &ModelSpec,
    tps: &[TurningPoint],
    origin: usize,
    direction: C64,
    opts: &TraceOptions,
) -> SResult<StokesLine> {
    let tp = &tps[origin];
    if tp.order != 1 {
        return Err(StokesError::NotSimple(tp.location, tp.order));
    }
    let (li, lj) = tp.pair;
    let spacing_guard = 10.0 * opts.capture_radius;
    let r0 = (1e-1 * opts.capture_radius).max(1e-6);
    let mut t = tp.location + direction * r0;
    let mut vals = values_at_line_start(model, tp, r0, direction)?;

    let de0 = vals[li] - vals[lj];
    // flow sign: pick the branch of ±i·conj(ΔE)/|ΔE| that leaves along
    // `direction`
    let v_plus = C64::new(0.0, 1.0) * de0.conj() / de0.norm();
    let s: f64 = if (v_plus * direction.conj()).re >= 0.0 { 1.0 } else { -1.0 };
    // Im ∫ΔE grows at rate s·|ΔE|, so s > 0 makes level li dominant
    let dominant_index = if s > 0.0 { li } else { lj };

    // exponent accumulator seeded with the local series value
    let mut integral = (t - tp.location) * de0 * (2.0 / 3.0);
    let mut samples = vec![t];
    let mut real_crossing: Option<f64> = None;
    let mut max_residual = integral.re.abs() / (integral.norm() + 1e-12);
    let mut h = (2.0 * r0).min(1e-2);
    let mut termination = None;

    // cut rays that matter: turning points whose pair shares a level
    let cuts: Vec<usize> = tps
        .iter()
        .enumerate()
        .filter(|(_, other)| {
            let (a, b) = other.pair;
            a == li || a == lj || b == li || b == lj
        })
        .map(|(k, _)| k)
        .collect();

    let flow = |de: C64| -> C64 { C64::new(0.0, s) * de.conj() / de.norm() };
    let de_of = |vals: &[C64]| vals[li] - vals[lj];

    'trace: while termination.is_none() {
        if h < 1e-9 {
            termination = Some(Termination::StepFailure);
            break;
        }
        // RK4 on the unit-speed flow, tracking eigenvalues at each stage
        let step = (|| -> Option<(C64, Vec<C64>, C64)> {
            let d1 = de_of(&vals);
            let k1 = flow(d1);
            let (v2, ok2) = advance_values(model, &vals, t, t + k1 * (h / 2.0))?;
            let d2 = de_of(&v2);
            let k2 = flow(d2);
            let (v3, ok3) = advance_values(model, &vals, t, t + k2 * (h / 2.0))?;
            let d3 = de_of(&v3);
            let k3 = flow(d3);
            let (v4, ok4) = advance_values(model, &vals, t, t + k3 * h)?;
            let d4 = de_of(&v4);
            let k4 = flow(d4);
            let t_new = t + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            let (v_new, ok5) = advance_values(model, &vals, t, t_new)?;
            if !(ok2 && ok3 && ok4 && ok5) {
                return None;
            }
            // Simpson increment of ∫ΔE dt over the step
            let g1 = d1 * k1;
            let gm = (d2 * k2 + d3 * k3) * 0.5;
            let g4 = d4 * k4;
            let inc = (g1 + gm * 4.0 + g4) * (h / 6.0);
            Some((t_new, v_new, inc))
        })();
        let (mut t_new, mut vals_new, inc) = match step {
            Some(x) => x,
            None => {
                h *= 0.5;
                continue;
            }
        };
        let mut integral_new = integral + inc;

        // Newton projection transverse to the flow to re-zero Re ∫ΔE
        let de_new = de_of(&vals_new);
        if de_new.norm() > 0.0 {
            let normal = -de_new.conj() / de_new.norm() * s;
            let alpha = integral_new.re / (s * de_new.norm());
            let dt = normal * alpha;
            if dt.norm() > 0.25 * h {
                h *= 0.5;
                continue;
            }
            if dt.norm() > 0.0 {
                let t_proj = t_new + dt;
                if let Some((v_proj, true)) = advance_values(model, &vals_new, t_new, t_proj) {
                    integral_new += de_new * dt;
                    t_new = t_proj;
                    vals_new = v_proj;
                }
            }
        }

        let residual = integral_new.re.abs() / (integral_new.norm() + 1e-12);
        if residual > opts.trace_tol {
            h *= 0.5;
            continue;
        }

        // termination checks against the accepted segment [t, t_new]
        let far_enough = (t - tp.location).norm() > spacing_guard;
        for (k, other) in tps.iter().enumerate() {
            if k == origin && !far_enough {
                continue;
            }
            if (t_new - other.location).norm() <= opts.capture_radius {
                termination = Some(Termination::HitTurningPoint(k));
            }
        }
        if termination.is_none() {
            for &k in &cuts {
                if k == origin && !far_enough {
                    continue;
                }
                let base = tps[k].location;
                let d_prev = t.re - base.re;
                let d_new = t_new.re - base.re;
                if d_prev * d_new < 0.0 {
                    let frac = d_prev / (d_prev - d_new);
                    let im_hit = t.im + (t_new.im - t.im) * frac;
                    let beyond = if base.im > 0.0 { im_hit > base.im } else { im_hit < base.im };
                    if beyond {
                        let hit = C64::new(base.re, im_hit);
                        samples.push(hit);
                        termination = Some(Termination::HitCutBoundary(k));
                        break;
                    }
                }
            }
        }
        if let Some(Termination::HitCutBoundary(_)) = termination {
            max_residual = max_residual.max(residual);
            break 'trace;
        }

        // real-axis crossing of the accepted segment
        if t.im * t_new.im < 0.0 {
            let frac = t.im / (t.im - t_new.im);
            let t_cross = t.re + (t_new.re - t.re) * frac;
            if real_crossing.is_none() {
                real_crossing = Some(t_cross);
            }
        }

        t = t_new;
        vals = vals_new;
        integral = integral_new;
        samples.push(t);
        max_residual = max_residual.max(residual);
        if t.norm() >= opts.max_radius {
            termination.get_or_insert(Termination::ReachedMaxRadius);
        }
        h = (h * 1.5).min(0.04 * (1.0 + t.norm()));
    }

    let polyline = PathPolyline::open(samples).map_err(StokesError::Analytic)?;
    Ok(StokesLine {
        origin,
        pair: tp.pair,
        polyline,
        dominant_index,
        real_crossing,
        termination: termination.expect("loop exits only with a termination"),
        max_residual,
    })
}

/// One seeded eigenvalue hop; `None` means the step must be refined, the
/// bool is false when matching was untrustworthy.
fn advance_values(
    model: &ModelSpec,
    vals: &[C64],
    _from: C64,
    to: C64,
) -> Option<(Vec<C64>, bool)> {
    let new = model.eigenvalues(to, Some(vals));
    if new.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return None;
    }
    let n = vals.len();
    // match by proximity (the seeded iteration is order-preserving in
    // practice; this guards the exceptional cases)
    let mut perm: Vec<usize> = (0..n).collect();
    let mut used = vec![false; n];
    for i in 0..n {
        let mut best = usize::MAX;
        let mut best_d = f64::INFINITY;
        for (k, nv) in new.iter().enumerate() {
            if used[k] {
                continue;
            }
            let d = (nv - vals[i]).norm();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        used[best] = true;
        perm[i] = best;
    }
    let matched: Vec<C64> = perm.iter().map(|&k| new[k]).collect();
    let mut min_gap = f64::INFINITY;
    for a in 0..n {
        for b in (a + 1)..n {
            min_gap = min_gap.min((matched[a] - matched[b]).norm());
        }
    }
    let max_moved = (0..n).map(|a| (matched[a] - vals[a]).norm()).fold(0.0f64, f64::max);
    let trustworthy = max_moved <= 0.3 * min_gap || max_moved < 1e-12;
    Some((matched, trustworthy))
}

/// Build the full graph: all turning points of all adjacent pairs, three
/// lines per simple turning point, crossings sorted by real time. Retries at
/// escalated |ε| per policy when the graph is degenerate.
pub fn build_graph(
    model: &ModelSpec,
    window: Option<Rectangle>,
    policy: EpsilonPolicy,
) -> SResult<StokesGraph> {
    let sign = if policy.flip_sign { -1.0 } else { 1.0 };
    let mut eps_chain = vec![sign * model.epsilon().abs()];
    if policy.auto_escalate {
        for e in [0.01, 0.05] {
            let candidate = sign * e;
            if !eps_chain.contains(&candidate) {
                eps_chain.push(candidate);
            }
        }
    }
    let mut last_flags = Vec::new();
    for eps in eps_chain {
        let m = model.with_epsilon(eps)?;
        let graph = build_graph_at(&m, window)?;
        if graph.degeneracy_flags.is_empty() {
            return Ok(graph);
        }
        last_flags = graph.degeneracy_flags.clone();
        if !policy.auto_escalate {
            // caller asked for no escalation: hand back the flagged graph
            return Ok(graph);
        }
    }
    Err(StokesError::UnresolvedDegeneracy { flags: last_flags })
}

/// Square search window used when a caller passes no explicit one: half-width
/// 8 sweep-time units on each side of the origin.
pub fn default_window(model: &ModelSpec) -> Rectangle {
    let w = 8.0 * model.sweep_scale().max(1.0);
    Rectangle { re_min: -w, re_max: w, im_min: -w, im_max: w }
}

/// All turning points in both half-planes of `window`, skipping a thin
/// margin around the real axis (where the discriminant of a gapped model
/// cannot vanish anyway), sorted by real part then imaginary part.
pub fn turning_points_both_halves(
    model: &ModelSpec,
    window: Rectangle,
) -> SResult<Vec<TurningPoint>> {
    let win = window;
    let margin = 1e-3 * (1.0 + win.im_max.abs().max(win.im_min.abs()));
    let mut turning_points = Vec::new();
    if win.im_max > margin {
        let upper = Rectangle {
            re_min: win.re_min,
            re_max: win.re_max,
            im_min: margin.max(win.im_min),
            im_max: win.im_max,
        };
        turning_points.extend(find_all_turning_points(model, upper)?);
    }
    if win.im_min < -margin {
        let lower = Rectangle {
            re_min: win.re_min,
            re_max: win.re_max,
            im_min: win.im_min,
            im_max: (-margin).min(win.im_max),
        };
        turning_points.extend(find_all_turning_points(model, lower)?);
    }
    turning_points.sort_by(|a, b| {
        (a.location.re, a.location.im)
            .partial_cmp(&(b.location.re, b.location.im))
            .unwrap()
    });
    Ok(turning_points)
}

fn build_graph_at(model: &ModelSpec, window: Option<Rectangle>) -> SResult<StokesGraph> {
    let win = window.unwrap_or_else(|| default_window(model));
    let turning_points = turning_points_both_halves(model, win)?;

    let mut degeneracy_flags = Vec::new();
    for tp in &turning_points {
        if tp.order > 1 {
            degeneracy_flags.push(format!(
                "non-simple turning point (order {}) at {}; excluded from connections",
                tp.order, tp.location
            ));
        }
    }

    let opts = TraceOptions::for_cluster(&turning_points);
    let mut lines = Vec::new();
    for (idx, tp) in turning_points.iter().enumerate() {
        if tp.order != 1 {
            continue;
        }
        for dir in initial_directions(model, tp)? {
            let line = trace_line(model, &turning_points, idx, dir, &opts)?;
            match line.termination {
                Termination::HitTurningPoint(k) => degeneracy_flags.push(format!(
                    "degenerate Stokes graph: line from turning point {} ({}) terminates on turning point {} ({})",
                    idx, tp.location, k, turning_points[k].location
                )),
                Termination::StepFailure => degeneracy_flags
                    .push(format!("incomplete trace from turning point {} ({})", idx, tp.location)),
                _ => {}
            }
            lines.push(line);
        }
    }

    // crossings, sorted ascending, with a minimum-separation check
    let mut crossings: Vec<Crossing> = lines
        .iter()
        .enumerate()
        .filter_map(|(k, l)| l.real_crossing.map(|t| Crossing { t, line: k }))
        .collect();
    crossings.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    let separation = 1e-6 * (1.0 + win.re_max - win.re_min);
    for w in crossings.windows(2) {
        if (w[1].t - w[0].t).abs() < separation {
            degeneracy_flags.push(format!(
                "real-axis crossings of lines {} and {} coincide near t = {:.6}",
                w[0].line, w[1].line, w[0].t
            ));
        }
    }

    let intersection_flags = line_intersections(&turning_points, &lines, &opts);

    Ok(StokesGraph {
        model_label: model.label().to_string(),
        epsilon_used: model.epsilon(),
        turning_points,
        lines,
        crossings,
        degeneracy_flags,
        intersection_flags,
    })
}

/// Decimated pairwise segment-intersection scan between lines from distinct
/// turning points: candidates for virtual turning points.
fn line_intersections(
    tps: &[TurningPoint],
    lines: &[StokesLine],
    opts: &TraceOptions,
) -> Vec<C64> {
    let decimated: Vec<(usize, Vec<C64>)> = lines
        .iter()
        .enumerate()
        .map(|(k, l)| {
            let pts = l.polyline.vertices();
            let stride = (pts.len() / 60).max(1);
            let mut d: Vec<C64> = pts.iter().copied().step_by(stride).collect();
            if let Some(&last) = pts.last() {
                if d.last() != Some(&last) {
                    d.push(last);
                }
            }
            (k, d)
        })
        .collect();
    let guard = 5.0 * opts.capture_radius;
    let mut hits: Vec<C64> = Vec::new();
    for a in 0..decimated.len() {
        for b in (a + 1)..decimated.len() {
            let (la, pa) = &decimated[a];
            let (lb, pb) = &decimated[b];
            if lines[*la].origin == lines[*lb].origin {
                continue;
            }
            for sa in pa.windows(2) {
                for sb in pb.windows(2) {
                    if let Some(x) = segment_intersection(sa[0], sa[1], sb[0], sb[1]) {
                        // ignore apparent contacts right at either origin
                        let near_tp = tps.iter().any(|tp| (x - tp.location).norm() < guard);
                        if !near_tp
                            && !hits.iter().any(|h| (h - x).norm() < 10.0 * guard)
                        {
                            hits.push(x);
                        }
                    }
                }
            }
        }
    }
    hits.sort_by(|p, q| (p.re, p.im).partial_cmp(&(q.re, q.im)).unwrap());
    hits
}

fn segment_intersection(a1: C64, a2: C64, b1: C64, b2: C64) -> Option<C64> {
    let d1 = a2 - a1;
    let d2 = b2 - b1;
    let denom = d1.re * d2.im - d1.im * d2.re;
    if denom.abs() < 1e-300 {
        return None;
    }
    let r = b1 - a1;
    let s = (r.re * d2.im - r.im * d2.re) / denom;
    let u = (r.re * d1.im - r.im * d1.re) / denom;
    if (0.0..=1.0).contains(&s) && (0.0..=1.0).contains(&u) {
        Some(a1 + d1 * s)
    } else {
        None
    }
}

/// Graph CSV: one row per polyline sample (line id, Re t, Im t, dominant
/// level). Deterministic formatting; this file is the bit-exact artifact.
pub fn graph_csv(graph: &StokesGraph) -> String {
    let mut out = String::from("line_id,re_t,im_t,dominant_level\n");
    for (k, line) in graph.lines.iter().enumerate() {
        for p in line.polyline.vertices() {
            let _ = writeln!(out, "{},{:.12e},{:.12e},{}", k, p.re, p.im, line.dominant_index);
        }
    }
    out
}

/// Turning-point CSV (pair indices, location, order).
pub fn turning_points_csv(points: &[TurningPoint]) -> String {
    let mut out = String::from("pair_i,pair_j,re,im,order\n");
    for tp in points {
        let _ = writeln!(
            out,
            "{},{},{:.12e},{:.12e},{}",
            tp.pair.0, tp.pair.1, tp.location.re, tp.location.im, tp.order
        );
    }
    out
}

const PAIR_COLORS: [&str; 5] = ["#0072b2", "#d55e00", "#009e73", "#cc79a7", "#e69f00"];

/// Presentational SVG of the graph: lines colored by pair, turning points as
/// dots, the real axis drawn. The CSV is the canonical artifact.
pub fn graph_svg(graph: &StokesGraph) -> String {
    let mut re_min = f64::INFINITY;
    let mut re_max = f64::NEG_INFINITY;
    let mut im_min = f64::INFINITY;
    let mut im_max = f64::NEG_INFINITY;
    let mut consider = |p: C64| {
        re_min = re_min.min(p.re);
        re_max = re_max.max(p.re);
        im_min = im_min.min(p.im);
        im_max = im_max.max(p.im);
    };
    for line in &graph.lines {
        for &p in line.polyline.vertices() {
            consider(p);
        }
    }
    for tp in &graph.turning_points {
        consider(tp.location);
    }
    if !re_min.is_finite() {
        re_min = -1.0;
        re_max = 1.0;
        im_min = -1.0;
        im_max = 1.0;
    }
    let pad = 0.05 * ((re_max - re_min).max(im_max - im_min)).max(1.0);
    re_min -= pad;
    re_max += pad;
    im_min -= pad;
    im_max += pad;
    let width = 720.0;
    let scale = width / (re_max - re_min);
    let height = (im_max - im_min) * scale;
    let x = |re: f64| (re - re_min) * scale;
    let y = |im: f64| (im_max - im) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {width:.0} {height:.0}\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    // real axis
    let _ = writeln!(
        svg,
        "<line x1=\"0\" y1=\"{0:.2}\" x2=\"{width:.2}\" y2=\"{0:.2}\" stroke=\"#999\" stroke-width=\"1\" stroke-dasharray=\"6 4\"/>",
        y(0.0)
    );
    for line in &graph.lines {
        let color = PAIR_COLORS[(line.pair.0 + line.pair.1 - 1) % PAIR_COLORS.len()];
        let mut points = String::new();
        for &p in line.polyline.vertices() {
            let _ = write!(points, "{:.2},{:.2} ", x(p.re), y(p.im));
        }
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"1.4\"/>",
            points.trim_end(),
            color
        );
    }
    for tp in &graph.turning_points {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#222\"/>",
            x(tp.location.re),
            y(tp.location.im)
        );
    }
    for c in &graph.crossings {
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.2\"/>",
            x(c.t),
            y(0.0)
        );
    }
    let _ = writeln!(svg, "</svg>");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::builtin;
    use std::collections::BTreeMap;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn lz_eps(eps: f64) -> ModelSpec {
        let mut p = BTreeMap::new();
        p.insert("epsilon".to_string(), eps);
        builtin("nlzsm", &p).unwrap()
    }

    fn n3_eps(eps: f64) -> ModelSpec {
        let mut p = BTreeMap::new();
        p.insert("n".to_string(), 3.0);
        p.insert("epsilon".to_string(), eps);
        builtin("nlzsm", &p).unwrap()
    }

    fn lzsm3() -> ModelSpec {
        builtin("lzsm3", &BTreeMap::new()).unwrap()
    }

    fn upper(w: f64) -> Rectangle {
        Rectangle { re_min: -w, re_max: w, im_min: 1e-3, im_max: w }
    }

    #[test]
    fn lz_turning_points_are_plus_minus_i() {
        let m = lz_eps(0.0);
        let tps = find_turning_points(&m, (0, 1), upper(4.0)).unwrap();
        assert_eq!(tps.len(), 1);
        assert!((tps[0].location - c(0.0, 1.0)).norm() < 1e-10);
        assert_eq!(tps[0].order, 1);
        let low = Rectangle { re_min: -4.0, re_max: 4.0, im_min: -4.0, im_max: -1e-3 };
        let tps_low = find_turning_points(&m, (0, 1), low).unwrap();
        assert_eq!(tps_low.len(), 1);
        assert!((tps_low[0].location - c(0.0, -1.0)).norm() < 1e-10);
    }

    #[test]
    fn n3_turning_points_on_unit_circle() {
        let m = n3_eps(0.0);
        let tps = find_all_turning_points(&m, upper(4.0)).unwrap();
        assert_eq!(tps.len(), 3);
        use std::f64::consts::PI;
        for want_arg in [PI / 6.0, PI / 2.0, 5.0 * PI / 6.0] {
            let want = c(want_arg.cos(), want_arg.sin());
            assert!(
                tps.iter().any(|tp| (tp.location - want).norm() < 1e-8),
                "missing turning point near {want}"
            );
        }
        for tp in &tps {
            assert!((tp.location.norm() - 1.0).abs() < 1e-9, "unit modulus");
            assert_eq!(tp.order, 1);
            assert_eq!(tp.pair, (0, 1));
        }
    }

    #[test]
    fn conjugate_symmetry_at_zero_epsilon() {
        for m in [lz_eps(0.0), n3_eps(0.0), lzsm3()] {
            let w = 8.0;
            let up = find_all_turning_points(&m, upper(w)).unwrap();
            let low = Rectangle { re_min: -w, re_max: w, im_min: -w, im_max: -1e-3 };
            let down = find_all_turning_points(&m, low).unwrap();
            assert_eq!(up.len(), down.len());
            for tp in &up {
                let mirror = tp.location.conj();
                assert!(
                    down.iter().any(|o| (o.location - mirror).norm() < 1e-8),
                    "{} unmatched under conjugation",
                    tp.location
                );
            }
        }
    }

    #[test]
    fn lzsm3_turning_point_census_and_oracle() {
        let m = lzsm3();
        let tps = find_all_turning_points(&m, upper(8.0)).unwrap();
        // 1 point for the top pair (0,1), 2 for the bottom pair (1,2)
        let p01: Vec<_> = tps.iter().filter(|tp| tp.pair == (0, 1)).collect();
        let p12: Vec<_> = tps.iter().filter(|tp| tp.pair == (1, 2)).collect();
        assert_eq!(p01.len(), 1, "pair (0,1): {:?}", tps);
        assert_eq!(p12.len(), 2, "pair (1,2): {:?}", tps);

        // independent oracle: zeros of the cubic discriminant assembled from
        // characteristic-polynomial coefficients, not from eigenvalues
        let disc_formula = |t: C64| -> Result<C64, AnalyticError> {
            let h = m.evaluate_h(t);
            // det(λI − H) = λ³ + pλ² + qλ + r for a 3×3 matrix
            let tr = h[0][0] + h[1][1] + h[2][2];
            let minors = (h[0][0] * h[1][1] - h[0][1] * h[1][0])
                + (h[0][0] * h[2][2] - h[0][2] * h[2][0])
                + (h[1][1] * h[2][2] - h[1][2] * h[2][1]);
            let det = h[0][0] * (h[1][1] * h[2][2] - h[1][2] * h[2][1])
                - h[0][1] * (h[1][0] * h[2][2] - h[1][2] * h[2][0])
                + h[0][2] * (h[1][0] * h[2][1] - h[1][1] * h[2][0]);
            let (p, q, r) = (-tr, minors, -det);
            Ok(p * q * r * 18.0 - p * p * p * r * 4.0 + p * p * q * q - q * q * q * 4.0
                - r * r * 27.0)
        };
        for tp in &tps {
            let polished = find_root(disc_formula, tp.location, 1e-13, 60).unwrap();
            assert!(
                (polished.location - tp.location).norm() < 1e-7,
                "oracle disagrees at {}",
                tp.location
            );
        }
    }

    #[test]
    fn directions_are_trisected_and_one_heads_down() {
        let m = lz_eps(0.05);
        let tps = find_all_turning_points(&m, upper(4.0)).unwrap();
        assert_eq!(tps.len(), 1);
        let dirs = initial_directions(&m, &tps[0]).unwrap();
        for a in 0..3 {
            for b in (a + 1)..3 {
                let sep = (dirs[a] / dirs[b]).arg().abs();
                let third = 2.0 * std::f64::consts::PI / 3.0;
                assert!((sep - third).abs() < 1e-6, "separation {sep}");
            }
        }
        let down = dirs.iter().filter(|d| d.im < 0.0).count();
        assert_eq!(down, 1, "exactly one direction heads toward the axis");
    }

    #[test]
    fn lz_unperturbed_graph_is_degenerate() {
        let m = lz_eps(0.0);
        let g = build_graph(&m, None, EpsilonPolicy::default()).unwrap();
        assert!(
            g.degeneracy_flags.iter().any(|f| f.contains("terminates on turning point")),
            "flags: {:?}",
            g.degeneracy_flags
        );
        // the degenerate saddle line runs straight down the imaginary axis
        assert!(g
            .lines
            .iter()
            .any(|l| matches!(l.termination, Termination::HitTurningPoint(_))));
    }

    #[test]
    fn lz_perturbed_graph_has_two_crossings() {
        let m = lz_eps(0.05);
        let g = build_graph(&m, None, EpsilonPolicy::default()).unwrap();
        assert!(g.degeneracy_flags.is_empty(), "flags: {:?}", g.degeneracy_flags);
        assert_eq!(g.lines.len(), 6);
        assert!(g
            .lines
            .iter()
            .all(|l| l.termination == Termination::ReachedMaxRadius));
        assert_eq!(g.crossings.len(), 2);
        assert!(g.crossings[0].t < g.crossings[1].t);
        for l in &g.lines {
            assert!(l.max_residual <= 1e-3);
        }
    }

    #[test]
    fn n3_perturbed_graph_has_six_crossings() {
        let m = n3_eps(0.05);
        let g = build_graph(&m, None, EpsilonPolicy::default()).unwrap();
        assert!(g.degeneracy_flags.is_empty(), "flags: {:?}", g.degeneracy_flags);
        assert_eq!(g.lines.len(), 18);
        assert_eq!(g.crossings.len(), 6);
        // one crossing per turning point
        let mut origins: Vec<usize> =
            g.crossings.iter().map(|c| g.lines[c.line].origin).collect();
        origins.sort_unstable();
        origins.dedup();
        assert_eq!(origins.len(), 6);
    }

    #[test]
    fn lzsm3_crossing_order_matches_product_structure() {
        // at the exact reference parameters the graph is degenerate (saddle
        // connections between conjugate turning points); the escalation
        // policy resolves it at ε = 0.01
        let m = lzsm3();
        let policy = EpsilonPolicy { auto_escalate: true, flip_sign: false };
        let g = build_graph(&m, None, policy).unwrap();
        assert!(g.degeneracy_flags.is_empty(), "flags: {:?}", g.degeneracy_flags);
        assert!((g.epsilon_used - 0.01).abs() < 1e-15);
        assert_eq!(g.crossings.len(), 6, "crossings: {:?}", g.crossings);
        let pattern: Vec<((usize, usize), bool)> = g
            .crossings
            .iter()
            .map(|cr| {
                let line = &g.lines[cr.line];
                let tp = &g.turning_points[line.origin];
                (line.pair, tp.location.im > 0.0)
            })
            .collect();
        let want = [
            ((1, 2), false),
            ((1, 2), true),
            ((0, 1), false),
            ((0, 1), true),
            ((1, 2), false),
            ((1, 2), true),
        ];
        assert_eq!(pattern, want, "crossing structure");
    }

    #[test]
    fn epsilon_stability_of_crossing_structure() {
        let lzsm3_eps = |e: f64| lzsm3().with_epsilon(e).unwrap();
        for mk in [lz_eps as fn(f64) -> ModelSpec, n3_eps, lzsm3_eps] {
            let g1 = build_graph(&mk(0.01), None, EpsilonPolicy::default()).unwrap();
            let g2 = build_graph(&mk(0.05), None, EpsilonPolicy::default()).unwrap();
            assert_eq!(g1.crossings.len(), g2.crossings.len());
            let labels = |g: &StokesGraph| -> Vec<usize> {
                g.crossings.iter().map(|c| g.lines[c.line].dominant_index).collect()
            };
            assert_eq!(labels(&g1), labels(&g2));
        }
    }

    #[test]
    fn escalation_resolves_degenerate_graph() {
        let m = lz_eps(0.0);
        let policy = EpsilonPolicy { auto_escalate: true, flip_sign: false };
        let g = build_graph(&m, None, policy).unwrap();
        assert!(g.degeneracy_flags.is_empty());
        assert!((g.epsilon_used - 0.01).abs() < 1e-15, "escalated to 0.01");
    }

    #[test]
    fn exports_are_deterministic() {
        let m = lz_eps(0.05);
        let g1 = build_graph(&m, None, EpsilonPolicy::default()).unwrap();
        let g2 = build_graph(&m, None, EpsilonPolicy::default()).unwrap();
        assert_eq!(graph_csv(&g1), graph_csv(&g2));
        assert_eq!(turning_points_csv(&g1.turning_points), turning_points_csv(&g2.turning_points));
        let svg = graph_svg(&g1);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
    }
}
