//! Complex-path quadrature, root finding, residues and zero counting.
//!
//! These are the substrate primitives for everything upstream: Stokes-line
//! integrals, turning-point location, connection coefficients. Integrands are
//! fallible callables so that branch-continued evaluations can abort cleanly
//! (e.g. when a path strays onto the wrong sheet).

use num_complex::Complex64 as C64;

#[derive(Debug, thiserror::Error)]
pub enum AnalyticError {
    #[error("degenerate path: needs at least two distinct vertices")]
    DegeneratePath,
    #[error("closed path must be counterclockwise (signed area {0:.3e})")]
    ClockwisePath(f64),
    #[error("quadrature did not converge: error {error:.3e} after {evaluations} evaluations")]
    QuadratureNonConvergence { error: f64, evaluations: usize },
    #[error("integrand returned a non-finite value at t = {at}")]
    NonFinite { at: C64 },
    #[error("integrand evaluation failed at t = {at}: {reason}")]
    Eval { at: C64, reason: String },
    #[error("root search diverged; last iterate {last} with |f| = {f_abs:.3e}")]
    RootDivergence { last: C64, f_abs: f64 },
    #[error("derivative vanished near {at}; zero may have order > 1")]
    DerivativeVanishes { at: C64 },
    #[error("residue inconsistent across radii ({inner} vs {outer}); pole not simple or contour not isolating")]
    ResidueInconsistent { inner: C64, outer: C64 },
    #[error("zero too close to the counting boundary after {retries} nudges")]
    ZeroOnBoundary { retries: usize },
    #[error("winding number {winding:.4} is not close to an integer")]
    NonIntegerWinding { winding: f64 },
}

type AResult<T> = Result<T, AnalyticError>;

/// Piecewise-linear integration path (vertices in order). `closed` paths are
/// traversed back to the first vertex and must be oriented counterclockwise.
#[derive(Clone, Debug)]
pub struct PathPolyline {
    vertices: Vec<C64>,
    closed: bool,
}

impl PathPolyline {
    pub fn open(vertices: Vec<C64>) -> AResult<Self> {
        Self::validate(&vertices)?;
        Ok(PathPolyline { vertices, closed: false })
    }

    pub fn closed(vertices: Vec<C64>) -> AResult<Self> {
        Self::validate(&vertices)?;
        if vertices.len() < 3 {
            return Err(AnalyticError::DegeneratePath);
        }
        // shoelace; counterclockwise means positive signed area
        let mut area = 0.0;
        for k in 0..vertices.len() {
            let a = vertices[k];
            let b = vertices[(k + 1) % vertices.len()];
            area += a.re * b.im - b.re * a.im;
        }
        if area <= 0.0 {
            return Err(AnalyticError::ClockwisePath(area / 2.0));
        }
        Ok(PathPolyline { vertices, closed: true })
    }

    pub fn segment(a: C64, b: C64) -> AResult<Self> {
        Self::open(vec![a, b])
    }

    fn validate(vertices: &[C64]) -> AResult<()> {
        if vertices.len() < 2 {
            return Err(AnalyticError::DegeneratePath);
        }
        for w in vertices.windows(2) {
            if (w[0] - w[1]).norm() == 0.0 {
                return Err(AnalyticError::DegeneratePath);
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[C64] {
        &self.vertices
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Consecutive segment endpoints, including the closing segment.
    pub fn segments(&self) -> Vec<(C64, C64)> {
        let mut segs: Vec<(C64, C64)> = self.vertices.windows(2).map(|w| (w[0], w[1])).collect();
        if self.closed {
            segs.push((*self.vertices.last().unwrap(), self.vertices[0]));
        }
        segs
    }

    pub fn length(&self) -> f64 {
        self.segments().iter().map(|(a, b)| (b - a).norm()).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct QuadratureResult {
    pub value: C64,
    /// Conservative absolute error estimate (sum of per-panel |K15 - G7|).
    pub error: f64,
    pub evaluations: usize,
}

// 15-point Kronrod / 7-point Gauss pair (positive abscissae; QUADPACK QK15).
const XGK: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

struct PanelEstimate {
    kronrod: C64,
    error: f64,
}

fn qk15<F>(f: &mut F, a: C64, b: C64, evals: &mut usize) -> AResult<PanelEstimate>
where
    F: FnMut(C64) -> AResult<C64>,
{
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut eval = |u: f64| -> AResult<C64> {
        let t = mid + half * u;
        *evals += 1;
        let v = f(t)?;
        if !v.re.is_finite() || !v.im.is_finite() {
            return Err(AnalyticError::NonFinite { at: t });
        }
        Ok(v)
    };

    let fc = eval(0.0)?;
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let fp = eval(XGK[j])?;
        let fm = eval(-XGK[j])?;
        kronrod += WGK[j] * (fp + fm);
        if j % 2 == 1 {
            // odd-index Kronrod abscissae are the embedded Gauss points
            gauss += WG[j / 2] * (fp + fm);
        }
    }
    let kronrod = kronrod * half;
    let gauss = gauss * half;
    Ok(PanelEstimate { kronrod, error: (kronrod - gauss).norm() })
}

/// Adaptive integration of `f` along a polyline. The error target per path is
/// `rel_tol * |value|` with a small absolute floor; panels are bisected until
/// their Kronrod/Gauss deviation fits a proportional share.
///
/// Evaluation points proceed monotonically along the path segment by segment,
/// which keeps branch-continued integrands (stateful walkers) cheap.
pub fn integrate_path<F>(mut f: F, path: &PathPolyline, rel_tol: f64) -> AResult<QuadratureResult>
where
    F: FnMut(C64) -> AResult<C64>,
{
    const MAX_DEPTH: usize = 48;
    const ABS_FLOOR: f64 = 1e-300;

    let mut evals = 0usize;
    let mut total = C64::new(0.0, 0.0);
    let mut err_total = 0.0f64;
    let length = path.length();

    for (a, b) in path.segments() {
        let seg_share = (b - a).norm() / length;
        // first pass to get a scale for the tolerance
        let first = qk15(&mut f, a, b, &mut evals)?;
        let scale0 = first.kronrod.norm();
        // stack of (a, b, depth, estimate)
        let mut stack = vec![(a, b, 0usize, first)];
        while let Some((a, b, depth, est)) = stack.pop() {
            let running_scale = (total.norm() + scale0).max(ABS_FLOOR);
            let tol = (rel_tol * running_scale * seg_share).max(1e-16 * running_scale);
            // Panels get a tolerance share proportional to 2^-depth; this is
            // conservative but avoids tracking a global budget.
            let panel_tol = tol * 0.5f64.powi(depth.min(40) as i32);
            if est.error <= panel_tol.max(rel_tol * est.kronrod.norm()) || depth >= MAX_DEPTH {
                if depth >= MAX_DEPTH && est.error > tol {
                    return Err(AnalyticError::QuadratureNonConvergence {
                        error: est.error,
                        evaluations: evals,
                    });
                }
                total += est.kronrod;
                err_total += est.error;
                continue;
            }
            let mid = 0.5 * (a + b);
            // Push right first so the left half is processed next: evaluation
            // order then stays monotone along the segment.
            let right = qk15(&mut f, mid, b, &mut evals)?;
            let left = qk15(&mut f, a, mid, &mut evals)?;
            stack.push((mid, b, depth + 1, right));
            stack.push((a, mid, depth + 1, left));
        }
    }

    Ok(QuadratureResult { value: total, error: err_total, evaluations: evals })
}

#[derive(Clone, Copy, Debug)]
pub struct RootResult {
    pub location: C64,
    pub f_abs: f64,
    pub iterations: usize,
}

/// Newton iteration with a central-difference derivative
/// (step `1e-6 * (1 + |z|)`). Converges when the Newton step falls below
/// `tol * (1 + |z|)` and the residual is small relative to the local scale
/// `|f'| * (1 + |z|)`.
pub fn find_root<F>(mut f: F, seed: C64, tol: f64, max_iter: usize) -> AResult<RootResult>
where
    F: FnMut(C64) -> AResult<C64>,
{
    let mut z = seed;
    let mut prev_step = f64::INFINITY;
    let mut grow_count = 0usize;

    for it in 0..max_iter {
        let fz = f(z)?;
        if !fz.re.is_finite() || !fz.im.is_finite() {
            return Err(AnalyticError::NonFinite { at: z });
        }
        let h = 1e-6 * (1.0 + z.norm());
        let fp = (f(z + C64::new(h, 0.0))? - f(z - C64::new(h, 0.0))?) / C64::new(2.0 * h, 0.0);
        let dscale = fp.norm();
        if dscale < 1e-14 * (1.0 + fz.norm()) / (1.0 + z.norm()) {
            return Err(AnalyticError::DerivativeVanishes { at: z });
        }
        let step = fz / fp;
        let step_norm = step.norm();
        z -= step;

        if step_norm > 4.0 * prev_step && step_norm > tol * (1.0 + z.norm()) {
            grow_count += 1;
            if grow_count >= 3 {
                return Err(AnalyticError::RootDivergence { last: z, f_abs: fz.norm() });
            }
        } else {
            grow_count = 0;
        }
        prev_step = step_norm;

        if step_norm <= tol * (1.0 + z.norm()) {
            let fz = f(z)?;
            let local_scale = (dscale * (1.0 + z.norm())).max(1e-30);
            if fz.norm() <= 1e-10 * local_scale || fz.norm() <= 1e-13 {
                return Ok(RootResult { location: z, f_abs: fz.norm(), iterations: it + 1 });
            }
        }
    }
    let fz = f(z)?;
    Err(AnalyticError::RootDivergence { last: z, f_abs: fz.norm() })
}

#[derive(Clone, Copy, Debug)]
pub struct ResidueResult {
    pub value: C64,
    pub error: f64,
    pub evaluations: usize,
}

fn circle_integral<F>(
    f: &mut F,
    center: C64,
    radius: f64,
    evals: &mut usize,
) -> AResult<C64>
where
    F: FnMut(C64) -> AResult<C64>,
{
    // (1/2πi) ∮ f dt on |t - center| = radius via the trapezoid rule, which
    // converges exponentially for integrands analytic in an annulus. Samples
    // are taken in order around the circle (walker-friendly); the count is
    // doubled until the value settles.
    let mut prev = C64::new(f64::NAN, f64::NAN);
    let mut m = 64usize;
    loop {
        let mut acc = C64::new(0.0, 0.0);
        for k in 0..m {
            let th = 2.0 * std::f64::consts::PI * (k as f64) / (m as f64);
            let dir = C64::new(th.cos(), th.sin());
            let t = center + radius * dir;
            *evals += 1;
            let v = f(t)?;
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(AnalyticError::NonFinite { at: t });
            }
            // f(t) * dt/dθ / (2πi) with dt/dθ = i r e^{iθ}
            acc += v * dir;
        }
        let val = acc * radius / (m as f64);
        if prev.re.is_finite() && (val - prev).norm() <= 1e-12 * (1.0 + val.norm()) {
            return Ok(val);
        }
        prev = val;
        if m >= 4096 {
            return Ok(val);
        }
        m *= 2;
    }
}

/// Residue of `f` at `center` via a counterclockwise contour integral at
/// `radius` cross-checked against `radius / 2`. The contour must isolate the
/// singularity; disagreement across the radii is reported as an error.
pub fn residue_at<F>(mut f: F, center: C64, radius: f64) -> AResult<ResidueResult>
where
    F: FnMut(C64) -> AResult<C64>,
{
    let mut evals = 0usize;
    let outer = circle_integral(&mut f, center, radius, &mut evals)?;
    let inner = circle_integral(&mut f, center, radius * 0.5, &mut evals)?;
    let dev = (outer - inner).norm();
    if dev > 1e-6 * (1.0 + outer.norm()) {
        return Err(AnalyticError::ResidueInconsistent { inner, outer });
    }
    Ok(ResidueResult { value: outer, error: dev, evaluations: evals })
}

/// Axis-aligned counting window in the complex plane.
#[derive(Clone, Copy, Debug)]
pub struct Rectangle {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rectangle {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Rectangle { re_min, re_max, im_min, im_max }
    }

    pub fn corners(&self) -> [C64; 4] {
        [
            C64::new(self.re_min, self.im_min),
            C64::new(self.re_max, self.im_min),
            C64::new(self.re_max, self.im_max),
            C64::new(self.re_min, self.im_max),
        ]
    }

    pub fn diagonal(&self) -> f64 {
        ((self.re_max - self.re_min).powi(2) + (self.im_max - self.im_min).powi(2)).sqrt()
    }

    pub fn contains(&self, z: C64) -> bool {
        z.re >= self.re_min && z.re <= self.re_max && z.im >= self.im_min && z.im <= self.im_max
    }

    fn expanded(&self, d: f64) -> Rectangle {
        Rectangle {
            re_min: self.re_min - d,
            re_max: self.re_max + d,
            im_min: self.im_min - d,
            im_max: self.im_max + d,
        }
    }
}

/// Number of zeros of `f` (with multiplicity) inside `rect`, by the argument
/// principle: the winding of arg f around the counterclockwise boundary.
/// Phase steps are kept below π/2 by adaptive subdivision. If `f` comes close
/// to zero *on* the boundary, the window is nudged outward a few times before
/// giving up.
pub fn count_zeros<F>(mut f: F, rect: Rectangle) -> AResult<usize>
where
    F: FnMut(C64) -> AResult<C64>,
{
    const MAX_NUDGES: usize = 6;
    let mut r = rect;
    'retry: for retry in 0..=MAX_NUDGES {
        let corners = r.corners();
        let mut winding = 0.0f64;
        // |f| scale gathered along the boundary, for the near-zero test
        let mut min_abs = f64::INFINITY;
        let mut max_abs = 0.0f64;

        let mut values: Vec<(f64, C64)> = Vec::new(); // (global param, f)
        for e in 0..4 {
            let a = corners[e];
            let b = corners[(e + 1) % 4];
            // Phase-resolved sampling of edge e. A uniform seed grid guards
            // against aliasing (a ~2π phase step between two samples looks
            // like ~0); adaptive bisection then keeps steps below π/2.
            const SEED: usize = 32;
            let mut samples: Vec<(f64, C64)> = Vec::with_capacity(2 * SEED);
            for k in 0..=SEED {
                let u = k as f64 / SEED as f64;
                let t = a + (b - a) * C64::new(u, 0.0);
                let v = f(t)?;
                if !(v.re.is_finite() && v.im.is_finite()) {
                    return Err(AnalyticError::NonFinite { at: t });
                }
                samples.push((u, v));
            }
            let mut stack: Vec<(f64, C64, f64, C64)> = samples
                .windows(2)
                .map(|w| (w[0].0, w[0].1, w[1].0, w[1].1))
                .collect();
            let mut work = 0usize;
            while let Some((u0, f0, u1, f1)) = stack.pop() {
                work += 1;
                if work > 40000 {
                    return Err(AnalyticError::QuadratureNonConvergence {
                        error: f64::INFINITY,
                        evaluations: work,
                    });
                }
                let dphi = (f1 / f0).arg().abs();
                if dphi > std::f64::consts::FRAC_PI_2 && (u1 - u0) > 1e-12 {
                    let um = 0.5 * (u0 + u1);
                    let t = a + (b - a) * C64::new(um, 0.0);
                    let fm = f(t)?;
                    if !(fm.re.is_finite() && fm.im.is_finite()) {
                        return Err(AnalyticError::NonFinite { at: t });
                    }
                    samples.push((um, fm));
                    stack.push((um, fm, u1, f1));
                    stack.push((u0, f0, um, fm));
                }
            }
            samples.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            for (u, v) in samples {
                let abs = v.norm();
                min_abs = min_abs.min(abs);
                max_abs = max_abs.max(abs);
                values.push((e as f64 + u, v));
            }
        }

        // Near-zero on the boundary: nudge outward and retry.
        if min_abs <= 1e-9 * max_abs.max(1e-30) {
            if retry == MAX_NUDGES {
                return Err(AnalyticError::ZeroOnBoundary { retries: retry });
            }
            r = r.expanded(1e-6 * r.diagonal() * (retry as f64 + 1.0).exp());
            continue 'retry;
        }

        values.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
        for w in values.windows(2) {
            let (_, f0) = w[0];
            let (_, f1) = w[1];
            winding += (f1 / f0).arg();
        }
        // closing step back to the first sample
        let first = values.first().unwrap().1;
        let last = values.last().unwrap().1;
        winding += (first / last).arg();

        let n = winding / (2.0 * std::f64::consts::PI);
        let rounded = n.round();
        if (n - rounded).abs() > 0.05 {
            if retry == MAX_NUDGES {
                return Err(AnalyticError::NonIntegerWinding { winding: n });
            }
            r = r.expanded(1e-6 * r.diagonal() * (retry as f64 + 1.0).exp());
            continue 'retry;
        }
        if rounded < -0.5 {
            // zeros counted negatively would mean poles inside; report as
            // non-integer pathology rather than silently clamping
            return Err(AnalyticError::NonIntegerWinding { winding: n });
        }
        return Ok(rounded as usize);
    }
    unreachable!()
}
