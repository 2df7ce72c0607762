//! Polynomial Hamiltonian models: generic files and the two built-in families.
//!
//! A model is an N×N matrix of polynomials in (complex) time `t`, Hermitian on
//! the real axis, together with the adiabaticity parameter `eta` and an
//! optional degeneracy-breaking perturbation `epsilon`. The perturbation
//! multiplies user-designated coefficients by `1 + i·epsilon` (for the
//! built-ins: the leading coefficient of every non-constant diagonal entry,
//! i.e. the sweep velocities `v → v(1+iε)`); it is analytic-continuation
//! machinery for resolving degenerate Stokes graphs, not a physical
//! non-Hermitian feature.
//!
//! Built-ins:
//!
//! * `nlzsm` — the polynomially swept two-level family
//!   `[[v tⁿ, conj(Δ)], [Δ, −v tⁿ]]` with parameters `n ≥ 1`, `v > 0`,
//!   complex `Δ` (keys `delta`, `delta_im`).
//! * `lzsm3` — the three-level crossing
//!   `[[v₁ t, Δ₁₂, Δ₁₃], [Δ₁₂, v₂ t + a, Δ₂₃], [Δ₁₃, Δ₂₃, 0]]`; defaults are
//!   the reference parameter set `v₁=1, v₂=2, a=4, Δ₁₂=Δ₁₃=Δ₂₃=0.5, η=1`.
//!
//! Models load from TOML files carrying either explicit `entries` (row-major
//! polynomials, coefficients as `[re, im]` pairs in ascending powers of `t`)
//! or a `[builtin]` table; see the shipped examples and the FORMATS document.
//! Validation rejects non-Hermitian bases, non-positive `eta`, and spectra
//! that degenerate somewhere on the real axis (e.g. `nlzsm` with `Δ = 0`),
//! since everything downstream assumes a strictly gapped real-time spectrum.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64 as C64;
use serde::Deserialize;

use crate::eig;
use crate::linalg::CMat;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file is not valid TOML: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("model must declare exactly one of `entries` or `builtin`")]
    EntriesXorBuiltin,
    #[error("`dimension` is required (and must be ≥ 2) when `entries` is given")]
    MissingDimension,
    #[error("dimension must be ≥ 2, got {0}")]
    BadDimension(usize),
    #[error("eta must be positive, got {0}")]
    BadEta(f64),
    #[error("expected {expected} entry polynomials (row-major N×N), got {got}")]
    EntryCount { expected: usize, got: usize },
    #[error("entries are not Hermitian on the real axis: entry ({row},{col}) is not the conjugate polynomial of ({col},{row})")]
    NotHermitian { row: usize, col: usize },
    #[error("perturb target ({row},{col}) power {power} is out of range")]
    BadPerturbTarget { row: usize, col: usize, power: usize },
    #[error("unknown builtin `{0}` (expected `nlzsm` or `lzsm3`)")]
    UnknownBuiltin(String),
    #[error("builtin parameter `{name}`: {reason}")]
    BadParam { name: String, reason: String },
    #[error("unknown parameter `{0}` for this model")]
    UnknownParam(String),
    #[error("spectrum degenerates on the real axis near t = {t:.6}: gap {gap:.3e} (levels must stay separated for all real t)")]
    GaplessRealAxis { t: f64, gap: f64 },
}

type MResult<T> = Result<T, ModelError>;

/// Polynomial with complex coefficients, ascending powers. Trailing zero
/// coefficients are trimmed on construction so `degree` is meaningful.
#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    coeffs: Vec<C64>,
}

impl Poly {
    pub fn new(mut coeffs: Vec<C64>) -> Self {
        while coeffs.len() > 1 && coeffs.last().map_or(false, |c| c.norm() == 0.0) {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(C64::new(0.0, 0.0));
        }
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly::new(vec![])
    }

    pub fn constant(c: C64) -> Self {
        Poly::new(vec![c])
    }

    /// Coefficients in ascending powers (at least one entry).
    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.norm() == 0.0)
    }

    /// Horner evaluation at complex `t`.
    pub fn eval(&self, t: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * t + c;
        }
        acc
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() == 1 {
            return Poly::zero();
        }
        let d: Vec<C64> = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, &c)| c * (k as f64))
            .collect();
        Poly::new(d)
    }

    /// Coefficient-wise conjugate: for real `t`, `conj(p(t)) = p_conj(t)`.
    pub fn conj_coeffs(&self) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c.conj()).collect())
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = C64::new(0.0, 0.0);
        let c: Vec<C64> = (0..n)
            .map(|k| {
                self.coeffs.get(k).copied().unwrap_or(zero)
                    + other.coeffs.get(k).copied().unwrap_or(zero)
            })
            .collect();
        Poly::new(c)
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        let mut c = vec![C64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                c[i + j] += a * b;
            }
        }
        Poly::new(c)
    }

    pub fn scale(&self, s: C64) -> Poly {
        Poly::new(self.coeffs.iter().map(|&c| c * s).collect())
    }
}

/// Which built-in family a model came from, if any; retained so parameter
/// sweeps can rebuild the entries from updated parameters.
#[derive(Clone, Debug, PartialEq)]
enum Origin {
    Generic,
    Builtin { name: String, params: BTreeMap<String, f64> },
}

/// Immutable model: validated entries plus `eta`/`epsilon`. All `with_*`
/// methods return a fresh, revalidated copy.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    label: String,
    dim: usize,
    eta: f64,
    epsilon: f64,
    /// Unperturbed (Hermitian) entry polynomials, row-major.
    base: Vec<Poly>,
    /// Coefficient slots scaled by `1 + i·epsilon`: (row, col, power).
    perturb: Vec<(usize, usize, usize)>,
    /// Effective entries with the perturbation applied (equals `base` when
    /// `epsilon == 0`); precomputed because evaluation is hot.
    effective: Vec<Poly>,
    /// Derivatives of the effective entries.
    effective_dot: Vec<Poly>,
    origin: Origin,
}

impl ModelSpec {
    /// Build a generic model from explicit entry polynomials (row-major).
    pub fn from_entries(
        label: impl Into<String>,
        dim: usize,
        eta: f64,
        epsilon: f64,
        entries: Vec<Poly>,
        perturb: Vec<(usize, usize, usize)>,
    ) -> MResult<Self> {
        Self::assemble(label.into(), dim, eta, epsilon, entries, perturb, Origin::Generic)
    }

    fn assemble(
        label: String,
        dim: usize,
        eta: f64,
        epsilon: f64,
        base: Vec<Poly>,
        perturb: Vec<(usize, usize, usize)>,
        origin: Origin,
    ) -> MResult<Self> {
        if dim < 2 {
            return Err(ModelError::BadDimension(dim));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(ModelError::BadEta(eta));
        }
        if base.len() != dim * dim {
            return Err(ModelError::EntryCount { expected: dim * dim, got: base.len() });
        }
        // Hermitian base: entry (j,k) must be the conjugate polynomial of (k,j).
        for j in 0..dim {
            for k in j..dim {
                let a = &base[j * dim + k];
                let b = base[k * dim + j].conj_coeffs();
                let len = a.coeffs().len().max(b.coeffs().len());
                for m in 0..len {
                    let ca = a.coeffs().get(m).copied().unwrap_or_default();
                    let cb = b.coeffs().get(m).copied().unwrap_or_default();
                    if (ca - cb).norm() > 1e-12 * (1.0 + ca.norm().max(cb.norm())) {
                        return Err(ModelError::NotHermitian { row: j, col: k });
                    }
                }
            }
        }
        for &(r, c, p) in &perturb {
            if r >= dim || c >= dim || p > base[r * dim + c].degree() {
                return Err(ModelError::BadPerturbTarget { row: r, col: c, power: p });
            }
        }
        let effective = apply_perturbation(&base, dim, &perturb, epsilon);
        let effective_dot = effective.iter().map(Poly::derivative).collect();
        let spec = ModelSpec {
            label,
            dim,
            eta,
            epsilon,
            base,
            perturb,
            effective,
            effective_dot,
            origin,
        };
        spec.check_real_axis_gap()?;
        Ok(spec)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Effective (perturbation-applied) entry polynomial at (row, col).
    pub fn entry(&self, row: usize, col: usize) -> &Poly {
        &self.effective[row * self.dim + col]
    }

    /// Same model with a different `eta` (geometry is unchanged; only phases
    /// and probabilities depend on it).
    pub fn with_eta(&self, eta: f64) -> MResult<Self> {
        let mut m = self.clone();
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(ModelError::BadEta(eta));
        }
        m.eta = eta;
        Ok(m)
    }

    /// Same model with a different degeneracy-breaking `epsilon`.
    pub fn with_epsilon(&self, epsilon: f64) -> MResult<Self> {
        Self::assemble(
            self.label.clone(),
            self.dim,
            self.eta,
            epsilon,
            self.base.clone(),
            self.perturb.clone(),
            self.origin.clone(),
        )
    }

    /// Rebuild with one named parameter changed. `eta` and `epsilon` work for
    /// every model; built-ins additionally accept their family parameters
    /// (`n`, `v`, `delta`, `delta_im` / `v1`, `v2`, `a`, `d12`, `d13`, `d23`).
    pub fn with_param(&self, name: &str, value: f64) -> MResult<Self> {
        match name {
            "eta" => return self.with_eta(value),
            "epsilon" => return self.with_epsilon(value),
            _ => {}
        }
        match &self.origin {
            Origin::Generic => Err(ModelError::UnknownParam(name.to_string())),
            Origin::Builtin { name: family, params } => {
                if !params.contains_key(name) {
                    return Err(ModelError::UnknownParam(name.to_string()));
                }
                let mut params = params.clone();
                params.insert(name.to_string(), value);
                params.insert("eta".to_string(), self.eta);
                params.insert("epsilon".to_string(), self.epsilon);
                builtin(family, &params)
            }
        }
    }

    /// Names accepted by [`ModelSpec::with_param`] besides `eta`/`epsilon`.
    pub fn sweepable_params(&self) -> Vec<String> {
        match &self.origin {
            Origin::Generic => vec![],
            Origin::Builtin { params, .. } => params.keys().cloned().collect(),
        }
    }

    /// Evaluate H(t) with the perturbation applied, as row-major rows.
    pub fn evaluate_h(&self, t: C64) -> Vec<Vec<C64>> {
        (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self.entry(r, c).eval(t)).collect())
            .collect()
    }

    pub(crate) fn h_mat(&self, t: C64) -> CMat {
        let mut m = CMat::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                m[(r, c)] = self.effective[r * self.dim + c].eval(t);
            }
        }
        m
    }

    /// dH/dt at `t` (effective entries).
    pub(crate) fn hdot_mat(&self, t: C64) -> CMat {
        let mut m = CMat::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                m[(r, c)] = self.effective_dot[r * self.dim + c].eval(t);
            }
        }
        m
    }

    /// Instantaneous eigenvalues (unordered) at complex `t`, optionally seeded
    /// with nearby values for continuation.
    pub(crate) fn eigenvalues(&self, t: C64, seeds: Option<&[C64]>) -> Vec<C64> {
        eig::poly_roots(&eig::char_poly(&self.h_mat(t)), seeds)
    }

    /// Characteristic time over which the diagonal sweep changes by O(1):
    /// `(1/max_v)^(1/deg)` for the steepest diagonal entry. Used to scale
    /// default integration windows and search boxes.
    pub fn sweep_scale(&self) -> f64 {
        let mut scale: f64 = 1.0;
        for d in 0..self.dim {
            let p = &self.base[d * self.dim + d];
            let deg = p.degree();
            if deg >= 1 {
                let lead = p.coeffs()[deg].norm();
                if lead > 0.0 {
                    scale = scale.min(lead.powf(-1.0 / deg as f64));
                }
            }
        }
        scale
    }

    /// Reject spectra that touch somewhere on the real axis. Coarse grid plus
    /// two refinement passes around the worst point; the gap is compared
    /// against the local energy scale so large far-field energies do not mask
    /// a pinch near the origin.
    fn check_real_axis_gap(&self) -> MResult<()> {
        let half = 12.0 * self.sweep_scale().max(1.0);
        let (mut lo, mut hi) = (-half, half);
        let mut worst = (0.0f64, f64::INFINITY); // (t, relative gap)
        for pass in 0..3 {
            let n = if pass == 0 { 241 } else { 41 };
            for k in 0..n {
                let t = lo + (hi - lo) * (k as f64) / ((n - 1) as f64);
                let rel = self.relative_gap_at(t);
                if rel < worst.1 {
                    worst = (t, rel);
                }
            }
            let step = (hi - lo) / 40.0;
            lo = worst.0 - step;
            hi = worst.0 + step;
        }
        if worst.1 <= 1e-6 {
            return Err(ModelError::GaplessRealAxis { t: worst.0, gap: worst.1 });
        }
        Ok(())
    }

    /// Minimum adjacent eigenvalue gap at real `t`, relative to the local
    /// energy scale. Uses the unperturbed (Hermitian) entries.
    fn relative_gap_at(&self, t: f64) -> f64 {
        let mut m = CMat::zeros(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                m[(r, c)] = self.base[r * self.dim + c].eval(C64::new(t, 0.0));
            }
        }
        let mut ev = eig::poly_roots(&eig::char_poly(&m), None);
        ev.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
        let scale = 1.0 + ev.iter().map(|e| e.norm()).fold(0.0f64, f64::max);
        let mut gap = f64::INFINITY;
        for w in ev.windows(2) {
            gap = gap.min((w[0] - w[1]).norm());
        }
        gap / scale
    }

    /// Load from a TOML file; see the module docs for the schema.
    pub fn from_toml_file(path: impl AsRef<Path>) -> MResult<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> MResult<Self> {
        let file: ModelFile = toml::from_str(text)?;
        match (file.entries, file.builtin) {
            (Some(entries), None) => {
                let dim = file.dimension.ok_or(ModelError::MissingDimension)?;
                let polys: Vec<Poly> = entries
                    .into_iter()
                    .map(|cs| Poly::new(cs.into_iter().map(|[re, im]| C64::new(re, im)).collect()))
                    .collect();
                let perturb = file
                    .perturb
                    .unwrap_or_default()
                    .into_iter()
                    .map(|[r, c, p]| (r, c, p))
                    .collect();
                Self::assemble(
                    file.label.unwrap_or_else(|| "custom".to_string()),
                    dim,
                    file.eta.unwrap_or(1.0),
                    file.epsilon.unwrap_or(0.0),
                    polys,
                    perturb,
                    Origin::Generic,
                )
            }
            (None, Some(b)) => {
                let mut params = b.params;
                if let Some(eta) = file.eta {
                    params.insert("eta".to_string(), eta);
                }
                if let Some(eps) = file.epsilon {
                    params.insert("epsilon".to_string(), eps);
                }
                let mut spec = builtin(&b.name, &params)?;
                if let Some(label) = file.label {
                    spec.label = label;
                }
                if file.dimension.is_some() || file.perturb.is_some() {
                    return Err(ModelError::EntriesXorBuiltin);
                }
                Ok(spec)
            }
            _ => Err(ModelError::EntriesXorBuiltin),
        }
    }
}

fn apply_perturbation(
    base: &[Poly],
    dim: usize,
    perturb: &[(usize, usize, usize)],
    epsilon: f64,
) -> Vec<Poly> {
    if epsilon == 0.0 {
        return base.to_vec();
    }
    let factor = C64::new(1.0, epsilon);
    let mut out = base.to_vec();
    for &(r, c, p) in perturb {
        let mut coeffs = out[r * dim + c].coeffs().to_vec();
        coeffs[p] *= factor;
        out[r * dim + c] = Poly::new(coeffs);
    }
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    label: Option<String>,
    dimension: Option<usize>,
    eta: Option<f64>,
    epsilon: Option<f64>,
    /// Row-major N² polynomials; each is a list of [re, im] ascending in t.
    entries: Option<Vec<Vec<[f64; 2]>>>,
    /// Coefficient slots perturbed by 1 + i·epsilon: [row, col, power].
    perturb: Option<Vec<[usize; 3]>>,
    builtin: Option<BuiltinFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BuiltinFile {
    name: String,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

/// Construct a built-in model. Unspecified parameters take the family
/// defaults listed in the module docs; `eta` and `epsilon` may be supplied in
/// the same map.
pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> MResult<ModelSpec> {
    match name {
        "nlzsm" => builtin_nlzsm(params),
        "lzsm3" => builtin_lzsm3(params),
        other => Err(ModelError::UnknownBuiltin(other.to_string())),
    }
}

fn take_params(
    params: &BTreeMap<String, f64>,
    allowed: &[(&str, f64)],
) -> MResult<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> =
        allowed.iter().map(|&(k, v)| (k.to_string(), v)).collect();
    for (k, &v) in params {
        if !out.contains_key(k.as_str()) {
            return Err(ModelError::UnknownParam(k.clone()));
        }
        out.insert(k.clone(), v);
    }
    Ok(out)
}

fn builtin_nlzsm(params: &BTreeMap<String, f64>) -> MResult<ModelSpec> {
    let p = take_params(
        params,
        &[
            ("n", 1.0),
            ("v", 1.0),
            ("delta", 1.0),
            ("delta_im", 0.0),
            ("eta", 1.0),
            ("epsilon", 0.0),
        ],
    )?;
    let n_f = p["n"];
    if n_f < 1.0 || n_f.fract() != 0.0 {
        return Err(ModelError::BadParam {
            name: "n".to_string(),
            reason: format!("must be a positive integer, got {n_f}"),
        });
    }
    let n = n_f as usize;
    let v = p["v"];
    if !(v > 0.0) {
        return Err(ModelError::BadParam {
            name: "v".to_string(),
            reason: format!("must be positive, got {v}"),
        });
    }
    let delta = C64::new(p["delta"], p["delta_im"]);
    let zero = C64::new(0.0, 0.0);
    let monomial = |coeff: f64| {
        let mut cs = vec![zero; n + 1];
        cs[n] = C64::new(coeff, 0.0);
        Poly::new(cs)
    };
    let entries = vec![
        monomial(v),
        Poly::constant(delta.conj()),
        Poly::constant(delta),
        monomial(-v),
    ];
    let perturb = vec![(0, 0, n), (1, 1, n)];
    // Builtin labels encode the family and distinguishing parameter.
    let label = format!("nlzsm-n{n}");
    let mut stored: BTreeMap<String, f64> = p.clone();
    stored.remove("eta");
    stored.remove("epsilon");
    ModelSpec::assemble(
        label,
        2,
        p["eta"],
        p["epsilon"],
        entries,
        perturb,
        Origin::Builtin { name: "nlzsm".to_string(), params: stored },
    )
}

fn builtin_lzsm3(params: &BTreeMap<String, f64>) -> MResult<ModelSpec> {
    let p = take_params(
        params,
        &[
            ("v1", 1.0),
            ("v2", 2.0),
            ("a", 4.0),
            ("d12", 0.5),
            ("d13", 0.5),
            ("d23", 0.5),
            ("eta", 1.0),
            ("epsilon", 0.0),
        ],
    )?;
    for key in ["v1", "v2"] {
        if !(p[key] > 0.0) {
            return Err(ModelError::BadParam {
                name: key.to_string(),
                reason: format!("must be positive, got {}", p[key]),
            });
        }
    }
    let c = |x: f64| C64::new(x, 0.0);
    let zero = C64::new(0.0, 0.0);
    let entries = vec![
        Poly::new(vec![zero, c(p["v1"])]),
        Poly::constant(c(p["d12"])),
        Poly::constant(c(p["d13"])),
        Poly::constant(c(p["d12"])),
        Poly::new(vec![c(p["a"]), c(p["v2"])]),
        Poly::constant(c(p["d23"])),
        Poly::constant(c(p["d13"])),
        Poly::constant(c(p["d23"])),
        Poly::zero(),
    ];
    // Both sweep velocities get the 1+iε factor, mirroring the two-level rule
    // applied per diagonal entry.
    let perturb = vec![(0, 0, 1), (1, 1, 1)];
    let mut stored: BTreeMap<String, f64> = p.clone();
    stored.remove("eta");
    stored.remove("epsilon");
    ModelSpec::assemble(
        "lzsm3".to_string(),
        3,
        p["eta"],
        p["epsilon"],
        entries,
        perturb,
        Origin::Builtin { name: "lzsm3".to_string(), params: stored },
    )
}
