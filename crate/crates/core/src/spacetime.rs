//! Analytic spacetimes: metric evaluation, causal classification of tangent
//! vectors, the built-in example spacetimes and conformal rescaling.
//!
//! Signature convention is (−,+,…,+) with unit speed of light; a vector is
//! causal when `g(v,v) <= 0`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Largest supported spacetime dimension (3+1).
pub const MAX_DIM: usize = 4;

/// Default relative tolerance for null classification.
pub const NULL_TOL: f64 = 1e-9;

/// A point of the spacetime in coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Event {
    pub coords: Vec<f64>,
    /// 0 means global coordinates.
    pub chart_id: u8,
}

impl Event {
    pub fn new(coords: impl Into<Vec<f64>>) -> Self {
        Event {
            coords: coords.into(),
            chart_id: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn time(&self) -> f64 {
        self.coords[0]
    }
}

impl From<Vec<f64>> for Event {
    fn from(coords: Vec<f64>) -> Self {
        Event::new(coords)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    pub base: Event,
    pub components: Vec<f64>,
}

impl TangentVector {
    pub fn new(base: Event, components: impl Into<Vec<f64>>) -> Self {
        TangentVector {
            base,
            components: components.into(),
        }
    }
}

/// Symmetric bilinear form on a tangent space, stored densely.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricForm {
    dim: usize,
    entries: [f64; MAX_DIM * MAX_DIM],
}

impl MetricForm {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "unsupported dimension {dim}");
        MetricForm {
            dim,
            entries: [0.0; MAX_DIM * MAX_DIM],
        }
    }

    pub fn diagonal(diag: &[f64]) -> Self {
        let mut g = MetricForm::zeros(diag.len());
        for (i, d) in diag.iter().enumerate() {
            g.set(i, i, *d);
        }
        g
    }

    /// Flat Minkowski form diag(−1, 1, …, 1).
    pub fn minkowski(dim: usize) -> Self {
        let mut g = MetricForm::zeros(dim);
        g.set(0, 0, -1.0);
        for i in 1..dim {
            g.set(i, i, 1.0);
        }
        g
    }

    pub fn identity(dim: usize) -> Self {
        let mut g = MetricForm::zeros(dim);
        for i in 0..dim {
            g.set(i, i, 1.0);
        }
        g
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let mut g = MetricForm::zeros(rows.len());
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), rows.len(), "metric rows must be square");
            for (j, v) in row.iter().enumerate() {
                g.set(i, j, *v);
            }
        }
        g
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * MAX_DIM + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.entries[i * MAX_DIM + j] = v;
    }

    /// g(u, v).
    #[inline]
    pub fn apply(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dim {
            let mut row = 0.0;
            for j in 0..self.dim {
                row += self.get(i, j) * v[j];
            }
            acc += u[i] * row;
        }
        acc
    }

    #[inline]
    pub fn norm_sq(&self, v: &[f64]) -> f64 {
        self.apply(v, v)
    }

    /// Index lowering: (g v)_i.
    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = *self;
        for e in out.entries.iter_mut() {
            *e *= c;
        }
        out
    }

    /// Largest absolute entry; the scale used by relative null tests.
    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.get(i, j).abs());
            }
        }
        m
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Self {
        let mut g = MetricForm::zeros(m.nrows());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                g.set(i, j, m[(i, j)]);
            }
        }
        g
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.to_matrix())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Exactly one negative eigenvalue and the rest positive.
    pub fn is_lorentzian(&self) -> bool {
        if !self.is_symmetric(1e-12) {
            return false;
        }
        let ev = self.eigenvalues();
        ev[0] < 0.0 && ev[1..].iter().all(|&e| e > 0.0)
    }

    pub fn is_positive_definite(&self) -> bool {
        self.is_symmetric(1e-12) && self.eigenvalues()[0] > 0.0
    }

    pub fn determinant(&self) -> f64 {
        self.to_matrix().determinant()
    }

    pub fn inverse(&self) -> Option<MetricForm> {
        self.to_matrix()
            .try_inverse()
            .map(|m| MetricForm::from_matrix(&m))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CausalKind {
    Timelike,
    Null,
    Spacelike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TimeSense {
    Future,
    Past,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct CausalCharacter {
    pub kind: CausalKind,
    pub time_sense: TimeSense,
}

impl CausalCharacter {
    pub fn is_causal(&self) -> bool {
        self.kind != CausalKind::Spacelike
    }

    pub fn is_future_causal(&self) -> bool {
        self.is_causal() && self.time_sense == TimeSense::Future
    }

    pub fn is_past_causal(&self) -> bool {
        self.is_causal() && self.time_sense == TimeSense::Past
    }
}

fn euclid_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Classifies `v` against the form `g` with time orientation `orientation`.
///
/// The null band is `|g(v,v)| <= tol·|v|²·max|g_ij|`; scaling by the metric's
/// magnitude keeps the classification identical under constant conformal
/// rescaling.
pub fn causal_character(
    g: &MetricForm,
    orientation: &[f64],
    v: &[f64],
    tol: f64,
) -> Result<CausalCharacter> {
    if v.iter().all(|c| c.abs() < tol) {
        return Err(Error::ZeroVector);
    }
    let q = g.norm_sq(v);
    let band = tol * euclid_sq(v) * g.max_abs();
    let kind = if q.abs() <= band {
        CausalKind::Null
    } else if q < 0.0 {
        CausalKind::Timelike
    } else {
        CausalKind::Spacelike
    };
    let time_sense = match kind {
        CausalKind::Spacelike => TimeSense::None,
        _ => {
            if g.apply(orientation, v) < 0.0 {
                TimeSense::Future
            } else {
                TimeSense::Past
            }
        }
    };
    Ok(CausalCharacter { kind, time_sense })
}

fn is_causal_form(g: &MetricForm, v: &[f64], tol: f64) -> bool {
    g.norm_sq(v) <= tol * euclid_sq(v) * g.max_abs()
}

/// Gap in the reverse Cauchy–Schwarz inequality, `|g(u,v)| − |u|_g·|v|_g`.
/// Nonnegative (up to rounding) for pairs of causal vectors with the same time sense.
pub fn reverse_cs_gap(g: &MetricForm, u: &[f64], v: &[f64]) -> Result<f64> {
    if !is_causal_form(g, u, NULL_TOL) || !is_causal_form(g, v, NULL_TOL) {
        return Err(Error::NotCausal);
    }
    let nu = g.norm_sq(u).abs().sqrt();
    let nv = g.norm_sq(v).abs().sqrt();
    Ok(g.apply(u, v).abs() - nu * nv)
}

/// Removed subsets of the coordinate domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Excision {
    /// `{origin + s·direction : s >= 0}`.
    HalfLine {
        origin: Vec<f64>,
        direction: Vec<f64>,
    },
    /// Closed Euclidean ball.
    Ball { center: Vec<f64>, radius: f64 },
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Euclidean distance from `p` to the segment `[a, b]`.
pub fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = dot(&ab, &ab);
    let u = if len2 > 0.0 {
        (dot(&ap, &ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let d: Vec<f64> = ap.iter().zip(&ab).map(|(x, y)| x - u * y).collect();
    dot(&d, &d).sqrt()
}

fn point_ray_distance(p: &[f64], o: &[f64], d: &[f64]) -> f64 {
    let op = sub(p, o);
    let dd = dot(d, d);
    let s = (dot(&op, d) / dd).max(0.0);
    let r: Vec<f64> = op.iter().zip(d).map(|(x, y)| x - s * y).collect();
    dot(&r, &r).sqrt()
}

/// Euclidean distance between the segment `[a, b]` and the ray `o + s·d`, `s >= 0`.
fn segment_ray_distance(a: &[f64], b: &[f64], o: &[f64], d: &[f64]) -> f64 {
    let e = sub(b, a);
    let w = sub(a, o);
    let ee = dot(&e, &e);
    let dd = dot(d, d);
    let ed = dot(&e, d);
    let we = dot(&w, &e);
    let wd = dot(&w, d);
    let mut best = point_ray_distance(a, o, d)
        .min(point_ray_distance(b, o, d))
        .min(point_segment_distance(o, a, b));
    // Interior critical point of |w + u e − s d|².
    let det = ee * dd - ed * ed;
    if det > 1e-14 * ee.max(1e-300) * dd {
        let u = (ed * wd - dd * we) / det;
        let s = (ee * wd - ed * we) / det;
        if (0.0..=1.0).contains(&u) && s >= 0.0 {
            let r: Vec<f64> = (0..a.len()).map(|i| w[i] + u * e[i] - s * d[i]).collect();
            best = best.min(dot(&r, &r).sqrt());
        }
    }
    best
}

impl Excision {
    pub fn distance(&self, p: &[f64]) -> f64 {
        match self {
            Excision::HalfLine { origin, direction } => point_ray_distance(p, origin, direction),
            Excision::Ball { center, radius } => {
                let d = sub(p, center);
                (dot(&d, &d).sqrt() - radius).max(0.0)
            }
        }
    }

    pub fn segment_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Excision::HalfLine { origin, direction } => {
                segment_ray_distance(a, b, origin, direction)
            }
            Excision::Ball { center, radius } => {
                (point_segment_distance(center, a, b) - radius).max(0.0)
            }
        }
    }
}

/// Scale factor `f(t)` of a warped product `−dt² + f(t)² δ`.
#[derive(Clone, Debug, PartialEq)]
pub enum WarpFactor {
    /// `a·t + b`
    Linear { a: f64, b: f64 },
    /// `c·t^k`
    Power { c: f64, k: f64 },
    /// `exp(H·t)`
    Exponential { rate: f64 },
}

impl WarpFactor {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            WarpFactor::Linear { a, b } => a * t + b,
            WarpFactor::Power { c, k } => c * t.powf(k),
            WarpFactor::Exponential { rate } => (rate * t).exp(),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match *self {
            WarpFactor::Linear { a, .. } => a,
            WarpFactor::Power { c, k } => c * k * t.powf(k - 1.0),
            WarpFactor::Exponential { rate } => rate * (rate * t).exp(),
        }
    }

    /// Infimum of times where `f > 0`, if any.
    fn time_lower_bound(&self) -> Option<f64> {
        match *self {
            WarpFactor::Linear { a, b } => Some(-b / a),
            WarpFactor::Power { .. } => Some(0.0),
            WarpFactor::Exponential { .. } => None,
        }
    }
}

/// Positive function `φ` multiplying a base metric as `φ² g`.
#[derive(Clone, Debug, PartialEq)]
pub enum ConformalFactor {
    Constant(f64),
    /// `φ² = 1 + amplitude·exp(−|p − center|² / width²)`.
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        width: f64,
    },
}

impl ConformalFactor {
    pub fn phi(&self, p: &[f64]) -> f64 {
        self.phi_sq(p).sqrt()
    }

    pub fn phi_sq(&self, p: &[f64]) -> f64 {
        match self {
            ConformalFactor::Constant(c) => c * c,
            ConformalFactor::Bump {
                amplitude,
                center,
                width,
            } => {
                let r2: f64 = p.iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
                1.0 + amplitude * (-r2 / (width * width)).exp()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SpacetimeKind {
    Minkowski,
    UpperHalfMinkowski,
    MissingRay,
    Warped(WarpFactor),
    Conformal {
        base: Box<Spacetime>,
        factor: ConformalFactor,
    },
}

/// A coordinate patch with a Lorentzian metric, a domain and a time orientation.
///
/// Values are immutable after construction and can be shared across threads.
#[derive(Clone, Debug, PartialEq)]
pub struct Spacetime {
    name: String,
    dim: usize,
    kind: SpacetimeKind,
    /// Domain is `{t > time_lower}` when set.
    time_lower: Option<f64>,
    excisions: Vec<Excision>,
}

fn check_dim(dim: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidParam(format!(
            "dimension must be between 2 and {MAX_DIM}, got {dim}"
        )))
    }
}

impl Spacetime {
    pub fn minkowski(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Spacetime {
            name: "minkowski".into(),
            dim,
            kind: SpacetimeKind::Minkowski,
            time_lower: None,
            excisions: Vec::new(),
        })
    }

    /// Minkowski space restricted to `t > 0`.
    pub fn upper_half_minkowski(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Spacetime {
            name: "upper_half_minkowski".into(),
            dim,
            kind: SpacetimeKind::UpperHalfMinkowski,
            time_lower: Some(0.0),
            excisions: Vec::new(),
        })
    }

    /// Upper-half Minkowski space with the half-line `{(t,0,…,0) : t >= 2}` removed.
    pub fn missing_ray(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let mut origin = vec![0.0; dim];
        origin[0] = 2.0;
        let mut direction = vec![0.0; dim];
        direction[0] = 1.0;
        Ok(Spacetime {
            name: "missing_ray".into(),
            dim,
            kind: SpacetimeKind::MissingRay,
            time_lower: Some(0.0),
            excisions: vec![Excision::HalfLine { origin, direction }],
        })
    }

    /// `−dt² + f(t)² (dx₁² + … + dxₙ²)` on the region where `f > 0`.
    pub fn warped_product(dim: usize, warp: WarpFactor) -> Result<Self> {
        check_dim(dim)?;
        let time_lower = warp.time_lower_bound();
        Ok(Spacetime {
            name: "warped_product".into(),
            dim,
            kind: SpacetimeKind::Warped(warp),
            time_lower,
            excisions: Vec::new(),
        })
    }

    /// The metric `φ² g` on the domain of `base`.
    pub fn conformal(base: Spacetime, factor: ConformalFactor) -> Result<Self> {
        match &factor {
            ConformalFactor::Constant(c) if !(*c > 0.0) => {
                return Err(Error::NonPositiveConformalFactor(*c))
            }
            ConformalFactor::Bump {
                amplitude,
                width,
                center,
            } => {
                if !(*amplitude > -1.0) || !(*width > 0.0) {
                    return Err(Error::NonPositiveConformalFactor(1.0 + amplitude));
                }
                if center.len() != base.dim {
                    return Err(Error::DimensionMismatch {
                        expected: base.dim,
                        got: center.len(),
                    });
                }
            }
            _ => {}
        }
        Ok(Spacetime {
            name: "conformal".into(),
            dim: base.dim,
            time_lower: base.time_lower,
            excisions: base.excisions.clone(),
            kind: SpacetimeKind::Conformal {
                base: Box::new(base),
                factor,
            },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &SpacetimeKind {
        &self.kind
    }

    pub fn excisions(&self) -> &[Excision] {
        &self.excisions
    }

    pub fn time_lower_bound(&self) -> Option<f64> {
        self.time_lower
    }

    /// True when the metric is constant in coordinates.
    pub fn is_flat(&self) -> bool {
        match &self.kind {
            SpacetimeKind::Minkowski
            | SpacetimeKind::UpperHalfMinkowski
            | SpacetimeKind::MissingRay => true,
            SpacetimeKind::Warped(_) => false,
            SpacetimeKind::Conformal { base, factor } => {
                matches!(factor, ConformalFactor::Constant(_)) && base.is_flat()
            }
        }
    }

    /// Exact domain predicate (no thickening of excisions).
    pub fn in_domain(&self, p: &[f64]) -> bool {
        if p.len() != self.dim || p.iter().any(|c| !c.is_finite()) {
            return false;
        }
        if let Some(t0) = self.time_lower {
            if !(p[0] > t0) {
                return false;
            }
        }
        self.excisions.iter().all(|e| e.distance(p) > 1e-12)
    }

    /// Distance from `p` to the nearest excised set (infinite when there are none).
    pub fn excision_distance(&self, p: &[f64]) -> f64 {
        self.excisions
            .iter()
            .map(|e| e.distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn excision_segment_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.excisions
            .iter()
            .map(|e| e.segment_distance(a, b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Metric at `p`, failing outside the domain.
    pub fn metric_eval(&self, p: &Event) -> Result<MetricForm> {
        if p.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: p.dim(),
            });
        }
        if !self.in_domain(&p.coords) {
            return Err(Error::OutOfDomain(p.coords.clone()));
        }
        Ok(self.metric_at(&p.coords))
    }

    /// Metric formula evaluated without the domain check.
    pub fn metric_at(&self, p: &[f64]) -> MetricForm {
        match &self.kind {
            SpacetimeKind::Minkowski
            | SpacetimeKind::UpperHalfMinkowski
            | SpacetimeKind::MissingRay => MetricForm::minkowski(self.dim),
            SpacetimeKind::Warped(w) => {
                let f = w.value(p[0]);
                let mut g = MetricForm::zeros(self.dim);
                g.set(0, 0, -1.0);
                for i in 1..self.dim {
                    g.set(i, i, f * f);
                }
                g
            }
            SpacetimeKind::Conformal { base, factor } => base.metric_at(p).scaled(factor.phi_sq(p)),
        }
    }

    /// Future-directed timelike vector field; `∂₀` for every built-in.
    pub fn orientation(&self, _p: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; self.dim];
        t[0] = 1.0;
        t
    }

    /// Classifies a tangent vector at its base event.
    pub fn classify(&self, v: &TangentVector) -> Result<CausalCharacter> {
        let g = self.metric_eval(&v.base)?;
        causal_character(
            &g,
            &self.orientation(&v.base.coords),
            &v.components,
            NULL_TOL,
        )
    }

    /// Coordinate derivatives `∂_k g` at `p`, closed form where available.
    pub fn metric_derivatives(&self, p: &[f64]) -> Vec<MetricForm> {
        let d = self.dim;
        if self.is_flat() {
            return vec![MetricForm::zeros(d); d];
        }
        match &self.kind {
            SpacetimeKind::Warped(w) => {
                let mut dt = MetricForm::zeros(d);
                let f = w.value(p[0]);
                let df = w.derivative(p[0]);
                for i in 1..d {
                    dt.set(i, i, 2.0 * f * df);
                }
                let mut out = vec![MetricForm::zeros(d); d];
                out[0] = dt;
                out
            }
            _ => self.metric_derivatives_fd(p),
        }
    }

    /// Central finite differences with step `1e-5·max(1, |p_k|)`.
    pub fn metric_derivatives_fd(&self, p: &[f64]) -> Vec<MetricForm> {
        let d = self.dim;
        let mut out = Vec::with_capacity(d);
        let mut probe = p.to_vec();
        for k in 0..d {
            let step = 1e-5 * p[k].abs().max(1.0);
            probe[k] = p[k] + step;
            let gp = self.metric_at(&probe);
            probe[k] = p[k] - step;
            let gm = self.metric_at(&probe);
            probe[k] = p[k];
            let mut dg = MetricForm::zeros(d);
            for i in 0..d {
                for j in 0..d {
                    dg.set(i, j, (gp.get(i, j) - gm.get(i, j)) / (2.0 * step));
                }
            }
            out.push(dg);
        }
        out
    }

    /// Christoffel symbols `Γ^μ_{αβ}`, flattened as `[μ][α][β]`.
    pub fn christoffel(&self, p: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut gamma = vec![0.0; d * d * d];
        if self.is_flat() {
            return gamma;
        }
        let g = self.metric_at(p);
        let ginv = g.inverse().expect("metric is nondegenerate");
        let dg = self.metric_derivatives(p);
        for mu in 0..d {
            for a in 0..d {
                for b in a..d {
                    let mut s = 0.0;
                    for nu in 0..d {
                        let inv = ginv.get(mu, nu);
                        if inv == 0.0 {
                            continue;
                        }
                        s += inv * (dg[a].get(nu, b) + dg[b].get(nu, a) - dg[nu].get(a, b));
                    }
                    gamma[(mu * d + a) * d + b] = 0.5 * s;
                    gamma[(mu * d + b) * d + a] = 0.5 * s;
                }
            }
        }
        gamma
    }

    /// Christoffel symbols computed entirely from finite-difference metric derivatives.
    pub fn christoffel_fd(&self, p: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let g = self.metric_at(p);
        let ginv = g.inverse().expect("metric is nondegenerate");
        let dg = self.metric_derivatives_fd(p);
        let mut gamma = vec![0.0; d * d * d];
        for mu in 0..d {
            for a in 0..d {
                for b in 0..d {
                    let s: f64 = (0..d)
                        .map(|nu| {
                            ginv.get(mu, nu)
                                * (dg[a].get(nu, b) + dg[b].get(nu, a) - dg[nu].get(a, b))
                        })
                        .sum();
                    gamma[(mu * d + a) * d + b] = 0.5 * s;
                }
            }
        }
        gamma
    }

    /// Lorentzian length of the coordinate line from `(t_from, x)` to `(t_to, x)`,
    /// integrated with composite Simpson on 64 panels.
    pub fn time_line_length(&self, x: &[f64], t_from: f64, t_to: f64) -> f64 {
        if t_to <= t_from {
            return 0.0;
        }
        if self.is_flat() {
            let g00 = self.metric_at(x).get(0, 0);
            return (t_to - t_from) * (-g00).max(0.0).sqrt();
        }
        const PANELS: usize = 64;
        let h = (t_to - t_from) / PANELS as f64;
        let mut probe = x.to_vec();
        let mut f = |t: f64| {
            probe[0] = t;
            (-self.metric_at(&probe).get(0, 0)).max(0.0).sqrt()
        };
        let mut s = f(t_from) + f(t_to);
        for i in 1..PANELS {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(t_from + i as f64 * h);
        }
        s * h / 3.0
    }
}

fn take_f64(params: &mut Map<String, Value>, key: &str) -> Result<Option<f64>> {
    match params.remove(key) {
        None => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::InvalidParam(format!("`{key}` must be a number"))),
    }
}

fn reject_leftovers(params: &Map<String, Value>) -> Result<()> {
    if let Some(k) = params.keys().next() {
        return Err(Error::InvalidParam(format!("unknown parameter `{k}`")));
    }
    Ok(())
}

/// Constructs one of the named example spacetimes.
///
/// Names: `minkowski`, `upper_half_minkowski`, `missing_ray`, `warped_product`
/// (params `warp` ∈ {linear, power, exponential} with `a,b` / `c,k` / `rate`),
/// and `conformal` (params `base` naming another built-in, plus either `phi`
/// for a constant factor or `bump_amplitude`, `bump_width`, `bump_center`).
pub fn builtin(name: &str, dim: usize, params: &Map<String, Value>) -> Result<Spacetime> {
    let mut params = params.clone();
    let st = match name {
        "minkowski" => Spacetime::minkowski(dim)?,
        "upper_half_minkowski" => Spacetime::upper_half_minkowski(dim)?,
        "missing_ray" => Spacetime::missing_ray(dim)?,
        "warped_product" => {
            let warp = match params.remove("warp") {
                None => "linear".to_string(),
                Some(Value::String(s)) => s,
                Some(_) => return Err(Error::InvalidParam("`warp` must be a string".into())),
            };
            let w = match warp.as_str() {
                "linear" => WarpFactor::Linear {
                    a: take_f64(&mut params, "a")?.unwrap_or(1.0),
                    b: take_f64(&mut params, "b")?.unwrap_or(0.0),
                },
                "power" => WarpFactor::Power {
                    c: take_f64(&mut params, "c")?.unwrap_or(1.0),
                    k: take_f64(&mut params, "k")?.unwrap_or(1.0),
                },
                "exponential" => WarpFactor::Exponential {
                    rate: take_f64(&mut params, "rate")?.unwrap_or(1.0),
                },
                other => return Err(Error::InvalidParam(format!("unknown warp `{other}`"))),
            };
            if let WarpFactor::Linear { a, .. } = w {
                if a <= 0.0 {
                    return Err(Error::InvalidParam("linear warp needs a > 0".into()));
                }
            }
            Spacetime::warped_product(dim, w)?
        }
        "conformal" => {
            let base = match params.remove("base") {
                None => Spacetime::minkowski(dim)?,
                Some(Value::String(s)) => builtin(&s, dim, &Map::new())?,
                Some(Value::Object(o)) => {
                    let mut o = o;
                    let bname = match o.remove("name") {
                        Some(Value::String(s)) => s,
                        _ => return Err(Error::InvalidParam("base needs a `name`".into())),
                    };
                    let bparams = match o.remove("params") {
                        None => Map::new(),
                        Some(Value::Object(p)) => p,
                        Some(_) => {
                            return Err(Error::InvalidParam("base params must be an object".into()))
                        }
                    };
                    reject_leftovers(&o)?;
                    builtin(&bname, dim, &bparams)?
                }
                Some(_) => {
                    return Err(Error::InvalidParam(
                        "`base` must be a name or object".into(),
                    ))
                }
            };
            let factor = if let Some(phi) = take_f64(&mut params, "phi")? {
                ConformalFactor::Constant(phi)
            } else if let Some(amplitude) = take_f64(&mut params, "bump_amplitude")? {
                let width = take_f64(&mut params, "bump_width")?.unwrap_or(0.5);
                let center = match params.remove("bump_center") {
                    None => vec![0.0; dim],
                    Some(Value::Array(a)) => a
                        .iter()
                        .map(|v| {
                            v.as_f64().ok_or_else(|| {
                                Error::InvalidParam("`bump_center` entries must be numbers".into())
                            })
                        })
                        .collect::<Result<Vec<_>>>()?,
                    Some(_) => {
                        return Err(Error::InvalidParam("`bump_center` must be an array".into()))
                    }
                };
                ConformalFactor::Bump {
                    amplitude,
                    center,
                    width,
                }
            } else {
                ConformalFactor::Constant(1.0)
            };
            Spacetime::conformal(base, factor)?
        }
        other => return Err(Error::UnknownName(other.to_string())),
    };
    reject_leftovers(&params)?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use serde_json::json;

    fn obj(v: Value) -> Map<String, Value> {
        v.as_object().cloned().unwrap()
    }

    #[test]
    fn minkowski_metric_is_flat() {
        let st = Spacetime::minkowski(4).unwrap();
        let g = st
            .metric_eval(&Event::new(vec![0.3, -1.0, 2.0, 5.0]))
            .unwrap();
        assert_eq!(g, MetricForm::diagonal(&[-1.0, 1.0, 1.0, 1.0]));
        assert!(g.is_lorentzian());
    }

    #[test]
    fn warped_metric_at_t2() {
        let st = Spacetime::warped_product(4, WarpFactor::Linear { a: 1.0, b: 0.0 }).unwrap();
        let g = st
            .metric_eval(&Event::new(vec![2.0, 0.1, 0.2, 0.3]))
            .unwrap();
        assert_eq!(g, MetricForm::diagonal(&[-1.0, 4.0, 4.0, 4.0]));
    }

    #[test]
    fn missing_ray_excludes_ray_points() {
        let st = Spacetime::missing_ray(4).unwrap();
        let err = st
            .metric_eval(&Event::new(vec![2.0, 0.0, 0.0, 0.0]))
            .unwrap_err();
        assert!(matches!(err, Error::OutOfDomain(_)));
        assert!(st
            .metric_eval(&Event::new(vec![1.9, 0.0, 0.0, 0.0]))
            .is_ok());
        assert!(st
            .metric_eval(&Event::new(vec![5.0, 0.0, 1e-3, 0.0]))
            .is_ok());
        assert!(st
            .metric_eval(&Event::new(vec![-0.5, 1.0, 0.0, 0.0]))
            .is_err());
    }

    #[test]
    fn classify_examples() {
        let g = MetricForm::minkowski(4);
        let t = [1.0, 0.0, 0.0, 0.0];
        let c = causal_character(&g, &t, &[1.0, 0.0, 0.0, 0.0], NULL_TOL).unwrap();
        assert_eq!(
            (c.kind, c.time_sense),
            (CausalKind::Timelike, TimeSense::Future)
        );
        let c = causal_character(&g, &t, &[1.0, 1.0, 0.0, 0.0], NULL_TOL).unwrap();
        assert_eq!(
            (c.kind, c.time_sense),
            (CausalKind::Null, TimeSense::Future)
        );
        let c = causal_character(&g, &t, &[0.0, 1.0, 0.0, 0.0], NULL_TOL).unwrap();
        assert_eq!(
            (c.kind, c.time_sense),
            (CausalKind::Spacelike, TimeSense::None)
        );
        let c = causal_character(&g, &t, &[-1.0, 0.0, 1.0, 0.0], NULL_TOL).unwrap();
        assert_eq!((c.kind, c.time_sense), (CausalKind::Null, TimeSense::Past));
        assert_eq!(
            causal_character(&g, &t, &[0.0; 4], NULL_TOL),
            Err(Error::ZeroVector)
        );
    }

    #[test]
    fn reverse_cs_examples() {
        let g = MetricForm::minkowski(4);
        let u = [1.0, 0.0, 0.0, 0.0];
        assert_abs_diff_eq!(reverse_cs_gap(&g, &u, &u).unwrap(), 0.0);
        let v = [2.0, 1.0, 0.0, 0.0];
        assert_abs_diff_eq!(
            reverse_cs_gap(&g, &u, &v).unwrap(),
            2.0 - 3f64.sqrt(),
            epsilon = 1e-15
        );
        let a = [1.0, 1.0, 0.0, 0.0];
        let b = [1.0, -1.0, 0.0, 0.0];
        assert_abs_diff_eq!(reverse_cs_gap(&g, &a, &b).unwrap(), 2.0);
        assert_eq!(
            reverse_cs_gap(&g, &u, &[0.0, 1.0, 0.0, 0.0]),
            Err(Error::NotCausal)
        );
    }

    #[test]
    fn builtin_names() {
        let st = builtin("minkowski", 4, &Map::new()).unwrap();
        assert_eq!(st.dim(), 4);
        let ray = builtin("missing_ray", 4, &Map::new()).unwrap();
        assert!(!ray.in_domain(&[3.0, 0.0, 0.0, 0.0]));
        assert!(ray.in_domain(&[1.0, -1.0, 0.0, 0.0]));
        let conf = builtin(
            "conformal",
            4,
            &obj(json!({"base": "minkowski", "phi": 2.0})),
        )
        .unwrap();
        assert_eq!(
            conf.metric_at(&[0.0; 4]),
            MetricForm::minkowski(4).scaled(4.0)
        );
        assert_eq!(
            builtin("nope", 4, &Map::new()),
            Err(Error::UnknownName("nope".into()))
        );
        assert_eq!(
            builtin("conformal", 4, &obj(json!({"phi": -1.0}))),
            Err(Error::NonPositiveConformalFactor(-1.0))
        );
        assert!(matches!(
            builtin("minkowski", 4, &obj(json!({"bogus": 1}))),
            Err(Error::InvalidParam(_))
        ));
        let nested = builtin(
            "conformal",
            2,
            &obj(json!({"base": {"name": "warped_product", "params": {"warp": "linear", "a": 1.0}}, "phi": 3.0})),
        )
        .unwrap();
        assert_abs_diff_eq!(nested.metric_at(&[2.0, 0.0]).get(1, 1), 36.0);
    }

    #[test]
    fn segment_ray_distance_cases() {
        let ray = Excision::HalfLine {
            origin: vec![2.0, 0.0, 0.0],
            direction: vec![1.0, 0.0, 0.0],
        };
        // Crosses the ray.
        assert_abs_diff_eq!(
            ray.segment_distance(&[2.5, -1.0, 0.0], &[2.5, 1.0, 0.0]),
            0.0
        );
        // Passes below the tip.
        assert_abs_diff_eq!(
            ray.segment_distance(&[1.0, -1.0, 0.0], &[1.0, 1.0, 0.0]),
            1.0,
            epsilon = 1e-15
        );
        // Parallel offset.
        assert_abs_diff_eq!(
            ray.segment_distance(&[3.0, 0.0, 0.5], &[4.0, 0.0, 0.5]),
            0.5,
            epsilon = 1e-15
        );
        // Skew line passing at height 0.25.
        assert_abs_diff_eq!(
            ray.segment_distance(&[2.0, -1.0, 0.25], &[4.0, 1.0, 0.25]),
            0.25,
            epsilon = 1e-14
        );
    }

    #[test]
    fn warped_christoffel_closed_form_matches_fd() {
        let st = Spacetime::warped_product(3, WarpFactor::Linear { a: 1.0, b: 0.0 }).unwrap();
        let p = [1.3, 0.2, -0.4];
        let a = st.christoffel(&p);
        let b = st.christoffel_fd(&p);
        for (x, y) in a.iter().zip(&b) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-8);
        }
        // Γ^t_tt vanishes so ∂_t generates geodesics.
        assert_abs_diff_eq!(b[0], 0.0, epsilon = 1e-9);
        // Γ^t_xx = f f' = t.
        assert_abs_diff_eq!(b[3 + 1], 1.3, epsilon = 1e-8);
    }

    #[test]
    fn time_line_length_scales_with_phi() {
        let base = Spacetime::upper_half_minkowski(2).unwrap();
        let conf = Spacetime::conformal(base, ConformalFactor::Constant(2.0)).unwrap();
        assert_abs_diff_eq!(conf.time_line_length(&[0.0, 0.0], 0.0, 1.0), 2.0);
        let bump = Spacetime::conformal(
            Spacetime::minkowski(2).unwrap(),
            ConformalFactor::Bump {
                amplitude: 0.01,
                center: vec![0.0, 0.0],
                width: 0.5,
            },
        )
        .unwrap();
        let l = bump.time_line_length(&[0.0, 5.0], 0.0, 1.0);
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-12);
    }
}
