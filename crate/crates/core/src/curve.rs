//! Piecewise causal curves, null length, rectifiable length, zigzag
//! decomposition and the causality-encoding test.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BoxRegion, CausalGrid, ShortestPaths, StencilSpec};
use crate::spacetime::{causal_character, Spacetime, TimeSense, NULL_TOL};
use crate::time::TimeFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SegmentSense {
    Future,
    Past,
    Degenerate,
}

/// Polygonal curve through `vertices` whose straight segments are causal
/// with the recorded time sense.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PiecewiseCausalCurve {
    vertices: Vec<Vec<f64>>,
    senses: Vec<SegmentSense>,
}

fn check_segment(st: &Spacetime, a: &[f64], b: &[f64], sense: SegmentSense) -> bool {
    let delta: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    if sense == SegmentSense::Degenerate {
        return delta.iter().all(|d| *d == 0.0);
    }
    let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    if !st.in_domain(&mid) {
        return false;
    }
    let g = st.metric_at(&mid);
    match causal_character(&g, &st.orientation(&mid), &delta, NULL_TOL) {
        Ok(c) => match sense {
            SegmentSense::Future => c.is_future_causal(),
            SegmentSense::Past => c.is_past_causal(),
            SegmentSense::Degenerate => false,
        },
        Err(_) => false,
    }
}

impl PiecewiseCausalCurve {
    /// Validates every segment at its midpoint metric.
    pub fn new(st: &Spacetime, vertices: Vec<Vec<f64>>, senses: Vec<SegmentSense>) -> Result<Self> {
        if vertices.is_empty() || senses.len() + 1 != vertices.len() {
            return Err(Error::InvalidParam(format!(
                "{} vertices need {} senses, got {}",
                vertices.len(),
                vertices.len().saturating_sub(1),
                senses.len()
            )));
        }
        for v in &vertices {
            if v.len() != st.dim() {
                return Err(Error::DimensionMismatch {
                    expected: st.dim(),
                    got: v.len(),
                });
            }
        }
        for (i, s) in senses.iter().enumerate() {
            if !check_segment(st, &vertices[i], &vertices[i + 1], *s) {
                return Err(Error::InvalidSegment { index: i });
            }
        }
        Ok(PiecewiseCausalCurve { vertices, senses })
    }

    /// Like [`PiecewiseCausalCurve::new`] but reads each sense off the segment.
    pub fn infer(st: &Spacetime, vertices: Vec<Vec<f64>>) -> Result<Self> {
        let mut senses = Vec::with_capacity(vertices.len().saturating_sub(1));
        for (i, w) in vertices.windows(2).enumerate() {
            let s = [
                SegmentSense::Degenerate,
                SegmentSense::Future,
                SegmentSense::Past,
            ]
            .into_iter()
            .find(|&s| check_segment(st, &w[0], &w[1], s))
            .ok_or(Error::InvalidSegment { index: i })?;
            senses.push(s);
        }
        Self::new(st, vertices, senses)
    }

    /// Curve along a node path of `grid`; consecutive nodes must share an edge.
    pub fn from_grid_path(grid: &CausalGrid, path: &[usize]) -> Result<Self> {
        let mut senses = Vec::with_capacity(path.len().saturating_sub(1));
        for (i, w) in path.windows(2).enumerate() {
            let s = if w[0] == w[1] {
                SegmentSense::Degenerate
            } else if grid.has_edge(w[0], w[1]) {
                SegmentSense::Future
            } else if grid.has_edge(w[1], w[0]) {
                SegmentSense::Past
            } else {
                return Err(Error::InvalidSegment { index: i });
            };
            senses.push(s);
        }
        if path.is_empty() {
            return Err(Error::InvalidParam("empty path".into()));
        }
        Ok(PiecewiseCausalCurve {
            vertices: path.iter().map(|&v| grid.coords(v)).collect(),
            senses,
        })
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn senses(&self) -> &[SegmentSense] {
        &self.senses
    }

    pub fn segment_count(&self) -> usize {
        self.senses.len()
    }

    pub fn start(&self) -> &[f64] {
        &self.vertices[0]
    }

    pub fn end(&self) -> &[f64] {
        self.vertices.last().unwrap()
    }

    /// Same point set traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut vertices = self.vertices.clone();
        vertices.reverse();
        let senses = self
            .senses
            .iter()
            .rev()
            .map(|s| match s {
                SegmentSense::Future => SegmentSense::Past,
                SegmentSense::Past => SegmentSense::Future,
                SegmentSense::Degenerate => SegmentSense::Degenerate,
            })
            .collect();
        PiecewiseCausalCurve { vertices, senses }
    }
}

/// `Σ |τ(xᵢ) − τ(xᵢ₋₁)|`
pub fn null_length(c: &PiecewiseCausalCurve, tau: &TimeFunction) -> f64 {
    let t: Vec<f64> = c.vertices.iter().map(|v| tau.eval(v)).collect();
    t.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
}

/// Zigzag between two equal-time events along the first spatial axis:
/// `2j` null legs alternating future and past, each of spatial width `D/2j`.
pub fn equal_time_zigzag(
    st: &Spacetime,
    start: &[f64],
    width: f64,
    j: usize,
) -> Result<PiecewiseCausalCurve> {
    if j == 0 || st.dim() < 2 {
        return Err(Error::InvalidParam(
            "zigzag needs j >= 1 and a spatial axis".into(),
        ));
    }
    let legs = 2 * j;
    let step = width / legs as f64;
    let mut vertices = Vec::with_capacity(legs + 1);
    let mut senses = Vec::with_capacity(legs);
    for i in 0..=legs {
        let mut v = start.to_vec();
        v[1] += step * i as f64;
        if i % 2 == 1 {
            v[0] += step;
        }
        vertices.push(v);
        if i < legs {
            senses.push(if i % 2 == 0 {
                SegmentSense::Future
            } else {
                SegmentSense::Past
            });
        }
    }
    PiecewiseCausalCurve::new(st, vertices, senses)
}

/// Random walk of `steps` moves along grid edges in either direction.
pub fn random_grid_walk(
    grid: &CausalGrid,
    start: usize,
    steps: usize,
    seed: u64,
) -> Result<PiecewiseCausalCurve> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut path = vec![start];
    let mut cur = start;
    for _ in 0..steps {
        let nbrs: Vec<usize> = grid
            .out_edges(cur)
            .map(|e| e.to)
            .chain(grid.in_edges(cur).map(|e| e.from))
            .collect();
        if nbrs.is_empty() {
            break;
        }
        cur = nbrs[rng.gen_range(0..nbrs.len())];
        path.push(cur);
    }
    PiecewiseCausalCurve::from_grid_path(grid, &path)
}

/// Source of null-distance values between events.
pub trait DistanceOracle {
    /// Whether `p` can be queried at all.
    fn resolves(&self, p: &[f64]) -> bool;
    /// Refinement points closer than this (coordinate distance) to the
    /// previous partition point are not used.
    fn min_separation(&self) -> f64 {
        0.0
    }
    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64>;
}

/// Exact `d̂` of Minkowski space with `τ = t`: `max(|Δt|, |Δx|)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MinkowskiOracle;

impl DistanceOracle for MinkowskiOracle {
    fn resolves(&self, _p: &[f64]) -> bool {
        true
    }

    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let dt = (q[0] - p[0]).abs();
        let dx = p[1..]
            .iter()
            .zip(&q[1..])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        Ok(dt.max(dx))
    }
}

/// Grid estimates of `d̂`, defined only at lattice nodes. Single-source
/// searches are cached per source node.
pub struct GridOracle<'g> {
    grid: &'g CausalGrid,
    min_sep: f64,
    cache: Mutex<HashMap<usize, Arc<ShortestPaths>>>,
}

impl<'g> GridOracle<'g> {
    pub fn new(grid: &'g CausalGrid) -> Self {
        GridOracle {
            grid,
            min_sep: 10.0 * grid.h(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    /// Grid estimates over gaps of a few lattice steps carry an `O(h)`
    /// parity overshoot that dyadic refinement would accumulate; the
    /// default keeps refinement points `10h` apart.
    pub fn with_min_separation(mut self, sep: f64) -> Self {
        self.min_sep = sep;
        self
    }

    pub fn grid(&self) -> &CausalGrid {
        self.grid
    }

    pub fn from_node(&self, source: usize) -> Arc<ShortestPaths> {
        if let Some(sp) = self.cache.lock().unwrap().get(&source) {
            return sp.clone();
        }
        let sp = Arc::new(self.grid.distances_from(source));
        self.cache.lock().unwrap().insert(source, sp.clone());
        sp
    }

    pub fn node_distance(&self, a: usize, b: usize) -> Result<f64> {
        let (s, t) = if a <= b { (a, b) } else { (b, a) };
        let d = self.from_node(s).distance(t);
        if d.is_finite() {
            Ok(d)
        } else {
            Err(Error::Disconnected)
        }
    }
}

impl DistanceOracle for GridOracle<'_> {
    fn resolves(&self, p: &[f64]) -> bool {
        self.grid.node_at(p).is_ok()
    }

    fn min_separation(&self) -> f64 {
        self.min_sep
    }

    fn distance(&self, p: &[f64], q: &[f64]) -> Result<f64> {
        let a = self.grid.node_at(p)?;
        let b = self.grid.node_at(q)?;
        self.node_distance(a, b)
    }
}

/// Supremum over dyadic refinements (up to `depth`) of the partition sums
/// `Σ d(xᵢ, xᵢ₋₁)` along the polygon through `vertices`.
///
/// Refinement points the oracle cannot resolve, or that fall within the
/// oracle's minimum separation of the previous point, are left out of that
/// partition. The polygon's own vertices are always used.
pub fn rectifiable_length(
    vertices: &[Vec<f64>],
    oracle: &dyn DistanceOracle,
    depth: u32,
) -> Result<f64> {
    let sep = oracle.min_separation();
    let mut best = 0.0f64;
    for level in 0..=depth {
        let parts = 1usize << level;
        let mut prev: Option<Vec<f64>> = None;
        let mut sum = 0.0;
        for w in vertices.windows(2) {
            for k in 0..parts {
                let s = k as f64 / parts as f64;
                let pt: Vec<f64> = w[0]
                    .iter()
                    .zip(&w[1])
                    .map(|(a, b)| a + s * (b - a))
                    .collect();
                if k > 0 {
                    let near = |q: &[f64]| euclid(q, &pt) < sep;
                    if !oracle.resolves(&pt) || prev.as_deref().is_some_and(near) || near(&w[1]) {
                        continue;
                    }
                }
                if let Some(pv) = &prev {
                    sum += oracle.distance(pv, &pt)?;
                }
                prev = Some(pt);
            }
        }
        if let (Some(pv), Some(last)) = (&prev, vertices.last()) {
            if vertices.len() > 1 {
                sum += oracle.distance(pv, last)?;
            }
        }
        best = best.max(sum);
    }
    Ok(best)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZigzagSplit {
    /// Sum of `Δτ` over future segments.
    pub future_len: f64,
    /// Sum of `|Δτ|` over past segments.
    pub past_len: f64,
}

pub fn zigzag_decompose(c: &PiecewiseCausalCurve, tau: &TimeFunction) -> ZigzagSplit {
    let mut future_len = 0.0;
    let mut past_len = 0.0;
    for (i, s) in c.senses.iter().enumerate() {
        let d = tau.eval(&c.vertices[i + 1]) - tau.eval(&c.vertices[i]);
        match s {
            SegmentSense::Future => future_len += d,
            SegmentSense::Past => past_len += d.abs(),
            SegmentSense::Degenerate => {}
        }
    }
    ZigzagSplit {
        future_len,
        past_len,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmallZagsReport {
    pub holds: bool,
    pub null_length: f64,
    pub future_len: f64,
    pub past_len: f64,
    /// `(null_length − Δτ) / 2`, which equals `past_len` by telescoping.
    pub past_from_excess: f64,
}

/// Checks `past_len < null_length − d̂(p, q) + tol` for a curve from `p` to `q`.
pub fn small_zags_check(
    c: &PiecewiseCausalCurve,
    tau: &TimeFunction,
    d_pq: f64,
    tol: f64,
) -> SmallZagsReport {
    let split = zigzag_decompose(c, tau);
    let l = null_length(c, tau);
    let dt = tau.eval(c.end()) - tau.eval(c.start());
    SmallZagsReport {
        holds: split.past_len < l - d_pq + tol,
        null_length: l,
        future_len: split.future_len,
        past_len: split.past_len,
        past_from_excess: 0.5 * (l - dt),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// `d̂` equals the time gap but no causal path exists.
    MissingCausal,
    /// A causal path exists but the estimate exceeds the time gap.
    CausalButStrict,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    CausalAndEqual,
    SpacelikeAndStrict,
    Violation(ViolationKind),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Properness {
    /// Claimed by the time function; a bounded grid cannot confirm it.
    DeclaredUnverified,
    NotDeclared,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullDistanceResult {
    pub estimate: f64,
    pub lower_bound: f64,
    pub witness: PiecewiseCausalCurve,
    pub encodes_equality: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EncodingReport {
    pub verdict: Verdict,
    /// Earlier endpoint (by τ) after snapping to the grid.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub reachable: bool,
    pub tol_eq: f64,
    pub properness: Properness,
    pub result: NullDistanceResult,
}

/// Default equality band: `3h·L` with `L` the stencil length bound.
pub fn default_tol_eq(grid: &CausalGrid) -> f64 {
    3.0 * grid.h() * grid.length_bound()
}

fn snap(grid: &CausalGrid, p: &[f64]) -> Result<usize> {
    let v = grid
        .nearest_node(p)
        .ok_or_else(|| Error::NodeNotInGrid(p.to_vec()))?;
    let c = grid.coords(v);
    let off = c
        .iter()
        .zip(p)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if off > grid.h() {
        return Err(Error::NodeNotInGrid(p.to_vec()));
    }
    Ok(v)
}

/// Compares `d̂(p, q) = |Δτ|` on `grid` with causal reachability.
pub fn encodes_causality_on_grid(
    grid: &CausalGrid,
    p: &[f64],
    q: &[f64],
    tol_eq: Option<f64>,
) -> Result<EncodingReport> {
    let mut a = snap(grid, p)?;
    let mut b = snap(grid, q)?;
    if grid.tau(b) < grid.tau(a) {
        std::mem::swap(&mut a, &mut b);
    }
    let tol = tol_eq.unwrap_or_else(|| default_tol_eq(grid));
    let est = grid.shortest_null_path(a, b)?;
    let reachable = grid.reach(a, TimeSense::Future)?.contains(b);
    let equal = est.estimate - est.lower_bound <= tol;
    let verdict = match (equal, reachable) {
        (true, true) => Verdict::CausalAndEqual,
        (false, false) => Verdict::SpacelikeAndStrict,
        (true, false) => Verdict::Violation(ViolationKind::MissingCausal),
        (false, true) => Verdict::Violation(ViolationKind::CausalButStrict),
    };
    let properness = if grid.time_function().claims.proper {
        Properness::DeclaredUnverified
    } else {
        Properness::NotDeclared
    };
    Ok(EncodingReport {
        verdict,
        p: grid.coords(a),
        q: grid.coords(b),
        reachable,
        tol_eq: tol,
        properness,
        result: NullDistanceResult {
            estimate: est.estimate,
            lower_bound: est.lower_bound,
            witness: PiecewiseCausalCurve::from_grid_path(grid, &est.path)?,
            encodes_equality: equal,
        },
    })
}

/// Builds the grid and runs [`encodes_causality_on_grid`].
#[allow(clippy::too_many_arguments)]
pub fn encodes_causality_test(
    st: &Spacetime,
    tau: &TimeFunction,
    p: &[f64],
    q: &[f64],
    region: &BoxRegion,
    h: f64,
    stencil: StencilSpec,
    tol_eq: Option<f64>,
) -> Result<EncodingReport> {
    let grid = CausalGrid::build(st, tau, region, h, stencil)?;
    encodes_causality_on_grid(&grid, p, q, tol_eq)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallPoint {
    pub direction: Vec<f64>,
    /// Parameter along the ray where the estimate crosses `R`.
    pub s: f64,
    pub point: Vec<f64>,
}

/// Boundary of the `d̂` ball of radius `r` about `center`, sampled along
/// `n_dirs` rays evenly spaced in the `(t, x₁)` plane.
pub fn ball_boundary_sample(
    grid: &CausalGrid,
    center: &[f64],
    r: f64,
    n_dirs: usize,
) -> Result<Vec<BallPoint>> {
    if !(r > 0.0) || n_dirs == 0 || grid.dim() < 2 {
        return Err(Error::InvalidParam(
            "ball needs R > 0, n_dirs >= 1, dim >= 2".into(),
        ));
    }
    let c = grid.node_at(center)?;
    let sp = grid.distances_from(c);
    let origin = grid.coords(c);
    let region = grid.region();
    let h = grid.h();
    let field = |s: f64, dir: &[f64]| -> f64 {
        let pt: Vec<f64> = origin.iter().zip(dir).map(|(o, d)| o + s * d).collect();
        grid.nearest_node(&pt)
            .map_or(f64::INFINITY, |v| sp.distance(v))
    };
    let mut out = Vec::with_capacity(n_dirs);
    for k in 0..n_dirs {
        let th = std::f64::consts::TAU * k as f64 / n_dirs as f64;
        let mut dir = vec![0.0; grid.dim()];
        dir[0] = th.cos();
        dir[1] = th.sin();
        for d in dir.iter_mut() {
            if d.abs() < 1e-15 {
                *d = 0.0;
            }
        }
        let mut s_max = f64::INFINITY;
        for i in 0..2 {
            if dir[i] > 0.0 {
                s_max = s_max.min((region.hi[i] - origin[i]) / dir[i]);
            } else if dir[i] < 0.0 {
                s_max = s_max.min((region.lo[i] - origin[i]) / dir[i]);
            }
        }
        if !(field(s_max, &dir) >= r) {
            return Err(Error::BallExitsGrid {
                radius: r,
                direction: k,
            });
        }
        let (mut lo, mut hi) = (0.0, s_max);
        while hi - lo > 0.125 * h {
            let mid = 0.5 * (lo + hi);
            if field(mid, &dir) >= r {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let s = 0.5 * (lo + hi);
        out.push(BallPoint {
            point: origin.iter().zip(&dir).map(|(o, d)| o + s * d).collect(),
            direction: dir,
            s,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::{coordinate_time, cubed_time};
    use approx::assert_abs_diff_eq;

    fn eps_path(st: &Spacetime, eps: f64) -> PiecewiseCausalCurve {
        PiecewiseCausalCurve::new(
            st,
            vec![
                vec![1.0, -1.0, 0.0, 0.0],
                vec![1.0 - eps, -1.0, 0.0, 0.0],
                vec![3.0 - eps, 1.0, 0.0, 0.0],
                vec![3.0, 1.0, 0.0, 0.0],
            ],
            vec![
                SegmentSense::Past,
                SegmentSense::Future,
                SegmentSense::Future,
            ],
        )
        .unwrap()
    }

    #[test]
    fn null_length_examples() {
        let m = Spacetime::minkowski(2).unwrap();
        let cubed = cubed_time(&m);
        let z = equal_time_zigzag(&m, &[0.0, 0.0], 1.0, 1).unwrap();
        assert_abs_diff_eq!(null_length(&z, &cubed), 0.25, epsilon = 1e-15);

        let t = coordinate_time(&m);
        let seg = PiecewiseCausalCurve::new(
            &m,
            vec![vec![0.0, 0.0], vec![2.0, 1.0]],
            vec![SegmentSense::Future],
        )
        .unwrap();
        assert_eq!(null_length(&seg, &t), 2.0);

        let ray = Spacetime::missing_ray(4).unwrap();
        let c = eps_path(&ray, 0.1);
        assert_abs_diff_eq!(
            null_length(&c, &coordinate_time(&ray)),
            2.2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn zigzag_bound_for_several_j() {
        let m = Spacetime::minkowski(2).unwrap();
        let cubed = cubed_time(&m);
        for j in [1usize, 2, 4] {
            let z = equal_time_zigzag(&m, &[0.0, 0.0], 1.0, j).unwrap();
            let bound = 2.0 * j as f64 * (1.0 / (2.0 * j as f64)).powi(3);
            assert_abs_diff_eq!(null_length(&z, &cubed), bound, epsilon = 1e-15);
        }
    }

    #[test]
    fn straight_line_through_ray_is_rejected() {
        let ray = Spacetime::missing_ray(4).unwrap();
        let err = PiecewiseCausalCurve::new(
            &ray,
            vec![vec![1.0, -1.0, 0.0, 0.0], vec![3.0, 1.0, 0.0, 0.0]],
            vec![SegmentSense::Future],
        );
        // the midpoint lies on the excised half-line
        assert_eq!(err, Err(Error::InvalidSegment { index: 0 }));
        let m = Spacetime::minkowski(2).unwrap();
        let err = PiecewiseCausalCurve::new(
            &m,
            vec![vec![0.0, 0.0], vec![0.0, 1.0]],
            vec![SegmentSense::Future],
        );
        assert_eq!(err, Err(Error::InvalidSegment { index: 0 }));
        let err = PiecewiseCausalCurve::new(
            &m,
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![SegmentSense::Past],
        );
        assert_eq!(err, Err(Error::InvalidSegment { index: 0 }));
    }

    #[test]
    fn decompositions() {
        let ray = Spacetime::missing_ray(4).unwrap();
        let t = coordinate_time(&ray);
        let s = zigzag_decompose(&eps_path(&ray, 0.1), &t);
        assert_abs_diff_eq!(s.future_len, 2.1, epsilon = 1e-12);
        assert_abs_diff_eq!(s.past_len, 0.1, epsilon = 1e-12);
        let rep = small_zags_check(&eps_path(&ray, 0.1), &t, 2.0, 1e-12);
        assert!(rep.holds);
        assert_abs_diff_eq!(rep.past_len, rep.past_from_excess, epsilon = 1e-12);

        let m = Spacetime::minkowski(2).unwrap();
        let z = equal_time_zigzag(&m, &[0.0, 0.0], 1.0, 1).unwrap();
        let s = zigzag_decompose(&z, &cubed_time(&m));
        assert_abs_diff_eq!(s.future_len, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(s.past_len, 0.125, epsilon = 1e-15);

        let up =
            PiecewiseCausalCurve::infer(&m, vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![2.0, 0.5]])
                .unwrap();
        let s = zigzag_decompose(&up, &coordinate_time(&m));
        assert_eq!((s.future_len, s.past_len), (2.0, 0.0));
    }

    #[test]
    fn reversal_keeps_null_length() {
        let ray = Spacetime::missing_ray(4).unwrap();
        let t = coordinate_time(&ray);
        let c = eps_path(&ray, 0.1);
        let r = c.reversed();
        assert_eq!(r.senses()[0], SegmentSense::Past);
        assert_abs_diff_eq!(null_length(&c, &t), null_length(&r, &t), epsilon = 1e-15);
        PiecewiseCausalCurve::new(&ray, r.vertices().to_vec(), r.senses().to_vec()).unwrap();
    }

    #[test]
    fn degenerate_segments() {
        let m = Spacetime::minkowski(2).unwrap();
        let c =
            PiecewiseCausalCurve::infer(&m, vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]])
                .unwrap();
        assert_eq!(c.senses()[0], SegmentSense::Degenerate);
        assert!(PiecewiseCausalCurve::new(
            &m,
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![SegmentSense::Degenerate]
        )
        .is_err());
    }

    fn mink_grid(h: f64) -> CausalGrid {
        let m = Spacetime::minkowski(2).unwrap();
        CausalGrid::build(
            &m,
            &coordinate_time(&m),
            &BoxRegion::slab(2, (-0.5, 0.5), (-0.25, 1.25)),
            h,
            StencilSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn rectifiable_length_examples() {
        let g = mink_grid(0.05);
        let oracle = GridOracle::new(&g);
        let line = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let mut prev = 0.0;
        for depth in 0..=6 {
            let v = rectifiable_length(&line, &oracle, depth).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        assert!((prev - 1.0).abs() <= 0.05, "{prev}");
        let exact = rectifiable_length(&line, &MinkowskiOracle, 6).unwrap();
        assert_abs_diff_eq!(exact, 1.0, epsilon = 1e-12);

        let seg = vec![vec![-0.5, 0.0], vec![0.5, 0.5]];
        assert_eq!(rectifiable_length(&seg, &oracle, 0).unwrap(), 1.0);
        assert_eq!(rectifiable_length(&seg, &MinkowskiOracle, 3).unwrap(), 1.0);
    }

    #[test]
    fn rectifiable_matches_null_length_on_walks() {
        let g = mink_grid(0.1);
        let oracle = GridOracle::new(&g);
        let tau = g.time_function().clone();
        let start = g.node_at(&[0.0, 0.45]).unwrap();
        for seed in 0..5 {
            let c = random_grid_walk(&g, start, 12, seed).unwrap();
            let rl = rectifiable_length(c.vertices(), &oracle, 3).unwrap();
            let nl = null_length(&c, &tau);
            assert!(rl <= nl + 1e-12);
            assert_abs_diff_eq!(rl, nl, epsilon = 1e-12);
            let s = zigzag_decompose(&c, &tau);
            let dt = tau.eval(c.end()) - tau.eval(c.start());
            assert_abs_diff_eq!(s.future_len - s.past_len, dt, epsilon = 1e-12);
        }
    }

    #[test]
    fn encoding_verdicts_upper_half() {
        let up = Spacetime::upper_half_minkowski(2).unwrap();
        let t = coordinate_time(&up);
        let region = BoxRegion::slab(2, (0.5, 2.5), (-0.5, 1.5));
        let r = encodes_causality_test(
            &up,
            &t,
            &[1.0, 0.0],
            &[2.0, 0.5],
            &region,
            0.05,
            StencilSpec::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::CausalAndEqual);
        assert_eq!(r.properness, Properness::DeclaredUnverified);
        assert_eq!(r.result.estimate, r.result.lower_bound);
        let r = encodes_causality_test(
            &up,
            &t,
            &[1.0, 0.0],
            &[1.0, 1.0],
            &region,
            0.05,
            StencilSpec::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.verdict, Verdict::SpacelikeAndStrict);
        assert!(r.result.estimate - r.result.lower_bound > 0.9);
        // swapped order reports the earlier event first
        let r = encodes_causality_test(
            &up,
            &t,
            &[2.0, 0.5],
            &[1.0, 0.0],
            &region,
            0.05,
            StencilSpec::default(),
            None,
        )
        .unwrap();
        assert_eq!(r.p, vec![1.0, 0.0]);
    }

    #[test]
    fn ball_is_a_cylinder() {
        let m = Spacetime::minkowski(2).unwrap();
        let h = 0.05;
        let g = CausalGrid::build(
            &m,
            &coordinate_time(&m),
            &BoxRegion::slab(2, (-1.5, 1.5), (-1.5, 1.5)),
            h,
            StencilSpec::default(),
        )
        .unwrap();
        let pts = ball_boundary_sample(&g, &[0.0, 0.0], 1.0, 8).unwrap();
        assert!((pts[0].point[0] - 1.0).abs() <= 2.0 * h);
        assert!(pts[0].point[1].abs() < 1e-12);
        assert!((pts[2].point[1] - 1.0).abs() <= 2.0 * h);
        assert!((pts[1].point[0] - 1.0).abs() <= 2.0 * h);
        assert!((pts[1].point[1] - 1.0).abs() <= 2.0 * h);
        assert!(matches!(
            ball_boundary_sample(&g, &[0.0, 0.0], 2.0, 4),
            Err(Error::BallExitsGrid { .. })
        ));
    }
}
