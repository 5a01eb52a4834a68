//! Time functions: evaluation, numeric cosmological time on a grid, and the
//! anti-Lipschitz and regularity checks.

use std::fmt;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{BoxRegion, CausalGrid};
use crate::spacetime::{ConformalFactor, Event, Spacetime, SpacetimeKind, TimeSense};

/// Properties a time function is declared to have. None of them is inferred.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TimeClaims {
    pub generalized: bool,
    pub anti_lipschitz: bool,
    pub proper: bool,
    pub cosmological: bool,
}

type EvalFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Rule {
    Coordinate,
    Cubed,
    Affine { scale: f64, offset: f64 },
    Custom(EvalFn),
}

#[derive(Clone)]
pub struct TimeFunction {
    name: String,
    rule: Rule,
    pub claims: TimeClaims,
    /// `sup τ` over the domain; `f64::INFINITY` when unbounded.
    pub range_sup: f64,
}

impl fmt::Debug for TimeFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimeFunction")
            .field("name", &self.name)
            .field("claims", &self.claims)
            .field("range_sup", &self.range_sup)
            .finish()
    }
}

impl TimeFunction {
    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, p: &[f64]) -> f64 {
        match &self.rule {
            Rule::Coordinate => p[0],
            Rule::Cubed => p[0] * p[0] * p[0],
            Rule::Affine { scale, offset } => scale * p[0] + offset,
            Rule::Custom(f) => f(p),
        }
    }

    pub fn eval_event(&self, p: &Event) -> f64 {
        self.eval(&p.coords)
    }

    /// Wraps an arbitrary evaluator.
    pub fn custom(
        name: impl Into<String>,
        claims: TimeClaims,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TimeFunction {
            name: name.into(),
            rule: Rule::Custom(Arc::new(f)),
            claims,
            range_sup: f64::INFINITY,
        }
    }

    /// Closed-form cosmological time where one is known for `st`.
    pub fn analytic_cosmological(st: &Spacetime, p: &[f64]) -> Option<f64> {
        match st.kind() {
            SpacetimeKind::UpperHalfMinkowski | SpacetimeKind::MissingRay => Some(p[0]),
            SpacetimeKind::Warped(_) => st.time_lower_bound().map(|t0| p[0] - t0),
            SpacetimeKind::Conformal {
                base,
                factor: ConformalFactor::Constant(c),
            } => Self::analytic_cosmological(base, p).map(|t| t * c),
            _ => None,
        }
    }
}

/// `τ(p) = p₀`.
pub fn coordinate_time(st: &Spacetime) -> TimeFunction {
    let cosmological = match st.kind() {
        SpacetimeKind::UpperHalfMinkowski | SpacetimeKind::MissingRay => true,
        SpacetimeKind::Warped(_) => st.time_lower_bound() == Some(0.0),
        _ => false,
    };
    TimeFunction {
        name: "coordinate".into(),
        rule: Rule::Coordinate,
        claims: TimeClaims {
            generalized: true,
            anti_lipschitz: true,
            proper: matches!(st.kind(), SpacetimeKind::UpperHalfMinkowski),
            cosmological,
        },
        range_sup: f64::INFINITY,
    }
}

/// `τ(p) = p₀³`, a time function without the anti-Lipschitz property near `t = 0`.
pub fn cubed_time(_st: &Spacetime) -> TimeFunction {
    TimeFunction {
        name: "cubed".into(),
        rule: Rule::Cubed,
        claims: TimeClaims {
            generalized: true,
            anti_lipschitz: false,
            proper: false,
            cosmological: false,
        },
        range_sup: f64::INFINITY,
    }
}

/// `τ(p) = scale·p₀ + offset`.
pub fn affine_time(st: &Spacetime, scale: f64, offset: f64) -> TimeFunction {
    let base = coordinate_time(st);
    TimeFunction {
        name: "affine".into(),
        rule: Rule::Affine { scale, offset },
        claims: TimeClaims {
            generalized: scale > 0.0,
            anti_lipschitz: scale > 0.0,
            proper: base.claims.proper && scale > 0.0,
            cosmological: base.claims.cosmological && scale == 1.0 && offset == 0.0,
        },
        range_sup: f64::INFINITY,
    }
}

/// Longest-path lower bound on the cosmological time at every grid node.
///
/// Each node takes the maximum over directed chains ending at it of the summed
/// Lorentzian edge lengths. Nodes without incoming edges start from the
/// length of the coordinate time line down to the domain's past boundary
/// (or to the grid box when the domain has none).
pub fn cosmological_time_numeric(grid: &CausalGrid) -> Result<Vec<f64>> {
    let n = grid.node_count();
    let st = grid.spacetime();
    let mut indeg: Vec<usize> = (0..n).map(|v| grid.in_degree(v)).collect();
    let mut value = vec![f64::NEG_INFINITY; n];
    let mut order = Vec::with_capacity(n);
    let floor = grid.region().lo[0];
    for v in 0..n {
        if indeg[v] == 0 {
            let x = grid.coords(v);
            let t_past = st.time_lower_bound().unwrap_or(floor);
            value[v] = st.time_line_length(&x, t_past, x[0]);
            order.push(v);
        }
    }
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        let vu = value[u];
        for e in grid.out_edges(u) {
            let cand = vu + e.lorentz_len;
            if cand > value[e.to] {
                value[e.to] = cand;
            }
            indeg[e.to] -= 1;
            if indeg[e.to] == 0 {
                order.push(e.to);
            }
        }
    }
    if order.len() != n {
        return Err(Error::CyclicGraph);
    }
    Ok(value)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PairFilter {
    AllCausal,
    /// Only pairs sharing every spatial coordinate.
    SameSpatialPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AntiLipschitzOptions {
    /// Number of past endpoints sampled from the region (all when larger).
    pub max_sources: usize,
    pub seed: u64,
    pub filter: PairFilter,
}

impl Default for AntiLipschitzOptions {
    fn default() -> Self {
        AntiLipschitzOptions {
            max_sources: 64,
            seed: 0,
            filter: PairFilter::AllCausal,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzViolation {
    pub q: Vec<f64>,
    pub q_prime: Vec<f64>,
    pub tau_gap: f64,
    pub d_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AntiLipschitzReport {
    pub region: BoxRegion,
    /// Best constant λ with `τ(q) − τ(q′) >= λ·d_U(q, q′)` on the sampled pairs.
    pub lambda_best: f64,
    /// Pairs with `τ(q) − τ(q′) <= 0`, which no positive λ accepts.
    pub violations: Vec<LipschitzViolation>,
    pub pairs_tested: usize,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Estimates the anti-Lipschitz constant of `tau` against coordinate
/// Euclidean distance over grid-causal pairs inside `region`.
pub fn check_anti_lipschitz(
    grid: &CausalGrid,
    tau: &TimeFunction,
    region: &BoxRegion,
    opts: AntiLipschitzOptions,
) -> Result<AntiLipschitzReport> {
    let inside: Vec<usize> = (0..grid.node_count())
        .filter(|&v| region.contains(&grid.coords(v)))
        .collect();
    let mut sources = inside.clone();
    if sources.len() > opts.max_sources {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        sources.shuffle(&mut rng);
        sources.truncate(opts.max_sources);
        sources.sort_unstable();
    }
    let mut lambda = f64::INFINITY;
    let mut violations = Vec::new();
    let mut pairs = 0usize;
    for &src in &sources {
        let reach = grid.reach(src, TimeSense::Future)?;
        let a = grid.coords(src);
        let ta = tau.eval(&a);
        for &v in &inside {
            if v == src || !reach.contains(v) {
                continue;
            }
            let b = grid.coords(v);
            if opts.filter == PairFilter::SameSpatialPoint && a[1..] != b[1..] {
                continue;
            }
            pairs += 1;
            let gap = tau.eval(&b) - ta;
            let d = euclid(&a, &b);
            if gap <= 0.0 {
                violations.push(LipschitzViolation {
                    q: b,
                    q_prime: a.clone(),
                    tau_gap: gap,
                    d_gap: d,
                });
            }
            lambda = lambda.min(gap / d);
        }
    }
    if pairs == 0 {
        return Err(Error::NoCausalPairs);
    }
    Ok(AntiLipschitzReport {
        region: region.clone(),
        lambda_best: lambda.max(0.0),
        violations,
        pairs_tested: pairs,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegularityReport {
    pub regular: bool,
    /// Threshold `2h·L` with `L` the stencil length bound.
    pub eps_reg: f64,
    pub nonfinite_nodes: usize,
    /// Extremes of τ over nodes that end maximal past-directed chains.
    pub min_terminal_tau: f64,
    pub max_terminal_tau: f64,
    pub terminal_nodes: usize,
}

/// Checks that `tau` is finite everywhere and tends to zero at the past ends
/// of the grid's causal chains.
pub fn check_regularity(grid: &CausalGrid, tau: &TimeFunction) -> RegularityReport {
    let eps_reg = 2.0 * grid.h() * grid.length_bound();
    let mut nonfinite = 0;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut terminals = 0;
    for v in 0..grid.node_count() {
        let t = tau.eval(&grid.coords(v));
        if !t.is_finite() {
            nonfinite += 1;
            continue;
        }
        if grid.in_degree(v) == 0 {
            terminals += 1;
            lo = lo.min(t);
            hi = hi.max(t);
        }
    }
    let regular = nonfinite == 0 && terminals > 0 && lo >= -eps_reg && hi <= eps_reg;
    RegularityReport {
        regular,
        eps_reg,
        nonfinite_nodes: nonfinite,
        min_terminal_tau: lo,
        max_terminal_tau: hi,
        terminal_nodes: terminals,
    }
}

/// Wraps per-node values (e.g. a numeric cosmological time) as a time
/// function that evaluates at the nearest grid node.
pub fn tabulated_time(grid: &CausalGrid, values: Vec<f64>, claims: TimeClaims) -> TimeFunction {
    assert_eq!(values.len(), grid.node_count());
    let lo = grid.region().lo.clone();
    let h = grid.h();
    let shape = grid.shape().to_vec();
    let mut by_site = vec![f64::NAN; shape.iter().product()];
    for (v, val) in values.into_iter().enumerate() {
        let idx = grid.lattice_index(v);
        let site = idx.iter().zip(&shape).fold(0usize, |s, (&i, &n)| s * n + i);
        by_site[site] = val;
    }
    TimeFunction::custom("tabulated", claims, move |p: &[f64]| {
        let mut site = 0usize;
        for k in 0..p.len() {
            let i = ((p[k] - lo[k]) / h).round();
            if i < 0.0 || i as usize >= shape[k] {
                return f64::NAN;
            }
            site = site * shape[k] + i as usize;
        }
        by_site[site]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::StencilSpec;
    use crate::spacetime::WarpFactor;
    use approx::assert_abs_diff_eq;

    #[test]
    fn coordinate_and_cubed_examples() {
        let up = Spacetime::upper_half_minkowski(4).unwrap();
        assert_eq!(coordinate_time(&up).eval(&[1.5, 2.0, 0.0, 0.0]), 1.5);
        assert!(coordinate_time(&up).claims.proper);
        let ray = Spacetime::missing_ray(4).unwrap();
        let tr = coordinate_time(&ray);
        assert_eq!(tr.eval(&[1.0, -1.0, 0.0, 0.0]), 1.0);
        assert!(!tr.claims.proper);
        assert!(tr.claims.cosmological);
        let m = Spacetime::minkowski(2).unwrap();
        let c = cubed_time(&m);
        assert_eq!(c.eval(&[0.5, 3.0]), 0.125);
        assert_eq!(c.eval(&[0.0, 3.0]), 0.0);
        assert_eq!(c.eval(&[-1.0, 3.0]), -1.0);
        assert!(!c.claims.anti_lipschitz);
    }

    #[test]
    fn cosmological_time_upper_half() {
        let st = Spacetime::upper_half_minkowski(2).unwrap();
        let tau = coordinate_time(&st);
        let g = CausalGrid::build(
            &st,
            &tau,
            &BoxRegion::slab(2, (0.5, 1.5), (-0.5, 0.5)),
            0.05,
            StencilSpec::default(),
        )
        .unwrap();
        let ct = cosmological_time_numeric(&g).unwrap();
        let v = g.node_at(&[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(ct[v], 1.0, epsilon = 1e-9);
        let bottom = g.node_at(&[0.5, 0.2]).unwrap();
        assert_abs_diff_eq!(ct[bottom], 0.5, epsilon = 1e-12);
        for e in g.edges() {
            assert!(ct[e.to] >= ct[e.from] + e.lorentz_len - 1e-12);
        }
    }

    #[test]
    fn cosmological_time_bottom_layer_is_small_without_past_boundary() {
        let st = Spacetime::minkowski(2).unwrap();
        let tau = coordinate_time(&st);
        let h = 0.1;
        let g = CausalGrid::build(
            &st,
            &tau,
            &BoxRegion::slab(2, (0.0, 1.0), (-0.5, 0.5)),
            h,
            StencilSpec::default(),
        )
        .unwrap();
        let ct = cosmological_time_numeric(&g).unwrap();
        let v = g.node_at(&[0.0, 0.0]).unwrap();
        assert!(ct[v] <= h * g.length_bound());
    }

    #[test]
    fn cosmological_time_conformal_scales() {
        let base = Spacetime::upper_half_minkowski(2).unwrap();
        let st = Spacetime::conformal(base, ConformalFactor::Constant(2.0)).unwrap();
        let tau = coordinate_time(&st);
        let g = CausalGrid::build(
            &st,
            &tau,
            &BoxRegion::slab(2, (0.25, 1.25), (-0.5, 0.5)),
            0.05,
            StencilSpec::default(),
        )
        .unwrap();
        let ct = cosmological_time_numeric(&g).unwrap();
        assert_abs_diff_eq!(ct[g.node_at(&[1.0, 0.0]).unwrap()], 2.0, epsilon = 1e-9);
        assert_eq!(
            TimeFunction::analytic_cosmological(&st, &[1.0, 0.0]),
            Some(2.0)
        );
    }

    #[test]
    fn cosmological_time_warped_matches_coordinate_time() {
        let st = Spacetime::warped_product(2, WarpFactor::Linear { a: 1.0, b: 0.0 }).unwrap();
        let tau = coordinate_time(&st);
        let g = CausalGrid::build(
            &st,
            &tau,
            &BoxRegion::slab(2, (0.1, 1.5), (-0.3, 0.3)),
            0.05,
            StencilSpec::default(),
        )
        .unwrap();
        let ct = cosmological_time_numeric(&g).unwrap();
        for v in 0..g.node_count() {
            let t = g.coords(v)[0];
            assert!((ct[v] - t).abs() < 1e-6, "{} vs {}", ct[v], t);
        }
    }

    #[test]
    fn generalized_time_increases_along_edges() {
        let st = Spacetime::minkowski(3).unwrap();
        for tau in [
            coordinate_time(&st),
            cubed_time(&st),
            affine_time(&st, 2.0, 1.0),
        ] {
            let g = CausalGrid::build(
                &st,
                &tau,
                &BoxRegion::slab(3, (-0.5, 0.5), (-0.5, 0.5)),
                0.125,
                StencilSpec::default(),
            )
            .unwrap();
            assert!(tau.claims.generalized);
            for e in g.edges() {
                assert!(g.tau(e.to) > g.tau(e.from));
            }
        }
    }

    fn antilip_grid(st: &Spacetime, tau: &TimeFunction, h: f64) -> CausalGrid {
        CausalGrid::build(
            st,
            tau,
            &BoxRegion::slab(st.dim(), (0.5, 1.5), (-1.0, 1.0)),
            h,
            StencilSpec::default(),
        )
        .unwrap()
    }

    #[test]
    fn anti_lipschitz_coordinate_time() {
        let st = Spacetime::minkowski(2).unwrap();
        let tau = coordinate_time(&st);
        let g = antilip_grid(&st, &tau, 0.05);
        let rep =
            check_anti_lipschitz(&g, &tau, g.region(), AntiLipschitzOptions::default()).unwrap();
        assert!((rep.lambda_best - 0.5f64.sqrt()).abs() <= 0.05);
        assert!(rep.violations.is_empty());
    }

    #[test]
    fn anti_lipschitz_vertical_pairs_ratio_one() {
        let st = Spacetime::minkowski(2).unwrap();
        let tau = coordinate_time(&st);
        let g = antilip_grid(&st, &tau, 0.1);
        let opts = AntiLipschitzOptions {
            filter: PairFilter::SameSpatialPoint,
            ..Default::default()
        };
        let rep = check_anti_lipschitz(&g, &tau, g.region(), opts).unwrap();
        assert_abs_diff_eq!(rep.lambda_best, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn anti_lipschitz_affine_covariance() {
        let st = Spacetime::minkowski(2).unwrap();
        let mut base = None;
        for a in [1.0, 2.0] {
            for b in [0.0, 1.0] {
                let tau = affine_time(&st, a, b);
                let g = antilip_grid(&st, &tau, 0.1);
                let rep =
                    check_anti_lipschitz(&g, &tau, g.region(), AntiLipschitzOptions::default())
                        .unwrap();
                let unit = rep.lambda_best / a;
                let b0 = *base.get_or_insert(unit);
                assert_abs_diff_eq!(unit, b0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn anti_lipschitz_no_pairs() {
        let st = Spacetime::minkowski(2).unwrap();
        let tau = coordinate_time(&st);
        let g = antilip_grid(&st, &tau, 0.5);
        let tiny = BoxRegion::slab(2, (0.5, 0.5), (0.0, 0.0));
        assert_eq!(
            check_anti_lipschitz(&g, &tau, &tiny, AntiLipschitzOptions::default()),
            Err(Error::NoCausalPairs)
        );
    }

    #[test]
    fn regularity_examples() {
        let up = Spacetime::upper_half_minkowski(2).unwrap();
        let h = 0.05;
        let region = BoxRegion::slab(2, (h, 1.0), (-0.5, 0.5));
        let tau = coordinate_time(&up);
        let g = CausalGrid::build(&up, &tau, &region, h, StencilSpec::default()).unwrap();
        assert!(check_regularity(&g, &tau).regular);
        let shifted = affine_time(&up, 1.0, 5.0);
        assert!(!check_regularity(&g, &shifted).regular);

        let m = Spacetime::minkowski(2).unwrap();
        let tm = coordinate_time(&m);
        let g = CausalGrid::build(
            &m,
            &tm,
            &BoxRegion::slab(2, (-1.0, 1.0), (-0.5, 0.5)),
            h,
            StencilSpec::default(),
        )
        .unwrap();
        let rep = check_regularity(&g, &tm);
        assert!(!rep.regular);
        assert_abs_diff_eq!(rep.min_terminal_tau, -1.0);
    }

    #[test]
    fn tabulated_time_lookup() {
        let st = Spacetime::upper_half_minkowski(2).unwrap();
        let tau = coordinate_time(&st);
        let g = CausalGrid::build(
            &st,
            &tau,
            &BoxRegion::slab(2, (0.5, 1.0), (-0.5, 0.5)),
            0.25,
            StencilSpec::default(),
        )
        .unwrap();
        let vals: Vec<f64> = (0..g.node_count()).map(|v| 10.0 * g.coords(v)[0]).collect();
        let tt = tabulated_time(&g, vals, TimeClaims::default());
        assert_eq!(tt.eval(&[0.75, 0.25]), 7.5);
        assert!(tt.eval(&[3.0, 0.0]).is_nan());
    }
}
