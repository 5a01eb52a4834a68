//! Maps between spacetimes: null-distance and time preservation, conformal
//! factors, and the volume comparison that forces a conformal factor to one.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::curve::GridOracle;
use crate::error::{Error, Result};
use crate::grid::{BoxRegion, CausalGrid, StencilSpec};
use crate::spacetime::{ConformalFactor, Spacetime};
use crate::time::{coordinate_time, cosmological_time_numeric, tabulated_time, TimeClaims};

/// Coordinate map between two spacetimes.
#[derive(Clone, Debug, PartialEq)]
pub enum PointMap {
    Identity,
    Translation(Vec<f64>),
    /// `z ↦ c·z`
    Dilation(f64),
    /// Rotation by `angle` in the plane of spatial axes `i`, `j` (coordinate indices ≥ 1).
    SpatialRotation {
        i: usize,
        j: usize,
        angle: f64,
    },
    /// Explicit node correspondence.
    Table(NodeTable),
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeTable {
    entries: Vec<(Vec<f64>, Vec<f64>)>,
    lookup: HashMap<Vec<i64>, usize>,
}

fn key(p: &[f64]) -> Vec<i64> {
    p.iter().map(|c| (c * 1e8).round() as i64).collect()
}

impl NodeTable {
    pub fn new(entries: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        let mut lookup = HashMap::with_capacity(entries.len());
        let mut targets = HashMap::with_capacity(entries.len());
        for (i, (a, b)) in entries.iter().enumerate() {
            if lookup.insert(key(a), i).is_some() || targets.insert(key(b), i).is_some() {
                return Err(Error::InvalidParam(format!("table row {i} repeats a node")));
            }
        }
        Ok(NodeTable { entries, lookup })
    }

    pub fn entries(&self) -> &[(Vec<f64>, Vec<f64>)] {
        &self.entries
    }

    pub fn get(&self, p: &[f64]) -> Option<&[f64]> {
        self.lookup
            .get(&key(p))
            .map(|&i| self.entries[i].1.as_slice())
    }
}

impl PointMap {
    /// Image of `p`, or `None` when a table has no row for it.
    pub fn apply(&self, p: &[f64]) -> Option<Vec<f64>> {
        match self {
            PointMap::Identity => Some(p.to_vec()),
            PointMap::Translation(a) => Some(p.iter().zip(a).map(|(x, d)| x + d).collect()),
            PointMap::Dilation(c) => Some(p.iter().map(|x| c * x).collect()),
            PointMap::SpatialRotation { i, j, angle } => {
                let (s, c) = angle.sin_cos();
                let mut q = p.to_vec();
                q[*i] = c * p[*i] - s * p[*j];
                q[*j] = s * p[*i] + c * p[*j];
                Some(q)
            }
            PointMap::Table(t) => t.get(p).map(|q| q.to_vec()),
        }
    }

    pub fn inverse(&self) -> Result<PointMap> {
        Ok(match self {
            PointMap::Identity => PointMap::Identity,
            PointMap::Translation(a) => PointMap::Translation(a.iter().map(|x| -x).collect()),
            PointMap::Dilation(c) if *c != 0.0 => PointMap::Dilation(1.0 / c),
            PointMap::Dilation(_) => return Err(Error::SingularJacobian),
            PointMap::SpatialRotation { i, j, angle } => PointMap::SpatialRotation {
                i: *i,
                j: *j,
                angle: -angle,
            },
            PointMap::Table(t) => PointMap::Table(NodeTable::new(
                t.entries
                    .iter()
                    .map(|(a, b)| (b.clone(), a.clone()))
                    .collect(),
            )?),
        })
    }

    pub fn is_closed_form(&self) -> bool {
        !matches!(self, PointMap::Table(_))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PreservingReport {
    /// `max |d̂₁(p,q) − d̂₂(F(p),F(q))|` over sampled pairs.
    pub d_hat_dev: f64,
    /// `max |τ₁(p) − τ₂(F(p))|` over sampled nodes.
    pub tau_dev: f64,
    pub pairs_tested: usize,
    pub tol: f64,
    pub passes: bool,
    pub seed: u64,
}

/// Samples node pairs of `source`, maps them with `map` into `target` and
/// compares null distances and time values. Time values are the grids' own.
pub fn check_preserving(
    map: &PointMap,
    source: &CausalGrid,
    target: &CausalGrid,
    n_pairs: usize,
    seed: u64,
    tol: f64,
) -> Result<PreservingReport> {
    let n = source.node_count();
    let image = |v: usize| -> Result<usize> {
        let q = map.apply(&source.coords(v)).ok_or(Error::MapLeavesGrid)?;
        target.node_at(&q).map_err(|_| Error::MapLeavesGrid)
    };
    let o1 = GridOracle::new(source);
    let o2 = GridOracle::new(target);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d_dev: f64 = 0.0;
    let mut t_dev: f64 = 0.0;
    for _ in 0..n_pairs {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        let (fa, fb) = (image(a)?, image(b)?);
        t_dev = t_dev
            .max((source.tau(a) - target.tau(fa)).abs())
            .max((source.tau(b) - target.tau(fb)).abs());
        let d1 = o1.node_distance(a, b);
        let d2 = o2.node_distance(fa, fb);
        let dev = match (d1, d2) {
            (Ok(x), Ok(y)) => (x - y).abs(),
            (Err(_), Err(_)) => 0.0,
            _ => f64::INFINITY,
        };
        d_dev = d_dev.max(dev);
    }
    Ok(PreservingReport {
        d_hat_dev: d_dev,
        tau_dev: t_dev,
        pairs_tested: n_pairs,
        tol,
        passes: d_dev <= tol && t_dev <= tol,
        seed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformalFactorEstimate {
    pub phi: f64,
    /// `(max r − min r) / mean r` over the test vectors.
    pub dispersion: f64,
    pub conformal: bool,
}

/// Pullback ratios `(Jᵀ g₂ J)(v,v) / g₁(v,v)` at `p` over `∂₀`, `∂₀ ± ½∂ᵢ`
/// and `∂ᵢ`; `φ` is the square root of their mean.
pub fn conformal_factor(
    map: &PointMap,
    st1: &Spacetime,
    st2: &Spacetime,
    p: &[f64],
    fd_step: f64,
) -> Result<ConformalFactorEstimate> {
    if !map.is_closed_form() {
        return Err(Error::InvalidParam(
            "conformal factor needs a closed-form map".into(),
        ));
    }
    let d = st1.dim();
    let mut jac = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut a = p.to_vec();
        let mut b = p.to_vec();
        a[k] += fd_step;
        b[k] -= fd_step;
        let fa = map.apply(&a).unwrap();
        let fb = map.apply(&b).unwrap();
        for i in 0..d {
            jac[(i, k)] = (fa[i] - fb[i]) / (2.0 * fd_step);
        }
    }
    let scale = jac.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
    if jac.determinant().abs() <= 1e-12 * scale.powi(d as i32) {
        return Err(Error::SingularJacobian);
    }
    let g1 = st1.metric_at(p);
    let fp = map.apply(p).unwrap();
    let g2 = st2.metric_at(&fp);
    let mut tests: Vec<Vec<f64>> = Vec::new();
    let mut e0 = vec![0.0; d];
    e0[0] = 1.0;
    tests.push(e0.clone());
    for i in 1..d {
        for s in [0.5, -0.5] {
            let mut v = e0.clone();
            v[i] = s;
            tests.push(v);
        }
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        tests.push(v);
    }
    let ratios: Vec<f64> = tests
        .iter()
        .map(|v| {
            let jv: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|k| jac[(i, k)] * v[k]).sum())
                .collect();
            g2.norm_sq(&jv) / g1.norm_sq(v)
        })
        .collect();
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let dispersion = (hi - lo) / mean.abs();
    Ok(ConformalFactorEstimate {
        phi: mean.abs().sqrt(),
        dispersion,
        conformal: mean > 0.0 && dispersion <= 0.02,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ConformalVerdict {
    Isometry,
    ConformalNotIsometric,
    NotConformal,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConformalReport {
    /// Evenly thinned subset of the quadrature samples.
    pub phi_samples: Vec<(Vec<f64>, f64)>,
    pub phi_min: f64,
    pub phi_max: f64,
    /// `∫ φⁿ dμ` with `n` the number of spatial dimensions.
    pub vol_n: f64,
    /// `∫ φⁿ⁻¹ dμ`
    pub vol_nm1: f64,
    pub verdict: ConformalVerdict,
    /// False for one spatial dimension, where the rigidity statement is not claimed.
    pub within_hypotheses: bool,
}

fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

const MAX_PHI_SAMPLES: usize = 256;

/// Midpoint-rule integrals of `φⁿ` and `φⁿ⁻¹` against `√|det g₁|` over `region`.
pub fn coarea_volume_compare(
    st1: &Spacetime,
    phi: &(dyn Fn(&[f64]) -> f64 + Sync),
    region: &BoxRegion,
    h: f64,
    tol: f64,
) -> Result<ConformalReport> {
    let d = st1.dim();
    if region.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: region.dim(),
        });
    }
    let n = (d - 1) as i32;
    let cells: Vec<usize> = (0..d)
        .map(|k| (((region.hi[k] - region.lo[k]) / h).round() as usize).max(1))
        .collect();
    let widths: Vec<f64> = (0..d)
        .map(|k| (region.hi[k] - region.lo[k]) / cells[k] as f64)
        .collect();
    let cell_vol: f64 = widths.iter().product();
    let total: usize = cells.iter().product();
    let point = |mut c: usize| -> Vec<f64> {
        let mut p = vec![0.0; d];
        for k in (0..d).rev() {
            p[k] = region.lo[k] + (c % cells[k]) as f64 * widths[k] + 0.5 * widths[k];
            c /= cells[k];
        }
        p
    };
    let sample = |c: usize| -> (f64, f64, f64) {
        let p = point(c);
        let f = phi(&p);
        let w = st1.metric_at(&p).determinant().abs().sqrt() * cell_vol;
        (f, w * f.powi(n), w * f.powi(n - 1))
    };
    #[cfg(feature = "parallel")]
    let samples: Vec<(f64, f64, f64)> = (0..total).into_par_iter().map(sample).collect();
    #[cfg(not(feature = "parallel"))]
    let samples: Vec<(f64, f64, f64)> = (0..total).map(sample).collect();

    if let Some(bad) = samples.iter().find(|s| !(s.0 > 0.0)) {
        return Err(Error::NonPositivePhi(bad.0));
    }
    let vol_n = pairwise_sum(&samples.iter().map(|s| s.1).collect::<Vec<_>>());
    let vol_nm1 = pairwise_sum(&samples.iter().map(|s| s.2).collect::<Vec<_>>());
    let phi_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let phi_max = samples
        .iter()
        .map(|s| s.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let stride = total.div_ceil(MAX_PHI_SAMPLES);
    let phi_samples = (0..total)
        .step_by(stride)
        .map(|c| (point(c), samples[c].0))
        .collect();
    let flat_one = (phi_min - 1.0).abs() <= tol && (phi_max - 1.0).abs() <= tol;
    let verdict = if (vol_n - vol_nm1).abs() <= tol * vol_nm1 && flat_one {
        ConformalVerdict::Isometry
    } else {
        ConformalVerdict::ConformalNotIsometric
    };
    Ok(ConformalReport {
        phi_samples,
        phi_min,
        phi_max,
        vol_n,
        vol_nm1,
        verdict,
        within_hypotheses: n >= 2,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RehearsalReport {
    pub phi: f64,
    /// Identity map, both time functions the coordinate time.
    pub coordinate_times: PreservingReport,
    /// Identity map, target time recomputed as the cosmological time of `φ²g`.
    pub cosmological_times: PreservingReport,
    pub factor: ConformalFactorEstimate,
    pub volumes: ConformalReport,
}

/// Identity map from upper-half Minkowski `g` to `φ²g` with constant `φ`.
///
/// With coordinate time on both sides the map preserves `d̂` and `τ`; once
/// the target time is the cosmological time of `φ²g`, it no longer does.
pub fn rigidity_rehearsal(
    dim: usize,
    phi: f64,
    region: &BoxRegion,
    h: f64,
    n_pairs: usize,
    seed: u64,
) -> Result<RehearsalReport> {
    let g1 = Spacetime::upper_half_minkowski(dim)?;
    let g2 = Spacetime::conformal(g1.clone(), ConformalFactor::Constant(phi))?;
    let stencil = StencilSpec::default();
    let t1 = coordinate_time(&g1);
    let grid1 = CausalGrid::build(&g1, &t1, region, h, stencil)?;
    let grid2 = CausalGrid::build(&g2, &coordinate_time(&g2), region, h, stencil)?;
    let tol = 1e-9;
    let coordinate_times =
        check_preserving(&PointMap::Identity, &grid1, &grid2, n_pairs, seed, tol)?;
    let cosmo = cosmological_time_numeric(&grid2)?;
    let tau2 = tabulated_time(
        &grid2,
        cosmo,
        TimeClaims {
            generalized: true,
            cosmological: true,
            ..Default::default()
        },
    );
    let grid2c = CausalGrid::build(&g2, &tau2, region, h, stencil)?;
    let cosmological_times =
        check_preserving(&PointMap::Identity, &grid1, &grid2c, n_pairs, seed, tol)?;
    let centre: Vec<f64> = region
        .lo
        .iter()
        .zip(&region.hi)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let factor = conformal_factor(&PointMap::Identity, &g1, &g2, &centre, 1e-4)?;
    let volumes = coarea_volume_compare(&g1, &|_p: &[f64]| phi, region, h, 1e-3)?;
    Ok(RehearsalReport {
        phi,
        coordinate_times,
        cosmological_times,
        factor,
        volumes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box(dim: usize) -> BoxRegion {
        BoxRegion::new(vec![0.0; dim], vec![1.0; dim])
    }

    #[test]
    fn constant_factor_volumes() {
        let m = Spacetime::minkowski(4).unwrap();
        let r = coarea_volume_compare(&m, &|_| 2.0, &unit_box(4), 0.1, 1e-3).unwrap();
        assert_relative_eq!(r.vol_n, 8.0, max_relative = 1e-12);
        assert_relative_eq!(r.vol_nm1, 4.0, max_relative = 1e-12);
        assert_eq!(r.verdict, ConformalVerdict::ConformalNotIsometric);
        let r = coarea_volume_compare(&m, &|_| 1.0, &unit_box(4), 0.1, 1e-3).unwrap();
        assert_eq!(r.vol_n, r.vol_nm1);
        assert_eq!(r.verdict, ConformalVerdict::Isometry);
        assert!(r.within_hypotheses);
        let r = coarea_volume_compare(&m, &|_| 0.5, &unit_box(4), 0.25, 1e-3).unwrap();
        assert!(r.vol_n < r.vol_nm1);
        assert!(matches!(
            coarea_volume_compare(&m, &|_| -1.0, &unit_box(4), 0.25, 1e-3),
            Err(Error::NonPositivePhi(_))
        ));
        let m2 = Spacetime::minkowski(2).unwrap();
        let r = coarea_volume_compare(&m2, &|_| 1.0, &unit_box(2), 0.1, 1e-3).unwrap();
        assert!(!r.within_hypotheses);
    }

    #[test]
    fn oscillating_factor_detected() {
        let m = Spacetime::minkowski(3).unwrap();
        let region = BoxRegion::new(vec![0.0, -1.0, -1.0], vec![1.0, 1.0, 1.0]);
        let phi = |p: &[f64]| 1.0 + 0.1 * p[1].sin();
        let r = coarea_volume_compare(&m, &phi, &region, 0.05, 1e-3).unwrap();
        let fine = coarea_volume_compare(&m, &phi, &region, 0.025, 1e-3).unwrap();
        let diff = r.vol_n - r.vol_nm1;
        assert!(diff > 1e-3);
        assert_relative_eq!(diff, fine.vol_n - fine.vol_nm1, max_relative = 1e-2);
        assert_eq!(r.verdict, ConformalVerdict::ConformalNotIsometric);
    }

    #[test]
    fn conformal_factor_examples() {
        let m = Spacetime::minkowski(4).unwrap();
        let m4 = Spacetime::conformal(m.clone(), ConformalFactor::Constant(2.0)).unwrap();
        let p = [0.3, 0.1, -0.2, 0.5];
        let f = conformal_factor(&PointMap::Identity, &m, &m4, &p, 1e-4).unwrap();
        assert_relative_eq!(f.phi, 2.0, max_relative = 1e-9);
        assert!(f.conformal);
        let f = conformal_factor(&PointMap::Dilation(2.0), &m, &m, &p, 1e-4).unwrap();
        assert_relative_eq!(f.phi, 2.0, max_relative = 1e-9);
        let rot = PointMap::SpatialRotation {
            i: 1,
            j: 2,
            angle: 0.7,
        };
        let f = conformal_factor(&rot, &m, &m, &p, 1e-4).unwrap();
        assert_relative_eq!(f.phi, 1.0, max_relative = 1e-9);
        assert!(f.conformal);
        // warping stretches space but not time
        let w =
            Spacetime::warped_product(4, crate::spacetime::WarpFactor::Linear { a: 1.0, b: 0.0 })
                .unwrap();
        let f = conformal_factor(&PointMap::Identity, &m, &w, &[2.0, 0.0, 0.0, 0.0], 1e-4).unwrap();
        assert!(!f.conformal);
        assert_eq!(
            conformal_factor(&PointMap::Dilation(0.0), &m, &m, &p, 1e-4),
            Err(Error::SingularJacobian)
        );
    }

    fn grids(st2: &Spacetime, shift: f64) -> (CausalGrid, CausalGrid) {
        let up = Spacetime::upper_half_minkowski(2).unwrap();
        let r1 = BoxRegion::slab(2, (0.5, 1.5), (-0.5, 0.5));
        let r2 = BoxRegion::slab(2, (0.5, 1.5), (-0.5 + shift, 0.5 + shift));
        (
            CausalGrid::build(&up, &coordinate_time(&up), &r1, 0.1, StencilSpec::default())
                .unwrap(),
            CausalGrid::build(st2, &coordinate_time(st2), &r2, 0.1, StencilSpec::default())
                .unwrap(),
        )
    }

    #[test]
    fn preserving_examples() {
        let up = Spacetime::upper_half_minkowski(2).unwrap();
        let (a, b) = grids(&up, 0.0);
        let r = check_preserving(&PointMap::Identity, &a, &b, 100, 1, 0.0).unwrap();
        assert!(r.passes);
        let c = Spacetime::conformal(up.clone(), ConformalFactor::Constant(2.0)).unwrap();
        let (a, b) = grids(&c, 0.0);
        let r = check_preserving(&PointMap::Identity, &a, &b, 100, 1, 0.0).unwrap();
        assert_eq!((r.d_hat_dev, r.tau_dev), (0.0, 0.0));
        let (a, b) = grids(&up, 0.5);
        let r = check_preserving(
            &PointMap::Translation(vec![0.0, 0.5]),
            &a,
            &b,
            100,
            1,
            1e-12,
        )
        .unwrap();
        assert!(r.passes, "{r:?}");
        let (a, b) = grids(&up, 0.0);
        assert_eq!(
            check_preserving(&PointMap::Translation(vec![0.0, 5.0]), &a, &b, 10, 1, 0.0),
            Err(Error::MapLeavesGrid)
        );
    }

    #[test]
    fn table_map_symmetry() {
        let up = Spacetime::upper_half_minkowski(2).unwrap();
        let (a, b) = grids(&up, 0.5);
        let rows: Vec<_> = (0..a.node_count())
            .map(|v| {
                let p = a.coords(v);
                let mut q = p.clone();
                q[1] += 0.5;
                (p, q)
            })
            .collect();
        let map = PointMap::Table(NodeTable::new(rows).unwrap());
        let fwd = check_preserving(&map, &a, &b, 50, 3, 1e-12).unwrap();
        let back = check_preserving(&map.inverse().unwrap(), &b, &a, 50, 3, 1e-12).unwrap();
        assert!(fwd.passes && back.passes);
    }

    #[test]
    fn rehearsal() {
        let region = BoxRegion::slab(2, (0.5, 1.5), (-0.5, 0.5));
        let r = rigidity_rehearsal(2, 2.0, &region, 0.1, 200, 7).unwrap();
        assert!(r.coordinate_times.passes);
        assert!(!r.cosmological_times.passes);
        assert!(r.cosmological_times.tau_dev > 0.4);
        assert_relative_eq!(r.factor.phi, 2.0, max_relative = 1e-9);
        assert_eq!(r.volumes.verdict, ConformalVerdict::ConformalNotIsometric);
    }
}
