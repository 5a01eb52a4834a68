use std::time::Instant;

use anyhow::Result;
use nulldist_core::curve::{
    ball_boundary_sample, encodes_causality_test, equal_time_zigzag, null_length, Verdict,
    ViolationKind,
};
use nulldist_core::grid::{refine_schedule, BoxRegion, CausalGrid, StencilSpec};
use nulldist_core::spacetime::{ConformalFactor, Spacetime};
use nulldist_core::time::{coordinate_time, cubed_time};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

pub const PRESETS: [&str; 5] = [
    "cubed-time",
    "missing-ray",
    "spacelike-pair",
    "conformal-scaling",
    "ball-cylinder",
];

pub const PRESET_HELP: &str = "Presets:
  cubed-time         t^3 zigzag witnesses and grid estimate between equal-time points at t = 0
  missing-ray        causality violation on 2+1 Minkowski with the ray {t >= 2, x = 0} removed
  spacelike-pair     null distance 1 between (0,0) and (0,1) in Minkowski
  conformal-scaling  identical grids and estimates for g and 4g
  ball-cylinder      the null-distance ball of radius 1 is a cylinder";

#[derive(Debug, Serialize)]
pub struct PresetResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

/// `[a, b]` widened outward to multiples of `h`.
fn aligned(a: f64, b: f64, h: f64) -> (f64, f64) {
    ((a / h).floor() * h, (b / h).ceil() * h)
}

fn slab(dim: usize, t: (f64, f64), x: (f64, f64), h: f64) -> BoxRegion {
    let t = aligned(t.0, t.1, h);
    let x = aligned(x.0, x.1, h);
    BoxRegion::slab(dim, t, x)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol + 1e-12
}

pub fn run_preset(name: &str, h: f64, seed: u64) -> Result<PresetResult> {
    let s = StencilSpec::default();
    let (pass, detail) = match name {
        "cubed-time" => {
            let m = Spacetime::minkowski(2)?;
            let tau = cubed_time(&m);
            let mut exact = true;
            for j in [1usize, 2, 4] {
                let len = null_length(&equal_time_zigzag(&m, &[0.0, 0.0], 1.0, j)?, &tau);
                exact &= len == 2.0 * j as f64 * (0.5 / j as f64).powi(3);
            }
            let region = slab(2, (-0.5, 0.5), (-0.25, 1.25), 2.0 * h);
            let rep = refine_schedule(
                &m,
                &tau,
                &[0.0, 0.0],
                &[0.0, 1.0],
                &region,
                &[2.0 * h, h],
                s,
            )?;
            let (coarse, fine) = (rep.entries[0].estimate, rep.entries[1].estimate);
            (
                exact && fine <= 0.05 && fine < coarse,
                format!(
                    "witnesses exact {exact}, estimate {fine:.4e} (h={h}), {coarse:.4e} (h={})",
                    2.0 * h
                ),
            )
        }
        "missing-ray" => {
            let st = Spacetime::missing_ray(3)?;
            let (t, x, y) = (
                aligned(0.5, 3.5, h),
                aligned(-1.5, 1.5, h),
                aligned(-0.5, 0.5, h),
            );
            let region = BoxRegion::new(vec![t.0, x.0, y.0], vec![t.1, x.1, y.1]);
            let rep = encodes_causality_test(
                &st,
                &coordinate_time(&st),
                &[1.0, -1.0, 0.0],
                &[3.0, 1.0, 0.0],
                &region,
                h,
                s,
                None,
            )?;
            let est = rep.result.estimate;
            (
                rep.verdict == Verdict::Violation(ViolationKind::MissingCausal)
                    && !rep.reachable
                    && close(est, 2.0, 0.1),
                format!(
                    "{:?}, reachable {}, estimate {est:.6}",
                    rep.verdict, rep.reachable
                ),
            )
        }
        "spacelike-pair" => {
            let start = Instant::now();
            let m = Spacetime::minkowski(2)?;
            let g = CausalGrid::build(
                &m,
                &coordinate_time(&m),
                &slab(2, (-1.0, 1.0), (-0.5, 1.5), h),
                h,
                s,
            )?;
            let est = g
                .shortest_null_path_events(&[0.0, 0.0], &[0.0, 1.0])?
                .estimate;
            let secs = start.elapsed().as_secs_f64();
            (
                close(est, 1.0, 0.05) && secs < 10.0,
                format!("estimate {est:.6}"),
            )
        }
        "conformal-scaling" => {
            let m = Spacetime::minkowski(3)?;
            let m4 = Spacetime::conformal(m.clone(), ConformalFactor::Constant(2.0))?;
            let tau = coordinate_time(&m);
            let region = slab(3, (0.0, 1.0), (-0.5, 0.5), h);
            let a = CausalGrid::build(&m, &tau, &region, h, s)?;
            let b = CausalGrid::build(&m4, &tau, &region, h, s)?;
            let same_edges = a
                .edges()
                .map(|e| (e.from, e.to, e.weight.to_bits()))
                .eq(b.edges().map(|e| (e.from, e.to, e.weight.to_bits())));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut same_est = true;
            for _ in 0..50 {
                let (p, q) = (
                    rng.gen_range(0..a.node_count()),
                    rng.gen_range(0..a.node_count()),
                );
                same_est &=
                    a.shortest_null_path(p, q)?.estimate == b.shortest_null_path(p, q)?.estimate;
            }
            (
                same_edges && same_est,
                format!(
                    "{} edges, edges equal {same_edges}, estimates equal {same_est}",
                    a.edge_count()
                ),
            )
        }
        "ball-cylinder" => {
            let m = Spacetime::minkowski(2)?;
            let g = CausalGrid::build(
                &m,
                &coordinate_time(&m),
                &slab(2, (-1.5, 1.5), (-1.5, 1.5), h),
                h,
                s,
            )?;
            let mut worst = 0.0f64;
            for b in ball_boundary_sample(&g, &[0.0, 0.0], 1.0, 16)? {
                let (ct, cx) = (b.direction[0].abs(), b.direction[1].abs());
                if ct >= cx - 1e-12 {
                    worst = worst.max((b.point[0].abs() - 1.0).abs());
                }
                if cx >= ct - 1e-12 {
                    worst = worst.max((b.point[1].abs() - 1.0).abs());
                }
            }
            (
                worst <= 2.0 * h,
                format!("max boundary deviation {worst:.4}"),
            )
        }
        other => anyhow::bail!("unknown preset `{other}`"),
    };
    Ok(PresetResult {
        name: name.to_string(),
        pass,
        detail,
    })
}
