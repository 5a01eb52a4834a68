//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the
//! process exits nonzero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nulldist_core::curve::{
    ball_boundary_sample, encodes_causality_test, equal_time_zigzag, null_length, random_grid_walk,
    rectifiable_length, zigzag_decompose, GridOracle, Verdict, ViolationKind,
};
use nulldist_core::grid::{refine_schedule, BoxRegion, CausalGrid, StencilSpec};
use nulldist_core::isometry::{coarea_volume_compare, rigidity_rehearsal, ConformalVerdict};
use nulldist_core::optical::{ChartOptions, LipschitzOptions, NullChart};
use nulldist_core::spacetime::{ConformalFactor, Spacetime, TimeSense};
use nulldist_core::time::{
    check_anti_lipschitz, coordinate_time, cubed_time, AntiLipschitzOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut o = f();
    let took = start.elapsed();
    o.detail = format!(
        "{} [{:.2}s, limit {}s]",
        o.detail,
        took.as_secs_f64(),
        limit.as_secs()
    );
    o.pass &= took < limit;
    o
}

fn spacelike_unit_pair() -> Outcome {
    timed(Duration::from_secs(10), || {
        let m = Spacetime::minkowski(2).unwrap();
        let g = CausalGrid::build(
            &m,
            &coordinate_time(&m),
            &BoxRegion::slab(2, (-1.0, 1.0), (-0.5, 1.5)),
            0.05,
            StencilSpec::with_radius(2),
        )
        .unwrap();
        let est = g
            .shortest_null_path_events(&[0.0, 0.0], &[0.0, 1.0])
            .unwrap();
        outcome(
            (est.estimate - 1.0).abs() <= 0.05,
            format!("estimate {:.6}, expected 1 within 5%", est.estimate),
        )
    })
}

fn cubed_degeneracy() -> Outcome {
    let m = Spacetime::minkowski(2).unwrap();
    let tau = cubed_time(&m);
    let mut pass = true;
    let mut parts = Vec::new();
    for j in [1usize, 2, 4] {
        let beta = equal_time_zigzag(&m, &[0.0, 0.0], 1.0, j).unwrap();
        let bound = 2.0 * j as f64 * (1.0 / (2.0 * j as f64)).powi(3);
        let len = null_length(&beta, &tau);
        pass &= len == bound;
        parts.push(format!("beta_{j} {len} (bound {bound})"));
    }
    let rep = refine_schedule(
        &m,
        &tau,
        &[0.0, 0.0],
        &[0.0, 1.0],
        &BoxRegion::slab(2, (-0.5, 0.5), (-0.25, 1.25)),
        &[0.05, 0.025, 0.01],
        StencilSpec::default(),
    )
    .unwrap();
    let last = rep.entries.last().unwrap().estimate;
    let strictly = rep
        .entries
        .windows(2)
        .all(|w| w[1].estimate < w[0].estimate);
    pass &= last <= 0.05 && strictly;
    let ests: Vec<String> = rep
        .entries
        .iter()
        .map(|e| format!("h={} {:.3e}", e.h, e.estimate))
        .collect();
    parts.push(format!("grid {}", ests.join(", ")));
    outcome(pass, parts.join("; "))
}

fn missing_ray_violation() -> Outcome {
    let st = Spacetime::missing_ray(4).unwrap();
    let tau = coordinate_time(&st);
    let region = BoxRegion::new(vec![0.5, -1.5, -1.5, -1.5], vec![3.5, 1.5, 1.5, 1.5]);
    let (p, q) = ([1.0, -1.0, 0.0, 0.0], [3.0, 1.0, 0.0, 0.0]);
    let mut o = timed(Duration::from_secs(60), || {
        let rep = encodes_causality_test(
            &st,
            &tau,
            &p,
            &q,
            &region,
            0.25,
            StencilSpec::default(),
            None,
        )
        .unwrap();
        let est = rep.result.estimate;
        let kind_ok = rep.verdict == Verdict::Violation(ViolationKind::MissingCausal);
        let near = (est - 2.0).abs() <= 0.1;
        outcome(
            kind_ok && near && !rep.reachable,
            format!(
                "verdict {:?}, reachable {}, estimate {est:.6} (need 2 within 5%), tol_eq {:.4}",
                rep.verdict, rep.reachable, rep.tol_eq
            ),
        )
    });
    if let Ok(r) = refine_schedule(
        &st,
        &tau,
        &p,
        &q,
        &region,
        &[0.5, 0.25],
        StencilSpec::default(),
    ) {
        o.detail = format!(
            "{}; lattice floor 2+2h, linear extrapolation h->0 gives {:.6}",
            o.detail,
            r.extrapolated.unwrap()
        );
    }
    o
}

fn causal_exactness() -> Outcome {
    let st = Spacetime::upper_half_minkowski(3).unwrap();
    let g = CausalGrid::build(
        &st,
        &coordinate_time(&st),
        &BoxRegion::slab(3, (0.5, 1.5), (-0.5, 0.5)),
        0.1,
        StencilSpec::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut tested, mut worst) = (0, 0.0f64);
    while tested < 200 {
        let p = rng.gen_range(0..g.node_count());
        let reach = g.reach(p, TimeSense::Future).unwrap();
        let q = rng.gen_range(0..g.node_count());
        if q == p || !reach.contains(q) {
            continue;
        }
        let est = g.shortest_null_path(p, q).unwrap().estimate;
        worst = worst.max((est - (g.tau(q) - g.tau(p))).abs());
        tested += 1;
    }
    outcome(
        worst <= 1e-12,
        format!("{tested} causal pairs, max |estimate - dtau| {worst:.3e}"),
    )
}

fn ball_cylinder() -> Outcome {
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
    let pts = ball_boundary_sample(&g, &[0.0, 0.0], 1.0, 16).unwrap();
    let (mut top, mut side, mut worst) = (0, 0, 0.0f64);
    for b in &pts {
        let (ct, cx) = (b.direction[0].abs(), b.direction[1].abs());
        if ct >= cx - 1e-12 {
            worst = worst.max((b.point[0].abs() - 1.0).abs());
            top += 1;
        }
        if cx >= ct - 1e-12 {
            worst = worst.max((b.point[1].abs() - 1.0).abs());
            side += 1;
        }
    }
    outcome(
        worst <= 2.0 * h,
        format!(
            "{top} causal and {side} spacelike directions, max deviation {worst:.4} (limit {})",
            2.0 * h
        ),
    )
}

fn optical_function() -> Outcome {
    let m = Spacetime::minkowski(4).unwrap();
    let chart =
        NullChart::build(&m, &[0.0; 4], TimeSense::Future, ChartOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut w_err, mut g_err) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let r = rng.gen_range(0.05..0.4);
        let dir: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
        let omega = rng.gen_range(-0.15..0.15);
        let mut q = vec![omega + r];
        q.extend(dir.iter().map(|c| r * c / n));
        let v = chart.inverse(&q, 1e-12).unwrap();
        w_err = w_err.max((v.omega - (q[0] - r)).abs());
        let gn = chart.grad_norm_omega(&q).unwrap();
        g_err = g_err.max((gn.norm - 2f64.sqrt()).abs());
    }
    let m3 = Spacetime::minkowski(3).unwrap();
    let chart3 =
        NullChart::build(&m3, &[0.0; 3], TimeSense::Future, ChartOptions::default()).unwrap();
    let lip = chart3
        .lipschitz_estimate(LipschitzOptions::default())
        .unwrap();
    outcome(
        w_err <= 1e-6 && g_err <= 1e-3 && lip.sup_ratio < 2.0,
        format!(
            "3+1: max omega error {w_err:.2e}, max |grad - sqrt2| {g_err:.2e}; 2+1: Lipschitz {:.4} over {} pairs",
            lip.sup_ratio, lip.pairs_tested
        ),
    )
}

fn curve_identities() -> Outcome {
    let mut tele = 0.0f64;
    let mut rect = 0.0f64;
    let mut walks = 0;
    for st in [
        Spacetime::minkowski(2).unwrap(),
        Spacetime::upper_half_minkowski(2).unwrap(),
    ] {
        let tau = coordinate_time(&st);
        let g = CausalGrid::build(
            &st,
            &tau,
            &BoxRegion::slab(2, (0.5, 1.5), (-0.5, 0.5)),
            0.05,
            StencilSpec::default(),
        )
        .unwrap();
        let oracle = GridOracle::new(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..10 {
            let c = random_grid_walk(&g, rng.gen_range(0..g.node_count()), 20, k).unwrap();
            let s = zigzag_decompose(&c, &tau);
            let dt = tau.eval(c.end()) - tau.eval(c.start());
            tele = tele.max((s.future_len - s.past_len - dt).abs());
            let rl = rectifiable_length(c.vertices(), &oracle, 6).unwrap();
            rect = rect.max((rl - null_length(&c, &tau)).abs());
            walks += 1;
        }
    }
    outcome(
        tele <= 1e-12 && rect <= 1e-9,
        format!(
            "{walks} walks, telescoping error {tele:.2e}, |rectifiable - null length| {rect:.2e}"
        ),
    )
}

fn conformal_invariance() -> Outcome {
    let m = Spacetime::minkowski(3).unwrap();
    let m4 = Spacetime::conformal(m.clone(), ConformalFactor::Constant(2.0)).unwrap();
    let tau = coordinate_time(&m);
    let region = BoxRegion::slab(3, (0.0, 1.0), (-0.5, 0.5));
    let a = CausalGrid::build(&m, &tau, &region, 0.1, StencilSpec::default()).unwrap();
    let b = CausalGrid::build(&m4, &tau, &region, 0.1, StencilSpec::default()).unwrap();
    let ea: Vec<_> = a
        .edges()
        .map(|e| (e.from, e.to, e.weight.to_bits()))
        .collect();
    let eb: Vec<_> = b
        .edges()
        .map(|e| (e.from, e.to, e.weight.to_bits()))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut same_est = true;
    for _ in 0..50 {
        let (p, q) = (
            rng.gen_range(0..a.node_count()),
            rng.gen_range(0..a.node_count()),
        );
        let x = a.shortest_null_path(p, q).unwrap().estimate;
        let y = b.shortest_null_path(p, q).unwrap().estimate;
        same_est &= x.to_bits() == y.to_bits();
    }
    outcome(
        ea == eb && same_est,
        format!(
            "{} edges, edge sets equal {}, 50 estimates equal {}",
            ea.len(),
            ea == eb,
            same_est
        ),
    )
}

fn rigidity() -> Outcome {
    let m = Spacetime::minkowski(4).unwrap();
    let region = BoxRegion::new(vec![0.0, -0.5, -0.5, -0.5], vec![1.0, 0.5, 0.5, 1.5]);
    let vol = region.volume();
    let two = coarea_volume_compare(&m, &|_| 2.0, &region, 0.1, 1e-3).unwrap();
    let one = coarea_volume_compare(&m, &|_| 1.0, &region, 0.1, 1e-3).unwrap();
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    let vols_ok = rel(two.vol_n, 8.0 * vol) <= 1e-9
        && rel(two.vol_nm1, 4.0 * vol) <= 1e-9
        && one.vol_n == one.vol_nm1;
    let r = rigidity_rehearsal(
        3,
        2.0,
        &BoxRegion::slab(3, (0.5, 1.5), (-0.5, 0.5)),
        0.1,
        200,
        9,
    )
    .unwrap();
    let rehearsal_ok = r.coordinate_times.passes
        && !r.cosmological_times.passes
        && (r.factor.phi - 2.0).abs() <= 1e-9
        && r.volumes.verdict == ConformalVerdict::ConformalNotIsometric;
    outcome(
        vols_ok && rehearsal_ok,
        format!(
            "phi=2: ({:.9}, {:.9}) / volume {vol}; phi=1 equal {}; rehearsal coordinate dev {:.1e}, cosmological tau dev {:.3}",
            two.vol_n / vol,
            two.vol_nm1 / vol,
            one.vol_n == one.vol_nm1,
            r.coordinate_times.d_hat_dev.max(r.coordinate_times.tau_dev),
            r.cosmological_times.tau_dev
        ),
    )
}

fn anti_lipschitz() -> Outcome {
    let m = Spacetime::minkowski(2).unwrap();
    let h = 0.01;
    let t = coordinate_time(&m);
    let g = CausalGrid::build(
        &m,
        &t,
        &BoxRegion::slab(2, (0.0, 0.5), (-0.5, 0.5)),
        h,
        StencilSpec::default(),
    )
    .unwrap();
    let lin = check_anti_lipschitz(&g, &t, g.region(), AntiLipschitzOptions::default()).unwrap();
    let c = cubed_time(&m);
    let g = CausalGrid::build(
        &m,
        &c,
        &BoxRegion::slab(2, (-0.25, 0.25), (-0.25, 0.25)),
        h,
        StencilSpec::default(),
    )
    .unwrap();
    let cub = check_anti_lipschitz(&g, &c, g.region(), AntiLipschitzOptions::default()).unwrap();
    let target = 0.5f64.sqrt();
    outcome(
        lin.lambda_best >= 0.6
            && (lin.lambda_best - target).abs() <= 0.05
            && cub.lambda_best <= 0.05,
        format!(
            "lambda(t) {:.4} (target {target:.4}), lambda(t^3) {:.2e}",
            lin.lambda_best, cub.lambda_best
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("spacelike pair in Minkowski", spacelike_unit_pair),
        ("t^3 degeneracy", cubed_degeneracy),
        ("missing ray violation", missing_ray_violation),
        ("causal exactness", causal_exactness),
        ("ball cylinder", ball_cylinder),
        ("optical function", optical_function),
        ("telescoping and rectifiable length", curve_identities),
        ("conformal invariance", conformal_invariance),
        ("rigidity rehearsal", rigidity),
        ("anti-Lipschitz discrimination", anti_lipschitz),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {name}: {tag}: {}", i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
