use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nulldist_core::curve::{ball_boundary_sample, encodes_causality_on_grid};
use nulldist_core::isometry::{
    check_preserving, coarea_volume_compare, conformal_factor, ConformalVerdict, NodeTable,
    PointMap,
};
use nulldist_core::optical::{ChartOptions, NullChart};
use nulldist_core::scene::{Scene, SceneError};
use nulldist_core::time::{
    check_anti_lipschitz, check_regularity, cosmological_time_numeric, AntiLipschitzOptions,
    PairFilter,
};
use nulldist_core::{CausalGrid, Error, Spacetime, TimeFunction, TimeSense};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

mod output;
mod suite;

use output::{coord_headers, csv_writer, emit_json, fmt_num};

#[derive(Parser)]
#[command(
    name = "nulldist",
    version,
    about = "Null distance and causal structure on discretized spacetimes",
    after_help = suite::PRESET_HELP
)]
struct Cli {
    /// Seed for every sampled quantity; echoed in the output.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct GridArgs {
    /// Scene JSON file.
    scene: PathBuf,
    /// Override the scene's lattice spacing.
    #[arg(long)]
    h: Option<f64>,
    /// Override the scene's stencil radius.
    #[arg(long)]
    stencil_radius: Option<u32>,
}

#[derive(Args)]
struct PairArgs {
    /// Comma-separated coordinates of the first event.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<Point>,
    #[arg(long, allow_hyphen_values = true)]
    q: Option<Point>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Sense {
    Future,
    Past,
}

#[derive(Subcommand)]
enum Cmd {
    /// Null-distance estimate between two events.
    Nulldist {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        pair: PairArgs,
        /// Write the witness path as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Whether q lies in the grid's causal future of p.
    Causal {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        pair: PairArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Per-node cosmological time against the closed form where known.
    CosmoTime {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Anti-Lipschitz constant and regularity of the scene's time function.
    CheckAntilip {
        #[command(flatten)]
        grid: GridArgs,
        /// Only compare events at the same spatial point.
        #[arg(long)]
        same_point: bool,
        #[arg(long, default_value_t = 64)]
        max_sources: usize,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Optical function of a null chart at query points.
    Optical {
        /// Scene JSON file.
        scene: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        center: Option<Point>,
        #[arg(long, value_enum)]
        sense: Option<Sense>,
        /// JSON list of query points.
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Boundary of a null-distance ball along rays in the (t, x1) plane.
    Ball {
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, allow_hyphen_values = true)]
        center: Option<Point>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        dirs: Option<usize>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Causality-encoding verdicts for a list of pairs.
    EncodeTest {
        #[command(flatten)]
        grid: GridArgs,
        /// JSON list of [p, q] pairs; defaults to the scene's pairs.
        #[arg(long)]
        pairs: Option<PathBuf>,
        #[arg(long)]
        tol_eq: Option<f64>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Compare two scenes under a point map.
    Isometry {
        source: PathBuf,
        target: PathBuf,
        /// identity, translate:a,b,..., dilate:c or rotate:i,j,angle
        #[arg(long, default_value = "identity", allow_hyphen_values = true)]
        map: String,
        /// Node table CSV (source coords then target coords); overrides --map.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        pairs: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the built-in presets and print a pass/fail table.
    #[command(after_help = suite::PRESET_HELP)]
    PaperSuite {
        #[arg(long, default_value_t = 0.05)]
        h: f64,
        /// Run a single preset.
        #[arg(long)]
        only: Option<String>,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

/// Errors that map to exit code 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

#[derive(Clone, Debug)]
struct Point(Vec<f64>);

impl std::str::FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        parse_point(s).map(Point)
    }
}

fn parse_point(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|c| c.trim().parse::<f64>().map_err(|e| format!("`{c}`: {e}")))
        .collect()
}

fn load_scene(path: &Path) -> Result<Scene> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scene::parse(&text)
        .map_err(|e: SceneError| InputError(format!("{}: {e}", path.display())).into())
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| {
        InputError(format!(
            "{}: line {}, column {}: {e}",
            path.display(),
            e.line(),
            e.column()
        ))
        .into()
    })
}

fn build(args: &GridArgs) -> Result<(Scene, Spacetime, TimeFunction, CausalGrid)> {
    let scene = load_scene(&args.scene)?;
    let (st, tau, grid) = scene.build_grid(args.h, args.stencil_radius)?;
    Ok((scene, st, tau, grid))
}

fn pairs_from(scene: &Scene, pair: &PairArgs) -> Result<(Vec<[Vec<f64>; 2]>, bool)> {
    match (&pair.p, &pair.q) {
        (Some(p), Some(q)) => Ok((vec![[p.0.clone(), q.0.clone()]], true)),
        (None, None) if !scene.queries.pairs.is_empty() => Ok((scene.queries.pairs.clone(), false)),
        (None, None) => {
            Err(InputError("no --p/--q given and the scene has no pairs".into()).into())
        }
        _ => Err(InputError("--p and --q go together".into()).into()),
    }
}

fn single_or_list(items: Vec<Value>, single: bool, seed: Option<u64>) -> Value {
    let mut v = if single {
        items.into_iter().next().unwrap_or(Value::Null)
    } else {
        json!({ "pairs": items })
    };
    if let (Some(s), Value::Object(o)) = (seed, &mut v) {
        o.insert("seed".into(), json!(s));
    }
    v
}

fn cmd_nulldist(
    grid: &GridArgs,
    pair: &PairArgs,
    csv: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let (scene, _, _, g) = build(grid)?;
    let (pairs, single) = pairs_from(&scene, pair)?;
    let mut items = Vec::new();
    let mut paths = Vec::new();
    for [p, q] in &pairs {
        let start = Instant::now();
        let est = g.shortest_null_path_events(p, q)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        items.push(json!({
            "p": p,
            "q": q,
            "estimate": est.estimate,
            "lower_bound": est.lower_bound,
            "path_len": est.path.len().saturating_sub(1),
            "wall_ms": wall_ms,
        }));
        paths.push(est.path);
    }
    if let Some(path) = csv {
        let mut w = csv_writer(Some(path))?;
        let mut header = vec!["pair".to_string(), "step".to_string()];
        header.extend(coord_headers("", g.dim()));
        header.push("tau".into());
        w.write_record(&header)?;
        for (i, nodes) in paths.iter().enumerate() {
            for (k, &v) in nodes.iter().enumerate() {
                let mut row = vec![i.to_string(), k.to_string()];
                row.extend(g.coords(v).into_iter().map(fmt_num));
                row.push(fmt_num(g.tau(v)));
                w.write_record(&row)?;
            }
        }
        w.flush()?;
    }
    emit_json(single_or_list(items, single, None), out)
}

fn cmd_causal(grid: &GridArgs, pair: &PairArgs, out: Option<&Path>) -> Result<()> {
    let (scene, _, _, g) = build(grid)?;
    let (pairs, single) = pairs_from(&scene, pair)?;
    let mut items = Vec::new();
    for [p, q] in &pairs {
        let reach = g.reach_event(p, TimeSense::Future)?;
        let reachable = reach.contains(g.node_at(q)?);
        items.push(if single {
            json!({ "reachable": reachable })
        } else {
            json!({ "p": p, "q": q, "reachable": reachable })
        });
    }
    emit_json(single_or_list(items, single, None), out)
}

fn cmd_cosmo(grid: &GridArgs, out: Option<&Path>) -> Result<()> {
    let (_, st, _, g) = build(grid)?;
    let ct = cosmological_time_numeric(&g)?;
    let mut w = csv_writer(out)?;
    let mut header = coord_headers("", g.dim());
    header.extend(["tau_numeric", "tau_analytic", "abs_err"].map(String::from));
    w.write_record(&header)?;
    for (v, &tn) in ct.iter().enumerate() {
        let p = g.coords(v);
        let exact = TimeFunction::analytic_cosmological(&st, &p);
        let mut row: Vec<String> = p.iter().map(|&c| fmt_num(c)).collect();
        row.push(fmt_num(tn));
        row.push(exact.map_or(String::new(), fmt_num));
        row.push(exact.map_or(String::new(), |e| fmt_num((tn - e).abs())));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_antilip(
    grid: &GridArgs,
    same_point: bool,
    max_sources: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let (_, _, tau, g) = build(grid)?;
    let opts = AntiLipschitzOptions {
        max_sources,
        seed,
        filter: if same_point {
            PairFilter::SameSpatialPoint
        } else {
            PairFilter::AllCausal
        },
    };
    let rep = check_anti_lipschitz(&g, &tau, g.region(), opts)?;
    let reg = check_regularity(&g, &tau);
    emit_json(
        json!({
            "time": tau.name(),
            "lambda_best": rep.lambda_best,
            "pairs_tested": rep.pairs_tested,
            "violations": rep.violations.len(),
            "claims": tau.claims,
            "regularity": reg,
            "seed": seed,
        }),
        out,
    )
}

fn sense_of(s: Sense) -> TimeSense {
    match s {
        Sense::Future => TimeSense::Future,
        Sense::Past => TimeSense::Past,
    }
}

fn cmd_optical(
    scene_path: &Path,
    center: Option<Vec<f64>>,
    sense: Option<Sense>,
    points: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let scene = load_scene(scene_path)?;
    let st = scene.spacetime()?;
    let mut jobs: Vec<(Vec<f64>, TimeSense, Vec<Vec<f64>>)> = Vec::new();
    if let Some(c) = center {
        let pts = match points {
            Some(p) => load_json(p)?,
            None => Vec::new(),
        };
        jobs.push((c, sense_of(sense.unwrap_or(Sense::Future)), pts));
    } else {
        for c in &scene.queries.charts {
            let s = match c.sense {
                nulldist_core::scene::SenseSpec::Future => TimeSense::Future,
                nulldist_core::scene::SenseSpec::Past => TimeSense::Past,
            };
            jobs.push((c.center.clone(), s, c.points.clone()));
        }
    }
    if jobs.is_empty() {
        return Err(InputError("no --center given and the scene has no charts".into()).into());
    }
    let mut w = csv_writer(out)?;
    let mut header = vec!["chart".to_string()];
    header.extend(coord_headers("", st.dim()));
    header.extend(["omega", "lambda", "grad_norm"].map(String::from));
    w.write_record(&header)?;
    for (i, (c, s, pts)) in jobs.iter().enumerate() {
        let chart = NullChart::build(&st, c, *s, ChartOptions::default())?;
        for q in pts {
            let v = chart.inverse(q, 1e-12)?;
            let grad = match chart.grad_norm_omega(q) {
                Ok(gn) => fmt_num(gn.norm),
                Err(Error::OnAxisDegenerate) => String::new(),
                Err(e) => return Err(e.into()),
            };
            let mut row = vec![i.to_string()];
            row.extend(q.iter().map(|&x| fmt_num(x)));
            row.extend([fmt_num(v.omega), fmt_num(v.lambda), grad]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_ball(
    grid: &GridArgs,
    center: Option<Vec<f64>>,
    radius: Option<f64>,
    dirs: Option<usize>,
    out: Option<&Path>,
) -> Result<()> {
    let (scene, _, _, g) = build(grid)?;
    let balls: Vec<(Vec<f64>, f64, usize)> = match center {
        Some(c) => vec![(c, radius.unwrap_or(1.0), dirs.unwrap_or(16))],
        None => scene
            .queries
            .balls
            .iter()
            .map(|b| {
                (
                    b.center.clone(),
                    radius.unwrap_or(b.radius),
                    dirs.unwrap_or(b.n_dirs),
                )
            })
            .collect(),
    };
    if balls.is_empty() {
        return Err(InputError("no --center given and the scene has no balls".into()).into());
    }
    let mut w = csv_writer(out)?;
    let mut header = vec!["ball".to_string()];
    header.extend(coord_headers("dir_", g.dim()));
    header.extend(coord_headers("", g.dim()));
    w.write_record(&header)?;
    for (i, (c, r, n)) in balls.iter().enumerate() {
        for b in ball_boundary_sample(&g, c, *r, *n)? {
            let mut row = vec![i.to_string()];
            row.extend(b.direction.iter().chain(&b.point).map(|&x| fmt_num(x)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_encode(
    grid: &GridArgs,
    pairs: Option<&Path>,
    tol_eq: Option<f64>,
    out: Option<&Path>,
) -> Result<()> {
    let (scene, _, _, g) = build(grid)?;
    let pairs: Vec<[Vec<f64>; 2]> = match pairs {
        Some(p) => load_json(p)?,
        None => scene.queries.pairs.clone(),
    };
    let mut items = Vec::new();
    for [p, q] in &pairs {
        let r = encodes_causality_on_grid(&g, p, q, tol_eq)?;
        items.push(json!({
            "p": r.p,
            "q": r.q,
            "verdict": r.verdict,
            "reachable": r.reachable,
            "estimate": r.result.estimate,
            "lower_bound": r.result.lower_bound,
            "tol_eq": r.tol_eq,
            "properness": r.properness,
        }));
    }
    emit_json(json!({ "results": items }), out)
}

fn parse_map(spec: &str) -> Result<PointMap> {
    let (name, args) = spec.split_once(':').unwrap_or((spec, ""));
    let nums = || -> Result<Vec<f64>> {
        parse_point(args).map_err(|e| InputError(format!("map `{spec}`: {e}")).into())
    };
    Ok(match name {
        "identity" => PointMap::Identity,
        "translate" => PointMap::Translation(nums()?),
        "dilate" => match nums()?.as_slice() {
            [c] => PointMap::Dilation(*c),
            _ => bail!(InputError(format!("map `{spec}`: dilate takes one factor"))),
        },
        "rotate" => match nums()?.as_slice() {
            [i, j, a] if *i >= 1.0 && *j >= 1.0 && i != j => PointMap::SpatialRotation {
                i: *i as usize,
                j: *j as usize,
                angle: *a,
            },
            _ => bail!(InputError(format!(
                "map `{spec}`: rotate takes i,j,angle with distinct spatial axes"
            ))),
        },
        _ => bail!(InputError(format!("unknown map `{name}`"))),
    })
}

fn load_table(path: &Path, dim: usize) -> Result<PointMap> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| InputError(format!("{}: {e}", path.display())))?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|c| c.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| InputError(format!("{}: row {}: {e}", path.display(), i + 2)))?;
        if vals.len() != 2 * dim {
            bail!(InputError(format!(
                "{}: row {} has {} columns, expected {}",
                path.display(),
                i + 2,
                vals.len(),
                2 * dim
            )));
        }
        rows.push((vals[..dim].to_vec(), vals[dim..].to_vec()));
    }
    Ok(PointMap::Table(NodeTable::new(rows)?))
}

#[allow(clippy::too_many_arguments)]
fn cmd_isometry(
    source: &Path,
    target: &Path,
    map: &str,
    table: Option<&Path>,
    n_pairs: usize,
    tol: f64,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let s1 = load_scene(source)?;
    let s2 = load_scene(target)?;
    if s1.dim != s2.dim {
        bail!(InputError(format!(
            "scene dimensions differ: {} and {}",
            s1.dim, s2.dim
        )));
    }
    let map = match table {
        Some(t) => load_table(t, s1.dim)?,
        None => parse_map(map)?,
    };
    let (st1, _, g1) = s1.build_grid(None, None)?;
    let (st2, _, g2) = s2.build_grid(None, None)?;
    let pres = check_preserving(&map, &g1, &g2, n_pairs, seed, tol)?;
    let mut report = json!({
        "d_hat_dev": pres.d_hat_dev,
        "tau_dev": pres.tau_dev,
        "preserving": pres.passes,
        "pairs_tested": pres.pairs_tested,
        "phi_mean": null,
        "vol_n": null,
        "vol_nm1": null,
        "verdict": null,
        "seed": seed,
    });
    if map.is_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phis = Vec::new();
        let mut conformal = true;
        for _ in 0..64 {
            let p = g1.coords(rng.gen_range(0..g1.node_count()));
            let f = conformal_factor(&map, &st1, &st2, &p, 1e-4)?;
            conformal &= f.conformal;
            phis.push(f.phi);
        }
        let phi_mean = phis.iter().sum::<f64>() / phis.len() as f64;
        let phi =
            |p: &[f64]| conformal_factor(&map, &st1, &st2, p, 1e-4).map_or(f64::NAN, |f| f.phi);
        let vols = coarea_volume_compare(&st1, &phi, &s1.region(), g1.h(), 1e-3)?;
        let verdict = if conformal {
            vols.verdict
        } else {
            ConformalVerdict::NotConformal
        };
        let o = report.as_object_mut().unwrap();
        o.insert("phi_mean".into(), json!(phi_mean));
        o.insert("vol_n".into(), json!(vols.vol_n));
        o.insert("vol_nm1".into(), json!(vols.vol_nm1));
        o.insert("verdict".into(), json!(verdict));
        o.insert("within_hypotheses".into(), json!(vols.within_hypotheses));
    }
    emit_json(report, out)
}

fn cmd_suite(h: f64, only: Option<&str>, seed: u64, out: Option<&Path>) -> Result<bool> {
    let names: Vec<&str> = match only {
        Some(n) => vec![n],
        None => suite::PRESETS.to_vec(),
    };
    let mut results = Vec::new();
    for n in names {
        if !suite::PRESETS.contains(&n) {
            bail!(InputError(format!("unknown preset `{n}`")));
        }
        results.push(
            suite::run_preset(n, h, seed).unwrap_or_else(|e| suite::PresetResult {
                name: n.to_string(),
                pass: false,
                detail: format!("error: {e:#}"),
            }),
        );
    }
    println!("{:<18} {:<6} detail", "preset", "result");
    for r in &results {
        println!(
            "{:<18} {:<6} {}",
            r.name,
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
    }
    let all = results.iter().all(|r| r.pass);
    if let Some(path) = out {
        emit_json(
            json!({ "h": h, "seed": seed, "presets": results, "pass": all }),
            Some(path),
        )?;
    }
    Ok(all)
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let seed = cli.seed;
    match &cli.cmd {
        Cmd::Nulldist {
            grid,
            pair,
            csv,
            out,
        } => cmd_nulldist(grid, pair, csv.as_deref(), out.as_deref())?,
        Cmd::Causal { grid, pair, out } => cmd_causal(grid, pair, out.as_deref())?,
        Cmd::CosmoTime { grid, out } => cmd_cosmo(grid, out.as_deref())?,
        Cmd::CheckAntilip {
            grid,
            same_point,
            max_sources,
            out,
        } => cmd_antilip(grid, *same_point, *max_sources, seed, out.as_deref())?,
        Cmd::Optical {
            scene,
            center,
            sense,
            points,
            out,
        } => cmd_optical(
            scene,
            center.as_ref().map(|c| c.0.clone()),
            *sense,
            points.as_deref(),
            out.as_deref(),
        )?,
        Cmd::Ball {
            grid,
            center,
            radius,
            dirs,
            out,
        } => cmd_ball(
            grid,
            center.as_ref().map(|c| c.0.clone()),
            *radius,
            *dirs,
            out.as_deref(),
        )?,
        Cmd::EncodeTest {
            grid,
            pairs,
            tol_eq,
            out,
        } => cmd_encode(grid, pairs.as_deref(), *tol_eq, out.as_deref())?,
        Cmd::Isometry {
            source,
            target,
            map,
            table,
            pairs,
            tol,
            out,
        } => cmd_isometry(
            source,
            target,
            map,
            table.as_deref(),
            *pairs,
            *tol,
            seed,
            out.as_deref(),
        )?,
        Cmd::PaperSuite { h, only, out } => {
            return cmd_suite(*h, only.as_deref(), seed, out.as_deref())
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
