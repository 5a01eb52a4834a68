//! Null coordinate charts built by geodesic shooting from a timelike
//! geodesic, the optical function they define, and the Riemannian metric
//! used to bound its gradient.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{CausalGrid, StencilSpec};
use crate::spacetime::{Event, MetricForm, Spacetime, TangentVector, TimeSense};

/// Threshold on `|g(γ′,γ′) − g(v,v)| / |γ′|²` along a shot geodesic.
pub const CONSTRAINT_TOL: f64 = 1e-6;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn axpy(a: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + yi).collect()
}

/// Geodesic position, velocity and parallel-transported vectors.
#[derive(Clone, Debug, PartialEq)]
struct Flow {
    x: Vec<f64>,
    u: Vec<f64>,
    carried: Vec<Vec<f64>>,
}

fn contract(gamma: &[f64], d: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..d)
        .map(|mu| {
            let mut s = 0.0;
            for al in 0..d {
                if a[al] == 0.0 {
                    continue;
                }
                let row = &gamma[(mu * d + al) * d..(mu * d + al + 1) * d];
                for be in 0..d {
                    s += row[be] * a[al] * b[be];
                }
            }
            -s
        })
        .collect()
}

fn rhs(st: &Spacetime, f: &Flow) -> Flow {
    let d = st.dim();
    let gamma = st.christoffel(&f.x);
    Flow {
        x: f.u.clone(),
        u: contract(&gamma, d, &f.u, &f.u),
        carried: f
            .carried
            .iter()
            .map(|e| contract(&gamma, d, &f.u, e))
            .collect(),
    }
}

fn add_scaled(f: &Flow, k: &Flow, a: f64) -> Flow {
    Flow {
        x: axpy(a, &k.x, &f.x),
        u: axpy(a, &k.u, &f.u),
        carried: f
            .carried
            .iter()
            .zip(&k.carried)
            .map(|(e, ke)| axpy(a, ke, e))
            .collect(),
    }
}

/// Fixed-step RK4 over parameter length `s` in `steps` steps. With `monitor`
/// the velocity's norm is checked against its initial value after every step.
fn integrate(st: &Spacetime, start: Flow, s: f64, steps: usize, monitor: bool) -> Result<Flow> {
    if st.is_flat() {
        let x = axpy(s, &start.u, &start.x);
        if !st.in_domain(&x) {
            // locate the exit on the straight line
            let mut lo = 0.0;
            let mut hi = 1.0;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if st.in_domain(&axpy(mid * s, &start.u, &start.x)) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Err(Error::LeftDomain { s_exit: hi * s });
        }
        return Ok(Flow { x, ..start });
    }
    let n = steps.max(1);
    let ds = s / n as f64;
    let g0 = st.metric_at(&start.x).norm_sq(&start.u);
    let mut f = start;
    for i in 0..n {
        let k1 = rhs(st, &f);
        let k2 = rhs(st, &add_scaled(&f, &k1, 0.5 * ds));
        let k3 = rhs(st, &add_scaled(&f, &k2, 0.5 * ds));
        let k4 = rhs(st, &add_scaled(&f, &k3, ds));
        let mut next = f.clone();
        for (k, w) in [(&k1, 1.0), (&k2, 2.0), (&k3, 2.0), (&k4, 1.0)] {
            next = add_scaled(&next, k, w * ds / 6.0);
        }
        f = next;
        if !st.in_domain(&f.x) {
            return Err(Error::LeftDomain {
                s_exit: ds * (i + 1) as f64,
            });
        }
        if monitor {
            let drift = (st.metric_at(&f.x).norm_sq(&f.u) - g0).abs()
                / f.u.iter().map(|c| c * c).sum::<f64>();
            if drift > CONSTRAINT_TOL {
                return Err(Error::StepTooLarge { drift });
            }
        }
    }
    Ok(f)
}

/// Follows the geodesic with initial velocity `v` for parameter length `s`.
pub fn geodesic_shoot(st: &Spacetime, v: &TangentVector, s: f64, step: f64) -> Result<Event> {
    if !(step > 0.0) {
        return Err(Error::InvalidParam("step must be positive".into()));
    }
    let p = &v.base.coords;
    if !st.in_domain(p) {
        return Err(Error::OutOfDomain(p.clone()));
    }
    let steps = (s.abs() / step).ceil() as usize;
    let f = integrate(
        st,
        Flow {
            x: p.clone(),
            u: v.components.clone(),
            carried: Vec::new(),
        },
        s,
        steps,
        true,
    )?;
    Ok(Event::new(f.x))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChartOptions {
    /// Half-width of the chart-time range.
    pub eps: f64,
    /// RK4 steps used to transport the frame along the axis geodesic.
    pub transport_steps: usize,
    /// Step in the affine parameter for the null shots.
    pub shoot_step: f64,
    /// First radius tried when probing the domain radius.
    pub max_radius: f64,
}

impl Default for ChartOptions {
    fn default() -> Self {
        ChartOptions {
            eps: 0.2,
            transport_steps: 64,
            shoot_step: 1.0 / 32.0,
            max_radius: 1.0,
        }
    }
}

/// `Φ(t, x) = exp_{η(t)}(Σ xᵢ êᵢ + |x| η′(t))` around a timelike geodesic `η`.
#[derive(Clone, Debug)]
pub struct NullChart {
    st: Spacetime,
    p: Vec<f64>,
    sense: TimeSense,
    u0: Vec<f64>,
    frame: Vec<Vec<f64>>,
    opts: ChartOptions,
    domain_radius: f64,
    frame_drift: f64,
}

/// Axis state at chart time `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct AxisState {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub frame: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OpticalValue {
    pub omega: f64,
    pub lambda: f64,
    /// Unit vector `x / |x|`; `None` on the axis.
    pub direction: Option<Vec<f64>>,
    pub residual: f64,
}

impl OpticalValue {
    pub fn chart_coords(&self) -> (f64, Vec<f64>) {
        let x = match &self.direction {
            Some(d) => d.iter().map(|c| c * self.lambda).collect(),
            None => Vec::new(),
        };
        (self.omega, x)
    }
}

/// `g`-orthonormal frame at `p` with the unit timelike vector along `∂₀`.
fn orthonormal_frame(g: &MetricForm) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = g.dim();
    let mut e0 = vec![0.0; d];
    e0[0] = 1.0 / (-g.get(0, 0)).sqrt();
    let mut frame: Vec<Vec<f64>> = Vec::with_capacity(d - 1);
    for i in 1..d {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        let c0 = g.apply(&v, &e0);
        v = axpy(c0, &e0, &v);
        for e in &frame {
            let c = g.apply(&v, e);
            v = axpy(-c, e, &v);
        }
        let n = g.norm_sq(&v).sqrt();
        v.iter_mut().for_each(|c| *c /= n);
        frame.push(v);
    }
    (e0, frame)
}

impl NullChart {
    /// Chart about `p` with future (or past) directed axis.
    pub fn build(st: &Spacetime, p: &[f64], sense: TimeSense, opts: ChartOptions) -> Result<Self> {
        if p.len() != st.dim() {
            return Err(Error::DimensionMismatch {
                expected: st.dim(),
                got: p.len(),
            });
        }
        if !st.in_domain(p) {
            return Err(Error::OutOfDomain(p.to_vec()));
        }
        if st.dim() < 2 || !(opts.eps > 0.0) || opts.transport_steps == 0 {
            return Err(Error::InvalidParam("chart needs dim >= 2, eps > 0".into()));
        }
        let (e0, frame) = orthonormal_frame(&st.metric_at(p));
        let u0 = match sense {
            TimeSense::Future => e0,
            TimeSense::Past => e0.iter().map(|c| -c).collect(),
            TimeSense::None => {
                return Err(Error::InvalidParam(
                    "chart sense must be Future or Past".into(),
                ))
            }
        };
        let mut chart = NullChart {
            st: st.clone(),
            p: p.to_vec(),
            sense,
            u0,
            frame,
            opts,
            domain_radius: 0.0,
            frame_drift: 0.0,
        };
        let mut drift: f64 = 0.0;
        for k in -4i32..=4 {
            let a = chart.axis(opts.eps * k as f64 / 4.0)?;
            drift = drift.max(chart.frame_defect(&a));
        }
        if drift > 1e-6 {
            return Err(Error::StepTooLarge { drift });
        }
        chart.frame_drift = drift;
        chart.domain_radius = chart.probe_radius()?;
        Ok(chart)
    }

    fn frame_defect(&self, a: &AxisState) -> f64 {
        let g = self.st.metric_at(&a.position);
        let mut vecs = vec![a.velocity.clone()];
        vecs.extend(a.frame.iter().cloned());
        let mut worst: f64 = 0.0;
        for i in 0..vecs.len() {
            for j in i..vecs.len() {
                let target = if i != j {
                    0.0
                } else if i == 0 {
                    -1.0
                } else {
                    1.0
                };
                worst = worst.max((g.apply(&vecs[i], &vecs[j]) - target).abs());
            }
        }
        worst
    }

    fn probe_radius(&self) -> Result<f64> {
        let n = self.st.dim() - 1;
        let mut r = self.opts.max_radius;
        for _ in 0..8 {
            let mut ok = true;
            'probe: for &t in &[-0.5 * self.opts.eps, 0.0, 0.5 * self.opts.eps] {
                for k in 0..=n {
                    let mut x = vec![0.0; n];
                    if k < n {
                        x[k] = r;
                    } else {
                        x.iter_mut().for_each(|c| *c = -r / (n as f64).sqrt());
                    }
                    let q = match self.forward_raw(t, &x) {
                        Ok(q) => q,
                        Err(_) => {
                            ok = false;
                            break 'probe;
                        }
                    };
                    let seed = self.linear_seed(&q);
                    match self.newton(&q, seed, 1e-12) {
                        Some((z, _))
                            if (z[0] - t).abs() < 1e-8
                                && z[1..].iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-8) => {}
                        _ => {
                            ok = false;
                            break 'probe;
                        }
                    }
                }
            }
            if ok {
                return Ok(r);
            }
            r *= 0.5;
        }
        Err(Error::NoConvergence { residual: f64::NAN })
    }

    pub fn spacetime(&self) -> &Spacetime {
        &self.st
    }

    pub fn base(&self) -> &[f64] {
        &self.p
    }

    pub fn sense(&self) -> TimeSense {
        self.sense
    }

    pub fn eps(&self) -> f64 {
        self.opts.eps
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    /// Largest deviation of the transported frame from orthonormality seen at construction.
    pub fn frame_drift(&self) -> f64 {
        self.frame_drift
    }

    /// `η(t)`, `η′(t)` and the transported spatial frame.
    pub fn axis(&self, t: f64) -> Result<AxisState> {
        let f = integrate(
            &self.st,
            Flow {
                x: self.p.clone(),
                u: self.u0.clone(),
                carried: self.frame.clone(),
            },
            t,
            self.opts.transport_steps,
            false,
        )?;
        Ok(AxisState {
            position: f.x,
            velocity: f.u,
            frame: f.carried,
        })
    }

    fn forward_raw(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        let a = self.axis(t)?;
        let r = norm(x);
        let mut v: Vec<f64> = a.velocity.iter().map(|c| c * r).collect();
        for (xi, e) in x.iter().zip(&a.frame) {
            v = axpy(*xi, e, &v);
        }
        if r == 0.0 {
            return Ok(a.position);
        }
        let steps = (1.0 / self.opts.shoot_step).ceil() as usize;
        let f = integrate(
            &self.st,
            Flow {
                x: a.position,
                u: v,
                carried: Vec::new(),
            },
            1.0,
            steps,
            true,
        )?;
        Ok(f.x)
    }

    /// `Φ(t, x)`.
    pub fn forward(&self, t: f64, x: &[f64]) -> Result<Event> {
        if x.len() + 1 != self.st.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.st.dim() - 1,
                got: x.len(),
            });
        }
        if t.abs() > self.opts.eps * (1.0 + 1e-12) {
            return Err(Error::InvalidParam(format!(
                "chart time {t} outside ±{}",
                self.opts.eps
            )));
        }
        self.forward_raw(t, x).map(Event::new)
    }

    /// Inverse of the flat approximation `Φ ≈ p + (t + |x|)·u₀ + Σ xᵢ êᵢ`.
    fn linear_seed(&self, q: &[f64]) -> Vec<f64> {
        let g = self.st.metric_at(&self.p);
        let dq: Vec<f64> = q.iter().zip(&self.p).map(|(a, b)| a - b).collect();
        let cu = -g.apply(&dq, &self.u0);
        let c: Vec<f64> = self.frame.iter().map(|e| g.apply(&dq, e)).collect();
        let mut z = vec![cu - norm(&c)];
        z.extend(c);
        z
    }

    fn residual(&self, z: &[f64], q: &[f64]) -> f64 {
        match self.forward_raw(z[0], &z[1..]) {
            Ok(y) => norm(&axpy(-1.0, q, &y)),
            Err(_) => f64::INFINITY,
        }
    }

    /// Damped Newton on `Φ(z) = q` with a central-difference Jacobian.
    fn newton(&self, q: &[f64], mut z: Vec<f64>, tol: f64) -> Option<(Vec<f64>, f64)> {
        let d = z.len();
        let mut y = self.forward_raw(z[0], &z[1..]).ok()?;
        let mut r = norm(&axpy(-1.0, q, &y));
        for _ in 0..60 {
            if r <= tol {
                break;
            }
            let mut jac = DMatrix::zeros(d, d);
            for k in 0..d {
                let hk = 1e-7 * z[k].abs().max(1.0);
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[k] += hk;
                zm[k] -= hk;
                let yp = self.forward_raw(zp[0], &zp[1..]).ok()?;
                let ym = self.forward_raw(zm[0], &zm[1..]).ok()?;
                for i in 0..d {
                    jac[(i, k)] = (yp[i] - ym[i]) / (2.0 * hk);
                }
            }
            let rhs = DVector::from_iterator(d, q.iter().zip(&y).map(|(a, b)| a - b));
            let dz = jac.lu().solve(&rhs)?;
            let mut step = 1.0;
            let mut improved = false;
            for _ in 0..40 {
                let zn: Vec<f64> = z.iter().zip(dz.iter()).map(|(a, b)| a + step * b).collect();
                if let Ok(yn) = self.forward_raw(zn[0], &zn[1..]) {
                    let rn = norm(&axpy(-1.0, q, &yn));
                    if rn < r {
                        z = zn;
                        y = yn;
                        r = rn;
                        improved = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if !improved {
                break;
            }
        }
        Some((z, r))
    }

    /// Coarse seeds over `(t, λ, direction)`, best residual first.
    fn coarse_seeds(&self, q: &[f64]) -> Vec<Vec<f64>> {
        const RES: usize = 8;
        let n = self.st.dim() - 1;
        let eps = self.opts.eps;
        let rad = self.domain_radius.max(self.opts.max_radius);
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        match n {
            1 => dirs.extend([vec![1.0], vec![-1.0]]),
            _ => {
                for a in 0..RES {
                    let phi = std::f64::consts::TAU * a as f64 / RES as f64;
                    for b in 0..RES {
                        let th = std::f64::consts::PI * (b as f64 + 0.5) / RES as f64;
                        let mut v = vec![0.0; n];
                        v[0] = th.sin() * phi.cos();
                        v[1] = th.sin() * phi.sin();
                        if n >= 3 {
                            v[2] = th.cos();
                        }
                        let l = norm(&v);
                        dirs.push(v.iter().map(|c| c / l).collect());
                    }
                }
            }
        }
        let mut seeds: Vec<(f64, Vec<f64>)> = Vec::new();
        for i in 0..RES {
            let t = -eps + 2.0 * eps * (i as f64 + 0.5) / RES as f64;
            for j in 0..RES {
                let lam = rad * (j as f64 + 0.5) / RES as f64;
                for d in &dirs {
                    let mut z = vec![t];
                    z.extend(d.iter().map(|c| c * lam));
                    let r = self.residual(&z, q);
                    if r.is_finite() {
                        seeds.push((r, z));
                    }
                }
            }
        }
        seeds.sort_by(|a, b| a.0.total_cmp(&b.0));
        seeds.into_iter().map(|s| s.1).collect()
    }

    /// Solves `g(q − η(t), η′(t)) = 0` for `t` near `t0`.
    fn axis_projection(&self, q: &[f64], t0: f64) -> f64 {
        let f = |t: f64| -> f64 {
            match self.axis(t) {
                Ok(a) => {
                    let g = self.st.metric_at(&a.position);
                    g.apply(&axpy(-1.0, &a.position, q), &a.velocity)
                }
                Err(_) => f64::NAN,
            }
        };
        let mut t = t0;
        for _ in 0..20 {
            let ft = f(t);
            let dt = 1e-6;
            let df = (f(t + dt) - f(t - dt)) / (2.0 * dt);
            if !ft.is_finite() || !df.is_finite() || df == 0.0 {
                break;
            }
            let step = ft / df;
            t -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        t
    }

    fn solve(&self, q: &[f64], seed: Option<Vec<f64>>, tol: f64) -> Result<OpticalValue> {
        if q.len() != self.st.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.st.dim(),
                got: q.len(),
            });
        }
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut starts = Vec::new();
        if let Some(s) = seed {
            starts.push(s);
        }
        starts.push(self.linear_seed(q));
        for s in starts {
            if let Some((z, r)) = self.newton(q, s, tol) {
                if best.as_ref().is_none_or(|b| r < b.1) {
                    best = Some((z, r));
                }
            }
            if best.as_ref().is_some_and(|b| b.1 <= tol) {
                break;
            }
        }
        if !best.as_ref().is_some_and(|b| b.1 <= tol) {
            for s in self.coarse_seeds(q).into_iter().take(8) {
                if let Some((z, r)) = self.newton(q, s, tol) {
                    if best.as_ref().is_none_or(|b| r < b.1) {
                        best = Some((z, r));
                    }
                }
                if best.as_ref().is_some_and(|b| b.1 <= tol) {
                    break;
                }
            }
        }
        let (z, r) = best.ok_or(Error::NoConvergence {
            residual: f64::INFINITY,
        })?;
        if r > tol {
            return Err(Error::NoConvergence { residual: r });
        }
        let lambda = norm(&z[1..]);
        if lambda <= tol {
            let omega = self.axis_projection(q, z[0]);
            return Ok(OpticalValue {
                omega,
                lambda: 0.0,
                direction: None,
                residual: r,
            });
        }
        Ok(OpticalValue {
            omega: z[0],
            lambda,
            direction: Some(z[1..].iter().map(|c| c / lambda).collect()),
            residual: r,
        })
    }

    /// Chart coordinates `(ω, λ, direction)` of `q`, with residual at most `tol`.
    pub fn inverse(&self, q: &[f64], tol: f64) -> Result<OpticalValue> {
        self.solve(q, None, tol)
    }

    fn omega_near(&self, q: &[f64], around: &OpticalValue) -> Result<f64> {
        let (t, x) = around.chart_coords();
        let mut z = vec![t];
        if x.is_empty() {
            z.extend(std::iter::repeat_n(0.0, self.st.dim() - 1));
        } else {
            z.extend(x);
        }
        Ok(self.solve(q, Some(z), 1e-13)?.omega)
    }

    /// `X = ∂Φ/∂t` at `q`; `η′` on the axis.
    pub fn x_field(&self, q: &[f64]) -> Result<Vec<f64>> {
        let ov = self.inverse(q, 1e-12)?;
        self.x_field_at(&ov)
    }

    fn x_field_at(&self, ov: &OpticalValue) -> Result<Vec<f64>> {
        let (t, x) = ov.chart_coords();
        if x.is_empty() {
            return Ok(self.axis(t)?.velocity);
        }
        let dt = 1e-4 * self.opts.eps;
        let a = self.forward_raw(t + dt, &x)?;
        let b = self.forward_raw(t - dt, &x)?;
        Ok(a.iter()
            .zip(&b)
            .map(|(p, m)| (p - m) / (2.0 * dt))
            .collect())
    }

    /// `g_R = (2/|g(X,X)|)·g(X,·)⊗g(X,·) + g`.
    pub fn g_r_eval(&self, q: &[f64]) -> Result<MetricForm> {
        let x = self.x_field(q)?;
        Ok(g_r_from(&self.st.metric_eval(&Event::new(q.to_vec()))?, &x))
    }

    /// `|∇ω|` measured with `g_R`, together with `√(2/|g(X,X)|)`.
    pub fn grad_norm_omega(&self, q: &[f64]) -> Result<GradNorm> {
        const STEP: f64 = 1e-5;
        let ov = self.inverse(q, 1e-13)?;
        if ov.direction.is_none() || ov.lambda < 10.0 * STEP {
            return Err(Error::OnAxisDegenerate);
        }
        let d = self.st.dim();
        let mut grad = vec![0.0; d];
        for k in 0..d {
            let mut qp = q.to_vec();
            let mut qm = q.to_vec();
            qp[k] += STEP;
            qm[k] -= STEP;
            grad[k] = (self.omega_near(&qp, &ov)? - self.omega_near(&qm, &ov)?) / (2.0 * STEP);
        }
        let g = self.st.metric_eval(&Event::new(q.to_vec()))?;
        let x = self.x_field_at(&ov)?;
        let gr = g_r_from(&g, &x);
        let inv = gr.inverse().ok_or(Error::SingularJacobian)?;
        let norm = inv.apply(&grad, &grad).sqrt();
        let formula = (2.0 / g.norm_sq(&x).abs()).sqrt();
        Ok(GradNorm {
            norm,
            formula,
            below_bound: norm < 2.0,
        })
    }

    /// Checks that `ω` never decreases along sampled causal pairs and that
    /// `ω ≥ δ` samples lie in the causal future (past) of the base point.
    pub fn omega_monotonicity_check(
        &self,
        grid: &CausalGrid,
        pairs: &[(Vec<f64>, Vec<f64>)],
        delta: f64,
    ) -> Result<MonotonicityReport> {
        let base = grid.node_at(&self.p)?;
        let cone = grid.reach(base, self.sense)?;
        let mut rep = MonotonicityReport::default();
        let mut seen = HashMap::new();
        for (a, b) in pairs {
            let na = grid.node_at(a)?;
            let nb = grid.node_at(b)?;
            rep.pairs_checked += 1;
            let oa = match self.inverse(a, 1e-11) {
                Ok(v) => v.omega,
                Err(_) => continue,
            };
            let ob = match self.inverse(b, 1e-11) {
                Ok(v) => v.omega,
                Err(_) => continue,
            };
            for (n, o) in [(na, oa), (nb, ob)] {
                seen.insert(n, o);
            }
            // b is later than a in the chart's sense
            let related = grid.reach(na, self.sense)?.contains(nb);
            if related {
                rep.causal_pairs += 1;
                if ob < oa - 1e-6 {
                    rep.monotone_violations += 1;
                }
            }
        }
        let mut nodes: Vec<_> = seen.into_iter().collect();
        nodes.sort_by_key(|(n, _)| *n);
        for (n, o) in nodes {
            if o >= delta {
                rep.positive_samples += 1;
                if cone.contains(n) {
                    rep.reach_confirmed += 1;
                } else {
                    rep.reach_failures += 1;
                }
            }
        }
        Ok(rep)
    }

    /// Largest observed `|ω(q) − ω(q′)| / d_{g_R}(q, q′)`, with `d_{g_R}` the
    /// shortest-path distance on a lattice of spacing `opts.h` weighted by `g_R`.
    pub fn lipschitz_estimate(&self, opts: LipschitzOptions) -> Result<LipschitzReport> {
        let d = self.st.dim();
        let r = self.domain_radius;
        let h = opts.h;
        let side = (2.0 * r / h + 1e-9).floor() as usize + 1;
        let total = side.pow(d as u32);
        if total > 4_000_000 {
            return Err(Error::GridTooLarge {
                nodes: total,
                limit: 4_000_000,
            });
        }
        let coord = |site: usize| -> Vec<f64> {
            let mut s = site;
            let mut c = vec![0.0; d];
            for k in (0..d).rev() {
                c[k] = self.p[k] - r + (s % side) as f64 * h;
                s /= side;
            }
            c
        };
        let mut node_of_site = vec![u32::MAX; total];
        let mut sites = Vec::new();
        let mut omega = Vec::new();
        let mut metric = Vec::new();
        for site in 0..total {
            let q = coord(site);
            if !self.st.in_domain(&q) {
                continue;
            }
            let ov = match self.inverse(&q, 1e-11) {
                Ok(v) => v,
                Err(_) => continue,
            };
            if ov.omega.abs() >= self.opts.eps || ov.lambda > r {
                continue;
            }
            let x = self.x_field_at(&ov)?;
            node_of_site[site] = sites.len() as u32;
            sites.push(site);
            omega.push(ov.omega);
            metric.push(g_r_from(&self.st.metric_at(&q), &x));
        }
        let n = sites.len();
        if n < 2 {
            return Err(Error::EmptyGrid);
        }
        let offsets = StencilSpec::with_radius(2).offsets(d);
        let neighbours = |u: usize| -> Vec<(usize, f64)> {
            let mut idx = vec![0i64; d];
            let mut s = sites[u];
            for k in (0..d).rev() {
                idx[k] = (s % side) as i64;
                s /= side;
            }
            let mut out = Vec::new();
            'o: for off in &offsets {
                let mut site = 0usize;
                for k in 0..d {
                    let j = idx[k] + off[k] as i64;
                    if j < 0 || j >= side as i64 {
                        continue 'o;
                    }
                    site = site * side + j as usize;
                }
                let v = node_of_site[site];
                if v == u32::MAX {
                    continue;
                }
                let v = v as usize;
                let delta: Vec<f64> = off.iter().map(|&o| o as f64 * h).collect();
                let w = 0.5 * (metric[u].norm_sq(&delta).sqrt() + metric[v].norm_sq(&delta).sqrt());
                out.push((v, w));
            }
            out
        };
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let coords: Vec<Vec<f64>> = sites.iter().map(|&s| coord(s)).collect();
        let mut by_source: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut index = HashMap::new();
        let mut attempts = 0;
        let mut drawn = 0;
        while drawn < opts.n_pairs && attempts < 100 * opts.n_pairs {
            attempts += 1;
            let a = rng.gen_range(0..n);
            let b = rng.gen_range(0..n);
            if a == b || norm(&axpy(-1.0, &coords[a], &coords[b])) > opts.max_pair_dist {
                continue;
            }
            drawn += 1;
            let slot = *index.entry(a).or_insert_with(|| {
                by_source.push((a, Vec::new()));
                by_source.len() - 1
            });
            by_source[slot].1.push(b);
        }
        let mut sup: f64 = 0.0;
        let mut argmax = None;
        let mut tested = 0;
        for (src, targets) in &by_source {
            let dist = dijkstra(n, *src, targets, &neighbours);
            for &t in targets {
                if !dist[t].is_finite() || dist[t] == 0.0 {
                    continue;
                }
                tested += 1;
                let ratio = (omega[t] - omega[*src]).abs() / dist[t];
                if ratio > sup {
                    sup = ratio;
                    argmax = Some((coords[*src].clone(), coords[t].clone()));
                }
            }
        }
        Ok(LipschitzReport {
            sup_ratio: sup,
            pairs_tested: tested,
            nodes: n,
            argmax,
        })
    }
}

/// Stops once every node in `targets` is settled.
fn dijkstra(
    n: usize,
    src: usize,
    targets: &[usize],
    neighbours: &dyn Fn(usize) -> Vec<(usize, f64)>,
) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; n];
    let mut pending = vec![false; n];
    let mut left = 0;
    for &t in targets {
        if !pending[t] {
            pending[t] = true;
            left += 1;
        }
    }
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((0.0f64.to_bits(), src)));
    while let Some(Reverse((db, u))) = heap.pop() {
        let du = f64::from_bits(db);
        if du > dist[u] {
            continue;
        }
        if pending[u] {
            pending[u] = false;
            left -= 1;
            if left == 0 {
                break;
            }
        }
        for (v, w) in neighbours(u) {
            let nd = du + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((nd.to_bits(), v)));
            }
        }
    }
    dist
}

/// `g_R` built from `g` and a timelike vector `x`.
pub fn g_r_from(g: &MetricForm, x: &[f64]) -> MetricForm {
    let gx = g.lower(x);
    let c = 2.0 / g.norm_sq(x).abs();
    let d = g.dim();
    let mut out = *g;
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, g.get(i, j) + c * gx[i] * gx[j]);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GradNorm {
    pub norm: f64,
    /// `√(2/|g(X,X)|)`
    pub formula: f64,
    pub below_bound: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MonotonicityReport {
    pub pairs_checked: usize,
    pub causal_pairs: usize,
    pub monotone_violations: usize,
    pub positive_samples: usize,
    pub reach_confirmed: usize,
    pub reach_failures: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LipschitzOptions {
    pub h: f64,
    pub n_pairs: usize,
    /// Pairs farther apart than this (coordinate distance) are not drawn.
    pub max_pair_dist: f64,
    pub seed: u64,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        LipschitzOptions {
            h: 0.05,
            n_pairs: 1000,
            max_pair_dist: 0.3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub sup_ratio: f64,
    pub pairs_tested: usize,
    pub nodes: usize,
    pub argmax: Option<(Vec<f64>, Vec<f64>)>,
}
