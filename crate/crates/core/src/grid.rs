//! Lattice discretization of a coordinate box with directed future-causal
//! edges, causal reachability and the undirected shortest-path search that
//! approximates the null distance.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use bitvec::vec::BitVec;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spacetime::{causal_character, CausalKind, Event, Spacetime, TimeSense, NULL_TOL};
use crate::time::TimeFunction;

/// Refuse lattices with more sites than this.
pub const MAX_SITES: usize = 20_000_000;

const NONE: u32 = u32::MAX;

/// Offsets considered for edges: primitive lattice vectors with max-norm at most `radius`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StencilSpec {
    pub radius: u32,
    /// Keep offsets that are null within tolerance; otherwise only strictly timelike ones.
    pub include_null_exact: bool,
}

impl Default for StencilSpec {
    fn default() -> Self {
        StencilSpec {
            radius: 2,
            include_null_exact: true,
        }
    }
}

impl StencilSpec {
    pub fn with_radius(radius: u32) -> Self {
        StencilSpec {
            radius,
            ..Default::default()
        }
    }

    /// Nonzero primitive integer offsets in `[-radius, radius]^dim`.
    pub fn offsets(&self, dim: usize) -> Vec<Vec<i32>> {
        let r = self.radius as i32;
        let side = (2 * r + 1) as usize;
        let total = side.pow(dim as u32);
        let mut out = Vec::new();
        for code in 0..total {
            let mut c = code;
            let mut off = Vec::with_capacity(dim);
            for _ in 0..dim {
                off.push((c % side) as i32 - r);
                c /= side;
            }
            off.reverse();
            let g = off.iter().fold(0u32, |g, &x| gcd(g, x.unsigned_abs()));
            if g == 1 {
                out.push(off);
            }
        }
        out
    }
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Axis-aligned coordinate box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxRegion {
    pub fn new(lo: impl Into<Vec<f64>>, hi: impl Into<Vec<f64>>) -> Self {
        BoxRegion {
            lo: lo.into(),
            hi: hi.into(),
        }
    }

    /// Box with time range `[t0, t1]` and every spatial coordinate in `[x0, x1]`.
    pub fn slab(dim: usize, t: (f64, f64), x: (f64, f64)) -> Self {
        let mut lo = vec![x.0; dim];
        let mut hi = vec![x.1; dim];
        lo[0] = t.0;
        hi[0] = t.1;
        BoxRegion { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(x, (a, b))| *x >= a - 1e-12 && *x <= b + 1e-12)
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }
}

/// Lattice of events with directed future-causal edges.
///
/// Edge weights are `|τ(v) − τ(u)|`; each edge also carries the Lorentzian
/// length of its straight segment measured with the midpoint metric.
#[derive(Clone, Debug)]
pub struct CausalGrid {
    st: Spacetime,
    tau: TimeFunction,
    region: BoxRegion,
    h: f64,
    stencil: StencilSpec,
    shape: Vec<usize>,
    node_of_site: Vec<u32>,
    site_of_node: Vec<u32>,
    tau_values: Vec<f64>,
    out_start: Vec<u32>,
    out_target: Vec<u32>,
    out_lorentz: Vec<f64>,
    in_start: Vec<u32>,
    in_source: Vec<u32>,
    length_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EdgeRef {
    pub from: usize,
    pub to: usize,
    pub weight: f64,
    pub lorentz_len: f64,
}

impl CausalGrid {
    /// Builds the grid. Nodes are lattice sites `lo + i·h` inside the domain and
    /// farther than `h/2` from every excision; edges join nodes whose
    /// displacement is future causal at the segment midpoint and whose segment
    /// clears every excision by more than `h/2`.
    pub fn build(
        st: &Spacetime,
        tau: &TimeFunction,
        region: &BoxRegion,
        h: f64,
        stencil: StencilSpec,
    ) -> Result<CausalGrid> {
        let dim = st.dim();
        if region.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: region.dim(),
            });
        }
        if !(h > 0.0) || stencil.radius == 0 {
            return Err(Error::InvalidParam(
                "h and stencil radius must be positive".into(),
            ));
        }
        let mut shape = Vec::with_capacity(dim);
        for k in 0..dim {
            let extent = region.hi[k] - region.lo[k];
            if extent < 0.0 {
                return Err(Error::EmptyGrid);
            }
            shape.push((extent / h + 1e-9).floor() as usize + 1);
        }
        let sites = shape
            .iter()
            .try_fold(1usize, |acc, &n| acc.checked_mul(n))
            .unwrap_or(usize::MAX);
        if sites > MAX_SITES {
            return Err(Error::GridTooLarge {
                nodes: sites,
                limit: MAX_SITES,
            });
        }

        let site_coords = |site: usize, out: &mut [f64]| {
            let mut s = site;
            for k in (0..dim).rev() {
                let i = s % shape[k];
                s /= shape[k];
                out[k] = region.lo[k] + i as f64 * h;
            }
        };

        let half = 0.5 * h;
        let mut node_of_site = vec![NONE; sites];
        let mut site_of_node = Vec::new();
        let mut in_time_domain = 0usize;
        let mut buf = vec![0.0; dim];
        for (site, slot) in node_of_site.iter_mut().enumerate() {
            site_coords(site, &mut buf);
            let time_ok = st.time_lower_bound().is_none_or(|t0| buf[0] > t0);
            if !time_ok {
                continue;
            }
            in_time_domain += 1;
            if st.in_domain(&buf) && st.excision_distance(&buf) > half {
                *slot = site_of_node.len() as u32;
                site_of_node.push(site as u32);
            }
        }
        if site_of_node.is_empty() {
            return Err(if in_time_domain > 0 {
                Error::ExcisionSwallowsBox
            } else {
                Error::EmptyGrid
            });
        }

        let mut tau_values = Vec::with_capacity(site_of_node.len());
        for &site in &site_of_node {
            site_coords(site as usize, &mut buf);
            tau_values.push(tau.eval(&buf));
        }

        let offsets = stencil.offsets(dim);
        let strides: Vec<i64> = {
            let mut s = vec![1i64; dim];
            for k in (0..dim - 1).rev() {
                s[k] = s[k + 1] * shape[k + 1] as i64;
            }
            s
        };
        let has_excisions = !st.excisions().is_empty();

        let edges_of = |node: usize| -> (Vec<(u32, f64)>, f64) {
            let site = site_of_node[node] as usize;
            let mut idx = vec![0i64; dim];
            let mut s = site;
            for k in (0..dim).rev() {
                idx[k] = (s % shape[k]) as i64;
                s /= shape[k];
            }
            let mut a = vec![0.0; dim];
            site_coords(site, &mut a);
            let mut mid = vec![0.0; dim];
            let mut b = vec![0.0; dim];
            let mut delta = vec![0.0; dim];
            let mut out = Vec::new();
            let mut longest: f64 = 0.0;
            'offsets: for off in &offsets {
                let mut target = 0i64;
                for k in 0..dim {
                    let j = idx[k] + off[k] as i64;
                    if j < 0 || j >= shape[k] as i64 {
                        continue 'offsets;
                    }
                    target += j * strides[k];
                }
                let tnode = node_of_site[target as usize];
                if tnode == NONE {
                    continue;
                }
                for k in 0..dim {
                    delta[k] = off[k] as f64 * h;
                    b[k] = a[k] + delta[k];
                    mid[k] = 0.5 * (a[k] + b[k]);
                }
                if let Some(t0) = st.time_lower_bound() {
                    if !(mid[0] > t0) {
                        continue;
                    }
                }
                let g = st.metric_at(&mid);
                let orient = st.orientation(&mid);
                let ch = match causal_character(&g, &orient, &delta, NULL_TOL) {
                    Ok(c) => c,
                    Err(_) => continue,
                };
                if ch.time_sense != TimeSense::Future
                    || ch.kind == CausalKind::Spacelike
                    || (!stencil.include_null_exact && ch.kind == CausalKind::Null)
                {
                    continue;
                }
                if has_excisions && st.excision_segment_distance(&a, &b) <= half {
                    continue;
                }
                let len = match ch.kind {
                    CausalKind::Null => 0.0,
                    _ => g.norm_sq(&delta).abs().sqrt(),
                };
                let norm = off.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
                longest = longest.max(norm);
                out.push((tnode, len));
            }
            (out, longest)
        };

        #[cfg(feature = "parallel")]
        let per_node: Vec<(Vec<(u32, f64)>, f64)> = (0..site_of_node.len())
            .into_par_iter()
            .map(edges_of)
            .collect();
        #[cfg(not(feature = "parallel"))]
        let per_node: Vec<(Vec<(u32, f64)>, f64)> = (0..site_of_node.len()).map(edges_of).collect();

        let n = site_of_node.len();
        let mut out_start = Vec::with_capacity(n + 1);
        let mut out_target = Vec::new();
        let mut out_lorentz = Vec::new();
        let mut in_degree = vec![0u32; n];
        let mut length_bound: f64 = 0.0;
        out_start.push(0u32);
        for (edges, longest) in &per_node {
            length_bound = length_bound.max(*longest);
            for &(t, len) in edges {
                out_target.push(t);
                out_lorentz.push(len);
                in_degree[t as usize] += 1;
            }
            out_start.push(out_target.len() as u32);
        }
        let mut in_start = Vec::with_capacity(n + 1);
        in_start.push(0u32);
        for d in &in_degree {
            in_start.push(in_start.last().unwrap() + d);
        }
        let mut fill = in_start.clone();
        let mut in_source = vec![0u32; out_target.len()];
        for u in 0..n {
            for e in out_start[u]..out_start[u + 1] {
                let v = out_target[e as usize] as usize;
                in_source[fill[v] as usize] = u as u32;
                fill[v] += 1;
            }
        }
        if length_bound == 0.0 {
            length_bound = 1.0;
        }

        Ok(CausalGrid {
            st: st.clone(),
            tau: tau.clone(),
            region: region.clone(),
            h,
            stencil,
            shape,
            node_of_site,
            site_of_node,
            tau_values,
            out_start,
            out_target,
            out_lorentz,
            in_start,
            in_source,
            length_bound,
        })
    }

    pub fn spacetime(&self) -> &Spacetime {
        &self.st
    }

    pub fn time_function(&self) -> &TimeFunction {
        &self.tau
    }

    pub fn region(&self) -> &BoxRegion {
        &self.region
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn stencil(&self) -> StencilSpec {
        self.stencil
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn node_count(&self) -> usize {
        self.site_of_node.len()
    }

    pub fn edge_count(&self) -> usize {
        self.out_target.len()
    }

    /// Largest Euclidean norm (lattice units) among offsets that produced an edge.
    pub fn length_bound(&self) -> f64 {
        self.length_bound
    }

    pub fn tau(&self, node: usize) -> f64 {
        self.tau_values[node]
    }

    pub fn tau_values(&self) -> &[f64] {
        &self.tau_values
    }

    fn site_index(&self, node: usize) -> Vec<usize> {
        let mut s = self.site_of_node[node] as usize;
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = s % self.shape[k];
            s /= self.shape[k];
        }
        idx
    }

    /// Integer lattice index of a node.
    pub fn lattice_index(&self, node: usize) -> Vec<usize> {
        self.site_index(node)
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        self.site_index(node)
            .iter()
            .enumerate()
            .map(|(k, &i)| self.region.lo[k] + i as f64 * self.h)
            .collect()
    }

    pub fn event(&self, node: usize) -> Event {
        Event::new(self.coords(node))
    }

    /// Node at the lattice index, if the site was kept.
    pub fn node_at_index(&self, idx: &[i64]) -> Option<usize> {
        let mut site = 0usize;
        for k in 0..self.dim() {
            if idx[k] < 0 || idx[k] >= self.shape[k] as i64 {
                return None;
            }
            site = site * self.shape[k] + idx[k] as usize;
        }
        match self.node_of_site[site] {
            NONE => None,
            n => Some(n as usize),
        }
    }

    fn rounded_index(&self, p: &[f64]) -> Option<(Vec<i64>, f64)> {
        if p.len() != self.dim() {
            return None;
        }
        let mut idx = Vec::with_capacity(p.len());
        let mut err: f64 = 0.0;
        for k in 0..p.len() {
            let x = (p[k] - self.region.lo[k]) / self.h;
            let r = x.round();
            err = err.max((x - r).abs());
            idx.push(r as i64);
        }
        Some((idx, err))
    }

    /// Node sitting exactly (to 1e-6·h) at `p`.
    pub fn node_at(&self, p: &[f64]) -> Result<usize> {
        match self.rounded_index(p) {
            Some((idx, err)) if err <= 1e-6 => self
                .node_at_index(&idx)
                .ok_or_else(|| Error::NodeNotInGrid(p.to_vec())),
            _ => Err(Error::NodeNotInGrid(p.to_vec())),
        }
    }

    /// Node of the nearest lattice site, if that site is in the grid.
    pub fn nearest_node(&self, p: &[f64]) -> Option<usize> {
        let (idx, _) = self.rounded_index(p)?;
        self.node_at_index(&idx)
    }

    pub fn out_edges(&self, u: usize) -> impl Iterator<Item = EdgeRef> + '_ {
        let tu = self.tau_values[u];
        (self.out_start[u]..self.out_start[u + 1]).map(move |e| {
            let v = self.out_target[e as usize] as usize;
            EdgeRef {
                from: u,
                to: v,
                weight: (self.tau_values[v] - tu).abs(),
                lorentz_len: self.out_lorentz[e as usize],
            }
        })
    }

    /// Incoming future edges `w → v` (reported with `from = w`, `to = v`).
    pub fn in_edges(&self, v: usize) -> impl Iterator<Item = EdgeRef> + '_ {
        let tv = self.tau_values[v];
        (self.in_start[v]..self.in_start[v + 1]).map(move |e| {
            let w = self.in_source[e as usize] as usize;
            EdgeRef {
                from: w,
                to: v,
                weight: (tv - self.tau_values[w]).abs(),
                lorentz_len: self.lorentz_len_of(w, v),
            }
        })
    }

    fn lorentz_len_of(&self, u: usize, v: usize) -> f64 {
        let lo = self.out_start[u] as usize;
        let hi = self.out_start[u + 1] as usize;
        self.out_target[lo..hi]
            .iter()
            .position(|&t| t as usize == v)
            .map(|i| self.out_lorentz[lo + i])
            .unwrap_or(0.0)
    }

    pub fn in_degree(&self, v: usize) -> usize {
        (self.in_start[v + 1] - self.in_start[v]) as usize
    }

    pub fn out_degree(&self, u: usize) -> usize {
        (self.out_start[u + 1] - self.out_start[u]) as usize
    }

    pub fn edges(&self) -> impl Iterator<Item = EdgeRef> + '_ {
        (0..self.node_count()).flat_map(move |u| self.out_edges(u))
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        let lo = self.out_start[u] as usize;
        let hi = self.out_start[u + 1] as usize;
        self.out_target[lo..hi].contains(&(v as u32))
    }

    /// Neighbours in the undirected support graph with their weights.
    fn undirected(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let tu = self.tau_values[u];
        let outs = (self.out_start[u]..self.out_start[u + 1])
            .map(|e| self.out_target[e as usize] as usize);
        let ins =
            (self.in_start[u]..self.in_start[u + 1]).map(|e| self.in_source[e as usize] as usize);
        outs.chain(ins)
            .map(move |v| (v, (self.tau_values[v] - tu).abs()))
    }

    /// Causal future (or past) of `origin` by breadth-first closure over directed edges.
    pub fn reach(&self, origin: usize, sense: TimeSense) -> Result<ReachSet> {
        if origin >= self.node_count() {
            return Err(Error::NodeNotInGrid(Vec::new()));
        }
        if sense == TimeSense::None {
            return Err(Error::InvalidParam("reach needs Future or Past".into()));
        }
        let mut members: BitVec = BitVec::repeat(false, self.node_count());
        let mut queue = VecDeque::new();
        members.set(origin, true);
        queue.push_back(origin);
        while let Some(u) = queue.pop_front() {
            let next: Box<dyn Iterator<Item = usize>> = match sense {
                TimeSense::Future => Box::new(self.out_edges(u).map(|e| e.to)),
                _ => Box::new(self.in_edges(u).map(|e| e.from)),
            };
            for v in next {
                if !members[v] {
                    members.set(v, true);
                    queue.push_back(v);
                }
            }
        }
        Ok(ReachSet {
            origin,
            members,
            sense,
        })
    }

    pub fn reach_event(&self, p: &[f64], sense: TimeSense) -> Result<ReachSet> {
        let node = self.node_at(p)?;
        self.reach(node, sense)
    }

    /// Single-source Dijkstra over the undirected support graph.
    ///
    /// Ties are broken by node index so results are deterministic.
    pub fn distances_from(&self, source: usize) -> ShortestPaths {
        self.dijkstra(source, None)
    }

    fn dijkstra(&self, source: usize, stop_at: Option<usize>) -> ShortestPaths {
        let n = self.node_count();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred = vec![NONE; n];
        let mut done: BitVec = BitVec::repeat(false, n);
        let mut heap = BinaryHeap::new();
        dist[source] = 0.0;
        heap.push(Reverse((0.0f64.to_bits(), source as u32)));
        while let Some(Reverse((dbits, u))) = heap.pop() {
            let u = u as usize;
            if done[u] {
                continue;
            }
            done.set(u, true);
            if Some(u) == stop_at {
                break;
            }
            let du = f64::from_bits(dbits);
            for (v, w) in self.undirected(u) {
                if done[v] {
                    continue;
                }
                let nd = du + w;
                if nd < dist[v] || (nd == dist[v] && (u as u32) < pred[v]) {
                    dist[v] = nd;
                    pred[v] = u as u32;
                    heap.push(Reverse((nd.to_bits(), v as u32)));
                }
            }
        }
        ShortestPaths { source, dist, pred }
    }

    /// Approximate null distance between two nodes.
    ///
    /// The search always starts from the lower-indexed node so that
    /// `estimate(p, q) == estimate(q, p)` bit for bit.
    pub fn shortest_null_path(&self, p: usize, q: usize) -> Result<NullPathEstimate> {
        let n = self.node_count();
        if p >= n || q >= n {
            return Err(Error::NodeNotInGrid(Vec::new()));
        }
        let (src, dst) = if p <= q { (p, q) } else { (q, p) };
        let sp = self.dijkstra(src, Some(dst));
        let mut path = sp.path_to(dst).ok_or(Error::Disconnected)?;
        if src != p {
            path.reverse();
        }
        Ok(NullPathEstimate {
            estimate: sp.dist[dst],
            lower_bound: (self.tau(q) - self.tau(p)).abs(),
            path,
        })
    }

    pub fn shortest_null_path_events(&self, p: &[f64], q: &[f64]) -> Result<NullPathEstimate> {
        let a = self.node_at(p)?;
        let b = self.node_at(q)?;
        self.shortest_null_path(a, b)
    }
}

/// Result of a single-source search.
#[derive(Clone, Debug)]
pub struct ShortestPaths {
    pub source: usize,
    pub dist: Vec<f64>,
    pred: Vec<u32>,
}

impl ShortestPaths {
    pub fn distance(&self, node: usize) -> f64 {
        self.dist[node]
    }

    pub fn path_to(&self, target: usize) -> Option<Vec<usize>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = vec![target];
        let mut cur = target;
        while cur != self.source {
            cur = self.pred[cur] as usize;
            path.push(cur);
        }
        path.reverse();
        Some(path)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NullPathEstimate {
    pub estimate: f64,
    /// `|τ(q) − τ(p)|`
    pub lower_bound: f64,
    /// Node sequence from `p` to `q`.
    pub path: Vec<usize>,
}

/// Causal future or past of a node.
#[derive(Clone, Debug, PartialEq)]
pub struct ReachSet {
    pub origin: usize,
    pub members: BitVec,
    pub sense: TimeSense,
}

impl ReachSet {
    pub fn contains(&self, node: usize) -> bool {
        self.members[node]
    }

    pub fn len(&self) -> usize {
        self.members.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineEntry {
    pub h: f64,
    pub estimate: f64,
    pub lower_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RefineReport {
    pub entries: Vec<RefineEntry>,
    /// Estimates never increase as `h` decreases.
    pub monotone_nonincreasing: bool,
    /// Linear-in-`h` extrapolation from the last two entries.
    pub extrapolated: Option<f64>,
}

/// Recomputes the null-distance estimate between `p` and `q` on successively finer grids.
pub fn refine_schedule(
    st: &Spacetime,
    tau: &TimeFunction,
    p: &[f64],
    q: &[f64],
    region: &BoxRegion,
    h_list: &[f64],
    stencil: StencilSpec,
) -> Result<RefineReport> {
    if h_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParam(
            "h_list must be strictly decreasing".into(),
        ));
    }
    let mut entries = Vec::with_capacity(h_list.len());
    for &h in h_list {
        let grid = CausalGrid::build(st, tau, region, h, stencil)?;
        let est = grid.shortest_null_path_events(p, q)?;
        entries.push(RefineEntry {
            h,
            estimate: est.estimate,
            lower_bound: est.lower_bound,
        });
    }
    let monotone_nonincreasing = entries
        .windows(2)
        .all(|w| w[1].estimate <= w[0].estimate + 1e-12);
    let extrapolated = match entries.as_slice() {
        [.., a, b] => Some(b.estimate + (b.estimate - a.estimate) * b.h / (a.h - b.h)),
        _ => None,
    };
    Ok(RefineReport {
        entries,
        monotone_nonincreasing,
        extrapolated,
    })
}
