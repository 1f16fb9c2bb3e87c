//! Routing tables, analytic latency and throughput bounds, and a cycle-level
//! virtual-channel network simulator.

use std::collections::{BinaryHeap, VecDeque};
use std::cmp::Reverse;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topology::{Orientation, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouterConfig {
    pub vcs: u32,
    /// Flits per virtual channel.
    pub buffer_depth: u32,
    /// Cycles per router traversal.
    pub router_delay: u32,
    pub injection_delay: u32,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            vcs: 8,
            buffer_depth: 32,
            router_delay: 1,
            injection_delay: 1,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("vcs", self.vcs),
            ("buffer_depth", self.buffer_depth),
            ("router_delay", self.router_delay),
            ("injection_delay", self.injection_delay),
        ] {
            if v == 0 {
                return Err(Error::param(field, "must be positive"));
            }
        }
        if self.vcs > 64 {
            return Err(Error::param("vcs", "at most 64 virtual channels are supported"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficPattern {
    UniformRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub pattern: TrafficPattern,
    /// Offered load in flits per cycle per tile.
    pub injection_rate: f64,
    pub packet_length: u32,
    pub seed: u64,
}

impl Default for TrafficSpec {
    fn default() -> Self {
        TrafficSpec {
            pattern: TrafficPattern::UniformRandom,
            injection_rate: 0.005,
            packet_length: 4,
            seed: 1,
        }
    }
}

impl TrafficSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.injection_rate > 0.0 && self.injection_rate <= 1.0) {
            return Err(Error::param("injection_rate", "must be in (0, 1]"));
        }
        if self.packet_length == 0 {
            return Err(Error::param("packet_length", "must be positive"));
        }
        Ok(())
    }
}

/// Simulation phase lengths and saturation search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimControl {
    pub warmup_cycles: u64,
    pub measure_cycles: u64,
    /// Upper bound on cycles spent draining measured packets.
    pub drain_cycles: u64,
    /// Cycles without any flit movement that count as deadlock.
    pub deadlock_cycles: u64,
    /// A load saturates when mean latency exceeds this multiple of the
    /// zero-load latency.
    pub saturation_factor: f64,
    pub search_iterations: u32,
    pub curve_points: u32,
}

impl Default for SimControl {
    fn default() -> Self {
        SimControl {
            warmup_cycles: 10_000,
            measure_cycles: 50_000,
            drain_cycles: 20_000,
            deadlock_cycles: 5_000,
            saturation_factor: 3.0,
            search_iterations: 8,
            curve_points: 10,
        }
    }
}

impl SimControl {
    pub fn validate(&self) -> Result<()> {
        if self.measure_cycles == 0 {
            return Err(Error::param("measure_cycles", "must be positive"));
        }
        if self.deadlock_cycles == 0 {
            return Err(Error::param("deadlock_cycles", "must be positive"));
        }
        if !(self.saturation_factor > 1.0) {
            return Err(Error::param("saturation_factor", "must exceed 1"));
        }
        if self.curve_points == 0 {
            return Err(Error::param("curve_points", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoutingMode {
    /// Fewest hops, then lowest total link latency.
    #[default]
    MinHop,
    /// Lowest total link latency, then fewest hops.
    MinHopMinLength,
}

/// One hop of a route: directed channel and the virtual-channel class used
/// on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hop {
    pub channel: u32,
    pub class: u8,
}

/// Directed channel `2 * link + d`; `d = 0` runs from end A to end B.
pub fn channel_of(t: &Topology, link: usize, from_tile: usize) -> u32 {
    let a = t.dims.tile_id(t.links[link].a);
    (2 * link + (from_tile != a) as usize) as u32
}

/// `(source tile, destination tile)` of a directed channel.
pub fn channel_ends(t: &Topology, channel: u32) -> (usize, usize) {
    let l = &t.links[channel as usize / 2];
    let (a, b) = (t.dims.tile_id(l.a), t.dims.tile_id(l.b));
    if channel % 2 == 0 {
        (a, b)
    } else {
        (b, a)
    }
}

/// Deterministic source routes for every ordered tile pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteTables {
    pub n_tiles: usize,
    pub mode: RoutingMode,
    /// Virtual-channel classes needed for deadlock freedom.
    pub classes: u32,
    /// Row-major `[source][destination]`.
    paths: Vec<Vec<Hop>>,
}

impl RouteTables {
    pub fn path(&self, src: usize, dst: usize) -> &[Hop] {
        &self.paths[src * self.n_tiles + dst]
    }

    pub fn hops(&self, src: usize, dst: usize) -> usize {
        self.path(src, dst).len()
    }

    /// First tile after `src` on the way to `dst`.
    pub fn next_hop(&self, t: &Topology, src: usize, dst: usize) -> Option<usize> {
        self.path(src, dst)
            .first()
            .map(|h| channel_ends(t, h.channel).1)
    }

    pub fn mean_hops(&self) -> f64 {
        let n = self.n_tiles;
        let total: usize = (0..n)
            .flat_map(|s| (0..n).filter(move |&d| d != s).map(move |d| (s, d)))
            .map(|(s, d)| self.hops(s, d))
            .sum();
        total as f64 / (n * (n - 1)) as f64
    }
}

type Cost = (u64, u64);

fn weight(mode: RoutingMode, latency: u32) -> Cost {
    match mode {
        RoutingMode::MinHop => (1, latency as u64),
        RoutingMode::MinHopMinLength => (latency as u64, 1),
    }
}

fn add(a: Cost, b: Cost) -> Cost {
    (a.0 + b.0, a.1 + b.1)
}

/// Lexicographic shortest-path costs from `src`.
fn dijkstra(adj: &[Vec<(usize, usize)>], w: &dyn Fn(usize) -> Cost, src: usize) -> Vec<Option<Cost>> {
    let mut dist: Vec<Option<Cost>> = vec![None; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = Some((0, 0));
    heap.push(Reverse(((0, 0), src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if dist[u] != Some(d) {
            continue;
        }
        for &(v, link) in &adj[u] {
            let nd = add(d, w(link));
            if dist[v].is_none_or(|old| nd < old) {
                dist[v] = Some(nd);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    dist
}

/// Routing phases: either row links then column links (Cartesian product
/// topologies) or a single phase along a cycle.
enum Phases {
    RowColumn,
    Cycle(Vec<usize>),
}

fn classify(t: &Topology) -> Result<Phases> {
    use std::collections::BTreeSet;
    let (rows, cols) = (t.dims.rows as usize, t.dims.cols as usize);
    let mut row_sets = vec![BTreeSet::new(); rows];
    let mut col_sets = vec![BTreeSet::new(); cols];
    let mut aligned = true;
    for l in &t.links {
        match l.orientation() {
            Orientation::Row => {
                row_sets[l.a.row as usize].insert((l.a.col, l.b.col));
            }
            Orientation::Column => {
                col_sets[l.a.col as usize].insert((l.a.row, l.b.row));
            }
            Orientation::Diagonal => aligned = false,
        }
    }
    if aligned
        && row_sets.windows(2).all(|w| w[0] == w[1])
        && col_sets.windows(2).all(|w| w[0] == w[1])
    {
        return Ok(Phases::RowColumn);
    }
    let adj = t.adjacency();
    if adj.iter().all(|a| a.len() == 2) {
        let mut order = vec![0usize];
        let mut prev = usize::MAX;
        let mut cur = 0;
        loop {
            let next = adj[cur].iter().map(|&(v, _)| v).find(|&v| v != prev).unwrap();
            if next == 0 {
                break;
            }
            order.push(next);
            prev = cur;
            cur = next;
        }
        if order.len() == adj.len() {
            let mut pos = vec![0; adj.len()];
            for (i, &tile) in order.iter().enumerate() {
                pos[tile] = i;
            }
            return Ok(Phases::Cycle(pos));
        }
    }
    Err(Error::Pipeline(format!(
        "{} has no deadlock-free routing scheme (needs a row/column product graph or a single cycle)",
        t.name()
    )))
}

/// Builds source routes for every pair. Product topologies route all row
/// hops before column hops; within a phase the VC class counts direction
/// reversals, which also covers wraparound datelines.
pub fn route_tables(t: &Topology, latencies: &[u32], mode: RoutingMode) -> Result<RouteTables> {
    if latencies.len() != t.links.len() {
        return Err(Error::param("latencies", "need one latency per link"));
    }
    t.check_structure()?;
    let n = t.n_tiles();
    let w = |link: usize| weight(mode, latencies[link]);
    let adj = t.adjacency();
    let phases = classify(t)?;

    // per phase: filtered adjacency and position of each tile along the phase
    let mut phase_adj: Vec<Vec<Vec<(usize, usize)>>> = Vec::new();
    let mut phase_pos: Vec<Vec<i64>> = Vec::new();
    match &phases {
        Phases::RowColumn => {
            for o in [Orientation::Row, Orientation::Column] {
                phase_adj.push(
                    adj.iter()
                        .map(|list| {
                            list.iter()
                                .copied()
                                .filter(|&(_, l)| t.links[l].orientation() == o)
                                .collect()
                        })
                        .collect(),
                );
                phase_pos.push(
                    (0..n)
                        .map(|id| {
                            let tile = t.dims.tile(id);
                            let x = if o == Orientation::Row { tile.col } else { tile.row };
                            x as i64
                        })
                        .collect(),
                );
            }
        }
        Phases::Cycle(pos) => {
            phase_adj.push(adj.clone());
            phase_pos.push(pos.iter().map(|&p| p as i64).collect());
        }
    }
    // dist[phase][target][tile]
    let dist: Vec<Vec<Vec<Option<Cost>>>> = phase_adj
        .iter()
        .map(|pa| (0..n).into_par_iter().map(|d| dijkstra(pa, &w, d)).collect())
        .collect();

    let mut paths = Vec::with_capacity(n * n);
    let mut classes = 1u32;
    for s in 0..n {
        for d in 0..n {
            let mut path = Vec::new();
            let mut cur = s;
            let targets: Vec<usize> = match phases {
                Phases::RowColumn => {
                    let (ts, td) = (t.dims.tile(s), t.dims.tile(d));
                    vec![(ts.row * t.dims.cols + td.col) as usize, d]
                }
                Phases::Cycle(_) => vec![d],
            };
            for (p, &target) in targets.iter().enumerate() {
                let dt = &dist[p][target];
                let mut reversals = 0u32;
                let mut last_sign = 0i64;
                while cur != target {
                    let (_, next, link) = phase_adj[p][cur]
                        .iter()
                        .filter_map(|&(v, l)| dt[v].map(|dv| (add(w(l), dv), v, l)))
                        .min()
                        .ok_or(Error::Disconnected)?;
                    let sign = (phase_pos[p][next] - phase_pos[p][cur]).signum();
                    if last_sign != 0 && sign != last_sign {
                        reversals += 1;
                    }
                    last_sign = sign;
                    classes = classes.max(reversals + 1);
                    path.push(Hop {
                        channel: channel_of(t, link, cur),
                        class: reversals as u8,
                    });
                    cur = next;
                }
            }
            paths.push(path);
        }
    }
    Ok(RouteTables {
        n_tiles: n,
        mode,
        classes,
        paths,
    })
}

/// Mean head latency over all ordered pairs at vanishing load: injection,
/// one router traversal per visited router, and every link on the path.
pub fn zero_load_latency_with(tables: &RouteTables, latencies: &[u32], rc: &RouterConfig) -> Result<f64> {
    let n = tables.n_tiles;
    if n < 2 {
        return Err(Error::NoTrafficPairs);
    }
    let mut total = 0u64;
    for s in 0..n {
        for d in (0..n).filter(|&d| d != s) {
            let path = tables.path(s, d);
            let links: u64 = path
                .iter()
                .map(|h| latencies[h.channel as usize / 2] as u64)
                .sum();
            total += rc.injection_delay as u64
                + (path.len() as u64 + 1) * rc.router_delay as u64
                + links;
        }
    }
    Ok(total as f64 / (n * (n - 1)) as f64)
}

pub fn zero_load_latency(
    t: &Topology,
    latencies: &[u32],
    rc: &RouterConfig,
    mode: RoutingMode,
) -> Result<f64> {
    zero_load_latency_with(&route_tables(t, latencies, mode)?, latencies, rc)
}

/// Uniform-traffic load on every directed channel when each pair splits its
/// traffic evenly over all of its optimal paths. Indexed by channel.
pub fn channel_loads(t: &Topology, latencies: &[u32], mode: RoutingMode) -> Result<Vec<f64>> {
    if latencies.len() != t.links.len() {
        return Err(Error::param("latencies", "need one latency per link"));
    }
    let n = t.n_tiles();
    if n < 2 {
        return Err(Error::NoTrafficPairs);
    }
    let adj = t.adjacency();
    let w = |link: usize| weight(mode, latencies[link]);
    let per_source: Vec<(Vec<Cost>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let dist = dijkstra(&adj, &w, s);
            let dist: Vec<Cost> = dist.into_iter().map(|d| d.ok_or(Error::Disconnected)).collect::<Result<_>>()?;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by_key(|&v| dist[v]);
            let mut sigma = vec![0.0f64; n];
            sigma[s] = 1.0;
            for &u in &order {
                for &(v, l) in &adj[u] {
                    if add(dist[u], w(l)) == dist[v] {
                        sigma[v] += sigma[u];
                    }
                }
            }
            Ok((dist, sigma))
        })
        .collect::<Result<_>>()?;

    let mut load = vec![0.0f64; 2 * t.links.len()];
    for s in 0..n {
        let (ds, ss) = &per_source[s];
        for d in (0..n).filter(|&d| d != s) {
            let (dd, sd) = &per_source[d];
            for u in 0..n {
                if ss[u] == 0.0 {
                    continue;
                }
                for &(v, l) in &adj[u] {
                    // u -> v lies on an optimal s -> d path
                    if add(add(ds[u], w(l)), dd[v]) == ds[d] {
                        load[channel_of(t, l, u) as usize] += ss[u] * sd[v] / ss[d];
                    }
                }
            }
        }
    }
    let scale = 1.0 / (n - 1) as f64;
    Ok(load.into_iter().map(|x| x * scale).collect())
}

/// Throughput bound `min(1, 1 / max channel load)`.
pub fn channel_load_bound(t: &Topology, latencies: &[u32], mode: RoutingMode) -> Result<f64> {
    let gamma = channel_loads(t, latencies, mode)?
        .into_iter()
        .fold(0.0f64, f64::max);
    Ok(if gamma <= 1.0 { 1.0 } else { 1.0 / gamma })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub offered_load: f64,
    /// Mean head latency of packets generated in the measurement window.
    pub avg_latency: f64,
    /// Flits ejected per cycle per tile during the measurement window.
    pub accepted_throughput: f64,
    pub measured_packets: u64,
    /// Measured packets still undelivered when draining stopped; their
    /// latency is counted up to that point.
    pub unfinished_packets: u64,
    pub mean_hops: f64,
}

#[derive(Debug, Clone, Copy)]
struct Flit {
    packet: u32,
    head: bool,
    tail: bool,
    ready: u64,
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    src: u32,
    dst: u32,
    created: u64,
    hop: u16,
    measured: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Out {
    Channel(u32),
    Eject,
}

#[derive(Debug, Default)]
struct InputVc {
    buf: VecDeque<Flit>,
    route: Option<(Out, u8)>,
}

/// Cycle-level simulation of uniform random traffic on `t`.
pub fn simulate(
    t: &Topology,
    latencies: &[u32],
    rc: &RouterConfig,
    traffic: &TrafficSpec,
    ctl: &SimControl,
) -> Result<SimResult> {
    let tables = route_tables(t, latencies, RoutingMode::MinHop)?;
    simulate_with(t, &tables, latencies, rc, traffic, ctl)
}

pub fn simulate_with(
    t: &Topology,
    tables: &RouteTables,
    latencies: &[u32],
    rc: &RouterConfig,
    traffic: &TrafficSpec,
    ctl: &SimControl,
) -> Result<SimResult> {
    rc.validate()?;
    traffic.validate()?;
    ctl.validate()?;
    if tables.classes > rc.vcs {
        return Err(Error::param(
            "vcs",
            format!("routing needs {} virtual channel classes", tables.classes),
        ));
    }
    let n = t.n_tiles();
    if n < 2 {
        return Err(Error::NoTrafficPairs);
    }
    Sim::new(t, tables, latencies, rc, traffic).run(t, ctl)
}

struct Sim<'a> {
    tables: &'a RouteTables,
    n: usize,
    vcs: usize,
    classes: usize,
    depth: u32,
    router_delay: u64,
    injection_delay: u64,
    packet_length: u32,
    rate: f64,
    rng: ChaCha8Rng,

    ch_lat: Vec<u64>,
    /// Input ports per router: incoming channel ids, then the injection port
    /// `n_ch + router`.
    in_ports: Vec<Vec<u32>>,
    n_ch: usize,

    inputs: Vec<InputVc>,
    port_flits: Vec<u32>,
    port_rr: Vec<u32>,
    credits: Vec<u32>,
    owned: Vec<bool>,
    vc_rr: Vec<u32>,
    /// Output arbitration pointer per channel and per ejection port.
    out_rr: Vec<u32>,
    links: Vec<VecDeque<(u64, u8, Flit)>>,
    credit_queue: Vec<VecDeque<(u64, u8)>>,

    requests: Vec<(Out, u32, usize, usize)>,
    packets: Vec<Packet>,
    free_packets: Vec<u32>,
    in_network: u64,
}

impl<'a> Sim<'a> {
    fn new(
        t: &Topology,
        tables: &'a RouteTables,
        latencies: &[u32],
        rc: &RouterConfig,
        traffic: &TrafficSpec,
    ) -> Self {
        let n = t.n_tiles();
        let n_ch = 2 * t.links.len();
        let vcs = rc.vcs as usize;
        let mut in_ports = vec![Vec::new(); n];
        for c in 0..n_ch as u32 {
            in_ports[channel_ends(t, c).1].push(c);
        }
        for (r, ports) in in_ports.iter_mut().enumerate() {
            ports.push((n_ch + r) as u32);
        }
        let n_ports = n_ch + n;
        Sim {
            tables,
            n,
            vcs,
            classes: tables.classes as usize,
            depth: rc.buffer_depth,
            router_delay: rc.router_delay as u64,
            injection_delay: rc.injection_delay as u64,
            packet_length: traffic.packet_length,
            rate: traffic.injection_rate,
            rng: ChaCha8Rng::seed_from_u64(traffic.seed),
            ch_lat: (0..n_ch).map(|c| latencies[c / 2] as u64).collect(),
            in_ports,
            n_ch,
            inputs: (0..n_ports * vcs).map(|_| InputVc::default()).collect(),
            port_flits: vec![0; n_ports],
            port_rr: vec![0; n_ports],
            credits: vec![rc.buffer_depth; n_ch * vcs],
            owned: vec![false; n_ch * vcs],
            vc_rr: vec![0; n_ch],
            out_rr: vec![0; n_ch + n],
            links: vec![VecDeque::new(); n_ch],
            credit_queue: vec![VecDeque::new(); n_ch],
            requests: Vec::new(),
            packets: Vec::new(),
            free_packets: Vec::new(),
            in_network: 0,
        }
    }

    fn run(mut self, t: &Topology, ctl: &SimControl) -> Result<SimResult> {
        let start = ctl.warmup_cycles;
        let end = start + ctl.measure_cycles;
        let stop = end + ctl.drain_cycles;
        let p_packet = self.rate / self.packet_length as f64;

        let mut measured = 0u64;
        let mut delivered = 0u64;
        let mut latency_sum = 0u64;
        let mut hop_sum = 0u64;
        let mut ejected_in_window = 0u64;
        let mut last_move = 0u64;

        let mut now = 0u64;
        loop {
            if now >= end && delivered == measured {
                break;
            }
            if now >= stop {
                break;
            }
            let mut moved = false;

            // link and credit arrivals
            for c in 0..self.n_ch {
                while let Some(&(at, vc, mut flit)) = self.links[c].front() {
                    if at > now {
                        break;
                    }
                    self.links[c].pop_front();
                    flit.ready = now + self.router_delay;
                    self.inputs[c * self.vcs + vc as usize].buf.push_back(flit);
                    self.port_flits[c] += 1;
                    moved = true;
                }
                while let Some(&(at, vc)) = self.credit_queue[c].front() {
                    if at > now {
                        break;
                    }
                    self.credit_queue[c].pop_front();
                    self.credits[c * self.vcs + vc as usize] += 1;
                }
            }

            // injection
            for src in 0..self.n {
                if !self.rng.gen_bool(p_packet) {
                    continue;
                }
                let mut dst = self.rng.gen_range(0..self.n - 1);
                if dst >= src {
                    dst += 1;
                }
                let in_window = (start..end).contains(&now);
                let id = self.alloc_packet(Packet {
                    src: src as u32,
                    dst: dst as u32,
                    created: now,
                    hop: 0,
                    measured: in_window,
                });
                if in_window {
                    measured += 1;
                }
                let port = self.n_ch + src;
                let ready = now + self.injection_delay + self.router_delay;
                for k in 0..self.packet_length {
                    self.inputs[port * self.vcs].buf.push_back(Flit {
                        packet: id,
                        head: k == 0,
                        tail: k + 1 == self.packet_length,
                        ready,
                    });
                }
                self.port_flits[port] += self.packet_length;
                self.in_network += self.packet_length as u64;
            }

            // allocation and traversal, router by router
            let mut requests = std::mem::take(&mut self.requests);
            for r in 0..self.n {
                requests.clear();
                for pi in 0..self.in_ports[r].len() {
                    let port = self.in_ports[r][pi] as usize;
                    if self.port_flits[port] == 0 {
                        continue;
                    }
                    let nv = if port >= self.n_ch { 1 } else { self.vcs };
                    let rr = self.port_rr[port] as usize;
                    for k in 0..nv {
                        let vc = (rr + k) % nv;
                        if let Some(out) = self.request(port, vc, now) {
                            requests.push((out, pi as u32, port, vc));
                            break;
                        }
                    }
                }
                if requests.is_empty() {
                    continue;
                }
                let n_in = self.in_ports[r].len() as u32;
                requests.sort_by_key(|&(out, pi, _, _)| {
                    let slot = self.out_slot(out, r);
                    (slot, (pi + n_in - self.out_rr[slot] % n_in) % n_in)
                });
                let mut last_slot = usize::MAX;
                for &(out, pi, port, vc) in &requests {
                    let slot = self.out_slot(out, r);
                    if slot == last_slot {
                        continue;
                    }
                    last_slot = slot;
                    self.out_rr[slot] = pi + 1;
                    let nv = if port >= self.n_ch { 1 } else { self.vcs };
                    self.port_rr[port] = ((vc + 1) % nv) as u32;
                    moved = true;
                    if let Some((id, hops)) = self.traverse(port, vc, out, now) {
                        let pkt = &mut self.packets[id as usize];
                        if pkt.measured {
                            delivered += 1;
                            latency_sum += now - pkt.created;
                            hop_sum += hops as u64;
                            pkt.measured = false;
                        }
                    }
                    if out == Out::Eject && (start..end).contains(&now) {
                        ejected_in_window += 1;
                    }
                }
            }

            self.requests = requests;
            if moved {
                last_move = now;
            } else if self.in_network > 0 && now - last_move >= ctl.deadlock_cycles {
                return Err(Error::Deadlock {
                    topology: t.name(),
                    load: self.rate,
                });
            }
            now += 1;
        }

        // measured packets still in flight count up to the stop time
        let mut unfinished = 0u64;
        for p in self.packets.iter().filter(|p| p.measured) {
            unfinished += 1;
            latency_sum += now - p.created;
        }
        let counted = delivered + unfinished;
        Ok(SimResult {
            offered_load: self.rate,
            avg_latency: if counted == 0 {
                0.0
            } else {
                latency_sum as f64 / counted as f64
            },
            accepted_throughput: ejected_in_window as f64
                / (ctl.measure_cycles as f64 * self.n as f64),
            measured_packets: measured,
            unfinished_packets: unfinished,
            mean_hops: if delivered == 0 {
                0.0
            } else {
                hop_sum as f64 / delivered as f64
            },
        })
    }

    fn alloc_packet(&mut self, p: Packet) -> u32 {
        if let Some(id) = self.free_packets.pop() {
            self.packets[id as usize] = p;
            id
        } else {
            self.packets.push(p);
            (self.packets.len() - 1) as u32
        }
    }

    fn out_slot(&self, out: Out, router: usize) -> usize {
        match out {
            Out::Channel(c) => c as usize,
            Out::Eject => self.n_ch + router,
        }
    }

    /// Output wanted by the head of an input VC this cycle, allocating an
    /// output VC for a new packet if needed.
    fn request(&mut self, port: usize, vc: usize, now: u64) -> Option<Out> {
        let idx = port * self.vcs + vc;
        let flit = *self.inputs[idx].buf.front()?;
        if flit.ready > now {
            return None;
        }
        let route = match self.inputs[idx].route {
            Some(r) => r,
            None => {
                debug_assert!(flit.head);
                let pkt = self.packets[flit.packet as usize];
                let path = self.tables.path(pkt.src as usize, pkt.dst as usize);
                let r = match path.get(pkt.hop as usize) {
                    None => (Out::Eject, 0),
                    Some(h) => (Out::Channel(h.channel), self.grab_vc(h.channel, h.class)?),
                };
                self.inputs[idx].route = Some(r);
                r
            }
        };
        match route {
            (Out::Eject, _) => Some(Out::Eject),
            (Out::Channel(c), ovc) => {
                (self.credits[c as usize * self.vcs + ovc as usize] > 0).then_some(Out::Channel(c))
            }
        }
    }

    /// A free output VC of the class on channel `c`: not held by a packet and
    /// with an empty downstream buffer.
    fn grab_vc(&mut self, c: u32, class: u8) -> Option<u8> {
        let c = c as usize;
        let start = self.vc_rr[c] as usize;
        for k in 0..self.vcs {
            let v = (start + k) % self.vcs;
            if v % self.classes != class as usize {
                continue;
            }
            let i = c * self.vcs + v;
            if !self.owned[i] && self.credits[i] == self.depth {
                self.owned[i] = true;
                self.vc_rr[c] = ((v + 1) % self.vcs) as u32;
                return Some(v as u8);
            }
        }
        None
    }

    /// Moves the head flit of an input VC through the switch. Returns the
    /// packet id and hop count when a packet head leaves the network.
    fn traverse(&mut self, port: usize, vc: usize, out: Out, now: u64) -> Option<(u32, u16)> {
        let idx = port * self.vcs + vc;
        let flit = self.inputs[idx].buf.pop_front().expect("requested flit");
        let (_, ovc) = self.inputs[idx].route.expect("routed flit");
        self.port_flits[port] -= 1;
        if port < self.n_ch {
            self.credit_queue[port].push_back((now + self.ch_lat[port], vc as u8));
        }
        if flit.tail {
            self.inputs[idx].route = None;
        }
        match out {
            Out::Channel(c) => {
                let c = c as usize;
                let i = c * self.vcs + ovc as usize;
                self.credits[i] -= 1;
                if flit.tail {
                    self.owned[i] = false;
                }
                if flit.head {
                    self.packets[flit.packet as usize].hop += 1;
                }
                self.links[c].push_back((now + self.ch_lat[c], ovc, flit));
                None
            }
            Out::Eject => {
                self.in_network -= 1;
                let hops = self.packets[flit.packet as usize].hop;
                if flit.tail {
                    self.free_packets.push(flit.packet);
                }
                flit.head.then_some((flit.packet, hops))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub offered_load: f64,
    pub avg_latency: f64,
    pub accepted_throughput: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub zero_load_latency_cycles: f64,
    pub saturation_throughput: f64,
    /// Smallest offered load found to saturate the network.
    pub saturation_load: f64,
    pub curve: Vec<CurvePoint>,
    pub analytic_bound: f64,
}

impl PerfReport {
    pub fn curve_csv(&self) -> String {
        let mut out = String::from("offered_load,avg_latency,accepted_throughput\n");
        for p in &self.curve {
            out.push_str(&format!(
                "{},{},{}\n",
                p.offered_load, p.avg_latency, p.accepted_throughput
            ));
        }
        out
    }
}

/// Binary search for the saturation load, then a latency curve up to it.
pub fn saturation_sweep(
    t: &Topology,
    latencies: &[u32],
    rc: &RouterConfig,
    base: &TrafficSpec,
    ctl: &SimControl,
) -> Result<PerfReport> {
    let tables = route_tables(t, latencies, RoutingMode::MinHop)?;
    let zll = zero_load_latency_with(&tables, latencies, rc)?;
    let bound = channel_load_bound(t, latencies, RoutingMode::MinHop)?;
    let run = |rate: f64| {
        let traffic = TrafficSpec {
            injection_rate: rate,
            ..*base
        };
        simulate_with(t, &tables, latencies, rc, &traffic, ctl)
    };
    let saturated = |r: &SimResult| r.avg_latency > ctl.saturation_factor * zll;

    let full = run(1.0)?;
    let (sat_load, sat_result) = if !saturated(&full) {
        (1.0, full)
    } else {
        let (mut lo, mut hi, mut at_hi) = (0.0f64, 1.0f64, full);
        for _ in 0..ctl.search_iterations {
            let mid = (lo + hi) / 2.0;
            let r = run(mid)?;
            if saturated(&r) {
                hi = mid;
                at_hi = r;
            } else {
                lo = mid;
            }
        }
        (hi, at_hi)
    };

    let k = ctl.curve_points;
    let curve = (1..=k)
        .into_par_iter()
        .map(|i| {
            let load = sat_load * i as f64 / k as f64;
            if i == k {
                return Ok(sat_result);
            }
            run(load)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|r| CurvePoint {
            offered_load: r.offered_load,
            avg_latency: r.avg_latency,
            accepted_throughput: r.accepted_throughput,
        })
        .collect();

    Ok(PerfReport {
        zero_load_latency_cycles: zll,
        saturation_throughput: sat_result.accepted_throughput,
        saturation_load: sat_load,
        curve,
        analytic_bound: bound,
    })
}

/// Analytic-only report: zero-load latency and the channel-load bound
/// standing in for saturation throughput.
pub fn analytic_report(t: &Topology, latencies: &[u32], rc: &RouterConfig) -> Result<PerfReport> {
    let zll = zero_load_latency(t, latencies, rc, RoutingMode::MinHop)?;
    let bound = channel_load_bound(t, latencies, RoutingMode::MinHop)?;
    Ok(PerfReport {
        zero_load_latency_cycles: zll,
        saturation_throughput: bound,
        saturation_load: bound,
        curve: Vec::new(),
        analytic_bound: bound,
    })
}
