//! Search over sparse Hamming graph parameters: maximize saturation
//! throughput, then minimize zero-load latency, under an area budget.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use parking_lot::Mutex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::ArchParams;
use crate::cost::CostReport;
use crate::error::{Error, Result};
use crate::perf::{
    analytic_report, saturation_sweep, PerfReport, RouterConfig, SimControl, TrafficSpec,
};
use crate::pipeline::predict;
use crate::routing::{DetailedRouteOptions, RoutabilityMetrics};
use crate::topology::{GridDims, Topology, TopologySpec};

pub const DEFAULT_BUDGET: f64 = 0.40;

/// Objective values closer than this are ties; the channel-load bound
/// carries float noise from summing path fractions.
pub const OBJECTIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Channel-load bound as throughput; no simulation.
    #[default]
    Analytic,
    Simulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExploreConfig {
    pub dims: GridDims,
    pub arch: ArchParams,
    #[serde(default)]
    pub rc: RouterConfig,
    /// Largest admissible area overhead, in (0, 1].
    #[serde(default = "default_budget")]
    pub budget: f64,
    #[serde(default)]
    pub evaluator: Evaluator,
    #[serde(default)]
    pub routing: DetailedRouteOptions,
    #[serde(default)]
    pub traffic: TrafficSpec,
    #[serde(default)]
    pub sim: SimControl,
}

fn default_budget() -> f64 {
    DEFAULT_BUDGET
}

impl ExploreConfig {
    pub fn new(dims: GridDims, arch: ArchParams) -> Self {
        ExploreConfig {
            dims,
            arch,
            rc: RouterConfig::default(),
            budget: DEFAULT_BUDGET,
            evaluator: Evaluator::Analytic,
            routing: DetailedRouteOptions::default(),
            traffic: TrafficSpec::default(),
            sim: SimControl::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.arch.validate()?;
        self.rc.validate()?;
        self.sim.validate()?;
        // 1.0 is accepted as "no budget"
        if !(self.budget > 0.0 && self.budget <= 1.0) {
            return Err(Error::param("budget", "must be in (0, 1]"));
        }
        if self.arch.n_tiles as usize != self.dims.n_tiles() {
            return Err(Error::param(
                "n_tiles",
                format!(
                    "architecture has {} tiles but the grid {} has {}",
                    self.arch.n_tiles,
                    self.dims,
                    self.dims.n_tiles()
                ),
            ));
        }
        Ok(())
    }

    /// Identifies everything that influences an evaluation besides the spec.
    pub fn hash(&self) -> String {
        let doc = serde_json::to_string(&(env!("CARGO_PKG_VERSION"), self))
            .expect("config serializes");
        hex::encode(Sha256::digest(doc.as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub spec: TopologySpec,
    /// Hash of the configuration and tool version that produced this entry.
    pub config_hash: String,
    pub cost: Option<CostReport>,
    pub routability: Option<RoutabilityMetrics>,
    pub perf: Option<PerfReport>,
    /// Area overhead within budget and the pipeline succeeded.
    pub feasible: bool,
    /// Pipeline failure, if any.
    pub error: Option<String>,
}

impl Candidate {
    pub fn area_overhead(&self) -> Option<f64> {
        self.cost.as_ref().map(|c| c.area_overhead)
    }

    /// `(throughput, latency)` when both are known.
    pub fn objective(&self) -> Option<(f64, f64)> {
        self.perf
            .as_ref()
            .map(|p| (p.saturation_throughput, p.zero_load_latency_cycles))
    }

    /// Higher throughput wins; equal throughput falls back to lower latency.
    /// Values within [`OBJECTIVE_TOLERANCE`] count as equal.
    pub fn better_than(&self, other: &Candidate) -> bool {
        const EPS: f64 = OBJECTIVE_TOLERANCE;
        match (self.objective(), other.objective()) {
            (Some((ta, la)), Some((tb, lb))) => {
                ta > tb + EPS || ((ta - tb).abs() <= EPS && la < lb - EPS)
            }
            (Some(_), None) => true,
            _ => false,
        }
    }
}

/// Evaluates candidates under one configuration, caching by spec.
pub struct Explorer {
    cfg: ExploreConfig,
    hash: String,
    cache: Mutex<HashMap<TopologySpec, Arc<Candidate>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClimbResult {
    pub best: Candidate,
    /// Every evaluated candidate in evaluation order, starting at the mesh.
    pub trace: Vec<Candidate>,
}

impl Explorer {
    pub fn new(cfg: ExploreConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        Ok(Explorer {
            cfg,
            hash,
            cache: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ExploreConfig {
        &self.cfg
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().len()
    }

    pub fn evaluate(&self, spec: &TopologySpec) -> Arc<Candidate> {
        if let Some(c) = self.cache.lock().get(spec) {
            return c.clone();
        }
        let c = Arc::new(self.evaluate_uncached(spec, self.cfg.evaluator));
        // a concurrent evaluation of the same spec yields the same value
        self.cache
            .lock()
            .entry(spec.clone())
            .or_insert(c)
            .clone()
    }

    fn evaluate_uncached(&self, spec: &TopologySpec, evaluator: Evaluator) -> Candidate {
        let mut c = Candidate {
            spec: spec.clone(),
            config_hash: self.hash.clone(),
            cost: None,
            routability: None,
            perf: None,
            feasible: false,
            error: None,
        };
        let run = || -> Result<_> {
            let t = Topology::generate(spec, self.cfg.dims)?;
            let p = predict(&t, &self.cfg.arch, &self.cfg.routing)?;
            let lat = &p.cost.link_latencies;
            let perf = match evaluator {
                Evaluator::Analytic => analytic_report(p.topology(), lat, &self.cfg.rc)?,
                Evaluator::Simulated => saturation_sweep(
                    p.topology(),
                    lat,
                    &self.cfg.rc,
                    &self.cfg.traffic,
                    &self.cfg.sim,
                )?,
            };
            Ok((p.cost, p.metrics, perf))
        };
        match run() {
            Ok((cost, metrics, perf)) => {
                c.feasible = cost.area_overhead <= self.cfg.budget;
                c.cost = Some(cost);
                c.routability = Some(metrics);
                c.perf = Some(perf);
            }
            Err(e) => c.error = Some(e.to_string()),
        }
        c
    }

    /// Scores a candidate with the cycle-level simulator, bypassing the cache.
    pub fn rescore_simulated(&self, spec: &TopologySpec) -> Candidate {
        self.evaluate_uncached(spec, Evaluator::Simulated)
    }

    /// Evaluates every neighbour of `spec`, in neighbour order.
    pub fn step(&self, spec: &TopologySpec) -> Result<Vec<Candidate>> {
        let ns = neighbors(spec, self.cfg.dims)?;
        Ok(ns
            .par_iter()
            .map(|s| (*self.evaluate(s)).clone())
            .collect())
    }

    /// Greedy ascent from the mesh over single skip-distance toggles.
    pub fn hill_climb(&self) -> Result<ClimbResult> {
        let mut current = (*self.evaluate(&TopologySpec::sparse_hamming([], []))).clone();
        let mut trace = vec![current.clone()];
        let mut seen: BTreeSet<TopologySpec> = BTreeSet::from([current.spec.clone()]);
        if !current.feasible {
            return Ok(ClimbResult {
                best: current,
                trace,
            });
        }
        loop {
            let evaluated = self.step(&current.spec)?;
            let mut best: Option<&Candidate> = None;
            for c in &evaluated {
                if c.feasible && best.is_none_or(|b| c.better_than(b)) {
                    best = Some(c);
                }
            }
            for c in &evaluated {
                if seen.insert(c.spec.clone()) {
                    trace.push(c.clone());
                }
            }
            match best {
                Some(b) if b.better_than(&current) => current = b.clone(),
                _ => break,
            }
        }
        Ok(ClimbResult {
            best: current,
            trace,
        })
    }

    /// Evaluates all parameter sets for the grid.
    pub fn exhaustive(&self) -> Result<Vec<Candidate>> {
        Ok(all_configs(self.cfg.dims)?
            .par_iter()
            .map(|s| (*self.evaluate(s)).clone())
            .collect())
    }
}

/// Best feasible candidate under the lexicographic objective; ties keep the
/// earlier one.
pub fn best_feasible<'a>(cands: impl IntoIterator<Item = &'a Candidate>) -> Option<&'a Candidate> {
    let mut best: Option<&Candidate> = None;
    for c in cands {
        if c.feasible && best.is_none_or(|b| c.better_than(b)) {
            best = Some(c);
        }
    }
    best
}

/// Specs one skip distance away: each admissible row distance toggled, then
/// each column distance, ordered by distance with rows first.
pub fn neighbors(spec: &TopologySpec, dims: GridDims) -> Result<Vec<TopologySpec>> {
    spec.validate(dims)?;
    let TopologySpec::SparseHamming { s_r, s_c } = spec else {
        return Err(Error::param("spec", "only sparse Hamming graphs have neighbours"));
    };
    let toggle = |set: &BTreeSet<u32>, x: u32| {
        let mut s = set.clone();
        if !s.remove(&x) {
            s.insert(x);
        }
        s
    };
    let top = dims.rows.max(dims.cols);
    let mut out = Vec::new();
    for x in 2..top {
        if x < dims.cols {
            out.push(TopologySpec::SparseHamming {
                s_r: toggle(s_r, x),
                s_c: s_c.clone(),
            });
        }
        if x < dims.rows {
            out.push(TopologySpec::SparseHamming {
                s_r: s_r.clone(),
                s_c: toggle(s_c, x),
            });
        }
    }
    Ok(out)
}

/// Every sparse Hamming parameter set on `dims`.
pub fn all_configs(dims: GridDims) -> Result<Vec<TopologySpec>> {
    let count = crate::topology::config_count(dims)?;
    if count > 1 << 20 {
        return Err(Error::param("dims", "too many configurations to enumerate"));
    }
    let rows: Vec<u32> = (2..dims.cols).collect();
    let cols: Vec<u32> = (2..dims.rows).collect();
    Ok((0..count)
        .map(|mask| {
            let pick = |xs: &[u32], shift: usize| -> BTreeSet<u32> {
                xs.iter()
                    .enumerate()
                    .filter(|(i, _)| mask >> (i + shift) & 1 == 1)
                    .map(|(_, &x)| x)
                    .collect()
            };
            TopologySpec::SparseHamming {
                s_r: pick(&rows, 0),
                s_c: pick(&cols, rows.len()),
            }
        })
        .collect())
}

/// Candidates not dominated in (area overhead, NoC power, throughput,
/// latency). Failed evaluations and repeated specs are dropped.
pub fn pareto_front(cands: &[Candidate]) -> Vec<Candidate> {
    let key = |c: &Candidate| -> Option<[f64; 4]> {
        let cost = c.cost.as_ref()?;
        let (thr, lat) = c.objective()?;
        // all four oriented so that smaller is better
        Some([cost.area_overhead, cost.p_noc_w, -thr, lat])
    };
    let dominates = |a: &[f64; 4], b: &[f64; 4]| {
        a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
    };
    let mut seen = BTreeSet::new();
    let unique: Vec<(&Candidate, [f64; 4])> = cands
        .iter()
        .filter_map(|c| key(c).map(|k| (c, k)))
        .filter(|(c, _)| seen.insert(c.spec.clone()))
        .collect();
    unique
        .iter()
        .filter(|(_, k)| !unique.iter().any(|(_, o)| dominates(o, k)))
        .map(|(c, _)| (*c).clone())
        .collect()
}

pub fn candidates_csv(cands: &[Candidate]) -> String {
    let mut out = String::from(
        "spec,feasible,area_overhead,p_noc_w,saturation_throughput,zero_load_latency,error\n",
    );
    let num = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for c in cands {
        let (thr, lat) = c.objective().unzip();
        out.push_str(&format!(
            "\"{}\",{},{},{},{},{},\"{}\"\n",
            c.spec,
            c.feasible,
            num(c.area_overhead()),
            num(c.cost.as_ref().map(|x| x.p_noc_w)),
            num(thr),
            num(lat),
            c.error.as_deref().unwrap_or("").replace('"', "'"),
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::fixtures::simple;

    fn small_cfg(rows: u32, cols: u32) -> ExploreConfig {
        let arch = ArchParams {
            n_tiles: rows * cols,
            h_layer_pitches_nm: vec![10_000.0],
            v_layer_pitches_nm: vec![10_000.0],
            ..simple()
        };
        ExploreConfig::new(GridDims::new(rows, cols).unwrap(), arch)
    }

    #[test]
    fn neighbour_order() {
        let dims = GridDims::new(4, 5).unwrap();
        let ns = neighbors(&TopologySpec::sparse_hamming([3], []), dims).unwrap();
        assert_eq!(
            ns,
            vec![
                TopologySpec::sparse_hamming([2, 3], []),
                TopologySpec::sparse_hamming([3], [2]),
                TopologySpec::sparse_hamming([], []),
                TopologySpec::sparse_hamming([3], [3]),
                TopologySpec::sparse_hamming([3, 4], []),
            ]
        );
        assert!(neighbors(&TopologySpec::Mesh2D, dims).is_err());
    }

    #[test]
    fn all_configs_distinct() {
        let dims = GridDims::new(4, 5).unwrap();
        let all = all_configs(dims).unwrap();
        assert_eq!(all.len(), 32);
        assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), 32);
    }

    #[test]
    fn evaluate_is_cached() {
        let ex = Explorer::new(small_cfg(3, 3)).unwrap();
        let spec = TopologySpec::sparse_hamming([2], []);
        let a = ex.evaluate(&spec);
        let b = ex.evaluate(&spec);
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(ex.cache_len(), 1);
        assert_eq!(a.config_hash, ex.config().hash());
    }

    #[test]
    fn pipeline_failure_is_infeasible() {
        // a grid too small for its tile count
        let mut cfg = small_cfg(3, 3);
        cfg.arch.h_layer_pitches_nm = vec![1e-3];
        let ex = Explorer::new(cfg).unwrap();
        let c = ex.evaluate(&TopologySpec::sparse_hamming([], []));
        assert!(!c.feasible);
        assert!(c.error.is_some());
    }

    #[test]
    fn tile_count_mismatch_rejected() {
        let mut cfg = small_cfg(3, 3);
        cfg.arch.n_tiles = 8;
        assert_eq!(Explorer::new(cfg).err().unwrap().field(), Some("n_tiles"));
    }

    #[test]
    fn budget_below_mesh_stops_at_mesh() {
        let mut cfg = small_cfg(4, 4);
        cfg.budget = 1e-6;
        let ex = Explorer::new(cfg).unwrap();
        let r = ex.hill_climb().unwrap();
        assert_eq!(r.trace.len(), 1);
        assert!(!r.best.feasible);
        assert_eq!(r.best.spec, TopologySpec::sparse_hamming([], []));
    }

    #[test]
    fn climb_is_locally_optimal() {
        let mut cfg = small_cfg(4, 5);
        cfg.budget = 0.9;
        let ex = Explorer::new(cfg).unwrap();
        let r = ex.hill_climb().unwrap();
        assert!(r.best.feasible);
        assert!(r.best.area_overhead().unwrap() <= 0.9);
        for n in ex.step(&r.best.spec).unwrap() {
            assert!(!(n.feasible && n.better_than(&r.best)), "{}", n.spec);
        }
        assert_eq!(r.trace[0].spec, TopologySpec::sparse_hamming([], []));
    }

    fn fake(name: u32, cost: (f64, f64), perf: (f64, f64)) -> Candidate {
        Candidate {
            spec: TopologySpec::sparse_hamming([name], []),
            config_hash: String::new(),
            cost: Some(CostReport {
                a_tot_mm2: 1.0,
                a_nonoc_mm2: 1.0,
                area_overhead: cost.0,
                p_tot_w: 0.0,
                p_nonoc_w: 0.0,
                p_noc_w: cost.1,
                p_noc_clamped: false,
                link_latencies: vec![],
                cell_counts: crate::cost::CellCounts {
                    n_cell: 0,
                    n_logic: 0,
                    n_hwire: 0,
                    n_vwire: 0,
                },
            }),
            routability: None,
            perf: Some(PerfReport {
                zero_load_latency_cycles: perf.1,
                saturation_throughput: perf.0,
                saturation_load: perf.0,
                curve: vec![],
                analytic_bound: perf.0,
            }),
            feasible: true,
            error: None,
        }
    }

    #[test]
    fn pareto_front_drops_dominated_and_duplicates() {
        let a = fake(2, (0.1, 1.0), (0.3, 10.0));
        let b = fake(3, (0.3, 2.0), (0.6, 8.0));
        let dominated = fake(4, (0.35, 2.5), (0.5, 9.0));
        assert_eq!(pareto_front(std::slice::from_ref(&a)), vec![a.clone()]);
        let front = pareto_front(&[a.clone(), b.clone(), dominated, a.clone()]);
        assert_eq!(front, vec![a, b]);
    }

    #[test]
    fn objective_is_lexicographic() {
        let a = fake(2, (0.1, 1.0), (0.5, 10.0));
        let b = fake(3, (0.1, 1.0), (0.5, 9.0));
        let c = fake(4, (0.1, 1.0), (0.6, 20.0));
        assert!(b.better_than(&a));
        assert!(c.better_than(&b));
        assert!(!a.better_than(&a));
        assert_eq!(best_feasible([&a, &b, &c]).unwrap().spec, c.spec);
    }

    #[test]
    fn csv_lists_every_candidate() {
        let csv = candidates_csv(&[fake(2, (0.1, 1.0), (0.5, 10.0))]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[1].starts_with("\"shg(sr={2},sc={})\",true,0.1,1,0.5,10,"));
    }
}
