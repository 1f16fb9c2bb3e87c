//! Batch commands. Each writes one document to stdout or to `--out`, in the
//! latter case with a run manifest alongside.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;
use shg_core::cost::CostReport;
use shg_core::explore::{best_feasible, candidates_csv, pareto_front, Candidate, Evaluator, ExploreConfig, Explorer};
use shg_core::perf::{saturation_sweep, simulate as run_simulation, PerfReport, SimResult};
use shg_core::pipeline::{predict as run_pipeline, Prediction};
use shg_core::routing::{DetailedRouteOptions, RoutabilityMetrics};
use shg_core::topology::{LinkKind, Tile};
use shg_core::{GridDims, RouterConfig, SimControl, Topology, TopologySpec, TrafficSpec};

use crate::exit::InputError;
use crate::input::{fit_arch, load_arch, load_topology};
use crate::manifest::{self, Recorder};
use crate::{ExploreArgs, Family, Format, GenerateArgs, PredictArgs, RouterArgs, SimulateArgs, WindowArgs};

fn to_json<T: Serialize + ?Sized>(doc: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(doc)? + "\n")
}

fn emit(
    text: &str,
    out: Option<&Path>,
    rec: Recorder,
    seed: Option<u64>,
    parameters: serde_json::Value,
) -> Result<()> {
    match out {
        None => print!("{text}"),
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            let m = rec.finish(seed, parameters, vec![path.to_path_buf()]);
            manifest::write(&m, path)?;
        }
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn key_value_table(rows: &[(&str, String)]) -> String {
    let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    rows.iter().map(|(k, v)| format!("{k:<w$}  {v}\n")).collect()
}

pub fn spec_from_flags(family: Family, sr: &[u32], sc: &[u32]) -> Result<TopologySpec, InputError> {
    if family != Family::Shg {
        if !sr.is_empty() {
            return Err(InputError::new("sr".to_string(), "skip distances apply to --topo shg only"));
        }
        if !sc.is_empty() {
            return Err(InputError::new("sc".to_string(), "skip distances apply to --topo shg only"));
        }
    }
    Ok(match family {
        Family::Ring => TopologySpec::Ring,
        Family::Mesh => TopologySpec::Mesh2D,
        Family::Torus => TopologySpec::Torus2D,
        Family::FoldedTorus => TopologySpec::FoldedTorus2D,
        Family::Hypercube => TopologySpec::Hypercube,
        Family::Fb => TopologySpec::FlattenedButterfly,
        Family::Shg => TopologySpec::sparse_hamming(sr.iter().copied(), sc.iter().copied()),
    })
}

pub fn generate(a: &GenerateArgs) -> Result<()> {
    let rec = Recorder::new("generate");
    let spec = spec_from_flags(a.topo, &a.sr, &a.sc)?;
    let dims = GridDims::new(a.rows, a.cols)?;
    let t = Topology::generate(&spec, dims)?;
    emit(&to_json(&t)?, a.out.as_deref(), rec, None, json!({ "spec": spec, "dims": dims }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub a: Tile,
    pub b: Tile,
    pub kind: LinkKind,
    pub length_mm: f64,
    pub latency_cycles: u32,
    pub collisions: u32,
}

/// Cost of one topology with per-link detail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    pub topology: String,
    pub spec: TopologySpec,
    pub dims: GridDims,
    pub cost: CostReport,
    pub routability: RoutabilityMetrics,
    pub links: Vec<LinkReport>,
}

impl PredictReport {
    pub fn from_prediction(p: &Prediction) -> Self {
        let t = p.topology();
        PredictReport {
            topology: t.name(),
            spec: t.spec.clone(),
            dims: t.dims,
            cost: p.cost.clone(),
            routability: p.metrics,
            links: p
                .routes
                .iter()
                .map(|r| {
                    let l = &t.links[r.link];
                    LinkReport {
                        a: l.a,
                        b: l.b,
                        kind: l.kind,
                        length_mm: r.length_mm,
                        latency_cycles: p.cost.link_latencies[r.link],
                        collisions: r.collisions,
                    }
                })
                .collect(),
        }
    }
}

fn predict_csv(reports: &[PredictReport]) -> String {
    let mut out = String::from(
        "topology,links,area_total_mm2,area_nonoc_mm2,area_overhead,p_tot_w,p_noc_w,max_link_latency,mean_link_latency,total_collisions\n",
    );
    for r in reports {
        let lat = &r.cost.link_latencies;
        let max = lat.iter().max().copied().unwrap_or(0);
        let mean = lat.iter().map(|&l| l as f64).sum::<f64>() / lat.len().max(1) as f64;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.topology),
            r.links.len(),
            r.cost.a_tot_mm2,
            r.cost.a_nonoc_mm2,
            r.cost.area_overhead,
            r.cost.p_tot_w,
            r.cost.p_noc_w,
            max,
            mean,
            r.routability.total_collisions
        );
    }
    out
}

/// One document for a single input, an array for a batch.
fn single_or_batch<T: Serialize>(docs: &[T]) -> Result<String> {
    match docs {
        [one] => to_json(one),
        many => to_json(many),
    }
}

pub fn predict(a: &PredictArgs) -> Result<()> {
    let mut rec = Recorder::new("predict");
    if a.full && a.format != Format::Json {
        return Err(InputError::new("full".to_string(), "--full is only available with --format json").into());
    }
    let arch = load_arch(&a.arch, &mut rec)?;
    let opts = DetailedRouteOptions::default();
    let mut predictions = Vec::new();
    for path in &a.topology {
        let t = load_topology(path, &mut rec)?;
        let p = run_pipeline(&t, &fit_arch(&arch, t.n_tiles()), &opts)
            .with_context(|| format!("predicting {}", path.display()))?;
        predictions.push(p);
    }
    let reports: Vec<PredictReport> = predictions.iter().map(PredictReport::from_prediction).collect();
    let text = match a.format {
        Format::Json if a.full => single_or_batch(&predictions)?,
        Format::Json => single_or_batch(&reports)?,
        Format::Csv => predict_csv(&reports),
        Format::Table => reports
            .iter()
            .map(|r| format!("{}\n{}", r.topology, r.cost.to_table()))
            .collect::<Vec<_>>()
            .join("\n"),
    };
    emit(&text, a.out.as_deref(), rec, None, json!({ "routing": opts, "full": a.full }))
}

fn router_config(r: &RouterArgs) -> RouterConfig {
    RouterConfig {
        vcs: r.vcs,
        buffer_depth: r.buffer,
        router_delay: r.router_delay,
        ..RouterConfig::default()
    }
}

fn sim_control(w: &WindowArgs) -> SimControl {
    SimControl {
        warmup_cycles: w.warmup,
        measure_cycles: w.measure,
        drain_cycles: w.drain,
        curve_points: w.points,
        ..SimControl::default()
    }
}

fn traffic(r: &RouterArgs, load: Option<f64>) -> TrafficSpec {
    let base = TrafficSpec::default();
    TrafficSpec {
        injection_rate: load.unwrap_or(base.injection_rate),
        packet_length: r.packet_length,
        seed: r.seed,
        ..base
    }
}

fn sim_result_csv(r: &SimResult) -> String {
    format!(
        "offered_load,avg_latency,accepted_throughput,measured_packets,unfinished_packets,mean_hops\n{},{},{},{},{},{}\n",
        r.offered_load, r.avg_latency, r.accepted_throughput, r.measured_packets, r.unfinished_packets, r.mean_hops
    )
}

fn perf_table(r: &PerfReport) -> String {
    let mut out = key_value_table(&[
        ("Zero-load latency [cycles]", format!("{:.3}", r.zero_load_latency_cycles)),
        ("Saturation throughput [flits/cycle/tile]", format!("{:.4}", r.saturation_throughput)),
        ("Saturation load [flits/cycle/tile]", format!("{:.4}", r.saturation_load)),
        ("Channel-load bound [flits/cycle/tile]", format!("{:.4}", r.analytic_bound)),
    ]);
    out.push_str("\noffered  latency  accepted\n");
    for p in &r.curve {
        let _ = writeln!(out, "{:7.4}  {:7.2}  {:8.4}", p.offered_load, p.avg_latency, p.accepted_throughput);
    }
    out
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut rec = Recorder::new("simulate");
    let arch = load_arch(&a.arch, &mut rec)?;
    let t = load_topology(&a.topology, &mut rec)?;
    let rc = router_config(&a.router);
    let ctl = sim_control(&a.window);
    let traffic = traffic(&a.router, a.load);
    rc.validate()?;
    ctl.validate()?;
    traffic.validate()?;
    let p = run_pipeline(&t, &fit_arch(&arch, t.n_tiles()), &DetailedRouteOptions::default())?;
    let lat = &p.cost.link_latencies;
    let text = match a.load {
        Some(_) => {
            let r = run_simulation(p.topology(), lat, &rc, &traffic, &ctl)?;
            match a.format {
                Format::Json => to_json(&r)?,
                Format::Csv => sim_result_csv(&r),
                Format::Table => key_value_table(&[
                    ("Offered load [flits/cycle/tile]", format!("{:.4}", r.offered_load)),
                    ("Mean latency [cycles]", format!("{:.3}", r.avg_latency)),
                    ("Accepted throughput [flits/cycle/tile]", format!("{:.4}", r.accepted_throughput)),
                    ("Measured packets", r.measured_packets.to_string()),
                    ("Unfinished packets", r.unfinished_packets.to_string()),
                    ("Mean hops", format!("{:.3}", r.mean_hops)),
                ]),
            }
        }
        None => {
            let r = saturation_sweep(p.topology(), lat, &rc, &traffic, &ctl)?;
            match a.format {
                Format::Json => to_json(&r)?,
                Format::Csv => r.curve_csv(),
                Format::Table => perf_table(&r),
            }
        }
    };
    let params = json!({ "router": rc, "traffic": traffic, "control": ctl, "load": a.load });
    emit(&text, a.out.as_deref(), rec, Some(traffic.seed), params)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub config_hash: String,
    pub dims: GridDims,
    pub budget: f64,
    pub evaluator: Evaluator,
    /// Best feasible candidate; an infeasible mesh when nothing fits.
    pub best: Option<Candidate>,
    /// The winner scored by the simulator, when requested.
    pub rescored: Option<Candidate>,
    pub trace: Vec<Candidate>,
    pub front: Vec<Candidate>,
}

fn candidate_line(c: &Candidate) -> String {
    match (c.area_overhead(), c.objective()) {
        (Some(ovh), Some((thr, lat))) => format!(
            "{:<32} overhead {:6.2}%  throughput {:.4}  latency {:.3}{}",
            c.spec.to_string(),
            ovh * 100.0,
            thr,
            lat,
            if c.feasible { "" } else { "  (over budget)" }
        ),
        _ => format!("{:<32} failed: {}", c.spec.to_string(), c.error.as_deref().unwrap_or("")),
    }
}

fn explore_table(r: &ExploreReport) -> String {
    let mut out = format!("{} candidates on {}, budget {:.2}%\n", r.trace.len(), r.dims, r.budget * 100.0);
    match &r.best {
        Some(b) => {
            let _ = writeln!(out, "best      {}", candidate_line(b));
        }
        None => out.push_str("best      none feasible\n"),
    }
    if let Some(c) = &r.rescored {
        let _ = writeln!(out, "simulated {}", candidate_line(c));
    }
    out.push_str("\nPareto front\n");
    for c in &r.front {
        let _ = writeln!(out, "  {}", candidate_line(c));
    }
    out
}

pub fn explore(a: &ExploreArgs) -> Result<()> {
    let mut rec = Recorder::new("explore");
    let dims = GridDims::new(a.rows, a.cols)?;
    let arch = fit_arch(&load_arch(&a.arch, &mut rec)?, dims.n_tiles());
    let mut cfg = ExploreConfig::new(dims, arch);
    cfg.budget = a.budget;
    cfg.evaluator = a.evaluator.into();
    cfg.rc = router_config(&a.router);
    cfg.traffic = traffic(&a.router, None);
    cfg.sim = sim_control(&a.window);
    let explorer = Explorer::new(cfg)?;
    let (best, trace) = if a.exhaustive {
        let all = explorer.exhaustive()?;
        (best_feasible(&all).cloned(), all)
    } else {
        let climb = explorer.hill_climb()?;
        (Some(climb.best), climb.trace)
    };
    let rescored = match (&best, a.rescore) {
        (Some(b), true) => Some(explorer.rescore_simulated(&b.spec)),
        _ => None,
    };
    let report = ExploreReport {
        config_hash: explorer.config().hash(),
        dims,
        budget: a.budget,
        evaluator: explorer.config().evaluator,
        front: pareto_front(&trace),
        best,
        rescored,
        trace,
    };
    let text = match a.format {
        Format::Json => to_json(&report)?,
        Format::Csv => candidates_csv(&report.trace),
        Format::Table => explore_table(&report),
    };
    let cfg = explorer.config();
    let params = json!({
        "dims": dims,
        "budget": cfg.budget,
        "evaluator": cfg.evaluator,
        "exhaustive": a.exhaustive,
        "rescore": a.rescore,
        "router": cfg.rc,
        "traffic": cfg.traffic,
        "control": cfg.sim,
    });
    emit(&text, a.out.as_deref(), rec, Some(cfg.traffic.seed), params)
}

