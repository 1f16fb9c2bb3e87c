//! The full cost pipeline from a topology to a routed floorplan and its
//! cost report.

use serde::{Deserialize, Serialize};

use crate::arch::ArchParams;
use crate::cost::{cost_report, CostReport};
use crate::error::Result;
use crate::floorplan::{compute_spacings, discretize, size_tiles, Floorplan, UnitCellGrid};
use crate::routing::{
    detailed_route, global_route, routability_metrics, DetailedRouteOptions, GlobalRoute,
    RoutabilityMetrics, RoutedLink,
};
use crate::topology::Topology;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub global: GlobalRoute,
    pub floorplan: Floorplan,
    pub grid: UnitCellGrid,
    pub routes: Vec<RoutedLink>,
    pub metrics: RoutabilityMetrics,
    pub cost: CostReport,
}

impl Prediction {
    /// Topology with ports as routed.
    pub fn topology(&self) -> &Topology {
        &self.global.topology
    }
}

pub fn predict(t: &Topology, arch: &ArchParams, opts: &DetailedRouteOptions) -> Result<Prediction> {
    arch.validate()?;
    let global = global_route(t)?;
    let fp = size_tiles(arch, &global.topology)?;
    let floorplan = compute_spacings(&fp, &global.loads, arch)?;
    let mut grid = discretize(&floorplan, arch)?;
    let routes = detailed_route(&global, &mut grid, opts)?;
    let metrics = routability_metrics(&routes, &grid);
    let cost = cost_report(&grid, &routes, arch);
    Ok(Prediction {
        global,
        floorplan,
        grid,
        routes,
        metrics,
        cost,
    })
}
