//! Area, power and link latency estimates from a routed unit-cell grid.

use serde::{Deserialize, Serialize};

use crate::arch::ArchParams;
use crate::floorplan::UnitCellGrid;
use crate::routing::RoutedLink;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub n_cell: u64,
    /// Cells covered by tiles.
    pub n_logic: u64,
    /// Cells carrying a horizontal wire.
    pub n_hwire: u64,
    pub n_vwire: u64,
}

impl CellCounts {
    pub fn of(grid: &UnitCellGrid) -> Self {
        let mut c = CellCounts {
            n_cell: grid.cells.len() as u64,
            n_logic: 0,
            n_hwire: 0,
            n_vwire: 0,
        };
        for cell in &grid.cells {
            c.n_logic += cell.is_tile() as u64;
            c.n_hwire += (cell.h_wire_count > 0) as u64;
            c.n_vwire += (cell.v_wire_count > 0) as u64;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AreaEstimate {
    pub a_tot_mm2: f64,
    pub a_nonoc_mm2: f64,
    pub area_overhead: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate {
    pub p_tot_w: f64,
    pub p_nonoc_w: f64,
    /// Clamped at zero; see `p_noc_clamped`.
    pub p_noc_w: f64,
    /// Set when the raw difference was negative, which happens when the
    /// quantized logic area falls below the analytic endpoint area.
    pub p_noc_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub a_tot_mm2: f64,
    pub a_nonoc_mm2: f64,
    pub area_overhead: f64,
    pub p_tot_w: f64,
    pub p_nonoc_w: f64,
    pub p_noc_w: f64,
    pub p_noc_clamped: bool,
    /// Cycles per link, in link order.
    pub link_latencies: Vec<u32>,
    pub cell_counts: CellCounts,
}

/// Chip area of the grid against the bare endpoint area.
pub fn area_estimate(grid: &UnitCellGrid, arch: &ArchParams) -> AreaEstimate {
    let a_tot_mm2 = grid.cells.len() as f64 * grid.cell_area_mm2();
    let a_nonoc_mm2 = arch.ge_to_mm2(arch.n_tiles as f64 * arch.endpoint_area_ge);
    assert!(
        a_nonoc_mm2 <= a_tot_mm2 * (1.0 + 1e-9),
        "endpoint area {a_nonoc_mm2} mm2 exceeds chip area {a_tot_mm2} mm2"
    );
    AreaEstimate {
        a_tot_mm2,
        a_nonoc_mm2,
        area_overhead: ((a_tot_mm2 - a_nonoc_mm2) / a_tot_mm2).max(0.0),
    }
}

pub fn power_estimate(grid: &UnitCellGrid, arch: &ArchParams) -> PowerEstimate {
    let counts = CellCounts::of(grid);
    let a_c = grid.cell_area_mm2();
    let p_tot_w = arch.logic_power_w(counts.n_logic as f64 * a_c)
        + arch.wire_power_w((counts.n_hwire + counts.n_vwire) as f64 * a_c / 2.0);
    let p_nonoc_w =
        arch.logic_power_w(arch.ge_to_mm2(arch.n_tiles as f64 * arch.endpoint_area_ge));
    let raw = p_tot_w - p_nonoc_w;
    if raw < 0.0 {
        log::warn!("network power {raw} W is negative; quantized logic area is below the endpoint area, clamping to 0");
    }
    PowerEstimate {
        p_tot_w,
        p_nonoc_w,
        p_noc_w: raw.max(0.0),
        p_noc_clamped: raw < 0.0,
    }
}

/// Cycles to cross the routed wire, at least one.
pub fn link_latency(route: &RoutedLink, grid: &UnitCellGrid, arch: &ArchParams) -> u32 {
    let (h, v) = route.cell_counts();
    let length_mm = h as f64 * grid.cell_width_mm + v as f64 * grid.cell_height_mm;
    latency_cycles(length_mm, arch)
}

pub fn latency_cycles(length_mm: f64, arch: &ArchParams) -> u32 {
    let cycles = arch.wire_delay_s(length_mm) * arch.frequency_hz;
    // guard against 2.0000000001 from float noise
    (cycles - 1e-9).ceil().max(1.0) as u32
}

pub fn cost_report(grid: &UnitCellGrid, routes: &[RoutedLink], arch: &ArchParams) -> CostReport {
    let area = area_estimate(grid, arch);
    let power = power_estimate(grid, arch);
    CostReport {
        a_tot_mm2: area.a_tot_mm2,
        a_nonoc_mm2: area.a_nonoc_mm2,
        area_overhead: area.area_overhead,
        p_tot_w: power.p_tot_w,
        p_nonoc_w: power.p_nonoc_w,
        p_noc_w: power.p_noc_w,
        p_noc_clamped: power.p_noc_clamped,
        link_latencies: routes.iter().map(|r| link_latency(r, grid, arch)).collect(),
        cell_counts: CellCounts::of(grid),
    }
}

impl CostReport {
    /// Plain-text table: one metric per row.
    pub fn to_table(&self) -> String {
        let max_lat = self.link_latencies.iter().max().copied().unwrap_or(0);
        let mean_lat = if self.link_latencies.is_empty() {
            0.0
        } else {
            self.link_latencies.iter().map(|&l| l as f64).sum::<f64>()
                / self.link_latencies.len() as f64
        };
        let rows = [
            ("Area total [mm2]", format!("{:.4}", self.a_tot_mm2)),
            ("Area endpoints [mm2]", format!("{:.4}", self.a_nonoc_mm2)),
            ("Area overhead [%]", format!("{:.2}", self.area_overhead * 100.0)),
            ("Power total [W]", format!("{:.4}", self.p_tot_w)),
            ("Power NoC [W]", format!("{:.4}", self.p_noc_w)),
            ("Link latency max [cycles]", max_lat.to_string()),
            ("Link latency mean [cycles]", format!("{mean_lat:.3}")),
        ];
        let w = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<w$}  {v}\n"))
            .collect()
    }
}
