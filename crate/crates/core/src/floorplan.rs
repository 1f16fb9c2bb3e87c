//! Tile sizing, channel spacing and discretization of the chip into
//! unit-cells.
//!
//! The chip is laid out as alternating gaps and tiles in both directions:
//! `gap 0, tile 0, gap 1, tile 1, ..., tile N-1, gap N`. Gap `g` of the row
//! direction lies directly above tile row `g`; gap `j` of the column
//! direction lies directly left of tile column `j`.

use serde::{Deserialize, Serialize};

use crate::arch::{ArchParams, Direction};
use crate::error::{Error, Result};
use crate::topology::{GridDims, Tile, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Floorplan {
    pub dims: GridDims,
    pub tile_height_mm: f64,
    pub tile_width_mm: f64,
    /// `R + 1` spacings; entry `g` lies above tile row `g`. Empty until
    /// [`compute_spacings`] runs.
    pub row_gaps_mm: Vec<f64>,
    /// `C + 1` spacings; entry `j` lies left of tile column `j`.
    pub col_gaps_mm: Vec<f64>,
    pub tile_area_ge: f64,
    pub router_area_ge: f64,
    /// Ports per router side (manager = subordinate) used for sizing.
    pub router_ports: u32,
}

/// Maximum number of parallel links in each gap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelLoads {
    /// `R + 1` entries, horizontal gaps between rows of tiles.
    pub row_gaps: Vec<u32>,
    /// `C + 1` entries, vertical gaps between columns of tiles.
    pub col_gaps: Vec<u32>,
}

impl ChannelLoads {
    pub fn uniform(dims: GridDims, interior: u32) -> Self {
        let mk = |n: u32| {
            (0..=n)
                .map(|g| if g == 0 || g == n { 0 } else { interior })
                .collect()
        };
        ChannelLoads {
            row_gaps: mk(dims.rows),
            col_gaps: mk(dims.cols),
        }
    }
}

/// Sizes every tile for the largest router of the topology.
pub fn size_tiles(arch: &ArchParams, t: &Topology) -> Result<Floorplan> {
    // one extra port pair connects the tile's endpoints to its router
    let ports = t.max_radix() + 1;
    let router_area_ge = arch.router_area(ports, ports, arch.link_bandwidth)?;
    let tile_area_ge = arch.endpoint_area_ge + router_area_ge;
    let area_mm2 = arch.ge_to_mm2(tile_area_ge);
    let tile_height_mm = (arch.tile_aspect_ratio * area_mm2).sqrt();
    let tile_width_mm = (area_mm2 / arch.tile_aspect_ratio).sqrt();
    if !(tile_height_mm.is_finite() && tile_width_mm.is_finite())
        || tile_height_mm <= 0.0
        || tile_width_mm <= 0.0
    {
        return Err(Error::Pipeline(format!(
            "tile size is not finite and positive ({tile_height_mm} x {tile_width_mm} mm)"
        )));
    }
    Ok(Floorplan {
        dims: t.dims,
        tile_height_mm,
        tile_width_mm,
        row_gaps_mm: Vec::new(),
        col_gaps_mm: Vec::new(),
        tile_area_ge,
        router_area_ge,
        router_ports: ports,
    })
}

/// Sets every gap wide enough for its parallel link count.
pub fn compute_spacings(
    fp: &Floorplan,
    loads: &ChannelLoads,
    arch: &ArchParams,
) -> Result<Floorplan> {
    let (r, c) = (fp.dims.rows as usize, fp.dims.cols as usize);
    if loads.row_gaps.len() != r + 1 || loads.col_gaps.len() != c + 1 {
        return Err(Error::Pipeline(format!(
            "channel loads sized {}x{} do not match a {} grid",
            loads.row_gaps.len(),
            loads.col_gaps.len(),
            fp.dims
        )));
    }
    let wires = arch.link_wires();
    let spacing = |dir, n: u32| arch.wires_to_mm(dir, n as u64 * wires);
    Ok(Floorplan {
        row_gaps_mm: loads
            .row_gaps
            .iter()
            .map(|&n| spacing(Direction::Horizontal, n))
            .collect(),
        col_gaps_mm: loads
            .col_gaps
            .iter()
            .map(|&n| spacing(Direction::Vertical, n))
            .collect(),
        ..fp.clone()
    })
}

/// Number of cells covering `len`, tolerant to floating point noise so that
/// a length of exactly `k` cells maps to `k`.
pub(crate) fn cells_for(len: f64, cell: f64) -> u32 {
    let x = len / cell;
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.max(1.0) {
        r as u32
    } else {
        x.ceil() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Tile,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub occupancy: Occupancy,
    pub h_wire_count: u16,
    pub v_wire_count: u16,
}

impl Cell {
    const FREE: Cell = Cell {
        occupancy: Occupancy::Free,
        h_wire_count: 0,
        v_wire_count: 0,
    };
    const TILE: Cell = Cell {
        occupancy: Occupancy::Tile,
        h_wire_count: 0,
        v_wire_count: 0,
    };

    pub fn is_tile(&self) -> bool {
        self.occupancy == Occupancy::Tile
    }

    pub fn wires(&self, dir: Direction) -> u16 {
        match dir {
            Direction::Horizontal => self.h_wire_count,
            Direction::Vertical => self.v_wire_count,
        }
    }

    pub(crate) fn wires_mut(&mut self, dir: Direction) -> &mut u16 {
        match dir {
            Direction::Horizontal => &mut self.h_wire_count,
            Direction::Vertical => &mut self.v_wire_count,
        }
    }
}

/// The chip as a dense grid of identical unit-cells, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitCellGrid {
    pub dims: GridDims,
    pub cell_height_mm: f64,
    pub cell_width_mm: f64,
    pub n_rows: u32,
    pub n_cols: u32,
    /// Cell rows spanned by one tile.
    pub tile_rows: u32,
    /// Cell columns spanned by one tile.
    pub tile_cols: u32,
    pub row_gap_cells: Vec<u32>,
    pub col_gap_cells: Vec<u32>,
    #[serde(with = "rle")]
    pub cells: Vec<Cell>,
}

/// Half-open range of cell indices along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: u32,
    pub len: u32,
}

impl Span {
    pub fn end(&self) -> u32 {
        self.start + self.len
    }

    pub fn contains(&self, x: u32) -> bool {
        x >= self.start && x < self.end()
    }
}

fn layout(gaps: &[u32], tile: u32, index: usize) -> (Span, Span) {
    let before: u32 = gaps[..=index].iter().sum::<u32>() + tile * index as u32;
    let gap = Span {
        start: before - gaps[index],
        len: gaps[index],
    };
    (
        gap,
        Span {
            start: before,
            len: tile,
        },
    )
}

impl UnitCellGrid {
    pub fn cell_area_mm2(&self) -> f64 {
        self.cell_height_mm * self.cell_width_mm
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn index(&self, row: u32, col: u32) -> usize {
        (row * self.n_cols + col) as usize
    }

    pub fn cell(&self, row: u32, col: u32) -> &Cell {
        &self.cells[self.index(row, col)]
    }

    /// Cell rows of tile row `r`.
    pub fn tile_row_span(&self, r: u32) -> Span {
        layout(&self.row_gap_cells, self.tile_rows, r as usize).1
    }

    pub fn tile_col_span(&self, c: u32) -> Span {
        layout(&self.col_gap_cells, self.tile_cols, c as usize).1
    }

    /// Cell rows of horizontal gap `g` (above tile row `g`).
    pub fn row_gap_span(&self, g: u32) -> Span {
        let gi = g as usize;
        if gi == self.dims.rows as usize {
            Span {
                start: self.n_rows - self.row_gap_cells[gi],
                len: self.row_gap_cells[gi],
            }
        } else {
            layout(&self.row_gap_cells, self.tile_rows, gi).0
        }
    }

    pub fn col_gap_span(&self, g: u32) -> Span {
        let gi = g as usize;
        if gi == self.dims.cols as usize {
            Span {
                start: self.n_cols - self.col_gap_cells[gi],
                len: self.col_gap_cells[gi],
            }
        } else {
            layout(&self.col_gap_cells, self.tile_cols, gi).0
        }
    }

    /// `(row span, col span)` of a tile block.
    pub fn tile_block(&self, t: Tile) -> (Span, Span) {
        (self.tile_row_span(t.row), self.tile_col_span(t.col))
    }

    /// Horizontal gap containing cell row `row`, if any.
    pub fn row_gap_of(&self, row: u32) -> Option<u32> {
        (0..=self.dims.rows).find(|&g| self.row_gap_span(g).contains(row))
    }

    pub fn col_gap_of(&self, col: u32) -> Option<u32> {
        (0..=self.dims.cols).find(|&g| self.col_gap_span(g).contains(col))
    }

    pub fn height_mm(&self) -> f64 {
        self.n_rows as f64 * self.cell_height_mm
    }

    pub fn width_mm(&self) -> f64 {
        self.n_cols as f64 * self.cell_width_mm
    }

    /// Copy with every wire count reset to zero.
    pub fn cleared(&self) -> Self {
        let mut g = self.clone();
        for c in &mut g.cells {
            c.h_wire_count = 0;
            c.v_wire_count = 0;
        }
        g
    }
}

/// Discretizes a spaced floorplan into unit-cells sized for one link in
/// each direction.
pub fn discretize(fp: &Floorplan, arch: &ArchParams) -> Result<UnitCellGrid> {
    let (r, c) = (fp.dims.rows as usize, fp.dims.cols as usize);
    if fp.row_gaps_mm.len() != r + 1 || fp.col_gaps_mm.len() != c + 1 {
        return Err(Error::Pipeline("floorplan spacings are not set".into()));
    }
    let wires = arch.link_wires();
    let cell_height_mm = arch.wires_to_mm(Direction::Horizontal, wires);
    let cell_width_mm = arch.wires_to_mm(Direction::Vertical, wires);
    if !(cell_height_mm > 0.0 && cell_width_mm > 0.0)
        || !cell_height_mm.is_finite()
        || !cell_width_mm.is_finite()
    {
        return Err(Error::Pipeline("degenerate unit-cell size".into()));
    }
    let tile_rows = cells_for(fp.tile_height_mm, cell_height_mm).max(1);
    let tile_cols = cells_for(fp.tile_width_mm, cell_width_mm).max(1);
    let row_gap_cells: Vec<u32> = fp
        .row_gaps_mm
        .iter()
        .map(|&g| cells_for(g, cell_height_mm))
        .collect();
    let col_gap_cells: Vec<u32> = fp
        .col_gaps_mm
        .iter()
        .map(|&g| cells_for(g, cell_width_mm))
        .collect();
    let n_rows = row_gap_cells.iter().sum::<u32>() + tile_rows * fp.dims.rows;
    let n_cols = col_gap_cells.iter().sum::<u32>() + tile_cols * fp.dims.cols;
    let n_cells = n_rows as u64 * n_cols as u64;
    if n_cells > 200_000_000 {
        return Err(Error::Pipeline(format!(
            "unit-cell grid of {n_rows}x{n_cols} cells is too large"
        )));
    }
    let mut grid = UnitCellGrid {
        dims: fp.dims,
        cell_height_mm,
        cell_width_mm,
        n_rows,
        n_cols,
        tile_rows,
        tile_cols,
        row_gap_cells,
        col_gap_cells,
        cells: vec![Cell::FREE; n_cells as usize],
    };
    let tile_row_spans: Vec<Span> = (0..fp.dims.rows).map(|r| grid.tile_row_span(r)).collect();
    let tile_col_spans: Vec<Span> = (0..fp.dims.cols).map(|c| grid.tile_col_span(c)).collect();
    for rs in &tile_row_spans {
        for row in rs.start..rs.end() {
            for cs in &tile_col_spans {
                let base = grid.index(row, cs.start);
                grid.cells[base..base + cs.len as usize].fill(Cell::TILE);
            }
        }
    }
    Ok(grid)
}

/// Run-length encoding of the dense cell array for JSON documents.
mod rle {
    use super::Cell;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Run {
        count: u32,
        #[serde(flatten)]
        cell: Cell,
    }

    pub fn serialize<S: Serializer>(cells: &[Cell], s: S) -> Result<S::Ok, S::Error> {
        let mut runs: Vec<Run> = Vec::new();
        for &cell in cells {
            match runs.last_mut() {
                Some(run) if run.cell == cell => run.count += 1,
                _ => runs.push(Run { count: 1, cell }),
            }
        }
        runs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Cell>, D::Error> {
        let runs = Vec::<Run>::deserialize(d)?;
        let mut cells = Vec::new();
        for run in runs {
            cells.extend(std::iter::repeat(run.cell).take(run.count as usize));
        }
        Ok(cells)
    }
}
