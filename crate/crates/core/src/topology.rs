//! Tile-link graphs for the sparse Hamming graph family and the reference
//! topologies it is compared against.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridDims {
    pub rows: u32,
    pub cols: u32,
}

impl GridDims {
    pub fn new(rows: u32, cols: u32) -> Result<Self> {
        let dims = GridDims { rows, cols };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows < 2 {
            return Err(Error::param("rows", "at least two rows of tiles are required"));
        }
        if self.cols < 2 {
            return Err(Error::param("cols", "at least two columns of tiles are required"));
        }
        Ok(())
    }

    pub fn n_tiles(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    pub fn tile_id(&self, t: Tile) -> usize {
        (t.row * self.cols + t.col) as usize
    }

    pub fn tile(&self, id: usize) -> Tile {
        Tile {
            row: id as u32 / self.cols,
            col: id as u32 % self.cols,
        }
    }

    pub fn tiles(&self) -> impl Iterator<Item = Tile> + '_ {
        (0..self.n_tiles()).map(move |id| self.tile(id))
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

/// Tile position; row 0 is the top row, column 0 the leftmost column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Tile {
    pub row: u32,
    pub col: u32,
}

impl Tile {
    pub fn new(row: u32, col: u32) -> Self {
        Tile { row, col }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TopologySpec {
    Ring,
    #[serde(rename = "mesh2d")]
    Mesh2D,
    #[serde(rename = "torus2d")]
    Torus2D,
    #[serde(rename = "folded_torus2d")]
    FoldedTorus2D,
    Hypercube,
    FlattenedButterfly,
    SparseHamming {
        /// Row skip distances; each must lie in `2..cols`.
        s_r: BTreeSet<u32>,
        /// Column skip distances; each must lie in `2..rows`.
        s_c: BTreeSet<u32>,
    },
}

impl TopologySpec {
    pub fn sparse_hamming(
        s_r: impl IntoIterator<Item = u32>,
        s_c: impl IntoIterator<Item = u32>,
    ) -> Self {
        TopologySpec::SparseHamming {
            s_r: s_r.into_iter().collect(),
            s_c: s_c.into_iter().collect(),
        }
    }

    /// The sparse Hamming graph with every admissible skip distance.
    pub fn full_sparse_hamming(dims: GridDims) -> Self {
        Self::sparse_hamming(2..dims.cols, 2..dims.rows)
    }

    pub fn validate(&self, dims: GridDims) -> Result<()> {
        dims.validate()?;
        match self {
            TopologySpec::Hypercube => {
                if !dims.rows.is_power_of_two() || !dims.cols.is_power_of_two() {
                    return Err(Error::param("dims", "R and C must be powers of two"));
                }
            }
            TopologySpec::SparseHamming { s_r, s_c } => {
                if let Some(x) = s_r.iter().find(|&&x| x < 2 || x >= dims.cols) {
                    return Err(Error::param(
                        "s_r",
                        format!("row skip {x} outside 2..{} (columns = {})", dims.cols, dims.cols),
                    ));
                }
                if let Some(x) = s_c.iter().find(|&&x| x < 2 || x >= dims.rows) {
                    return Err(Error::param(
                        "s_c",
                        format!("column skip {x} outside 2..{} (rows = {})", dims.rows, dims.rows),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn short_name(&self) -> String {
        match self {
            TopologySpec::Ring => "ring".into(),
            TopologySpec::Mesh2D => "mesh".into(),
            TopologySpec::Torus2D => "torus".into(),
            TopologySpec::FoldedTorus2D => "folded-torus".into(),
            TopologySpec::Hypercube => "hypercube".into(),
            TopologySpec::FlattenedButterfly => "flattened-butterfly".into(),
            TopologySpec::SparseHamming { s_r, s_c } => {
                let join = |s: &BTreeSet<u32>| {
                    s.iter().map(u32::to_string).collect::<Vec<_>>().join(",")
                };
                format!("shg(sr={{{}}},sc={{{}}})", join(s_r), join(s_c))
            }
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.short_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Mesh,
    RowSkip(u32),
    ColSkip(u32),
    Wraparound,
    HypercubeDim(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Face {
    North,
    East,
    South,
    West,
}

impl Face {
    /// Faces whose ports are laid out left to right.
    pub fn is_horizontal(self) -> bool {
        matches!(self, Face::North | Face::South)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Port {
    pub face: Face,
    /// Slot along the face, counted from the west (north) corner.
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Both endpoints in the same row.
    Row,
    /// Both endpoints in the same column.
    Column,
    Diagonal,
}

/// Undirected link; `a` is always lexicographically smaller than `b`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub a: Tile,
    pub b: Tile,
    pub kind: LinkKind,
    pub port_a: Option<Port>,
    pub port_b: Option<Port>,
}

impl Link {
    fn new(x: Tile, y: Tile, kind: LinkKind) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Link {
            a,
            b,
            kind,
            port_a: None,
            port_b: None,
        }
    }

    pub fn orientation(&self) -> Orientation {
        if self.a.row == self.b.row {
            Orientation::Row
        } else if self.a.col == self.b.col {
            Orientation::Column
        } else {
            Orientation::Diagonal
        }
    }

    /// Manhattan distance between the two tiles, in tiles.
    pub fn span(&self) -> u32 {
        self.a.row.abs_diff(self.b.row) + self.a.col.abs_diff(self.b.col)
    }

    /// Links between neighbouring tiles cross a single gap and never run
    /// along a channel.
    pub fn is_adjacent(&self) -> bool {
        self.span() == 1
    }

    pub fn endpoint(&self, end: End) -> Tile {
        match end {
            End::A => self.a,
            End::B => self.b,
        }
    }

    pub fn port(&self, end: End) -> Option<Port> {
        match end {
            End::A => self.port_a,
            End::B => self.port_b,
        }
    }

    fn key(&self) -> (Tile, Tile, LinkKind) {
        (self.a, self.b, self.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum End {
    A,
    B,
}

impl End {
    pub fn other(self) -> End {
        match self {
            End::A => End::B,
            End::B => End::A,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub spec: TopologySpec,
    pub dims: GridDims,
    pub links: Vec<Link>,
}

fn mesh_links(dims: GridDims, out: &mut Vec<Link>) {
    for t in dims.tiles() {
        if t.col + 1 < dims.cols {
            out.push(Link::new(t, Tile::new(t.row, t.col + 1), LinkKind::Mesh));
        }
        if t.row + 1 < dims.rows {
            out.push(Link::new(t, Tile::new(t.row + 1, t.col), LinkKind::Mesh));
        }
    }
}

fn row_link(row: u32, c0: u32, c1: u32, kind: LinkKind) -> Link {
    Link::new(Tile::new(row, c0), Tile::new(row, c1), kind)
}

fn col_link(col: u32, r0: u32, r1: u32, kind: LinkKind) -> Link {
    Link::new(Tile::new(r0, col), Tile::new(r1, col), kind)
}

/// Kind of an aligned link of the given span, as produced by the row/column
/// skip construction.
fn skip_kind(span: u32, row: bool) -> LinkKind {
    match (span, row) {
        (1, _) => LinkKind::Mesh,
        (x, true) => LinkKind::RowSkip(x),
        (x, false) => LinkKind::ColSkip(x),
    }
}

/// Tile order of the ring: a serpentine walk closed by one returning link.
pub fn ring_order(dims: GridDims) -> Vec<Tile> {
    let (r, c) = (dims.rows, dims.cols);
    let mut order = Vec::with_capacity(dims.n_tiles());
    if r % 2 == 0 || c % 2 == 1 {
        // rows alternate direction; closing link runs up column 0 when R is even
        for row in 0..r {
            for k in 0..c {
                let col = if row % 2 == 0 { k } else { c - 1 - k };
                order.push(Tile::new(row, col));
            }
        }
    } else {
        for col in 0..c {
            for k in 0..r {
                let row = if col % 2 == 0 { k } else { r - 1 - k };
                order.push(Tile::new(row, col));
            }
        }
    }
    order
}

/// Builds the link graph for `spec` on `dims`. Ports are left unassigned.
pub fn build_topology(spec: &TopologySpec, dims: GridDims) -> Result<Topology> {
    spec.validate(dims)?;
    let (r, c) = (dims.rows, dims.cols);
    let mut links = Vec::new();
    match spec {
        TopologySpec::Mesh2D => mesh_links(dims, &mut links),
        TopologySpec::SparseHamming { s_r, s_c } => {
            mesh_links(dims, &mut links);
            for row in 0..r {
                for &x in s_r {
                    for i in 0..c - x {
                        links.push(row_link(row, i, i + x, LinkKind::RowSkip(x)));
                    }
                }
            }
            for col in 0..c {
                for &x in s_c {
                    for i in 0..r - x {
                        links.push(col_link(col, i, i + x, LinkKind::ColSkip(x)));
                    }
                }
            }
        }
        TopologySpec::FlattenedButterfly => {
            for row in 0..r {
                for i in 0..c {
                    for j in i + 1..c {
                        links.push(row_link(row, i, j, skip_kind(j - i, true)));
                    }
                }
            }
            for col in 0..c {
                for i in 0..r {
                    for j in i + 1..r {
                        links.push(col_link(col, i, j, skip_kind(j - i, false)));
                    }
                }
            }
        }
        TopologySpec::Torus2D => {
            mesh_links(dims, &mut links);
            // with only two tiles per ring the wraparound would duplicate the mesh link
            if c > 2 {
                for row in 0..r {
                    links.push(row_link(row, 0, c - 1, LinkKind::Wraparound));
                }
            }
            if r > 2 {
                for col in 0..c {
                    links.push(col_link(col, 0, r - 1, LinkKind::Wraparound));
                }
            }
        }
        TopologySpec::FoldedTorus2D => {
            let mut folded = |n: u32, mk: &dyn Fn(u32, u32, LinkKind) -> Link, row: bool| {
                let mut set = BTreeSet::new();
                for i in 0..n.saturating_sub(2) {
                    set.insert((i, i + 2));
                }
                set.insert((0, 1));
                set.insert((n - 2, n - 1));
                for (i, j) in set {
                    links.push(mk(i, j, skip_kind(j - i, row)));
                }
            };
            for row in 0..r {
                folded(c, &|i, j, k| row_link(row, i, j, k), true);
            }
            for col in 0..c {
                folded(r, &|i, j, k| col_link(col, i, j, k), false);
            }
        }
        TopologySpec::Ring => {
            let order = ring_order(dims);
            for w in order.windows(2) {
                links.push(Link::new(w[0], w[1], LinkKind::Mesh));
            }
            links.push(Link::new(
                *order.last().expect("nonempty"),
                order[0],
                LinkKind::Wraparound,
            ));
        }
        TopologySpec::Hypercube => {
            let n = dims.n_tiles();
            let bits = n.trailing_zeros();
            for id in 0..n {
                for k in 0..bits {
                    let other = id ^ (1 << k);
                    if other > id {
                        links.push(Link::new(dims.tile(id), dims.tile(other), LinkKind::HypercubeDim(k)));
                    }
                }
            }
        }
    }
    links.sort_by_key(Link::key);
    let topo = Topology {
        spec: spec.clone(),
        dims,
        links,
    };
    topo.check_structure()?;
    Ok(topo)
}

/// Number of distinct sparse Hamming graph parameter sets on `dims`.
pub fn config_count(dims: GridDims) -> Result<u64> {
    dims.validate()?;
    let bits = dims.rows + dims.cols - 4;
    1u64.checked_shl(bits)
        .filter(|_| bits < 64)
        .ok_or_else(|| Error::param("dims", "configuration count exceeds 64 bits"))
}

/// Initial port placement: every link endpoint gets a port on the face
/// pointing towards the other tile, slots ordered by link span.
pub fn assign_ports(t: &Topology) -> Topology {
    let mut out = t.clone();
    let mut per_face: BTreeMap<(Tile, Face), Vec<(u32, Tile, usize, End)>> = BTreeMap::new();
    for (i, link) in t.links.iter().enumerate() {
        for end in [End::A, End::B] {
            let me = link.endpoint(end);
            let other = link.endpoint(end.other());
            let face = facing(me, other);
            per_face
                .entry((me, face))
                .or_default()
                .push((link.span(), other, i, end));
        }
    }
    for ((_, face), mut ports) in per_face {
        ports.sort();
        for (index, (_, _, i, end)) in ports.into_iter().enumerate() {
            let port = Some(Port {
                face,
                index: index as u32,
            });
            match end {
                End::A => out.links[i].port_a = port,
                End::B => out.links[i].port_b = port,
            }
        }
    }
    out
}

/// Face of `from` that points at `to`; horizontal displacement wins for
/// unaligned links.
pub fn facing(from: Tile, to: Tile) -> Face {
    if from.col != to.col {
        if to.col > from.col {
            Face::East
        } else {
            Face::West
        }
    } else if to.row > from.row {
        Face::South
    } else {
        Face::North
    }
}

impl Topology {
    /// Builds the topology and assigns initial ports.
    pub fn generate(spec: &TopologySpec, dims: GridDims) -> Result<Self> {
        Ok(assign_ports(&build_topology(spec, dims)?))
    }

    pub fn n_tiles(&self) -> usize {
        self.dims.n_tiles()
    }

    pub fn name(&self) -> String {
        format!("{} {}", self.spec, self.dims)
    }

    /// Link identity ignoring ports, for graph equality checks.
    pub fn link_set(&self) -> BTreeSet<(Tile, Tile, LinkKind)> {
        self.links.iter().map(Link::key).collect()
    }

    /// Neighbour lists `(tile id, link index)`, sorted by tile id.
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.n_tiles()];
        for (i, l) in self.links.iter().enumerate() {
            let a = self.dims.tile_id(l.a);
            let b = self.dims.tile_id(l.b);
            adj[a].push((b, i));
            adj[b].push((a, i));
        }
        for list in &mut adj {
            list.sort();
        }
        adj
    }

    pub fn degrees(&self) -> Vec<u32> {
        let mut deg = vec![0u32; self.n_tiles()];
        for l in &self.links {
            deg[self.dims.tile_id(l.a)] += 1;
            deg[self.dims.tile_id(l.b)] += 1;
        }
        deg
    }

    /// Structural invariants: endpoints in range, no self links, no duplicate
    /// tile pairs, connected.
    pub fn check_structure(&self) -> Result<()> {
        let mut pairs = BTreeSet::new();
        for l in &self.links {
            for t in [l.a, l.b] {
                if t.row >= self.dims.rows || t.col >= self.dims.cols {
                    return Err(Error::InvalidTopology(format!("tile {t:?} outside {}", self.dims)));
                }
            }
            if l.a == l.b {
                return Err(Error::InvalidTopology(format!("self link at {:?}", l.a)));
            }
            if l.a > l.b {
                return Err(Error::InvalidTopology("link endpoints not normalized".into()));
            }
            if !pairs.insert((l.a, l.b)) {
                return Err(Error::InvalidTopology(format!("duplicate link {:?}-{:?}", l.a, l.b)));
            }
        }
        if bfs(&self.adjacency(), 0).iter().any(|d| d.is_none()) {
            return Err(Error::Disconnected);
        }
        Ok(())
    }

    /// Hop distances from `src`; `None` marks unreachable tiles.
    pub fn hop_distances(&self, src: usize) -> Vec<Option<u32>> {
        bfs(&self.adjacency(), src)
    }

    /// Full hop-distance matrix. Errors on disconnected graphs.
    pub fn distance_matrix(&self) -> Result<Vec<Vec<u32>>> {
        let adj = self.adjacency();
        (0..self.n_tiles())
            .map(|s| {
                bfs(&adj, s)
                    .into_iter()
                    .map(|d| d.ok_or(Error::Disconnected))
                    .collect()
            })
            .collect()
    }

    pub fn diameter(&self) -> Result<u32> {
        diameter(self)
    }

    pub fn max_radix(&self) -> u32 {
        max_radix(self)
    }

    /// True when every link joins tiles of the same row or column.
    pub fn all_aligned(&self) -> bool {
        self.links
            .iter()
            .all(|l| l.orientation() != Orientation::Diagonal)
    }
}

fn bfs(adj: &[Vec<(usize, usize)>], src: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adj.len()];
    let mut queue = VecDeque::new();
    dist[src] = Some(0);
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("visited");
        for &(v, _) in &adj[u] {
            if dist[v].is_none() {
                dist[v] = Some(du + 1);
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Maximum over tile pairs of the hop distance.
pub fn diameter(t: &Topology) -> Result<u32> {
    let adj = t.adjacency();
    let mut best = 0;
    for s in 0..adj.len() {
        for d in bfs(&adj, s) {
            best = best.max(d.ok_or(Error::Disconnected)?);
        }
    }
    Ok(best)
}

/// Largest number of network links incident to one tile.
pub fn max_radix(t: &Topology) -> u32 {
    t.degrees().into_iter().max().unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dims(r: u32, c: u32) -> GridDims {
        GridDims::new(r, c).unwrap()
    }

    fn shg(sr: &[u32], sc: &[u32], d: GridDims) -> Topology {
        build_topology(&TopologySpec::sparse_hamming(sr.iter().copied(), sc.iter().copied()), d)
            .unwrap()
    }

    /// Link count by direct enumeration of the construction rule.
    fn shg_link_count_oracle(sr: &[u32], sc: &[u32], r: u32, c: u32) -> usize {
        let mut n = (r * (c - 1) + c * (r - 1)) as usize;
        for _row in 0..r {
            for &x in sr {
                n += (1..=c).filter(|i| i + x <= c).count();
            }
        }
        for _col in 0..c {
            for &x in sc {
                n += (1..=r).filter(|i| i + x <= r).count();
            }
        }
        n
    }

    #[test]
    fn empty_shg_is_mesh() {
        let d = dims(8, 8);
        let mesh = build_topology(&TopologySpec::Mesh2D, d).unwrap();
        assert_eq!(shg(&[], &[], d).link_set(), mesh.link_set());
    }

    #[test]
    fn full_shg_is_flattened_butterfly() {
        let d = dims(8, 8);
        let fb = build_topology(&TopologySpec::FlattenedButterfly, d).unwrap();
        let full = build_topology(&TopologySpec::full_sparse_hamming(d), d).unwrap();
        assert_eq!(full.link_set(), fb.link_set());
    }

    #[test]
    fn shg_4_25_link_count() {
        let t = shg(&[4], &[2, 5], dims(8, 8));
        assert_eq!(t.links.len(), 216);
        assert_eq!(shg_link_count_oracle(&[4], &[2, 5], 8, 8), 216);
    }

    #[test]
    fn shg_4_25_radix_matches_degree_count() {
        let t = shg(&[4], &[2, 5], dims(8, 8));
        let mut best = 0;
        for tile in t.dims.tiles() {
            let deg = t.links.iter().filter(|l| l.a == tile || l.b == tile).count() as u32;
            best = best.max(deg);
        }
        assert_eq!(t.max_radix(), best);
        assert!((4..=14).contains(&best));
        assert_eq!(best, 8);
    }

    #[test]
    fn closed_form_examples() {
        let d = dims(8, 8);
        let get = |s: TopologySpec| build_topology(&s, d).unwrap();
        assert_eq!(get(TopologySpec::Mesh2D).diameter().unwrap(), 14);
        assert_eq!(get(TopologySpec::Ring).diameter().unwrap(), 32);
        assert_eq!(get(TopologySpec::FlattenedButterfly).diameter().unwrap(), 2);
        assert_eq!(get(TopologySpec::Hypercube).diameter().unwrap(), 6);
        assert_eq!(get(TopologySpec::Torus2D).diameter().unwrap(), 8);
        assert_eq!(get(TopologySpec::Ring).max_radix(), 2);
        assert_eq!(get(TopologySpec::FlattenedButterfly).max_radix(), 14);
    }

    #[test]
    fn config_count_examples() {
        assert_eq!(config_count(dims(8, 8)).unwrap(), 4096);
        assert_eq!(config_count(dims(2, 2)).unwrap(), 1);
        assert_eq!(config_count(dims(4, 8)).unwrap(), 256);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let d = dims(6, 6);
        let err = build_topology(&TopologySpec::Hypercube, d).unwrap_err();
        assert!(err.to_string().contains("R and C must be powers of two"));
        assert!(build_topology(&TopologySpec::sparse_hamming([6], []), d).is_err());
        assert!(build_topology(&TopologySpec::sparse_hamming([1], []), d).is_err());
        assert!(build_topology(&TopologySpec::sparse_hamming([], [0]), d).is_err());
        assert!(GridDims::new(1, 5).is_err());
    }

    #[test]
    fn disconnected_graph_reports_error() {
        let mut t = build_topology(&TopologySpec::Mesh2D, dims(2, 2)).unwrap();
        t.links.retain(|l| l.a != Tile::new(0, 0) && l.b != Tile::new(0, 0));
        assert_eq!(diameter(&t), Err(Error::Disconnected));
    }

    #[test]
    fn mesh_interior_tile_has_one_port_per_face() {
        let t = Topology::generate(&TopologySpec::Mesh2D, dims(4, 4)).unwrap();
        let tile = Tile::new(1, 2);
        let mut faces = Vec::new();
        for l in &t.links {
            for end in [End::A, End::B] {
                if l.endpoint(end) == tile {
                    let p = l.port(end).unwrap();
                    assert_eq!(p.index, 0);
                    faces.push(p.face);
                }
            }
        }
        faces.sort();
        assert_eq!(faces, vec![Face::North, Face::East, Face::South, Face::West]);
    }

    #[test]
    fn ring_row_interior_ports_are_east_west() {
        let t = Topology::generate(&TopologySpec::Ring, dims(4, 4)).unwrap();
        for l in &t.links {
            for end in [End::A, End::B] {
                let tile = l.endpoint(end);
                if tile.col > 0 && tile.col < 3 {
                    let face = l.port(end).unwrap().face;
                    assert!(matches!(face, Face::East | Face::West), "{tile:?} {face:?}");
                }
            }
        }
    }

    #[test]
    fn skip_ports_ordered_by_distance() {
        let t = Topology::generate(&TopologySpec::sparse_hamming([2], []), dims(2, 5)).unwrap();
        let tile = Tile::new(0, 2);
        let mut east: Vec<(u32, u32)> = t
            .links
            .iter()
            .filter(|l| l.a == tile && l.b.row == 0)
            .map(|l| (l.port_a.unwrap().index, l.b.col - tile.col))
            .collect();
        east.sort();
        assert_eq!(east, vec![(0, 1), (1, 2)]);
        assert!(t
            .links
            .iter()
            .filter(|l| l.a == tile && l.b.row == 0)
            .all(|l| l.port_a.unwrap().face == Face::East));
    }

    #[test]
    fn ports_unique_per_tile_face() {
        let t = Topology::generate(&TopologySpec::FlattenedButterfly, dims(5, 6)).unwrap();
        let mut seen = BTreeSet::new();
        for l in &t.links {
            for end in [End::A, End::B] {
                assert!(seen.insert((l.endpoint(end), l.port(end).unwrap())));
            }
        }
    }

    #[test]
    fn links_sorted_and_unique() {
        for spec in [
            TopologySpec::Ring,
            TopologySpec::Torus2D,
            TopologySpec::FoldedTorus2D,
            TopologySpec::FlattenedButterfly,
        ] {
            let t = build_topology(&spec, dims(5, 7)).unwrap();
            let keys: Vec<_> = t.links.iter().map(Link::key).collect();
            let mut sorted = keys.clone();
            sorted.sort();
            sorted.dedup();
            assert_eq!(keys, sorted);
        }
    }

    #[test]
    fn odd_ring_closes_along_a_column_when_possible() {
        let t = build_topology(&TopologySpec::Ring, dims(3, 4)).unwrap();
        assert!(t.all_aligned());
        let t = build_topology(&TopologySpec::Ring, dims(3, 3)).unwrap();
        assert!(!t.all_aligned());
        assert_eq!(t.diameter().unwrap(), 4);
    }

    #[test]
    fn json_round_trip() {
        let t = Topology::generate(&TopologySpec::sparse_hamming([4], [2, 5]), dims(8, 8)).unwrap();
        let s = serde_json::to_string(&t).unwrap();
        let back: Topology = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }

    fn subsets(max: u32) -> impl Strategy<Value = Vec<u32>> {
        prop::collection::btree_set(2..max.max(3), 0..6)
            .prop_map(move |s| s.into_iter().filter(|&x| x < max).collect())
    }

    proptest! {
        #[test]
        fn adding_skip_never_increases_diameter(r in 3u32..9, c in 3u32..9, seed in any::<u64>()) {
            let sr: Vec<u32> = (2..c).filter(|x| (seed >> x) & 1 == 1).collect();
            let sc: Vec<u32> = (2..r).filter(|x| (seed >> (x + 16)) & 1 == 1).collect();
            let d = dims(r, c);
            let base = shg(&sr, &sc, d);
            let base_diam = base.diameter().unwrap();
            for x in 2..c {
                if sr.contains(&x) { continue; }
                let mut more = sr.clone();
                more.push(x);
                let bigger = shg(&more, &sc, d);
                prop_assert!(bigger.link_set().is_superset(&base.link_set()));
                prop_assert!(bigger.links.len() > base.links.len());
                prop_assert!(bigger.diameter().unwrap() <= base_diam);
            }
        }

        #[test]
        fn shg_bounds(r in 3u32..10, c in 3u32..10, sr in subsets(10), sc in subsets(10)) {
            let sr: Vec<u32> = sr.into_iter().filter(|&x| x < c).collect();
            let sc: Vec<u32> = sc.into_iter().filter(|&x| x < r).collect();
            let t = shg(&sr, &sc, dims(r, c));
            let diam = t.diameter().unwrap();
            prop_assert!((2..=r + c - 2).contains(&diam));
            prop_assert!((4..=r + c - 2).contains(&t.max_radix()));
            prop_assert!(t.links.iter().all(|l| l.orientation() != Orientation::Diagonal));
            prop_assert_eq!(t.links.len(), shg_link_count_oracle(&sr, &sc, r, c));
        }
    }

    #[test]
    fn mesh_has_manhattan_minimal_paths() {
        for r in 2..=6 {
            for c in 2..=6 {
                let t = build_topology(&TopologySpec::Mesh2D, dims(r, c)).unwrap();
                let dm = t.distance_matrix().unwrap();
                for s in 0..t.n_tiles() {
                    for d in 0..t.n_tiles() {
                        let (ts, td) = (t.dims.tile(s), t.dims.tile(d));
                        let manhattan = ts.row.abs_diff(td.row) + ts.col.abs_diff(td.col);
                        assert_eq!(dm[s][d], manhattan);
                    }
                }
            }
        }
    }
}
