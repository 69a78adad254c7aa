//! Exact set algebra on the cell lattice of the ambient square.
//!
//! The ambient domain is the open square `(-mu, mu)^2`. It is tiled by closed
//! cells of side `2s`; cell `(i, j)` covers `[2si, 2s(i+1)] x [2sj, 2s(j+1)]`
//! with `i, j` in `[-k, k)` for `k = mu / (2s)`. All geometry in this module
//! is integer arithmetic on cell indices and on the vertex lattice (vertex
//! unit = `2s`), so unions, boundaries and Hausdorff lengths are exact.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::Error;

/// Lattice geometry: cell size and ambient extent.
///
/// `s` is the half side of one lattice cell, `half_cells` is `mu / (2s)`,
/// so the ambient square spans cell indices `[-half_cells, half_cells)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub s: f64,
    pub half_cells: i32,
}

impl LatticeSpec {
    /// Minimum grid resolution: the neighborhood machinery needs room.
    pub const MIN_HALF_CELLS: i32 = 8;

    pub fn new(s: f64, half_cells: i32) -> Result<Self, Error> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidInput(format!("cell half-side must be positive, got {s}")));
        }
        if half_cells < Self::MIN_HALF_CELLS {
            return Err(Error::InvalidInput(format!(
                "ambient square must span at least {} cells per half side, got {half_cells}",
                Self::MIN_HALF_CELLS
            )));
        }
        Ok(LatticeSpec { s, half_cells })
    }

    /// Derive the lattice from physical `mu` and `s`; `mu/(2s)` must be integral.
    pub fn from_mu(mu: f64, s: f64) -> Result<Self, Error> {
        if !(mu > 0.0 && s > 0.0) {
            return Err(Error::InvalidInput("mu and s must be positive".into()));
        }
        let ratio = mu / (2.0 * s);
        let k = ratio.round();
        if (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "mu/(2s) = {ratio} is not an integer; the ambient square must tile exactly"
            )));
        }
        Self::new(s, k as i32)
    }

    /// Half side of the ambient square.
    pub fn mu(&self) -> f64 {
        2.0 * self.s * self.half_cells as f64
    }

    /// Physical length of one lattice edge (= cell side).
    pub fn edge_len(&self) -> f64 {
        2.0 * self.s
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        let k = self.half_cells;
        c.x >= -k && c.x < k && c.y >= -k && c.y < k
    }

    /// All cells of the ambient square, in lexicographic order.
    pub fn all_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let k = self.half_cells;
        (-k..k).flat_map(move |x| (-k..k).map(move |y| Cell { x, y }))
    }

    pub fn cell_count(&self) -> u64 {
        let n = 2 * self.half_cells as u64;
        n * n
    }

    /// The ambient square as a lattice rectangle (vertex units).
    pub fn ambient_rect(&self) -> LatticeRect {
        let k = self.half_cells;
        LatticeRect { x0: -k, y0: -k, x1: k, y1: k }
    }
}

/// One lattice cell, addressed by the vertex coordinates of its lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub fn new(x: i32, y: i32) -> Self {
        Cell { x, y }
    }

    pub fn edge_neighbors(&self) -> [Cell; 4] {
        [
            Cell::new(self.x - 1, self.y),
            Cell::new(self.x + 1, self.y),
            Cell::new(self.x, self.y - 1),
            Cell::new(self.x, self.y + 1),
        ]
    }

    /// The four boundary edges of this cell.
    pub fn edges(&self) -> [Edge; 4] {
        [
            Edge { x: self.x, y: self.y, horiz: true },      // bottom
            Edge { x: self.x, y: self.y + 1, horiz: true },  // top
            Edge { x: self.x, y: self.y, horiz: false },     // left
            Edge { x: self.x + 1, y: self.y, horiz: false }, // right
        ]
    }
}

/// One unit lattice edge on the vertex grid, canonically keyed by its lower /
/// left endpoint. A horizontal edge runs from `(x, y)` to `(x+1, y)`, a
/// vertical one from `(x, y)` to `(x, y+1)`. Physical length is `2s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub x: i32,
    pub y: i32,
    pub horiz: bool,
}

impl Edge {
    /// The two cells this edge separates, as (lower/left side, upper/right side).
    pub fn cells(&self) -> (Cell, Cell) {
        if self.horiz {
            (Cell::new(self.x, self.y - 1), Cell::new(self.x, self.y))
        } else {
            (Cell::new(self.x - 1, self.y), Cell::new(self.x, self.y))
        }
    }

    /// Endpoints in vertex units.
    pub fn endpoints(&self) -> ((i32, i32), (i32, i32)) {
        if self.horiz {
            ((self.x, self.y), (self.x + 1, self.y))
        } else {
            ((self.x, self.y), (self.x, self.y + 1))
        }
    }

    /// True if the open edge lies strictly inside the closed rectangle.
    pub fn inside_closed_rect(&self, r: &LatticeRect) -> bool {
        if self.horiz {
            self.x >= r.x0 && self.x + 1 <= r.x1 && self.y >= r.y0 && self.y <= r.y1
        } else {
            self.y >= r.y0 && self.y + 1 <= r.y1 && self.x >= r.x0 && self.x <= r.x1
        }
    }

    /// True if the edge interior lies in the open rectangle.
    pub fn inside_open_rect(&self, r: &LatticeRect) -> bool {
        if self.horiz {
            self.x >= r.x0 && self.x + 1 <= r.x1 && self.y > r.y0 && self.y < r.y1
        } else {
            self.y >= r.y0 && self.y + 1 <= r.y1 && self.x > r.x0 && self.x < r.x1
        }
    }
}

/// A finite set of unit lattice edges with set semantics.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeSet {
    edges: BTreeSet<Edge>,
}

impl EdgeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_iter<I: IntoIterator<Item = Edge>>(it: I) -> Self {
        EdgeSet { edges: it.into_iter().collect() }
    }

    pub fn insert(&mut self, e: Edge) -> bool {
        self.edges.insert(e)
    }

    pub fn contains(&self, e: &Edge) -> bool {
        self.edges.contains(e)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter()
    }

    pub fn union(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet { edges: self.edges.union(&other.edges).copied().collect() }
    }

    pub fn difference(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet { edges: self.edges.difference(&other.edges).copied().collect() }
    }

    pub fn intersection(&self, other: &EdgeSet) -> EdgeSet {
        EdgeSet { edges: self.edges.intersection(&other.edges).copied().collect() }
    }

    pub fn is_subset(&self, other: &EdgeSet) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn is_disjoint(&self, other: &EdgeSet) -> bool {
        self.edges.is_disjoint(&other.edges)
    }

    /// Edges whose closure lies in the closed rectangle.
    pub fn within_closed_rect(&self, r: &LatticeRect) -> EdgeSet {
        EdgeSet::from_iter(self.iter().filter(|e| e.inside_closed_rect(r)).copied())
    }

    /// Remove every edge meeting the closed rectangle.
    pub fn subtract_closed_rect(&self, r: &LatticeRect) -> EdgeSet {
        EdgeSet::from_iter(self.iter().filter(|e| !e.inside_closed_rect(r)).copied())
    }

    /// H^1 length in physical units.
    pub fn h1(&self, spec: &LatticeSpec) -> f64 {
        self.len() as f64 * spec.edge_len()
    }

    /// All vertices touched by edges of this set.
    pub fn vertices(&self) -> BTreeSet<(i32, i32)> {
        let mut v = BTreeSet::new();
        for e in self.iter() {
            let (a, b) = e.endpoints();
            v.insert(a);
            v.insert(b);
        }
        v
    }

    /// True if the two edge sets share an edge or a vertex.
    pub fn touches(&self, other: &EdgeSet) -> bool {
        if !self.is_disjoint(other) {
            return true;
        }
        let va = self.vertices();
        other.vertices().iter().any(|p| va.contains(p))
    }

    /// Bounding rectangle of the edge set (vertex units).
    pub fn bbox(&self) -> Option<LatticeRect> {
        let mut it = self.iter();
        let first = it.next()?;
        let ((ax, ay), (bx, by)) = first.endpoints();
        let (mut x0, mut y0, mut x1, mut y1) = (ax.min(bx), ay.min(by), ax.max(bx), ay.max(by));
        for e in self.iter() {
            let ((ax, ay), (bx, by)) = e.endpoints();
            x0 = x0.min(ax.min(bx));
            y0 = y0.min(ay.min(by));
            x1 = x1.max(ax.max(bx));
            y1 = y1.max(ay.max(by));
        }
        Some(LatticeRect { x0, y0, x1, y1 })
    }
}

impl FromIterator<Edge> for EdgeSet {
    fn from_iter<T: IntoIterator<Item = Edge>>(iter: T) -> Self {
        EdgeSet { edges: iter.into_iter().collect() }
    }
}

/// Axis-aligned rectangle on the vertex lattice: `[x0, x1] x [y0, y1]` in
/// vertex units with `x0 < x1`, `y0 < y1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LatticeRect {
    pub x0: i32,
    pub y0: i32,
    pub x1: i32,
    pub y1: i32,
}

impl LatticeRect {
    pub fn new(x0: i32, y0: i32, x1: i32, y1: i32) -> Result<Self, Error> {
        if x0 >= x1 || y0 >= y1 {
            return Err(Error::InvalidInput(format!(
                "degenerate rectangle [{x0},{x1}]x[{y0},{y1}]"
            )));
        }
        Ok(LatticeRect { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> i64 {
        (self.x1 - self.x0) as i64
    }

    pub fn height(&self) -> i64 {
        (self.y1 - self.y0) as i64
    }

    pub fn area_cells(&self) -> i64 {
        self.width() * self.height()
    }

    /// Perimeter in edge units.
    pub fn perimeter_units(&self) -> i64 {
        2 * (self.width() + self.height())
    }

    /// `|boundary|_infty` in physical units: the diagonal.
    pub fn diam_inf(&self, spec: &LatticeSpec) -> f64 {
        let w = self.width() as f64;
        let h = self.height() as f64;
        spec.edge_len() * w.hypot(h)
    }

    /// H^1 length of the boundary in physical units.
    pub fn perimeter(&self, spec: &LatticeSpec) -> f64 {
        self.perimeter_units() as f64 * spec.edge_len()
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.x0..self.x1).flat_map(move |x| (self.y0..self.y1).map(move |y| Cell { x, y }))
    }

    pub fn contains_cell(&self, c: Cell) -> bool {
        c.x >= self.x0 && c.x < self.x1 && c.y >= self.y0 && c.y < self.y1
    }

    pub fn boundary_edges(&self) -> EdgeSet {
        let mut es = EdgeSet::new();
        for x in self.x0..self.x1 {
            es.insert(Edge { x, y: self.y0, horiz: true });
            es.insert(Edge { x, y: self.y1, horiz: true });
        }
        for y in self.y0..self.y1 {
            es.insert(Edge { x: self.x0, y, horiz: false });
            es.insert(Edge { x: self.x1, y, horiz: false });
        }
        es
    }

    /// Closed-rectangle intersection test (touching counts).
    pub fn meets_closed(&self, other: &LatticeRect) -> bool {
        self.x0 <= other.x1 && other.x0 <= self.x1 && self.y0 <= other.y1 && other.y0 <= self.y1
    }

    /// True if `other`'s closure is contained in this closure.
    pub fn contains_rect(&self, other: &LatticeRect) -> bool {
        self.x0 <= other.x0 && other.x1 <= self.x1 && self.y0 <= other.y0 && other.y1 <= self.y1
    }

    /// True if this closed rectangle lies inside the OPEN ambient square.
    pub fn strictly_inside_ambient(&self, spec: &LatticeSpec) -> bool {
        let k = spec.half_cells;
        self.x0 > -k && self.x1 < k && self.y0 > -k && self.y1 < k
    }

    pub fn hull(&self, other: &LatticeRect) -> LatticeRect {
        LatticeRect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Grow by `d` vertex units on every side.
    pub fn dilate(&self, d: i32) -> LatticeRect {
        LatticeRect { x0: self.x0 - d, y0: self.y0 - d, x1: self.x1 + d, y1: self.y1 + d }
    }

    /// Projection intervals onto the axes, in vertex units.
    pub fn proj(&self) -> ((i32, i32), (i32, i32)) {
        ((self.x0, self.x1), (self.y0, self.y1))
    }
}

/// A finite set of lattice cells inside the ambient square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSet {
    pub spec: LatticeSpec,
    cells: BTreeSet<Cell>,
}

impl GridSet {
    pub fn empty(spec: LatticeSpec) -> Self {
        GridSet { spec, cells: BTreeSet::new() }
    }

    pub fn from_cells<I: IntoIterator<Item = Cell>>(spec: LatticeSpec, it: I) -> Result<Self, Error> {
        let cells: BTreeSet<Cell> = it.into_iter().collect();
        for &c in &cells {
            if !spec.contains_cell(c) {
                return Err(Error::InvalidInput(format!(
                    "cell ({}, {}) lies outside the ambient square",
                    c.x, c.y
                )));
            }
        }
        Ok(GridSet { spec, cells })
    }

    pub fn full(spec: LatticeSpec) -> Self {
        let cells = spec.all_cells().collect();
        GridSet { spec, cells }
    }

    pub fn from_rect(spec: LatticeSpec, r: &LatticeRect) -> Result<Self, Error> {
        Self::from_cells(spec, r.cells())
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, c: Cell) -> bool {
        self.cells.contains(&c)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Cell> {
        self.cells.iter()
    }

    /// Exact area: `(2s)^2` per cell.
    pub fn area(&self) -> f64 {
        let e = self.spec.edge_len();
        self.cells.len() as f64 * e * e
    }

    pub fn insert(&mut self, c: Cell) -> bool {
        debug_assert!(self.spec.contains_cell(c));
        self.cells.insert(c)
    }

    pub fn union(&self, other: &GridSet) -> GridSet {
        GridSet { spec: self.spec, cells: self.cells.union(&other.cells).copied().collect() }
    }

    pub fn difference(&self, other: &GridSet) -> GridSet {
        GridSet { spec: self.spec, cells: self.cells.difference(&other.cells).copied().collect() }
    }

    pub fn intersection(&self, other: &GridSet) -> GridSet {
        GridSet { spec: self.spec, cells: self.cells.intersection(&other.cells).copied().collect() }
    }

    pub fn is_disjoint(&self, other: &GridSet) -> bool {
        self.cells.is_disjoint(&other.cells)
    }

    pub fn is_subset(&self, other: &GridSet) -> bool {
        self.cells.is_subset(&other.cells)
    }

    /// Remove all cells covered by the closed rectangle (cells are closed, so
    /// exactly the cells of the rectangle's interior grid).
    pub fn subtract_rect(&self, r: &LatticeRect) -> GridSet {
        GridSet {
            spec: self.spec,
            cells: self.cells.iter().filter(|c| !r.contains_cell(**c)).copied().collect(),
        }
    }

    /// Cells inside the rectangle.
    pub fn intersect_rect(&self, r: &LatticeRect) -> GridSet {
        GridSet {
            spec: self.spec,
            cells: self.cells.iter().filter(|c| r.contains_cell(**c)).copied().collect(),
        }
    }

    /// Topological boundary of the closed cell union, as a set of unit edges:
    /// exactly the edges adjacent to one inside and one outside cell.
    pub fn boundary(&self) -> EdgeSet {
        let mut es = EdgeSet::new();
        for c in &self.cells {
            for e in c.edges() {
                let (a, b) = e.cells();
                let ina = self.cells.contains(&a);
                let inb = self.cells.contains(&b);
                if ina != inb {
                    es.insert(e);
                }
            }
        }
        es
    }

    /// Occupied column and row counts: the exact 1-d measures (in edge units)
    /// of the projections of the closed cell union onto the axes.
    pub fn proj_counts(&self) -> (u64, u64) {
        let mut cols = BTreeSet::new();
        let mut rows = BTreeSet::new();
        for c in &self.cells {
            cols.insert(c.x);
            rows.insert(c.y);
        }
        (cols.len() as u64, rows.len() as u64)
    }

    /// `sqrt(|pi_1|^2 + |pi_2|^2)` of the boundary, in physical units.
    pub fn diam_inf(&self) -> f64 {
        let (px, py) = self.proj_counts();
        self.spec.edge_len() * (px as f64).hypot(py as f64)
    }

    pub fn bbox(&self) -> Option<LatticeRect> {
        let first = self.cells.iter().next()?;
        let (mut x0, mut y0, mut x1, mut y1) = (first.x, first.y, first.x + 1, first.y + 1);
        for c in &self.cells {
            x0 = x0.min(c.x);
            y0 = y0.min(c.y);
            x1 = x1.max(c.x + 1);
            y1 = y1.max(c.y + 1);
        }
        Some(LatticeRect { x0, y0, x1, y1 })
    }

    /// True if the set is exactly a full rectangle of cells.
    pub fn is_rect(&self) -> bool {
        match self.bbox() {
            None => false,
            Some(b) => b.area_cells() == self.cells.len() as i64,
        }
    }

    /// True if any cell touches the outermost ring of the ambient square.
    pub fn touches_ambient_boundary(&self) -> bool {
        let k = self.spec.half_cells;
        self.cells
            .iter()
            .any(|c| c.x == -k || c.x == k - 1 || c.y == -k || c.y == k - 1)
    }

    /// Euclidean distance between the closed cell unions (0 if they touch).
    pub fn distance_to(&self, other: &GridSet) -> f64 {
        let e = self.spec.edge_len();
        let mut best: f64 = f64::INFINITY;
        for a in &self.cells {
            for b in &other.cells {
                let dx = ((a.x - b.x).abs() as f64 - 1.0).max(0.0);
                let dy = ((a.y - b.y).abs() as f64 - 1.0).max(0.0);
                let d = dx.hypot(dy);
                if d < best {
                    best = d;
                }
            }
        }
        best * e
    }

    /// Maximal edge-connected pieces, ordered by smallest cell.
    pub fn connected_components(&self) -> Vec<GridSet> {
        connected_components(self)
    }

    /// True if the cell set is edge-connected (empty counts as connected).
    pub fn is_connected(&self) -> bool {
        self.connected_components().len() <= 1
    }
}

/// Maximal edge-connected groups of a cell set, in deterministic order
/// (lexicographic by smallest cell index).
pub fn connected_components(set: &GridSet) -> Vec<GridSet> {
    let mut seen: BTreeSet<Cell> = BTreeSet::new();
    let mut out = Vec::new();
    for &start in set.iter() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = BTreeSet::new();
        let mut queue = VecDeque::new();
        queue.push_back(start);
        seen.insert(start);
        while let Some(c) = queue.pop_front() {
            comp.insert(c);
            for n in c.edge_neighbors() {
                if set.contains(n) && seen.insert(n) {
                    queue.push_back(n);
                }
            }
        }
        out.push(GridSet { spec: set.spec, cells: comp });
    }
    out
}

/// Items accepted by [`smallest_enclosing_rectangle`].
#[derive(Debug, Clone)]
pub enum Enclosable {
    Rect(LatticeRect),
    Edges(EdgeSet),
}

/// The minimal axis-aligned lattice rectangle whose closure contains every item.
pub fn smallest_enclosing_rectangle(items: &[Enclosable]) -> Result<LatticeRect, Error> {
    let mut acc: Option<LatticeRect> = None;
    for item in items {
        let b = match item {
            Enclosable::Rect(r) => Some(*r),
            Enclosable::Edges(es) => es.bbox(),
        };
        if let Some(b) = b {
            acc = Some(match acc {
                None => b,
                Some(a) => a.hull(&b),
            });
        }
    }
    acc.ok_or_else(|| Error::InvalidInput("cannot enclose an empty item collection".into()))
}

/// Stable identifier for a boundary component across modifications.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CompId(pub u32);

/// One boundary component: a removed region `X`, its polygonal boundary
/// `gamma`, the exclusive part `theta` (edges not covered by earlier-ordered
/// components), a weight in `[omega_min, 1]`, and the associated rectangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryComponent {
    pub id: CompId,
    pub interior: GridSet,
    pub gamma: EdgeSet,
    pub theta: EdgeSet,
    pub weight: f64,
    pub rect: Option<LatticeRect>,
    pub touches_outer_boundary: bool,
}

impl BoundaryComponent {
    /// `|Gamma|_infty` from the exact axis projections of the region.
    pub fn diam_inf(&self) -> f64 {
        self.interior.diam_inf()
    }

    /// Exact squared diameter in integer edge units (for exact comparisons).
    pub fn diam_inf_sq_units(&self) -> u64 {
        let (px, py) = self.interior.proj_counts();
        px * px + py * py
    }

    /// True if gamma is exactly one rectangle boundary.
    pub fn is_rectangular(&self) -> bool {
        match self.interior.bbox() {
            None => false,
            Some(b) => {
                self.interior.len() as i64 == b.area_cells() && self.gamma == b.boundary_edges()
            }
        }
    }
}

/// The computational form of a cracked configuration: the ambient square with
/// an ordered list of removed regions. The order is semantic: it fixes the
/// exclusive `theta` sets. Interior components come first, components meeting
/// the ambient boundary last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub spec: LatticeSpec,
    pub lambda: f64,
    pub components: Vec<BoundaryComponent>,
    pub(crate) next_id: u32,
}

impl Configuration {
    pub fn empty(spec: LatticeSpec) -> Self {
        Configuration { spec, lambda: 0.0, components: Vec::new(), next_id: 0 }
    }

    pub fn fresh_id(&mut self) -> CompId {
        let id = CompId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Interior components (boundary fully inside the ambient square).
    pub fn interior_components(&self) -> impl Iterator<Item = &BoundaryComponent> {
        self.components.iter().filter(|c| !c.touches_outer_boundary)
    }

    pub fn component(&self, id: CompId) -> Option<&BoundaryComponent> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn component_mut(&mut self, id: CompId) -> Option<&mut BoundaryComponent> {
        self.components.iter_mut().find(|c| c.id == id)
    }

    /// All removed cells.
    pub fn removed_cells(&self) -> GridSet {
        let mut acc = GridSet::empty(self.spec);
        for c in &self.components {
            acc = acc.union(&c.interior);
        }
        acc
    }

    /// The live region `W`: ambient square minus every removed region.
    pub fn w_cells(&self) -> GridSet {
        GridSet::full(self.spec).difference(&self.removed_cells())
    }

    /// The hole-filled region `H(W)`: ambient square minus the components
    /// meeting the ambient boundary.
    pub fn h_cells(&self) -> GridSet {
        let mut acc = GridSet::full(self.spec);
        for c in &self.components {
            if c.touches_outer_boundary {
                acc = acc.difference(&c.interior);
            }
        }
        acc
    }

    /// Recompute every `theta` from the component order:
    /// `theta_i = gamma_i \ union of gamma_j for j < i` over interior components.
    pub fn recompute_thetas(&mut self) {
        let mut covered = EdgeSet::new();
        for comp in &mut self.components {
            if comp.touches_outer_boundary {
                comp.theta = EdgeSet::new();
                continue;
            }
            comp.theta = comp.gamma.difference(&covered);
            covered = covered.union(&comp.gamma);
        }
    }

    /// Check the structural invariants: disjoint interiors, exact boundaries,
    /// theta consistency, ordering (interior components before boundary ones).
    pub fn check_invariants(&self) -> Result<(), Error> {
        let mut seen_boundary = false;
        let mut all_cells: BTreeMap<Cell, CompId> = BTreeMap::new();
        let mut covered = EdgeSet::new();
        for comp in &self.components {
            if comp.interior.is_empty() {
                return Err(Error::Corrupt("empty component interior".into()));
            }
            if comp.touches_outer_boundary {
                seen_boundary = true;
            } else if seen_boundary {
                return Err(Error::Corrupt(
                    "interior component ordered after a boundary-touching one".into(),
                ));
            }
            if comp.touches_outer_boundary != comp.interior.touches_ambient_boundary() {
                return Err(Error::Corrupt("stale ambient-boundary flag".into()));
            }
            for &cell in comp.interior.iter() {
                if let Some(prev) = all_cells.insert(cell, comp.id) {
                    return Err(Error::Corrupt(format!(
                        "cell ({}, {}) claimed by components {:?} and {:?}",
                        cell.x, cell.y, prev, comp.id
                    )));
                }
            }
            if comp.gamma != comp.interior.boundary() {
                return Err(Error::Corrupt("gamma is not the boundary of the interior".into()));
            }
            if !comp.touches_outer_boundary {
                let expect = comp.gamma.difference(&covered);
                if comp.theta != expect {
                    return Err(Error::Corrupt("theta inconsistent with component order".into()));
                }
                covered = covered.union(&comp.gamma);
            }
            if !(0.0 < comp.weight && comp.weight <= 1.0) {
                return Err(Error::Corrupt(format!("weight {} out of range", comp.weight)));
            }
        }
        Ok(())
    }
}

/// Build a configuration from the removed cells and an explicit grouping:
/// one component per group. Groups keep their given relative order, except
/// that groups meeting the ambient boundary are moved last (stably).
pub fn components_of(
    cells_removed: &GridSet,
    spec: LatticeSpec,
    grouping: &[BTreeSet<Cell>],
) -> Result<Configuration, Error> {
    let mut claimed: BTreeSet<Cell> = BTreeSet::new();
    for group in grouping {
        for &c in group {
            if !cells_removed.contains(c) {
                return Err(Error::InvalidInput(format!(
                    "group cell ({}, {}) is not among the removed cells",
                    c.x, c.y
                )));
            }
            if !claimed.insert(c) {
                return Err(Error::InvalidInput(format!(
                    "cell ({}, {}) appears in two groups",
                    c.x, c.y
                )));
            }
        }
    }
    if claimed.len() != cells_removed.len() {
        return Err(Error::InvalidInput(
            "grouping does not cover every removed cell".into(),
        ));
    }

    let mut cfg = Configuration::empty(spec);
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for group in grouping {
        if group.is_empty() {
            continue;
        }
        let set = GridSet::from_cells(spec, group.iter().copied())?;
        let touches = set.touches_ambient_boundary();
        let id = cfg.fresh_id();
        let comp = BoundaryComponent {
            id,
            gamma: set.boundary(),
            theta: EdgeSet::new(),
            interior: set,
            weight: 1.0,
            rect: None,
            touches_outer_boundary: touches,
        };
        if touches {
            boundary.push(comp);
        } else {
            interior.push(comp);
        }
    }
    interior.extend(boundary);
    cfg.components = interior;
    cfg.recompute_thetas();
    Ok(cfg)
}

/// `H(W)` as a cell set: the live region with interior holes filled.
pub fn fill_holes(config: &Configuration) -> GridSet {
    config.h_cells()
}

/// Merge the listed components of `config` into a single component placed at
/// the position of the earliest member; boundaries and thetas are recomputed.
/// The merged component keeps weight 1 and drops any carried rectangle.
pub fn merge_components(config: &Configuration, ids: &[CompId]) -> Result<Configuration, Error> {
    if ids.len() < 2 {
        return Ok(config.clone());
    }
    let idset: BTreeSet<CompId> = ids.iter().copied().collect();
    let mut merged_interior = GridSet::empty(config.spec);
    let mut first_pos = None;
    for (pos, comp) in config.components.iter().enumerate() {
        if idset.contains(&comp.id) {
            merged_interior = merged_interior.union(&comp.interior);
            if first_pos.is_none() {
                first_pos = Some(pos);
            }
        }
    }
    let first_pos =
        first_pos.ok_or_else(|| Error::InvalidInput("merge ids not found in configuration".into()))?;

    let mut out = config.clone();
    let new_id = out.fresh_id();
    let touches = merged_interior.touches_ambient_boundary();
    let merged = BoundaryComponent {
        id: new_id,
        gamma: merged_interior.boundary(),
        theta: EdgeSet::new(),
        interior: merged_interior,
        weight: 1.0,
        rect: None,
        touches_outer_boundary: touches,
    };
    let mut comps = Vec::with_capacity(out.components.len());
    for (pos, comp) in out.components.iter().enumerate() {
        if idset.contains(&comp.id) {
            if pos == first_pos {
                comps.push(merged.clone());
            }
        } else {
            comps.push(comp.clone());
        }
    }
    // Keep interior components before boundary-touching ones.
    let (interior, boundary): (Vec<_>, Vec<_>) =
        comps.into_iter().partition(|c| !c.touches_outer_boundary);
    out.components = interior;
    out.components.extend(boundary);
    out.recompute_thetas();
    Ok(out)
}
