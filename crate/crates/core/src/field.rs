//! Discrete displacement fields with jumps.
//!
//! A field stores four corner values per cell (two components each) and is
//! bilinear inside the cell. Corner values are duplicated across cell edges,
//! so the traces from the two sides of an edge are independent: continuity is
//! an invariant the constructors maintain away from crack edges, never a
//! representational constraint. For this representation strains, traces and
//! jumps are piecewise polynomial and every integral below is evaluated by a
//! quadrature rule that is exact for its integrand degree (except the L^1
//! norms of square roots, which use the same fixed nodes so that discrete
//! Cauchy-Schwarz inequalities hold exactly).

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::grid::{Cell, CompId, Configuration, Edge, EdgeSet, GridSet, LatticeRect, LatticeSpec};
use crate::Error;

/// Infinitesimal rigid motion `x -> A x + b` with `A = [[0, a], [-a, 0]]`,
/// i.e. `u(x, y) = (a y + b_1, -a x + b_2)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RigidMotion {
    pub a: f64,
    pub b: [f64; 2],
}

impl RigidMotion {
    pub fn eval(&self, x: f64, y: f64) -> [f64; 2] {
        [self.a * y + self.b[0], -self.a * x + self.b[1]]
    }

    /// Frobenius norm of the skew matrix: `sqrt(2) |a|`.
    pub fn matrix_norm(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.a.abs()
    }

    /// Exact `L^2` norm squared of the motion over a lattice rectangle.
    pub fn l2_sq_on_rect(&self, spec: &LatticeSpec, r: &LatticeRect) -> f64 {
        let e = spec.edge_len();
        let (x0, x1) = (r.x0 as f64 * e, r.x1 as f64 * e);
        let (y0, y1) = (r.y0 as f64 * e, r.y1 as f64 * e);
        let w = x1 - x0;
        let h = y1 - y0;
        let ix = (x1.powi(3) - x0.powi(3)) / 3.0;
        let iy = (y1.powi(3) - y0.powi(3)) / 3.0;
        let mx = (x1 * x1 - x0 * x0) / 2.0;
        let my = (y1 * y1 - y0 * y0) / 2.0;
        // int (a y + b1)^2 + (-a x + b2)^2
        let a = self.a;
        let term1 = a * a * w * iy + 2.0 * a * self.b[0] * w * my + self.b[0] * self.b[0] * w * h;
        let term2 = a * a * h * ix - 2.0 * a * self.b[1] * h * mx + self.b[1] * self.b[1] * w * h;
        term1 + term2
    }

    /// Maximum of `|A x + b|^2` over the closed rectangle (attained at a corner).
    pub fn max_sq_on_rect(&self, spec: &LatticeSpec, r: &LatticeRect) -> f64 {
        let e = spec.edge_len();
        let corners = [
            (r.x0 as f64 * e, r.y0 as f64 * e),
            (r.x1 as f64 * e, r.y0 as f64 * e),
            (r.x0 as f64 * e, r.y1 as f64 * e),
            (r.x1 as f64 * e, r.y1 as f64 * e),
        ];
        corners
            .iter()
            .map(|&(x, y)| {
                let v = self.eval(x, y);
                v[0] * v[0] + v[1] * v[1]
            })
            .fold(0.0, f64::max)
    }

    pub fn sub(&self, other: &RigidMotion) -> RigidMotion {
        RigidMotion { a: self.a - other.a, b: [self.b[0] - other.b[0], self.b[1] - other.b[1]] }
    }
}

const GAUSS2: [f64; 2] = [0.5 - 0.28867513459481287, 0.5 + 0.28867513459481287];
const GAUSS4_N: [f64; 4] = [
    0.5 - 0.4305681557970263,
    0.5 - 0.16999052179242816,
    0.5 + 0.16999052179242816,
    0.5 + 0.4305681557970263,
];
const GAUSS4_W: [f64; 4] = [
    0.17392742256872693,
    0.32607257743127305,
    0.32607257743127305,
    0.17392742256872693,
];

/// Corner slot for local corner (dx, dy) and component `c`.
fn slot(dx: usize, dy: usize, c: usize) -> usize {
    (dy * 2 + dx) * 2 + c
}

/// Piecewise-bilinear displacement field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub spec: LatticeSpec,
    pub domain: GridSet,
    vals: BTreeMap<Cell, [f64; 8]>,
}

impl DiscreteField {
    /// Sample a globally continuous function at cell corners.
    pub fn from_fn(
        spec: LatticeSpec,
        domain: &GridSet,
        f: impl Fn(f64, f64) -> [f64; 2],
    ) -> DiscreteField {
        Self::from_cell_fn(spec, domain, |_, x, y| f(x, y))
    }

    /// Sample a per-cell function (may jump across edges).
    pub fn from_cell_fn(
        spec: LatticeSpec,
        domain: &GridSet,
        mut f: impl FnMut(Cell, f64, f64) -> [f64; 2],
    ) -> DiscreteField {
        let e = spec.edge_len();
        let mut vals = BTreeMap::new();
        for &c in domain.iter() {
            let mut v = [0.0; 8];
            for dy in 0..2 {
                for dx in 0..2 {
                    let x = (c.x + dx as i32) as f64 * e;
                    let y = (c.y + dy as i32) as f64 * e;
                    let u = f(c, x, y);
                    v[slot(dx, dy, 0)] = u[0];
                    v[slot(dx, dy, 1)] = u[1];
                }
            }
            vals.insert(c, v);
        }
        DiscreteField { spec, domain: domain.clone(), vals }
    }

    pub fn from_raw(spec: LatticeSpec, vals: BTreeMap<Cell, [f64; 8]>) -> Result<Self, Error> {
        let domain = GridSet::from_cells(spec, vals.keys().copied())?;
        Ok(DiscreteField { spec, domain, vals })
    }

    pub fn cell_values(&self, c: Cell) -> Option<&[f64; 8]> {
        self.vals.get(&c)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&Cell, &[f64; 8])> {
        self.vals.iter()
    }

    pub fn set_cell(&mut self, c: Cell, v: [f64; 8]) {
        self.domain.insert(c);
        self.vals.insert(c, v);
    }

    /// Evaluate at local coordinates `(xi, eta)` in `[0,1]^2` of a cell.
    pub fn eval_local(&self, c: Cell, xi: f64, eta: f64) -> Option<[f64; 2]> {
        let v = self.vals.get(&c)?;
        let mut out = [0.0; 2];
        for comp in 0..2 {
            let v00 = v[slot(0, 0, comp)];
            let v10 = v[slot(1, 0, comp)];
            let v01 = v[slot(0, 1, comp)];
            let v11 = v[slot(1, 1, comp)];
            out[comp] = v00 * (1.0 - xi) * (1.0 - eta)
                + v10 * xi * (1.0 - eta)
                + v01 * (1.0 - xi) * eta
                + v11 * xi * eta;
        }
        Some(out)
    }

    /// Displacement gradient at local coordinates; rows are components.
    pub fn grad_local(&self, c: Cell, xi: f64, eta: f64) -> Option<[[f64; 2]; 2]> {
        let v = self.vals.get(&c)?;
        let h = self.spec.edge_len();
        let mut g = [[0.0; 2]; 2];
        for comp in 0..2 {
            let v00 = v[slot(0, 0, comp)];
            let v10 = v[slot(1, 0, comp)];
            let v01 = v[slot(0, 1, comp)];
            let v11 = v[slot(1, 1, comp)];
            let du_dxi = (v10 - v00) * (1.0 - eta) + (v11 - v01) * eta;
            let du_deta = (v01 - v00) * (1.0 - xi) + (v11 - v10) * xi;
            g[comp][0] = du_dxi / h;
            g[comp][1] = du_deta / h;
        }
        Some(g)
    }

    /// True if corner values agree across every interior edge not listed in
    /// `crack_edges`.
    pub fn h1_conforming(&self, crack_edges: &EdgeSet) -> bool {
        for (&c, v) in &self.vals {
            let right = Cell::new(c.x + 1, c.y);
            if let Some(w) = self.vals.get(&right) {
                let e = Edge { x: c.x + 1, y: c.y, horiz: false };
                if !crack_edges.contains(&e) {
                    for comp in 0..2 {
                        if v[slot(1, 0, comp)] != w[slot(0, 0, comp)]
                            || v[slot(1, 1, comp)] != w[slot(0, 1, comp)]
                        {
                            return false;
                        }
                    }
                }
            }
            let top = Cell::new(c.x, c.y + 1);
            if let Some(w) = self.vals.get(&top) {
                let e = Edge { x: c.x, y: c.y + 1, horiz: true };
                if !crack_edges.contains(&e) {
                    for comp in 0..2 {
                        if v[slot(0, 1, comp)] != w[slot(0, 0, comp)]
                            || v[slot(1, 1, comp)] != w[slot(1, 0, comp)]
                        {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Edges interior to the domain where the two-sided traces differ.
    pub fn jump_edges(&self) -> EdgeSet {
        let mut out = EdgeSet::new();
        for (&c, v) in &self.vals {
            let right = Cell::new(c.x + 1, c.y);
            if let Some(w) = self.vals.get(&right) {
                if (0..2).any(|comp| {
                    v[slot(1, 0, comp)] != w[slot(0, 0, comp)]
                        || v[slot(1, 1, comp)] != w[slot(0, 1, comp)]
                }) {
                    out.insert(Edge { x: c.x + 1, y: c.y, horiz: false });
                }
            }
            let top = Cell::new(c.x, c.y + 1);
            if let Some(w) = self.vals.get(&top) {
                if (0..2).any(|comp| {
                    v[slot(0, 1, comp)] != w[slot(0, 0, comp)]
                        || v[slot(1, 1, comp)] != w[slot(1, 0, comp)]
                }) {
                    out.insert(Edge { x: c.x, y: c.y + 1, horiz: true });
                }
            }
        }
        out
    }

    /// Add another field's values on the shared domain.
    pub fn add(&self, other: &DiscreteField) -> DiscreteField {
        let mut vals = self.vals.clone();
        for (c, w) in &other.vals {
            if let Some(v) = vals.get_mut(c) {
                for i in 0..8 {
                    v[i] += w[i];
                }
            }
        }
        DiscreteField { spec: self.spec, domain: self.domain.clone(), vals }
    }

    pub fn scale(&self, factor: f64) -> DiscreteField {
        let mut vals = self.vals.clone();
        for v in vals.values_mut() {
            for x in v.iter_mut() {
                *x *= factor;
            }
        }
        DiscreteField { spec: self.spec, domain: self.domain.clone(), vals }
    }
}

/// Symmetric-gradient energy density `|sym grad u|^2` at a local point.
fn strain_density(g: &[[f64; 2]; 2]) -> f64 {
    let e11 = g[0][0];
    let e22 = g[1][1];
    let e12 = 0.5 * (g[0][1] + g[1][0]);
    e11 * e11 + e22 * e22 + 2.0 * e12 * e12
}

fn strain_norm(g: &[[f64; 2]; 2]) -> f64 {
    strain_density(g).sqrt()
}

/// `int_U |sym grad u|^2`, exact for the bilinear representation
/// (2x2 Gauss per cell). `region` must lie inside the field domain.
pub fn elastic_energy(u: &DiscreteField, region: &GridSet) -> f64 {
    let cell_area = u.spec.edge_len() * u.spec.edge_len();
    let mut total = 0.0;
    for &c in region.iter() {
        if u.cell_values(c).is_none() {
            continue;
        }
        let mut acc = 0.0;
        for &xi in &GAUSS2 {
            for &eta in &GAUSS2 {
                let g = u.grad_local(c, xi, eta).expect("cell in domain");
                acc += strain_density(&g);
            }
        }
        total += acc * 0.25 * cell_area;
    }
    total
}

/// `int_U |sym grad u|` with the same 2x2 nodes as [`elastic_energy`], so the
/// Cauchy-Schwarz relation between the two holds exactly in floating point.
pub fn strain_l1(u: &DiscreteField, region: &GridSet) -> f64 {
    let cell_area = u.spec.edge_len() * u.spec.edge_len();
    let mut total = 0.0;
    for &c in region.iter() {
        if u.cell_values(c).is_none() {
            continue;
        }
        let mut acc = 0.0;
        for &xi in &GAUSS2 {
            for &eta in &GAUSS2 {
                let g = u.grad_local(c, xi, eta).expect("cell in domain");
                acc += strain_norm(&g);
            }
        }
        total += acc * 0.25 * cell_area;
    }
    total
}

/// Two-sided traces across an edge, as linear functions of the edge parameter:
/// returns `(p, q)` with `jump(t) = p + q t`, `t` in `[0,1]`.
fn jump_line(u: &DiscreteField, e: &Edge) -> Result<([f64; 2], [f64; 2]), Error> {
    let (lo, hi) = e.cells();
    let (vl, vh) = match (u.cell_values(lo), u.cell_values(hi)) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::InvalidInput(format!(
                "edge ({}, {}, horiz={}) lacks a two-sided trace",
                e.x, e.y, e.horiz
            )))
        }
    };
    let mut p = [0.0; 2];
    let mut q = [0.0; 2];
    for comp in 0..2 {
        let (lo0, lo1, hi0, hi1) = if e.horiz {
            // Horizontal edge at height y: lower cell's top side vs upper
            // cell's bottom side; parameter runs in +x.
            (
                vl[slot(0, 1, comp)],
                vl[slot(1, 1, comp)],
                vh[slot(0, 0, comp)],
                vh[slot(1, 0, comp)],
            )
        } else {
            // Vertical edge at x: left cell's right side vs right cell's left
            // side; parameter runs in +y.
            (
                vl[slot(1, 0, comp)],
                vl[slot(1, 1, comp)],
                vh[slot(0, 0, comp)],
                vh[slot(0, 1, comp)],
            )
        };
        p[comp] = hi0 - lo0;
        q[comp] = (hi1 - lo1) - (hi0 - lo0);
    }
    Ok((p, q))
}

/// Edgewise integral of `|u^+ - u^-|^power` over the given edges.
/// Power 2 is closed-form; power 1 uses fixed 4-point Gauss nodes (the same
/// nodes back the squared version in [`total_variation`], so discrete
/// Cauchy-Schwarz holds exactly).
pub fn jump_integral(u: &DiscreteField, edges: &EdgeSet, power: u8) -> Result<f64, Error> {
    let len = u.spec.edge_len();
    let mut total = 0.0;
    for e in edges.iter() {
        let (p, q) = jump_line(u, e)?;
        match power {
            2 => {
                let pp = p[0] * p[0] + p[1] * p[1];
                let pq = p[0] * q[0] + p[1] * q[1];
                let qq = q[0] * q[0] + q[1] * q[1];
                total += len * (pp + pq + qq / 3.0);
            }
            1 => {
                let mut acc = 0.0;
                for (t, w) in GAUSS4_N.iter().zip(GAUSS4_W.iter()) {
                    let j0 = p[0] + q[0] * t;
                    let j1 = p[1] + q[1] * t;
                    acc += w * j0.hypot(j1);
                }
                total += len * acc;
            }
            _ => return Err(Error::InvalidInput(format!("unsupported jump power {power}"))),
        }
    }
    Ok(total)
}

/// Jump integral with the 4-point rule also for power 2 (used by the
/// total-variation split so both sides share quadrature nodes).
fn jump_sq_gauss4(u: &DiscreteField, edges: &EdgeSet) -> Result<f64, Error> {
    let len = u.spec.edge_len();
    let mut total = 0.0;
    for e in edges.iter() {
        let (p, q) = jump_line(u, e)?;
        let mut acc = 0.0;
        for (t, w) in GAUSS4_N.iter().zip(GAUSS4_W.iter()) {
            let j0 = p[0] + q[0] * t;
            let j1 = p[1] + q[1] * t;
            acc += w * (j0 * j0 + j1 * j1);
        }
        total += len * acc;
    }
    Ok(total)
}

/// Replace the field by rigid motions on the listed component interiors.
/// The result has values wherever `u` has, plus the scope interiors.
pub fn extend(
    u: &DiscreteField,
    config: &Configuration,
    motions: &BTreeMap<CompId, RigidMotion>,
    scope: &[CompId],
) -> Result<DiscreteField, Error> {
    let mut out = u.clone();
    let e = u.spec.edge_len();
    for id in scope {
        let motion = motions
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("component {} has no motion", id.0)))?;
        let comp = config
            .component(*id)
            .ok_or_else(|| Error::InvalidInput(format!("component {} not in configuration", id.0)))?;
        for &c in comp.interior.iter() {
            let mut v = [0.0; 8];
            for dy in 0..2 {
                for dx in 0..2 {
                    let x = (c.x + dx as i32) as f64 * e;
                    let y = (c.y + dy as i32) as f64 * e;
                    let val = motion.eval(x, y);
                    v[slot(dx, dy, 0)] = val[0];
                    v[slot(dx, dy, 1)] = val[1];
                }
            }
            out.set_cell(c, v);
        }
    }
    Ok(out)
}

/// Least-squares rigid motion over a region.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RigidFit {
    pub motion: RigidMotion,
    /// `int |u - fit|^2` over the region.
    pub residual: f64,
    /// `int |u|^2` over the region.
    pub norm_sq: f64,
    /// Fit attempted on fewer than 2 cells.
    pub ill_conditioned: bool,
}

/// Minimize `int_region |u - (A x + b)|^2` over skew `A` and `b` by exact
/// normal equations (the integrands are at most biquadratic, so 2x2 Gauss
/// assembly is exact).
pub fn fit_rigid_motion(u: &DiscreteField, region: &GridSet) -> Result<RigidFit, Error> {
    let e = u.spec.edge_len();
    let cell_area = e * e;
    let mut gram = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    let mut norm_sq = 0.0;
    let mut n_cells = 0usize;
    for &c in region.iter() {
        let Some(_) = u.cell_values(c) else {
            return Err(Error::InvalidInput(format!(
                "fit region cell ({}, {}) outside the field domain",
                c.x, c.y
            )));
        };
        n_cells += 1;
        for &xi in &GAUSS2 {
            for &eta in &GAUSS2 {
                let w = 0.25 * cell_area;
                let x = (c.x as f64 + xi) * e;
                let y = (c.y as f64 + eta) * e;
                let val = u.eval_local(c, xi, eta).expect("cell in domain");
                // Basis: phi0 = (y, -x), phi1 = (1, 0), phi2 = (0, 1).
                let phi0 = [y, -x];
                gram[0][0] += w * (x * x + y * y);
                gram[0][1] += w * phi0[0];
                gram[0][2] += w * phi0[1];
                gram[1][1] += w;
                gram[2][2] += w;
                rhs[0] += w * (val[0] * phi0[0] + val[1] * phi0[1]);
                rhs[1] += w * val[0];
                rhs[2] += w * val[1];
                norm_sq += w * (val[0] * val[0] + val[1] * val[1]);
            }
        }
    }
    if n_cells == 0 {
        return Err(Error::InvalidInput("cannot fit a rigid motion on an empty region".into()));
    }
    gram[1][0] = gram[0][1];
    gram[2][0] = gram[0][2];
    gram[1][2] = 0.0;
    gram[2][1] = 0.0;
    let sol = solve3(gram, rhs)
        .ok_or_else(|| Error::Construction("singular normal equations in rigid fit".into()))?;
    let motion = RigidMotion { a: sol[0], b: [sol[1], sol[2]] };

    // Residual by the same exact quadrature.
    let mut residual = 0.0;
    for &c in region.iter() {
        for &xi in &GAUSS2 {
            for &eta in &GAUSS2 {
                let w = 0.25 * cell_area;
                let x = (c.x as f64 + xi) * e;
                let y = (c.y as f64 + eta) * e;
                let val = u.eval_local(c, xi, eta).expect("cell in domain");
                let m = motion.eval(x, y);
                let dx0 = val[0] - m[0];
                let dx1 = val[1] - m[1];
                residual += w * (dx0 * dx0 + dx1 * dx1);
            }
        }
    }
    Ok(RigidFit { motion, residual: residual.max(0.0), norm_sq, ill_conditioned: n_cells < 2 })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let mut piv = col;
        for row in (col + 1)..3 {
            if a[row][col].abs() > a[piv][col].abs() {
                piv = row;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for col in (0..3).rev() {
        let mut s = b[col];
        for k in (col + 1)..3 {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Some(x)
}

/// The symmetric total variation `int_D |sym grad u| + int_{D cap J} |[u]|`
/// together with the pieces needed by the split inequality
/// `(tv)^2 <= 2 |D| int|e|^2 + 2 H^1(D cap J) int |[u]|^2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TotalVariation {
    pub tv: f64,
    pub strain_l1: f64,
    pub strain_l2_sq: f64,
    pub jump_l1: f64,
    pub jump_l2_sq: f64,
    pub area: f64,
    pub jump_h1: f64,
}

/// Evaluate on the cells of `region`, counting jump edges interior to it
/// (both adjacent cells inside).
pub fn total_variation(u: &DiscreteField, region: &GridSet) -> Result<TotalVariation, Error> {
    let jumps = u.jump_edges();
    let interior_jumps = EdgeSet::from_iter(jumps.iter().copied().filter(|e| {
        let (a, b) = e.cells();
        region.contains(a) && region.contains(b)
    }));
    let sl1 = strain_l1(u, region);
    let sl2 = elastic_energy(u, region);
    let jl1 = jump_integral(u, &interior_jumps, 1)?;
    let jl2 = jump_sq_gauss4(u, &interior_jumps)?;
    Ok(TotalVariation {
        tv: sl1 + jl1,
        strain_l1: sl1,
        strain_l2_sq: sl2,
        jump_l1: jl1,
        jump_l2_sq: jl2,
        area: region.area(),
        jump_h1: interior_jumps.h1(&u.spec),
    })
}

/// Exact `int |u|^2` over a region.
pub fn l2_norm_sq(u: &DiscreteField, region: &GridSet) -> f64 {
    let cell_area = u.spec.edge_len() * u.spec.edge_len();
    let mut total = 0.0;
    for &c in region.iter() {
        if u.cell_values(c).is_none() {
            continue;
        }
        let mut acc = 0.0;
        for &xi in &GAUSS2 {
            for &eta in &GAUSS2 {
                let v = u.eval_local(c, xi, eta).expect("cell in domain");
                acc += v[0] * v[0] + v[1] * v[1];
            }
        }
        total += acc * 0.25 * cell_area;
    }
    total
}

/// Exact `int |u - motion|^2` over a region.
pub fn l2_dist_sq(u: &DiscreteField, region: &GridSet, motion: &RigidMotion) -> f64 {
    let e = u.spec.edge_len();
    let cell_area = e * e;
    let mut total = 0.0;
    for &c in region.iter() {
        if u.cell_values(c).is_none() {
            continue;
        }
        let mut acc = 0.0;
        for &xi in &GAUSS2 {
            for &eta in &GAUSS2 {
                let x = (c.x as f64 + xi) * e;
                let y = (c.y as f64 + eta) * e;
                let v = u.eval_local(c, xi, eta).expect("cell in domain");
                let m = motion.eval(x, y);
                let d0 = v[0] - m[0];
                let d1 = v[1] - m[1];
                acc += d0 * d0 + d1 * d1;
            }
        }
        total += acc * 0.25 * cell_area;
    }
    total
}

/// One rectangle-boundary jump family for the boundary-trace bound: the jump
/// edges inside the probed square together with the full boundary length of
/// the rectangle they came from.
#[derive(Debug, Clone)]
pub struct JumpFamily {
    pub edges_in_square: EdgeSet,
    pub full_h1: f64,
}

/// Boundary-trace comparison on a lattice square: exact boundary `L^2` norm
/// of the inner trace against the three-term volume/jump bound, with the
/// implied constant measured.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TraceCheck {
    pub lhs: f64,
    /// The three-term bound evaluated with unit constant.
    pub rhs_unit: f64,
    /// `lhs / rhs_unit` (0 when both vanish).
    pub measured_c: f64,
}

pub fn boundary_trace_norm(
    u: &DiscreteField,
    q: &LatticeRect,
    families: &[JumpFamily],
) -> Result<TraceCheck, Error> {
    let spec = u.spec;
    let len = spec.edge_len();
    // lhs: integrate |trace|^2 along each boundary edge from the inner cell.
    let mut lhs = 0.0;
    for e in q.boundary_edges().iter() {
        let (lo, hi) = e.cells();
        let (cell, side_local) = if q.contains_cell(lo) {
            (lo, true) // inner cell below/left: trace from its top/right side
        } else {
            (hi, false)
        };
        let v = u
            .cell_values(cell)
            .ok_or_else(|| Error::InvalidInput("trace cell outside field domain".into()))?;
        let mut p = [0.0; 2];
        let mut qq = [0.0; 2];
        for comp in 0..2 {
            let (a, b) = match (e.horiz, side_local) {
                (true, true) => (v[slot(0, 1, comp)], v[slot(1, 1, comp)]),
                (true, false) => (v[slot(0, 0, comp)], v[slot(1, 0, comp)]),
                (false, true) => (v[slot(1, 0, comp)], v[slot(1, 1, comp)]),
                (false, false) => (v[slot(0, 0, comp)], v[slot(0, 1, comp)]),
            };
            p[comp] = a;
            qq[comp] = b - a;
        }
        let pp = p[0] * p[0] + p[1] * p[1];
        let pq = p[0] * qq[0] + p[1] * qq[1];
        let q2 = qq[0] * qq[0] + qq[1] * qq[1];
        lhs += len * (pp + pq + q2 / 3.0);
    }

    let region = GridSet::from_rect(spec, q)?;
    let mu_q = q.width().max(q.height()) as f64 * spec.s;
    let alpha = elastic_energy(u, &region);
    let l2 = l2_norm_sq(u, &region);
    let mut sum_h1 = 0.0;
    let mut sum_scaled = 0.0;
    for fam in families {
        if fam.full_h1 <= 0.0 {
            continue;
        }
        sum_h1 += fam.full_h1;
        sum_scaled += jump_integral(u, &fam.edges_in_square, 2)? / fam.full_h1;
    }
    let rhs_unit = mu_q * alpha + l2 / mu_q + sum_h1 * sum_scaled;
    let measured_c = if rhs_unit > 0.0 { lhs / rhs_unit } else { 0.0 };
    Ok(TraceCheck { lhs, rhs_unit, measured_c })
}

/// Per-square rigid fits along a path of lattice cells, with the maximal
/// pairwise drift and the chained bound pieces.
#[derive(Debug, Clone)]
pub struct ChainedFit {
    pub motions: Vec<RigidMotion>,
    /// max over squares j and pairs (i1, i2) of `||a_i1 - a_i2||_{L^2(Q_j)}`.
    pub spread: f64,
    /// `(d / s) * sum_i ||a_i - a_{i+1}||_{L^2(Q_i u Q_{i+1})}`.
    pub chain_bound_unit: f64,
    /// spread / chain_bound_unit (0 when both vanish).
    pub measured_c: f64,
}

pub fn chained_rigid_fit(u: &DiscreteField, path: &[Cell]) -> Result<ChainedFit, Error> {
    if path.is_empty() {
        return Err(Error::InvalidInput("empty path".into()));
    }
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let adj = (a.x - b.x).abs() + (a.y - b.y).abs() <= 1;
        if !adj {
            return Err(Error::InvalidInput(format!(
                "path cells ({}, {}) and ({}, {}) are not adjacent",
                a.x, a.y, b.x, b.y
            )));
        }
    }
    let spec = u.spec;
    let mut motions = Vec::with_capacity(path.len());
    for &c in path {
        let region = GridSet::from_cells(spec, [c])?;
        motions.push(fit_rigid_motion(u, &region)?.motion);
    }
    let cell_rect = |c: Cell| LatticeRect { x0: c.x, y0: c.y, x1: c.x + 1, y1: c.y + 1 };
    let mut spread: f64 = 0.0;
    for &cj in path {
        let r = cell_rect(cj);
        for i1 in 0..motions.len() {
            for i2 in (i1 + 1)..motions.len() {
                let d = motions[i1].sub(&motions[i2]);
                spread = spread.max(d.l2_sq_on_rect(&spec, &r).sqrt());
            }
        }
    }
    let mut chain = 0.0;
    for i in 0..path.len().saturating_sub(1) {
        let r = cell_rect(path[i]).hull(&cell_rect(path[i + 1]));
        let d = motions[i].sub(&motions[i + 1]);
        chain += d.l2_sq_on_rect(&spec, &r).sqrt();
    }
    let d_max = {
        let e = spec.edge_len();
        let mut best: f64 = 0.0;
        for a in path {
            for b in path {
                let dx = (a.x - b.x) as f64 * e;
                let dy = (a.y - b.y) as f64 * e;
                best = best.max(dx.hypot(dy));
            }
        }
        best
    };
    let chain_bound_unit = chain * d_max / spec.s;
    let measured_c = if chain_bound_unit > 0.0 { spread / chain_bound_unit } else { 0.0 };
    Ok(ChainedFit { motions, spread, chain_bound_unit, measured_c })
}
