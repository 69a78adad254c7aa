//! Seeded generators for configurations and displacement fields.
//!
//! Everything here is deterministic given the seed; the acceptance suite and
//! the scenario loader both build their inputs through these.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use crate::field::{elastic_energy, DiscreteField, RigidMotion};
use crate::grid::{
    components_of, Cell, Configuration, GridSet, LatticeRect, LatticeSpec,
};
use crate::Error;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random cell soup grouped by edge-connectivity.
pub fn random_soup(spec: LatticeSpec, fill: f64, rng: &mut ChaCha8Rng) -> Configuration {
    let k = spec.half_cells;
    let mut cells = BTreeSet::new();
    // Keep a margin so every component stays interior.
    for x in (-k + 1)..(k - 1) {
        for y in (-k + 1)..(k - 1) {
            if rng.gen::<f64>() < fill {
                cells.insert(Cell::new(x, y));
            }
        }
    }
    let removed = GridSet::from_cells(spec, cells.iter().copied()).expect("cells in range");
    let groups: Vec<BTreeSet<Cell>> = removed
        .connected_components()
        .into_iter()
        .map(|g| g.iter().copied().collect())
        .collect();
    components_of(&removed, spec, &groups).expect("partition by construction")
}

/// Random interior rectangle with side lengths in `[1, max_side]` cells.
pub fn random_rect(spec: LatticeSpec, max_side: i32, rng: &mut ChaCha8Rng) -> LatticeRect {
    let k = spec.half_cells;
    let w = rng.gen_range(1..=max_side);
    let h = rng.gen_range(1..=max_side);
    let x0 = rng.gen_range((-k + 1)..(k - w));
    let y0 = rng.gen_range((-k + 1)..(k - h));
    LatticeRect { x0, y0, x1: x0 + w, y1: y0 + h }
}

/// A configuration of pairwise disjoint random rectangles (weight 1).
pub fn random_disjoint_rects(
    spec: LatticeSpec,
    count: usize,
    max_side: i32,
    rng: &mut ChaCha8Rng,
) -> Configuration {
    let mut rects: Vec<LatticeRect> = Vec::new();
    let mut attempts = 0;
    while rects.len() < count && attempts < 200 * count {
        attempts += 1;
        let r = random_rect(spec, max_side, rng);
        // Disjoint closures: dilate by one vertex unit before testing.
        if rects.iter().all(|e| !e.dilate(1).meets_closed(&r)) {
            rects.push(r);
        }
    }
    config_from_rects(spec, &rects).expect("disjoint by construction")
}

/// Build a configuration from explicit rectangles (one component each).
pub fn config_from_rects(spec: LatticeSpec, rects: &[LatticeRect]) -> Result<Configuration, Error> {
    let groups: Vec<BTreeSet<Cell>> = rects.iter().map(|r| r.cells().collect()).collect();
    let mut removed = GridSet::empty(spec);
    for g in &groups {
        let gs = GridSet::from_cells(spec, g.iter().copied())?;
        if !removed.is_disjoint(&gs) {
            return Err(Error::InvalidInput("component rectangles overlap".into()));
        }
        removed = removed.union(&gs);
    }
    let mut cfg = components_of(&removed, spec, &groups)?;
    for comp in &mut cfg.components {
        comp.rect = comp.interior.bbox();
    }
    Ok(cfg)
}

/// Generator (a): a global rigid motion plus a smooth perturbation.
pub fn field_rigid_plus_smooth(
    spec: LatticeSpec,
    domain: &GridSet,
    amplitude: f64,
    seed: u64,
) -> DiscreteField {
    let mut r = rng(seed);
    let motion = RigidMotion {
        a: r.gen_range(-1.0..1.0),
        b: [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)],
    };
    let mu = spec.mu();
    let (k1, k2) = (r.gen_range(1..4) as f64, r.gen_range(1..4) as f64);
    let (p1, p2) = (r.gen_range(0.0..std::f64::consts::PI), r.gen_range(0.0..std::f64::consts::PI));
    DiscreteField::from_fn(spec, domain, move |x, y| {
        let base = motion.eval(x, y);
        let sx = (k1 * std::f64::consts::PI * x / mu + p1).sin();
        let sy = (k2 * std::f64::consts::PI * y / mu + p2).sin();
        [base[0] + amplitude * sx * sy, base[1] + amplitude * sx.cos() * sy]
    })
}

/// Generator (b): an independent rigid motion on each connected piece of the
/// live region.
pub fn field_piecewise_rigid(
    spec: LatticeSpec,
    domain: &GridSet,
    amplitude: f64,
    seed: u64,
) -> DiscreteField {
    let mut r = rng(seed);
    let pieces = domain.connected_components();
    let motions: Vec<RigidMotion> = pieces
        .iter()
        .map(|_| RigidMotion {
            a: amplitude * r.gen_range(-1.0..1.0),
            b: [amplitude * r.gen_range(-1.0..1.0), amplitude * r.gen_range(-1.0..1.0)],
        })
        .collect();
    DiscreteField::from_cell_fn(spec, domain, move |c, x, y| {
        for (piece, m) in pieces.iter().zip(&motions) {
            if piece.contains(c) {
                return m.eval(x, y);
            }
        }
        [0.0, 0.0]
    })
}

/// Generator (c): vertex-noise field of prescribed elastic energy. Values are
/// shared per vertex so the field is conforming on the whole domain.
pub fn field_noise_with_energy(
    spec: LatticeSpec,
    domain: &GridSet,
    target_alpha: f64,
    seed: u64,
) -> DiscreteField {
    use std::collections::BTreeMap;
    let mut r = rng(seed);
    let mut vertex_vals: BTreeMap<(i32, i32), [f64; 2]> = BTreeMap::new();
    for &c in domain.iter() {
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            vertex_vals
                .entry((c.x + dx, c.y + dy))
                .or_insert_with(|| [r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5]);
        }
    }
    let raw = DiscreteField::from_fn_vertex(spec, domain, &vertex_vals);
    let alpha0 = elastic_energy(&raw, domain);
    if alpha0 <= 0.0 || target_alpha <= 0.0 {
        return raw.scale(0.0);
    }
    raw.scale((target_alpha / alpha0).sqrt())
}

/// Vertex-noise localized to a sub-rectangle, zero outside; prescribed energy.
pub fn field_noise_in_rect(
    spec: LatticeSpec,
    domain: &GridSet,
    rect: &LatticeRect,
    target_alpha: f64,
    seed: u64,
) -> DiscreteField {
    use std::collections::BTreeMap;
    let mut r = rng(seed);
    let mut vertex_vals: BTreeMap<(i32, i32), [f64; 2]> = BTreeMap::new();
    for &c in domain.iter() {
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let vx = c.x + dx;
            let vy = c.y + dy;
            // Strictly interior vertices of the rectangle carry noise; the
            // rim stays zero so the field vanishes outside.
            let inside = vx > rect.x0 && vx < rect.x1 && vy > rect.y0 && vy < rect.y1;
            vertex_vals.entry((vx, vy)).or_insert_with(|| {
                if inside {
                    [r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5]
                } else {
                    [0.0, 0.0]
                }
            });
        }
    }
    let raw = DiscreteField::from_fn_vertex(spec, domain, &vertex_vals);
    let alpha0 = elastic_energy(&raw, domain);
    if alpha0 <= 0.0 || target_alpha <= 0.0 {
        return raw.scale(0.0);
    }
    raw.scale((target_alpha / alpha0).sqrt())
}

/// Random rigid motion with parameters in `[-scale, scale]`.
pub fn random_motion(scale: f64, rng: &mut ChaCha8Rng) -> RigidMotion {
    RigidMotion {
        a: scale * (rng.gen::<f64>() * 2.0 - 1.0),
        b: [
            scale * (rng.gen::<f64>() * 2.0 - 1.0),
            scale * (rng.gen::<f64>() * 2.0 - 1.0),
        ],
    }
}

impl DiscreteField {
    /// Build a conforming field from explicit per-vertex values.
    pub fn from_fn_vertex(
        spec: LatticeSpec,
        domain: &GridSet,
        vertex_vals: &std::collections::BTreeMap<(i32, i32), [f64; 2]>,
    ) -> DiscreteField {
        DiscreteField::from_cell_fn(spec, domain, |c, x, y| {
            let e = spec.edge_len();
            let vx = (x / e).round() as i32;
            let vy = (y / e).round() as i32;
            let _ = c;
            vertex_vals.get(&(vx, vy)).copied().unwrap_or([0.0, 0.0])
        })
    }
}
