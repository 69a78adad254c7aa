//! Property tests for the lattice set algebra and surface measures.

use proptest::prelude::*;
use std::collections::BTreeSet;

use crackmod_core::grid::{components_of, Cell, GridSet, LatticeRect, LatticeSpec};
use crackmod_core::measures::{total_measures, Params};

fn spec() -> LatticeSpec {
    LatticeSpec::new(0.03125, 16).unwrap()
}

/// A connected blob grown by a directed walk from a seed.
fn blob_strategy() -> impl Strategy<Value = BTreeSet<Cell>> {
    (
        -8i32..6,
        -8i32..6,
        proptest::collection::vec(0u8..4, 0..24),
    )
        .prop_map(|(x0, y0, steps)| {
            let mut cells = BTreeSet::new();
            let mut c = Cell::new(x0, y0);
            cells.insert(c);
            for s in steps {
                let n = c.edge_neighbors()[s as usize];
                if n.x > -16 && n.x < 15 && n.y > -16 && n.y < 15 {
                    c = n;
                    cells.insert(c);
                }
            }
            cells
        })
}

fn rect_strategy() -> impl Strategy<Value = LatticeRect> {
    (-14i32..10, -14i32..10, 1i32..6, 1i32..6)
        .prop_map(|(x0, y0, w, h)| LatticeRect { x0, y0, x1: x0 + w, y1: y0 + h })
}

/// Independent flood fill, written against plain sets rather than the
/// library's traversal.
fn flood_fill_oracle(cells: &BTreeSet<Cell>) -> Vec<BTreeSet<Cell>> {
    let mut remaining = cells.clone();
    let mut out = Vec::new();
    while let Some(&seed) = remaining.iter().next() {
        let mut comp = BTreeSet::new();
        let mut stack = vec![seed];
        remaining.remove(&seed);
        while let Some(c) = stack.pop() {
            comp.insert(c);
            for n in [
                Cell::new(c.x - 1, c.y),
                Cell::new(c.x + 1, c.y),
                Cell::new(c.x, c.y - 1),
                Cell::new(c.x, c.y + 1),
            ] {
                if remaining.remove(&n) {
                    stack.push(n);
                }
            }
        }
        out.push(comp);
    }
    out.sort_by(|a, b| a.iter().next().cmp(&b.iter().next()));
    out
}

#[test]
fn connected_components_match_flood_fill_oracle() {
    // Random 16x16 masks against the independent oracle.
    let s = spec();
    let mut state = 0x9E3779B97F4A7C15u64;
    for _ in 0..50 {
        let mut cells = BTreeSet::new();
        for x in -8..8 {
            for y in -8..8 {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                if state >> 62 == 0 {
                    cells.insert(Cell::new(x, y));
                }
            }
        }
        let set = GridSet::from_cells(s, cells.iter().copied()).unwrap();
        let got: Vec<BTreeSet<Cell>> = set
            .connected_components()
            .into_iter()
            .map(|g| g.iter().copied().collect())
            .collect();
        assert_eq!(got, flood_fill_oracle(&cells));
    }
}

#[test]
fn totals_match_per_edge_enumeration_oracle() {
    // Three-component fixture: every total recomputed edge by edge.
    let s = spec();
    let p = Params::default();
    let groups: Vec<BTreeSet<Cell>> = vec![
        [Cell::new(0, 0), Cell::new(1, 0), Cell::new(1, 1)].into_iter().collect(),
        [Cell::new(2, 1), Cell::new(2, 2)].into_iter().collect(),
        [Cell::new(-3, -3)].into_iter().collect(),
    ];
    let mut all = BTreeSet::new();
    for g in &groups {
        all.extend(g.iter().copied());
    }
    let removed = GridSet::from_cells(s, all.iter().copied()).unwrap();
    let cfg = components_of(&removed, s, &groups).unwrap();
    let got = total_measures(&cfg, &p);

    // Oracle: enumerate the four edges of every cell; an edge belongs to a
    // group's boundary iff exactly one of its sides is in the group. The
    // exclusive sets follow the declared order.
    let mut h_units = 0u64;
    let mut star = 0.0;
    let mut seen: BTreeSet<(i32, i32, bool)> = BTreeSet::new();
    for g in &groups {
        let mut theta_units = 0u64;
        let mut cols = BTreeSet::new();
        let mut rows = BTreeSet::new();
        for &c in g {
            cols.insert(c.x);
            rows.insert(c.y);
            for e in c.edges() {
                let (a, b) = e.cells();
                if g.contains(&a) != g.contains(&b) && seen.insert((e.x, e.y, e.horiz)) {
                    theta_units += 1;
                }
            }
        }
        h_units += theta_units;
        let diam = s.edge_len() * ((cols.len() * cols.len() + rows.len() * rows.len()) as f64).sqrt();
        star += p.h_star * theta_units as f64 * s.edge_len() + (1.0 - p.h_star) * diam;
    }
    assert!((got.h - h_units as f64 * s.edge_len()).abs() < 1e-12);
    assert!((got.star - star).abs() < 1e-12);
    assert_eq!(got.star, got.omega);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// The projection diameter never exceeds half the boundary length.
    #[test]
    fn diameter_at_most_half_boundary(blob in blob_strategy()) {
        let s = spec();
        let x = GridSet::from_cells(s, blob.iter().copied()).unwrap();
        let gamma = x.boundary();
        let (p1, p2) = x.proj_counts();
        let h = gamma.len() as u64;
        prop_assert!(4 * (p1 * p1 + p2 * p2) <= h * h);
    }

    /// Removing a closed rectangle shrinks projections and retained length.
    #[test]
    fn rectangle_removal_is_monotone(blob in blob_strategy(), v in rect_strategy()) {
        let s = spec();
        let x = GridSet::from_cells(s, blob.iter().copied()).unwrap();
        let cut = x.subtract_rect(&v);
        if !cut.is_empty() {
            let (p1, p2) = x.proj_counts();
            let (q1, q2) = cut.proj_counts();
            prop_assert!(q1 <= p1 && q2 <= p2);
        }
        let gamma = x.boundary();
        prop_assert!(gamma.subtract_closed_rect(&v).len() <= gamma.len());
    }

    /// Union bounds: diameter subadditive, boundary length bounded by parts.
    #[test]
    fn union_bounds(blob in blob_strategy(), v in rect_strategy()) {
        let s = spec();
        let x = GridSet::from_cells(s, blob.iter().copied()).unwrap();
        let vx = GridSet::from_rect(s, &v).unwrap();
        let union = x.union(&vx);
        let d_union = union.diam_inf();
        prop_assert!(d_union <= vx.diam_inf() + x.diam_inf() + 1e-12);
        let ub = union.boundary();
        let vb = v.boundary_edges();
        let gamma = x.boundary();
        prop_assert!(ub.len() <= vb.len() + gamma.difference(&vb).len());
    }

    /// The sum of exclusive boundary lengths equals the length of the union
    /// of all boundaries, for every component order.
    #[test]
    fn theta_sum_is_order_independent(
        blobs in proptest::collection::vec(blob_strategy(), 1..4),
        order_seed in 0u64..1000,
    ) {
        let s = spec();
        // Disjointify: drop cells already claimed.
        let mut claimed: BTreeSet<Cell> = BTreeSet::new();
        let mut groups: Vec<BTreeSet<Cell>> = Vec::new();
        for b in blobs {
            let g: BTreeSet<Cell> = b.difference(&claimed).copied().collect();
            if !g.is_empty() {
                claimed.extend(g.iter().copied());
                groups.push(g);
            }
        }
        let removed = GridSet::from_cells(s, claimed.iter().copied()).unwrap();
        let cfg = components_of(&removed, s, &groups).unwrap();
        let p = Params::default();
        let base = total_measures(&cfg, &p);

        // Union of all interior boundaries, counted once.
        let mut union_edges = crackmod_core::grid::EdgeSet::new();
        for comp in cfg.interior_components() {
            union_edges = union_edges.union(&comp.gamma);
        }
        prop_assert!((base.h - union_edges.h1(&s)).abs() < 1e-12);

        // Permute groups deterministically from the seed.
        let mut perm: Vec<usize> = (0..groups.len()).collect();
        let mut state = order_seed;
        for i in (1..perm.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let j = (state >> 33) as usize % (i + 1);
            perm.swap(i, j);
        }
        let permuted: Vec<BTreeSet<Cell>> = perm.iter().map(|&i| groups[i].clone()).collect();
        let cfg2 = components_of(&removed, s, &permuted).unwrap();
        let t2 = total_measures(&cfg2, &p);
        prop_assert!((base.h - t2.h).abs() < 1e-12);
        prop_assert!((base.inf - t2.inf).abs() < 1e-12);
    }

    /// Hole filling is idempotent and monotone.
    #[test]
    fn fill_holes_idempotent_monotone(blobs in proptest::collection::vec(blob_strategy(), 1..3)) {
        let s = spec();
        let mut claimed: BTreeSet<Cell> = BTreeSet::new();
        let mut groups = Vec::new();
        for b in blobs {
            let g: BTreeSet<Cell> = b.difference(&claimed).copied().collect();
            if !g.is_empty() {
                claimed.extend(g.iter().copied());
                groups.push(g);
            }
        }
        let removed = GridSet::from_cells(s, claimed.iter().copied()).unwrap();
        let cfg = components_of(&removed, s, &groups).unwrap();
        let w = cfg.w_cells();
        let h = crackmod_core::grid::fill_holes(&cfg);
        prop_assert!(w.is_subset(&h));
        // Re-filling the filled set changes nothing: its complement consists
        // of boundary-touching regions only.
        let again = components_of(
            &GridSet::full(s).difference(&h),
            s,
            &GridSet::full(s)
                .difference(&h)
                .connected_components()
                .iter()
                .map(|g| g.iter().copied().collect())
                .collect::<Vec<_>>(),
        )
        .unwrap();
        prop_assert_eq!(crackmod_core::grid::fill_holes(&again), h);
    }

    /// Rebuilding components from groups reproduces the input boundaries.
    #[test]
    fn components_round_trip(blob in blob_strategy()) {
        let s = spec();
        let removed = GridSet::from_cells(s, blob.iter().copied()).unwrap();
        let cfg = components_of(&removed, s, &[blob.clone()]).unwrap();
        prop_assert_eq!(cfg.components.len(), 1);
        let comp = &cfg.components[0];
        prop_assert_eq!(&comp.gamma, &comp.interior.boundary());
        prop_assert_eq!(&comp.interior, &removed);
    }

    /// A connected component's diameter equals its bounding box diameter.
    #[test]
    fn connected_diameter_equals_bbox(blob in blob_strategy()) {
        let s = spec();
        let x = GridSet::from_cells(s, blob.iter().copied()).unwrap();
        // The walk-generated blob is edge-connected by construction.
        prop_assert!(x.is_connected());
        let bbox = x.bbox().unwrap();
        prop_assert!((x.diam_inf() - bbox.diam_inf(&s)).abs() < 1e-12);
    }
}
