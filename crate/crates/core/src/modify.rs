//! The modification operator and the rectangularization procedures.
//!
//! A modification carves a rectangle `V` out of a configuration: `V` becomes
//! a new weight-1 component ordered first, every existing region loses its
//! cells under `V`, and surviving weights are rescaled so the weighted
//! diameter contribution never grows.

use serde::{Deserialize, Serialize};

use crate::grid::{
    merge_components, BoundaryComponent, CompId, Configuration, EdgeSet, GridSet, LatticeRect,
};
use crate::measures::{measure_star, total_measures, Params};
use crate::Error;

/// Result of one modification.
#[derive(Debug, Clone)]
pub struct ModifyOutcome {
    pub config: Configuration,
    /// Id of the new rectangle component.
    pub new_comp: CompId,
    /// Components whose region was entirely swallowed by the rectangle.
    pub dropped: Vec<CompId>,
}

/// Carve `V` out of `config`. Preconditions: the closure of `V` lies inside
/// the open ambient square and `|dV|_infty >= lambda`.
pub fn modify(config: &Configuration, v: &LatticeRect) -> Result<ModifyOutcome, Error> {
    let spec = config.spec;
    if !v.strictly_inside_ambient(&spec) {
        return Err(Error::InvalidInput(format!(
            "rectangle [{},{}]x[{},{}] is not strictly inside the ambient square",
            v.x0, v.x1, v.y0, v.y1
        )));
    }
    let vdiam = v.diam_inf(&spec);
    if vdiam < config.lambda - 1e-12 * spec.mu().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "rectangle diameter {vdiam} below the current scale {}",
            config.lambda
        )));
    }

    let mut out = Configuration::empty(spec);
    out.lambda = config.lambda;
    // Preserve id continuity.
    let mut work = config.clone();
    let new_id = work.fresh_id();

    let vcells = GridSet::from_rect(spec, v)?;
    let new_comp = BoundaryComponent {
        id: new_id,
        gamma: v.boundary_edges(),
        theta: EdgeSet::new(),
        interior: vcells,
        weight: 1.0,
        rect: Some(*v),
        touches_outer_boundary: false,
    };

    let mut interior = vec![new_comp];
    let mut boundary = Vec::new();
    let mut dropped = Vec::new();
    for comp in &work.components {
        let remaining = comp.interior.subtract_rect(v);
        if remaining.is_empty() {
            dropped.push(comp.id);
            continue;
        }
        let d_old = comp.interior.diam_inf();
        let d_new = remaining.diam_inf();
        let weight = if comp.weight == 1.0 {
            1.0
        } else {
            (comp.weight * (d_old / d_new)).min(1.0)
        };
        let touches = remaining.touches_ambient_boundary();
        let next = BoundaryComponent {
            id: comp.id,
            gamma: remaining.boundary(),
            theta: EdgeSet::new(),
            interior: remaining,
            weight,
            rect: comp.rect,
            touches_outer_boundary: touches,
        };
        if touches {
            boundary.push(next);
        } else {
            interior.push(next);
        }
    }
    interior.extend(boundary);
    out.components = interior;
    out.next_id = work.next_id;
    out.recompute_thetas();

    debug_assert!(thetas_match_subtraction(config, &out, v));

    Ok(ModifyOutcome { config: out, new_comp: new_id, dropped })
}

// Theta sets of survivors coincide with the old thetas minus the closed
// rectangle: a consequence of keeping the order and prepending dV.
fn thetas_match_subtraction(before: &Configuration, after: &Configuration, v: &LatticeRect) -> bool {
    for old in before.interior_components() {
        if let Some(new) = after.component(old.id) {
            if new.touches_outer_boundary {
                continue;
            }
            if new.theta != old.theta.subtract_closed_rect(v) {
                return false;
            }
        }
    }
    true
}

/// Exact weighted-measure change of a modification together with its a-priori
/// upper bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModificationEstimate {
    /// Exact `total_omega(after) - total_omega(before)`.
    pub delta_omega: f64,
    /// Upper bound: `|dV|_* - (1 - h_*) sum_engulfed omega |Gamma|_inf
    /// - h_* |thetas inside V|_H`.
    pub bound: f64,
    /// Interior components entirely engulfed by the closed rectangle.
    pub engulfed: Vec<CompId>,
}

pub fn estimate_modification(
    config: &Configuration,
    v: &LatticeRect,
    p: &Params,
) -> Result<ModificationEstimate, Error> {
    let spec = config.spec;
    let outcome = modify(config, v)?;
    let before = total_measures(config, p);
    let after = total_measures(&outcome.config, p);

    let mut engulfed = Vec::new();
    let mut engulfed_term = 0.0;
    let mut clipped_theta_units: u64 = 0;
    for comp in config.interior_components() {
        if comp.gamma.iter().all(|e| e.inside_closed_rect(v)) {
            engulfed.push(comp.id);
            engulfed_term += comp.weight * comp.diam_inf();
        }
        clipped_theta_units += comp.theta.within_closed_rect(v).len() as u64;
    }
    let v_star = measure_star(v.perimeter(&spec), v.diam_inf(&spec), p);
    let bound = v_star
        - (1.0 - p.h_star) * engulfed_term
        - p.h_star * clipped_theta_units as f64 * spec.edge_len();

    Ok(ModificationEstimate { delta_omega: after.omega - before.omega, bound, engulfed })
}

/// Result of growing a rectangle until the modified configuration is valid.
#[derive(Debug, Clone)]
pub struct RectangularizeOutcome {
    pub config: Configuration,
    pub v_prime: LatticeRect,
    pub new_comp: CompId,
    pub dropped: Vec<CompId>,
    /// Ids absorbed at each growth step, for reproducibility logs.
    pub growth_log: Vec<CompId>,
}

/// Grow `V` by absorbing every component that violates the class conditions
/// until the modification lands in the valid class at level `config.lambda`.
///
/// Each growth step merges at least one component into the rectangle, so the
/// loop terminates after at most the component count. Growth escaping the
/// ambient square is a hard failure: the caller must reject the candidate.
pub fn rectangularize(
    config: &Configuration,
    v: &LatticeRect,
    p: &Params,
) -> Result<RectangularizeOutcome, Error> {
    let mut current = *v;
    let mut growth_log = Vec::new();
    let cap = config.components.len() + 2;
    for _ in 0..cap {
        let outcome = modify(config, &current)?;
        match find_violation(&outcome.config, outcome.new_comp, p) {
            None => {
                let rep =
                    crate::measures::validate_class(&outcome.config, p, outcome.config.lambda);
                if !rep.all() {
                    return Err(Error::Construction(
                        "rectangularized configuration fails class validation".into(),
                    ));
                }
                return Ok(RectangularizeOutcome {
                    config: outcome.config,
                    v_prime: current,
                    new_comp: outcome.new_comp,
                    dropped: outcome.dropped,
                    growth_log,
                });
            }
            Some(violation) => {
                let grown = match violation {
                    Violation::Shape(id) => {
                        let comp = outcome.config.component(id).expect("violating component");
                        let b = comp
                            .gamma
                            .bbox()
                            .ok_or_else(|| Error::Construction("empty violating boundary".into()))?;
                        growth_log.push(id);
                        current.hull(&b)
                    }
                    Violation::RectCut(id, r) => {
                        growth_log.push(id);
                        current.hull(&r)
                    }
                };
                if !grown.strictly_inside_ambient(&config.spec) {
                    return Err(Error::Construction(
                        "rectangle growth escaped the ambient square".into(),
                    ));
                }
                if grown == current {
                    return Err(Error::Construction(
                        "rectangle growth stalled without resolving a violation".into(),
                    ));
                }
                current = grown;
            }
        }
    }
    Err(Error::Construction("rectangularization exceeded its step budget".into()))
}

enum Violation {
    /// Weight-1 component that is not a clean rectangle (or overlaps earlier
    /// boundaries): grow around its current boundary.
    Shape(CompId),
    /// Component whose carried rectangle is disconnected by some region:
    /// grow around the carried rectangle.
    RectCut(CompId, LatticeRect),
}

/// First violation of the shape/connectivity class conditions, scanning
/// shape violations before rectangle-cut violations, lowest order first.
fn find_violation(config: &Configuration, new_comp: CompId, p: &Params) -> Option<Violation> {
    let _ = p;
    for comp in config.interior_components() {
        if comp.id == new_comp {
            continue;
        }
        if comp.weight == 1.0 && (!comp.is_rectangular() || comp.theta != comp.gamma) {
            return Some(Violation::Shape(comp.id));
        }
    }
    for comp in config.interior_components() {
        if comp.weight < 1.0 {
            if let Some(r) = comp.rect {
                if let Ok(rset) = GridSet::from_rect(config.spec, &r) {
                    for other in &config.components {
                        if !rset.difference(&other.interior).is_connected() {
                            return Some(Violation::RectCut(comp.id, r));
                        }
                    }
                }
            }
        }
    }
    None
}

/// Replace every boundary component by rectangles: repeatedly pick a
/// component that is not a clean disjoint rectangle, enclose it together
/// with every component its boundary touches, carve the hull and merge the
/// pieces meeting the new rectangle boundary. All weights end at 1.
///
/// Requires connected boundary components (so the enclosing rectangle never
/// increases the combined measure).
pub fn initial_rectangularization(
    config: &Configuration,
    p: &Params,
) -> Result<Configuration, Error> {
    let mut current = config.clone();
    for comp in &mut current.components {
        comp.weight = 1.0;
        comp.rect = None;
    }
    current.recompute_thetas();

    let cap = 4 * config.components.len() + 4;
    for _ in 0..cap {
        let bad = first_untidy_component(&current);
        let Some(bad_id) = bad else {
            for comp in &mut current.components {
                if !comp.touches_outer_boundary {
                    comp.rect = comp.interior.bbox();
                }
            }
            return Ok(current);
        };

        // Enclose the untidy component and everything sharing boundary edges.
        let bad_comp = current.component(bad_id).expect("component present");
        let mut group = vec![bad_id];
        for other in current.interior_components() {
            if other.id != bad_id && !other.gamma.is_disjoint(&bad_comp.gamma) {
                group.push(other.id);
            }
        }
        let mut bbox = bad_comp.gamma.bbox().expect("nonempty boundary");
        for id in &group[1..] {
            let g = &current.component(*id).expect("component present").gamma;
            bbox = bbox.hull(&g.bbox().expect("nonempty boundary"));
        }
        if !bbox.strictly_inside_ambient(&current.spec) {
            return Err(Error::Construction(
                "enclosing rectangle escaped the ambient square".into(),
            ));
        }
        let outcome = modify(&current, &bbox)?;
        // Merge every surviving interior piece sharing edges with the new
        // rectangle boundary back into the rectangle component.
        let v_edges = bbox.boundary_edges();
        let mut to_merge = vec![outcome.new_comp];
        for comp in outcome.config.interior_components() {
            if comp.id != outcome.new_comp && !comp.gamma.is_disjoint(&v_edges) {
                to_merge.push(comp.id);
            }
        }
        current = merge_components(&outcome.config, &to_merge)?;
        for comp in &mut current.components {
            comp.weight = 1.0;
            comp.rect = None;
        }
        current.recompute_thetas();
    }
    let _ = p;
    Err(Error::Construction("rectangularization loop exceeded its budget".into()))
}

/// First interior component that is not a rectangle with exclusive boundary,
/// or that shares boundary edges with another interior component. Contact in
/// a single vertex carries no length and keeps both components valid.
fn first_untidy_component(config: &Configuration) -> Option<CompId> {
    let interior: Vec<&BoundaryComponent> = config.interior_components().collect();
    for (i, comp) in interior.iter().enumerate() {
        if !comp.is_rectangular() || comp.theta != comp.gamma {
            return Some(comp.id);
        }
        for other in interior.iter().skip(i + 1) {
            if !comp.gamma.is_disjoint(&other.gamma) {
                return Some(comp.id);
            }
        }
    }
    None
}

/// Restore connected components (merging regions whose closures touch), then
/// rectangularize. Output components are pairwise disjoint rectangles with
/// weight 1 and the total `|.|_*` measure never increases.
pub fn final_normalize(config: &Configuration, p: &Params) -> Result<Configuration, Error> {
    // Union-find over interior components: merge groups whose boundaries
    // share a point.
    let interior: Vec<CompId> = config.interior_components().map(|c| c.id).collect();
    let n = interior.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    let comps: Vec<&BoundaryComponent> =
        interior.iter().map(|id| config.component(*id).expect("component")).collect();
    for i in 0..n {
        for j in (i + 1)..n {
            if comps[i].gamma.touches(&comps[j].gamma) {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri] = rj;
                }
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<CompId>> = Default::default();
    for i in 0..n {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(interior[i]);
    }
    let mut merged = config.clone();
    for ids in groups.values() {
        if ids.len() > 1 {
            merged = merge_components(&merged, ids)?;
        }
    }
    initial_rectangularization(&merged, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{components_of, fill_holes, Cell, LatticeSpec};
    use crate::measures::validate_class;
    use std::collections::BTreeSet;

    fn spec() -> LatticeSpec {
        LatticeSpec::new(0.0625, 8).unwrap()
    }

    fn rect_cells(r: &LatticeRect) -> BTreeSet<Cell> {
        r.cells().collect()
    }

    fn config_from_rects(spec: LatticeSpec, rects: &[LatticeRect]) -> Configuration {
        let groups: Vec<BTreeSet<Cell>> = rects.iter().map(rect_cells).collect();
        let mut removed = GridSet::empty(spec);
        for g in &groups {
            removed = removed.union(&GridSet::from_cells(spec, g.iter().copied()).unwrap());
        }
        let mut cfg = components_of(&removed, spec, &groups).unwrap();
        for (comp, r) in cfg.components.iter_mut().zip(rects) {
            comp.rect = Some(*r);
        }
        cfg
    }

    #[test]
    fn modify_disjoint_rectangle_adds_component() {
        let s = spec();
        let cfg = config_from_rects(s, &[LatticeRect::new(-4, -4, -2, -2).unwrap()]);
        let v = LatticeRect::new(2, 2, 4, 4).unwrap();
        let out = modify(&cfg, &v).unwrap();
        assert_eq!(out.config.components.len(), 2);
        assert!(out.dropped.is_empty());
        // New component ordered first with unit weight.
        assert_eq!(out.config.components[0].id, out.new_comp);
        assert_eq!(out.config.components[0].weight, 1.0);
        out.config.check_invariants().unwrap();
    }

    #[test]
    fn modify_engulfing_drops_component() {
        let s = spec();
        let inner = LatticeRect::new(0, 0, 2, 2).unwrap();
        let cfg = config_from_rects(s, &[inner]);
        let v = LatticeRect::new(-1, -1, 3, 3).unwrap();
        let p = Params::default();
        let est = estimate_modification(&cfg, &v, &p).unwrap();
        assert_eq!(est.engulfed.len(), 1);
        // Exact change <= a-priori bound.
        assert!(est.delta_omega <= est.bound + 1e-12);
        // With the component engulfed and nothing else touched, the change is
        // exactly the new rectangle's measure minus the removed one.
        let comp = &cfg.components[0];
        let theta_omega = crate::measures::measure_omega(
            comp.theta.h1(&s),
            comp.diam_inf(),
            comp.weight,
            &p,
        );
        let v_star = measure_star(v.perimeter(&s), v.diam_inf(&s), &p);
        assert!((est.delta_omega - (v_star - theta_omega)).abs() < 1e-12);
        let out = modify(&cfg, &v).unwrap();
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.config.components.len(), 1);
    }

    #[test]
    fn modify_rejects_escaping_rectangle() {
        let s = spec();
        let cfg = config_from_rects(s, &[LatticeRect::new(0, 0, 1, 1).unwrap()]);
        assert!(modify(&cfg, &LatticeRect::new(-8, 0, 1, 1).unwrap()).is_err());
    }

    #[test]
    fn modify_weight_update_slicing() {
        let s = spec();
        // A 4x1 bar sliced in half by V.
        let bar = LatticeRect::new(-2, 0, 2, 1).unwrap();
        let mut cfg = config_from_rects(s, &[bar]);
        cfg.components[0].weight = 0.92;
        let v = LatticeRect::new(-1, -1, 1, 2).unwrap();
        let out = modify(&cfg, &v).unwrap();
        let survivor = out.config.component(cfg.components[0].id).unwrap();
        let w_old = 0.92;
        let d_old = cfg.components[0].diam_inf();
        let d_new = survivor.diam_inf();
        assert!(survivor.weight >= w_old);
        assert!(survivor.weight * d_new <= w_old * d_old + 1e-12);
    }

    #[test]
    fn estimate_disjoint_rectangle_is_exact_star() {
        let s = spec();
        let cfg = config_from_rects(s, &[LatticeRect::new(-4, -4, -3, -3).unwrap()]);
        let v = LatticeRect::new(2, 2, 4, 4).unwrap();
        let p = Params::default();
        let est = estimate_modification(&cfg, &v, &p).unwrap();
        let v_star = measure_star(v.perimeter(&s), v.diam_inf(&s), &p);
        assert!((est.delta_omega - v_star).abs() < 1e-12);
        assert!((est.bound - v_star).abs() < 1e-12);
    }

    #[test]
    fn rectangularize_fixed_point() {
        let s = spec();
        let cfg = config_from_rects(s, &[LatticeRect::new(-4, -4, -3, -3).unwrap()]);
        let v = LatticeRect::new(2, 2, 4, 4).unwrap();
        let out = rectangularize(&cfg, &v, &Params::default()).unwrap();
        assert_eq!(out.v_prime, v);
        assert!(out.growth_log.is_empty());
    }

    #[test]
    fn rectangularize_absorbs_overlapped_rectangle() {
        let s = spec();
        let other = LatticeRect::new(1, -1, 5, 2).unwrap();
        let cfg = config_from_rects(s, &[other]);
        let p = Params::default();
        let v = LatticeRect::new(-2, 0, 3, 1).unwrap();
        let out = rectangularize(&cfg, &v, &p).unwrap();
        // V' must be the bounding box of both rectangles.
        assert_eq!(out.v_prime, v.hull(&other));
        assert!(validate_class(&out.config, &p, 0.0).all());
        // Weighted measure did not increase relative to the plain modification.
        let est = estimate_modification(&cfg, &v, &p).unwrap();
        let before = total_measures(&cfg, &p);
        let after = total_measures(&out.config, &p);
        assert!(after.omega <= before.omega + est.delta_omega.max(0.0) + est.bound.abs() + 1e-9);
    }

    #[test]
    fn rectangularize_chain_terminates_with_fewer_components() {
        let s = spec();
        // Three overlapping-ish rectangles forming a chain.
        let r1 = LatticeRect::new(0, 0, 2, 3).unwrap();
        let r2 = LatticeRect::new(2, 1, 4, 4).unwrap();
        let r3 = LatticeRect::new(4, 2, 6, 5).unwrap();
        let cfg = config_from_rects(s, &[r1, r2, r3]);
        let v = LatticeRect::new(0, 0, 3, 2).unwrap();
        let out = rectangularize(&cfg, &v, &Params::default()).unwrap();
        assert!(out.config.components.len() < 4);
        assert!(validate_class(&out.config, &Params::default(), 0.0).all());
    }

    #[test]
    fn initial_rectangularization_identity_on_disjoint_rects() {
        let s = spec();
        let cfg = config_from_rects(
            s,
            &[LatticeRect::new(-4, -4, -2, -2).unwrap(), LatticeRect::new(1, 1, 3, 3).unwrap()],
        );
        let p = Params::default();
        let out = initial_rectangularization(&cfg, &p).unwrap();
        assert_eq!(out.components.len(), 2);
        assert!(validate_class(&out, &p, 0.0).all());
        let before = total_measures(&cfg, &p);
        let after = total_measures(&out, &p);
        assert!(after.star <= before.star + 1e-12);
    }

    #[test]
    fn initial_rectangularization_l_shape_gets_bounding_box() {
        let s = spec();
        // L-shaped connected region.
        let cells: BTreeSet<Cell> = [
            Cell::new(0, 0),
            Cell::new(1, 0),
            Cell::new(2, 0),
            Cell::new(0, 1),
            Cell::new(0, 2),
        ]
        .into_iter()
        .collect();
        let removed = GridSet::from_cells(s, cells.iter().copied()).unwrap();
        let cfg = components_of(&removed, s, &[cells]).unwrap();
        let p = Params::default();
        let out = initial_rectangularization(&cfg, &p).unwrap();
        assert_eq!(out.components.len(), 1);
        assert!(out.components[0].is_rectangular());
        assert_eq!(out.components[0].interior.bbox().unwrap(), LatticeRect::new(0, 0, 3, 3).unwrap());
        // |dR|_* <= |Gamma|_* for a connected component.
        let before = total_measures(&cfg, &p);
        let after = total_measures(&out, &p);
        assert!(after.star <= before.star + 1e-12);
        // H(U) contains H(W).
        assert!(fill_holes(&cfg).is_subset(&fill_holes(&out)));
    }

    #[test]
    fn final_normalize_reconnects_and_rectangularizes() {
        let s = spec();
        // Two touching cells as separate components plus a far rectangle.
        let a = Cell::new(0, 0);
        let b = Cell::new(1, 0);
        let far = LatticeRect::new(-5, -5, -4, -4).unwrap();
        let groups: Vec<BTreeSet<Cell>> =
            vec![[a].into(), [b].into(), far.cells().collect()];
        let mut removed = GridSet::empty(s);
        for g in &groups {
            removed = removed.union(&GridSet::from_cells(s, g.iter().copied()).unwrap());
        }
        let cfg = components_of(&removed, s, &groups).unwrap();
        let p = Params::default();
        let out = final_normalize(&cfg, &p).unwrap();
        assert_eq!(out.components.len(), 2);
        assert!(validate_class(&out, &p, 0.0).all());
        let before = total_measures(&cfg, &p);
        let after = total_measures(&out, &p);
        assert!(after.star <= before.star + 1e-12);
    }
}
