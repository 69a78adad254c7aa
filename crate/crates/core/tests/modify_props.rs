//! Property tests for the modification operator and rectangularization.

use proptest::prelude::*;

use crackmod_core::gen;
use crackmod_core::grid::{GridSet, LatticeRect, LatticeSpec};
use crackmod_core::measures::{measure_star, total_measures, validate_class, Params};
use crackmod_core::modify::{
    estimate_modification, final_normalize, initial_rectangularization, modify, rectangularize,
};

fn spec() -> LatticeSpec {
    LatticeSpec::new(0.03125, 16).unwrap()
}

fn rect_strategy() -> impl Strategy<Value = LatticeRect> {
    (-14i32..8, -14i32..8, 1i32..8, 1i32..8)
        .prop_map(|(x0, y0, w, h)| LatticeRect { x0, y0, x1: x0 + w, y1: y0 + h })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Weight update: never decreases, weighted diameter never increases,
    /// exclusive boundary length never increases, id map is injective and
    /// order-preserving.
    #[test]
    fn modification_bookkeeping(seed in 0u64..5000, v in rect_strategy()) {
        let s = spec();
        let mut rng = gen::rng(seed);
        let mut cfg = gen::random_disjoint_rects(s, 3, 4, &mut rng);
        for (i, comp) in cfg.components.iter_mut().enumerate() {
            if i % 2 == 1 {
                comp.weight = 0.92;
            }
        }
        let Ok(out) = modify(&cfg, &v) else { return Ok(()); };
        let mut last_pos = None;
        for old in cfg.interior_components() {
            let new_pos = out.config.components.iter().position(|c| c.id == old.id);
            if let Some(pos) = new_pos {
                // Order preserved among survivors.
                if let Some(prev) = last_pos {
                    prop_assert!(pos > prev);
                }
                last_pos = Some(pos);
                let new = &out.config.components[pos];
                prop_assert!(new.weight >= old.weight);
                prop_assert!(new.weight * new.diam_inf() <= old.weight * old.diam_inf() + 1e-12);
                prop_assert!(new.theta.len() <= old.theta.len());
                prop_assert!(new.theta.is_subset(&old.theta));
            } else {
                prop_assert!(out.dropped.contains(&old.id));
            }
        }
        // Exact measure change stays under the a-priori estimate.
        let p = Params::default();
        let est = estimate_modification(&cfg, &v, &p).unwrap();
        prop_assert!(est.delta_omega <= est.bound + 1e-9);
    }

    /// Rectangularized outputs keep the original weight relation: surviving
    /// weighted diameters match the plain modification by the grown rectangle.
    #[test]
    fn rectangularize_weights_match_plain_modification(seed in 0u64..5000, v in rect_strategy()) {
        let s = spec();
        let mut rng = gen::rng(seed);
        let cfg = gen::random_disjoint_rects(s, 4, 3, &mut rng);
        let p = Params::default();
        let Ok(out) = rectangularize(&cfg, &v, &p) else { return Ok(()); };
        let plain = modify(&cfg, &out.v_prime).unwrap();
        for comp in out.config.interior_components() {
            if let Some(other) = plain.config.component(comp.id) {
                prop_assert!((comp.weight - other.weight).abs() < 1e-12);
                prop_assert_eq!(&comp.interior, &other.interior);
            }
        }
        prop_assert!(validate_class(&out.config, &p, 0.0).all());
    }

    /// The incremental weighted-measure formula agrees exactly with a full
    /// modification plus re-summation.
    #[test]
    fn measure_delta_matches_full_modification(seed in 0u64..5000, v in rect_strategy()) {
        let s = spec();
        let mut rng = gen::rng(seed);
        let mut cfg = gen::random_disjoint_rects(s, 4, 4, &mut rng);
        for (i, comp) in cfg.components.iter_mut().enumerate() {
            if i % 3 == 1 {
                comp.weight = 0.93;
            }
        }
        let p = Params::default();
        let Ok(out) = modify(&cfg, &v) else { return Ok(()); };
        let before = total_measures(&cfg, &p);
        let after = total_measures(&out.config, &p);
        let fast = crackmod_core::engine::weighted_measure_delta(&cfg, &v, &p);
        prop_assert!(
            (fast - (after.omega - before.omega)).abs() <= 1e-12 * (1.0 + before.omega),
            "fast {} vs exact {}",
            fast,
            after.omega - before.omega
        );
    }

    /// Soup rectangularization: valid output, no measure growth, bounded loss.
    #[test]
    fn soup_rectangularization(seed in 0u64..5000) {
        let s = spec();
        let mut rng = gen::rng(seed);
        let cfg = gen::random_soup(s, 0.10, &mut rng);
        let p = Params::default();
        let out = initial_rectangularization(&cfg, &p).unwrap();
        prop_assert!(validate_class(&out, &p, 0.0).all());
        let before = total_measures(&cfg, &p);
        let after = total_measures(&out, &p);
        prop_assert!(after.star <= before.star + 1e-12);
        prop_assert!(cfg.w_cells().is_subset(&GridSet::full(s)));
        // Hole filling only grows.
        prop_assert!(crackmod_core::grid::fill_holes(&cfg)
            .is_subset(&crackmod_core::grid::fill_holes(&out)));
        // Area loss bounded by the output bounding boxes.
        let lost = cfg.w_cells().difference(&out.w_cells()).len() as i64;
        let bbox_sum: i64 = out
            .interior_components()
            .map(|c| {
                let b = c.interior.bbox().unwrap();
                b.width() * b.height()
            })
            .sum();
        prop_assert!(lost <= bbox_sum);
    }

    /// Final normalization keeps every carried rectangle inside some output
    /// component region.
    #[test]
    fn final_normalize_covers_carried_rects(seed in 0u64..5000, v in rect_strategy()) {
        let s = spec();
        let mut rng = gen::rng(seed);
        let cfg = gen::random_disjoint_rects(s, 3, 3, &mut rng);
        let p = Params::default();
        // Slice the configuration so pieces with carried rectangles appear.
        let Ok(out) = rectangularize(&cfg, &v, &p) else { return Ok(()); };
        let sliced = out.config;
        let Ok(norm) = final_normalize(&sliced, &p) else { return Ok(()); };
        prop_assert!(validate_class(&norm, &p, 0.0).all());
        let before = total_measures(&sliced, &p);
        let after = total_measures(&norm, &p);
        prop_assert!(after.star <= before.star + 1e-12);
        for comp in sliced.interior_components() {
            if let Some(r) = comp.rect {
                let covered = norm.interior_components().any(|c| {
                    c.interior.bbox().map(|b| b.contains_rect(&r)).unwrap_or(false)
                });
                prop_assert!(covered, "carried rectangle lost in normalization");
            }
        }
    }

    /// Thin crossing bars are absorbed at boundary cost at most half their
    /// diameter: for a rectangle X with |Gamma|_inf <= |dV|_inf / 8 whose
    /// boundary is disconnected by V, the union costs at most
    /// `|dV|_* + (1 - h_*)/2 |Gamma|_inf`.
    #[test]
    fn thin_crossing_bar_union(
        vw in 2i32..4, vh in 36i32..56, bar_y in 4i32..30, overhang in 1i32..3,
    ) {
        let s = LatticeSpec::new(0.015625, 32).unwrap();
        let p = Params::default();
        let v = LatticeRect { x0: -vw / 2, y0: -vh / 2, x1: vw - vw / 2, y1: vh - vh / 2 };
        let bar = LatticeRect {
            x0: v.x0 - overhang,
            y0: v.y0 + bar_y,
            x1: v.x1 + overhang,
            y1: v.y0 + bar_y + 1,
        };
        // Enforce the smallness hypothesis.
        prop_assume!(bar.diam_inf(&s) <= v.diam_inf(&s) / 8.0);
        let vx = GridSet::from_rect(s, &v).unwrap();
        let bx = GridSet::from_rect(s, &bar).unwrap();
        // The bar's boundary minus the closed rectangle splits in two.
        let outside = bar.boundary_edges().subtract_closed_rect(&v);
        prop_assume!(!outside.is_empty());
        let union = vx.union(&bx);
        let u_star = measure_star(union.boundary().h1(&s), union.diam_inf(), &p);
        let v_star = measure_star(v.perimeter(&s), v.diam_inf(&s), &p);
        prop_assert!(
            u_star <= v_star + 0.5 * (1.0 - p.h_star) * bar.diam_inf(&s) + 1e-12
        );
    }
}
