//! Property tests for the displacement-field numerics: rigid-motion bounds,
//! fit consistency, the total-variation split, and extension identities.

use proptest::prelude::*;
use std::collections::BTreeMap;

use crackmod_core::field::{
    chained_rigid_fit, elastic_energy, extend, fit_rigid_motion, l2_dist_sq, total_variation,
    DiscreteField, RigidMotion,
};
use crackmod_core::gen;
use crackmod_core::grid::{Cell, GridSet, LatticeRect, LatticeSpec};

fn spec() -> LatticeSpec {
    LatticeSpec::new(0.03125, 16).unwrap()
}

fn motion_strategy() -> impl Strategy<Value = RigidMotion> {
    (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0)
        .prop_map(|(a, b0, b1)| RigidMotion { a, b: [b0, b1] })
}

fn rect_strategy() -> impl Strategy<Value = LatticeRect> {
    (-14i32..4, -14i32..4, 1i32..10, 1i32..10)
        .prop_map(|(x0, y0, w, h)| LatticeRect { x0, y0, x1: x0 + w, y1: y0 + h })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Sup bound for rigid motions on rectangles with constant 8.
    #[test]
    fn rigid_sup_bound_on_rectangles(m in motion_strategy(), r in rect_strategy()) {
        let s = spec();
        let l2 = m.l2_sq_on_rect(&s, &r);
        let area = (r.width() * r.height()) as f64 * s.edge_len() * s.edge_len();
        let max = m.max_sq_on_rect(&s, &r);
        prop_assert!(max * area <= 8.0 * l2 + 1e-12);
    }

    /// Matrix bound on rectangles: the constant 24 is exact (and attained by
    /// centered motions), so nothing exceeds it.
    #[test]
    fn rigid_matrix_bound_is_sharp_at_24(m in motion_strategy(), r in rect_strategy()) {
        let s = spec();
        let l2 = m.l2_sq_on_rect(&s, &r);
        let area = (r.width() * r.height()) as f64 * s.edge_len() * s.edge_len();
        let diam2 = r.diam_inf(&s).powi(2);
        prop_assert!(diam2 * m.matrix_norm().powi(2) * area <= 24.0 * l2 * (1.0 + 1e-9));
    }

    /// Segment bound with constant 48 on `(0, l) x {0}`.
    #[test]
    fn rigid_segment_bound(m in motion_strategy(), l in 0.05f64..4.0) {
        let (a, b1, b2) = (m.a, m.b[0], m.b[1]);
        let int = b1 * b1 * l + b2 * b2 * l - a * b2 * l * l + a * a * l * l * l / 3.0;
        let e0 = b1 * b1 + b2 * b2;
        let e1 = b1 * b1 + (b2 - a * l) * (b2 - a * l);
        let max = e0.max(e1);
        prop_assert!(l * l * (2.0 * a * a) + max <= 48.0 / l * int + 1e-12);
    }

    /// Rigid-motion difference bound per path pair: the drift of consecutive
    /// fits over a shared cell obeys the sup bound.
    #[test]
    fn chained_pair_bounds(seed in 0u64..4000) {
        let s = spec();
        let dom = GridSet::full(s);
        let u = gen::field_rigid_plus_smooth(s, &dom, 0.05, seed);
        let path: Vec<Cell> = (0..5).map(|i| Cell::new(i - 2, 0)).collect();
        let cf = chained_rigid_fit(&u, &path).unwrap();
        for (i, w) in path.windows(2).enumerate() {
            let d = cf.motions[i].sub(&cf.motions[i + 1]);
            let pair = LatticeRect { x0: w[0].x.min(w[1].x), y0: w[0].y, x1: w[1].x.max(w[0].x) + 1, y1: w[0].y + 1 };
            let l2 = d.l2_sq_on_rect(&s, &pair);
            let area = (pair.width() * pair.height()) as f64 * s.edge_len() * s.edge_len();
            prop_assert!(d.max_sq_on_rect(&s, &pair) * area <= 8.0 * l2 + 1e-12);
        }
        prop_assert!(cf.spread.is_finite());
    }

    /// The fit residual is the orthogonal complement of the projection.
    #[test]
    fn fit_orthogonal_decomposition(seed in 0u64..4000) {
        let s = spec();
        let region = GridSet::from_rect(s, &LatticeRect::new(-4, -3, 4, 5).unwrap()).unwrap();
        let u = gen::field_noise_with_energy(s, &region, 0.3, seed);
        let fit = fit_rigid_motion(&u, &region).unwrap();
        let proj_sq = fit.norm_sq - fit.residual;
        // |u - P u|^2 = |u|^2 - |P u|^2 for an orthogonal projection.
        let direct = l2_dist_sq(&u, &region, &fit.motion);
        prop_assert!((direct - (fit.norm_sq - proj_sq)).abs() <= 1e-10 * fit.norm_sq.max(1e-30));
        // The fit beats any perturbed motion.
        let worse = RigidMotion { a: fit.motion.a + 1e-3, b: fit.motion.b };
        prop_assert!(l2_dist_sq(&u, &region, &worse) >= fit.residual - 1e-12);
    }

    /// Split inequality on mixed jump fields, and consistency of the parts.
    #[test]
    fn variation_split_holds(seed in 0u64..4000, shift in -4i32..4) {
        let s = spec();
        let dom = GridSet::full(s);
        let m1 = RigidMotion { a: 0.3, b: [0.1, 0.0] };
        let m2 = RigidMotion { a: -0.2, b: [0.0, 0.4] };
        let noise = gen::field_noise_with_energy(s, &dom, 0.05, seed);
        let split_at = shift;
        let base = DiscreteField::from_cell_fn(s, &dom, |c, x, y| {
            if c.x >= split_at {
                m1.eval(x, y)
            } else {
                m2.eval(x, y)
            }
        });
        let u = base.add(&noise);
        let tv = total_variation(&u, &dom).unwrap();
        let lhs = tv.tv * tv.tv;
        let rhs = 2.0 * tv.area * tv.strain_l2_sq + 2.0 * tv.jump_h1 * tv.jump_l2_sq;
        prop_assert!(lhs <= rhs * (1.0 + 1e-9));
    }

    /// Extension: strain energy is preserved outside and removed inside.
    #[test]
    fn extension_energy_identity(seed in 0u64..4000) {
        let s = spec();
        let mut rng = gen::rng(seed);
        let cfg = gen::random_disjoint_rects(s, 2, 4, &mut rng);
        if cfg.components.is_empty() {
            return Ok(());
        }
        let w = cfg.w_cells();
        let u = gen::field_rigid_plus_smooth(s, &w, 0.01, seed);
        let mut motions = BTreeMap::new();
        let ids: Vec<_> = cfg.components.iter().map(|c| c.id).collect();
        for id in &ids {
            motions.insert(*id, gen::random_motion(0.5, &mut rng));
        }
        let ext = extend(&u, &cfg, &motions, &ids).unwrap();
        prop_assert_eq!(elastic_energy(&ext, &w), elastic_energy(&u, &w));
        for comp in &cfg.components {
            prop_assert!(elastic_energy(&ext, &comp.interior) < 1e-20);
        }
    }
}
