//! Engine integration: regression runs, case coverage, anomaly handling.

use crackmod_core::engine::{run, EngineOptions, MinimalityMode};
use crackmod_core::field::DiscreteField;
use crackmod_core::gen;
use crackmod_core::grid::{GridSet, LatticeRect, LatticeSpec};
use crackmod_core::measures::Params;
use crackmod_core::report::StepKind;

fn spec() -> LatticeSpec {
    LatticeSpec::new(1.0 / 64.0, 32).unwrap()
}

#[test]
fn twenty_component_scenario_terminates_with_clean_ledger() {
    let s = spec();
    let mut rng = gen::rng(2024);
    let cfg = gen::random_disjoint_rects(s, 20, 3, &mut rng);
    assert!(cfg.components.len() >= 15, "generator placed {}", cfg.components.len());
    let w = cfg.w_cells();
    let u = gen::field_rigid_plus_smooth(s, &w, 3e-4, 99);
    let out = run(&cfg, &u, &Params::default(), EngineOptions::default()).unwrap();
    assert!(out.report.anomalies.is_empty(), "{:?}", out.report.anomalies);
    assert!(!out.report.iterations.is_empty());
    for it in &out.report.iterations {
        assert!(it.ledger.holds(1e-9), "iteration {}", it.index);
    }
    let f = out.report.final_report.expect("final block");
    assert!(f.total_energy.holds(1e-9));
    assert!(f.surface_budget.lhs <= f.surface_budget.rhs);
    assert!(f.rect_measure_ok);
    assert!(f.area_loss_ok);
    // Scale never decreases along the run.
    let mut last = 0.0;
    for it in &out.report.iterations {
        assert!(it.lambda >= last - 1e-15);
        last = it.lambda;
    }
}

#[test]
fn resolution_degenerate_radius_is_reported() {
    let s = spec();
    let cfg = gen::config_from_rects(s, &[LatticeRect::new(-2, -2, 2, 2).unwrap()]).unwrap();
    let w = cfg.w_cells();
    let u = DiscreteField::from_fn(s, &w, |_, _| [0.0, 0.0]);
    let out = run(&cfg, &u, &Params::default(), EngineOptions::default()).unwrap();
    let warned = out
        .report
        .iterations
        .iter()
        .flat_map(|it| it.warnings.iter())
        .any(|w| w.contains("resolution-degenerate"));
    assert!(warned, "sub-lattice base radius must be flagged");
}

#[test]
fn energy_overflow_triggers_absorption() {
    let s = spec();
    let gamma = LatticeRect::new(-3, -3, 3, 3).unwrap();
    let cfg = gen::config_from_rects(s, &[gamma]).unwrap();
    let w = cfg.w_cells();
    let blob = LatticeRect::new(3, -3, 5, 3).unwrap();
    let u = gen::field_noise_in_rect(s, &w, &blob, 0.5, 5);
    let p = Params { epsilon: 1e-2, ..Params::default() };
    let out = run(&cfg, &u, &p, EngineOptions::default()).unwrap();
    assert!(out.report.anomalies.is_empty(), "{:?}", out.report.anomalies);
    assert!(out.report.iterations.iter().any(|it| it.case == StepKind::Absorb));
    // The absorbed ring removed the loaded region from the live set.
    let final_alpha = crackmod_core::field::elastic_energy(&u, &out.config.w_cells());
    assert!(final_alpha < 0.5);
}

#[test]
fn bridge_overflow_triggers_merge_without_minimality_search() {
    let s = spec();
    let a = LatticeRect::new(-14, 0, 0, 1).unwrap();
    let b = LatticeRect::new(0, 1, 14, 2).unwrap();
    let cfg = gen::config_from_rects(s, &[a, b]).unwrap();
    let w = cfg.w_cells();
    let blob = LatticeRect::new(-3, -3, 3, 4).unwrap();
    let u = gen::field_noise_in_rect(s, &w, &blob, 2e-4, 7);
    let p = Params { q: 1.0, h_star: 0.5, epsilon: 1e-4, ..Params::default() };
    let opts = EngineOptions { minimality: MinimalityMode::Off, ..Default::default() };
    let out = run(&cfg, &u, &p, opts).unwrap();
    assert!(out.report.anomalies.is_empty(), "{:?}", out.report.anomalies);
    assert!(out.report.iterations.iter().any(|it| it.case == StepKind::Merge));
    // The merged pair forms one component covering both bars.
    let covering = out.config.components.iter().any(|c| {
        c.interior
            .bbox()
            .map(|bb| bb.contains_rect(&a) && bb.contains_rect(&b))
            .unwrap_or(false)
    });
    assert!(covering);
    assert!(out.report.warnings.iter().any(|w| w.contains("disabled")));
}

#[test]
fn small_component_crowded_by_bars_halts_with_anomaly() {
    // A tiny component wedged between two bars sees both of them from its
    // one-cell working ring, a regime the scale analysis cannot certify;
    // the run must halt with a recorded anomaly instead of continuing.
    let s = spec();
    let a = LatticeRect::new(-14, 0, 0, 1).unwrap();
    let b = LatticeRect::new(0, 1, 14, 2).unwrap();
    let tiny = LatticeRect::new(-1, -2, 0, -1).unwrap();
    let cfg = gen::config_from_rects(s, &[a, b, tiny]).unwrap();
    let w = cfg.w_cells();
    let blob = LatticeRect::new(-3, -3, 3, 4).unwrap();
    let u = gen::field_noise_in_rect(s, &w, &blob, 2e-4, 7);
    let p = Params { q: 1.0, h_star: 0.5, epsilon: 1e-4, ..Params::default() };
    let opts = EngineOptions { minimality: MinimalityMode::Off, ..Default::default() };
    let out = run(&cfg, &u, &p, opts).unwrap();
    assert!(!out.report.anomalies.is_empty());
    assert!(out.report.final_report.is_none());
}

#[test]
fn crowded_large_neighbors_halt_with_anomaly() {
    // Three large bars around a tiny component contradict the scale-selection
    // consequence once the minimality search is disabled; the engine must
    // halt and report rather than continue.
    let s = spec();
    let gamma = LatticeRect::new(-1, -1, 1, 1).unwrap();
    let b1 = LatticeRect::new(2, -12, 4, 12).unwrap();
    let b2 = LatticeRect::new(-4, -12, -2, 12).unwrap();
    let b3 = LatticeRect::new(-1, 2, 1, 22).unwrap();
    let cfg = gen::config_from_rects(s, &[gamma, b1, b2, b3]).unwrap();
    let w = cfg.w_cells();
    let u = DiscreteField::from_fn(s, &w, |_, _| [0.0, 0.0]);
    let opts = EngineOptions { minimality: MinimalityMode::Off, ..Default::default() };
    let out = run(&cfg, &u, &Params::default(), opts).unwrap();
    assert!(!out.report.anomalies.is_empty());
}

#[test]
fn sampled_search_is_labeled_and_still_finds_cluster_witness() {
    let s = spec();
    let r1 = LatticeRect::new(0, 0, 6, 6).unwrap();
    let r2 = LatticeRect::new(8, 0, 14, 6).unwrap();
    let r3 = LatticeRect::new(0, 8, 6, 14).unwrap();
    let cfg = gen::config_from_rects(s, &[r1, r2, r3]).unwrap();
    let w = cfg.w_cells();
    let u = DiscreteField::from_fn(s, &w, |_, _| [0.0, 0.0]);
    let opts = EngineOptions { minimality: MinimalityMode::Sampled(500), ..Default::default() };
    let out = run(&cfg, &u, &Params::default(), opts).unwrap();
    assert!(out.report.warnings.iter().any(|w| w.contains("sampled")));
    assert!(out.report.iterations.iter().any(|it| it.case == StepKind::Replace));
}

#[test]
fn run_rejects_disconnected_components() {
    let s = spec();
    use std::collections::BTreeSet;
    let cells: BTreeSet<crackmod_core::grid::Cell> = [
        crackmod_core::grid::Cell::new(0, 0),
        crackmod_core::grid::Cell::new(4, 4),
    ]
    .into_iter()
    .collect();
    let removed = GridSet::from_cells(s, cells.iter().copied()).unwrap();
    let cfg = crackmod_core::grid::components_of(&removed, s, &[cells]).unwrap();
    let u = DiscreteField::from_fn(s, &cfg.w_cells(), |_, _| [0.0, 0.0]);
    assert!(run(&cfg, &u, &Params::default(), EngineOptions::default()).is_err());
}

#[test]
fn report_serialization_is_stable() {
    let s = spec();
    let cfg = gen::config_from_rects(s, &[LatticeRect::new(-2, -2, 2, 2).unwrap()]).unwrap();
    let w = cfg.w_cells();
    let u = gen::field_rigid_plus_smooth(s, &w, 1e-3, 4);
    let p = Params::default();
    let a = run(&cfg, &u, &p, EngineOptions::default()).unwrap();
    let b = run(&cfg, &u, &p, EngineOptions::default()).unwrap();
    let ja = serde_json::to_string(&a.report).unwrap();
    let jb = serde_json::to_string(&b.report).unwrap();
    assert_eq!(ja, jb);
}
