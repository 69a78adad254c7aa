//! Randomized engine sweep: many seeded scenarios, reporting any anomalies.

use crackmod_core::engine::{run, EngineOptions};
use crackmod_core::gen;
use crackmod_core::grid::LatticeSpec;
use crackmod_core::measures::Params;

fn main() {
    let mut anomalies = 0usize;
    let mut runs = 0usize;
    let mut cases = [0usize; 4];
    for seed in 0..120u64 {
        let k = 16 + (seed % 3) as i32 * 8; // 16, 24, 32
        let spec = LatticeSpec::new(1.0 / (2.0 * k as f64), k).unwrap();
        let mut rng = gen::rng(seed);
        let n = 3 + (seed % 7) as usize;
        let cfg = gen::random_disjoint_rects(spec, n, 4, &mut rng);
        let w = cfg.w_cells();
        let u = match seed % 3 {
            0 => gen::field_rigid_plus_smooth(spec, &w, 5e-4, seed),
            1 => gen::field_piecewise_rigid(spec, &w, 0.3, seed),
            _ => gen::field_noise_with_energy(spec, &w, 1e-3, seed),
        };
        let p = Params::default();
        runs += 1;
        match run(&cfg, &u, &p, EngineOptions { seed, ..Default::default() }) {
            Err(e) => {
                anomalies += 1;
                println!("seed {seed}: run error {e}");
            }
            Ok(out) => {
                if !out.report.anomalies.is_empty() {
                    anomalies += 1;
                    println!("seed {seed}: {:?}", out.report.anomalies);
                }
                for it in &out.report.iterations {
                    let idx = match it.case {
                        crackmod_core::report::StepKind::Trace => 0,
                        crackmod_core::report::StepKind::Replace => 1,
                        crackmod_core::report::StepKind::Absorb => 2,
                        crackmod_core::report::StepKind::Merge => 3,
                    };
                    cases[idx] += 1;
                    if !it.ledger.holds(1e-9) {
                        anomalies += 1;
                        println!("seed {seed}: ledger violation at iteration {}", it.index);
                    }
                }
            }
        }
    }
    println!(
        "{runs} runs, {anomalies} anomalous; steps: {} trace, {} replace, {} absorb, {} merge",
        cases[0], cases[1], cases[2], cases[3]
    );
}
