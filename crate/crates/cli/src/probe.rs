//! Empirical probing of the rigidity constant for jump-free fields on
//! families of lattice shapes.
//!
//! The measured quantity is `||u - Pu||_{L2} / int |sym grad u|` where `P`
//! is the least-squares rigid projection. The cubic-power envelope in the
//! normalized cell count is an upper bound only; the deterministic bending
//! field drives the strip family monotonically.

use anyhow::Result;
use serde::Serialize;

use crackmod_core::field::{fit_rigid_motion, strain_l1, DiscreteField};
use crackmod_core::gen;
use crackmod_core::grid::{GridSet, LatticeRect, LatticeSpec};

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRow {
    pub shape: String,
    pub cells: usize,
    /// Worst measured ratio across the sampled fields.
    pub max_ratio: f64,
    /// Ratio of the deterministic bending field.
    pub bending_ratio: f64,
    /// `max_ratio / cells^{3/2}` (the envelope exponent).
    pub envelope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Squares,
    Strips,
}

impl std::str::FromStr for Family {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squares" => Ok(Family::Squares),
            "strips" => Ok(Family::Strips),
            other => anyhow::bail!("unknown shape family `{other}` (squares | strips)"),
        }
    }
}

fn shape(spec: LatticeSpec, family: Family, k: i32) -> (String, GridSet) {
    match family {
        Family::Squares => {
            let r = LatticeRect { x0: 0, y0: 0, x1: k, y1: k };
            (format!("{k}x{k}"), GridSet::from_rect(spec, &r).unwrap())
        }
        Family::Strips => {
            let r = LatticeRect { x0: 0, y0: 0, x1: k, y1: 1 };
            (format!("{k}x1"), GridSet::from_rect(spec, &r).unwrap())
        }
    }
}

fn ratio_of(u: &DiscreteField, region: &GridSet) -> f64 {
    let fit = fit_rigid_motion(u, region).expect("fit");
    let tv = strain_l1(u, region);
    // Rigid fields give 0/0 up to rounding; guard as 0.
    if tv <= 1e-12 * (1.0 + fit.norm_sq.sqrt()) {
        0.0
    } else {
        fit.residual.sqrt() / tv
    }
}

/// Probe one family over `sizes`, with `samples` random conforming fields per
/// shape plus the deterministic bending field.
pub fn probe(family: Family, max_k: i32, samples: u32, seed: u64) -> Result<Vec<ProbeRow>> {
    let half = (max_k + 2).max(8);
    let spec = LatticeSpec::new(1.0 / (2.0 * half as f64), half)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    let mut rows = Vec::new();
    for k in 2..=max_k {
        let (name, region) = shape(spec, family, k);
        // Deterministic bending: small strain, large rotation drift.
        let bending = DiscreteField::from_fn(spec, &region, |x, y| [-x * y, 0.5 * x * x]);
        let bending_ratio = ratio_of(&bending, &region);
        let mut max_ratio = bending_ratio;
        for i in 0..samples {
            let u = {
                use std::collections::BTreeMap;
                let mut rng = gen::rng(seed ^ (k as u64) << 8 ^ i as u64);
                use rand::Rng;
                let mut vertex_vals: BTreeMap<(i32, i32), [f64; 2]> = BTreeMap::new();
                for &c in region.iter() {
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                        vertex_vals
                            .entry((c.x + dx, c.y + dy))
                            .or_insert_with(|| [rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5]);
                    }
                }
                DiscreteField::from_fn_vertex(spec, &region, &vertex_vals)
            };
            max_ratio = max_ratio.max(ratio_of(&u, &region));
        }
        let cells = region.len();
        rows.push(ProbeRow {
            shape: name,
            cells,
            max_ratio,
            bending_ratio,
            envelope: max_ratio / (cells as f64).powf(1.5),
        });
    }
    Ok(rows)
}

pub fn print_table(rows: &[ProbeRow]) {
    println!("{:<10} {:>8} {:>14} {:>14} {:>14}", "shape", "cells", "max-ratio", "bending", "envelope");
    for r in rows {
        println!(
            "{:<10} {:>8} {:>14.6e} {:>14.6e} {:>14.6e}",
            r.shape, r.cells, r.max_ratio, r.bending_ratio, r.envelope
        );
    }
}
