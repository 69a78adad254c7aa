//! SVG frame emission: one frame per iteration plus a final overlay.
//!
//! Coordinates are exact lattice vertex units (integers) with the y axis
//! flipped by a group transform, so frames are diff-able.

use std::fmt::Write as _;

use crackmod_core::engine::Frame;
use crackmod_core::grid::{Configuration, GridSet, LatticeRect};
use crackmod_core::report::StepKind;

fn weight_fill(weight: f64) -> String {
    // Weight 1 light grey, lower weights warmer.
    let t = ((1.0 - weight) * 10.0).clamp(0.0, 1.0);
    let r = 200 + (55.0 * t) as u8;
    let g = 200 - (120.0 * t) as u8;
    let b = 200 - (120.0 * t) as u8;
    format!("rgb({r},{g},{b})")
}

fn cells_path(set: &GridSet) -> String {
    let mut d = String::new();
    for c in set.iter() {
        let _ = write!(d, "M{} {}h1v1h-1z", c.x, c.y);
    }
    d
}

fn open_svg(out: &mut String, k: i32) {
    let side = 2 * k;
    let _ = write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\" width=\"640\" height=\"640\">\n",
        -k, -k, side, side
    );
    let _ = write!(
        out,
        "<defs><pattern id=\"spent\" width=\"1\" height=\"1\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">\
         <rect width=\"1\" height=\"1\" fill=\"rgb(190,225,190)\"/>\
         <line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"1\" stroke=\"rgb(60,130,60)\" stroke-width=\"0.25\"/></pattern></defs>\n",
    );
    let _ = write!(out, "<g transform=\"scale(1,-1)\">\n");
    let _ = write!(
        out,
        "<rect x=\"{}\" y=\"{}\" width=\"{side}\" height=\"{side}\" fill=\"white\" stroke=\"black\" stroke-width=\"0.2\"/>\n",
        -k, -k
    );
}

fn close_svg(out: &mut String, label: &str) {
    let _ = write!(out, "</g>\n");
    let _ = write!(
        out,
        "<text x=\"8\" y=\"20\" font-family=\"monospace\" font-size=\"14\">{label}</text>\n"
    );
    let _ = write!(out, "</svg>\n");
}

fn draw_config(out: &mut String, config: &Configuration) {
    for comp in &config.components {
        let fill = if comp.touches_outer_boundary {
            "rgb(160,160,230)".to_string()
        } else {
            weight_fill(comp.weight)
        };
        let _ = write!(
            out,
            "<path d=\"{}\" fill=\"{fill}\" stroke=\"black\" stroke-width=\"0.08\"/>\n",
            cells_path(&comp.interior)
        );
        if let Some(r) = comp.rect {
            let _ = write!(
                out,
                "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"rgb(60,60,60)\" stroke-width=\"0.05\" stroke-dasharray=\"0.4 0.3\"/>\n",
                r.x0,
                r.y0,
                r.width(),
                r.height()
            );
        }
    }
}

fn draw_spent(out: &mut String, spent: &[GridSet]) {
    for s in spent {
        if s.is_empty() {
            continue;
        }
        let _ = write!(out, "<path d=\"{}\" fill=\"url(#spent)\"/>\n", cells_path(s));
    }
}

fn case_label(kind: StepKind) -> &'static str {
    match kind {
        StepKind::Trace => "trace",
        StepKind::Replace => "replace",
        StepKind::Absorb => "absorb",
        StepKind::Merge => "merge",
    }
}

pub fn frame_svg(frame: &Frame) -> String {
    let k = frame.config.spec.half_cells;
    let mut out = String::new();
    open_svg(&mut out, k);
    draw_spent(&mut out, &frame.spent_cells);
    draw_config(&mut out, &frame.config);
    if let Some(n) = frame.neighborhood {
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"rgb(200,60,60)\" stroke-width=\"0.15\"/>\n",
            n.x0,
            n.y0,
            n.width(),
            n.height()
        );
    }
    if let Some(active) = frame.active {
        if let Some(comp) = frame.config.component(active) {
            if let Some(b) = comp.interior.bbox() {
                let _ = write!(
                    out,
                    "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"rgb(220,120,0)\" stroke-width=\"0.2\"/>\n",
                    b.x0,
                    b.y0,
                    b.width(),
                    b.height()
                );
            }
        }
    }
    let label = if frame.active.is_none() {
        "setup".to_string()
    } else {
        format!("iteration {} - {}", frame.index, case_label(frame.case))
    };
    close_svg(&mut out, &label);
    out
}

pub fn final_svg(config: &Configuration, q_tilde: Option<LatticeRect>) -> String {
    let k = config.spec.half_cells;
    let mut out = String::new();
    open_svg(&mut out, k);
    draw_config(&mut out, config);
    if let Some(q) = q_tilde {
        let _ = write!(
            out,
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"rgb(40,110,40)\" stroke-width=\"0.2\"/>\n",
            q.x0,
            q.y0,
            q.width(),
            q.height()
        );
    }
    close_svg(&mut out, "final");
    out
}
