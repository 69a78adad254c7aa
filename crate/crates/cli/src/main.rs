//! Command-line front end: scenario runs with JSON reports and SVG frames,
//! rigidity-constant probes, scenario validation, and the acceptance suite.
//!
//! Exit codes: 0 ok, 1 usage or schema error, 2 engine anomaly,
//! 3 acceptance failure.

mod acceptance;
mod probe;
mod scenario;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crackmod_core::engine::run;
use crackmod_core::measures::total_measures;

#[derive(Parser)]
#[command(name = "crackmod", version, about = "Planar crack-set modification engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its report (and optionally SVG frames).
    Run {
        scenario: PathBuf,
        /// Output directory (default: $CRACKMOD_OUT or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Emit one SVG frame per iteration plus a final overlay.
        #[arg(long)]
        svg: bool,
        /// Choose the energy scale as total strain energy per unit crack length.
        #[arg(long)]
        adaptive_eps: bool,
    },
    /// Load and validate a scenario without running it.
    Validate { scenario: PathBuf },
    /// Probe the rigidity constant over a shape family (squares | strips).
    ProbeKorn {
        family: String,
        #[arg(long, default_value_t = 10)]
        max_k: i32,
        #[arg(long, default_value_t = 8)]
        samples: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Also write the table as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the acceptance suite.
    Accept {
        /// Only criteria whose name contains this substring.
        #[arg(long)]
        filter: Option<String>,
    },
    /// Build a scenario's displacement field and write it as a snapshot.
    ExportField { scenario: PathBuf, out: PathBuf },
}

fn cmd_run(path: &PathBuf, out_dir: Option<PathBuf>, svg: bool, adaptive: bool) -> Result<u8> {
    let mut sc = scenario::load_scenario(path)?;
    if adaptive {
        sc.adaptive_epsilon = true;
    }
    if svg {
        sc.options.record_frames = true;
    }
    let mut params = sc.params;
    if sc.adaptive_epsilon {
        let t = total_measures(&sc.config, &params);
        let alpha = crackmod_core::field::elastic_energy(&sc.field, &sc.config.w_cells());
        if t.h > 0.0 && alpha > 0.0 {
            params.epsilon = alpha / t.h;
        }
    }
    let mut output = run(&sc.config, &sc.field, &params, sc.options)
        .map_err(|e| anyhow::anyhow!("engine: {e}"))?;

    // Caller-supplied probe regions for the split inequality.
    if let Some(f) = output.report.final_report.as_mut() {
        for r in &sc.probes {
            let cells = crackmod_core::grid::GridSet::from_rect(sc.spec, r)
                .map_err(|e| anyhow::anyhow!("probe region: {e}"))?
                .intersection(&output.u_bar.domain);
            if cells.is_empty() {
                continue;
            }
            let tv = crackmod_core::field::total_variation(&output.u_bar, &cells)
                .map_err(|e| anyhow::anyhow!("probe region: {e}"))?;
            let lhs = tv.tv * tv.tv;
            let rhs = 2.0 * tv.area * tv.strain_l2_sq + 2.0 * tv.jump_h1 * tv.jump_l2_sq;
            f.variation_split.push(crackmod_core::report::VariationSplit {
                region: crackmod_core::report::RectOut {
                    x0: r.x0,
                    y0: r.y0,
                    x1: r.x1,
                    y1: r.y1,
                    diam: r.diam_inf(&sc.spec),
                },
                lhs,
                rhs,
                pass: lhs <= rhs * (1.0 + 1e-9),
            });
        }
    }

    let dir = out_dir.unwrap_or_else(scenario::default_out_dir);
    std::fs::create_dir_all(&dir)?;
    let report_path = dir.join(format!("{}.report.json", sc.name));
    std::fs::write(&report_path, serde_json::to_string_pretty(&output.report)?)?;
    println!("report: {}", report_path.display());

    if svg {
        let frame_dir = dir.join(format!("{}.frames", sc.name));
        std::fs::create_dir_all(&frame_dir)?;
        for (pos, frame) in output.frames.iter().enumerate() {
            let p = frame_dir.join(format!("frame_{pos:03}.svg"));
            std::fs::write(&p, svg::frame_svg(frame))?;
        }
        let p = frame_dir.join("final.svg");
        std::fs::write(&p, svg::final_svg(&output.config, output.q_tilde))?;
        println!("frames: {}", frame_dir.display());
    }

    println!(
        "iterations: {}, components: {}, anomalies: {}",
        output.report.iterations.len(),
        output.config.components.len(),
        output.report.anomalies.len()
    );
    for w in &output.report.warnings {
        println!("warning: {w}");
    }
    if !output.report.anomalies.is_empty() {
        for a in &output.report.anomalies {
            eprintln!("anomaly: {a}");
        }
        return Ok(2);
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<u8> = match cli.command {
        Command::Run { scenario, out, svg, adaptive_eps } => {
            cmd_run(&scenario, out, svg, adaptive_eps)
        }
        Command::Validate { scenario } => scenario::load_scenario(&scenario).map(|sc| {
            println!(
                "ok: {} cells/side {}, {} components",
                sc.name,
                2 * sc.spec.half_cells,
                sc.config.components.len()
            );
            0
        }),
        Command::ProbeKorn { family, max_k, samples, seed, out } => (|| {
            let fam: probe::Family = family.parse()?;
            let rows = probe::probe(fam, max_k, samples, seed)?;
            probe::print_table(&rows);
            if let Some(path) = out {
                std::fs::write(&path, serde_json::to_string_pretty(&rows)?)?;
                println!("table: {}", path.display());
            }
            Ok(0)
        })(),
        Command::Accept { filter } => {
            if let Some(f) = &filter {
                if !acceptance::CRITERIA.iter().any(|name| name.contains(f.as_str())) {
                    eprintln!(
                        "error: no criterion matches `{f}`; available: {}",
                        acceptance::CRITERIA.join(", ")
                    );
                    return ExitCode::from(1);
                }
            }
            acceptance::run_all(filter.as_deref()).map(|results| {
                if acceptance::print_results(&results) {
                    0
                } else {
                    3
                }
            })
        }
        Command::ExportField { scenario: path, out } => (|| {
            let sc = scenario::load_scenario(&path)?;
            scenario::save_field_snapshot(&out, &sc.field)?;
            println!("field: {}", out.display());
            Ok(0)
        })(),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
