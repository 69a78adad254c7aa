//! Scenario files: one TOML file describes one run.
//!
//! ```toml
//! [lattice]
//! mu = 1.0
//! s = 0.015625            # mu/(2s) must be an integer >= 8
//!
//! [params]                # optional overrides of the defaults
//! epsilon = 1e-3
//!
//! [engine]                # optional
//! seed = 7
//! minimality = "exhaustive"   # "sampled" | "off"
//! samples = 20000
//! adaptive_epsilon = false
//!
//! [[components]]
//! rect = [-4, -4, 4, 4]   # vertex units, origin at the grid center
//!
//! [[components]]
//! cells = [[3, 5], [4, 5]]
//!
//! [[field]]
//! generator = "rigid_plus_smooth"  # rigid | rigid_plus_smooth |
//!                                  # piecewise_rigid | noise | noise_in_rect
//!                                  # | zero | snapshot
//! seed = 3
//! amplitude = 1e-3
//! # alpha = 0.05          # noise energy target
//! # rect = [0, 0, 4, 4]   # noise_in_rect region
//! # path = "u.field"      # snapshot file
//!
//! [probes]                # optional split-inequality probe regions
//! rects = [[-8, -8, 8, 8]]
//! ```
//!
//! Field snapshots are a JSON header line (spec and cell list) followed by
//! the raw little-endian `f64` corner values, eight per cell, in cell order.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crackmod_core::engine::{EngineOptions, MinimalityMode};
use crackmod_core::field::DiscreteField;
use crackmod_core::gen;
use crackmod_core::grid::{
    components_of, Cell, Configuration, GridSet, LatticeRect, LatticeSpec,
};
use crackmod_core::measures::Params;

#[derive(Debug, Clone, Deserialize)]
pub struct ScenarioFile {
    pub lattice: LatticeSection,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub engine: EngineSection,
    #[serde(default)]
    pub components: Vec<ComponentSection>,
    #[serde(default)]
    pub field: Vec<FieldSection>,
    #[serde(default)]
    pub probes: ProbesSection,
}

#[derive(Debug, Clone, Deserialize)]
pub struct LatticeSection {
    pub mu: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct EngineSection {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub minimality: Option<String>,
    #[serde(default)]
    pub samples: Option<u32>,
    #[serde(default)]
    pub adaptive_epsilon: bool,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ComponentSection {
    #[serde(default)]
    pub rect: Option<[i32; 4]>,
    #[serde(default)]
    pub cells: Option<Vec<[i32; 2]>>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct FieldSection {
    pub generator: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub amplitude: Option<f64>,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub rect: Option<[i32; 4]>,
    #[serde(default)]
    pub path: Option<String>,
}

#[derive(Debug, Clone, Deserialize, Default)]
pub struct ProbesSection {
    #[serde(default)]
    pub rects: Vec<[i32; 4]>,
}

/// Fully constructed inputs of one run.
pub struct Scenario {
    pub name: String,
    pub spec: LatticeSpec,
    pub params: Params,
    pub config: Configuration,
    pub field: DiscreteField,
    pub options: EngineOptions,
    pub adaptive_epsilon: bool,
    pub probes: Vec<LatticeRect>,
}

fn apply_param_overrides(p: &mut Params, table: &toml::Table) -> Result<()> {
    for (key, value) in table {
        let v = value
            .as_float()
            .or_else(|| value.as_integer().map(|i| i as f64))
            .with_context(|| format!("parameter `{key}` must be a number"))?;
        match key.as_str() {
            "h_star" => p.h_star = v,
            "q" => p.q = v,
            "omega_min" => p.omega_min = v,
            "r" => p.r = v,
            "upsilon" => p.upsilon = v,
            "d_big" => p.d_big = v,
            "epsilon" => p.epsilon = v,
            "sigma" => p.sigma = v,
            "theta" => p.theta = v,
            "c_star" => p.c_star = v,
            "c_hat" => p.c_hat = v,
            "k_size" => p.k_size = v,
            "k_dist" => p.k_dist = v,
            "bridge_flat" => p.bridge_flat = v,
            "trace_envelope" => p.trace_envelope = v,
            other => bail!("unknown parameter `{other}` in [params]"),
        }
    }
    Ok(())
}

fn parse_rect(r: &[i32; 4]) -> Result<LatticeRect> {
    LatticeRect::new(r[0], r[1], r[2], r[3]).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Load and fully validate one scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario {}", path.display()))?;
    let file: ScenarioFile = toml::from_str(&text)
        .with_context(|| format!("scenario schema error in {}", path.display()))?;

    let spec = LatticeSpec::from_mu(file.lattice.mu, file.lattice.s)
        .map_err(|e| anyhow::anyhow!("[lattice]: {e}"))?;

    let mut params = Params::default();
    apply_param_overrides(&mut params, &file.params)?;
    params.validate().map_err(|e| anyhow::anyhow!("[params]: {e}"))?;

    // Components: groups of cells, one component each.
    let mut groups: Vec<BTreeSet<Cell>> = Vec::new();
    for (i, comp) in file.components.iter().enumerate() {
        let group: BTreeSet<Cell> = match (&comp.rect, &comp.cells) {
            (Some(r), None) => parse_rect(r)
                .with_context(|| format!("components[{i}].rect"))?
                .cells()
                .collect(),
            (None, Some(cells)) => cells.iter().map(|c| Cell::new(c[0], c[1])).collect(),
            _ => bail!("components[{i}]: give exactly one of `rect` or `cells`"),
        };
        if group.is_empty() {
            bail!("components[{i}] is empty");
        }
        groups.push(group);
    }
    let mut removed = GridSet::empty(spec);
    for (i, g) in groups.iter().enumerate() {
        let gs = GridSet::from_cells(spec, g.iter().copied())
            .map_err(|e| anyhow::anyhow!("components[{i}]: {e}"))?;
        if !removed.is_disjoint(&gs) {
            bail!("components[{i}] overlaps an earlier component");
        }
        removed = removed.union(&gs);
    }
    let mut config = components_of(&removed, spec, &groups)
        .map_err(|e| anyhow::anyhow!("[components]: {e}"))?;
    for comp in &mut config.components {
        comp.rect = comp.interior.bbox();
    }

    // Field: sum of generated parts on the live region.
    let w = config.w_cells();
    let mut field = DiscreteField::from_fn(spec, &w, |_, _| [0.0, 0.0]);
    for (i, part) in file.field.iter().enumerate() {
        let built = build_field_part(spec, &w, part, path)
            .with_context(|| format!("field[{i}]"))?;
        field = field.add(&built);
    }

    let minimality = match file.engine.minimality.as_deref() {
        None | Some("exhaustive") => MinimalityMode::Exhaustive,
        Some("sampled") => MinimalityMode::Sampled(file.engine.samples.unwrap_or(20_000)),
        Some("off") => MinimalityMode::Off,
        Some(other) => bail!("[engine].minimality: unknown mode `{other}`"),
    };
    let options = EngineOptions {
        minimality,
        seed: file.engine.seed,
        record_frames: false,
    };

    let mut probes = Vec::new();
    for (i, r) in file.probes.rects.iter().enumerate() {
        probes.push(parse_rect(r).with_context(|| format!("probes.rects[{i}]"))?);
    }

    Ok(Scenario {
        name: path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "scenario".into()),
        spec,
        params,
        config,
        field,
        options,
        adaptive_epsilon: file.engine.adaptive_epsilon,
        probes,
    })
}

fn build_field_part(
    spec: LatticeSpec,
    w: &GridSet,
    part: &FieldSection,
    scenario_path: &Path,
) -> Result<DiscreteField> {
    let amp = part.amplitude.unwrap_or(1.0);
    Ok(match part.generator.as_str() {
        "zero" => DiscreteField::from_fn(spec, w, |_, _| [0.0, 0.0]),
        "rigid" => {
            let mut rng = gen::rng(part.seed);
            let m = gen::random_motion(amp, &mut rng);
            DiscreteField::from_fn(spec, w, move |x, y| m.eval(x, y))
        }
        "rigid_plus_smooth" => gen::field_rigid_plus_smooth(spec, w, amp, part.seed),
        "piecewise_rigid" => gen::field_piecewise_rigid(spec, w, amp, part.seed),
        "noise" => {
            let alpha = part.alpha.context("noise generator needs `alpha`")?;
            gen::field_noise_with_energy(spec, w, alpha, part.seed)
        }
        "noise_in_rect" => {
            let alpha = part.alpha.context("noise_in_rect needs `alpha`")?;
            let r = parse_rect(part.rect.as_ref().context("noise_in_rect needs `rect`")?)?;
            gen::field_noise_in_rect(spec, w, &r, alpha, part.seed)
        }
        "snapshot" => {
            let rel = part.path.as_ref().context("snapshot generator needs `path`")?;
            let full = scenario_path.parent().unwrap_or(Path::new(".")).join(rel);
            let snap = load_field_snapshot(&full)?;
            if snap.spec != spec {
                bail!("snapshot lattice does not match the scenario lattice");
            }
            snap
        }
        other => bail!("unknown field generator `{other}`"),
    })
}

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    version: u32,
    s: f64,
    half_cells: i32,
    cells: Vec<[i32; 2]>,
}

/// Write a field snapshot: JSON header line + raw LE f64 corner values.
pub fn save_field_snapshot(path: &Path, field: &DiscreteField) -> Result<()> {
    let cells: Vec<[i32; 2]> = field.cells().map(|(c, _)| [c.x, c.y]).collect();
    let header = SnapshotHeader {
        version: 1,
        s: field.spec.s,
        half_cells: field.spec.half_cells,
        cells,
    };
    let mut f = std::fs::File::create(path)?;
    serde_json::to_writer(&mut f, &header)?;
    f.write_all(b"\n")?;
    for (_, vals) in field.cells() {
        for v in vals {
            f.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_field_snapshot(path: &Path) -> Result<DiscreteField> {
    let mut raw = Vec::new();
    std::fs::File::open(path)
        .with_context(|| format!("cannot open snapshot {}", path.display()))?
        .read_to_end(&mut raw)?;
    let nl = raw
        .iter()
        .position(|&b| b == b'\n')
        .context("snapshot missing header line")?;
    let header: SnapshotHeader =
        serde_json::from_slice(&raw[..nl]).context("snapshot header is not valid JSON")?;
    if header.version != 1 {
        bail!("unsupported snapshot version {}", header.version);
    }
    let spec = LatticeSpec::new(header.s, header.half_cells)
        .map_err(|e| anyhow::anyhow!("snapshot lattice: {e}"))?;
    let body = &raw[nl + 1..];
    let need = header.cells.len() * 8 * 8;
    if body.len() != need {
        bail!("snapshot body has {} bytes, expected {need}", body.len());
    }
    let mut vals: BTreeMap<Cell, [f64; 8]> = BTreeMap::new();
    for (i, c) in header.cells.iter().enumerate() {
        let mut v = [0.0; 8];
        for (k, slot) in v.iter_mut().enumerate() {
            let off = (i * 8 + k) * 8;
            *slot = f64::from_le_bytes(body[off..off + 8].try_into().unwrap());
        }
        vals.insert(Cell::new(c[0], c[1]), v);
    }
    DiscreteField::from_raw(spec, vals).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Default output directory: `$CRACKMOD_OUT` or `./out`.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("CRACKMOD_OUT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
}
