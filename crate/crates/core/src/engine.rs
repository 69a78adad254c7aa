//! The iterative modification engine.
//!
//! Each round picks the smallest untreated component whose working
//! neighborhood stays inside the hole-filled domain and either certifies it
//! by fitting an infinitesimal rigid motion (when the weighted-measure
//! minimality, the ring energy bound and the bridge energy bounds all hold)
//! or modifies the configuration: replacing by a cheaper rectangle, absorbing
//! an energy-loaded ring, or merging with a large neighbor across an
//! overloaded bridge. Spent-energy regions are tracked so no cell pays for
//! more than two merges; every bookkeeping identity is re-audited each round.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::field::{
    elastic_energy, extend, fit_rigid_motion, jump_integral, l2_dist_sq, total_variation,
    DiscreteField, RigidMotion,
};
use crate::grid::{
    Cell, CompId, Configuration, Edge, EdgeSet, GridSet, LatticeRect, LatticeSpec,
};
use crate::measures::{measure_star, total_measures, validate_class, Params};
use crate::modify::{initial_rectangularization, rectangularize};
use crate::neighborhoods::{
    bridge_sets, cut_ring, exceptional_sets, neighborhood, outward_cells, select_tau, snap_radius,
    BridgeRecord, TauSelection,
};
use crate::report::{
    ComponentTrace, FinalReport, IterationRecord, KornCheck, Ledger, Meta, RectOut, RunReport,
    SkewDiagnostic, StepKind, SurfaceBudget, VariationSplit, REPORT_VERSION,
};
use crate::Error;

/// Candidate enumeration strategy for the minimality search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MinimalityMode {
    /// Every admissible rectangle (pruned); exact.
    Exhaustive,
    /// Seeded random + local candidates; labeled non-exhaustive in reports.
    Sampled(u32),
    /// Skip the search entirely (diagnostic scenarios that exercise the
    /// later cases; labeled in reports).
    Off,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EngineOptions {
    pub minimality: MinimalityMode,
    pub seed: u64,
    /// Keep per-iteration geometry snapshots (for figure emission).
    pub record_frames: bool,
}

impl Default for EngineOptions {
    fn default() -> Self {
        EngineOptions { minimality: MinimalityMode::Exhaustive, seed: 0, record_frames: false }
    }
}

/// A region whose energy has been spent on a merge: an area part plus the
/// boundary edges it absorbed. Rectangle boundaries carved out later are
/// excised from the region: `cut` records them, so a boundary running through
/// the area part no longer counts as touched.
#[derive(Debug, Clone)]
pub struct SpentRegion {
    pub cells: GridSet,
    pub edges: EdgeSet,
    pub cut: EdgeSet,
}

impl SpentRegion {
    fn empty(spec: LatticeSpec) -> Self {
        SpentRegion { cells: GridSet::empty(spec), edges: EdgeSet::new(), cut: EdgeSet::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.edges.is_empty()
    }

    /// True if the boundary meets this region: an edge inside the open area
    /// part (not excised) or among the absorbed edges.
    fn meets_boundary(&self, gamma: &EdgeSet) -> bool {
        if !gamma.is_disjoint(&self.edges) {
            return true;
        }
        gamma.iter().any(|e| {
            let (a, b) = e.cells();
            self.cells.contains(a) && self.cells.contains(b) && !self.cut.contains(e)
        })
    }
}

/// One per-iteration geometry snapshot for figure emission.
#[derive(Debug, Clone)]
pub struct Frame {
    pub index: usize,
    pub config: Configuration,
    pub active: Option<CompId>,
    pub case: StepKind,
    pub neighborhood: Option<LatticeRect>,
    pub spent_cells: Vec<GridSet>,
}

/// Final artifacts of a run.
pub struct RunOutput {
    pub report: RunReport,
    pub config: Configuration,
    pub u_bar: DiscreteField,
    pub motions: BTreeMap<CompId, RigidMotion>,
    pub frames: Vec<Frame>,
    /// Shrunken verification square (cells), empty when vacuous.
    pub q_tilde: Option<LatticeRect>,
    /// Cells of the verification square clear of every output rectangle.
    pub korn_region: GridSet,
}

struct Engine {
    p: Params,
    spec: LatticeSpec,
    opts: EngineOptions,
    u: DiscreteField,
    cell_energy: BTreeMap<Cell, f64>,
    h_w: GridSet,
    alpha_w: f64,
    base_star: f64,
    base_h1: f64,
    cfg: Configuration,
    lambda_sq_units: u64,
    spent: Vec<SpentRegion>,
    motions: BTreeMap<CompId, RigidMotion>,
    iterations: Vec<IterationRecord>,
    frames: Vec<Frame>,
    warnings: Vec<String>,
    anomalies: Vec<String>,
    rng: rand_chacha::ChaCha8Rng,
}

fn diam_from_units(spec: &LatticeSpec, units_sq: u64) -> f64 {
    spec.edge_len() * (units_sq as f64).sqrt()
}

impl Engine {
    fn new(
        config0: &Configuration,
        u: &DiscreteField,
        p: &Params,
        opts: EngineOptions,
    ) -> Result<Self, Error> {
        p.validate()?;
        config0.check_invariants()?;
        for comp in config0.interior_components() {
            if !comp.interior.is_connected() {
                return Err(Error::InvalidInput(format!(
                    "component {} is not connected",
                    comp.id.0
                )));
            }
        }
        let spec = config0.spec;
        let w_cells = config0.w_cells();
        if !w_cells.is_subset(&u.domain) {
            return Err(Error::InvalidInput(
                "displacement field does not cover the live region".into(),
            ));
        }
        let mut cell_energy = BTreeMap::new();
        let mut alpha_w = 0.0;
        for &c in w_cells.iter() {
            let single = GridSet::from_cells(spec, [c])?;
            let e = elastic_energy(u, &single);
            cell_energy.insert(c, e);
            alpha_w += e;
        }
        let totals0 = total_measures(config0, p);
        let mut w0 = initial_rectangularization(config0, p)?;
        w0.lambda = 0.0;
        Ok(Engine {
            p: *p,
            spec,
            opts,
            u: u.clone(),
            cell_energy,
            h_w: config0.h_cells(),
            alpha_w,
            base_star: totals0.star,
            base_h1: totals0.h,
            cfg: w0,
            lambda_sq_units: 0,
            spent: Vec::new(),
            motions: BTreeMap::new(),
            iterations: Vec::new(),
            frames: Vec::new(),
            warnings: Vec::new(),
            anomalies: Vec::new(),
            rng: crate::gen::rng(opts.seed),
        })
    }

    fn alpha_of(&self, region: &GridSet) -> f64 {
        let mut a = 0.0;
        for c in region.iter() {
            if let Some(e) = self.cell_energy.get(c) {
                a += e;
            }
        }
        a
    }

    fn alpha_spent(&self, s: &SpentRegion) -> f64 {
        self.alpha_of(&s.cells)
    }

    fn lambda(&self) -> f64 {
        diam_from_units(&self.spec, self.lambda_sq_units)
    }

    fn warn_once(&mut self, msg: &str) {
        if !self.warnings.iter().any(|w| w == msg) {
            self.warnings.push(msg.to_string());
        }
    }

    /// `tau_hat` radius in s-units for a component diameter.
    fn tau_hat_s(&self, diam: f64) -> i64 {
        snap_radius(&self.spec, self.p.q * self.p.q * self.p.upsilon * diam / self.p.h_star)
    }

    /// Eligibility: the doubled working ring of the carried rectangle stays
    /// inside the hole-filled input region.
    fn eligible_rect(&self, rect: &LatticeRect, diam: f64) -> bool {
        let t = 2 * self.tau_hat_s(diam);
        let tc = outward_cells(t);
        let b = rect.dilate(tc);
        if !b.strictly_inside_ambient(&self.spec) {
            return false;
        }
        match GridSet::from_rect(self.spec, &b) {
            Err(_) => false,
            Ok(cells) => cells.is_subset(&self.h_w),
        }
    }

    fn is_eligible(&self, id: CompId) -> bool {
        let comp = self.cfg.component(id).expect("component");
        let Some(rect) = comp.rect.or_else(|| comp.interior.bbox()) else {
            return false;
        };
        self.eligible_rect(&rect, comp.diam_inf())
    }

    fn ledger(&self) -> Ledger {
        let totals = total_measures(&self.cfg, &self.p);
        let alpha_i = self.alpha_of(&self.cfg.w_cells());
        let spent_alpha: f64 = self.spent.iter().map(|s| self.alpha_spent(s)).sum();
        Ledger {
            lhs: self.p.epsilon * totals.omega + alpha_i,
            rhs: self.p.epsilon * self.base_star
                + self.alpha_w
                + self.p.h_star * (1.0 - self.p.omega_min) * spent_alpha,
        }
    }

    /// Components with unit weight whose boundary avoids every spent region.
    fn untouched(&self, id: CompId) -> bool {
        let comp = self.cfg.component(id).expect("component");
        if comp.weight != 1.0 {
            return false;
        }
        self.spent.iter().all(|s| !s.meets_boundary(&comp.gamma))
    }

    /// Ledger weight floor: `1 - (1 - omega_min)/2 * #(spent regions holding
    /// the whole exclusive boundary)`.
    fn ledger_weight(&self, id: CompId) -> f64 {
        let comp = self.cfg.component(id).expect("component");
        let mut n = 0usize;
        if !comp.theta.is_empty() {
            for s in &self.spent {
                if comp.theta.is_subset(&s.edges) {
                    n += 1;
                }
            }
        }
        1.0 - 0.5 * (1.0 - self.p.omega_min) * n as f64
    }

    /// Union of boundaries of unit-weight components strictly larger than the
    /// given one (their edges are exempt from local crack budgets).
    fn larger_unit_boundaries(&self, diam_sq_units: u64) -> EdgeSet {
        let mut out = EdgeSet::new();
        for comp in self.cfg.interior_components() {
            if comp.weight == 1.0 && comp.diam_inf_sq_units() > diam_sq_units {
                out = out.union(&comp.gamma);
            }
        }
        out
    }

    // ------------------------------------------------------------------
    // Audits
    // ------------------------------------------------------------------

    fn audit(&mut self) {
        let mut bad = Vec::new();
        // Multiplicity: every cell in at most two spent regions; live cells in
        // at most one; edges in at most one.
        let w_cells = self.cfg.w_cells();
        let mut cell_mult: BTreeMap<Cell, u32> = BTreeMap::new();
        let mut edge_mult: BTreeMap<Edge, u32> = BTreeMap::new();
        for s in &self.spent {
            for &c in s.cells.iter() {
                *cell_mult.entry(c).or_insert(0) += 1;
            }
            for &e in s.edges.iter() {
                *edge_mult.entry(e).or_insert(0) += 1;
            }
        }
        for (c, m) in &cell_mult {
            if *m > 2 {
                bad.push(format!("cell ({}, {}) spent {m} times", c.x, c.y));
            } else if *m > 1 && w_cells.contains(*c) {
                bad.push(format!("live cell ({}, {}) spent twice", c.x, c.y));
            }
        }
        for (e, m) in &edge_mult {
            if *m > 1 {
                bad.push(format!("edge ({}, {}, horiz={}) spent {m} times", e.x, e.y, e.horiz));
            }
        }
        // Coverage dichotomy: each exclusive boundary either sits inside one
        // spent region or its component is untouched with unit weight.
        let ids: Vec<CompId> = self.cfg.interior_components().map(|c| c.id).collect();
        for id in &ids {
            let comp = self.cfg.component(*id).expect("component");
            let inside = self.spent.iter().any(|s| !comp.theta.is_empty() && comp.theta.is_subset(&s.edges));
            if !inside && !self.untouched(*id) {
                bad.push(format!("component {} neither spent nor untouched", id.0));
            }
        }
        // Weight floors.
        for id in &ids {
            let comp = self.cfg.component(*id).expect("component");
            let floor = self.ledger_weight(*id);
            if comp.weight < floor - 1e-12 {
                bad.push(format!(
                    "component {} weight {} below ledger floor {floor}",
                    id.0, comp.weight
                ));
            }
            if comp.weight < 1.0 {
                if let Some(r) = comp.rect {
                    let lim = comp.weight / floor * comp.diam_inf();
                    if r.diam_inf(&self.spec) > lim * (1.0 + 1e-12) {
                        bad.push(format!(
                            "component {} rectangle diameter exceeds weight-scaled bound",
                            id.0
                        ));
                    }
                }
            }
        }
        // Spent regions must stay near some untouched component.
        let lam = self.lambda();
        for (j, s) in self.spent.iter().enumerate() {
            let live_part = s.cells.intersection(&w_cells);
            if live_part.is_empty() {
                continue;
            }
            let mut housed = false;
            for id in &ids {
                if !self.untouched(*id) {
                    continue;
                }
                let comp = self.cfg.component(*id).expect("component");
                let Some(rect) = comp.rect.or_else(|| comp.interior.bbox()) else { continue };
                let eta = snap_radius(
                    &self.spec,
                    21.0 * self.p.upsilon * comp.diam_inf().min(lam.max(comp.diam_inf())),
                );
                let eta = eta.min(crate::neighborhoods::max_radius(self.spec, &rect));
                let Ok(m) = cut_ring(self.spec, &rect, eta.max(1), &self.p) else { continue };
                let exempt = self.larger_unit_boundaries(comp.diam_inf_sq_units());
                let cells_ok = {
                    let m1 = m.part_cells(1, true);
                    let m2 = m.part_cells(2, true);
                    live_part.is_subset(&m1) || live_part.is_subset(&m2)
                };
                let edges_ok = s.edges.is_disjoint(&exempt);
                if cells_ok && edges_ok {
                    housed = true;
                    break;
                }
            }
            if !housed {
                bad.push(format!("spent region {j} escapes every corner-cut neighborhood"));
            }
        }
        // Energy bookkeeping.
        let led = self.ledger();
        if !led.holds(1e-9) {
            bad.push(format!("energy ledger violated: {} > {}", led.lhs, led.rhs));
        }
        let spent_alpha: f64 = self.spent.iter().map(|s| self.alpha_spent(s)).sum();
        if spent_alpha > 2.0 * self.alpha_w * (1.0 + 1e-9) + 1e-15 {
            bad.push("spent energy exceeds twice the input energy".into());
        }
        // Class validity at the current scale.
        let rep = validate_class(&self.cfg, &self.p, self.lambda());
        if !rep.all() {
            bad.push("configuration leaves the valid class".into());
        }
        // Local crack budgets for certified small components.
        for id in &ids {
            let comp = self.cfg.component(*id).expect("component");
            if !self.untouched(*id) || comp.diam_inf_sq_units() > self.lambda_sq_units {
                continue;
            }
            let Some(rect) = comp.rect.or_else(|| comp.interior.bbox()) else { continue };
            if !self.eligible_rect(&rect, comp.diam_inf()) {
                continue;
            }
            let that = self.tau_hat_s(comp.diam_inf());
            let Ok(n) = neighborhood(self.spec, &rect, that) else { continue };
            let exempt = self.larger_unit_boundaries(comp.diam_inf_sq_units());
            let mut units = 0u64;
            for other in self.cfg.interior_components() {
                if other.id == *id {
                    continue;
                }
                let cl = crate::neighborhoods::edges_inside_ring(&other.theta, &n);
                units += cl.difference(&exempt).len() as u64;
            }
            let ring_alpha = self.alpha_of(&n.ring.intersection(&w_cells));
            let lhs = ring_alpha + self.p.epsilon * units as f64 * self.spec.edge_len();
            let rhs = self.p.d_big * self.p.epsilon * (that as f64 * self.spec.s);
            if lhs > rhs * (1.0 + 1e-9) {
                bad.push(format!("component {} local crack budget violated", id.0));
            }
        }
        self.anomalies.extend(bad);
    }

    // ------------------------------------------------------------------
    // Minimality search
    // ------------------------------------------------------------------

    fn delta_omega(&self, v: &LatticeRect) -> f64 {
        weighted_measure_delta(&self.cfg, v, &self.p)
    }

    /// Search for a rectangle containing the component whose modification
    /// strictly decreases the weighted measure.
    fn find_witness(&mut self, gamma: CompId) -> Option<LatticeRect> {
        match self.opts.minimality {
            MinimalityMode::Off => {
                self.warn_once("minimality search disabled");
                None
            }
            MinimalityMode::Exhaustive => minimality_witness(&self.cfg, gamma, &self.p),
            MinimalityMode::Sampled(n) => {
                use rand::Rng;
                self.warn_once("minimality search sampled, not exhaustive");
                let comp = self.cfg.component(gamma).expect("component");
                let g = comp.rect.or_else(|| comp.interior.bbox()).expect("nonempty");
                let k = self.spec.half_cells;
                let tiny = 1e-12 * self.spec.mu().max(1.0);
                let mut cands: Vec<LatticeRect> = Vec::new();
                // Local candidates: dilations and hulls with nearby boxes.
                for d in 1..6 {
                    let v = g.dilate(d);
                    if v.strictly_inside_ambient(&self.spec) {
                        cands.push(v);
                    }
                }
                for other in self.cfg.interior_components() {
                    let v = g.hull(&other.gamma.bbox().expect("nonempty"));
                    if v.strictly_inside_ambient(&self.spec) {
                        cands.push(v);
                    }
                }
                for _ in 0..n {
                    let a = self.rng.gen_range((-k + 1)..=g.x0);
                    let b = self.rng.gen_range(g.x1..=(k - 1).max(g.x1));
                    let c = self.rng.gen_range((-k + 1)..=g.y0);
                    let d = self.rng.gen_range(g.y1..=(k - 1).max(g.y1));
                    if b > a && d > c {
                        cands.push(LatticeRect { x0: a, y0: c, x1: b, y1: d });
                    }
                }
                let mut best: Option<(f64, LatticeRect)> = None;
                for v in cands {
                    let d = self.delta_omega(&v);
                    if d < -tiny {
                        match &best {
                            None => best = Some((d, v)),
                            Some((bd, bv)) => {
                                if d < *bd || (d == *bd && v < *bv) {
                                    best = Some((d, v));
                                }
                            }
                        }
                    }
                }
                best.map(|(_, v)| v)
            }
        }
    }

    // ------------------------------------------------------------------
    // Ring energy condition
    // ------------------------------------------------------------------

    fn ring_energy_split(
        &self,
        gamma: CompId,
        rect: &LatticeRect,
    ) -> Result<RingEnergy, Error> {
        let comp = self.cfg.component(gamma).expect("component");
        let that = self.tau_hat_s(comp.diam_inf());
        let n = neighborhood(self.spec, rect, 2 * that)?;
        let w_cells = self.cfg.w_cells();
        let alpha = self.alpha_of(&n.ring.intersection(&w_cells));
        let mut units = 0u64;
        for other in self.cfg.interior_components() {
            if other.id == gamma {
                continue;
            }
            units += crate::neighborhoods::edges_inside_ring(&other.theta, &n).len() as u64;
        }
        let surface = units as f64 * self.spec.edge_len();
        let tau_hat = that as f64 * self.spec.s;
        Ok(RingEnergy {
            alpha,
            surface,
            tau_hat,
            n_box: n.box_rect,
            bound: self.p.d_big * self.p.epsilon * tau_hat,
            surface_limit: 16.0 * tau_hat / self.p.h_star,
        })
    }

    // ------------------------------------------------------------------
    // Step applications
    // ------------------------------------------------------------------

    fn apply_modification(
        &mut self,
        gamma: CompId,
        v: &LatticeRect,
        kind: StepKind,
        extra_budget: f64,
        new_spent: Option<SpentRegion>,
        reduce: &[CompId],
    ) -> Result<(), Error> {
        let before_tot = total_measures(&self.cfg, &self.p);
        let before_alpha = self.alpha_of(&self.cfg.w_cells());

        // Weight reduction for merge bookkeeping.
        let mut staged = self.cfg.clone();
        for id in reduce {
            if let Some(c) = staged.component_mut(*id) {
                c.weight -= 0.5 * (1.0 - self.p.omega_min);
            }
        }
        staged.lambda = self.lambda();

        let out = rectangularize(&staged, v, &self.p)?;
        let v_border = out.v_prime.boundary_edges();
        for s in &mut self.spent {
            s.edges = s.edges.difference(&v_border);
            s.cut = s.cut.union(&v_border);
        }
        let mut fresh = new_spent.unwrap_or_else(|| SpentRegion::empty(self.spec));
        fresh.edges = fresh.edges.difference(&v_border);
        fresh.cut = fresh.cut.union(&v_border);
        self.spent.push(fresh);

        self.cfg = out.config;
        self.cfg.lambda = self.lambda();

        let after_tot = total_measures(&self.cfg, &self.p);
        let after_alpha = self.alpha_of(&self.cfg.w_cells());
        let lhs = self.p.epsilon * after_tot.omega + after_alpha;
        let rhs = self.p.epsilon * before_tot.omega + before_alpha + extra_budget;
        if lhs > rhs + 1e-9 * rhs.abs().max(1.0) {
            self.anomalies.push(format!(
                "step ledger violated for component {}: {} > {}",
                gamma.0, lhs, rhs
            ));
        }
        let _ = kind;
        Ok(())
    }

    fn record_iteration(
        &mut self,
        active: CompId,
        kind: StepKind,
        trace_ratio: Option<f64>,
        n_box: Option<LatticeRect>,
        warnings: Vec<String>,
    ) {
        let idx = self.iterations.len();
        let measures = total_measures(&self.cfg, &self.p);
        let alpha = self.alpha_of(&self.cfg.w_cells());
        let ledger = self.ledger();
        let anomalies = std::mem::take(&mut self.anomalies);
        if self.opts.record_frames {
            self.frames.push(Frame {
                index: idx,
                config: self.cfg.clone(),
                active: Some(active),
                case: kind,
                neighborhood: n_box,
                spent_cells: self.spent.iter().map(|s| s.cells.clone()).collect(),
            });
        }
        self.iterations.push(IterationRecord {
            index: idx,
            active_component: active.0,
            case: kind,
            lambda: self.lambda(),
            measures,
            alpha,
            ledger,
            trace_ratio,
            anomalies: anomalies.clone(),
            warnings,
        });
        // Keep a global copy so the run report surfaces them too.
        self.anomalies = anomalies;
    }

    fn trace_step(
        &mut self,
        gamma: CompId,
        sel: &TauSelection,
        mut warnings: Vec<String>,
    ) -> Result<(), Error> {
        let comp = self.cfg.component(gamma).expect("component").clone();
        let rect = comp.rect.or_else(|| comp.interior.bbox()).expect("nonempty");
        let w_cells = self.cfg.w_cells();
        let region = match neighborhood(self.spec, &rect, sel.tau_s) {
            Ok(n) => n.ring.intersection(&w_cells).intersection(&self.u.domain),
            Err(_) => GridSet::empty(self.spec),
        };
        let (motion, ill) = if region.is_empty() {
            warnings.push(format!("component {}: empty fit region, zero motion", gamma.0));
            (RigidMotion::default(), true)
        } else {
            let fit = fit_rigid_motion(&self.u, &region)?;
            (fit.motion, fit.ill_conditioned)
        };
        if ill {
            warnings.push(format!("component {}: ill-conditioned rigid fit", gamma.0));
        }
        self.motions.insert(gamma, motion);

        // Jump diagnostic: extend by every certified motion present and
        // integrate the squared jump over the component boundary.
        let present: Vec<CompId> = self
            .motions
            .keys()
            .copied()
            .filter(|id| self.cfg.component(*id).is_some())
            .collect();
        let ext = extend(&self.u, &self.cfg, &self.motions, &present)?;
        let measurable = EdgeSet::from_iter(comp.gamma.iter().copied().filter(|e| {
            let (a, b) = e.cells();
            ext.cell_values(a).is_some() && ext.cell_values(b).is_some()
        }));
        if measurable.len() < comp.gamma.len() {
            warnings.push(format!(
                "component {}: {} boundary edges lack two-sided traces",
                gamma.0,
                comp.gamma.len() - measurable.len()
            ));
        }
        let jump_sq = jump_integral(&ext, &measurable, 2)?;
        let d = comp.diam_inf();
        let budget = (self.p.c_hat + 0.5 * self.p.c_star) * self.p.epsilon
            / self.p.upsilon.powi(4)
            * d
            * d;
        let ratio = if budget > 0.0 { jump_sq / budget } else { 0.0 };
        if ratio > 1.0 {
            warnings.push(format!(
                "component {}: trace budget exceeded (ratio {ratio:.3e})",
                gamma.0
            ));
        }
        self.spent.push(SpentRegion::empty(self.spec));
        self.record_iteration(gamma, StepKind::Trace, Some(ratio), None, warnings);
        Ok(())
    }

    fn merge_step(
        &mut self,
        gamma: CompId,
        bridge: &BridgeRecord,
        sel: &TauSelection,
        mut warnings: Vec<String>,
    ) -> Result<(), Error> {
        let spec = self.spec;
        let comp = self.cfg.component(gamma).expect("component").clone();
        let rect = comp.rect.or_else(|| comp.interior.bbox()).expect("nonempty");
        let gm = self.cfg.component(bridge.comp_m).expect("component").clone();
        let tau_bar = sel.tau_bar_s as f64 * spec.s;
        let lam = self.lambda();

        // Neighbor set: components whose exclusive boundary enters the bridge
        // region, or untouched ones whose corner-cut neighborhood does.
        let w_cells = self.cfg.w_cells();
        let mut affected: Vec<CompId> = Vec::new();
        for other in self.cfg.interior_components() {
            if other.id == gamma || other.id == bridge.comp_m {
                continue;
            }
            let theta_in = other.theta.iter().any(|e| {
                let (a, b) = e.cells();
                bridge.region.contains(a) && bridge.region.contains(b)
            });
            let mut m_in = false;
            if !theta_in && self.untouched(other.id) {
                if let Some(orect) = other.rect.or_else(|| other.interior.bbox()) {
                    let eta = snap_radius(
                        &spec,
                        21.0 * self.p.upsilon * other.diam_inf().min(lam.max(other.diam_inf())),
                    )
                    .min(crate::neighborhoods::max_radius(spec, &orect))
                    .max(1);
                    if let Ok(m) = cut_ring(spec, &orect, eta, &self.p) {
                        m_in = !m.outer.is_disjoint(&bridge.region);
                    }
                }
            }
            if theta_in || m_in {
                affected.push(other.id);
            }
        }
        // Affected components must be small and close to the bridge.
        for id in &affected {
            let c = self.cfg.component(*id).expect("component");
            if c.diam_inf() >= 19.0 * tau_bar {
                self.anomalies.push(format!(
                    "merge neighbor {} too large: {} >= {}",
                    id.0,
                    c.diam_inf(),
                    19.0 * tau_bar
                ));
            }
            if c.interior.distance_to(&bridge.region) > tau_bar + 1e-12 {
                self.anomalies.push(format!("merge neighbor {} too far from the bridge", id.0));
            }
        }

        // Donor spent regions already covering an affected neighborhood.
        let mut donors: Vec<usize> = Vec::new();
        for (j, s) in self.spent.iter().enumerate() {
            if s.is_empty() {
                continue;
            }
            let live = s.cells.intersection(&w_cells);
            let mut inside_some = false;
            for id in &affected {
                if !self.untouched(*id) {
                    continue;
                }
                let c = self.cfg.component(*id).expect("component");
                let Some(orect) = c.rect.or_else(|| c.interior.bbox()) else { continue };
                let eta = snap_radius(&spec, 21.0 * self.p.upsilon * c.diam_inf())
                    .min(crate::neighborhoods::max_radius(spec, &orect))
                    .max(1);
                if let Ok(m) = cut_ring(spec, &orect, eta, &self.p) {
                    let cells_ok = live.is_subset(&m.outer);
                    let edges_ok = s
                        .edges
                        .iter()
                        .all(|e| {
                            let (a, b) = e.cells();
                            m.outer.contains(a) || m.outer.contains(b)
                        });
                    if cells_ok && edges_ok {
                        inside_some = true;
                        break;
                    }
                }
            }
            if inside_some {
                donors.push(j);
            }
        }

        // The new spent region: bridge area inside the live region plus the
        // exclusive boundaries of affected components, minus donor regions.
        let mut new_cells = bridge.region.intersection(&w_cells);
        let mut new_edges = EdgeSet::new();
        for id in &affected {
            let c = self.cfg.component(*id).expect("component");
            new_edges = new_edges.union(&c.theta);
        }
        for j in &donors {
            let s = &self.spent[*j];
            new_cells = new_cells.difference(&s.cells);
            new_edges = new_edges.difference(&s.edges);
            new_edges = EdgeSet::from_iter(new_edges.iter().copied().filter(|e| {
                let (a, b) = e.cells();
                !(s.cells.contains(a) && s.cells.contains(b))
            }));
        }
        let fresh =
            SpentRegion { cells: new_cells.clone(), edges: new_edges.clone(), cut: EdgeSet::new() };

        // Fully absorbed components get their weight reduced.
        let reduce: Vec<CompId> = affected
            .iter()
            .copied()
            .filter(|id| {
                let c = self.cfg.component(*id).expect("component");
                !c.theta.is_empty() && c.theta.is_subset(&new_edges)
            })
            .collect();

        // Overflow bookkeeping: the bridge violation must be paid by the new
        // spent region.
        let psi_rhs = self.p.d_big / (1.0 - self.p.omega_min) * self.p.epsilon * bridge.psi;
        let crack_units = {
            let mut n = 0usize;
            for other in self.cfg.interior_components() {
                n += other
                    .theta
                    .iter()
                    .filter(|e| {
                        let (a, b) = e.cells();
                        new_cells.contains(a) && new_cells.contains(b) || new_edges.contains(e)
                    })
                    .count();
            }
            n
        };
        let pay = self.alpha_of(&new_cells)
            + 2.0 * self.p.epsilon * crack_units as f64 * spec.edge_len();
        if psi_rhs >= pay + 1e-12 && bridge.psi > 0.0 {
            warnings.push(format!(
                "bridge overflow not fully covered by the fresh spent region: {psi_rhs:.3e} >= {pay:.3e}"
            ));
        }
        if !bridge.connector_ok {
            self.anomalies.push("connector perimeter exceeds four gap widths".into());
        }
        if !bridge.lip_ok {
            self.anomalies.push("bridge extent exceeds its width bound".into());
        }

        // Enclosing rectangle: both components plus the connector.
        let mut v = rect.hull(&gm.interior.bbox().expect("nonempty"));
        if let Some(t) = bridge.connector {
            v = v.hull(&t);
        }
        let budget = self.p.h_star * (1.0 - self.p.omega_min) * self.alpha_of(&fresh.cells);
        self.apply_modification(gamma, &v, StepKind::Merge, budget, Some(fresh), &reduce)?;
        self.record_iteration(gamma, StepKind::Merge, None, Some(v), warnings);
        Ok(())
    }

    fn step(&mut self, gamma: CompId) -> Result<(), Error> {
        let comp = self.cfg.component(gamma).expect("component").clone();
        let rect = comp.rect.or_else(|| comp.interior.bbox()).expect("nonempty");
        let diam = comp.diam_inf();

        // 1. Weighted-measure minimality.
        if let Some(witness) = self.find_witness(gamma) {
            self.apply_modification(gamma, &witness, StepKind::Replace, 0.0, None, &[])?;
            self.record_iteration(gamma, StepKind::Replace, None, Some(witness), vec![]);
            return Ok(());
        }

        // 2. Ring energy condition at the doubled working radius.
        let ring = self.ring_energy_split(gamma, &rect)?;
        if ring.alpha + self.p.epsilon * ring.surface > ring.bound {
            if ring.surface > ring.surface_limit {
                // Overloaded crack: the ring box itself is a witness.
                let v = ring.n_box;
                let d = self.delta_omega(&v);
                if d <= 0.0 {
                    self.apply_modification(gamma, &v, StepKind::Replace, 0.0, None, &[])?;
                    self.record_iteration(gamma, StepKind::Replace, None, Some(v), vec![]);
                    return Ok(());
                }
                self.anomalies.push(format!(
                    "component {}: crack overflow without improving rectangle",
                    gamma.0
                ));
                self.record_iteration(gamma, StepKind::Replace, None, Some(v), vec![]);
                return Err(Error::Construction("crack overflow anomaly".into()));
            }
            // Elastic overflow: absorb the ring.
            let v = ring.n_box;
            let removed_alpha = self.alpha_of(
                &GridSet::from_rect(self.spec, &v)?.intersection(&self.cfg.w_cells()),
            );
            if 16.0 * self.p.epsilon * ring.tau_hat > removed_alpha + 1e-12 {
                self.anomalies.push(format!(
                    "component {}: absorbed energy {removed_alpha:.3e} below the surface cost",
                    gamma.0
                ));
            }
            let star_increase = measure_star(v.perimeter(&self.spec), v.diam_inf(&self.spec), &self.p)
                - measure_star(comp.gamma.h1(&self.spec), diam, &self.p);
            let raster_t = outward_cells(2 * self.tau_hat_s(diam)) as f64 * self.spec.edge_len();
            if star_increase > 8.0 * raster_t + 1e-9 {
                self.anomalies.push(format!(
                    "component {}: ring box surface increase {star_increase:.3e} above 8t",
                    gamma.0
                ));
            }
            self.apply_modification(gamma, &v, StepKind::Absorb, 0.0, None, &[])?;
            self.record_iteration(gamma, StepKind::Absorb, None, Some(v), vec![]);
            return Ok(());
        }

        // 3. Scale selection and exceptional sets.
        let tau_bar_s = snap_radius(&self.spec, self.p.upsilon * diam);
        let mut warnings = Vec::new();
        if tau_bar_s < 4 {
            warnings.push(format!(
                "component {}: resolution-degenerate base radius ({tau_bar_s} s-units)",
                gamma.0
            ));
        }
        let sel = match select_tau(&self.cfg, gamma, tau_bar_s, &self.p) {
            Ok(sel) => sel,
            Err(sig) => {
                // Minimality holds exactly but the continuum consequence
                // failed: parameter-regime anomaly.
                self.anomalies.push(format!(
                    "component {}: scale selection contradiction ({})",
                    gamma.0, sig.reason
                ));
                self.record_iteration(gamma, StepKind::Trace, None, None, warnings);
                return Err(Error::Construction("scale selection anomaly".into()));
            }
        };
        let exc = match exceptional_sets(&self.cfg, gamma, &sel, &self.p) {
            Ok(exc) => exc,
            Err(sig) => {
                self.anomalies.push(format!(
                    "component {}: exceptional-set contradiction ({})",
                    gamma.0, sig.reason
                ));
                self.record_iteration(gamma, StepKind::Trace, None, None, warnings);
                return Err(Error::Construction("exceptional set anomaly".into()));
            }
        };

        // 4. Bridge energy conditions.
        let w_cells = self.cfg.w_cells();
        for k in exc.k.iter().flatten() {
            let Some(bridge) = bridge_sets(&self.cfg, gamma, &sel, k, &self.p)? else {
                continue;
            };
            let alpha = self.alpha_of(&bridge.region.intersection(&w_cells));
            let mut units = 0usize;
            for other in self.cfg.interior_components() {
                units += other
                    .theta
                    .iter()
                    .filter(|e| {
                        let (a, b) = e.cells();
                        bridge.region.contains(a) && bridge.region.contains(b)
                    })
                    .count();
            }
            let lhs = alpha + self.p.epsilon * units as f64 * self.spec.edge_len();
            let rhs =
                self.p.d_big / (1.0 - self.p.omega_min) * self.p.epsilon * bridge.psi;
            if lhs > rhs {
                self.merge_step(gamma, &bridge, &sel, warnings)?;
                return Ok(());
            }
        }

        // 5. All conditions hold: certify the component.
        self.trace_step(gamma, &sel, warnings)
    }

    fn run_loop(&mut self) -> Result<(), Error> {
        let cap = self.cfg.components.len() + self.spec.cell_count() as usize + 8;
        let mut steps = 0usize;
        loop {
            // Batch: the smallest eligible size above the current scale.
            let mut batch_sq: Option<u64> = None;
            for comp in self.cfg.interior_components() {
                let sq = comp.diam_inf_sq_units();
                if sq <= self.lambda_sq_units || !self.is_eligible(comp.id) {
                    continue;
                }
                batch_sq = Some(match batch_sq {
                    None => sq,
                    Some(b) => b.min(sq),
                });
            }
            let Some(batch_sq) = batch_sq else { break };
            // Process every component of this size; condition-satisfying ones
            // (traces) run before modifications simply by re-scanning, since
            // modifications remove their target from the batch.
            loop {
                let next = self
                    .cfg
                    .interior_components()
                    .find(|c| {
                        c.diam_inf_sq_units() == batch_sq
                            && self.is_eligible(c.id)
                            && !self.motions.contains_key(&c.id)
                    })
                    .map(|c| c.id);
                let Some(id) = next else { break };
                steps += 1;
                if steps > cap {
                    self.anomalies.push("iteration cap exceeded".into());
                    return Err(Error::Construction("iteration cap exceeded".into()));
                }
                self.step(id)?;
                self.audit();
                if let Some(last) = self.iterations.last_mut() {
                    let pending = std::mem::take(&mut self.anomalies);
                    last.anomalies.extend(pending.clone());
                    self.anomalies = pending;
                }
                if !self.anomalies.is_empty() {
                    return Err(Error::Construction("audit anomaly".into()));
                }
            }
            self.lambda_sq_units = batch_sq;
            self.cfg.lambda = self.lambda();
        }
        Ok(())
    }
}

struct RingEnergy {
    alpha: f64,
    surface: f64,
    tau_hat: f64,
    n_box: LatticeRect,
    bound: f64,
    surface_limit: f64,
}

/// Exact weighted-measure change of carving `v` out of the configuration,
/// touching only components whose closure meets the closed rectangle.
pub fn weighted_measure_delta(config: &Configuration, v: &LatticeRect, p: &Params) -> f64 {
    let spec = &config.spec;
    let e = spec.edge_len();
    let mut delta = measure_star(v.perimeter(spec), v.diam_inf(spec), p);
    for comp in config.interior_components() {
        let b = comp.gamma.bbox().expect("nonempty");
        if !b.meets_closed(v) {
            continue;
        }
        let d_old = comp.diam_inf();
        let survivors = comp.interior.subtract_rect(v);
        let d_new = if survivors.is_empty() { 0.0 } else { survivors.diam_inf() };
        let diam_term = (comp.weight * d_old).min(d_new);
        let clipped = comp.theta.within_closed_rect(v).len() as f64 * e;
        delta += (1.0 - p.h_star) * (diam_term - comp.weight * d_old) - p.h_star * clipped;
    }
    delta
}

/// Exhaustive search for a rectangle containing the component whose carving
/// strictly decreases the weighted measure. Candidates are pruned by interval
/// prefix sums; the result is the best improvement, ties broken by the
/// lexicographically first rectangle. `None` certifies minimality.
pub fn minimality_witness(
    config: &Configuration,
    gamma: CompId,
    p: &Params,
) -> Option<LatticeRect> {
    let spec = config.spec;
    let comp = config.component(gamma).expect("component");
    let g = comp.rect.or_else(|| comp.interior.bbox()).expect("nonempty");
    let k = spec.half_cells;
    let tiny = 1e-12 * spec.mu().max(1.0);

    struct Item {
        b: LatticeRect,
        weight_omega: f64,
    }
    let items: Vec<Item> = config
        .interior_components()
        .map(|c| Item {
            b: c.gamma.bbox().expect("nonempty"),
            weight_omega: crate::measures::measure_omega(
                c.theta.h1(&spec),
                c.diam_inf(),
                c.weight,
                p,
            ),
        })
        .collect();

    let mut best: Option<(f64, LatticeRect)> = None;
    for a in (-k + 1)..=g.x0 {
        for b in g.x1..=(k - 1) {
            if b <= a {
                continue;
            }
            // Components overlapping [a, b] in x; prefix sums over their
            // y-extents give an O(1) reachable-measure bound per (c, d).
            let xs: Vec<&Item> = items.iter().filter(|it| it.b.x0 <= b && a <= it.b.x1).collect();
            let total: f64 = xs.iter().map(|it| it.weight_omega).sum();
            let mut by_y1: Vec<(i32, f64)> =
                xs.iter().map(|it| (it.b.y1, it.weight_omega)).collect();
            by_y1.sort_by_key(|q| q.0);
            let mut by_y0: Vec<(i32, f64)> =
                xs.iter().map(|it| (it.b.y0, it.weight_omega)).collect();
            by_y0.sort_by_key(|q| q.0);
            let cum_y1: Vec<f64> = by_y1
                .iter()
                .scan(0.0, |acc, q| {
                    *acc += q.1;
                    Some(*acc)
                })
                .collect();
            let cum_y0: Vec<f64> = by_y0
                .iter()
                .scan(0.0, |acc, q| {
                    *acc += q.1;
                    Some(*acc)
                })
                .collect();
            let below = |c: i32| -> f64 {
                match by_y1.partition_point(|q| q.0 < c) {
                    0 => 0.0,
                    n => cum_y1[n - 1],
                }
            };
            let above = |d: i32| -> f64 {
                let n0 = by_y0.partition_point(|q| q.0 <= d);
                let all = cum_y0.last().copied().unwrap_or(0.0);
                let upto = if n0 == 0 { 0.0 } else { cum_y0[n0 - 1] };
                all - upto
            };
            let w_units = (b - a) as f64;
            for c in (-k + 1)..=g.y0 {
                for d in g.y1..=(k - 1) {
                    if d <= c {
                        continue;
                    }
                    let h_units = (d - c) as f64;
                    let per = 2.0 * (w_units + h_units) * spec.edge_len();
                    let diag = w_units.hypot(h_units) * spec.edge_len();
                    let v_star = measure_star(per, diag, p);
                    let reach = total - below(c) - above(d);
                    if v_star >= reach {
                        continue;
                    }
                    let v = LatticeRect { x0: a, y0: c, x1: b, y1: d };
                    let delta = weighted_measure_delta(config, &v, p);
                    if delta < -tiny {
                        match &best {
                            None => best = Some((delta, v)),
                            Some((bd, bv)) => {
                                if delta < *bd || (delta == *bd && v < *bv) {
                                    best = Some((delta, v));
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Run the modification algorithm on a configuration and field.
pub fn run(
    config0: &Configuration,
    u: &DiscreteField,
    p: &Params,
    opts: EngineOptions,
) -> Result<RunOutput, Error> {
    let mut eng = Engine::new(config0, u, p, opts)?;
    // Record the initial rectangularization as iteration zero geometry.
    if eng.opts.record_frames {
        eng.frames.push(Frame {
            index: 0,
            config: eng.cfg.clone(),
            active: None,
            case: StepKind::Replace,
            neighborhood: None,
            spent_cells: vec![],
        });
    }
    eng.audit();
    let loop_result = if eng.anomalies.is_empty() { eng.run_loop() } else { Ok(()) };
    if let Err(e) = &loop_result {
        eng.warnings.push(format!("run halted: {e}"));
    }

    let final_block = if eng.anomalies.is_empty() {
        match assemble_final(&mut eng, config0) {
            Ok(f) => Some(f),
            Err(e) => {
                eng.warnings.push(format!("final assembly failed: {e}"));
                None
            }
        }
    } else {
        None
    };

    // Final extension over every certified component still present.
    let present: Vec<CompId> = eng
        .motions
        .keys()
        .copied()
        .filter(|id| eng.cfg.component(*id).is_some())
        .collect();
    let u_bar = extend(&eng.u, &eng.cfg, &eng.motions, &present)?;

    let (q_tilde, korn_region) = korn_region(&eng);
    let report = RunReport {
        meta: Meta { version: REPORT_VERSION.into(), seed: eng.opts.seed },
        params: eng.p,
        iterations: eng.iterations.clone(),
        final_report: final_block,
        anomalies: eng.anomalies.clone(),
        warnings: eng.warnings.clone(),
    };
    Ok(RunOutput {
        report,
        config: eng.cfg,
        u_bar,
        motions: eng.motions,
        frames: eng.frames,
        q_tilde,
        korn_region,
    })
}

/// Output rectangles: the carried rectangle of every interior component.
fn output_rects(cfg: &Configuration) -> Vec<(CompId, LatticeRect)> {
    cfg.interior_components()
        .map(|c| (c.id, c.rect.or_else(|| c.interior.bbox()).expect("nonempty")))
        .collect()
}

fn korn_region(eng: &Engine) -> (Option<LatticeRect>, GridSet) {
    let spec = eng.spec;
    let rects = output_rects(&eng.cfg);
    // Shrink by three diameters per interior rectangle plus one diameter per
    // component at the ambient boundary.
    let interior_diam: f64 = rects.iter().map(|(_, r)| r.diam_inf(&spec)).sum();
    let boundary_diam: f64 = eng
        .cfg
        .components
        .iter()
        .filter(|c| c.touches_outer_boundary)
        .map(|c| c.diam_inf())
        .sum();
    let mu_u = (spec.mu() - 3.0 * interior_diam - boundary_diam).max(0.0);
    let q_cells = (mu_u / spec.edge_len()).floor() as i32;
    if q_cells < 1 {
        return (None, GridSet::empty(spec));
    }
    let q = LatticeRect { x0: -q_cells, y0: -q_cells, x1: q_cells, y1: q_cells };
    let mut region = GridSet::empty(spec);
    'cells: for c in q.cells() {
        let cb = LatticeRect { x0: c.x, y0: c.y, x1: c.x + 1, y1: c.y + 1 };
        for (_, r) in &rects {
            if r.meets_closed(&cb) {
                continue 'cells;
            }
        }
        if spec.contains_cell(c) {
            region.insert(c);
        }
    }
    (Some(q), region)
}

fn assemble_final(eng: &mut Engine, config0: &Configuration) -> Result<FinalReport, Error> {
    let spec = eng.spec;
    let p = eng.p;
    let rects = output_rects(&eng.cfg);
    let rect_out: Vec<RectOut> = rects
        .iter()
        .map(|(_, r)| RectOut { x0: r.x0, y0: r.y0, x1: r.x1, y1: r.y1, diam: r.diam_inf(&spec) })
        .collect();

    // Surface budget.
    let lhs: f64 = rect_out.iter().map(|r| r.diam).sum();
    let base = eng.base_h1 + eng.alpha_w / p.epsilon;
    let rhs = (1.0 + 4.0 * p.theta) * base;
    let surface_budget = SurfaceBudget {
        lhs,
        rhs,
        theta: p.theta,
        measured_factor: if base > 0.0 { lhs / base } else { 0.0 },
    };

    // Extension over everything meeting the interior square.
    let (q_tilde, korn_cells) = korn_region(eng);
    let mut scope: Vec<CompId> = Vec::new();
    if let Some(q) = q_tilde {
        for comp in eng.cfg.interior_components() {
            let b = comp.interior.bbox().expect("nonempty");
            if b.meets_closed(&q) {
                if eng.motions.contains_key(&comp.id) {
                    scope.push(comp.id);
                } else {
                    eng.warnings.push(format!(
                        "component {} meets the verification square without a motion",
                        comp.id.0
                    ));
                }
            }
        }
    }
    let u_bar = extend(&eng.u, &eng.cfg, &eng.motions, &scope)?;

    // Korn-Poincare ratio on the cleared region.
    let korn = if korn_cells.is_empty() {
        KornCheck { lhs: 0.0, rhs: 0.0, ratio: 0.0, a: 0.0, b: [0.0, 0.0], mu_tilde: 0.0 }
    } else {
        let fit = fit_rigid_motion(&u_bar, &korn_cells)?;
        let lhs = l2_dist_sq(&u_bar, &korn_cells, &fit.motion);
        let mu = spec.mu();
        let denom = mu * mu * (eng.alpha_w + p.epsilon * eng.base_h1);
        KornCheck {
            lhs,
            rhs: denom,
            ratio: if denom > 0.0 { lhs / denom } else { 0.0 },
            a: fit.motion.a,
            b: fit.motion.b,
            mu_tilde: q_tilde
                .map(|q| q.width() as f64 * spec.s)
                .unwrap_or(0.0),
        }
    };

    // Split inequality on probe regions: the cleared square plus quadrants.
    let mut splits = Vec::new();
    if let Some(q) = q_tilde {
        let mut probes = vec![q];
        if q.width() >= 4 && q.height() >= 4 {
            let mx = (q.x0 + q.x1) / 2;
            let my = (q.y0 + q.y1) / 2;
            probes.push(LatticeRect { x0: q.x0, y0: q.y0, x1: mx, y1: my });
            probes.push(LatticeRect { x0: mx, y0: my, x1: q.x1, y1: q.y1 });
        }
        for pr in probes {
            let region = GridSet::from_rect(spec, &pr)?.intersection(&u_bar.domain);
            let tv = total_variation(&u_bar, &region)?;
            let lhs = tv.tv * tv.tv;
            let rhs = 2.0 * tv.area * tv.strain_l2_sq + 2.0 * tv.jump_h1 * tv.jump_l2_sq;
            splits.push(VariationSplit {
                region: RectOut {
                    x0: pr.x0,
                    y0: pr.y0,
                    x1: pr.x1,
                    y1: pr.y1,
                    diam: pr.diam_inf(&spec),
                },
                lhs,
                rhs,
                pass: lhs <= rhs * (1.0 + 1e-9),
            });
        }
    }

    // Skew-matrix diagnostic over certified components.
    let mut p2 = 0.0;
    let mut p4 = 0.0;
    let mut crack_in_v = 0.0;
    for (id, r) in &rects {
        if let Some(m) = eng.motions.get(id) {
            let d = r.diam_inf(&spec);
            let a2 = m.matrix_norm().powi(2);
            p2 += d * d * a2;
            p4 += d * d * a2 * a2;
        }
        crack_in_v += r.perimeter(&spec);
    }
    let (grad_l2, grad_l4) = grad_lp_norms(&eng.u, &eng.u.domain);
    let rhs_p2 = grad_l2 + p.epsilon * crack_in_v;
    let rhs_p4 = grad_l4 + (p.epsilon / spec.s) * p.epsilon * crack_in_v;
    let skew = SkewDiagnostic { p2, p4, rhs_p2, rhs_p4 };

    // Per-component trace diagnostics.
    let mut traces = Vec::new();
    let c1 = p.c_hat * 3.0 / (p.omega_min * p.omega_min) / p.upsilon.powi(4);
    for comp in eng.cfg.interior_components() {
        if !eng.motions.contains_key(&comp.id) {
            continue;
        }
        let measurable = EdgeSet::from_iter(comp.theta.iter().copied().filter(|e| {
            let (a, b) = e.cells();
            u_bar.cell_values(a).is_some() && u_bar.cell_values(b).is_some()
        }));
        let jump_sq = jump_integral(&u_bar, &measurable, 2)?;
        let d = comp.diam_inf();
        let budget = c1 * p.epsilon * d * d;
        traces.push(ComponentTrace {
            component: comp.id.0,
            jump_sq,
            budget,
            ratio: if budget > 0.0 { jump_sq / budget } else { 0.0 },
        });
    }

    // Rectangle diameter vs exclusive measure.
    let slack = 1.0 + 2.0 * p.h_star.max(p.sigma);
    let mut rect_measure_ok = true;
    for comp in eng.cfg.interior_components() {
        let r = comp.rect.or_else(|| comp.interior.bbox()).expect("nonempty");
        let theta_star =
            measure_star(comp.theta.h1(&spec), comp.diam_inf(), &p);
        if r.diam_inf(&spec) > slack * theta_star * (1.0 + 1e-9) {
            rect_measure_ok = false;
        }
    }

    // Total-energy comparison against the input with slack (1 + sigma).
    let totals_u = total_measures(&eng.cfg, &p);
    let alpha_u = eng.alpha_of(&eng.cfg.w_cells());
    let total_energy = Ledger {
        lhs: p.epsilon * totals_u.star + alpha_u,
        rhs: (1.0 + p.sigma) * (p.epsilon * eng.base_star + eng.alpha_w),
    };

    // Area loss: |W \ U| <= ||U||_inf^2, integer-exact via bounding boxes.
    let w0 = config0.w_cells();
    let wu = eng.cfg.w_cells();
    let lost_cells = w0.difference(&wu).len() as i64;
    let bbox_sum: i64 = rects.iter().map(|(_, r)| r.width() * r.height()).sum();
    let area_loss_ok = lost_cells <= bbox_sum
        || (lost_cells as f64) * spec.edge_len() * spec.edge_len()
            <= totals_u.inf * totals_u.inf * (1.0 + 1e-12);

    Ok(FinalReport {
        rectangles: rect_out,
        total_energy,
        surface_budget,
        korn,
        variation_split: splits,
        skew_diagnostic: skew,
        component_traces: traces,
        rect_measure_ok,
        area_loss_ok,
    })
}

/// `(||grad u||_{L2}^2, ||grad u||_{L4}^4)` with exact Gauss quadrature.
fn grad_lp_norms(u: &DiscreteField, region: &GridSet) -> (f64, f64) {
    const G3_N: [f64; 3] = [0.5 - 0.3872983346207417, 0.5, 0.5 + 0.3872983346207417];
    const G3_W: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let cell_area = u.spec.edge_len() * u.spec.edge_len();
    let mut l2 = 0.0;
    let mut l4 = 0.0;
    for &c in region.iter() {
        if u.cell_values(c).is_none() {
            continue;
        }
        for (xi, wx) in G3_N.iter().zip(G3_W.iter()) {
            for (eta, wy) in G3_N.iter().zip(G3_W.iter()) {
                let g = u.grad_local(c, *xi, *eta).expect("cell in domain");
                let sq = g[0][0] * g[0][0]
                    + g[0][1] * g[0][1]
                    + g[1][0] * g[1][0]
                    + g[1][1] * g[1][1];
                l2 += wx * wy * cell_area * sq;
                l4 += wx * wy * cell_area * sq * sq;
            }
        }
    }
    (l2, l4)
}

/// Convenience wrapper: run and keep only the report.
pub fn run_report(
    config0: &Configuration,
    u: &DiscreteField,
    p: &Params,
    opts: EngineOptions,
) -> Result<RunReport, Error> {
    run(config0, u, p, opts).map(|o| o.report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{config_from_rects, field_rigid_plus_smooth};
    use crate::grid::LatticeSpec;

    fn spec() -> LatticeSpec {
        LatticeSpec::new(1.0 / 64.0, 32).unwrap()
    }

    #[test]
    fn empty_configuration_runs_zero_iterations() {
        let s = spec();
        let cfg = Configuration::empty(s);
        let u = DiscreteField::from_fn(s, &GridSet::full(s), |x, y| [0.1 * y, -0.1 * x]);
        let out = run(&cfg, &u, &Params::default(), EngineOptions::default()).unwrap();
        assert!(out.report.iterations.is_empty());
        assert!(out.report.anomalies.is_empty());
        assert!(out.report.final_report.is_some());
    }

    #[test]
    fn single_rectangle_smooth_field_traces_once() {
        let s = spec();
        let cfg = config_from_rects(s, &[LatticeRect::new(-2, -2, 2, 2).unwrap()]).unwrap();
        let w = cfg.w_cells();
        let u = field_rigid_plus_smooth(s, &w, 1e-3, 4);
        let out = run(&cfg, &u, &Params::default(), EngineOptions::default()).unwrap();
        assert!(out.report.anomalies.is_empty(), "{:?}", out.report.anomalies);
        assert_eq!(out.report.iterations.len(), 1);
        assert_eq!(out.report.iterations[0].case, StepKind::Trace);
        assert_eq!(out.config.components.len(), 1);
        assert!(out.motions.len() == 1);
        // Energy ledger holds at the traced iteration.
        assert!(out.report.iterations[0].ledger.holds(1e-9));
    }

    #[test]
    fn minimality_witness_examples() {
        let s = spec();
        let p = Params::default();
        // A lone component admits no improving rectangle.
        let lone = config_from_rects(s, &[LatticeRect::new(-2, -2, 2, 2).unwrap()]).unwrap();
        assert!(minimality_witness(&lone, lone.components[0].id, &p).is_none());
        // An isolated component among distant neighbors still holds.
        let sparse = config_from_rects(
            s,
            &[LatticeRect::new(-2, -2, 2, 2).unwrap(), LatticeRect::new(14, 14, 17, 17).unwrap()],
        )
        .unwrap();
        assert!(minimality_witness(&sparse, sparse.components[0].id, &p).is_none());
        // A tight three-cluster is beaten by an enclosing rectangle.
        let cluster = config_from_rects(
            s,
            &[
                LatticeRect::new(0, 0, 6, 6).unwrap(),
                LatticeRect::new(8, 0, 14, 6).unwrap(),
                LatticeRect::new(0, 8, 6, 14).unwrap(),
            ],
        )
        .unwrap();
        let witness = minimality_witness(&cluster, cluster.components[0].id, &p)
            .expect("clustered configuration admits a witness");
        let delta = weighted_measure_delta(&cluster, &witness, &p);
        assert!(delta < 0.0);
        // The witness contains the probed component.
        assert!(witness.contains_rect(&LatticeRect::new(0, 0, 6, 6).unwrap()));
    }

    #[test]
    fn clustered_rectangles_get_replaced() {
        let s = spec();
        // Three rectangles clustered tightly: enclosing them is cheaper than
        // keeping three diameters.
        let r1 = LatticeRect::new(0, 0, 6, 6).unwrap();
        let r2 = LatticeRect::new(8, 0, 14, 6).unwrap();
        let r3 = LatticeRect::new(0, 8, 6, 14).unwrap();
        let cfg = config_from_rects(s, &[r1, r2, r3]).unwrap();
        let w = cfg.w_cells();
        let u = DiscreteField::from_fn(s, &w, |_, _| [0.0, 0.0]);
        let out = run(&cfg, &u, &Params::default(), EngineOptions::default()).unwrap();
        assert!(out.report.anomalies.is_empty(), "{:?}", out.report.anomalies);
        assert!(out
            .report
            .iterations
            .iter()
            .any(|it| it.case == StepKind::Replace));
        // Replacement strictly decreased the component count.
        assert!(out.config.components.len() < 3);
    }

    #[test]
    fn ledger_and_audits_hold_over_random_scenario() {
        let s = spec();
        let mut rng = crate::gen::rng(12);
        let cfg = crate::gen::random_disjoint_rects(s, 6, 4, &mut rng);
        let w = cfg.w_cells();
        let u = field_rigid_plus_smooth(s, &w, 5e-4, 12);
        let out = run(&cfg, &u, &Params::default(), EngineOptions::default()).unwrap();
        assert!(out.report.anomalies.is_empty(), "{:?}", out.report.anomalies);
        for it in &out.report.iterations {
            assert!(it.ledger.holds(1e-9), "iteration {} ledger", it.index);
            assert!(it.anomalies.is_empty());
        }
        let f = out.report.final_report.unwrap();
        assert!(f.surface_budget.lhs <= f.surface_budget.rhs);
        for sp in &f.variation_split {
            assert!(sp.pass);
        }
    }
}
