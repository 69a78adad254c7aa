//! Rectangular and dodecagonal neighborhoods of a rectangular component,
//! scale selection, ring coverings, projection measures, exceptional sets and
//! bridge regions.
//!
//! All radii are carried in s-units (half an edge length); regions rasterize
//! outward to whole cells, subtracted corner regions rasterize inward, so
//! every inequality checked downstream errs on the conservative side. Radii
//! below the lattice pitch are flagged `degenerate`.

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, CompId, Configuration, EdgeSet, GridSet, LatticeRect, LatticeSpec};
use crate::measures::Params;
use crate::Error;

/// Raised when a construction contradicts the minimality precondition: the
/// engine reroutes such components through the replacement case.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MinimalitySignal {
    pub reason: String,
}

/// Quadrant parts of a ring neighborhood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Part {
    XNeg,
    XPos,
    YNeg,
    YPos,
}

impl Part {
    pub const ALL: [Part; 4] = [Part::XNeg, Part::XPos, Part::YNeg, Part::YPos];

    /// The axis pair index (1 for x sides, 2 for y sides).
    pub fn axis(&self) -> u8 {
        match self {
            Part::XNeg | Part::XPos => 1,
            Part::YNeg | Part::YPos => 2,
        }
    }
}

/// Rectangular ring neighborhood of a rectangle, rasterized outward.
#[derive(Debug, Clone)]
pub struct Neighborhood {
    pub rect: LatticeRect,
    /// Offset in s-units (physical radius = `t_s * s`).
    pub t_s: i64,
    /// Offset in whole cells after outward rasterization.
    pub t_cells: i32,
    /// The dilated box (cell units).
    pub box_rect: LatticeRect,
    /// Box cells minus the rectangle cells.
    pub ring: GridSet,
    /// True when the requested radius is below one cell.
    pub degenerate: bool,
}

impl Neighborhood {
    pub fn part_of(&self, c: Cell) -> Vec<Part> {
        let mut out = Vec::with_capacity(2);
        if c.x < self.rect.x0 {
            out.push(Part::XNeg);
        }
        if c.x >= self.rect.x1 {
            out.push(Part::XPos);
        }
        if c.y < self.rect.y0 {
            out.push(Part::YNeg);
        }
        if c.y >= self.rect.y1 {
            out.push(Part::YPos);
        }
        out
    }

    pub fn part_cells(&self, part: Part) -> GridSet {
        let mut g = GridSet::empty(self.ring.spec);
        for &c in self.ring.iter() {
            let keep = match part {
                Part::XNeg => c.x < self.rect.x0,
                Part::XPos => c.x >= self.rect.x1,
                Part::YNeg => c.y < self.rect.y0,
                Part::YPos => c.y >= self.rect.y1,
            };
            if keep {
                g.insert(c);
            }
        }
        g
    }
}

/// Outward cell count for a radius in s-units.
pub fn outward_cells(t_s: i64) -> i32 {
    ((t_s + 1) / 2).max(1) as i32
}

/// Build the ring neighborhood; fails if the dilated box leaves the ambient
/// square.
pub fn neighborhood(spec: LatticeSpec, rect: &LatticeRect, t_s: i64) -> Result<Neighborhood, Error> {
    if t_s < 1 {
        return Err(Error::InvalidInput("neighborhood radius must be at least one s-unit".into()));
    }
    let t_cells = outward_cells(t_s);
    let box_rect = rect.dilate(t_cells);
    let k = spec.half_cells;
    if box_rect.x0 < -k || box_rect.x1 > k || box_rect.y0 < -k || box_rect.y1 > k {
        return Err(Error::InvalidInput("neighborhood escapes the ambient square".into()));
    }
    let cells = GridSet::from_rect(spec, &box_rect)?.subtract_rect(rect);
    Ok(Neighborhood {
        rect: *rect,
        t_s,
        t_cells,
        box_rect,
        ring: cells,
        degenerate: t_s < 4,
    })
}

/// True if any edge of the set borders a cell of the region (closed contact).
pub fn edges_touch_region(es: &EdgeSet, region: &GridSet) -> bool {
    es.iter().any(|e| {
        let (a, b) = e.cells();
        region.contains(a) || region.contains(b)
    })
}

/// Edges of the set lying strictly inside the open ring region: inside the
/// open dilated box and not on the inner rectangle boundary.
pub fn edges_inside_ring(es: &EdgeSet, n: &Neighborhood) -> EdgeSet {
    let inner = n.rect.boundary_edges();
    EdgeSet::from_iter(
        es.iter()
            .filter(|e| e.inside_open_rect(&n.box_rect) && !inner.contains(e))
            .copied(),
    )
}

/// Crack-length check: the crack inside the ring against `8 t / h_*`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CrackLengthCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Exact comparison of the crack length inside `N^t(Gamma)` with `8 t / h_*`.
/// Counts every exclusive boundary edge of interior components strictly
/// inside the ring (edges of the probed component itself are outside by
/// construction).
pub fn crack_length_check(
    config: &Configuration,
    gamma: CompId,
    n: &Neighborhood,
    p: &Params,
) -> CrackLengthCheck {
    let spec = config.spec;
    let mut units: u64 = 0;
    for comp in config.interior_components() {
        if comp.id == gamma {
            continue;
        }
        units += edges_inside_ring(&comp.theta, n).len() as u64;
    }
    let lhs = units as f64 * spec.edge_len();
    let rhs = 8.0 * (n.t_s as f64 * spec.s) / p.h_star;
    CrackLengthCheck { lhs, rhs, pass: lhs <= rhs }
}

/// Scale selection around one component.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauSelection {
    /// Base radius in s-units (snapped down from `upsilon |Gamma|_inf`).
    pub tau_bar_s: i64,
    /// Selected radius in s-units.
    pub tau_s: i64,
    /// The at most two large components meeting the base ring.
    pub big: Vec<CompId>,
    /// Radius below the resolution floor of four s-units.
    pub degenerate: bool,
}

/// Snap a physical radius down to whole s-units (at least 1).
pub fn snap_radius(spec: &LatticeSpec, physical: f64) -> i64 {
    ((physical / spec.s).floor() as i64).max(1)
}

/// Select the working radius `tau` in `[tau_bar/800, tau_bar/2]` so that each
/// large component either reaches deep into the ring or misses it entirely.
/// More than two large components contradict the minimality precondition.
pub fn select_tau(
    config: &Configuration,
    gamma: CompId,
    tau_bar_s: i64,
    _p: &Params,
) -> Result<TauSelection, MinimalitySignal> {
    let spec = config.spec;
    let comp = config.component(gamma).expect("component exists");
    let rect = comp.rect.unwrap_or_else(|| comp.interior.bbox().expect("nonempty"));
    let tau_bar_phys = tau_bar_s as f64 * spec.s;
    let threshold = 19.0 * tau_bar_phys;

    let ring = |t_s: i64| neighborhood(spec, &rect, t_s).ok();
    let Some(n_bar) = ring(tau_bar_s) else {
        return Err(MinimalitySignal { reason: "base ring escapes the ambient square".into() });
    };
    let mut big = Vec::new();
    for other in config.interior_components() {
        if other.id == gamma {
            continue;
        }
        if other.diam_inf() >= threshold && edges_touch_region(&other.gamma, &n_bar.ring) {
            big.push(other.id);
        }
    }
    if big.len() > 2 {
        return Err(MinimalitySignal {
            reason: format!("{} large components meet the base ring", big.len()),
        });
    }

    let meets = |id: CompId, t_s: i64| -> bool {
        match ring(t_s.max(1)) {
            None => false,
            Some(n) => {
                let g = &config.component(id).expect("component").gamma;
                edges_touch_region(g, &n.ring)
            }
        }
    };
    let post_ok = |t_s: i64| -> bool {
        big.iter().all(|&id| meets(id, (t_s / 20).max(1)) || !meets(id, t_s))
    };

    let half = (tau_bar_s / 2).max(1);
    let fine = (tau_bar_s / 800).max(1);
    let fortieth = (tau_bar_s / 40).max(1);
    let all_fine = big.iter().all(|&id| meets(id, fine));
    let none_fine = big.iter().all(|&id| !meets(id, fine));
    let tau_s = if big.is_empty() || none_fine {
        fine
    } else if all_fine {
        half
    } else if post_ok(half) {
        half
    } else if post_ok(fortieth) {
        fortieth
    } else {
        return Err(MinimalitySignal {
            reason: "no admissible radius separates the large components".into(),
        });
    };
    if !post_ok(tau_s) {
        return Err(MinimalitySignal {
            reason: "selected radius fails the separation requirement".into(),
        });
    }
    Ok(TauSelection { tau_bar_s, tau_s, big, degenerate: tau_bar_s < 4 })
}

/// Projection measure of a rectangle relative to the probed component:
/// `min(|dR|_inf, t - max_axis gap)`, clamped to `[0, |dR|_inf]`.
pub fn pi_projection(
    spec: &LatticeSpec,
    r: &LatticeRect,
    gamma_rect: &LatticeRect,
    t_s: i64,
) -> f64 {
    let e = spec.edge_len();
    let gap = |a0: i32, a1: i32, b0: i32, b1: i32| -> f64 {
        // Distance between closed intervals in vertex units.
        if a1 < b0 {
            (b0 - a1) as f64 * e
        } else if b1 < a0 {
            (a0 - b1) as f64 * e
        } else {
            0.0
        }
    };
    let gx = gap(r.x0, r.x1, gamma_rect.x0, gamma_rect.x1);
    let gy = gap(r.y0, r.y1, gamma_rect.y0, gamma_rect.y1);
    let t = t_s as f64 * spec.s;
    (t - gx.max(gy)).min(r.diam_inf(spec)).max(0.0)
}

/// Ring covering: fine quasi-square blocks in cyclic order plus a coarse
/// covering of windows of consecutive fine blocks.
#[derive(Debug, Clone)]
pub struct Covering {
    pub n: Neighborhood,
    pub fine: Vec<LatticeRect>,
    pub coarse: Vec<CoarseSet>,
    /// Too few fine blocks for the nominal per-side window counts.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct CoarseSet {
    /// Cyclic fine-block index range `[lo, lo + len)`.
    pub lo: usize,
    pub len: usize,
    pub cells: GridSet,
}

impl Covering {
    pub fn fine_count(&self) -> usize {
        self.fine.len()
    }

    pub fn fine_cells(&self, idx: usize) -> GridSet {
        let r = self.fine[idx % self.fine.len()];
        GridSet::from_rect(self.n.ring.spec, &r)
            .map(|g| g.intersection(&self.n.ring))
            .unwrap_or_else(|_| GridSet::empty(self.n.ring.spec))
    }

    pub fn window_cells(&self, lo: usize, len: usize) -> GridSet {
        let mut g = GridSet::empty(self.n.ring.spec);
        for k in 0..len.min(self.fine.len()) {
            g = g.union(&self.fine_cells(lo + k));
        }
        g
    }

    /// Enlarged coarse set: the union with both cyclic neighbors.
    pub fn enlarged(&self, idx: usize) -> GridSet {
        let m = self.coarse.len();
        let mut g = self.coarse[idx].cells.clone();
        if m > 1 {
            g = g.union(&self.coarse[(idx + m - 1) % m].cells);
            g = g.union(&self.coarse[(idx + 1) % m].cells);
        }
        g
    }
}

fn split_span(lo: i32, hi: i32, target: i32) -> Vec<(i32, i32)> {
    let len = hi - lo;
    if len <= 0 {
        return Vec::new();
    }
    let n = ((len as f64 / target.max(1) as f64).round() as i32).max(1);
    let mut out = Vec::with_capacity(n as usize);
    for k in 0..n {
        let a = lo + (len as i64 * k as i64 / n as i64) as i32;
        let b = lo + (len as i64 * (k + 1) as i64 / n as i64) as i32;
        if b > a {
            out.push((a, b));
        }
    }
    out
}

/// Build the fine ring blocks and the coarse windows. Long-side strips are cut
/// into quasi squares covered by seven overlapping windows; short-side strips
/// are cut likewise when the short half-side reaches half the long one, and
/// are otherwise kept whole.
pub fn covering(spec: LatticeSpec, rect: &LatticeRect, t_s: i64) -> Result<Covering, Error> {
    let n = neighborhood(spec, rect, t_s)?;
    let tc = n.t_cells;
    let wide = rect.width() >= rect.height();
    // Work in the frame where the long axis is x; transpose late if needed.
    let (x0, x1, y0, y1) = if wide {
        (rect.x0, rect.x1, rect.y0, rect.y1)
    } else {
        (rect.y0, rect.y1, rect.x0, rect.x1)
    };
    let transpose = |r: LatticeRect| -> LatticeRect {
        if wide {
            r
        } else {
            LatticeRect { x0: r.y0, y0: r.x0, x1: r.y1, y1: r.x1 }
        }
    };

    // Short strips cover themselves when the short half-side is below t/2
    // (in cell units: 2 * height < t_s).
    let short_whole = 2 * (y1 - y0) < t_s as i32;

    let mut fine: Vec<LatticeRect> = Vec::new();
    let mut arcs: Vec<(usize, usize, bool)> = Vec::new(); // (lo, len, long_side)

    // Top strip, left to right (includes corners).
    let top: Vec<LatticeRect> = split_span(x0 - tc, x1 + tc, tc)
        .into_iter()
        .map(|(a, b)| LatticeRect { x0: a, y0: y1, x1: b, y1: y1 + tc })
        .collect();
    arcs.push((fine.len(), top.len(), true));
    fine.extend(top);

    // Right strip, top to bottom.
    let right: Vec<LatticeRect> = if short_whole {
        vec![LatticeRect { x0: x1, y0: y0 - tc, x1: x1 + tc, y1: y1 + tc }]
    } else {
        let mut v: Vec<LatticeRect> = split_span(y0, y1, tc)
            .into_iter()
            .map(|(a, b)| LatticeRect { x0: x1, y0: a, x1: x1 + tc, y1: b })
            .collect();
        v.reverse();
        v
    };
    arcs.push((fine.len(), right.len(), false));
    fine.extend(right);

    // Bottom strip, right to left.
    let mut bottom: Vec<LatticeRect> = split_span(x0 - tc, x1 + tc, tc)
        .into_iter()
        .map(|(a, b)| LatticeRect { x0: a, y0: y0 - tc, x1: b, y1: y0 })
        .collect();
    bottom.reverse();
    arcs.push((fine.len(), bottom.len(), true));
    fine.extend(bottom);

    // Left strip, bottom to top.
    let left: Vec<LatticeRect> = if short_whole {
        vec![LatticeRect { x0: x0 - tc, y0: y0 - tc, x1: x0, y1: y1 + tc }]
    } else {
        split_span(y0, y1, tc)
            .into_iter()
            .map(|(a, b)| LatticeRect { x0: x0 - tc, y0: a, x1: x0, y1: b })
            .collect()
    };
    arcs.push((fine.len(), left.len(), false));
    fine.extend(left);

    let fine: Vec<LatticeRect> = fine.into_iter().map(transpose).collect();
    let total = fine.len();

    // Coarse windows per arc: seven on long sides, seven on short sides when
    // the component is near-square (short >= long / 2), one otherwise.
    let near_square = 2 * (y1 - y0) >= x1 - x0;
    let mut windows: Vec<(usize, usize)> = Vec::new();
    let mut degenerate = false;
    for &(lo, len, long_side) in &arcs {
        if len == 0 {
            continue;
        }
        let nominal = if long_side || near_square { 7usize } else { 1usize };
        let count = nominal.min(len);
        if count < nominal {
            degenerate = true;
        }
        for k in 0..count {
            let a = lo + len * k / count;
            let b = lo + len * (k + 1) / count;
            // Extend one fine block on each side (cyclic) so consecutive
            // windows always overlap.
            let start = (a + total - 1) % total;
            let wlen = (b - a) + 2;
            windows.push((start, wlen.min(total)));
        }
    }

    let cov = Covering {
        coarse: Vec::new(),
        fine,
        degenerate: degenerate || n.degenerate,
        n,
    };
    let coarse: Vec<CoarseSet> = windows
        .into_iter()
        .map(|(lo, len)| CoarseSet { lo, len, cells: cov.window_cells(lo, len) })
        .collect();
    Ok(Covering { coarse, ..cov })
}

/// Sum of projection measures of the carried rectangles meeting the open
/// region: rectangles merely touching the closure do not count, matching the
/// remainder bound the construction guarantees.
pub fn region_pi(
    config: &Configuration,
    gamma: CompId,
    gamma_rect: &LatticeRect,
    t_s: i64,
    region: &GridSet,
) -> f64 {
    let spec = config.spec;
    let mut total = 0.0;
    for comp in config.interior_components() {
        if comp.id == gamma {
            continue;
        }
        let Some(r) = comp.rect else { continue };
        if rect_meets_cells_open(&r, region) {
            total += pi_projection(&spec, &r, gamma_rect, t_s);
        }
    }
    total
}

/// Closed-rectangle vs closed-cell-union intersection (touching counts).
pub fn rect_meets_cells(r: &LatticeRect, cells: &GridSet) -> bool {
    match cells.bbox() {
        None => false,
        Some(b) if !r.meets_closed(&b) => false,
        _ => cells.iter().any(|c| {
            r.meets_closed(&LatticeRect { x0: c.x, y0: c.y, x1: c.x + 1, y1: c.y + 1 })
        }),
    }
}

/// Closed rectangle vs the interior of a cell union: positive-area overlap
/// with some cell.
pub fn rect_meets_cells_open(r: &LatticeRect, cells: &GridSet) -> bool {
    cells
        .iter()
        .any(|c| r.x0 < c.x + 1 && c.x < r.x1 && r.y0 < c.y + 1 && c.y < r.y1)
}

/// The at most two exceptional pieces of the ring covering, plus diagnostics.
#[derive(Debug, Clone)]
pub struct ExceptionalSets {
    pub tau_s: i64,
    pub k: [Option<GridSet>; 2],
    /// Maximal projection sum over the remainder pieces.
    pub max_piece_pi: f64,
    /// `|K_j| h_* / tau^2`, the measured area constants.
    pub k_area_ratio: [f64; 2],
    /// `dist(K_1, K_2) / |Gamma|_inf` when both are present.
    pub k_dist_ratio: Option<f64>,
    /// Each large component's trace in the ring lies inside `K_1 u K_2`.
    pub big_contained: bool,
    pub degenerate: bool,
}

/// Construct the exceptional sets: locate the (at most two) coarse windows
/// whose projection sum exceeds `19 tau / 20`, localize each around either an
/// over-threshold rectangle or a maximal admissible prefix, and verify that
/// every remaining connected piece stays under the threshold.
pub fn exceptional_sets(
    config: &Configuration,
    gamma: CompId,
    sel: &TauSelection,
    p: &Params,
) -> Result<ExceptionalSets, MinimalitySignal> {
    let spec = config.spec;
    let comp = config.component(gamma).expect("component exists");
    let rect = comp.rect.unwrap_or_else(|| comp.interior.bbox().expect("nonempty"));
    let tau_s = sel.tau_s;
    let tau = tau_s as f64 * spec.s;
    let threshold = 0.95 * tau;
    let cov = covering(spec, &rect, tau_s)
        .map_err(|e| MinimalitySignal { reason: format!("covering failed: {e}") })?;

    let pi_of = |cells: &GridSet| region_pi(config, gamma, &rect, tau_s, cells);

    let m = cov.coarse.len();
    let mut hot: Vec<(usize, f64)> = Vec::new();
    for (i, y) in cov.coarse.iter().enumerate() {
        let v = pi_of(&y.cells);
        if v > threshold {
            hot.push((i, v));
        }
    }
    // Deterministic: strongest first, then lowest index.
    hot.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));

    let mut chosen: Vec<usize> = Vec::new();
    if let Some(&(first, _)) = hot.first() {
        chosen.push(first);
        let en_first = cov.enlarged(first);
        if let Some(&(second, _)) = hot
            .iter()
            .find(|(i, _)| *i != first && cov.coarse[*i].cells.is_disjoint(&en_first))
        {
            chosen.push(second);
            let en_second = cov.enlarged(second);
            if hot.iter().any(|(i, _)| {
                *i != first
                    && *i != second
                    && cov.coarse[*i].cells.is_disjoint(&en_first)
                    && cov.coarse[*i].cells.is_disjoint(&en_second)
            }) {
                return Err(MinimalitySignal {
                    reason: "three separated over-threshold windows".into(),
                });
            }
        }
    }

    // Build each exceptional set inside the five-window span around its seed.
    let total_fine = cov.fine.len();
    let mut k_sets: [Option<GridSet>; 2] = [None, None];
    for (slot, &idx) in chosen.iter().enumerate() {
        let lo = cov.coarse[idx].lo;
        let len = cov.coarse[idx].len;
        // Span: the contiguous run of fine blocks covered by this window and
        // its two cyclic neighbors on each side.
        let mut member = vec![false; total_fine];
        for off in 0..5usize {
            let w = &cov.coarse[(idx + m + off - 2) % m];
            for k in 0..w.len.min(total_fine) {
                member[(w.lo + k) % total_fine] = true;
            }
        }
        let span_lo = cov.coarse[(idx + m - 2) % m].lo % total_fine;
        let mut span_len = 0usize;
        while span_len < total_fine && member[(span_lo + span_len) % total_fine] {
            span_len += 1;
        }

        // Case a: an over-threshold rectangle near the span gets enclosed.
        let span_cells = cov.window_cells(span_lo, span_len);
        let mut seed_rect: Option<LatticeRect> = None;
        for other in config.interior_components() {
            if other.id == gamma {
                continue;
            }
            let Some(r) = other.rect else { continue };
            if rect_meets_cells_open(&r, &span_cells)
                && pi_projection(&spec, &r, &rect, tau_s) >= threshold
            {
                seed_rect = Some(match seed_rect {
                    None => r,
                    Some(acc) => acc.hull(&r),
                });
            }
        }
        let kset = if let Some(r) = seed_rect {
            // Smallest run of consecutive fine blocks containing the trace.
            let mut first: Option<usize> = None;
            let mut last: Option<usize> = None;
            for off in 0..span_len {
                let cells = cov.fine_cells(span_lo + off);
                if rect_meets_cells(&r, &cells) {
                    if first.is_none() {
                        first = Some(off);
                    }
                    last = Some(off);
                }
            }
            match (first, last) {
                (Some(a), Some(b)) => cov.window_cells(span_lo + a, b - a + 1),
                _ => cov.window_cells(lo, len),
            }
        } else {
            // Case b: accumulate fine blocks until the leading piece drops
            // under the threshold, then pad to the nominal area.
            let mut start = 0usize;
            while start < span_len {
                let prefix = cov.window_cells(span_lo, start + 1);
                if pi_of(&prefix) > threshold {
                    break;
                }
                start += 1;
            }
            if start >= span_len {
                // Everything under threshold: a minimal window suffices.
                cov.window_cells(lo, len.min(1))
            } else {
                let area_target = p.k_size / 4.0 * tau * tau / p.h_star;
                let mut end = start + 1;
                let mut k = cov.window_cells(span_lo + start, end - start);
                while end < span_len {
                    let tail = cov.window_cells(span_lo + end, span_len - end);
                    let ok_tail = pi_of(&tail) <= threshold;
                    if k.area() >= area_target && ok_tail {
                        break;
                    }
                    k = k.union(&cov.fine_cells(span_lo + end));
                    end += 1;
                }
                k
            }
        };
        k_sets[slot] = Some(kset);
    }

    let k_union = match (&k_sets[0], &k_sets[1]) {
        (Some(a), Some(b)) => a.union(b),
        (Some(a), None) => a.clone(),
        _ => GridSet::empty(spec),
    };

    // Remainder pieces: connected components of coarse sets minus the K's.
    let mut max_piece_pi = 0.0f64;
    for y in &cov.coarse {
        let rem = y.cells.difference(&k_union);
        for piece in rem.connected_components() {
            let v = pi_of(&piece);
            if v > max_piece_pi {
                max_piece_pi = v;
            }
        }
    }
    if max_piece_pi > threshold {
        return Err(MinimalitySignal {
            reason: format!(
                "remainder piece keeps projection sum {max_piece_pi:.6} above {threshold:.6}"
            ),
        });
    }

    // Large components' traces must stay inside the exceptional sets.
    let mut big_contained = true;
    for &id in &sel.big {
        let g = &config.component(id).expect("component").gamma;
        for e in g.iter() {
            let (a, b) = e.cells();
            let in_ring = cov.n.ring.contains(a) || cov.n.ring.contains(b);
            if in_ring && !(k_union.contains(a) || k_union.contains(b)) {
                big_contained = false;
            }
        }
    }
    if !big_contained {
        return Err(MinimalitySignal {
            reason: "a large component escapes the exceptional sets".into(),
        });
    }

    let area_ratio = |k: &Option<GridSet>| match k {
        None => 0.0,
        Some(g) => g.area() * p.h_star / (tau * tau),
    };
    let k_dist_ratio = match (&k_sets[0], &k_sets[1]) {
        (Some(a), Some(b)) if !a.is_empty() && !b.is_empty() => {
            Some(a.distance_to(b) / comp.diam_inf())
        }
        _ => None,
    };
    Ok(ExceptionalSets {
        tau_s,
        k_area_ratio: [area_ratio(&k_sets[0]), area_ratio(&k_sets[1])],
        k: k_sets,
        max_piece_pi,
        k_dist_ratio,
        big_contained,
        degenerate: cov.degenerate,
    })
}

/// Dodecagonal (or decagonal) neighborhood: the ring with the corner regions
/// removed, as an exact convex polygon plus inner / outer rasterizations.
#[derive(Debug, Clone)]
pub struct CutRing {
    pub polygon: Vec<(f64, f64)>,
    /// Cells of the ring fully inside the polygon.
    pub inner: GridSet,
    /// Cells of the ring meeting the polygon.
    pub outer: GridSet,
    pub n: Neighborhood,
}

impl CutRing {
    /// Part restriction `M_k`: cells in the x-side or y-side strips.
    pub fn part_cells(&self, axis: u8, outer: bool) -> GridSet {
        let src = if outer { &self.outer } else { &self.inner };
        let mut g = GridSet::empty(src.spec);
        for &c in src.iter() {
            let in_part = match axis {
                1 => c.x < self.n.rect.x0 || c.x >= self.n.rect.x1,
                _ => c.y < self.n.rect.y0 || c.y >= self.n.rect.y1,
            };
            if in_part {
                g.insert(c);
            }
        }
        g
    }
}

fn point_in_convex(poly: &[(f64, f64)], p: (f64, f64), eps: f64) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross < -eps {
            return false;
        }
    }
    true
}

fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut lower: Vec<(f64, f64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(f64, f64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Build the corner-cut neighborhood of a rectangle at radius `t_s`.
///
/// The corner strips have half-width `q t / h_*`; the hull always contains
/// the rectangle boundary and the two lateral apex points, so thin components
/// degenerate to a decagon and are handled uniformly.
pub fn cut_ring(
    spec: LatticeSpec,
    rect: &LatticeRect,
    t_s: i64,
    p: &Params,
) -> Result<CutRing, Error> {
    let n = neighborhood(spec, rect, t_s)?;
    let e = spec.edge_len();
    // Physical centered frame.
    let cx = (rect.x0 + rect.x1) as f64 * spec.s;
    let cy = (rect.y0 + rect.y1) as f64 * spec.s;
    let l1 = rect.width() as f64 * spec.s;
    let l2 = rect.height() as f64 * spec.s;
    let t = n.t_cells as f64 * e; // rasterized outward radius
    let t_req = t_s as f64 * spec.s;
    let margin = p.q * t_req / p.h_star;
    let (lt1, lt2) = (
        l1 + (t_req).min(p.h_star * l2 / p.q),
        l2 + (t_req).min(p.h_star * l1 / p.q),
    );

    // Candidate hull points in centered coordinates: extreme points of the
    // ring-minus-corner-strips region, the rectangle corners, and the apexes.
    let mut pts: Vec<(f64, f64)> = vec![(lt1, 0.0), (-lt1, 0.0), (0.0, lt2), (0.0, -lt2)];
    for &sx in &[-1.0f64, 1.0] {
        for &sy in &[-1.0f64, 1.0] {
            pts.push((sx * l1, sy * l2));
            // Lateral strip tips: far from the horizontal corner lines.
            if l2 - margin > 0.0 {
                pts.push((sx * (l1 + t), sy * (l2 - margin)));
            }
            if l1 - margin > 0.0 {
                pts.push((sx * (l1 - margin), sy * (l2 + t)));
            }
            // Outside-corner remnants when the strips are narrower than the ring.
            if margin < t {
                pts.push((sx * (l1 + t), sy * (l2 + margin).min(l2 + t)));
                pts.push((sx * (l1 + margin).min(l1 + t), sy * (l2 + t)));
            }
        }
    }
    let poly: Vec<(f64, f64)> = convex_hull(pts)
        .into_iter()
        .map(|(x, y)| (x + cx, y + cy))
        .collect();

    let eps = 1e-9 * spec.mu().max(1.0);
    let mut inner = GridSet::empty(spec);
    let mut outer = GridSet::empty(spec);
    for &c in n.ring.iter() {
        let corners = [
            (c.x as f64 * e, c.y as f64 * e),
            ((c.x + 1) as f64 * e, c.y as f64 * e),
            (c.x as f64 * e, (c.y + 1) as f64 * e),
            ((c.x + 1) as f64 * e, (c.y + 1) as f64 * e),
        ];
        let inside = corners.iter().filter(|&&p| point_in_convex(&poly, p, eps)).count();
        if inside == 4 {
            inner.insert(c);
            outer.insert(c);
        } else if inside > 0 {
            outer.insert(c);
        } else {
            // The polygon may still clip the cell without owning a corner.
            let center = ((c.x as f64 + 0.5) * e, (c.y as f64 + 0.5) * e);
            if point_in_convex(&poly, center, eps)
                || poly.iter().any(|&(px, py)| {
                    px >= c.x as f64 * e - eps
                        && px <= (c.x + 1) as f64 * e + eps
                        && py >= c.y as f64 * e - eps
                        && py <= (c.y + 1) as f64 * e + eps
                })
            {
                outer.insert(c);
            }
        }
    }
    Ok(CutRing { polygon: poly, inner, outer, n })
}

/// True if the cell meets the corner-far region (the ring minus the four
/// corner strips of half-width `q t / h_*`), computed exactly.
pub fn cell_meets_corner_far(
    spec: &LatticeSpec,
    rect: &LatticeRect,
    t_s: i64,
    p: &Params,
    c: Cell,
) -> bool {
    let e = spec.edge_len();
    let cx = (rect.x0 + rect.x1) as f64 * spec.s;
    let cy = (rect.y0 + rect.y1) as f64 * spec.s;
    let l1 = rect.width() as f64 * spec.s;
    let l2 = rect.height() as f64 * spec.s;
    let margin = p.q * (t_s as f64 * spec.s) / p.h_star;
    // Cell box in centered coordinates.
    let bx0 = c.x as f64 * e - cx;
    let bx1 = (c.x + 1) as f64 * e - cx;
    let by0 = c.y as f64 * e - cy;
    let by1 = (c.y + 1) as f64 * e - cy;
    // "Far" along one axis: some coordinate in the box at distance >= margin
    // from both lines at +-l, i.e. the box meets
    // (-inf, -l - m] u [-l + m, l - m] u [l + m, inf).
    let far_interval = |a: f64, b: f64, l: f64| -> bool {
        a <= -l - margin
            || b >= l + margin
            || (margin <= l && a <= l - margin && b >= -l + margin)
    };
    far_interval(bx0, bx1, l1) || far_interval(by0, by1, l2)
}

/// Which bridge construction applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BridgeCase {
    /// Exceptional set away from the corners.
    Corner,
    /// Exceptional set near a corner, tall component.
    LateralTall,
    /// Exceptional set near a corner, flat component.
    LateralFlat,
}

/// The thin bridge between the component and a large neighbor.
#[derive(Debug, Clone)]
pub struct BridgeRecord {
    pub comp_m: CompId,
    pub case: BridgeCase,
    /// Gap width between the regions, physical.
    pub psi: f64,
    /// Extent of the facing bridge, physical.
    pub psi_hat: f64,
    /// The bridge region.
    pub region: GridSet,
    /// Physical bounding box of the region dilated by `20 tau_bar`.
    pub phi_bbox: [f64; 4],
    /// `psi_hat <= 16 psi / h_*`.
    pub lip_ok: bool,
    /// Corner case only: the dilated region stays inside the hull of the two
    /// regions (checked with exact box arithmetic).
    pub phi_in_hull: Option<bool>,
    /// Connector rectangle spanning the gap (None when the regions touch).
    pub connector: Option<LatticeRect>,
    /// `|dT|_H <= 4 psi` for the connector.
    pub connector_ok: bool,
    pub part: Part,
}

/// Build the bridge region for one exceptional set. Returns `Ok(None)` when
/// no qualifying large neighbor meets it.
pub fn bridge_sets(
    config: &Configuration,
    gamma: CompId,
    sel: &TauSelection,
    k: &GridSet,
    p: &Params,
) -> Result<Option<BridgeRecord>, Error> {
    let spec = config.spec;
    let comp = config.component(gamma).expect("component exists");
    let rect = comp.rect.unwrap_or_else(|| comp.interior.bbox().expect("nonempty"));
    if k.is_empty() {
        return Ok(None);
    }
    let tau_bar = sel.tau_bar_s as f64 * spec.s;
    let need = p.q * p.q * tau_bar / p.h_star;
    let mut gamma_m: Option<&crate::grid::BoundaryComponent> = None;
    for other in config.interior_components() {
        if other.id == gamma {
            continue;
        }
        if other.diam_inf() >= need && edges_touch_region(&other.gamma, k) {
            gamma_m = Some(match gamma_m {
                None => other,
                Some(prev) => {
                    if other.diam_inf() > prev.diam_inf() {
                        other
                    } else {
                        prev
                    }
                }
            });
        }
    }
    let Some(gm) = gamma_m else { return Ok(None) };

    let n = neighborhood(spec, &rect, sel.tau_s)?;
    // Locate the dominating part of K.
    let mut counts = [(Part::XNeg, 0usize), (Part::XPos, 0), (Part::YNeg, 0), (Part::YPos, 0)];
    for &c in k.iter() {
        for part in n.part_of(c) {
            for entry in counts.iter_mut() {
                if entry.0 == part {
                    entry.1 += 1;
                }
            }
        }
    }
    let part = counts.iter().max_by_key(|e| e.1).map(|e| e.0).unwrap_or(Part::XNeg);

    // Case split: near a corner or not; flat or tall component.
    let k_far = k
        .iter()
        .any(|&c| cell_meets_corner_far(&spec, &rect, sel.tau_s, p, c));
    let short_half = rect.width().min(rect.height()) as f64 * spec.s;
    let flat = short_half <= p.bridge_flat * (sel.tau_s as f64 * spec.s) / p.h_star;
    let case = if k_far {
        BridgeCase::Corner
    } else if flat {
        BridgeCase::LateralFlat
    } else {
        BridgeCase::LateralTall
    };

    // Base region: K padded by one neighbor block on each side along the ring.
    let pad = n.t_cells.max(1);
    let base_rect = k.bbox().expect("nonempty K").dilate(pad);
    let base = GridSet::from_rect(spec, &clamp_rect(spec, base_rect))?
        .intersection(&n.ring)
        .difference(&gm.interior);

    // Remove the corner-cut neighborhoods of the participating components for
    // the lateral cases (inner rasterization: subtract less).
    let eta_s = (21 * sel.tau_bar_s).max(1);
    let region = match case {
        BridgeCase::Corner => base,
        BridgeCase::LateralFlat => {
            let m_self = cut_ring(spec, &rect, eta_s.min(max_radius(spec, &rect)), p)?;
            base.difference(&m_self.inner)
        }
        BridgeCase::LateralTall => {
            let m_self = cut_ring(spec, &rect, eta_s.min(max_radius(spec, &rect)), p)?;
            let gm_rect = gm.rect.unwrap_or_else(|| gm.interior.bbox().expect("nonempty"));
            let tau_bar_m = snap_radius(&spec, p.upsilon * gm.diam_inf());
            let m_other =
                cut_ring(spec, &gm_rect, (21 * tau_bar_m).max(1).min(max_radius(spec, &gm_rect)), p)?;
            base.difference(&m_self.inner).difference(&m_other.inner)
        }
    };

    // Gap geometry along the part axis.
    let (psi_units, psi_hat_units, connector) = gap_geometry(&rect, &gm.interior, part);
    let psi = psi_units as f64 * spec.edge_len();
    let psi_hat = psi_hat_units as f64 * spec.edge_len();

    let lip_ok = psi_hat <= 16.0 * psi / p.h_star + 1e-12 || psi_hat == 0.0;
    let connector_ok = match &connector {
        None => true,
        Some(t) => t.perimeter(&spec) <= 4.0 * psi + 1e-12,
    };

    let phi_bbox = {
        let b = region.bbox().unwrap_or(rect);
        let e = spec.edge_len();
        let padp = 20.0 * tau_bar;
        [
            b.x0 as f64 * e - padp,
            b.y0 as f64 * e - padp,
            b.x1 as f64 * e + padp,
            b.y1 as f64 * e + padp,
        ]
    };
    let phi_in_hull = if case == BridgeCase::Corner {
        let hull = rect.hull(&gm.interior.bbox().expect("nonempty"));
        let e = spec.edge_len();
        Some(
            phi_bbox[0] >= hull.x0 as f64 * e - 1e-9
                && phi_bbox[1] >= hull.y0 as f64 * e - 1e-9
                && phi_bbox[2] <= hull.x1 as f64 * e + 1e-9
                && phi_bbox[3] <= hull.y1 as f64 * e + 1e-9,
        )
    } else {
        None
    };

    Ok(Some(BridgeRecord {
        comp_m: gm.id,
        case,
        psi,
        psi_hat,
        region,
        phi_bbox,
        lip_ok,
        phi_in_hull,
        connector,
        connector_ok,
        part,
    }))
}

fn clamp_rect(spec: LatticeSpec, r: LatticeRect) -> LatticeRect {
    let k = spec.half_cells;
    LatticeRect {
        x0: r.x0.max(-k),
        y0: r.y0.max(-k),
        x1: r.x1.min(k),
        y1: r.y1.min(k),
    }
}

/// Largest ring radius that stays inside the ambient square, in s-units.
pub fn max_radius(spec: LatticeSpec, rect: &LatticeRect) -> i64 {
    let k = spec.half_cells;
    let room = (rect.x0 + k)
        .min(k - rect.x1)
        .min(rect.y0 + k)
        .min(k - rect.y1)
        .max(1);
    2 * room as i64 - 1
}

/// Gap width, facing extent (both in edge units) and a one-cell-thick
/// connector rectangle between the component rectangle and a neighbor region,
/// measured across the given ring part.
fn gap_geometry(rect: &LatticeRect, other: &GridSet, part: Part) -> (i64, i64, Option<LatticeRect>) {
    // Work with (along, across) coordinates: across = the part axis direction.
    let mut best_gap: Option<i64> = None;
    let mut rows_at_best: Vec<i32> = Vec::new();
    let mut face_of_best: Option<i32> = None;
    let mut per_row_gap: std::collections::BTreeMap<i32, (i64, i32)> = Default::default();
    for &c in other.iter() {
        let (row, gap, face) = match part {
            Part::XNeg => (c.y, (rect.x0 - (c.x + 1)) as i64, c.x + 1),
            Part::XPos => (c.y, (c.x - rect.x1) as i64, c.x),
            Part::YNeg => (c.x, (rect.y0 - (c.y + 1)) as i64, c.y + 1),
            Part::YPos => (c.x, (c.y - rect.y1) as i64, c.y),
        };
        if gap < 0 {
            continue;
        }
        per_row_gap
            .entry(row)
            .and_modify(|e| {
                if gap < e.0 {
                    *e = (gap, face);
                }
            })
            .or_insert((gap, face));
    }
    for (&row, &(gap, face)) in &per_row_gap {
        match best_gap {
            None => {
                best_gap = Some(gap);
                rows_at_best = vec![row];
                face_of_best = Some(face);
            }
            Some(b) if gap < b => {
                best_gap = Some(gap);
                rows_at_best = vec![row];
                face_of_best = Some(face);
            }
            Some(b) if gap == b => rows_at_best.push(row),
            _ => {}
        }
    }
    let Some(gap) = best_gap else { return (0, 0, None) };
    if gap == 0 {
        // Touching regions: no bridge rectangle exists.
        return (0, 0, None);
    }
    let psi_hat = rows_at_best.len() as i64;
    let connector = {
        let row = rows_at_best[0];
        let face = face_of_best.unwrap();
        Some(match part {
            Part::XNeg => LatticeRect { x0: face, y0: row, x1: rect.x0, y1: row + 1 },
            Part::XPos => LatticeRect { x0: rect.x1, y0: row, x1: face, y1: row + 1 },
            Part::YNeg => LatticeRect { x0: row, y0: face, x1: row + 1, y1: rect.y0 },
            Part::YPos => LatticeRect { x0: row, y0: rect.y1, x1: row + 1, y1: face },
        })
    };
    (gap, psi_hat, connector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::config_from_rects;

    fn spec() -> LatticeSpec {
        LatticeSpec::new(0.015625, 32).unwrap()
    }

    #[test]
    fn neighborhood_ring_excludes_rect() {
        let s = spec();
        let r = LatticeRect::new(-2, -1, 2, 1).unwrap();
        let n = neighborhood(s, &r, 4).unwrap();
        assert_eq!(n.t_cells, 2);
        assert!(n.ring.iter().all(|c| !r.contains_cell(*c)));
        let expect = (4i64 + 4) * (2 + 4) - 4 * 2;
        assert_eq!(n.ring.len() as i64, expect);
        assert!(!n.degenerate);
    }

    #[test]
    fn crack_length_empty_neighborhood_passes() {
        let s = spec();
        let gamma = LatticeRect::new(-2, -2, 2, 2).unwrap();
        let cfg = config_from_rects(s, &[gamma]).unwrap();
        let n = neighborhood(s, &gamma, 8).unwrap();
        let chk = crack_length_check(&cfg, cfg.components[0].id, &n, &Params::default());
        assert_eq!(chk.lhs, 0.0);
        assert!(chk.pass);
    }

    #[test]
    fn crack_length_counts_interior_cracks() {
        let s = spec();
        let gamma = LatticeRect::new(-2, -2, 2, 2).unwrap();
        let near = LatticeRect::new(4, -2, 5, 2).unwrap();
        let cfg = config_from_rects(s, &[gamma, near]).unwrap();
        let n = neighborhood(s, &gamma, 8).unwrap(); // 4 cells out: covers x in [-6, 6]
        let chk = crack_length_check(&cfg, cfg.components[0].id, &n, &Params::default());
        // The near component's boundary has 10 edges, all strictly inside.
        assert!((chk.lhs - 10.0 * s.edge_len()).abs() < 1e-12);
    }

    #[test]
    fn select_tau_no_big_components() {
        let s = spec();
        let gamma = LatticeRect::new(-2, -2, 2, 2).unwrap();
        let cfg = config_from_rects(s, &[gamma]).unwrap();
        let sel = select_tau(&cfg, cfg.components[0].id, 8, &Params::default()).unwrap();
        assert!(sel.big.is_empty());
        // No large components: the finest admissible radius is chosen.
        assert_eq!(sel.tau_s, 1);
    }

    #[test]
    fn select_tau_flags_three_big_components() {
        let s = spec();
        let gamma = LatticeRect::new(-1, -1, 1, 1).unwrap();
        // Three disjoint rectangles touching the one-cell base ring, each with
        // diameter beyond 19 tau_bar = 38 s-units.
        let b1 = LatticeRect::new(2, -12, 4, 12).unwrap();
        let b2 = LatticeRect::new(-4, -12, -2, 12).unwrap();
        let b3 = LatticeRect::new(-1, 2, 1, 22).unwrap();
        let cfg = config_from_rects(s, &[gamma, b1, b2, b3]).unwrap();
        let err = select_tau(&cfg, cfg.components[0].id, 2, &Params::default());
        assert!(err.is_err());
    }

    #[test]
    fn select_tau_mixed_case_post_condition() {
        let s = spec();
        let gamma = LatticeRect::new(-2, -2, 2, 2).unwrap();
        // One big component hugging the ring, one far away but still inside
        // the base ring.
        let near = LatticeRect::new(3, -10, 4, 10).unwrap();
        let far = LatticeRect::new(-9, -10, -8, 10).unwrap();
        let cfg = config_from_rects(s, &[gamma, near, far]).unwrap();
        let gid = cfg.components[0].id;
        let sel = select_tau(&cfg, gid, 12, &Params::default()).unwrap();
        // Post-condition: each big component meets N^{tau/20} or misses N^tau.
        for &id in &sel.big {
            let g = &cfg.component(id).unwrap().gamma;
            let fine = neighborhood(s, &gamma, (sel.tau_s / 20).max(1)).unwrap();
            let coarse = neighborhood(s, &gamma, sel.tau_s).unwrap();
            assert!(
                edges_touch_region(g, &fine.ring) || !edges_touch_region(g, &coarse.ring)
            );
        }
    }

    #[test]
    fn pi_projection_basics() {
        let s = spec();
        let gamma = LatticeRect::new(-2, -2, 2, 2).unwrap();
        // Touching rectangle: projection gaps vanish.
        let touching = LatticeRect::new(2, -1, 4, 1).unwrap();
        let v = pi_projection(&s, &touching, &gamma, 8);
        let t = 8.0 * s.s;
        assert!((v - t.min(touching.diam_inf(&s))).abs() < 1e-12);
        // Rectangle at axis distance exactly t: projection zero.
        let t_cells = 4; // 8 s-units = 4 cells
        let far = LatticeRect::new(2 + t_cells, -1, 4 + t_cells, 1).unwrap();
        assert_eq!(pi_projection(&s, &far, &gamma, 8), 0.0);
    }

    #[test]
    fn pi_projection_matches_interval_oracle() {
        use rand::Rng;
        let s = spec();
        let gamma = LatticeRect::new(-3, -2, 3, 2).unwrap();
        let mut rng = crate::gen::rng(42);
        for _ in 0..200 {
            let w = rng.gen_range(1..5);
            let h = rng.gen_range(1..5);
            let x0 = rng.gen_range(-12..8);
            let y0 = rng.gen_range(-12..8);
            let r = LatticeRect { x0, y0, x1: x0 + w, y1: y0 + h };
            let t_s = rng.gen_range(2..16);
            let got = pi_projection(&s, &r, &gamma, t_s);
            // Oracle: brute-force over the projected intervals.
            let e = s.edge_len();
            let dist1 = {
                let (a0, a1) = (r.x0 as f64 * e, r.x1 as f64 * e);
                let (b0, b1) = (gamma.x0 as f64 * e, gamma.x1 as f64 * e);
                (b0 - a1).max(a0 - b1).max(0.0)
            };
            let dist2 = {
                let (a0, a1) = (r.y0 as f64 * e, r.y1 as f64 * e);
                let (b0, b1) = (gamma.y0 as f64 * e, gamma.y1 as f64 * e);
                (b0 - a1).max(a0 - b1).max(0.0)
            };
            let oracle = (t_s as f64 * s.s - dist1.max(dist2)).min(r.diam_inf(&s)).max(0.0);
            assert!((got - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn covering_structure() {
        let s = spec();
        let r = LatticeRect::new(-8, -3, 8, 3).unwrap();
        let cov = covering(s, &r, 8).unwrap();
        // Fine blocks tile the ring (as a cover).
        let mut union = GridSet::empty(s);
        for i in 0..cov.fine_count() {
            union = union.union(&cov.fine_cells(i));
        }
        assert_eq!(union, cov.n.ring);
        // Consecutive coarse sets overlap.
        let m = cov.coarse.len();
        assert!(m >= 4);
        for i in 0..m {
            let a = &cov.coarse[i].cells;
            let b = &cov.coarse[(i + 1) % m].cells;
            assert!(!a.is_disjoint(b), "coarse windows {i} and next are disjoint");
        }
        // Coarse sets cover the ring.
        let mut cunion = GridSet::empty(s);
        for c in &cov.coarse {
            cunion = cunion.union(&c.cells);
        }
        assert_eq!(cunion, cov.n.ring);
    }

    #[test]
    fn exceptional_sets_empty_when_no_rectangles() {
        let s = spec();
        let gamma = LatticeRect::new(-4, -4, 4, 4).unwrap();
        let cfg = config_from_rects(s, &[gamma]).unwrap();
        let gid = cfg.components[0].id;
        let sel = select_tau(&cfg, gid, 8, &Params::default()).unwrap();
        let exc = exceptional_sets(&cfg, gid, &sel, &Params::default()).unwrap();
        assert!(exc.k[0].is_none() && exc.k[1].is_none());
        assert_eq!(exc.max_piece_pi, 0.0);
    }

    #[test]
    fn exceptional_sets_localize_collinear_bar() {
        // Two flat collinear bars with a one-cell gap: the neighbor's
        // projection measure exceeds the threshold, so an exceptional set
        // must swallow its trace while every remainder piece stays clean.
        let s = LatticeSpec::new(0.0078125, 64).unwrap();
        let gamma = LatticeRect::new(2, 0, 30, 1).unwrap();
        let bar = LatticeRect::new(-22, 0, 1, 1).unwrap();
        let cfg = config_from_rects(s, &[gamma, bar]).unwrap();
        let gid = cfg.components[0].id;
        let p = Params::default();
        let sel = TauSelection { tau_bar_s: 96, tau_s: 48, big: vec![], degenerate: false };
        let exc = exceptional_sets(&cfg, gid, &sel, &p).unwrap();
        let k = exc.k[0].as_ref().expect("one exceptional set");
        // The neighbor's ring trace is inside K.
        let bar_cells = GridSet::from_rect(s, &bar).unwrap();
        assert!(bar_cells.is_subset(k));
        // Remainder pieces keep their projection sums under 19 tau / 20.
        assert!(exc.max_piece_pi <= 0.95 * 48.0 * s.s);
        assert!(exc.k[1].is_none());
    }

    #[test]
    fn cut_ring_small_margin_keeps_whole_ring() {
        let s = spec();
        let r = LatticeRect::new(-6, -6, 6, 6).unwrap();
        // Margin below the lattice resolution: the corner cuts remove no
        // whole cell, so the outer raster is the full ring.
        let p = Params { q: 1.0, h_star: 0.99, ..Params::default() };
        let m = cut_ring(s, &r, 1, &p).unwrap();
        assert_eq!(m.outer, m.n.ring);
    }

    #[test]
    fn cut_ring_removes_corner_cells() {
        let s = spec();
        let r = LatticeRect::new(-6, -6, 6, 6).unwrap();
        let p = Params::default(); // margin = 400 t / ... large
        let m = cut_ring(s, &r, 2, &p).unwrap();
        // Corner cell of the ring is outside the inner raster.
        let corner = Cell::new(-7, -7);
        assert!(m.n.ring.contains(corner));
        assert!(!m.inner.contains(corner));
        // Area shrinks strictly.
        assert!(m.inner.len() < m.n.ring.len());
    }

    #[test]
    fn cut_ring_matches_sampling_oracle() {
        let s = spec();
        let r = LatticeRect::new(-5, -2, 5, 2).unwrap();
        let p = Params { q: 2.0, h_star: 0.5, ..Params::default() };
        let m = cut_ring(s, &r, 6, &p).unwrap();
        // Supersampled classification: every cell with all 5x5 samples inside
        // must be in outer; every inner cell must have all samples inside.
        let e = s.edge_len();
        for &c in m.n.ring.iter() {
            let mut all_in = true;
            let mut any_in = false;
            for i in 0..5 {
                for j in 0..5 {
                    let x = (c.x as f64 + (i as f64 + 0.5) / 5.0) * e;
                    let y = (c.y as f64 + (j as f64 + 0.5) / 5.0) * e;
                    let inside = point_in_convex(&m.polygon, (x, y), 1e-12);
                    all_in &= inside;
                    any_in |= inside;
                }
            }
            if all_in {
                assert!(m.outer.contains(c));
            }
            if m.inner.contains(c) {
                assert!(all_in || any_in, "inner cell with no interior samples");
            }
        }
    }

    #[test]
    fn crack_overload_admits_improving_box() {
        // A dense comb inside the ring overloads the crack budget, and the
        // ring box itself is then a strictly improving rectangle.
        let s = spec();
        let p = Params { h_star: 0.5, ..Params::default() };
        let gamma = LatticeRect::new(-2, -2, 2, 2).unwrap();
        let mut rects = vec![gamma];
        // Checkerboard of isolated cells filling the ring interior.
        for x in -5..5 {
            for y in -5..5 {
                let in_rect = (-2..2).contains(&x) && (-2..2).contains(&y);
                if !in_rect && (x + y) % 2 == 0 {
                    rects.push(LatticeRect::new(x, y, x + 1, y + 1).unwrap());
                }
            }
        }
        let cfg = config_from_rects(s, &rects).unwrap();
        let gid = cfg.components[0].id;
        let n = neighborhood(s, &gamma, 8).unwrap();
        let chk = crack_length_check(&cfg, gid, &n, &p);
        assert!(!chk.pass, "comb must overload the budget: {chk:?}");
        // The dilated box strictly improves the weighted measure.
        let delta = crate::engine::weighted_measure_delta(&cfg, &n.box_rect, &p);
        assert!(delta < 0.0, "delta {delta}");
    }

    #[test]
    fn bridge_sets_none_without_neighbor() {
        let s = spec();
        let gamma = LatticeRect::new(-4, -4, 4, 4).unwrap();
        let cfg = config_from_rects(s, &[gamma]).unwrap();
        let gid = cfg.components[0].id;
        let sel = select_tau(&cfg, gid, 8, &Params::default()).unwrap();
        let k = GridSet::from_cells(s, [Cell::new(-6, 0)]).unwrap();
        let rec = bridge_sets(&cfg, gid, &sel, &k, &Params::default()).unwrap();
        assert!(rec.is_none());
    }

    #[test]
    fn bridge_gap_and_connector() {
        let s = spec();
        let gamma = LatticeRect::new(-2, -6, 2, 6).unwrap();
        // Large neighbor two cells to the left; the probe region reaches it.
        let bar = LatticeRect::new(-9, -10, -4, 10).unwrap();
        let cfg = config_from_rects(s, &[gamma, bar]).unwrap();
        let gid = cfg.components[0].id;
        // Use a generous radius so the neighbor is "large" for it.
        let p = Params { q: 1.0, h_star: 0.5, ..Params::default() };
        let sel = TauSelection { tau_bar_s: 2, tau_s: 2, big: vec![], degenerate: true };
        let k = GridSet::from_cells(s, [Cell::new(-3, 0), Cell::new(-4, 0)]).unwrap();
        let rec = bridge_sets(&cfg, gid, &sel, &k, &p).unwrap().unwrap();
        assert_eq!(rec.comp_m, cfg.components[1].id);
        // Gap is two cells = 2 * edge_len.
        assert!((rec.psi - 2.0 * s.edge_len()).abs() < 1e-12);
        let t = rec.connector.unwrap();
        assert_eq!(t.width(), 2);
        assert_eq!(t.height(), 1);
        assert!(rec.connector_ok);
        assert!(rec.lip_ok);
    }
}
