//! Surface measures, weights and class validity.
//!
//! Three measures on a boundary component: the edge length `|.|_H`, the
//! projection diameter `|.|_infty = sqrt(|pi_1|^2 + |pi_2|^2)`, and their
//! convex combination `|.|_* = h_* |.|_H + (1 - h_*) |.|_infty`. The weighted
//! variant multiplies the diameter part by the component weight.

use serde::{Deserialize, Serialize};

use crate::grid::{BoundaryComponent, Configuration, GridSet, LatticeSpec};
use crate::Error;

/// Global parameters. The small parameters are chosen in the order
/// `h_*, q, omega_min, r, upsilon`; `validate` enforces the ordering
/// constraints. The unquantified universal constants of the construction
/// are exposed with measured-default values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Convex weight of the edge-length part of `|.|_*`, in (0,1).
    pub h_star: f64,
    /// Corner-margin aspect parameter, >= 1.
    pub q: f64,
    /// Weight floor, in [1/2, 1).
    pub omega_min: f64,
    /// Remainder coupling parameter, in (0,1).
    pub r: f64,
    /// Neighborhood scale per unit diameter, in (0,1).
    pub upsilon: f64,
    /// Energy-condition constant (>= 32 / h_star).
    pub d_big: f64,
    /// Elastic energy scale.
    pub epsilon: f64,
    /// Total-energy slack factor.
    pub sigma: f64,
    /// Surface-budget slack factor.
    pub theta: f64,
    /// Trace-budget constant.
    pub c_star: f64,
    /// Trace-step base constant (measured, reported).
    pub c_hat: f64,
    /// Exceptional-set area constant: |K| <= k_size * tau^2 / h_star.
    pub k_size: f64,
    /// Exceptional-set separation constant: dist(K1, K2) >= k_dist * |Gamma|_inf.
    pub k_dist: f64,
    /// Threshold constant for the flat-component bridge case:
    /// `l_2 <= bridge_flat * tau / h_star`.
    pub bridge_flat: f64,
    /// Envelope for the measured boundary-trace constant.
    pub trace_envelope: f64,
}

impl Default for Params {
    fn default() -> Self {
        // Loosest values satisfying every ordering constraint:
        // q = 4/h*, D = 32/h*, r = h*^2, upsilon = r (1 - omega_min)^3.
        let h_star = 0.1;
        let omega_min = 0.9;
        let r = h_star * h_star;
        Params {
            h_star,
            q: 4.0 / h_star,
            omega_min,
            r,
            upsilon: r * (1.0 - omega_min).powi(3),
            d_big: 32.0 / h_star,
            epsilon: 1e-2,
            sigma: 0.2,
            theta: 0.5,
            c_star: 2.0,
            c_hat: 1.0,
            k_size: 16.0,
            k_dist: 0.25,
            bridge_flat: 4.0,
            trace_envelope: 8.0,
        }
    }
}

impl Params {
    /// Check every stated parameter constraint; returns the violated
    /// inequality on failure.
    pub fn validate(&self) -> Result<(), Error> {
        let fail = |m: String| Err(Error::Params(m));
        if !(self.h_star > 0.0 && self.h_star < 1.0) {
            return fail(format!("h_star must lie in (0,1), got {}", self.h_star));
        }
        if !(self.q >= 1.0) {
            return fail(format!("q must be >= 1, got {}", self.q));
        }
        let omega_floor = (3.0f64 / 4.0).sqrt();
        if !(self.omega_min >= omega_floor && self.omega_min < 1.0) {
            return fail(format!(
                "omega_min must lie in [sqrt(3/4), 1) = [{omega_floor:.6}, 1), got {}",
                self.omega_min
            ));
        }
        if !(self.r > 0.0 && self.r < 1.0) {
            return fail(format!("r must lie in (0,1), got {}", self.r));
        }
        if !(self.upsilon > 0.0 && self.upsilon < 1.0) {
            return fail(format!("upsilon must lie in (0,1), got {}", self.upsilon));
        }
        if self.r * (1.0 - self.omega_min).powi(3) < self.upsilon {
            return fail(format!(
                "r (1 - omega_min)^3 >= upsilon violated: {} < {}",
                self.r * (1.0 - self.omega_min).powi(3),
                self.upsilon
            ));
        }
        if !(19.0 * self.upsilon < 1.0) {
            return fail(format!("19 upsilon < 1 violated, upsilon = {}", self.upsilon));
        }
        if self.d_big < 32.0 / self.h_star {
            return fail(format!(
                "D >= 32 / h_star violated: {} < {}",
                self.d_big,
                32.0 / self.h_star
            ));
        }
        if !(self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.sigma > 0.0) {
            return fail(format!("sigma must be positive, got {}", self.sigma));
        }
        if !(self.theta > 0.0) {
            return fail(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.c_star > 0.0) {
            return fail(format!("c_star must be positive, got {}", self.c_star));
        }
        for (name, v) in [
            ("c_hat", self.c_hat),
            ("k_size", self.k_size),
            ("k_dist", self.k_dist),
            ("bridge_flat", self.bridge_flat),
            ("trace_envelope", self.trace_envelope),
        ] {
            if !(v > 0.0) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        Ok(())
    }
}

/// `|Gamma|_infty` of a component.
pub fn diam_inf(component: &BoundaryComponent) -> f64 {
    component.diam_inf()
}

/// `h_* theta_len + (1 - h_*) diam`.
pub fn measure_star(theta_len: f64, diam: f64, p: &Params) -> f64 {
    p.h_star * theta_len + (1.0 - p.h_star) * diam
}

/// Weighted variant: `h_* theta_len + (1 - h_*) omega diam`.
pub fn measure_omega(theta_len: f64, diam: f64, omega: f64, p: &Params) -> f64 {
    p.h_star * theta_len + (1.0 - p.h_star) * omega * diam
}

/// The four configuration totals, summed over interior components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    /// `sum |theta_j|_H` = H^1 of the union of interior boundaries.
    #[serde(rename = "H")]
    pub h: f64,
    /// `sum |gamma_j|_infty`.
    pub inf: f64,
    /// `sum |theta_j|_*`.
    pub star: f64,
    /// `sum |theta_j|_omega`.
    pub omega: f64,
}

pub fn total_measures(config: &Configuration, p: &Params) -> Totals {
    let spec = &config.spec;
    let mut t = Totals { h: 0.0, inf: 0.0, star: 0.0, omega: 0.0 };
    for comp in config.interior_components() {
        let th = comp.theta.h1(spec);
        let d = comp.diam_inf();
        t.h += th;
        t.inf += d;
        t.star += measure_star(th, d, p);
        t.omega += measure_omega(th, d, comp.weight, p);
    }
    t
}

/// Pass/fail record for the five class-validity conditions of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentValidity {
    /// theta inside the rectangle boundary and gamma inside its closure (weight < 1).
    pub rect_covers: bool,
    /// `|dR|_infty <= omega / omega_min * |Gamma|_infty` (weight < 1).
    pub rect_diameter: bool,
    /// `R \ X_j` edge-connected for every component j (weight < 1).
    pub rect_connected: bool,
    /// weight = 1 whenever `|Gamma|_infty >= 19 upsilon lambda`.
    pub large_is_unit_weight: bool,
    /// gamma = theta = a rectangle boundary when weight = 1.
    pub unit_weight_rectangular: bool,
}

impl ComponentValidity {
    pub fn all(&self) -> bool {
        self.rect_covers
            && self.rect_diameter
            && self.rect_connected
            && self.large_is_unit_weight
            && self.unit_weight_rectangular
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub lambda: f64,
    pub per_component: Vec<(u32, ComponentValidity)>,
}

impl ValidityReport {
    pub fn all(&self) -> bool {
        self.per_component.iter().all(|(_, v)| v.all())
    }
}

/// Check the five class-validity conditions at level `lambda` for every
/// interior component. Returns a report, never an error.
pub fn validate_class(config: &Configuration, p: &Params, lambda: f64) -> ValidityReport {
    let spec = config.spec;
    let mut per_component = Vec::new();
    for comp in config.interior_components() {
        let d = comp.diam_inf();
        let unit = comp.weight == 1.0;
        let mut v = ComponentValidity {
            rect_covers: true,
            rect_diameter: true,
            rect_connected: true,
            large_is_unit_weight: true,
            unit_weight_rectangular: true,
        };
        if !unit {
            match comp.rect {
                None => {
                    v.rect_covers = false;
                    v.rect_diameter = false;
                    v.rect_connected = false;
                }
                Some(r) => {
                    let rb = r.boundary_edges();
                    v.rect_covers = comp.theta.is_subset(&rb)
                        && comp.gamma.iter().all(|e| e.inside_closed_rect(&r))
                        && r.strictly_inside_ambient(&spec);
                    v.rect_diameter = r.diam_inf(&spec)
                        <= comp.weight / p.omega_min * d + 1e-12 * spec.mu();
                    let rset = GridSet::from_rect(spec, &r);
                    v.rect_connected = match rset {
                        Err(_) => false,
                        Ok(rset) => config
                            .interior_components()
                            .all(|other| rset.difference(&other.interior).is_connected()),
                    };
                }
            }
            if d >= 19.0 * p.upsilon * lambda {
                v.large_is_unit_weight = false;
            }
        } else {
            v.unit_weight_rectangular =
                comp.is_rectangular() && comp.theta == comp.gamma;
        }
        per_component.push((comp.id.0, v));
    }
    ValidityReport { lambda, per_component }
}

/// Convenience: the lattice spec's edge length, exposed for measure formulas.
pub fn edge_len(spec: &LatticeSpec) -> f64 {
    spec.edge_len()
}
