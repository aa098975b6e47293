//! Experiment parameters, validation, and the handful of closed-form
//! exponents derived from them.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Parameters of a single-scale experiment.
///
/// `d` is the ambient dimension, `sigma` the lattice exponent, `r` the scale,
/// `cd` the coherence-ball fraction (lattice statistics are collected inside
/// `B_{cd * r}`).  `quad_order` is the Gauss-Legendre order per frequency
/// axis, `sample_spacing` the sub-grid step used when a unit cube is turned
/// into sample points, `eps_slack` the fit slack added to every slope
/// tolerance, and `packet_threshold` the activity cutoff for wave packets as
/// a fraction of the top packet magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub d: usize,
    pub sigma: f64,
    pub r: f64,
    pub cd: f64,
    pub quad_order: usize,
    pub sample_spacing: f64,
    pub eps_slack: f64,
    pub packet_threshold: f64,
}

/// `Params` without the scale, the shared part of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseParams {
    pub d: usize,
    pub sigma: f64,
    pub cd: f64,
    pub quad_order: usize,
    pub sample_spacing: f64,
    pub eps_slack: f64,
    pub packet_threshold: f64,
}

impl Default for BaseParams {
    fn default() -> Self {
        BaseParams {
            d: 2,
            sigma: 0.25,
            cd: 0.125,
            quad_order: 8,
            sample_spacing: 0.5,
            eps_slack: 0.05,
            packet_threshold: 1.0 / 16.0,
        }
    }
}

impl BaseParams {
    pub fn new(d: usize, sigma: f64) -> Self {
        BaseParams {
            d,
            sigma,
            ..BaseParams::default()
        }
    }

    pub fn at_scale(&self, r: f64) -> Result<Params> {
        let p = Params {
            d: self.d,
            sigma: self.sigma,
            r,
            cd: self.cd,
            quad_order: self.quad_order,
            sample_spacing: self.sample_spacing,
            eps_slack: self.eps_slack,
            packet_threshold: self.packet_threshold,
        };
        p.validate()?;
        Ok(p)
    }
}

impl Params {
    pub fn new(d: usize, sigma: f64, r: f64) -> Result<Self> {
        BaseParams::new(d, sigma).at_scale(r)
    }

    pub fn validate(&self) -> Result<()> {
        fn bad(name: &'static str, detail: String) -> Error {
            Error::InvalidParams { name, detail }
        }
        if self.d < 2 {
            return Err(bad("d", format!("need d >= 2, got {}", self.d)));
        }
        if !(self.sigma > 0.0 && self.sigma < 0.5) {
            return Err(bad(
                "sigma",
                format!("need 0 < sigma < 1/2, got {}", self.sigma),
            ));
        }
        if !(self.r > 1.0 && self.r.is_finite()) {
            return Err(bad("r", format!("need R > 1, got {}", self.r)));
        }
        if !(self.cd > 0.0 && self.cd <= 1.0) {
            return Err(bad("cd", format!("need 0 < cd <= 1, got {}", self.cd)));
        }
        if self.quad_order < 2 {
            return Err(bad(
                "quad_order",
                format!("need quad_order >= 2, got {}", self.quad_order),
            ));
        }
        if !(self.sample_spacing > 0.0 && self.sample_spacing <= 1.0) {
            return Err(bad(
                "sample_spacing",
                format!("need 0 < sample_spacing <= 1, got {}", self.sample_spacing),
            ));
        }
        if self.eps_slack.is_nan() || self.eps_slack < 0.0 {
            return Err(bad(
                "eps_slack",
                format!("need eps_slack >= 0, got {}", self.eps_slack),
            ));
        }
        if !(self.packet_threshold > 0.0 && self.packet_threshold < 1.0) {
            return Err(bad(
                "packet_threshold",
                format!("need 0 < packet_threshold < 1, got {}", self.packet_threshold),
            ));
        }
        Ok(())
    }

    pub fn base(&self) -> BaseParams {
        BaseParams {
            d: self.d,
            sigma: self.sigma,
            cd: self.cd,
            quad_order: self.quad_order,
            sample_spacing: self.sample_spacing,
            eps_slack: self.eps_slack,
            packet_threshold: self.packet_threshold,
        }
    }

    pub fn df(&self) -> f64 {
        self.d as f64
    }

    /// Number of interior frequency lattice points per axis: integers `l`
    /// with `1 <= l < R^sigma`.
    pub fn lattice_side_count(&self) -> usize {
        let s = snap_to_integer(self.r.powf(self.sigma));
        let c = s.ceil() - 1.0;
        if c < 0.0 {
            0
        } else {
            c as usize
        }
    }

    /// Frequency lattice spacing `R^{-sigma}`.
    pub fn freq_spacing(&self) -> f64 {
        self.r.powf(-self.sigma)
    }

    /// Half-width `R^{-1}` of one frequency cube, per axis.
    pub fn cube_half_width(&self) -> f64 {
        1.0 / self.r
    }

    /// Side `R^{-1/2}` of a cap base square.
    pub fn cap_side(&self) -> f64 {
        1.0 / self.r.sqrt()
    }

    /// Spatial lattice spacings: `R^sigma` on the first `d-1` axes,
    /// `R^{2 sigma}` on the last.
    pub fn spatial_spacing(&self, axis: usize) -> f64 {
        if axis + 1 == self.d {
            self.r.powf(2.0 * self.sigma)
        } else {
            self.r.powf(self.sigma)
        }
    }

    /// Radius `cd * R` of the coherence ball.
    pub fn coherence_radius(&self) -> f64 {
        self.cd * self.r
    }

    /// Critical exponent `2(d+1)/(d-1)`.
    pub fn p_critical(&self) -> f64 {
        2.0 * (self.df() + 1.0) / (self.df() - 1.0)
    }

    /// Mass dimension `alpha = d - (d+1) sigma` of the spatial lattice set.
    pub fn alpha(&self) -> f64 {
        self.df() - (self.df() + 1.0) * self.sigma
    }

    /// Predicted amplitude exponent `(d-1)(sigma-1)`.
    pub fn amplitude_exponent(&self) -> f64 {
        (self.df() - 1.0) * (self.sigma - 1.0)
    }

    /// Predicted exponent shared by both sides of the critical-exponent
    /// comparison: `(d-1) sigma / 2 - (d-1)(d+2) / (2(d+1))`.
    pub fn sharpness_exponent(&self) -> f64 {
        let d = self.df();
        (d - 1.0) * self.sigma / 2.0 - (d - 1.0) * (d + 2.0) / (2.0 * (d + 1.0))
    }

    /// Predicted exponent shared by both sides of the L2 comparison:
    /// `(d-3) sigma / 2 - (d-2)/2`.
    pub fn l2_exponent(&self) -> f64 {
        let d = self.df();
        (d - 3.0) * self.sigma / 2.0 - (d - 2.0) / 2.0
    }
}

/// Round to the nearest integer when floating-point noise is the only thing
/// separating us from it.  Counts like `R^sigma` are defined through strict
/// inequalities on exact reals; `powf` can land a hair above or below.
pub(crate) fn snap_to_integer(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() < 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}
