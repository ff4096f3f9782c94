//! Synaptic resource arithmetic.
//!
//! Plasticity acts additively on an unbounded *resource* `W`; the weight seen by
//! the neuron is a saturating function of it:
//!
//! ```text
//! w = w_min + (w_max - w_min) * max(W, 0) / (w_max - w_min + max(W, 0))
//! ```
//!
//! Both plasticity magnitudes shrink as the neuron's stability `s` grows:
//! `d = d_bar * min(2^-s, 1)`.

use crate::error::{Error, Result};

/// Firing threshold. Weights are expressed in units of it.
pub const THRESHOLD: f64 = 1.0;

/// Constants of the plasticity model for one detector neuron.
///
/// The anti-Hebbian and dopamine maxima are kept equal, so a single value is
/// stored and exposed under both names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlasticityConfig {
    d_bar: f64,
    /// Lower weight bound (negative).
    pub w_min: f64,
    /// Upper weight bound (positive, never attained).
    pub w_max: f64,
    /// Stability step.
    pub d_s: f64,
    /// Eligibility window before a dopamine spike, in steps. Also the maximum
    /// inter-spike interval inside a tight spike sequence.
    pub t_p: u32,
}

impl PlasticityConfig {
    pub fn new(d_bar: f64, w_min: f64, w_max: f64, d_s: f64, t_p: u32) -> Result<Self> {
        let cfg = Self {
            d_bar,
            w_min,
            w_max,
            d_s,
            t_p,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parameters found by the reference GA run on the pong task.
    pub fn pong_optimum() -> Self {
        Self {
            d_bar: 0.056,
            w_min: -0.017,
            w_max: 0.48,
            d_s: 0.23,
            t_p: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.d_bar, self.w_min, self.w_max, self.d_s]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Config("plasticity constants must be finite".into()));
        }
        if !(self.w_min < 0.0 && self.w_max > 0.0) {
            return Err(Error::Config(format!(
                "need w_min < 0 < w_max, got w_min={} w_max={}",
                self.w_min, self.w_max
            )));
        }
        if self.d_bar <= 0.0 {
            return Err(Error::Config(format!("d_bar must be positive, got {}", self.d_bar)));
        }
        if self.d_s <= 0.0 {
            return Err(Error::Config(format!("d_s must be positive, got {}", self.d_s)));
        }
        if self.t_p == 0 {
            return Err(Error::Config("t_p must be at least 1 step".into()));
        }
        Ok(())
    }

    /// Maximum anti-Hebbian decrement.
    pub fn d_h_bar(&self) -> f64 {
        self.d_bar
    }

    /// Maximum dopamine increment.
    pub fn d_d_bar(&self) -> f64 {
        self.d_bar
    }

    pub fn set_d_bar(&mut self, d_bar: f64) {
        self.d_bar = d_bar;
    }

    /// Maximum inter-spike interval inside one tight spike sequence.
    pub fn isi_max(&self) -> u32 {
        self.t_p
    }

    pub fn threshold(&self) -> f64 {
        THRESHOLD
    }

    pub fn weight_of(&self, resource: f64) -> f64 {
        weight_of(resource, self)
    }
}

/// Maps a synaptic resource onto its weight in `[w_min, w_max)`.
pub fn weight_of(resource: f64, cfg: &PlasticityConfig) -> f64 {
    let span = cfg.w_max - cfg.w_min;
    let r = resource.max(0.0);
    if r.is_infinite() {
        return cfg.w_max;
    }
    cfg.w_min + span * r / (span + r)
}

/// Smallest resource whose weight equals `target`.
pub fn resource_for_weight(target: f64, cfg: &PlasticityConfig) -> Result<f64> {
    if !(target >= cfg.w_min && target < cfg.w_max) {
        return Err(Error::WeightDomain {
            weight: target,
            w_min: cfg.w_min,
            w_max: cfg.w_max,
        });
    }
    let span = cfg.w_max - cfg.w_min;
    let above = target - cfg.w_min;
    Ok(span * above / (span - above))
}

/// Stability-attenuated plasticity magnitudes `(d_H, d_D)`.
pub fn effective_rates(stability: f64, cfg: &PlasticityConfig) -> (f64, f64) {
    let gain = stability_gain(stability);
    (cfg.d_h_bar() * gain, cfg.d_d_bar() * gain)
}

/// `min(2^-s, 1)`.
pub fn stability_gain(stability: f64) -> f64 {
    if stability <= 0.0 {
        1.0
    } else {
        // exact power of two for the integer part keeps unit halving bit-exact
        let whole = stability.floor();
        let frac = stability - whole;
        (-frac).exp2() * 2f64.powi(-(whole.min(2000.0) as i32))
    }
}
