//! Synthetic records with a known cause.
//!
//! A fixed subset of channels co-fires in a single step at rare random times,
//! and a target event follows exactly `lag` steps later. The remaining channels
//! spike independently with probability `noise_prob` per step.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pong::{EnvEvent, EventKind};
use crate::record::EpisodeRecord;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub channels: usize,
    pub cause_channels: Vec<usize>,
    /// Steps from cause activation to target event.
    pub lag: u64,
    /// Per-step spike probability of each non-cause channel.
    pub noise_prob: f64,
    /// Gap between consecutive cause activations is uniform on
    /// `[min_gap, max_gap]` steps.
    pub min_gap: u64,
    pub max_gap: u64,
    pub duration_steps: u64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            channels: 20,
            cause_channels: vec![3, 9, 15],
            lag: 100,
            noise_prob: 0.002,
            min_gap: 500,
            max_gap: 1500,
            duration_steps: 300_000,
            seed: 1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.channels == 0 || self.channels > usize::from(u16::MAX) + 1 {
            return bad(format!("channel count {} out of range", self.channels));
        }
        if self.cause_channels.is_empty() {
            return bad("cause subset is empty".into());
        }
        let mut sorted = self.cause_channels.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.cause_channels.len() {
            return bad("cause channels repeat".into());
        }
        if sorted.last().is_some_and(|&c| c >= self.channels) {
            return bad("cause channel out of range".into());
        }
        if !(0.0..=1.0).contains(&self.noise_prob) {
            return bad(format!("noise probability {} not in [0, 1]", self.noise_prob));
        }
        if self.lag == 0 {
            return bad("lag must be positive".into());
        }
        if self.min_gap <= self.lag || self.max_gap < self.min_gap {
            return bad(format!(
                "need lag < min_gap <= max_gap, got lag={} gaps=[{}, {}]",
                self.lag, self.min_gap, self.max_gap
            ));
        }
        Ok(())
    }

    pub fn is_cause(&self, channel: usize) -> bool {
        self.cause_channels.contains(&channel)
    }
}

/// Generated record plus the cause activation steps.
#[derive(Debug, Clone)]
pub struct SyntheticEpisode {
    pub record: EpisodeRecord,
    pub cause_steps: Vec<u64>,
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticEpisode> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(1);

    let mut cause_steps = Vec::new();
    let mut t = rng.gen_range(cfg.min_gap..=cfg.max_gap);
    while t + cfg.lag < cfg.duration_steps {
        cause_steps.push(t);
        t += rng.gen_range(cfg.min_gap..=cfg.max_gap);
    }

    let mut causes = cfg.cause_channels.clone();
    causes.sort_unstable();
    let mut b = EpisodeRecord::builder(cfg.channels, cfg.seed);
    let mut next_cause = cause_steps.iter().peekable();
    let mut active = Vec::with_capacity(cfg.channels);
    for step in 0..cfg.duration_steps {
        active.clear();
        let cause_now = next_cause.peek().is_some_and(|&&c| c == step);
        if cause_now {
            next_cause.next();
        }
        for c in 0..cfg.channels {
            if causes.binary_search(&c).is_ok() {
                if cause_now {
                    active.push(c);
                }
            } else if cfg.noise_prob > 0.0 && noise_rng.gen_bool(cfg.noise_prob) {
                active.push(c);
            }
        }
        b.push_step(&active);
    }
    for &c in &cause_steps {
        b.push_event(EnvEvent {
            kind: EventKind::Reward,
            step: c + cfg.lag,
        })?;
    }
    Ok(SyntheticEpisode {
        record: b.finish()?,
        cause_steps,
    })
}
