//! One-hot rate coding of the pong world into 133 input channels.
//!
//! | section      | offset | channels |
//! |--------------|--------|----------|
//! | ball x       | 0      | 30       |
//! | ball y       | 30     | 30       |
//! | ball vx      | 60     | 9        |
//! | ball vy      | 69     | 9        |
//! | racket y     | 78     | 30       |
//! | close zone   | 108    | 25       |
//!
//! Each section has one active channel (the close zone has at most one), and
//! every active channel spikes whenever the 300 Hz clock ticks.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::neuron::InputFrame;
use crate::pong::{PongEnv, RacketParams, WorldState, HALF_SIZE};

pub const CHANNELS: usize = 133;
pub const VELOCITY_BINS: usize = 9;
pub const COORD_BINS: usize = 30;
pub const ZONE_GRID: usize = 5;
/// Side of the close-zone field, cm.
pub const ZONE_FIELD: f64 = 3.0;
pub const SPIKE_RATE_HZ: u64 = 300;

/// Layout file shipped with the crate, produced by
/// `causal-detector calibrate --seed 7 --steps 10000000`.
pub const DEFAULT_LAYOUT: &str = include_str!("../data/velocity_bins.txt");
pub const DEFAULT_CALIBRATION_SEED: u64 = 7;
pub const DEFAULT_CALIBRATION_STEPS: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    BallX,
    BallY,
    BallVx,
    BallVy,
    RacketY,
    CloseZone,
}

impl Section {
    pub const ALL: [Section; 6] = [
        Section::BallX,
        Section::BallY,
        Section::BallVx,
        Section::BallVy,
        Section::RacketY,
        Section::CloseZone,
    ];

    pub fn offset(self) -> usize {
        match self {
            Section::BallX => 0,
            Section::BallY => 30,
            Section::BallVx => 60,
            Section::BallVy => 69,
            Section::RacketY => 78,
            Section::CloseZone => 108,
        }
    }

    pub fn width(self) -> usize {
        match self {
            Section::BallX | Section::BallY | Section::RacketY => COORD_BINS,
            Section::BallVx | Section::BallVy => VELOCITY_BINS,
            Section::CloseZone => ZONE_GRID * ZONE_GRID,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Section::BallX => "ball_x",
            Section::BallY => "ball_y",
            Section::BallVx => "ball_vx",
            Section::BallVy => "ball_vy",
            Section::RacketY => "racket_y",
            Section::CloseZone => "close_zone",
        }
    }

    /// Section and in-section index of a channel.
    pub fn of_channel(channel: usize) -> Option<(Section, usize)> {
        Section::ALL
            .iter()
            .rev()
            .find(|s| channel >= s.offset())
            .filter(|s| channel < s.offset() + s.width())
            .map(|&s| (s, channel - s.offset()))
    }
}

/// Velocity bin boundaries; the section layout itself is fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayout {
    pub vx_bounds: [f64; VELOCITY_BINS - 1],
    pub vy_bounds: [f64; VELOCITY_BINS - 1],
    /// Free-form provenance line kept in the layout file.
    pub generated_by: String,
}

impl Default for EncoderLayout {
    fn default() -> Self {
        Self::parse(DEFAULT_LAYOUT).expect("bundled layout file is valid")
    }
}

impl EncoderLayout {
    pub fn channels(&self) -> usize {
        CHANNELS
    }

    /// Builds a layout from a seeded pong run, using per-step velocity samples.
    pub fn calibrate(seed: u64, steps: u64) -> Result<Self> {
        Self::calibrate_with(seed, steps, RacketParams::default())
    }

    pub fn calibrate_with(seed: u64, steps: u64, racket: RacketParams) -> Result<Self> {
        let mut env = PongEnv::with_racket(seed, racket);
        let mut vx = Vec::with_capacity(steps as usize);
        let mut vy = Vec::with_capacity(steps as usize);
        for _ in 0..steps {
            env.step();
            vx.push(env.state().ball_vx);
            vy.push(env.state().ball_vy);
        }
        Ok(Self {
            vx_bounds: velocity_bins(&vx)?,
            vy_bounds: velocity_bins(&vy)?,
            generated_by: if racket == RacketParams::default() {
                format!("causal-detector calibrate --seed {seed} --steps {steps}")
            } else {
                format!(
                    "causal-detector calibrate --seed {seed} --steps {steps} (racket_speed {}, policy_period {})",
                    racket.speed, racket.policy_period
                )
            },
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |b: &[f64]| b.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ");
        writeln!(s, "# causal-detector encoder layout").unwrap();
        writeln!(s, "version = 1").unwrap();
        let sections: Vec<String> = Section::ALL
            .iter()
            .map(|s| format!("{}:{}", s.name(), s.width()))
            .collect();
        writeln!(s, "sections = {}", sections.join(" ")).unwrap();
        writeln!(s, "vx_bounds = {}", join(&self.vx_bounds)).unwrap();
        writeln!(s, "vy_bounds = {}", join(&self.vy_bounds)).unwrap();
        writeln!(s, "generated_by = {}", self.generated_by).unwrap();
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut version = None;
        let mut sections = None;
        let mut vx = None;
        let mut vy = None;
        let mut generated_by = String::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("layout: expected key = value: {line}")))?;
            let v = v.trim();
            match k.trim() {
                "version" => version = Some(v.to_string()),
                "sections" => sections = Some(v.to_string()),
                "vx_bounds" => vx = Some(parse_bounds(v)?),
                "vy_bounds" => vy = Some(parse_bounds(v)?),
                "generated_by" => generated_by = v.to_string(),
                other => return Err(Error::Format(format!("layout: unknown key `{other}`"))),
            }
        }
        if version.as_deref() != Some("1") {
            return Err(Error::Format("layout: missing or unsupported version".into()));
        }
        let expected: Vec<String> = Section::ALL
            .iter()
            .map(|s| format!("{}:{}", s.name(), s.width()))
            .collect();
        if sections.as_deref() != Some(expected.join(" ").as_str()) {
            return Err(Error::Format("layout: section table does not match".into()));
        }
        Ok(Self {
            vx_bounds: vx.ok_or_else(|| Error::Format("layout: missing vx_bounds".into()))?,
            vy_bounds: vy.ok_or_else(|| Error::Format("layout: missing vy_bounds".into()))?,
            generated_by,
        })
    }

    /// Channels that are switched on by this world state, before clock gating.
    pub fn active_channels(&self, state: &WorldState) -> Vec<usize> {
        let mut out = Vec::with_capacity(6);
        let coord = |v: f64| bin_index(v, COORD_BINS, -HALF_SIZE, HALF_SIZE).expect("finite state");
        out.push(Section::BallX.offset() + coord(state.ball_x));
        out.push(Section::BallY.offset() + coord(state.ball_y));
        out.push(Section::BallVx.offset() + velocity_bin(state.ball_vx, &self.vx_bounds));
        out.push(Section::BallVy.offset() + velocity_bin(state.ball_vy, &self.vy_bounds));
        out.push(Section::RacketY.offset() + coord(state.racket_y));
        if let Some(zone) = close_zone(state) {
            out.push(Section::CloseZone.offset() + zone);
        }
        out
    }
}

fn parse_bounds(v: &str) -> Result<[f64; VELOCITY_BINS - 1]> {
    let vals: Vec<f64> = v
        .split(',')
        .map(|x| {
            x.trim()
                .parse()
                .map_err(|_| Error::Format(format!("layout: bad bound `{x}`")))
        })
        .collect::<Result<_>>()?;
    let arr: [f64; VELOCITY_BINS - 1] = vals
        .try_into()
        .map_err(|_| Error::Format("layout: need exactly 8 bounds".into()))?;
    if arr.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(Error::Format("layout: bounds must be strictly increasing".into()));
    }
    Ok(arr)
}

/// Equal-width bin of `value` over `[lo, hi]`, clamped to `[0, n-1]`.
pub fn bin_index(value: f64, n_bins: usize, lo: f64, hi: f64) -> Result<usize> {
    if !value.is_finite() {
        return Err(Error::NonFinite(value));
    }
    debug_assert!(lo < hi && n_bins > 0);
    let raw = (n_bins as f64 * (value - lo) / (hi - lo)).floor();
    Ok(raw.clamp(0.0, (n_bins - 1) as f64) as usize)
}

/// Number of boundaries at or below `v`.
pub fn velocity_bin(v: f64, bounds: &[f64]) -> usize {
    bounds.partition_point(|&b| b <= v)
}

/// Equal-occupancy boundaries at the 1/9 .. 8/9 empirical quantiles.
pub fn velocity_bins(samples: &[f64]) -> Result<[f64; VELOCITY_BINS - 1]> {
    if samples.len() < 10_000 {
        return Err(Error::Calibration(format!(
            "need at least 10000 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Calibration("non-finite sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut out = [0.0; VELOCITY_BINS - 1];
    for (k, b) in out.iter_mut().enumerate() {
        let idx = ((k + 1) * n) / VELOCITY_BINS;
        *b = sorted[idx.min(n - 1)];
    }
    if out.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(Ordering::Less)) {
        return Err(Error::Calibration(
            "samples too degenerate for distinct quantile boundaries".into(),
        ));
    }
    Ok(out)
}

/// Close-zone cell (row-major, row 0 at the bottom) holding the ball, if the
/// ball lies in the 3×3 cm field in front of the racket.
pub fn close_zone(state: &WorldState) -> Option<usize> {
    let x0 = -HALF_SIZE;
    let y0 = state.racket_y - ZONE_FIELD / 2.0;
    let dx = state.ball_x - x0;
    let dy = state.ball_y - y0;
    if !(0.0..=ZONE_FIELD).contains(&dx) || !(0.0..=ZONE_FIELD).contains(&dy) {
        return None;
    }
    let cell = ZONE_FIELD / ZONE_GRID as f64;
    let col = ((dx / cell).floor() as usize).min(ZONE_GRID - 1);
    let row = ((dy / cell).floor() as usize).min(ZONE_GRID - 1);
    Some(row * ZONE_GRID + col)
}

/// Spike generation for active channels.
#[derive(Debug, Clone)]
pub enum SpikeClock {
    /// One deterministic 300 Hz clock shared by every channel: a spike at step
    /// `t` whenever `floor(0.3 * (t + 1))` exceeds `floor(0.3 * t)`.
    Shared,
    /// Each active channel spikes independently with probability 0.3 per step.
    Bernoulli(Box<ChaCha8Rng>),
}

impl SpikeClock {
    pub fn bernoulli(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        SpikeClock::Bernoulli(Box::new(rng))
    }

    pub fn shared_tick(step: u64) -> bool {
        (SPIKE_RATE_HZ * (step + 1)) / 1000 > (SPIKE_RATE_HZ * step) / 1000
    }
}

/// Encoder state: layout plus clock.
#[derive(Debug, Clone)]
pub struct SpikeEncoder {
    pub layout: EncoderLayout,
    pub clock: SpikeClock,
}

impl SpikeEncoder {
    pub fn new(layout: EncoderLayout, clock: SpikeClock) -> Self {
        Self { layout, clock }
    }

    /// Fills `frame` with the spikes emitted at `step` for `state`. The
    /// dopamine flag is left untouched.
    pub fn encode_into(&mut self, state: &WorldState, step: u64, frame: &mut InputFrame) {
        let dopamine = frame.dopamine;
        frame.clear();
        frame.dopamine = dopamine;
        let active = self.layout.active_channels(state);
        match &mut self.clock {
            SpikeClock::Shared => {
                if SpikeClock::shared_tick(step) {
                    active.into_iter().for_each(|c| frame.set(c));
                }
            }
            SpikeClock::Bernoulli(rng) => {
                for c in active {
                    if rng.gen_bool(0.3) {
                        frame.set(c);
                    }
                }
            }
        }
    }

    pub fn encode(&mut self, state: &WorldState, step: u64) -> InputFrame {
        let mut frame = InputFrame::new(CHANNELS);
        self.encode_into(state, step, &mut frame);
        frame
    }
}
