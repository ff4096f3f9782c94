//! The online binary detector neuron.
//!
//! One call to [`Detector::tick`] advances the neuron by a single time step.
//! Within a step the work happens in a fixed order:
//!
//! 1. presynaptic spikes are stamped onto their synapses;
//! 2. the weighted sum of spiking synapses is compared against the threshold;
//! 3. the tight-spike-sequence (TSS) tracker is updated and anti-Hebbian
//!    depressions are committed;
//! 4. a dopamine spike potentiates every synapse that spiked within the last
//!    `t_p` steps and adjusts stability;
//! 5. a TSS that started this step decrements stability by `d_s`.
//!
//! All magnitudes inside a step use the stability value from the start of the
//! step; stability changes land at the end of it.
//!
//! Depression is bound to postsynaptic bursts rather than single spikes. A
//! synapse is depressed at most once per TSS, and only if it spiked somewhere
//! between the TSS onset and its last postsynaptic spike. Online, a burst's
//! last spike is only known once `isi_max` silent steps have passed, so
//! presynaptic spikes arriving after the latest postsynaptic spike are held as
//! pending and committed only if the burst is extended.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read, Write};

use crate::error::{Error, Result};
use crate::plasticity::{effective_rates, resource_for_weight, PlasticityConfig};

/// Presynaptic spikes of one time step plus the dopamine channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputFrame {
    words: Vec<u64>,
    len: usize,
    /// Spike on the plasticity-control input this step.
    pub dopamine: bool,
}

impl InputFrame {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
            dopamine: false,
        }
    }

    pub fn from_active(len: usize, active: &[usize], dopamine: bool) -> Self {
        let mut frame = Self::new(len);
        for &i in active {
            frame.set(i);
        }
        frame.dopamine = dopamine;
        frame
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Panics if `channel` is out of range.
    pub fn set(&mut self, channel: usize) {
        assert!(channel < self.len, "channel {channel} out of range {}", self.len);
        self.words[channel / 64] |= 1 << (channel % 64);
    }

    pub fn get(&self, channel: usize) -> bool {
        channel < self.len && self.words[channel / 64] & (1 << (channel % 64)) != 0
    }

    pub fn clear(&mut self) {
        self.words.iter_mut().for_each(|w| *w = 0);
        self.dopamine = false;
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Indices of spiking channels, ascending.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut bits = word;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(wi * 64 + b)
            })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynapseState {
    /// Unbounded synaptic resource `W`.
    pub resource: f64,
    pub last_presyn_spike_step: Option<u64>,
    pub depressed_in_current_tss: bool,
    /// Step of a presynaptic spike that arrived after the latest postsynaptic
    /// spike of the open TSS and has not been committed yet.
    pub pending_depression_step: Option<u64>,
}

impl SynapseState {
    pub fn with_resource(resource: f64) -> Self {
        Self {
            resource,
            last_presyn_spike_step: None,
            depressed_in_current_tss: false,
            pending_depression_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TssPhase {
    Inactive,
    Active,
}

/// What the tracker saw at one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TssUpdate {
    /// `(first, last)` postsynaptic spike steps of a sequence that ended
    /// because the gap since its last spike exceeded `isi_max`.
    pub closed: Option<(u64, u64)>,
    /// A new sequence started at this step.
    pub onset: bool,
    /// The open sequence was extended; holds its previous last spike step.
    pub extended_from: Option<u64>,
}

/// Online segmentation of the postsynaptic spike train into tight spike
/// sequences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TssTracker {
    pub phase: TssPhase,
    /// Onset of the open sequence, or of the most recent closed one.
    pub onset_step: Option<u64>,
    pub last_post_spike_step: Option<u64>,
}

impl Default for TssTracker {
    fn default() -> Self {
        Self {
            phase: TssPhase::Inactive,
            onset_step: None,
            last_post_spike_step: None,
        }
    }
}

impl TssTracker {
    /// Feeds one step. Steps must be presented in increasing order, and every
    /// step must be presented for closure to happen exactly on time.
    pub fn observe(&mut self, step: u64, fired: bool, isi_max: u64) -> TssUpdate {
        let mut update = TssUpdate::default();
        if self.phase == TssPhase::Active {
            let last = self.last_post_spike_step.expect("active tracker has a last spike");
            if step - last > isi_max {
                self.phase = TssPhase::Inactive;
                update.closed = Some((self.onset_step.expect("active tracker has an onset"), last));
            }
        }
        if fired {
            match self.phase {
                TssPhase::Active => {
                    update.extended_from = self.last_post_spike_step;
                }
                TssPhase::Inactive => {
                    self.phase = TssPhase::Active;
                    self.onset_step = Some(step);
                    update.onset = true;
                }
            }
            self.last_post_spike_step = Some(step);
        }
        update
    }

    pub fn is_active(&self) -> bool {
        self.phase == TssPhase::Active
    }

    /// The open sequence as `(onset, last spike)`, if any.
    pub fn open_segment(&self) -> Option<(u64, u64)> {
        match self.phase {
            TssPhase::Active => Some((self.onset_step?, self.last_post_spike_step?)),
            TssPhase::Inactive => None,
        }
    }
}

/// Offline TSS segmentation: maximal runs of spikes whose consecutive gaps are
/// at most `isi_max`.
pub fn tss_segments(post_spike_steps: &[u64], isi_max: u64) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut iter = post_spike_steps.iter().copied();
    let Some(first) = iter.next() else {
        return out;
    };
    let (mut start, mut last) = (first, first);
    for t in iter {
        debug_assert!(t > last, "spike steps must be strictly increasing");
        if t - last > isi_max {
            out.push((start, last));
            start = t;
        }
        last = t;
    }
    out.push((start, last));
    out
}

/// Stability adjustment applied on a dopamine spike, in units of `d_s`.
///
/// `since_onset` is the number of steps since the most recent TSS onset;
/// `None` when the neuron has never fired.
pub fn dopamine_stability_factor(since_onset: Option<u64>, isi_max: u64) -> f64 {
    match since_onset {
        None => -1.0,
        Some(dt) => {
            let isi = isi_max as f64;
            (2.0 - (dt as f64 - isi).abs() / isi).max(-1.0)
        }
    }
}

/// Everything that happened during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepOutcome {
    pub fired: bool,
    pub tss: TssUpdate,
    pub depressions: u32,
    pub potentiations: u32,
    pub stability_delta: f64,
}

/// A single binary detector neuron with its plastic synapses.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    cfg: PlasticityConfig,
    synapses: Vec<SynapseState>,
    stability: f64,
    tss: TssTracker,
    current_step: u64,
    frozen: bool,
    stats: DetectorStats,
}

/// Running counters kept alongside the state.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DetectorStats {
    pub fire_count: u64,
    pub tss_count: u64,
    pub dopamine_count: u64,
    /// Sum of `|Δw|` over all resource updates so far.
    pub total_abs_weight_change: f64,
}

impl Detector {
    /// New detector whose synapses all start at weight zero and stability zero.
    pub fn new(channels: usize, cfg: PlasticityConfig) -> Result<Self> {
        cfg.validate()?;
        let w0 = resource_for_weight(0.0, &cfg)?;
        Ok(Self::with_resources(vec![w0; channels], cfg))
    }

    pub fn with_resources(resources: Vec<f64>, cfg: PlasticityConfig) -> Self {
        Self {
            cfg,
            synapses: resources.into_iter().map(SynapseState::with_resource).collect(),
            stability: 0.0,
            tss: TssTracker::default(),
            current_step: 0,
            frozen: false,
            stats: DetectorStats::default(),
        }
    }

    pub fn config(&self) -> &PlasticityConfig {
        &self.cfg
    }

    pub fn channels(&self) -> usize {
        self.synapses.len()
    }

    pub fn synapses(&self) -> &[SynapseState] {
        &self.synapses
    }

    pub fn resources(&self) -> Vec<f64> {
        self.synapses.iter().map(|s| s.resource).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.synapses.iter().map(|s| self.cfg.weight_of(s.resource)).collect()
    }

    pub fn stability(&self) -> f64 {
        self.stability
    }

    pub fn set_stability(&mut self, s: f64) {
        self.stability = s;
    }

    pub fn tss(&self) -> &TssTracker {
        &self.tss
    }

    pub fn current_step(&self) -> u64 {
        self.current_step
    }

    pub fn stats(&self) -> &DetectorStats {
        &self.stats
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Freezing forces both plasticity rates to zero and suspends stability
    /// updates. Spike bookkeeping continues.
    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// Would the neuron fire on this frame? Does not touch state.
    pub fn integrate(&self, frame: &InputFrame) -> Result<bool> {
        self.check_len(frame)?;
        let sum: f64 = frame
            .active()
            .map(|i| self.cfg.weight_of(self.synapses[i].resource))
            .sum();
        Ok(sum > self.cfg.threshold())
    }

    /// Advances one step and reports whether the neuron fired.
    pub fn tick(&mut self, frame: &InputFrame) -> Result<bool> {
        self.step(frame).map(|o| o.fired)
    }

    pub fn step(&mut self, frame: &InputFrame) -> Result<StepOutcome> {
        self.check_len(frame)?;
        let t = self.current_step;
        let (d_h, d_d) = self.rates();
        let mut out = StepOutcome::default();

        for i in frame.active() {
            self.synapses[i].last_presyn_spike_step = Some(t);
        }

        out.fired = self.integrate(frame)?;

        out.tss = self.tss.observe(t, out.fired, u64::from(self.cfg.isi_max()));
        if out.tss.closed.is_some() {
            for syn in &mut self.synapses {
                syn.depressed_in_current_tss = false;
                syn.pending_depression_step = None;
            }
        }
        if out.fired {
            self.stats.fire_count += 1;
            if out.tss.extended_from.is_some() {
                for i in 0..self.synapses.len() {
                    if self.synapses[i].pending_depression_step.take().is_some() {
                        out.depressions += self.depress(i, d_h) as u32;
                    }
                }
            }
            for i in frame.active() {
                out.depressions += self.depress(i, d_h) as u32;
            }
        } else if self.tss.is_active() {
            for i in frame.active() {
                let syn = &mut self.synapses[i];
                if !syn.depressed_in_current_tss {
                    syn.pending_depression_step = Some(t);
                }
            }
        }

        if frame.dopamine {
            let (n, ds) = self.dopamine_effects(t, d_d);
            out.potentiations = n;
            out.stability_delta += ds;
        }
        if out.tss.onset {
            self.stats.tss_count += 1;
            out.stability_delta -= self.cfg.d_s;
        }
        if !self.frozen {
            self.stability += out.stability_delta;
        } else {
            out.stability_delta = 0.0;
        }

        self.current_step += 1;
        Ok(out)
    }

    /// Dopamine potentiation plus stability adjustment at the current step,
    /// applied immediately. [`Detector::step`] does the same thing for frames
    /// carrying a dopamine spike.
    pub fn apply_dopamine(&mut self) -> u32 {
        let (_, d_d) = self.rates();
        let (n, ds) = self.dopamine_effects(self.current_step, d_d);
        if !self.frozen {
            self.stability += ds;
        }
        n
    }

    fn rates(&self) -> (f64, f64) {
        if self.frozen {
            (0.0, 0.0)
        } else {
            effective_rates(self.stability, &self.cfg)
        }
    }

    fn dopamine_effects(&mut self, t: u64, d_d: f64) -> (u32, f64) {
        self.stats.dopamine_count += 1;
        let from = t.saturating_sub(u64::from(self.cfg.t_p));
        let mut n = 0;
        for i in 0..self.synapses.len() {
            match self.synapses[i].last_presyn_spike_step {
                Some(s) if s >= from && s <= t => {
                    self.adjust(i, d_d);
                    n += 1;
                }
                _ => {}
            }
        }
        let since_onset = self.tss.onset_step.map(|onset| t - onset);
        let factor = dopamine_stability_factor(since_onset, u64::from(self.cfg.isi_max()));
        (n, self.cfg.d_s * factor)
    }

    fn depress(&mut self, i: usize, d_h: f64) -> bool {
        let syn = &mut self.synapses[i];
        syn.pending_depression_step = None;
        if syn.depressed_in_current_tss {
            return false;
        }
        syn.depressed_in_current_tss = true;
        self.adjust(i, -d_h);
        true
    }

    fn adjust(&mut self, i: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        let syn = &mut self.synapses[i];
        let before = self.cfg.weight_of(syn.resource);
        syn.resource += delta;
        let after = self.cfg.weight_of(syn.resource);
        self.stats.total_abs_weight_change += (after - before).abs();
    }

    fn check_len(&self, frame: &InputFrame) -> Result<()> {
        if frame.len() != self.synapses.len() {
            return Err(Error::ChannelMismatch {
                expected: self.synapses.len(),
                got: frame.len(),
            });
        }
        Ok(())
    }

    /// Writes the full detector state as a text snapshot. Floats are printed
    /// in shortest round-trip form, so reading it back restores identical bits.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let mut s = String::new();
        let opt = |v: Option<u64>| v.map_or("-".to_string(), |x| x.to_string());
        writeln!(s, "# causal-detector snapshot").unwrap();
        writeln!(s, "version = {SNAPSHOT_VERSION}").unwrap();
        writeln!(s, "channels = {}", self.synapses.len()).unwrap();
        writeln!(s, "d_bar = {:?}", self.cfg.d_h_bar()).unwrap();
        writeln!(s, "w_min = {:?}", self.cfg.w_min).unwrap();
        writeln!(s, "w_max = {:?}", self.cfg.w_max).unwrap();
        writeln!(s, "d_s = {:?}", self.cfg.d_s).unwrap();
        writeln!(s, "t_p = {}", self.cfg.t_p).unwrap();
        writeln!(s, "step = {}", self.current_step).unwrap();
        writeln!(s, "stability = {:?}", self.stability).unwrap();
        writeln!(s, "tss_active = {}", self.tss.is_active()).unwrap();
        writeln!(s, "tss_onset = {}", opt(self.tss.onset_step)).unwrap();
        writeln!(s, "tss_last_post = {}", opt(self.tss.last_post_spike_step)).unwrap();
        writeln!(s, "fire_count = {}", self.stats.fire_count).unwrap();
        writeln!(s, "tss_count = {}", self.stats.tss_count).unwrap();
        writeln!(s, "dopamine_count = {}", self.stats.dopamine_count).unwrap();
        writeln!(s, "total_abs_dw = {:?}", self.stats.total_abs_weight_change).unwrap();
        writeln!(s, "# synapse index resource last_presyn depressed pending").unwrap();
        for (i, syn) in self.synapses.iter().enumerate() {
            writeln!(
                s,
                "syn {i} {:?} {} {} {}",
                syn.resource,
                opt(syn.last_presyn_spike_step),
                u8::from(syn.depressed_in_current_tss),
                opt(syn.pending_depression_step)
            )
            .unwrap();
        }
        out.write_all(s.as_bytes())?;
        Ok(())
    }

    pub fn read_snapshot<R: Read>(input: R) -> Result<Self> {
        let mut kv = std::collections::HashMap::new();
        let mut syns = Vec::new();
        for line in BufReader::new(input).lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("syn ") {
                let f: Vec<&str> = rest.split_whitespace().collect();
                if f.len() != 5 {
                    return Err(Error::Format(format!("bad synapse line: {line}")));
                }
                let idx: usize = parse(f[0])?;
                if idx != syns.len() {
                    return Err(Error::Format(format!("synapse {idx} out of order")));
                }
                syns.push(SynapseState {
                    resource: parse(f[1])?,
                    last_presyn_spike_step: parse_opt(f[2])?,
                    depressed_in_current_tss: f[3] == "1",
                    pending_depression_step: parse_opt(f[4])?,
                });
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("expected key = value: {line}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("snapshot missing `{k}`")))
        };
        let version: u32 = parse(get("version")?)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Format(format!("unsupported snapshot version {version}")));
        }
        let channels: usize = parse(get("channels")?)?;
        if channels != syns.len() {
            return Err(Error::Format(format!(
                "header says {channels} channels, found {} synapse lines",
                syns.len()
            )));
        }
        let cfg = PlasticityConfig::new(
            parse(get("d_bar")?)?,
            parse(get("w_min")?)?,
            parse(get("w_max")?)?,
            parse(get("d_s")?)?,
            parse(get("t_p")?)?,
        )?;
        let active: bool = parse(get("tss_active")?)?;
        let tss = TssTracker {
            phase: if active { TssPhase::Active } else { TssPhase::Inactive },
            onset_step: parse_opt(get("tss_onset")?)?,
            last_post_spike_step: parse_opt(get("tss_last_post")?)?,
        };
        if active && (tss.onset_step.is_none() || tss.last_post_spike_step.is_none()) {
            return Err(Error::Format("active TSS without onset/last spike".into()));
        }
        Ok(Self {
            cfg,
            synapses: syns,
            stability: parse(get("stability")?)?,
            tss,
            current_step: parse(get("step")?)?,
            frozen: false,
            stats: DetectorStats {
                fire_count: parse(get("fire_count")?)?,
                tss_count: parse(get("tss_count")?)?,
                dopamine_count: parse(get("dopamine_count")?)?,
                total_abs_weight_change: parse(get("total_abs_dw")?)?,
            },
        })
    }
}

const SNAPSHOT_VERSION: u32 = 1;

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Format(format!("cannot parse `{s}`")))
}

fn parse_opt(s: &str) -> Result<Option<u64>> {
    if s == "-" {
        Ok(None)
    } else {
        parse(s).map(Some)
    }
}
