//! Replaying records through a detector: training runs, frozen evaluation and
//! the per-window time series behind the learning-dynamics plots.

use std::io::Write;

use crate::encoder::Section;
use crate::error::{Error, Result};
use crate::metrics::windowed_r;
use crate::neuron::Detector;
use crate::record::EpisodeRecord;

/// Steps per second at the 1 ms clock.
pub const STEPS_PER_SECOND: u64 = 1000;
pub const DEFAULT_REPORT_WINDOW: u64 = 10 * STEPS_PER_SECOND;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Length of one time-series window, steps.
    pub report_window: u64,
    /// Evaluation window `[start, end)` for the R score.
    pub eval_window: Option<(u64, u64)>,
    /// Freeze plasticity from this step on.
    pub freeze_from: Option<u64>,
    /// Stop after this many steps (the rest of the record is left unread).
    pub stop_at: Option<u64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            report_window: DEFAULT_REPORT_WINDOW,
            eval_window: None,
            freeze_from: None,
            stop_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub start_step: u64,
    pub end_step: u64,
    pub fires: u64,
    pub rewards: u64,
    /// Postsynaptic spikes per second over the window.
    pub firing_hz: f64,
    /// Stability at the end of the window.
    pub stability: f64,
    /// Sum of `|Δw|` over all synapse updates in the window.
    pub abs_weight_change: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub fire_steps: Vec<u64>,
    pub reward_count: u64,
    /// R over the evaluation window, when one was requested and it holds
    /// at least one target period.
    pub r_eval: Option<f64>,
    pub series: Vec<SeriesRow>,
}

impl RunReport {
    pub fn fire_count(&self) -> u64 {
        self.fire_steps.len() as u64
    }

    pub fn write_series_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "window_start_s,window_end_s,fires,rewards,firing_hz,stability,abs_dw"
        )?;
        for r in &self.series {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.start_step as f64 / STEPS_PER_SECOND as f64,
                r.end_step as f64 / STEPS_PER_SECOND as f64,
                r.fires,
                r.rewards,
                r.firing_hz,
                r.stability,
                r.abs_weight_change
            )?;
        }
        Ok(())
    }
}

/// Replays `record` from the detector's current step onward.
pub fn train(detector: &mut Detector, record: &EpisodeRecord, opts: &TrainOptions) -> Result<RunReport> {
    if detector.channels() != record.channels() {
        return Err(Error::ChannelMismatch {
            expected: detector.channels(),
            got: record.channels(),
        });
    }
    if opts.report_window == 0 {
        return Err(Error::Config("report window must be positive".into()));
    }
    let end = opts
        .stop_at
        .unwrap_or(record.duration_steps())
        .min(record.duration_steps());
    let mut fire_steps = Vec::new();
    let mut series = Vec::new();
    let mut frames = record.frames_from(detector.current_step());
    let mut win_start = detector.current_step();
    let mut win_fires = 0;
    let mut win_rewards = 0;
    let mut dw_at_start = detector.stats().total_abs_weight_change;

    while detector.current_step() < end {
        let Some((t, frame)) = frames.next_frame() else { break };
        if opts.freeze_from.is_some_and(|f| t >= f) && !detector.is_frozen() {
            detector.set_frozen(true);
        }
        if frame.dopamine {
            win_rewards += 1;
        }
        if detector.tick(frame)? {
            fire_steps.push(t);
            win_fires += 1;
        }
        let next = t + 1;
        if next - win_start == opts.report_window || next == end {
            let dw = detector.stats().total_abs_weight_change;
            let len = next - win_start;
            series.push(SeriesRow {
                start_step: win_start,
                end_step: next,
                fires: win_fires,
                rewards: win_rewards,
                firing_hz: win_fires as f64 * STEPS_PER_SECOND as f64 / len as f64,
                stability: detector.stability(),
                abs_weight_change: dw - dw_at_start,
            });
            win_start = next;
            win_fires = 0;
            win_rewards = 0;
            dw_at_start = dw;
        }
    }

    let rewards = record.reward_steps();
    let r_eval = match opts.eval_window {
        Some((s, e)) => match windowed_r(&fire_steps, &rewards, u64::from(detector.config().t_p), s, e) {
            Ok(r) => Some(r),
            Err(Error::EmptyTargets) => None,
            Err(e) => return Err(e),
        },
        None => None,
    };
    Ok(RunReport {
        fire_steps,
        reward_count: rewards.iter().filter(|&&r| r < end).count() as u64,
        r_eval,
        series,
    })
}

/// R of a detector with plasticity frozen over `[start, end)` of `record`.
/// Only the synaptic weights of `detector` matter; its clock and spike
/// history are not used.
pub fn evaluate_frozen(detector: &Detector, record: &EpisodeRecord, start: u64, end: u64) -> Result<f64> {
    let fires = frozen_fire_steps(detector, record, start, end)?;
    windowed_r(
        &fires,
        &record.reward_steps(),
        u64::from(detector.config().t_p),
        start,
        end,
    )
}

/// Detector spike steps over `[start, end)` with plasticity frozen.
pub fn frozen_fire_steps(detector: &Detector, record: &EpisodeRecord, start: u64, end: u64) -> Result<Vec<u64>> {
    if detector.channels() != record.channels() {
        return Err(Error::ChannelMismatch {
            expected: detector.channels(),
            got: record.channels(),
        });
    }
    if start >= end || end > record.duration_steps() {
        return Err(Error::Config(format!(
            "window [{start}, {end}) does not fit a record of {} steps",
            record.duration_steps()
        )));
    }
    let mut probe = detector.clone();
    probe.set_frozen(true);
    let mut out = Vec::new();
    let mut frames = record.frames_from(start);
    while let Some((t, frame)) = frames.next_frame() {
        if t >= end {
            break;
        }
        if probe.integrate(frame)? {
            out.push(t);
        }
    }
    Ok(out)
}

/// Final resources grouped by encoder section:
/// `section,index,channel,resource,weight`. Channels beyond the pong layout
/// are reported under section `other`.
pub fn write_resources_csv<W: Write>(detector: &Detector, mut out: W) -> Result<()> {
    writeln!(out, "section,index,channel,resource,weight")?;
    let weights = detector.weights();
    for (c, syn) in detector.synapses().iter().enumerate() {
        let (name, idx) = match Section::of_channel(c) {
            Some((s, i)) if detector.channels() == crate::encoder::CHANNELS => (s.name(), i),
            _ => ("other", c),
        };
        writeln!(out, "{name},{idx},{c},{},{}", syn.resource, weights[c])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plasticity::PlasticityConfig;
    use crate::pong::{EnvEvent, EventKind};

    fn causal_record() -> EpisodeRecord {
        // channels 0..3 co-fire every 500 steps, reward 100 steps later
        let mut b = EpisodeRecord::builder(6, 1);
        for t in 0..50_000u64 {
            if t % 500 == 200 {
                b.push_step(&[0, 1, 2]);
            } else if t % 37 == 0 {
                b.push_step(&[4]);
            } else {
                b.push_step(&[]);
            }
            if t % 500 == 300 {
                b.push_event(EnvEvent {
                    kind: EventKind::Reward,
                    step: t,
                })
                .unwrap();
            }
        }
        b.finish().unwrap()
    }

    #[test]
    fn series_windows_tile_the_run() {
        let rec = causal_record();
        let mut det = Detector::new(6, PlasticityConfig::pong_optimum()).unwrap();
        let opts = TrainOptions {
            report_window: 7_000,
            ..Default::default()
        };
        let rep = train(&mut det, &rec, &opts).unwrap();
        assert_eq!(rep.series.len(), 8);
        assert_eq!(rep.series[0].start_step, 0);
        assert_eq!(rep.series.last().unwrap().end_step, 50_000);
        let fires: u64 = rep.series.iter().map(|r| r.fires).sum();
        assert_eq!(fires, rep.fire_count());
        let rewards: u64 = rep.series.iter().map(|r| r.rewards).sum();
        assert_eq!(rewards, 100);
        let dw: f64 = rep.series.iter().map(|r| r.abs_weight_change).sum();
        assert!((dw - det.stats().total_abs_weight_change).abs() < 1e-9);
    }

    #[test]
    fn learns_a_clean_cause() {
        let rec = causal_record();
        let mut det = Detector::new(6, PlasticityConfig::pong_optimum()).unwrap();
        train(&mut det, &rec, &TrainOptions::default()).unwrap();
        let r = evaluate_frozen(&det, &rec, 40_000, 50_000).unwrap();
        assert_eq!(r, 1.0);
    }

    #[test]
    fn silent_detector_scores_zero() {
        let rec = causal_record();
        let det = Detector::new(6, PlasticityConfig::pong_optimum()).unwrap();
        assert_eq!(evaluate_frozen(&det, &rec, 0, 50_000).unwrap(), 0.0);
    }

    #[test]
    fn checkpoint_resume_matches_uninterrupted() {
        let rec = causal_record();
        let cfg = PlasticityConfig::pong_optimum();
        let mut full = Detector::new(6, cfg).unwrap();
        let all = train(&mut full, &rec, &TrainOptions::default()).unwrap();

        let mut first = Detector::new(6, cfg).unwrap();
        let opts = TrainOptions {
            stop_at: Some(23_456),
            ..Default::default()
        };
        let head = train(&mut first, &rec, &opts).unwrap();
        let mut buf = Vec::new();
        first.write_snapshot(&mut buf).unwrap();
        let mut resumed = Detector::read_snapshot(buf.as_slice()).unwrap();
        let tail = train(&mut resumed, &rec, &TrainOptions::default()).unwrap();

        assert_eq!(resumed, full);
        let joined: Vec<u64> = head.fire_steps.iter().chain(&tail.fire_steps).copied().collect();
        assert_eq!(joined, all.fire_steps);
    }

    #[test]
    fn mismatched_channels_rejected() {
        let rec = causal_record();
        let mut det = Detector::new(7, PlasticityConfig::pong_optimum()).unwrap();
        assert!(matches!(
            train(&mut det, &rec, &TrainOptions::default()),
            Err(Error::ChannelMismatch { .. })
        ));
        assert!(evaluate_frozen(&det, &rec, 0, 100).is_err());
    }
}
