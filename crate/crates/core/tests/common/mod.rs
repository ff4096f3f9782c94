//! Reference implementations used as oracles by the integration tests.

#![allow(dead_code)]

use rand::Rng;

use causal_detector::neuron::TssTracker;

/// Weight map written directly from its definition.
pub fn weight_oracle(resource: f64, w_min: f64, w_max: f64) -> f64 {
    let span = w_max - w_min;
    let w = resource.max(0.0);
    w_min + span * w / (span + w)
}

/// Random strictly increasing spike train over `[0, len)` with per-step
/// probability `density`.
pub fn random_train<R: Rng>(rng: &mut R, len: u64, density: f64) -> Vec<u64> {
    (0..len).filter(|_| rng.gen_bool(density)).collect()
}

/// Segments produced by feeding every step of `[0, horizon)` to the online
/// tracker, including the sequence still open at the end.
pub fn online_segments(train: &[u64], isi_max: u64, horizon: u64) -> Vec<(u64, u64)> {
    let mut tracker = TssTracker::default();
    let mut out = Vec::new();
    let mut next = train.iter().peekable();
    for t in 0..horizon {
        let fired = next.peek().is_some_and(|&&s| s == t);
        if fired {
            next.next();
        }
        if let Some(seg) = tracker.observe(t, fired, isi_max).closed {
            out.push(seg);
        }
    }
    if let Some(seg) = tracker.open_segment() {
        out.push(seg);
    }
    out
}

/// Per-step membership of the target and prediction periods over
/// `[start, end)`, computed one step at a time.
pub fn brute_force_r(fires: &[u64], rewards: &[u64], t_p: u64, start: u64, end: u64) -> Option<f64> {
    let rewards: Vec<u64> = rewards.iter().copied().filter(|&r| r >= start && r < end).collect();
    let fires: Vec<u64> = fires.iter().copied().filter(|&f| f >= start && f < end).collect();
    let len = (end - start) as usize;
    let mut target = vec![false; len];
    let mut predicted = vec![false; len];
    for &r in &rewards {
        for t in r.saturating_sub(t_p).max(start)..r {
            target[(t - start) as usize] = true;
        }
    }
    for &f in &fires {
        // the period runs until t_p elapses or the next event arrives
        let mut t = f;
        while t < f + t_p && t < end && !rewards.contains(&t) {
            predicted[(t - start) as usize] = true;
            t += 1;
        }
    }
    let t_tar = target.iter().filter(|&&b| b).count();
    if t_tar == 0 {
        return None;
    }
    let t_err = target.iter().zip(&predicted).filter(|(a, b)| a != b).count();
    Some(1.0 - t_err as f64 / t_tar as f64)
}
