mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use causal_detector::metrics::{prediction_periods, target_periods, windowed_r, IntervalSet};
use causal_detector::neuron::{dopamine_stability_factor, tss_segments, Detector, InputFrame};
use causal_detector::plasticity::{effective_rates, resource_for_weight, weight_of, PlasticityConfig};
use causal_detector::pong::{EnvEvent, EventKind};
use causal_detector::record::{read_varint, write_varint, EpisodeRecord};

use common::{brute_force_r, online_segments, random_train, weight_oracle};

fn plasticity() -> impl Strategy<Value = PlasticityConfig> {
    (0.01f64..1.0, 0.001f64..1.0, 0.01f64..1.0, 0.001f64..3.0, 1u32..200)
        .prop_map(|(d, nw, wx, ds, tp)| PlasticityConfig::new(d, -nw, wx, ds, tp).unwrap())
}

fn sorted_unique(v: Vec<u64>) -> Vec<u64> {
    let mut v = v;
    v.sort_unstable();
    v.dedup();
    v
}

proptest! {
    #[test]
    fn weight_map_matches_definition(cfg in plasticity(), w in -100.0f64..1e6) {
        let got = weight_of(w, &cfg);
        prop_assert!((got - weight_oracle(w, cfg.w_min, cfg.w_max)).abs() < 1e-12);
        prop_assert!(got >= cfg.w_min && got < cfg.w_max);
        if w <= 0.0 {
            prop_assert_eq!(got, cfg.w_min);
        }
    }

    #[test]
    fn weight_map_is_monotone(cfg in plasticity(), a in -10.0f64..1e4, b in -10.0f64..1e4) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(weight_of(lo, &cfg) <= weight_of(hi, &cfg));
    }

    #[test]
    fn inverse_round_trips(cfg in plasticity(), frac in 0.0f64..0.999) {
        let target = cfg.w_min + frac * (cfg.w_max - cfg.w_min);
        let w = resource_for_weight(target, &cfg).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert!((weight_of(w, &cfg) - target).abs() < 1e-9);
    }

    #[test]
    fn rates_clamp_and_halve(cfg in plasticity(), k in 0u32..4000, neg in -50.0f64..=0.0) {
        let (h0, d0) = effective_rates(neg, &cfg);
        prop_assert_eq!(h0, cfg.d_h_bar());
        prop_assert_eq!(d0, cfg.d_d_bar());
        // dyadic stabilities keep s + 1 exactly representable
        let s = f64::from(k) / 256.0;
        let (h, d) = effective_rates(s, &cfg);
        let (h1, d1) = effective_rates(s + 1.0, &cfg);
        prop_assert_eq!(h, d);
        prop_assert_eq!(h1, h / 2.0);
        prop_assert_eq!(d1, d / 2.0);
        prop_assert!(h <= cfg.d_h_bar());
    }

    #[test]
    fn online_tss_matches_offline(seed in any::<u64>(), density in 0.001f64..0.5, isi in 1u64..150) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let train = random_train(&mut rng, 3_000, density);
        prop_assert_eq!(online_segments(&train, isi, 3_000), tss_segments(&train, isi));
    }

    #[test]
    fn tss_segments_are_separated(train in prop::collection::vec(0u64..5_000, 0..200), isi in 1u64..100) {
        let train = sorted_unique(train);
        let segs = tss_segments(&train, isi);
        for w in segs.windows(2) {
            prop_assert!(w[1].0 - w[0].1 > isi);
        }
        let covered: usize = segs.iter().map(|&(a, b)| train.iter().filter(|&&t| a <= t && t <= b).count()).sum();
        prop_assert_eq!(covered, train.len());
    }

    #[test]
    fn r_matches_brute_force(
        fires in prop::collection::vec(0u64..1_500, 0..40),
        rewards in prop::collection::vec(0u64..1_500, 0..12),
        t_p in 1u64..150,
        a in 0u64..1_500,
        b in 0u64..1_500,
    ) {
        let (fires, rewards) = (sorted_unique(fires), sorted_unique(rewards));
        let (start, end) = (a.min(b), a.max(b) + 1);
        let got = windowed_r(&fires, &rewards, t_p, start, end).ok();
        prop_assert_eq!(got, brute_force_r(&fires, &rewards, t_p, start, end));
    }

    #[test]
    fn interval_measures(a in prop::collection::vec((0u64..300, 0u64..40), 0..20), b in prop::collection::vec((0u64..300, 0u64..40), 0..20)) {
        let sa = IntervalSet::from_intervals(a.iter().map(|&(s, l)| (s, s + l)));
        let sb = IntervalSet::from_intervals(b.iter().map(|&(s, l)| (s, s + l)));
        let (mut inter, mut sym) = (0, 0);
        for t in 0..400 {
            let (x, y) = (sa.contains(t), sb.contains(t));
            inter += u64::from(x && y);
            sym += u64::from(x != y);
        }
        prop_assert_eq!(sa.intersection_measure(&sb), inter);
        prop_assert_eq!(sa.symmetric_difference_measure(&sb), sym);
        for w in sa.spans().windows(2) {
            prop_assert!(w[0].1 < w[1].0);
        }
    }

    #[test]
    fn prediction_periods_stop_at_events(fires in prop::collection::vec(0u64..1_000, 0..30), rewards in prop::collection::vec(0u64..1_000, 1..10), t_p in 1u64..200) {
        let (fires, rewards) = (sorted_unique(fires), sorted_unique(rewards));
        let p = prediction_periods(&fires, &rewards, t_p);
        let t = target_periods(&rewards, t_p);
        for &r in &rewards {
            prop_assert!(!p.contains(r));
            prop_assert!(r == 0 || t.contains(r - 1));
        }
    }

    #[test]
    fn varints_round_trip(v in any::<u64>()) {
        let mut buf = Vec::new();
        write_varint(&mut buf, v);
        prop_assert_eq!(read_varint(&mut buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn records_round_trip(
        steps in prop::collection::vec(prop::collection::btree_set(0usize..40, 0..6), 1..300),
        events in prop::collection::btree_map(0u64..300, any::<bool>(), 0..10),
        seed in any::<u64>(),
    ) {
        let mut b = EpisodeRecord::builder(40, seed);
        for s in &steps {
            b.push_step(&s.iter().copied().collect::<Vec<_>>());
        }
        for (&step, &reward) in events.range(..steps.len() as u64) {
            let kind = if reward { EventKind::Reward } else { EventKind::Punishment };
            b.push_event(EnvEvent { kind, step }).unwrap();
        }
        let rec = b.finish().unwrap();
        let mut bytes = Vec::new();
        rec.write_to(&mut bytes).unwrap();
        let back = EpisodeRecord::read_from(bytes.as_slice()).unwrap();
        prop_assert_eq!(&back, &rec);
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        prop_assert_eq!(again, bytes);
    }
}

/// Random frames over `channels` inputs with sparse dopamine.
fn random_frames(seed: u64, channels: usize, steps: usize, density: f64, dopamine: f64) -> Vec<InputFrame> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..steps)
        .map(|_| {
            let active: Vec<usize> = (0..channels).filter(|_| rng.gen_bool(density)).collect();
            InputFrame::from_active(channels, &active, rng.gen_bool(dopamine))
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Replays random input and reconstructs every resource change from the
    /// rules: potentiation of recently active synapses on dopamine, and at
    /// most one depression per synapse per TSS.
    #[test]
    fn detector_bookkeeping(seed in any::<u64>(), density in 0.05f64..0.6, dopamine in 0.0f64..0.05, init in 0.0f64..3.0) {
        let channels = 6;
        let cfg = PlasticityConfig::new(0.1, -0.3, 0.6, 0.2, 20).unwrap();
        let mut det = Detector::with_resources(vec![init; channels], cfg);
        let frames = random_frames(seed, channels, 1_500, density, dopamine);
        let mut last_spike: Vec<Option<u64>> = vec![None; channels];
        let mut depressions_in_tss = vec![0u32; channels];
        let mut onset: Option<u64> = None;
        let mut tss_count = 0u64;
        for (t, frame) in frames.iter().enumerate() {
            let t = t as u64;
            let before = det.resources();
            let s0 = det.stability();
            let (d_h, d_d) = effective_rates(s0, &cfg);
            for c in frame.active() {
                last_spike[c] = Some(t);
            }
            let out = det.step(frame).unwrap();
            if out.tss.onset {
                depressions_in_tss.iter_mut().for_each(|d| *d = 0);
                onset = Some(t);
                tss_count += 1;
            }
            let after = det.resources();
            for c in 0..channels {
                let eligible = frame.dopamine && last_spike[c].is_some_and(|s| t - s <= u64::from(cfg.t_p));
                let pot = if eligible { d_d } else { 0.0 };
                let dep = before[c] + pot - after[c];
                if dep.abs() > 1e-12 {
                    prop_assert!((dep - d_h).abs() < 1e-12, "step {t} synapse {c}: change {dep}");
                    depressions_in_tss[c] += 1;
                    prop_assert!(depressions_in_tss[c] <= 1, "synapse {c} depressed twice in one TSS");
                }
            }
            // stability: rule 1 at onset, rule 2 on dopamine
            let mut expected = 0.0;
            if frame.dopamine {
                let since = onset.map(|o| t - o);
                expected += cfg.d_s * dopamine_stability_factor(since, u64::from(cfg.t_p));
            }
            if out.tss.onset {
                expected -= cfg.d_s;
            }
            prop_assert!((out.stability_delta - expected).abs() < 1e-12);
            prop_assert!((det.stability() - s0 - expected).abs() < 1e-9);
            if !det.tss().is_active() {
                prop_assert!(det.synapses().iter().all(|s| !s.depressed_in_current_tss));
            }
        }
        prop_assert_eq!(det.stats().tss_count, tss_count);
    }

    #[test]
    fn replay_is_deterministic_and_snapshots_resume(seed in any::<u64>(), cut in 1usize..999) {
        let cfg = PlasticityConfig::new(0.1, -0.3, 0.6, 0.2, 20).unwrap();
        let frames = random_frames(seed, 5, 1_000, 0.3, 0.02);
        let mut a = Detector::with_resources(vec![1.5; 5], cfg);
        let mut b = a.clone();
        for f in &frames {
            a.tick(f).unwrap();
            b.tick(f).unwrap();
        }
        prop_assert_eq!(&a, &b);

        let mut head = Detector::with_resources(vec![1.5; 5], cfg);
        for f in &frames[..cut] {
            head.tick(f).unwrap();
        }
        let mut buf = Vec::new();
        head.write_snapshot(&mut buf).unwrap();
        let mut resumed = Detector::read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(&resumed, &head);
        for f in &frames[cut..] {
            resumed.tick(f).unwrap();
        }
        prop_assert_eq!(resumed, a);
    }

    #[test]
    fn frozen_detector_never_changes(seed in any::<u64>()) {
        let cfg = PlasticityConfig::new(0.1, -0.3, 0.6, 0.2, 20).unwrap();
        let mut det = Detector::with_resources(vec![1.5; 5], cfg);
        det.set_frozen(true);
        let (r0, s0) = (det.resources(), det.stability());
        for f in &random_frames(seed, 5, 500, 0.4, 0.05) {
            det.tick(f).unwrap();
        }
        prop_assert_eq!(det.resources(), r0);
        prop_assert_eq!(det.stability(), s0);
    }
}
