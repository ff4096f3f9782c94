//! Genetic search over the four free plasticity constants, maximizing R on a
//! fixed recorded episode.
//!
//! Selection is a size-3 tournament, crossover is uniform per gene, and a
//! mutation re-samples one gene log-uniformly on its range. Every random draw
//! comes from a stream keyed by `(seed, generation, index)`, so the order in
//! which fitness evaluations finish cannot change the result.

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::windowed_r;
use crate::neuron::Detector;
use crate::plasticity::PlasticityConfig;
use crate::record::EpisodeRecord;

pub const TOURNAMENT_SIZE: usize = 3;
pub const GENES: usize = 4;

/// Candidate constants. `neg_w_min` is `-w_min`, so every gene is positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Genome {
    pub d_h_bar: f64,
    pub neg_w_min: f64,
    pub w_max: f64,
    pub d_s: f64,
}

impl Genome {
    pub fn genes(&self) -> [f64; GENES] {
        [self.d_h_bar, self.neg_w_min, self.w_max, self.d_s]
    }

    pub fn from_genes(g: [f64; GENES]) -> Self {
        Self {
            d_h_bar: g[0],
            neg_w_min: g[1],
            w_max: g[2],
            d_s: g[3],
        }
    }

    pub fn to_config(&self, t_p: u32) -> Result<PlasticityConfig> {
        PlasticityConfig::new(self.d_h_bar, -self.neg_w_min, self.w_max, self.d_s, t_p)
    }

    pub fn from_config(cfg: &PlasticityConfig) -> Self {
        Self {
            d_h_bar: cfg.d_h_bar(),
            neg_w_min: -cfg.w_min,
            w_max: cfg.w_max,
            d_s: cfg.d_s,
        }
    }
}

/// Closed search interval of each gene, sampled log-uniformly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneRanges {
    pub d_h_bar: (f64, f64),
    pub neg_w_min: (f64, f64),
    pub w_max: (f64, f64),
    pub d_s: (f64, f64),
}

impl Default for GeneRanges {
    fn default() -> Self {
        Self {
            d_h_bar: (0.03, 1.0),
            neg_w_min: (0.003, 1.0),
            w_max: (0.03, 1.0),
            d_s: (0.003, 3.0),
        }
    }
}

impl GeneRanges {
    pub fn as_array(&self) -> [(f64, f64); GENES] {
        [self.d_h_bar, self.neg_w_min, self.w_max, self.d_s]
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in self.as_array() {
            if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
                return Err(Error::Config(format!("bad gene range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn contains(&self, g: &Genome) -> bool {
        self.as_array()
            .iter()
            .zip(g.genes())
            .all(|(&(lo, hi), v)| lo <= v && v <= hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaConfig {
    pub population_size: usize,
    pub elitism_fraction: f64,
    /// Probability that a child gets one gene re-sampled.
    pub mutation_prob: f64,
    /// Stop after this many successive generations without a new best.
    pub stagnation_generations: u32,
    /// Hard cap on generations evaluated, including generation 0.
    pub max_generations: Option<u32>,
    /// Fitness is R over the last `eval_window_steps` of the record.
    pub eval_window_steps: u64,
    pub t_p: u32,
    pub ranges: GeneRanges,
    pub seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            population_size: 300,
            elitism_fraction: 0.1,
            mutation_prob: 0.5,
            stagnation_generations: 3,
            max_generations: None,
            eval_window_steps: 600_000,
            t_p: 100,
            ranges: GeneRanges::default(),
            seed: 1,
        }
    }
}

impl GaConfig {
    /// Small settings that finish in minutes on one core.
    pub fn desk() -> Self {
        Self {
            population_size: 24,
            stagnation_generations: 10,
            max_generations: Some(10),
            eval_window_steps: 300_000,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.population_size < 2 {
            return bad(format!("population size {} < 2", self.population_size));
        }
        if !(self.elitism_fraction > 0.0 && self.elitism_fraction <= 1.0) {
            return bad(format!("elitism fraction {} not in (0, 1]", self.elitism_fraction));
        }
        if !(0.0..=1.0).contains(&self.mutation_prob) {
            return bad(format!("mutation probability {} not in [0, 1]", self.mutation_prob));
        }
        if self.stagnation_generations == 0 {
            return bad("stagnation generations must be positive".into());
        }
        if self.max_generations == Some(0) {
            return bad("max generations must be positive".into());
        }
        if self.eval_window_steps == 0 || self.t_p == 0 {
            return bad("evaluation window and T_P must be positive".into());
        }
        self.ranges.validate()
    }

    pub fn elite_count(&self) -> usize {
        ((self.elitism_fraction * self.population_size as f64).ceil() as usize).min(self.population_size)
    }
}

/// Random stream for one `(generation, index)` slot.
pub fn slot_rng(seed: u64, generation: u32, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((u64::from(generation) << 32) | index as u64);
    rng
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        return lo;
    }
    rng.gen_range(lo.ln()..=hi.ln()).exp().clamp(lo, hi)
}

pub fn sample_genome<R: Rng + ?Sized>(rng: &mut R, ranges: &GeneRanges) -> Genome {
    let r = ranges.as_array();
    Genome::from_genes([
        log_uniform(rng, r[0]),
        log_uniform(rng, r[1]),
        log_uniform(rng, r[2]),
        log_uniform(rng, r[3]),
    ])
}

/// Fire steps of a fresh detector replayed over the whole record.
pub fn replay_fire_steps(cfg: PlasticityConfig, record: &EpisodeRecord) -> Result<Vec<u64>> {
    let mut det = Detector::new(record.channels(), cfg)?;
    let mut fires = Vec::new();
    let mut frames = record.frames();
    while let Some((t, frame)) = frames.next_frame() {
        if det.tick(frame)? {
            fires.push(t);
        }
    }
    Ok(fires)
}

/// R over the last `window` steps after replaying the full record through a
/// fresh detector built from `genome`.
pub fn evaluate(genome: &Genome, record: &EpisodeRecord, window: u64, t_p: u32) -> Result<f64> {
    let end = record.duration_steps();
    if end < window {
        return Err(Error::RecordTooShort {
            have: end,
            need: window,
        });
    }
    let fires = replay_fire_steps(genome.to_config(t_p)?, record)?;
    windowed_r(&fires, &record.reward_steps(), u64::from(t_p), end - window, end)
}

fn tournament<R: Rng + ?Sized>(rng: &mut R, fitness: &[f64]) -> usize {
    let mut best = rng.gen_range(0..fitness.len());
    for _ in 1..TOURNAMENT_SIZE {
        let c = rng.gen_range(0..fitness.len());
        if fitness[c] > fitness[best] {
            best = c;
        }
    }
    best
}

/// Indices sorted by fitness, best first; ties keep population order.
pub fn ranking(fitness: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..fitness.len()).collect();
    idx.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));
    idx
}

/// Next population: elites copied, the rest bred from tournament winners.
/// `generation` is the index of the generation being produced.
pub fn evolve(population: &[Genome], fitness: &[f64], generation: u32, cfg: &GaConfig) -> Result<Vec<Genome>> {
    if population.len() != fitness.len() || population.is_empty() {
        return Err(Error::Config(format!(
            "{} genomes but {} fitness values",
            population.len(),
            fitness.len()
        )));
    }
    let n = population.len();
    let elites = ((cfg.elitism_fraction * n as f64).ceil() as usize).min(n);
    let mut next: Vec<Genome> = ranking(fitness)[..elites].iter().map(|&i| population[i]).collect();
    let ranges = cfg.ranges.as_array();
    for idx in elites..n {
        let mut rng = slot_rng(cfg.seed, generation, idx);
        let a = population[tournament(&mut rng, fitness)].genes();
        let b = population[tournament(&mut rng, fitness)].genes();
        let mut child = [0.0; GENES];
        for g in 0..GENES {
            child[g] = if rng.gen_bool(0.5) { a[g] } else { b[g] };
        }
        if rng.gen_bool(cfg.mutation_prob) {
            let g = rng.gen_range(0..GENES);
            child[g] = log_uniform(&mut rng, ranges[g]);
        }
        next.push(Genome::from_genes(child));
    }
    Ok(next)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRecord {
    pub generation: u32,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best: Genome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaOutcome {
    pub best: Genome,
    pub best_fitness: f64,
    pub history: Vec<GenerationRecord>,
}

impl GaOutcome {
    pub fn write_history_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "generation,best_r,mean_r,d_h_bar,w_min,w_max,d_s")?;
        for h in &self.history {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                h.generation,
                h.best_fitness,
                h.mean_fitness,
                h.best.d_h_bar,
                -h.best.neg_w_min,
                h.best.w_max,
                h.best.d_s
            )?;
        }
        Ok(())
    }
}

/// Evaluates a population in parallel; results are in population order.
pub fn evaluate_population(population: &[Genome], record: &EpisodeRecord, cfg: &GaConfig) -> Result<Vec<f64>> {
    population
        .par_iter()
        .map(|g| evaluate(g, record, cfg.eval_window_steps, cfg.t_p))
        .collect()
}

/// Runs generations until the best fitness stalls for
/// `stagnation_generations` or `max_generations` is reached. `progress` is
/// called after each generation is scored.
pub fn run_ga_with<F: FnMut(&GenerationRecord)>(
    cfg: &GaConfig,
    record: &EpisodeRecord,
    mut progress: F,
) -> Result<GaOutcome> {
    cfg.validate()?;
    if record.duration_steps() < cfg.eval_window_steps {
        return Err(Error::RecordTooShort {
            have: record.duration_steps(),
            need: cfg.eval_window_steps,
        });
    }
    let mut population: Vec<Genome> = (0..cfg.population_size)
        .map(|i| sample_genome(&mut slot_rng(cfg.seed, 0, i), &cfg.ranges))
        .collect();
    let mut history: Vec<GenerationRecord> = Vec::new();
    let mut stalled = 0;
    let mut generation = 0u32;
    loop {
        let fitness = evaluate_population(&population, record, cfg)?;
        let top = ranking(&fitness)[0];
        let rec = GenerationRecord {
            generation,
            best_fitness: fitness[top],
            mean_fitness: fitness.iter().sum::<f64>() / fitness.len() as f64,
            best: population[top],
        };
        progress(&rec);
        if let Some(prev) = history.last() {
            if rec.best_fitness > prev.best_fitness {
                stalled = 0;
            } else {
                stalled += 1;
            }
        }
        history.push(rec);
        let done_by_cap = cfg.max_generations.is_some_and(|m| generation + 1 >= m);
        if stalled >= cfg.stagnation_generations || done_by_cap {
            break;
        }
        generation += 1;
        population = evolve(&population, &fitness, generation, cfg)?;
    }
    let last = history.last().copied().expect("at least one generation");
    Ok(GaOutcome {
        best: last.best,
        best_fitness: last.best_fitness,
        history,
    })
}

pub fn run_ga(cfg: &GaConfig, record: &EpisodeRecord) -> Result<GaOutcome> {
    run_ga_with(cfg, record, |_| {})
}
