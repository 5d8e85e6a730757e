//! Evolutionary policy search.
//!
//! Each generation evaluates the whole population, keeps the `top_k`
//! lowest-metric genomes as parents, and refills the population with
//! children built by uniform crossover of two random parents followed by
//! per-gene mutation. The best genome ever seen is tracked across
//! generations.

#[cfg(not(target_arch = "wasm32"))]
mod external;
mod surrogate;

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[cfg(not(target_arch = "wasm32"))]
pub use external::ExternalEvaluator;
pub use surrogate::SurrogateEvaluator;

use crate::metric::{pareto_scale_balance, MetricError, MetricValue, ScaleStats, DEFAULT_EPS};
use crate::policy::{decode_genome, GeneKind, Genome, Policy, GENOME_LEN};

#[derive(Debug)]
pub enum EvaluatorError {
    Io(std::io::Error),
    /// External command exited unsuccessfully.
    Failed { status: String, stderr: String },
    Timeout { seconds: f64 },
    /// Stats document missing, malformed or out of range.
    Stats(MetricError),
    Other(String),
}

impl fmt::Display for EvaluatorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Io(e) => write!(f, "evaluator i/o error: {e}"),
            Self::Failed { status, stderr } => {
                write!(f, "evaluator command failed ({status})")?;
                if !stderr.is_empty() {
                    write!(f, ": {stderr}")?;
                }
                Ok(())
            }
            Self::Timeout { seconds } => write!(f, "evaluator timed out after {seconds}s"),
            Self::Stats(e) => write!(f, "evaluator stats: {e}"),
            Self::Other(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for EvaluatorError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Self::Io(e) => Some(e),
            Self::Stats(e) => Some(e),
            _ => None,
        }
    }
}

impl From<std::io::Error> for EvaluatorError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e)
    }
}

impl From<MetricError> for EvaluatorError {
    fn from(e: MetricError) -> Self {
        Self::Stats(e)
    }
}

/// Fine-tunes a child model under a policy and reports per-scale statistics.
pub trait Evaluator: Sync {
    fn evaluate(&self, policy: &Policy) -> Result<ScaleStats, EvaluatorError>;
}

impl<F> Evaluator for F
where
    F: Fn(&Policy) -> Result<ScaleStats, EvaluatorError> + Sync,
{
    fn evaluate(&self, policy: &Policy) -> Result<ScaleStats, EvaluatorError> {
        self(policy)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub population_size: usize,
    pub top_k: usize,
    /// Generations in total, the random initial one included.
    pub iterations: usize,
    /// Per-gene resampling probability.
    pub mutation_rate: f64,
    pub seed: u64,
    /// Concurrent evaluator invocations.
    pub parallelism: usize,
    /// AP guard for the metric, fraction units.
    pub eps: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            top_k: 10,
            iterations: 10,
            mutation_rate: 0.05,
            seed: 0,
            parallelism: 1,
            eps: DEFAULT_EPS,
        }
    }
}

#[derive(Debug)]
pub enum SearchError {
    InvalidConfig(String),
    /// Every genome of a generation failed to evaluate.
    AllFailed {
        generation: usize,
        first_error: String,
    },
}

impl fmt::Display for SearchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::InvalidConfig(msg) => write!(f, "invalid search config: {msg}"),
            Self::AllFailed {
                generation,
                first_error,
            } => write!(
                f,
                "every evaluation in generation {generation} failed; first error: {first_error}"
            ),
        }
    }
}

impl std::error::Error for SearchError {}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::InvalidConfig(m));
        if self.population_size == 0 {
            return bad("population_size must be positive".into());
        }
        if self.top_k == 0 || self.top_k > self.population_size {
            return bad(format!(
                "top_k must be in 1..={}, got {}",
                self.population_size, self.top_k
            ));
        }
        if !(self.mutation_rate > 0.0 && self.mutation_rate <= 1.0) {
            return bad(format!("mutation_rate must be in (0, 1], got {}", self.mutation_rate));
        }
        if !(self.eps > 0.0) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        Ok(())
    }
}

/// One evaluation in the search history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub generation: usize,
    /// Position within the generation.
    pub index: usize,
    pub genome: Genome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stats: Option<ScaleStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricValue>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvaluationRecord {
    /// Metric value, `+inf` for failed evaluations.
    pub fn score(&self) -> f64 {
        self.metric.as_ref().map_or(f64::INFINITY, |m| m.value)
    }
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best_genome: Genome,
    pub best_policy: Policy,
    pub best_metric: f64,
    /// Best metric seen up to and including each generation.
    pub best_per_generation: Vec<f64>,
    pub history: Vec<EvaluationRecord>,
}

/// Resamples each gene from its searched values with probability `rate`.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, rate: f64, rng: &mut R) -> Genome {
    let mut genes = *genome.genes();
    for (position, gene) in genes.iter_mut().enumerate() {
        if rng.gen_bool(rate.clamp(0.0, 1.0)) {
            *gene = GeneKind::at(position).expect("in range").sample(rng);
        }
    }
    Genome::new(genes).expect("sampled genes are in range")
}

/// Uniform gene-wise crossover.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Genome {
    let mut genes = [0u8; GENOME_LEN];
    for (i, gene) in genes.iter_mut().enumerate() {
        *gene = if rng.gen_bool(0.5) { a.genes()[i] } else { b.genes()[i] };
    }
    Genome::new(genes).expect("parent genes are in range")
}

fn evaluate_one<E: Evaluator + ?Sized>(
    evaluator: &E,
    genome: &Genome,
    eps: f64,
) -> (Option<ScaleStats>, Option<MetricValue>, Option<String>) {
    let policy = decode_genome(genome).expect("search genomes decode");
    match evaluator
        .evaluate(&policy)
        .and_then(|stats| Ok((pareto_scale_balance(&stats, eps)?, stats)))
    {
        Ok((metric, stats)) => (Some(stats), Some(metric), None),
        Err(e) => (None, None, Some(e.to_string())),
    }
}

/// Evaluates a generation with up to `parallelism` concurrent calls;
/// results come back in population order.
fn evaluate_generation<E: Evaluator + ?Sized>(
    evaluator: &E,
    population: &[Genome],
    generation: usize,
    config: &SearchConfig,
) -> Vec<EvaluationRecord> {
    let workers = config.parallelism.clamp(1, population.len().max(1));
    let results: Vec<Mutex<Option<_>>> = population.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= population.len() {
            break;
        }
        let r = evaluate_one(evaluator, &population[i], config.eps);
        *results[i].lock().expect("result slot") = Some(r);
    };
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }
    results
        .into_iter()
        .zip(population)
        .enumerate()
        .map(|(index, (slot, genome))| {
            let (stats, metric, error) = slot
                .into_inner()
                .expect("result slot")
                .expect("every genome evaluated");
            EvaluationRecord {
                generation,
                index,
                genome: genome.clone(),
                stats,
                metric,
                error,
            }
        })
        .collect()
}

pub fn run_search<E: Evaluator + ?Sized>(
    config: &SearchConfig,
    evaluator: &E,
) -> Result<SearchOutcome, SearchError> {
    run_search_with(config, evaluator, |_| {})
}

/// Runs the search, handing every record to `on_record` as soon as its
/// generation finishes.
///
/// `iterations == 0` is treated like 1: the initial population is always
/// evaluated.
pub fn run_search_with<E: Evaluator + ?Sized>(
    config: &SearchConfig,
    evaluator: &E,
    mut on_record: impl FnMut(&EvaluationRecord),
) -> Result<SearchOutcome, SearchError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population: Vec<Genome> = (0..config.population_size)
        .map(|_| Genome::random(&mut rng))
        .collect();
    let generations = config.iterations.max(1);
    let mut history = Vec::with_capacity(generations * config.population_size);
    let mut best: Option<(f64, Genome)> = None;
    let mut best_per_generation = Vec::with_capacity(generations);

    for generation in 0..generations {
        let records = evaluate_generation(evaluator, &population, generation, config);
        if records.iter().all(|r| r.metric.is_none()) {
            history.extend(records.iter().cloned());
            return Err(SearchError::AllFailed {
                generation,
                first_error: records[0].error.clone().unwrap_or_default(),
            });
        }
        for r in &records {
            on_record(r);
            let score = r.score();
            if best.as_ref().map_or(score.is_finite(), |(b, _)| score < *b) {
                best = Some((score, r.genome.clone()));
            }
        }
        best_per_generation.push(best.as_ref().map_or(f64::INFINITY, |b| b.0));

        if generation + 1 < generations {
            // Stable sort: ties keep evaluation order.
            let mut ranked: Vec<&EvaluationRecord> = records.iter().collect();
            ranked.sort_by(|a, b| a.score().total_cmp(&b.score()));
            let parents: Vec<Genome> =
                ranked.iter().take(config.top_k).map(|r| r.genome.clone()).collect();
            let mut next = parents.clone();
            while next.len() < config.population_size {
                let pair: Vec<&Genome> = parents.choose_multiple(&mut rng, 2).collect();
                let child = match pair.as_slice() {
                    [a, b] => crossover(a, b, &mut rng),
                    [only] => (*only).clone(),
                    _ => unreachable!("top_k > 0"),
                };
                next.push(mutate(&child, config.mutation_rate, &mut rng));
            }
            population = next;
        }
        history.extend(records);
    }

    let (best_metric, best_genome) = best.expect("at least one successful evaluation");
    Ok(SearchOutcome {
        best_policy: decode_genome(&best_genome).expect("search genomes decode"),
        best_genome,
        best_metric,
        best_per_generation,
        history,
    })
}

/// One line of the persisted search log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub generation: usize,
    pub index: usize,
    pub genome: Genome,
    pub value: Option<f64>,
    pub std_component: Option<f64>,
    pub penalty_component: Option<f64>,
    pub dropped_scales: Vec<crate::policy::ScaleCategory>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl From<&EvaluationRecord> for LogLine {
    fn from(r: &EvaluationRecord) -> Self {
        Self {
            generation: r.generation,
            index: r.index,
            genome: r.genome.clone(),
            value: r.metric.as_ref().map(|m| m.value),
            std_component: r.metric.as_ref().map(|m| m.std_component),
            penalty_component: r.metric.as_ref().map(|m| m.penalty_component),
            dropped_scales: r.metric.as_ref().map(|m| m.dropped_scales.clone()).unwrap_or_default(),
            error: r.error.clone(),
        }
    }
}

impl LogLine {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("log line serializes")
    }
}
