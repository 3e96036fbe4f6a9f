//! Zeroth-order genetic projection.
//!
//! Evolves candidate synthetic datasets to minimize the squared L2 distance
//! between their query answers and a vector of (noisy) target answers. Each
//! generation perturbs the incumbent best dataset with sparse mutations and
//! single-cell crossovers from elite donors, scores the population, and keeps
//! the best `elite_size` datasets.
//!
//! Candidates differ from their parent in a handful of cells, so their loss is
//! computed incrementally from the parent's cached per-query counts.

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DomainSchema, Value};
use crate::error::{Error, Result};
use crate::queries::{eval_workloads, QuerySet, Workload};
use crate::rng::{substream, tag, StreamRng};

/// How each generation's candidates are derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateStrategy {
    /// Mutations and single-entry crossovers of the incumbent best dataset.
    #[default]
    Incumbent,
    /// Row crossover between two random elites, followed by a mutation.
    EliteRowCrossover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsdConfig {
    pub synthetic_rows: usize,
    pub max_generations: usize,
    pub p_mut: usize,
    pub p_cross: usize,
    pub elite_size: usize,
    pub mutation_rate: usize,
    pub crossover_rate: usize,
    pub early_stop_threshold: f64,
    /// Generations between compared losses; `None` uses `synthetic_rows`.
    pub early_stop_window: Option<usize>,
    pub seed: u64,
    pub strategy: CandidateStrategy,
}

impl Default for GsdConfig {
    fn default() -> Self {
        Self {
            synthetic_rows: 1000,
            max_generations: 100_000,
            p_mut: 100,
            p_cross: 100,
            elite_size: 2,
            mutation_rate: 1,
            crossover_rate: 1,
            early_stop_threshold: 1e-4,
            early_stop_window: None,
            seed: 0,
            strategy: CandidateStrategy::Incumbent,
        }
    }
}

impl GsdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.synthetic_rows == 0 {
            return Err(Error::param("synthetic_rows must be >= 1"));
        }
        if self.elite_size == 0 {
            return Err(Error::param("elite_size must be >= 1"));
        }
        if self.p_mut + self.p_cross == 0 {
            return Err(Error::param("p_mut + p_cross must be >= 1"));
        }
        if self.mutation_rate == 0 || self.crossover_rate == 0 {
            return Err(Error::param("mutation and crossover rates must be >= 1"));
        }
        if !(self.early_stop_threshold >= 0.0) {
            return Err(Error::param("early_stop_threshold must be >= 0"));
        }
        if self.early_stop_window == Some(0) {
            return Err(Error::param("early_stop_window must be >= 1"));
        }
        Ok(())
    }

    pub fn window(&self) -> usize {
        self.early_stop_window.unwrap_or(self.synthetic_rows)
    }

    pub fn population_size(&self) -> usize {
        self.p_mut + self.p_cross
    }
}

/// Squared L2 distance between `a_hat` and the answers of `candidate`.
pub fn fitness(candidate: &Dataset, workloads: &[Workload], a_hat: &[f64]) -> Result<f64> {
    let answers = eval_workloads(workloads, candidate)?;
    if answers.len() != a_hat.len() {
        return Err(Error::param(format!(
            "target has {} answers, workloads have {} queries",
            a_hat.len(),
            answers.len()
        )));
    }
    Ok(squared_distance(a_hat, &answers))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One cell assignment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edit {
    pub row: usize,
    pub col: usize,
    pub value: Value,
}

fn apply_edits(base: &Dataset, edits: &[Edit]) -> Dataset {
    let mut out = base.clone();
    for e in edits {
        out.set_unchecked(e.row, e.col, e.value);
    }
    out
}

/// `rate` distinct cells of `data`, each resampled uniformly from its domain.
fn mutation_edits<R: Rng + ?Sized>(data: &Dataset, rate: usize, rng: &mut R) -> Vec<Edit> {
    let d = data.n_cols();
    let cells = data.n_rows() * d;
    let picks = index::sample(rng, cells, rate.min(cells));
    picks
        .into_iter()
        .map(|flat| {
            let (row, col) = (flat / d, flat % d);
            Edit {
                row,
                col,
                value: data.schema().sample_value(col, rng),
            }
        })
        .collect()
}

/// `rate` entries `(i1, j)` of the target set to `donor(i2, j)`.
fn crossover_edits<R: Rng + ?Sized>(n_rows: usize, donor: &Dataset, rate: usize, rng: &mut R) -> Vec<Edit> {
    (0..rate)
        .map(|_| {
            let i1 = rng.random_range(0..n_rows);
            let i2 = rng.random_range(0..donor.n_rows());
            let col = rng.random_range(0..donor.n_cols());
            Edit {
                row: i1,
                col,
                value: donor.get(i2, col),
            }
        })
        .collect()
}

/// Copy of `best` with `rate` distinct cells resampled uniformly. A resampled
/// cell may keep its value, so at most `rate` cells differ.
pub fn mutate<R: Rng + ?Sized>(best: &Dataset, rate: usize, rng: &mut R) -> Dataset {
    let edits = mutation_edits(best, rate, rng);
    apply_edits(best, &edits)
}

/// Copy of `best` where, `rate` times, a uniformly chosen cell `(i1, j)` takes
/// the value of `donor` at `(i2, j)`.
pub fn crossover<R: Rng + ?Sized>(best: &Dataset, donor: &Dataset, rate: usize, rng: &mut R) -> Result<Dataset> {
    if best.schema().as_ref() != donor.schema().as_ref() {
        return Err(Error::param("crossover parents have different schemas"));
    }
    if best.n_rows() != donor.n_rows() {
        return Err(Error::param("crossover parents have different row counts"));
    }
    let edits = crossover_edits(best.n_rows(), donor, rate, rng);
    Ok(apply_edits(best, &edits))
}

/// Fires when the relative loss decrease over the last `window` generations
/// falls below `threshold`.
pub fn early_stop_check(loss_history: &[f64], window: usize, threshold: f64) -> bool {
    let len = loss_history.len();
    if len <= window {
        return false;
    }
    let then = loss_history[len - 1 - window];
    let now = loss_history[len - 1];
    (then - now) / then.max(f64::MIN_POSITIVE) < threshold
}

/// A candidate with cached per-query counts and its loss.
#[derive(Debug, Clone)]
pub struct EliteMember {
    pub data: Dataset,
    pub counts: Vec<u64>,
    pub loss: f64,
}

/// The best datasets found so far, sorted by ascending loss.
#[derive(Debug, Clone)]
pub struct EliteSet {
    members: Vec<EliteMember>,
}

impl EliteSet {
    pub fn members(&self) -> &[EliteMember] {
        &self.members
    }

    pub fn best(&self) -> &EliteMember {
        &self.members[0]
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Whether every cached count vector matches a fresh evaluation and
    /// losses are sorted.
    pub fn is_consistent(&self, queries: &QuerySet, a_hat: &[f64]) -> bool {
        let sorted = self.members.windows(2).all(|w| w[0].loss <= w[1].loss);
        sorted
            && self.members.iter().all(|m| {
                let fresh = queries.counts_sequential(&m.data).expect("schema checked");
                fresh == m.counts && (loss_from_counts(a_hat, &fresh, m.data.n_rows()) - m.loss).abs() <= 1e-12
            })
    }
}

fn loss_from_counts(a_hat: &[f64], counts: &[u64], n_rows: usize) -> f64 {
    let n = n_rows as f64;
    a_hat
        .iter()
        .zip(counts)
        .map(|(a, &c)| {
            let r = a - c as f64 / n;
            r * r
        })
        .sum()
}

/// Per-generation summary for convergence traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_loss: f64,
    pub population_best: f64,
    pub population_worst: f64,
}

#[derive(Debug, Clone)]
pub struct GsdOutcome {
    pub dataset: Dataset,
    pub loss: f64,
    pub generations: usize,
    pub stopped_early: bool,
    /// Incumbent loss before the first generation and after each one.
    pub loss_history: Vec<f64>,
    pub trace: Vec<GenerationRecord>,
}

struct CandidateSpec {
    parent: usize,
    edits: Vec<Edit>,
}

/// Stateful optimizer; [`run`] drives it to completion.
pub struct Optimizer {
    config: GsdConfig,
    queries: QuerySet,
    a_hat: Vec<f64>,
    elites: EliteSet,
    generation: usize,
    history: Vec<f64>,
}

impl Optimizer {
    /// Set up the initial elite set: `elite_size` uniform random datasets, with
    /// `init` (when given) replacing the first of them.
    pub fn new(
        config: &GsdConfig,
        schema: Arc<DomainSchema>,
        workloads: &[Workload],
        a_hat: &[f64],
        init: Option<&Dataset>,
    ) -> Result<Self> {
        config.validate()?;
        let queries = QuerySet::new(schema.clone(), workloads)?;
        if queries.len() != a_hat.len() {
            return Err(Error::param(format!(
                "target has {} answers, workloads have {} queries",
                a_hat.len(),
                queries.len()
            )));
        }
        if let Some(bad) = a_hat.iter().find(|a| !a.is_finite()) {
            return Err(Error::param(format!("non-finite target answer {bad}")));
        }
        let mut datasets: Vec<Dataset> = (0..config.elite_size)
            .map(|i| {
                let mut rng = substream(config.seed, &[tag::INIT, i as u64]);
                Dataset::random(schema.clone(), config.synthetic_rows, &mut rng)
            })
            .collect();
        if let Some(init) = init {
            if init.schema().as_ref() != schema.as_ref() || init.n_rows() != config.synthetic_rows {
                return Err(Error::param("initial dataset does not match schema and synthetic_rows"));
            }
            datasets[0] = init.clone();
        }
        let mut members: Vec<EliteMember> = datasets
            .into_iter()
            .map(|data| {
                let counts = queries.counts(&data).expect("schema checked");
                let loss = loss_from_counts(a_hat, &counts, data.n_rows());
                EliteMember { data, counts, loss }
            })
            .collect();
        members.sort_by(|a, b| a.loss.total_cmp(&b.loss));
        let history = vec![members[0].loss];
        Ok(Self {
            config: config.clone(),
            queries,
            a_hat: a_hat.to_vec(),
            elites: EliteSet { members },
            generation: 0,
            history,
        })
    }

    pub fn elites(&self) -> &EliteSet {
        &self.elites
    }

    pub fn queries(&self) -> &QuerySet {
        &self.queries
    }

    pub fn loss_history(&self) -> &[f64] {
        &self.history
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    fn build_candidate(&self, idx: usize) -> CandidateSpec {
        let cfg = &self.config;
        let mut rng: StreamRng = substream(cfg.seed, &[tag::GENERATION, self.generation as u64, idx as u64]);
        let elites = &self.elites.members;
        match cfg.strategy {
            CandidateStrategy::Incumbent => {
                let best = &elites[0].data;
                let edits = if idx < cfg.p_mut {
                    mutation_edits(best, cfg.mutation_rate, &mut rng)
                } else {
                    let donor = &elites[rng.random_range(0..elites.len())].data;
                    crossover_edits(best.n_rows(), donor, cfg.crossover_rate, &mut rng)
                };
                CandidateSpec { parent: 0, edits }
            }
            CandidateStrategy::EliteRowCrossover => {
                let a = rng.random_range(0..elites.len());
                let b = rng.random_range(0..elites.len());
                let (base, donor) = (&elites[a].data, &elites[b].data);
                let ra = rng.random_range(0..base.n_rows());
                let rb = rng.random_range(0..donor.n_rows());
                let mut edits: Vec<Edit> = (0..base.n_cols())
                    .map(|col| Edit {
                        row: ra,
                        col,
                        value: donor.get(rb, col),
                    })
                    .collect();
                let crossed = apply_edits(base, &edits);
                edits.extend(mutation_edits(&crossed, cfg.mutation_rate, &mut rng));
                CandidateSpec { parent: a, edits }
            }
        }
    }

    /// Per-query count changes caused by `edits` on `parent`, as (query, delta) pairs.
    fn count_deltas(&self, parent: &Dataset, edits: &[Edit]) -> Vec<(usize, i64)> {
        let mut rows: Vec<usize> = edits.iter().map(|e| e.row).collect();
        rows.sort_unstable();
        rows.dedup();
        let mut changed: Vec<(Vec<Value>, Vec<Value>)> = Vec::with_capacity(rows.len());
        for &r in &rows {
            let old = parent.row(r);
            let mut new = old.clone();
            for e in edits.iter().filter(|e| e.row == r) {
                new[e.col] = e.value;
            }
            if new != old {
                changed.push((old, new));
            }
        }
        if changed.is_empty() {
            return Vec::new();
        }
        let offsets = self.queries.offsets();
        let mut deltas = Vec::new();
        for (qi, q) in self.queries.queries().iter().enumerate() {
            let mut delta = 0i64;
            for (old, new) in &changed {
                delta += q.matches_row(offsets, new) as i64 - q.matches_row(offsets, old) as i64;
            }
            if delta != 0 {
                deltas.push((qi, delta));
            }
        }
        deltas
    }

    fn incremental_loss(&self, parent: &EliteMember, deltas: &[(usize, i64)]) -> f64 {
        let n = parent.data.n_rows() as f64;
        let mut loss = parent.loss;
        for &(qi, d) in deltas {
            let a = self.a_hat[qi];
            let before = a - parent.counts[qi] as f64 / n;
            let after = a - (parent.counts[qi] as i64 + d) as f64 / n;
            loss += after * after - before * before;
        }
        loss.max(0.0)
    }

    /// Loss of `parent` after `edits`, computed from cached counts.
    pub fn score_edits(&self, parent: &EliteMember, edits: &[Edit]) -> f64 {
        let deltas = self.count_deltas(&parent.data, edits);
        self.incremental_loss(parent, &deltas)
    }

    fn materialize(&self, spec: &CandidateSpec) -> EliteMember {
        let parent = &self.elites.members[spec.parent];
        let deltas = self.count_deltas(&parent.data, &spec.edits);
        let mut counts = parent.counts.clone();
        for (qi, d) in deltas {
            counts[qi] = (counts[qi] as i64 + d) as u64;
        }
        let data = apply_edits(&parent.data, &spec.edits);
        let loss = loss_from_counts(&self.a_hat, &counts, data.n_rows());
        EliteMember { data, counts, loss }
    }

    /// Run one generation.
    pub fn step(&mut self) -> GenerationRecord {
        let pop = self.config.population_size();
        let specs: Vec<CandidateSpec> = (0..pop).into_par_iter().map(|j| self.build_candidate(j)).collect();
        let losses: Vec<f64> = specs
            .par_iter()
            .map(|s| self.score_edits(&self.elites.members[s.parent], &s.edits))
            .collect();

        let e = self.elites.len();
        // creation order: elites first, then candidates
        let mut ranked: Vec<(f64, usize)> = self
            .elites
            .members
            .iter()
            .map(|m| m.loss)
            .chain(losses.iter().copied())
            .enumerate()
            .map(|(i, l)| (l, i))
            .collect();
        let population_worst = ranked.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let population_best = ranked[0].0;

        // Materialize the chosen candidates, then merge with the old elites on
        // exact losses so the incumbent can never get worse.
        let mut pool: Vec<(f64, usize, EliteMember)> = ranked
            .iter()
            .take(self.config.elite_size)
            .filter(|&&(_, i)| i >= e)
            .map(|&(_, i)| {
                let m = self.materialize(&specs[i - e]);
                (m.loss, i, m)
            })
            .collect();
        pool.extend(
            self.elites
                .members
                .iter()
                .enumerate()
                .map(|(i, m)| (m.loss, i, m.clone())),
        );
        pool.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        pool.truncate(self.config.elite_size);
        self.elites.members = pool.into_iter().map(|p| p.2).collect();

        self.generation += 1;
        let best_loss = self.elites.members[0].loss;
        self.history.push(best_loss);
        GenerationRecord {
            generation: self.generation,
            best_loss,
            population_best,
            population_worst,
        }
    }

    pub fn should_stop(&self) -> bool {
        early_stop_check(&self.history, self.config.window(), self.config.early_stop_threshold)
    }

    /// Run until `max_generations` or the early-stop rule fires.
    pub fn run_to_end(mut self) -> GsdOutcome {
        let mut trace = Vec::new();
        let mut stopped_early = false;
        while self.generation < self.config.max_generations {
            trace.push(self.step());
            if self.should_stop() {
                stopped_early = true;
                break;
            }
        }
        let best = self.elites.members.swap_remove(0);
        GsdOutcome {
            dataset: best.data,
            loss: best.loss,
            generations: self.generation,
            stopped_early,
            loss_history: self.history,
            trace,
        }
    }
}

/// Project `a_hat` onto a synthetic dataset of `config.synthetic_rows` rows.
pub fn run(config: &GsdConfig, schema: Arc<DomainSchema>, workloads: &[Workload], a_hat: &[f64]) -> Result<GsdOutcome> {
    Ok(Optimizer::new(config, schema, workloads, a_hat, None)?.run_to_end())
}

/// Like [`run`], seeding the elite set with `init`.
pub fn run_from(
    config: &GsdConfig,
    schema: Arc<DomainSchema>,
    workloads: &[Workload],
    a_hat: &[f64],
    init: &Dataset,
) -> Result<GsdOutcome> {
    Ok(Optimizer::new(config, schema, workloads, a_hat, Some(init))?.run_to_end())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Attribute;
    use crate::queries::gen_categorical_marginal_workloads;
    use proptest::prelude::*;

    fn cat_schema(cards: &[usize]) -> Arc<DomainSchema> {
        Arc::new(
            DomainSchema::new(
                cards
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| Attribute::categorical_n(format!("c{i}"), k))
                    .collect(),
            )
            .unwrap(),
        )
    }

    fn mixed() -> Arc<DomainSchema> {
        Arc::new(
            DomainSchema::new(vec![
                Attribute::categorical_n("a", 3),
                Attribute::numeric("x"),
                Attribute::categorical_n("b", 2),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn fitness_examples() {
        let s = cat_schema(&[2]);
        let w = gen_categorical_marginal_workloads(&s, 1).unwrap();
        let d = Dataset::from_rows(s.clone(), &[vec![Value::Cat(0)]]).unwrap();
        assert_eq!(fitness(&d, &w, &[1.0, 0.0]).unwrap(), 0.0);
        let d1 = Dataset::from_rows(s, &[vec![Value::Cat(1)]]).unwrap();
        // answers [0,1] vs target [1,0]
        assert_eq!(fitness(&d1, &w, &[1.0, 0.0]).unwrap(), 2.0);
        assert!(fitness(&d1, &w, &[1.0]).is_err());
    }

    #[test]
    fn fitness_unit_distance() {
        // Q(D̂) = [0,0] against â = [1,0]: two single-query workloads
        // matching no row.
        let s = cat_schema(&[3]);
        let q = |v| Workload::single("q", crate::queries::Query::CategoricalMarginal { features: vec![0], values: vec![v] });
        let d = Dataset::from_rows(s, &[vec![Value::Cat(2)]]).unwrap();
        assert_eq!(fitness(&d, &[q(0), q(1)], &[1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn fitness_improves_when_row_matches_better() {
        // target: 2-way marginal of {(0,0),(1,1)}
        let s = cat_schema(&[2, 2]);
        let w = gen_categorical_marginal_workloads(&s, 2).unwrap();
        let a_hat = [0.5, 0.0, 0.0, 0.5];
        let bad = Dataset::from_rows(s.clone(), &[vec![Value::Cat(0), Value::Cat(0)], vec![Value::Cat(0), Value::Cat(1)]]).unwrap();
        let better = Dataset::from_rows(s, &[vec![Value::Cat(0), Value::Cat(0)], vec![Value::Cat(1), Value::Cat(1)]]).unwrap();
        // bad: answers [0.5,0.5,0,0] → loss 0.25+0.25 = 0.5; better → 0
        assert!((fitness(&bad, &w, &a_hat).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(fitness(&better, &w, &a_hat).unwrap(), 0.0);
    }

    #[test]
    fn mutate_changes_at_most_rate_cells() {
        let s = mixed();
        for seed in 0..50 {
            let mut rng = substream(seed, &[]);
            let d = Dataset::random(s.clone(), 10, &mut rng);
            let m = mutate(&d, 1, &mut rng);
            assert!(d.hamming(&m) <= 1);
            assert!(m.validate().is_ok());
            let m3 = mutate(&d, 3, &mut rng);
            assert!(d.hamming(&m3) <= 3);
        }
        let tiny = cat_schema(&[2]);
        let d = Dataset::from_rows(tiny, &[vec![Value::Cat(1)]]).unwrap();
        let m = mutate(&d, 1, &mut substream(3, &[]));
        assert!(matches!(m.get(0, 0), Value::Cat(0) | Value::Cat(1)));
        assert_eq!(mutate(&d, 1, &mut substream(3, &[])), m);
    }

    #[test]
    fn crossover_contract() {
        let s = mixed();
        let mut rng = substream(11, &[]);
        let best = Dataset::random(s.clone(), 8, &mut rng);
        let donor = Dataset::random(s.clone(), 8, &mut rng);
        let own = crossover(&best, &best, 3, &mut rng).unwrap();
        assert!(best.hamming(&own) <= 3);
        for i in 0..8 {
            for j in 0..3 {
                assert!((0..8).any(|k| best.get(k, j) == own.get(i, j)));
            }
        }
        assert!(crossover(&best, &donor, 2, &mut rng).is_ok());

        let one = Arc::new(DomainSchema::new(vec![Attribute::numeric("x")]).unwrap());
        for seed in 0..30 {
            let mut rng = substream(seed, &[1]);
            let b = Dataset::random(one.clone(), 6, &mut rng);
            let dn = Dataset::random(one.clone(), 6, &mut rng);
            let out = crossover(&b, &dn, 1, &mut rng).unwrap();
            assert!(b.hamming(&out) <= 1);
            for i in 0..6 {
                if out.get(i, 0) != b.get(i, 0) {
                    assert!((0..6).any(|k| dn.get(k, 0) == out.get(i, 0)));
                }
            }
        }
        let a = crossover(&best, &donor, 2, &mut substream(5, &[])).unwrap();
        let b = crossover(&best, &donor, 2, &mut substream(5, &[])).unwrap();
        assert_eq!(a, b);
        let short = Dataset::random(s, 3, &mut rng);
        assert!(crossover(&best, &short, 1, &mut rng).is_err());
    }

    #[test]
    fn early_stop_examples() {
        assert!(early_stop_check(&[0.3; 5], 4, 1e-4));
        let halving: Vec<f64> = (0..40).map(|i| 0.5f64.powi(i)).collect();
        for len in 1..=halving.len() {
            assert!(!early_stop_check(&halving[..len], 4, 1e-4));
        }
        assert!(!early_stop_check(&[0.3; 4], 4, 1e-4));
        assert!(!early_stop_check(&[0.3; 10], 4, 0.0));
    }

    #[test]
    fn tiny_domain_reaches_zero_loss() {
        let s = cat_schema(&[2, 2]);
        let w = gen_categorical_marginal_workloads(&s, 2).unwrap();
        let truth = Dataset::from_rows(s.clone(), &[vec![Value::Cat(1), Value::Cat(0)]]).unwrap();
        let a_hat = eval_workloads(&w, &truth).unwrap();
        let cfg = GsdConfig {
            synthetic_rows: 1,
            max_generations: 200,
            p_mut: 10,
            p_cross: 10,
            seed: 4,
            ..Default::default()
        };
        let out = run(&cfg, s, &w, &a_hat).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.dataset, truth);
    }

    #[test]
    fn zero_generations_returns_initial_elite() {
        let s = mixed();
        let w = gen_categorical_marginal_workloads(&s, 2).unwrap();
        let a_hat = vec![1.0 / 6.0; 6];
        let cfg = GsdConfig {
            synthetic_rows: 5,
            max_generations: 0,
            seed: 9,
            ..Default::default()
        };
        let out = run(&cfg, s, &w, &a_hat).unwrap();
        assert_eq!(out.generations, 0);
        assert!((fitness(&out.dataset, &w, &a_hat).unwrap() - out.loss).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_config_and_targets() {
        let s = mixed();
        let w = gen_categorical_marginal_workloads(&s, 2).unwrap();
        let bad = GsdConfig {
            elite_size: 0,
            ..Default::default()
        };
        assert!(run(&bad, s.clone(), &w, &[0.0; 6]).is_err());
        let cfg = GsdConfig::default();
        assert!(run(&cfg, s.clone(), &w, &[0.0; 5]).is_err());
        assert!(run(&cfg, s, &w, &[f64::NAN; 6]).is_err());
    }

    #[test]
    fn legacy_strategy_also_converges() {
        let s = cat_schema(&[2, 2, 2]);
        let w = gen_categorical_marginal_workloads(&s, 2).unwrap();
        let truth = Dataset::random(s.clone(), 4, &mut substream(1, &[]));
        let a_hat = eval_workloads(&w, &truth).unwrap();
        let cfg = GsdConfig {
            synthetic_rows: 4,
            max_generations: 3000,
            p_mut: 20,
            p_cross: 20,
            elite_size: 4,
            early_stop_threshold: 0.0,
            strategy: CandidateStrategy::EliteRowCrossover,
            seed: 2,
            ..Default::default()
        };
        let out = run(&cfg, s, &w, &a_hat).unwrap();
        assert!(out.loss < 1e-12, "{}", out.loss);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn incremental_matches_full(seed in any::<u64>(), rate in 1usize..4) {
            let s = mixed();
            let mut rng = substream(seed, &[]);
            let mut ws = gen_categorical_marginal_workloads(&s, 2).unwrap();
            ws.push(crate::queries::gen_random_halfspaces(&s, 30, &mut rng).unwrap());
            let truth = Dataset::random(s.clone(), 12, &mut rng);
            let a_hat = eval_workloads(&ws, &truth).unwrap();
            let cfg = GsdConfig { synthetic_rows: 7, seed, ..Default::default() };
            let opt = Optimizer::new(&cfg, s, &ws, &a_hat, None).unwrap();
            let parent = opt.elites().best();
            for _ in 0..10 {
                let edits = mutation_edits(&parent.data, rate, &mut rng);
                let inc = opt.score_edits(parent, &edits);
                let full = fitness(&apply_edits(&parent.data, &edits), &ws, &a_hat).unwrap();
                prop_assert!((inc - full).abs() < 1e-9);
            }
        }

        #[test]
        fn incumbent_monotone_and_elites_consistent(seed in any::<u64>()) {
            let s = mixed();
            let ws = gen_categorical_marginal_workloads(&s, 2).unwrap();
            let truth = Dataset::random(s.clone(), 20, &mut substream(seed, &[7]));
            let a_hat = eval_workloads(&ws, &truth).unwrap();
            let cfg = GsdConfig { synthetic_rows: 10, p_mut: 5, p_cross: 5, elite_size: 3, seed, ..Default::default() };
            let mut opt = Optimizer::new(&cfg, s, &ws, &a_hat, None).unwrap();
            let mut prev = opt.elites().best().loss;
            for _ in 0..60 {
                let rec = opt.step();
                prop_assert!(rec.best_loss <= prev);
                prev = rec.best_loss;
                for m in opt.elites().members() {
                    prop_assert!(m.data.validate().is_ok());
                }
            }
            prop_assert!(opt.elites().is_consistent(opt.queries(), &a_hat));
        }
    }
}
