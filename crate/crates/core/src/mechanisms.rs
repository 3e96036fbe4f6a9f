//! One-shot and adaptive private synthesis under a single zCDP budget.
//!
//! Both mechanisms read the sensitive data only to compute true workload
//! answers, once per workload, before any projection. Projection sees the
//! noisy measurements, the schema and the optimizer configuration.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DomainSchema};
use crate::dp::{gaussian_mechanism, report_noisy_max, split_budget, PrivacyLedger};
use crate::error::{Error, Result};
use crate::gsd::{self, GenerationRecord, GsdConfig};
use crate::queries::{QuerySet, Workload};
use crate::rng::{derive_seed, substream, tag};

/// Read access to the sensitive dataset.
pub trait SensitiveSource {
    fn schema(&self) -> &Arc<DomainSchema>;
    fn n_rows(&self) -> usize;
    /// True answers (proportions) of every query in `workload`.
    fn workload_answers(&self, workload: &Workload) -> Result<Vec<f64>>;
}

impl SensitiveSource for Dataset {
    fn schema(&self) -> &Arc<DomainSchema> {
        Dataset::schema(self)
    }

    fn n_rows(&self) -> usize {
        Dataset::n_rows(self)
    }

    fn workload_answers(&self, workload: &Workload) -> Result<Vec<f64>> {
        QuerySet::new(self.schema().clone(), std::slice::from_ref(workload))?.answers(self)
    }
}

/// What the adaptive loop selects and measures each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionUnit {
    /// A whole workload, scored by its largest absolute error.
    #[default]
    Workload,
    /// A single query, measured with count sensitivity 1.
    Query,
}

/// How a repeated selection enters the projection target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Remeasure {
    /// Keep every measurement; duplicates all constrain the fit.
    #[default]
    Concatenate,
    /// The newest measurement of a target replaces older ones.
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MechanismOptions {
    pub selection: SelectionUnit,
    pub remeasure: Remeasure,
    /// δ used when reporting the (ε, δ) guarantee.
    pub delta: f64,
    /// Keep per-generation optimizer traces in the epoch records.
    pub keep_trace: bool,
}

impl Default for MechanismOptions {
    fn default() -> Self {
        Self {
            selection: SelectionUnit::Workload,
            remeasure: Remeasure::Concatenate,
            delta: 1e-5,
            keep_trace: false,
        }
    }
}

/// One noisy measurement used as a projection target.
#[derive(Debug, Clone, Serialize)]
pub struct Measurement {
    pub workload_index: usize,
    /// Query positions inside the workload that were measured.
    pub query_indices: Vec<usize>,
    pub name: String,
    /// Noisy answers clipped to [0,1].
    pub answers: Vec<f64>,
    pub sigma: f64,
    pub rho_spent: f64,
    pub epoch: usize,
    pub sample: usize,
    #[serde(skip)]
    pub(crate) workload: Workload,
}

impl Measurement {
    pub fn workload(&self) -> &Workload {
        &self.workload
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub selected: Vec<String>,
    pub loss: f64,
    pub generations: usize,
    pub stopped_early: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<GenerationRecord>,
}

#[derive(Debug, Clone)]
pub struct MechanismOutput {
    pub synthetic: Dataset,
    pub ledger: PrivacyLedger,
    pub measurements: Vec<Measurement>,
    pub epochs: Vec<EpochRecord>,
}

/// Max absolute error of each workload: the selection score.
pub fn workload_scores(truth: &[Vec<f64>], current: &[Vec<f64>]) -> Vec<f64> {
    truth
        .iter()
        .zip(current)
        .map(|(a, b)| crate::evalkit::max_abs_diff(a, b))
        .collect()
}

/// Pick a workload by report-noisy-max over [`workload_scores`].
pub fn select_workload<R: rand::Rng + ?Sized>(
    truth: &[Vec<f64>],
    current: &[Vec<f64>],
    rho: f64,
    n_rows: usize,
    rng: &mut R,
) -> Result<usize> {
    report_noisy_max(&workload_scores(truth, current), rho, n_rows, rng)
}

fn check_inputs<S: SensitiveSource + ?Sized>(data: &S, workloads: &[Workload], rho: f64) -> Result<()> {
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::param(format!("rho must be positive, got {rho}")));
    }
    if workloads.is_empty() || workloads.iter().all(Workload::is_empty) {
        return Err(Error::param("at least one nonempty workload is required"));
    }
    if data.n_rows() == 0 {
        return Err(Error::param("sensitive dataset is empty"));
    }
    for w in workloads {
        w.validate(data.schema())?;
    }
    Ok(())
}

fn clip_unit(values: Vec<f64>) -> Vec<f64> {
    values.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
}

fn projection_config(config: &GsdConfig, round: u64) -> GsdConfig {
    GsdConfig {
        seed: derive_seed(config.seed, &[tag::PROJECT, round]),
        ..config.clone()
    }
}

/// Measure all workloads once with the Gaussian mechanism at the full budget,
/// then project.
///
/// The concatenated answer vector has count sensitivity sqrt(Σ_w Δ_w²); the
/// noise scale divides it by N for proportion answers.
pub fn one_shot<S: SensitiveSource + ?Sized>(
    data: &S,
    workloads: &[Workload],
    rho: f64,
    config: &GsdConfig,
    options: &MechanismOptions,
) -> Result<MechanismOutput> {
    check_inputs(data, workloads, rho)?;
    config.validate()?;
    let mut ledger = PrivacyLedger::new(rho, options.delta)?;
    let n = data.n_rows() as f64;
    let truth: Vec<Vec<f64>> = workloads
        .iter()
        .map(|w| data.workload_answers(w))
        .collect::<Result<_>>()?;
    let joint_sensitivity = workloads.iter().map(|w| w.l2_sensitivity.powi(2)).sum::<f64>().sqrt() / n;
    let flat: Vec<f64> = truth.iter().flatten().copied().collect();
    let mut rng = substream(config.seed, &[tag::NOISE, 0]);
    let draw = gaussian_mechanism(&flat, joint_sensitivity, rho, &mut rng)?;
    ledger.spend("measure one-shot", rho)?;

    let noisy = clip_unit(draw.values);
    let mut measurements = Vec::with_capacity(workloads.len());
    let mut at = 0;
    for (i, w) in workloads.iter().enumerate() {
        measurements.push(Measurement {
            workload_index: i,
            query_indices: (0..w.len()).collect(),
            name: w.name.clone(),
            answers: noisy[at..at + w.len()].to_vec(),
            sigma: draw.sigma,
            rho_spent: rho,
            epoch: 1,
            sample: 1,
            workload: w.clone(),
        });
        at += w.len();
    }
    let outcome = gsd::run(&projection_config(config, 1), data.schema().clone(), workloads, &noisy)?;
    let epochs = vec![EpochRecord {
        epoch: 1,
        selected: workloads.iter().map(|w| w.name.clone()).collect(),
        loss: outcome.loss,
        generations: outcome.generations,
        stopped_early: outcome.stopped_early,
        trace: if options.keep_trace { outcome.trace } else { Vec::new() },
    }];
    Ok(MechanismOutput {
        synthetic: outcome.dataset,
        ledger,
        measurements,
        epochs,
    })
}

/// Select-measure-project loop over `epochs` × `samples` rounds, each round
/// spending ρ/(2·T·S) on selection and the same on measurement.
pub fn adaptive<S: SensitiveSource + ?Sized>(
    data: &S,
    workloads: &[Workload],
    rho: f64,
    epochs: usize,
    samples: usize,
    config: &GsdConfig,
    options: &MechanismOptions,
) -> Result<MechanismOutput> {
    check_inputs(data, workloads, rho)?;
    config.validate()?;
    let per_call = split_budget(rho, epochs, samples)?;
    let mut ledger = PrivacyLedger::new(rho, options.delta)?;
    let schema = data.schema().clone();
    let n_rows = data.n_rows();
    let n = n_rows as f64;
    let truth: Vec<Vec<f64>> = workloads
        .iter()
        .map(|w| data.workload_answers(w))
        .collect::<Result<_>>()?;
    let query_sets: Vec<QuerySet> = workloads
        .iter()
        .map(|w| QuerySet::new(schema.clone(), std::slice::from_ref(w)))
        .collect::<Result<_>>()?;

    let mut synthetic = Dataset::random(schema.clone(), config.synthetic_rows, &mut substream(config.seed, &[tag::INIT, u64::MAX]));
    let mut measurements: Vec<Measurement> = Vec::new();
    let mut records = Vec::with_capacity(epochs);

    for t in 1..=epochs {
        let current: Vec<Vec<f64>> = query_sets
            .iter()
            .map(|qs| qs.answers(&synthetic))
            .collect::<Result<_>>()?;
        let mut selected = Vec::with_capacity(samples);
        for s in 1..=samples {
            let mut select_rng = substream(config.seed, &[tag::SELECT, t as u64, s as u64]);
            let (wi, query_indices, target) = match options.selection {
                SelectionUnit::Workload => {
                    let wi = select_workload(&truth, &current, per_call, n_rows, &mut select_rng)?;
                    (wi, (0..workloads[wi].len()).collect::<Vec<_>>(), workloads[wi].clone())
                }
                SelectionUnit::Query => {
                    let index: Vec<(usize, usize)> = workloads
                        .iter()
                        .enumerate()
                        .flat_map(|(wi, w)| (0..w.len()).map(move |qi| (wi, qi)))
                        .collect();
                    let scores: Vec<f64> = index
                        .iter()
                        .map(|&(wi, qi)| (truth[wi][qi] - current[wi][qi]).abs())
                        .collect();
                    let pick = report_noisy_max(&scores, per_call, n_rows, &mut select_rng)?;
                    let (wi, qi) = index[pick];
                    let w = Workload::single(format!("{}#{qi}", workloads[wi].name), workloads[wi].queries[qi].clone());
                    (wi, vec![qi], w)
                }
            };
            ledger.spend(format!("select t={t}/s={s}"), per_call)?;

            let true_answers: Vec<f64> = query_indices.iter().map(|&qi| truth[wi][qi]).collect();
            let mut noise_rng = substream(config.seed, &[tag::NOISE, t as u64, s as u64]);
            let draw = gaussian_mechanism(&true_answers, target.l2_sensitivity / n, per_call, &mut noise_rng)?;
            ledger.spend(format!("measure t={t}/s={s}"), per_call)?;

            if options.remeasure == Remeasure::Replace {
                measurements.retain(|m| !(m.workload_index == wi && m.query_indices == query_indices));
            }
            selected.push(target.name.clone());
            measurements.push(Measurement {
                workload_index: wi,
                query_indices,
                name: target.name.clone(),
                answers: clip_unit(draw.values),
                sigma: draw.sigma,
                rho_spent: per_call,
                epoch: t,
                sample: s,
                workload: target,
            });
        }

        let measured: Vec<Workload> = measurements.iter().map(|m| m.workload.clone()).collect();
        let a_hat: Vec<f64> = measurements.iter().flat_map(|m| m.answers.iter().copied()).collect();
        let outcome = gsd::run_from(&projection_config(config, t as u64), schema.clone(), &measured, &a_hat, &synthetic)?;
        synthetic = outcome.dataset;
        records.push(EpochRecord {
            epoch: t,
            selected,
            loss: outcome.loss,
            generations: outcome.generations,
            stopped_early: outcome.stopped_early,
            trace: if options.keep_trace { outcome.trace } else { Vec::new() },
        });
    }

    Ok(MechanismOutput {
        synthetic,
        ledger,
        measurements,
        epochs: records,
    })
}
