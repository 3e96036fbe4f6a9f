//! Sigmoid-relaxed prefix queries and temperature-annealed gradient descent.
//!
//! Replacing the indicator `x ≤ τ` by a sigmoid makes a prefix query
//! differentiable, but the relaxed loss has spurious minima. For a target of
//! 0.5 and a threshold of 0.5, the dataset with every value at 0.5 has zero
//! relaxed loss at any temperature while its true prefix answer is 1.

use std::sync::Arc;

use serde::Serialize;

use crate::dataset::{Attribute, Column, Dataset, DomainSchema, Value};
use crate::error::{Error, Result};
use crate::gsd::{self, GsdConfig};
use crate::queries::{eval_query, Query, Workload};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmoidPrefix {
    pub threshold: f64,
    pub inverse_temperature: f64,
}

impl SigmoidPrefix {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        1.0 / (1.0 + (-self.inverse_temperature * (x - self.threshold)).exp())
    }
}

fn numeric_values(data: &Dataset) -> Result<&[f64]> {
    match data.columns() {
        [Column::Num(v)] => Ok(v),
        _ => Err(Error::param("expected a dataset with a single numeric column")),
    }
}

/// Mean of the sigmoid over the values.
pub fn sigmoid_query_values(values: &[f64], sp: SigmoidPrefix) -> f64 {
    values.iter().map(|&x| sp.eval(x)).sum::<f64>() / values.len() as f64
}

pub fn sigmoid_query(data: &Dataset, sp: SigmoidPrefix) -> Result<f64> {
    Ok(sigmoid_query_values(numeric_values(data)?, sp))
}

/// (q̃(x) − target)².
pub fn surrogate_loss(values: &[f64], sp: SigmoidPrefix, target: f64) -> f64 {
    let r = sigmoid_query_values(values, sp) - target;
    r * r
}

/// Analytic gradient of [`surrogate_loss`] with respect to each value.
pub fn surrogate_gradient(values: &[f64], sp: SigmoidPrefix, target: f64) -> Vec<f64> {
    let n = values.len() as f64;
    let r = sigmoid_query_values(values, sp) - target;
    values
        .iter()
        .map(|&x| {
            let f = sp.eval(x);
            2.0 * r * sp.inverse_temperature * f * (1.0 - f) / n
        })
        .collect()
}

/// Doubling schedule σ_j = σ_1 · 2^(j−1), j = 1..=stages.
pub fn doubling_schedule(first: f64, stages: usize) -> Vec<f64> {
    (0..stages).map(|j| first * 2f64.powi(j as i32)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnealStep {
    pub step: usize,
    pub inverse_temperature: f64,
    pub surrogate_loss: f64,
}

#[derive(Debug, Clone)]
pub struct AnnealParams {
    pub target: f64,
    pub threshold: f64,
    pub temperatures: Vec<f64>,
    pub learning_rate: f64,
    pub max_steps: usize,
    /// Stage ends once the gradient norm is at most this.
    pub tolerance: f64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            target: 0.5,
            threshold: 0.5,
            temperatures: doubling_schedule(2.0, 11),
            learning_rate: 0.01,
            max_steps: 1000,
            tolerance: 1e-6,
        }
    }
}

/// Plain gradient descent on the relaxed loss, one stage per temperature,
/// values clamped to [0,1]. Returns the final dataset and one trace entry per
/// evaluated point.
pub fn anneal_descent(init: &Dataset, params: &AnnealParams) -> Result<(Dataset, Vec<AnnealStep>)> {
    if params.temperatures.is_empty() || params.temperatures.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::param("temperatures must be a nonempty list of positive values"));
    }
    if !(params.learning_rate >= 0.0) {
        return Err(Error::param("learning rate must be >= 0"));
    }
    let mut values = numeric_values(init)?.to_vec();
    let mut trace = Vec::new();
    let mut step = 0;
    for &sigma in &params.temperatures {
        let sp = SigmoidPrefix {
            threshold: params.threshold,
            inverse_temperature: sigma,
        };
        for _ in 0..params.max_steps.max(1) {
            trace.push(AnnealStep {
                step,
                inverse_temperature: sigma,
                surrogate_loss: surrogate_loss(&values, sp, params.target),
            });
            step += 1;
            let grad = surrogate_gradient(&values, sp, params.target);
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm <= params.tolerance {
                break;
            }
            for (x, g) in values.iter_mut().zip(&grad) {
                *x = (*x - params.learning_rate * g).clamp(0.0, 1.0);
            }
        }
    }
    let out = Dataset::from_columns(init.schema().clone(), vec![Column::Num(values)])?;
    Ok((out, trace))
}

pub fn unit_schema() -> Arc<DomainSchema> {
    Arc::new(DomainSchema::new(vec![Attribute::numeric("x")]).expect("valid schema"))
}

/// `n` values, the first half 0 and the rest 1.
pub fn split_dataset(n: usize) -> Dataset {
    let rows: Vec<Vec<Value>> = (0..n)
        .map(|i| vec![Value::Num(if i < n / 2 { 0.0 } else { 1.0 })])
        .collect();
    Dataset::from_rows(unit_schema(), &rows).expect("valid rows")
}

pub fn constant_dataset(n: usize, value: f64) -> Dataset {
    Dataset::from_columns(unit_schema(), vec![Column::Num(vec![value; n])]).expect("valid column")
}

/// The exact prefix query `x ≤ τ`.
pub fn prefix_query(threshold: f64) -> Query {
    Query::Prefix {
        anchor: None,
        features: vec![0],
        thresholds: vec![threshold],
        strict: false,
    }
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub target: f64,
    pub annealed: Dataset,
    pub annealed_surrogate_loss: f64,
    pub annealed_true_error: f64,
    pub gsd: Dataset,
    pub gsd_true_error: f64,
    pub trace: Vec<AnnealStep>,
}

/// Data with half its mass at 0 and half at 1; the relaxed optimizer starts
/// from all values at the threshold, the genetic optimizer from random data.
pub fn run_demo(n: usize, params: &AnnealParams, gsd_config: &GsdConfig) -> Result<DemoReport> {
    if n < 2 {
        return Err(Error::param("demo needs at least 2 rows"));
    }
    let truth = split_dataset(n);
    let query = prefix_query(params.threshold);
    let target = eval_query(&query, &truth)?;
    let params = AnnealParams {
        target,
        ..params.clone()
    };
    let init = constant_dataset(n, params.threshold);
    let (annealed, trace) = anneal_descent(&init, &params)?;
    let last_sigma = *params.temperatures.last().expect("nonempty");
    let annealed_surrogate_loss = surrogate_loss(
        numeric_values(&annealed)?,
        SigmoidPrefix {
            threshold: params.threshold,
            inverse_temperature: last_sigma,
        },
        target,
    );
    let annealed_true_error = (eval_query(&query, &annealed)? - target).abs();

    let workload = [Workload::single("prefix", query.clone())];
    let cfg = GsdConfig {
        synthetic_rows: n,
        ..gsd_config.clone()
    };
    let outcome = gsd::run(&cfg, unit_schema(), &workload, &[target])?;
    let gsd_true_error = (eval_query(&query, &outcome.dataset)? - target).abs();
    Ok(DemoReport {
        target,
        annealed,
        annealed_surrogate_loss,
        annealed_true_error,
        gsd: outcome.dataset,
        gsd_true_error,
        trace,
    })
}
