//! Error metrics and an exhaustive projection oracle for tiny discrete domains.

use std::sync::Arc;

use crate::dataset::{Dataset, DomainSchema, Value};
use crate::error::{Error, Result};
use crate::queries::{QuerySet, Workload};

/// Largest `|domain|^rows` the oracle accepts.
pub const ORACLE_CAPACITY: u64 = 1_000_000;

fn paired_answers(workloads: &[Workload], original: &Dataset, synthetic: &Dataset) -> Result<(Vec<f64>, Vec<f64>)> {
    if original.schema().as_ref() != synthetic.schema().as_ref() {
        return Err(Error::param("original and synthetic datasets have different schemas"));
    }
    let qs = QuerySet::new(original.schema().clone(), workloads)?;
    Ok((qs.answers(original)?, qs.answers(synthetic)?))
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn rms_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}

/// max over all queries of |q(D) − q(D̂)|.
pub fn max_error(workloads: &[Workload], original: &Dataset, synthetic: &Dataset) -> Result<f64> {
    let (a, b) = paired_answers(workloads, original, synthetic)?;
    Ok(max_abs_diff(&a, &b))
}

/// sqrt((1/m)·Σ (q(D) − q(D̂))²) over all m queries.
pub fn avg_error(workloads: &[Workload], original: &Dataset, synthetic: &Dataset) -> Result<f64> {
    let (a, b) = paired_answers(workloads, original, synthetic)?;
    Ok(rms_diff(&a, &b))
}

/// Per-workload (name, max error, average error).
pub fn per_workload_errors(
    workloads: &[Workload],
    original: &Dataset,
    synthetic: &Dataset,
) -> Result<Vec<(String, f64, f64)>> {
    workloads
        .iter()
        .map(|w| {
            let (a, b) = paired_answers(std::slice::from_ref(w), original, synthetic)?;
            Ok((w.name.clone(), max_abs_diff(&a, &b), rms_diff(&a, &b)))
        })
        .collect()
}

/// Decode a domain index into a row; the first attribute is most significant.
fn decode_point(schema: &DomainSchema, mut idx: usize) -> Vec<Value> {
    let mut row = vec![Value::Cat(0); schema.len()];
    for j in (0..schema.len()).rev() {
        let k = schema.attribute(j).cardinality().expect("categorical");
        row[j] = Value::Cat((idx % k) as u32);
        idx /= k;
    }
    row
}

/// Exact minimizer of ‖â − Q(D̂)‖₂² over all `rows`-row datasets on a fully
/// categorical domain. Datasets are enumerated as multisets (nondecreasing
/// sequences of domain points in lexicographic order); the first minimizer
/// wins ties.
pub fn brute_force_projection(
    schema: Arc<DomainSchema>,
    rows: usize,
    workloads: &[Workload],
    a_hat: &[f64],
) -> Result<(Dataset, f64)> {
    if schema.attributes().iter().any(|a| a.is_numeric()) {
        return Err(Error::Unsupported("brute-force projection needs an all-categorical schema".into()));
    }
    if rows == 0 {
        return Err(Error::param("rows must be >= 1"));
    }
    let domain = schema
        .discrete_size()
        .ok_or_else(|| Error::Capacity("domain size overflows".into()))?;
    let space = (domain as u64)
        .checked_pow(rows as u32)
        .filter(|&s| s <= ORACLE_CAPACITY)
        .ok_or_else(|| Error::Capacity(format!("{domain}^{rows} exceeds {ORACLE_CAPACITY}")))?;
    debug_assert!(space >= 1);

    let qs = QuerySet::new(schema.clone(), workloads)?;
    if qs.len() != a_hat.len() {
        return Err(Error::param(format!(
            "target has {} answers, workloads have {} queries",
            a_hat.len(),
            qs.len()
        )));
    }
    let points: Vec<Vec<Value>> = (0..domain).map(|p| decode_point(&schema, p)).collect();
    // hits[p] = indices of queries matched by domain point p
    let hits: Vec<Vec<usize>> = points
        .iter()
        .map(|row| {
            qs.queries()
                .iter()
                .enumerate()
                .filter(|(_, q)| q.matches_row(qs.offsets(), row))
                .map(|(i, _)| i)
                .collect()
        })
        .collect();

    let n = rows as f64;
    let mut seq = vec![0usize; rows];
    let mut counts = vec![0u64; qs.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        counts.iter_mut().for_each(|c| *c = 0);
        for &p in &seq {
            for &q in &hits[p] {
                counts[q] += 1;
            }
        }
        let loss: f64 = a_hat
            .iter()
            .zip(&counts)
            .map(|(a, &c)| {
                let r = a - c as f64 / n;
                r * r
            })
            .sum();
        if best.as_ref().is_none_or(|(l, _)| loss < *l) {
            best = Some((loss, seq.clone()));
        }
        // next nondecreasing sequence
        let Some(i) = (0..rows).rev().find(|&i| seq[i] + 1 < domain) else {
            break;
        };
        let v = seq[i] + 1;
        for s in &mut seq[i..] {
            *s = v;
        }
    }
    let (loss, seq) = best.expect("at least one candidate");
    let data_rows: Vec<Vec<Value>> = seq.iter().map(|&p| points[p].clone()).collect();
    Ok((Dataset::from_rows(schema, &data_rows)?, loss))
}
