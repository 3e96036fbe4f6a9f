//! Statistical queries, workload generators and the evaluation engine.
//!
//! Every query is a row predicate and its answer on a dataset is the fraction
//! of rows satisfying it. Workloads group queries and carry the L2
//! sensitivity of their answer vector measured in counts (divide by N for
//! proportions).

use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{AttributeKind, Dataset, DomainSchema, Value};
use crate::error::{Error, Result};

/// Interval over [0,1]. The lower end is always closed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub upper_inclusive: bool,
}

impl Interval {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            upper_inclusive: true,
        }
    }

    /// Dyadic interval `[i/2^level, (i+1)/2^level)`, closed on the right
    /// only when it ends at 1.
    pub fn dyadic(level: u32, i: u64) -> Self {
        let width = (1u64 << level) as f64;
        Self {
            lo: i as f64 / width,
            hi: (i + 1) as f64 / width,
            upper_inclusive: i + 1 == 1u64 << level,
        }
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (self.upper_inclusive && x <= self.hi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Query {
    /// `x_S = c` on categorical attributes.
    CategoricalMarginal { features: Vec<usize>, values: Vec<u32> },
    /// `x_C = y` and `x_j ∈ interval_j` for each numeric attribute j.
    RangeMarginal {
        cat_features: Vec<usize>,
        cat_values: Vec<u32>,
        num_features: Vec<usize>,
        intervals: Vec<Interval>,
    },
    /// Optional categorical anchor `x_c = v`, and `x_i ≤ τ_i` (or `<` when
    /// `strict`) for each numeric attribute i.
    Prefix {
        anchor: Option<(usize, u32)>,
        features: Vec<usize>,
        thresholds: Vec<f64>,
        strict: bool,
    },
    /// `⟨θ, one_hot(x)⟩ ≤ τ`.
    Halfspace { theta: Vec<f64>, tau: f64 },
}

impl Query {
    /// Whether the row whose cells are given by `cell` satisfies the predicate.
    /// `offsets` are the schema's one-hot block offsets (used by halfspaces).
    #[inline]
    pub fn matches<F: Fn(usize) -> Value>(&self, offsets: &[usize], cell: F) -> bool {
        match self {
            Query::CategoricalMarginal { features, values } => features
                .iter()
                .zip(values)
                .all(|(&j, &v)| cell(j) == Value::Cat(v)),
            Query::RangeMarginal {
                cat_features,
                cat_values,
                num_features,
                intervals,
            } => {
                cat_features
                    .iter()
                    .zip(cat_values)
                    .all(|(&j, &v)| cell(j) == Value::Cat(v))
                    && num_features.iter().zip(intervals).all(|(&j, iv)| match cell(j) {
                        Value::Num(x) => iv.contains(x),
                        Value::Cat(_) => false,
                    })
            }
            Query::Prefix {
                anchor,
                features,
                thresholds,
                strict,
            } => {
                if let Some((c, v)) = anchor {
                    if cell(*c) != Value::Cat(*v) {
                        return false;
                    }
                }
                features.iter().zip(thresholds).all(|(&j, &t)| match cell(j) {
                    Value::Num(x) if *strict => x < t,
                    Value::Num(x) => x <= t,
                    Value::Cat(_) => false,
                })
            }
            Query::Halfspace { theta, tau } => {
                let mut dot = 0.0;
                for (j, &off) in offsets.iter().enumerate() {
                    dot += match cell(j) {
                        Value::Cat(v) => theta[off + v as usize],
                        Value::Num(x) => theta[off] * x,
                    };
                }
                dot <= *tau
            }
        }
    }

    #[inline]
    pub fn matches_row(&self, offsets: &[usize], row: &[Value]) -> bool {
        self.matches(offsets, |j| row[j])
    }

    /// Number of rows of `data` satisfying the predicate.
    pub fn count(&self, offsets: &[usize], data: &Dataset) -> u64 {
        (0..data.n_rows())
            .filter(|&i| self.matches(offsets, |j| data.get(i, j)))
            .count() as u64
    }

    /// Check feature indices, kinds, values and parameter shapes against `schema`.
    pub fn validate(&self, schema: &DomainSchema) -> Result<()> {
        let check_cat = |j: usize, v: u32| -> Result<()> {
            let attr = schema
                .attributes()
                .get(j)
                .ok_or_else(|| Error::param(format!("feature index {j} out of range")))?;
            match attr.cardinality() {
                Some(k) if (v as usize) < k => Ok(()),
                Some(_) => Err(Error::param(format!("value {v} out of range for `{}`", attr.name))),
                None => Err(Error::param(format!("`{}` is not categorical", attr.name))),
            }
        };
        let check_num = |j: usize| -> Result<()> {
            let attr = schema
                .attributes()
                .get(j)
                .ok_or_else(|| Error::param(format!("feature index {j} out of range")))?;
            if attr.is_numeric() {
                Ok(())
            } else {
                Err(Error::param(format!("`{}` is not numeric", attr.name)))
            }
        };
        match self {
            Query::CategoricalMarginal { features, values } => {
                if features.len() != values.len() {
                    return Err(Error::param("marginal features and values differ in length"));
                }
                features.iter().zip(values).try_for_each(|(&j, &v)| check_cat(j, v))
            }
            Query::RangeMarginal {
                cat_features,
                cat_values,
                num_features,
                intervals,
            } => {
                if cat_features.len() != cat_values.len() || num_features.len() != intervals.len() {
                    return Err(Error::param("range marginal feature lists differ in length"));
                }
                cat_features
                    .iter()
                    .zip(cat_values)
                    .try_for_each(|(&j, &v)| check_cat(j, v))?;
                num_features.iter().try_for_each(|&j| check_num(j))?;
                for iv in intervals {
                    if !(iv.lo <= iv.hi) {
                        return Err(Error::param(format!("interval [{}, {}] has lo > hi", iv.lo, iv.hi)));
                    }
                }
                Ok(())
            }
            Query::Prefix {
                anchor,
                features,
                thresholds,
                ..
            } => {
                if features.len() != thresholds.len() {
                    return Err(Error::param("prefix features and thresholds differ in length"));
                }
                if let Some((c, v)) = anchor {
                    check_cat(*c, *v)?;
                }
                features.iter().try_for_each(|&j| check_num(j))
            }
            Query::Halfspace { theta, tau } => {
                if theta.len() != schema.one_hot_dim() {
                    return Err(Error::param(format!(
                        "halfspace theta has length {}, one-hot dimension is {}",
                        theta.len(),
                        schema.one_hot_dim()
                    )));
                }
                if !tau.is_finite() || theta.iter().any(|t| !t.is_finite()) {
                    return Err(Error::param("halfspace parameters must be finite"));
                }
                Ok(())
            }
        }
    }
}

/// Which generator produced a workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum WorkloadKind {
    CategoricalMarginal { k: usize },
    BinaryTree { k: usize, levels: u32 },
    RandomPrefix,
    RandomHalfspace,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Workload {
    pub name: String,
    pub kind: WorkloadKind,
    pub queries: Vec<Query>,
    /// L2 sensitivity of the answer vector in counts, under replacement of one row.
    pub l2_sensitivity: f64,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn validate(&self, schema: &DomainSchema) -> Result<()> {
        if !(self.l2_sensitivity.is_finite() && self.l2_sensitivity > 0.0) {
            return Err(Error::param(format!("workload `{}` has non-positive sensitivity", self.name)));
        }
        self.queries.iter().try_for_each(|q| q.validate(schema))
    }

    /// Workload holding a single query, with count sensitivity 1.
    pub fn single(name: impl Into<String>, query: Query) -> Self {
        Self {
            name: name.into(),
            kind: WorkloadKind::Custom,
            queries: vec![query],
            l2_sensitivity: 1.0,
        }
    }
}

/// Stored L2 sensitivity of a generated workload.
pub fn workload_sensitivity(w: &Workload) -> f64 {
    w.l2_sensitivity
}

/// Worst-case L2 sensitivity assuming every query can flip under one row
/// replacement: sqrt(m). Audit value for the random query classes.
pub fn conservative_sensitivity(w: &Workload) -> f64 {
    (w.queries.len() as f64).sqrt()
}

/// Flattened, validated queries of a workload list, ready for evaluation.
#[derive(Debug, Clone)]
pub struct QuerySet {
    schema: Arc<DomainSchema>,
    queries: Vec<Query>,
    offsets: Vec<usize>,
}

impl QuerySet {
    pub fn new(schema: Arc<DomainSchema>, workloads: &[Workload]) -> Result<Self> {
        for w in workloads {
            w.validate(&schema)?;
        }
        let queries = workloads.iter().flat_map(|w| w.queries.iter().cloned()).collect();
        let offsets = schema.one_hot_offsets();
        Ok(Self {
            schema,
            queries,
            offsets,
        })
    }

    pub fn schema(&self) -> &Arc<DomainSchema> {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    fn check_schema(&self, data: &Dataset) -> Result<()> {
        if data.schema().as_ref() != self.schema.as_ref() {
            return Err(Error::param("dataset schema does not match the query set's schema"));
        }
        Ok(())
    }

    /// Per-query match counts, evaluated in parallel across queries.
    pub fn counts(&self, data: &Dataset) -> Result<Vec<u64>> {
        self.check_schema(data)?;
        Ok(self
            .queries
            .par_iter()
            .map(|q| q.count(&self.offsets, data))
            .collect())
    }

    /// Same as [`QuerySet::counts`] on the current thread only.
    pub fn counts_sequential(&self, data: &Dataset) -> Result<Vec<u64>> {
        self.check_schema(data)?;
        Ok(self.queries.iter().map(|q| q.count(&self.offsets, data)).collect())
    }

    pub fn answers(&self, data: &Dataset) -> Result<Vec<f64>> {
        let n = data.n_rows() as f64;
        Ok(self.counts(data)?.into_iter().map(|c| c as f64 / n).collect())
    }

    pub fn answers_sequential(&self, data: &Dataset) -> Result<Vec<f64>> {
        let n = data.n_rows() as f64;
        Ok(self.counts_sequential(data)?.into_iter().map(|c| c as f64 / n).collect())
    }
}

/// Fraction of rows of `data` satisfying `q`.
pub fn eval_query(q: &Query, data: &Dataset) -> Result<f64> {
    q.validate(data.schema())?;
    if data.n_rows() == 0 {
        return Err(Error::param("cannot evaluate a query on an empty dataset"));
    }
    let offsets = data.schema().one_hot_offsets();
    Ok(q.count(&offsets, data) as f64 / data.n_rows() as f64)
}

/// Concatenated answers of every workload, in order.
pub fn eval_workloads(workloads: &[Workload], data: &Dataset) -> Result<Vec<f64>> {
    if data.n_rows() == 0 {
        return Err(Error::param("cannot evaluate queries on an empty dataset"));
    }
    QuerySet::new(data.schema().clone(), workloads)?.answers(data)
}

/// All size-k subsets of `items`, in lexicographic order.
fn combinations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
    let n = items.len();
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.iter().map(|&i| items[i]).collect());
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return out;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Cartesian product of `0..sizes[i]`, last position varying fastest.
fn product(sizes: &[u64]) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    for &s in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..s).map(move |v| {
                    let mut p = prefix.clone();
                    p.push(v);
                    p
                })
            })
            .collect();
    }
    out
}

fn attr_names(schema: &DomainSchema, idx: &[usize]) -> String {
    idx.iter()
        .map(|&j| schema.attribute(j).name.as_str())
        .collect::<Vec<_>>()
        .join(",")
}

/// One workload per size-k subset of categorical attributes, holding every
/// value combination. Answers of each workload sum to 1, so Δ₂ = √2.
pub fn gen_categorical_marginal_workloads(schema: &DomainSchema, k: usize) -> Result<Vec<Workload>> {
    let cats = schema.categorical_indices();
    if k == 0 || k > cats.len() {
        return Err(Error::param(format!(
            "k={k} needs between 1 and {} categorical attributes",
            cats.len()
        )));
    }
    Ok(combinations(&cats, k)
        .into_iter()
        .map(|features| {
            let sizes: Vec<u64> = features
                .iter()
                .map(|&j| schema.attribute(j).cardinality().unwrap() as u64)
                .collect();
            let queries = product(&sizes)
                .into_iter()
                .map(|vals| Query::CategoricalMarginal {
                    features: features.clone(),
                    values: vals.into_iter().map(|v| v as u32).collect(),
                })
                .collect();
            Workload {
                name: format!("cat[{}]", attr_names(schema, &features)),
                kind: WorkloadKind::CategoricalMarginal { k },
                queries,
                l2_sensitivity: 2f64.sqrt(),
            }
        })
        .collect())
}

/// Binary-tree marginals: one categorical attribute (every value) crossed with
/// k−1 numeric attributes, each numeric attribute restricted to a dyadic
/// interval of width 1/2^j, j = 1..=levels. All numeric attributes of a query
/// share the same level, so each row falls in exactly one cell per level and
/// Δ₂ = sqrt(2·levels).
pub fn gen_binary_tree_workloads(schema: &DomainSchema, k: usize, levels: u32) -> Result<Vec<Workload>> {
    if k < 2 {
        return Err(Error::param("binary-tree marginals need k >= 2"));
    }
    if levels == 0 || levels > 20 {
        return Err(Error::param(format!("levels must be in 1..=20, got {levels}")));
    }
    let cats = schema.categorical_indices();
    let nums = schema.numeric_indices();
    if cats.is_empty() || nums.len() < k - 1 {
        return Err(Error::param(format!(
            "binary-tree marginals with k={k} need 1 categorical and {} numeric attributes",
            k - 1
        )));
    }
    let mut out = Vec::new();
    for &c in &cats {
        let card = schema.attribute(c).cardinality().unwrap() as u32;
        for num_features in combinations(&nums, k - 1) {
            let mut queries = Vec::new();
            for v in 0..card {
                for level in 1..=levels {
                    let cells = product(&vec![1u64 << level; k - 1]);
                    for cell in cells {
                        queries.push(Query::RangeMarginal {
                            cat_features: vec![c],
                            cat_values: vec![v],
                            num_features: num_features.clone(),
                            intervals: cell.into_iter().map(|i| Interval::dyadic(level, i)).collect(),
                        });
                    }
                }
            }
            let mut all = vec![c];
            all.extend(&num_features);
            out.push(Workload {
                name: format!("bt[{}]", attr_names(schema, &all)),
                kind: WorkloadKind::BinaryTree { k, levels },
                queries,
                l2_sensitivity: (2.0 * levels as f64).sqrt(),
            });
        }
    }
    Ok(out)
}

/// Number of intervals per numeric feature in a binary-tree workload.
pub fn binary_tree_interval_count(levels: u32) -> u64 {
    (1..=levels).map(|j| 1u64 << j).sum()
}

/// `m` random prefix queries `x_c = v ∧ x_a < τ_a ∧ x_b < τ_b`.
pub fn gen_random_prefixes<R: Rng + ?Sized>(schema: &DomainSchema, m: usize, rng: &mut R) -> Result<Workload> {
    let cats = schema.categorical_indices();
    let nums = schema.numeric_indices();
    if cats.is_empty() || nums.len() < 2 {
        return Err(Error::param(
            "random prefixes need at least 1 categorical and 2 numeric attributes",
        ));
    }
    let queries = (0..m)
        .map(|_| {
            let c = cats[rng.random_range(0..cats.len())];
            let pair = index::sample(rng, nums.len(), 2);
            let (a, b) = (nums[pair.index(0)], nums[pair.index(1)]);
            let v = rng.random_range(0..schema.attribute(c).cardinality().unwrap()) as u32;
            let ta: f64 = rng.random();
            let tb: f64 = rng.random();
            Query::Prefix {
                anchor: Some((c, v)),
                features: vec![a, b],
                thresholds: vec![ta, tb],
                strict: true,
            }
        })
        .collect();
    Ok(Workload {
        name: format!("prefixes[m={m}]"),
        kind: WorkloadKind::RandomPrefix,
        queries,
        l2_sensitivity: 1.0,
    })
}

/// `m` random halfspaces over the one-hot space: θ_i ~ N(0, 1/d) with d the
/// attribute count, τ ~ N(0, 1).
pub fn gen_random_halfspaces<R: Rng + ?Sized>(schema: &DomainSchema, m: usize, rng: &mut R) -> Result<Workload> {
    if schema.is_empty() {
        return Err(Error::param("random halfspaces need a nonempty schema"));
    }
    let dim = schema.one_hot_dim();
    let coord = Normal::new(0.0, (1.0 / schema.len() as f64).sqrt()).expect("valid normal");
    let queries = (0..m)
        .map(|_| {
            let theta: Vec<f64> = (0..dim).map(|_| coord.sample(rng)).collect();
            let tau: f64 = rng.sample(StandardNormal);
            Query::Halfspace { theta, tau }
        })
        .collect();
    Ok(Workload {
        name: format!("halfspaces[m={m}]"),
        kind: WorkloadKind::RandomHalfspace,
        queries,
        l2_sensitivity: 1.0,
    })
}

// ---------------------------------------------------------------------------
// Workload manifests: the same queries with attributes and categories
// referenced by name, so an archived query set can be re-evaluated.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryRef {
    pub feature: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeRef {
    pub feature: String,
    pub interval: Interval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdRef {
    pub feature: String,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum QueryDoc {
    CategoricalMarginal {
        match_: Vec<CategoryRef>,
    },
    RangeMarginal {
        match_: Vec<CategoryRef>,
        ranges: Vec<RangeRef>,
    },
    Prefix {
        anchor: Option<CategoryRef>,
        thresholds: Vec<ThresholdRef>,
        strict: bool,
    },
    Halfspace {
        theta: Vec<f64>,
        tau: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadDoc {
    pub name: String,
    pub kind: WorkloadKind,
    pub l2_sensitivity: f64,
    pub queries: Vec<QueryDoc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadManifest {
    pub schema_digest: String,
    pub workloads: Vec<WorkloadDoc>,
}

/// SHA-256 of the schema's canonical JSON, hex encoded.
pub fn schema_digest(schema: &DomainSchema) -> String {
    use sha2::{Digest, Sha256};
    let canonical = serde_json::to_vec(schema).expect("schema serializes");
    hex::encode(Sha256::digest(&canonical))
}

fn cat_ref(schema: &DomainSchema, j: usize, v: u32) -> CategoryRef {
    let attr = schema.attribute(j);
    let value = match &attr.kind {
        AttributeKind::Categorical { categories } => categories[v as usize].clone(),
        AttributeKind::Numeric { .. } => unreachable!("validated categorical"),
    };
    CategoryRef {
        feature: attr.name.clone(),
        value,
    }
}

impl WorkloadManifest {
    pub fn build(schema: &DomainSchema, workloads: &[Workload]) -> Result<Self> {
        let mut docs = Vec::with_capacity(workloads.len());
        for w in workloads {
            w.validate(schema)?;
            let queries = w
                .queries
                .iter()
                .map(|q| match q {
                    Query::CategoricalMarginal { features, values } => QueryDoc::CategoricalMarginal {
                        match_: features.iter().zip(values).map(|(&j, &v)| cat_ref(schema, j, v)).collect(),
                    },
                    Query::RangeMarginal {
                        cat_features,
                        cat_values,
                        num_features,
                        intervals,
                    } => QueryDoc::RangeMarginal {
                        match_: cat_features
                            .iter()
                            .zip(cat_values)
                            .map(|(&j, &v)| cat_ref(schema, j, v))
                            .collect(),
                        ranges: num_features
                            .iter()
                            .zip(intervals)
                            .map(|(&j, iv)| RangeRef {
                                feature: schema.attribute(j).name.clone(),
                                interval: *iv,
                            })
                            .collect(),
                    },
                    Query::Prefix {
                        anchor,
                        features,
                        thresholds,
                        strict,
                    } => QueryDoc::Prefix {
                        anchor: anchor.map(|(c, v)| cat_ref(schema, c, v)),
                        thresholds: features
                            .iter()
                            .zip(thresholds)
                            .map(|(&j, &t)| ThresholdRef {
                                feature: schema.attribute(j).name.clone(),
                                threshold: t,
                            })
                            .collect(),
                        strict: *strict,
                    },
                    Query::Halfspace { theta, tau } => QueryDoc::Halfspace {
                        theta: theta.clone(),
                        tau: *tau,
                    },
                })
                .collect();
            docs.push(WorkloadDoc {
                name: w.name.clone(),
                kind: w.kind.clone(),
                l2_sensitivity: w.l2_sensitivity,
                queries,
            });
        }
        Ok(Self {
            schema_digest: schema_digest(schema),
            workloads: docs,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            field: "workload manifest".into(),
            message: e.to_string(),
        })
    }

    /// Resolve names against `schema`. Errors name the offending field path.
    pub fn resolve(&self, schema: &DomainSchema) -> Result<Vec<Workload>> {
        if self.schema_digest != schema_digest(schema) {
            return Err(Error::Parse {
                field: "schema_digest".into(),
                message: "manifest was built for a different schema".into(),
            });
        }
        let parse_err = |field: String, message: String| Error::Parse { field, message };
        let feature = |path: &str, name: &str| -> Result<usize> {
            schema
                .index_of(name)
                .ok_or_else(|| parse_err(path.to_string(), format!("unknown attribute `{name}`")))
        };
        let category = |path: &str, r: &CategoryRef| -> Result<(usize, u32)> {
            let j = feature(&format!("{path}.feature"), &r.feature)?;
            match &schema.attribute(j).kind {
                AttributeKind::Categorical { categories } => categories
                    .iter()
                    .position(|c| *c == r.value)
                    .map(|v| (j, v as u32))
                    .ok_or_else(|| parse_err(format!("{path}.value"), format!("unknown category `{}`", r.value))),
                AttributeKind::Numeric { .. } => Err(parse_err(
                    format!("{path}.feature"),
                    format!("`{}` is not categorical", r.feature),
                )),
            }
        };
        let mut out = Vec::with_capacity(self.workloads.len());
        for (wi, doc) in self.workloads.iter().enumerate() {
            let mut queries = Vec::with_capacity(doc.queries.len());
            for (qi, qd) in doc.queries.iter().enumerate() {
                let path = format!("workloads[{wi}].queries[{qi}]");
                let q = match qd {
                    QueryDoc::CategoricalMarginal { match_ } => {
                        let pairs = match_
                            .iter()
                            .enumerate()
                            .map(|(k, r)| category(&format!("{path}.match_[{k}]"), r))
                            .collect::<Result<Vec<_>>>()?;
                        Query::CategoricalMarginal {
                            features: pairs.iter().map(|p| p.0).collect(),
                            values: pairs.iter().map(|p| p.1).collect(),
                        }
                    }
                    QueryDoc::RangeMarginal { match_, ranges } => {
                        let pairs = match_
                            .iter()
                            .enumerate()
                            .map(|(k, r)| category(&format!("{path}.match_[{k}]"), r))
                            .collect::<Result<Vec<_>>>()?;
                        let num_features = ranges
                            .iter()
                            .enumerate()
                            .map(|(k, r)| feature(&format!("{path}.ranges[{k}].feature"), &r.feature))
                            .collect::<Result<Vec<_>>>()?;
                        Query::RangeMarginal {
                            cat_features: pairs.iter().map(|p| p.0).collect(),
                            cat_values: pairs.iter().map(|p| p.1).collect(),
                            num_features,
                            intervals: ranges.iter().map(|r| r.interval).collect(),
                        }
                    }
                    QueryDoc::Prefix {
                        anchor,
                        thresholds,
                        strict,
                    } => Query::Prefix {
                        anchor: anchor
                            .as_ref()
                            .map(|r| category(&format!("{path}.anchor"), r))
                            .transpose()?,
                        features: thresholds
                            .iter()
                            .enumerate()
                            .map(|(k, t)| feature(&format!("{path}.thresholds[{k}].feature"), &t.feature))
                            .collect::<Result<Vec<_>>>()?,
                        thresholds: thresholds.iter().map(|t| t.threshold).collect(),
                        strict: *strict,
                    },
                    QueryDoc::Halfspace { theta, tau } => Query::Halfspace {
                        theta: theta.clone(),
                        tau: *tau,
                    },
                };
                q.validate(schema).map_err(|e| parse_err(path.clone(), e.to_string()))?;
                queries.push(q);
            }
            let w = Workload {
                name: doc.name.clone(),
                kind: doc.kind.clone(),
                queries,
                l2_sensitivity: doc.l2_sensitivity,
            };
            if !(w.l2_sensitivity.is_finite() && w.l2_sensitivity > 0.0) {
                return Err(parse_err(
                    format!("workloads[{wi}].l2_sensitivity"),
                    "must be positive".into(),
                ));
            }
            out.push(w);
        }
        Ok(out)
    }
}
