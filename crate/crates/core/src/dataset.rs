//! Domain schema, columnar dataset container, CSV ingestion and one-hot encoding.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kind of one attribute. Categorical values are stored as indices into
/// `categories`; numeric values live in [0,1] after normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum AttributeKind {
    Categorical {
        categories: Vec<String>,
    },
    Numeric {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    #[serde(flatten)]
    pub kind: AttributeKind,
}

impl Attribute {
    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Categorical { categories },
        }
    }

    /// Categorical attribute whose category labels are "0", "1", ...
    pub fn categorical_n(name: impl Into<String>, cardinality: usize) -> Self {
        Self::categorical(name, (0..cardinality).map(|i| i.to_string()).collect())
    }

    pub fn numeric(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Numeric { min: None, max: None },
        }
    }

    pub fn numeric_with_range(name: impl Into<String>, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            kind: AttributeKind::Numeric {
                min: Some(min),
                max: Some(max),
            },
        }
    }

    pub fn cardinality(&self) -> Option<usize> {
        match &self.kind {
            AttributeKind::Categorical { categories } => Some(categories.len()),
            AttributeKind::Numeric { .. } => None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, AttributeKind::Categorical { .. })
    }

    pub fn is_numeric(&self) -> bool {
        !self.is_categorical()
    }

    /// Width of this attribute's block in the one-hot encoding.
    pub fn one_hot_width(&self) -> usize {
        self.cardinality().unwrap_or(1)
    }

    fn declared_range(&self) -> Option<(f64, f64)> {
        match self.kind {
            AttributeKind::Numeric {
                min: Some(lo),
                max: Some(hi),
            } => Some((lo, hi)),
            _ => None,
        }
    }
}

/// Ordered list of attributes defining the data domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSchema {
    attributes: Vec<Attribute>,
}

impl DomainSchema {
    pub fn new(attributes: Vec<Attribute>) -> Result<Self> {
        let schema = Self { attributes };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<()> {
        if self.attributes.is_empty() {
            return Err(Error::Schema("schema has no attributes".into()));
        }
        let mut seen = HashSet::new();
        for attr in &self.attributes {
            if !seen.insert(attr.name.as_str()) {
                return Err(Error::Schema(format!("duplicate attribute name `{}`", attr.name)));
            }
            match &attr.kind {
                AttributeKind::Categorical { categories } => {
                    if categories.len() < 2 {
                        return Err(Error::Schema(format!(
                            "categorical attribute `{}` needs at least 2 categories",
                            attr.name
                        )));
                    }
                    let distinct: HashSet<_> = categories.iter().collect();
                    if distinct.len() != categories.len() {
                        return Err(Error::Schema(format!(
                            "categorical attribute `{}` lists a category twice",
                            attr.name
                        )));
                    }
                }
                AttributeKind::Numeric { min, max } => match (min, max) {
                    (None, None) => {}
                    (Some(lo), Some(hi)) if lo.is_finite() && hi.is_finite() && lo <= hi => {}
                    _ => {
                        return Err(Error::Schema(format!(
                            "numeric attribute `{}` must declare both min <= max or neither",
                            attr.name
                        )))
                    }
                },
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: DomainSchema = serde_json::from_str(text).map_err(|e| Error::Parse {
            field: "schema".into(),
            message: e.to_string(),
        })?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    pub fn attributes(&self) -> &[Attribute] {
        &self.attributes
    }

    pub fn attribute(&self, idx: usize) -> &Attribute {
        &self.attributes[idx]
    }

    pub fn len(&self) -> usize {
        self.attributes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.attributes.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn categorical_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.attributes[i].is_categorical()).collect()
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.attributes[i].is_numeric()).collect()
    }

    pub fn one_hot_dim(&self) -> usize {
        self.attributes.iter().map(Attribute::one_hot_width).sum()
    }

    /// Start offset of each attribute's block in the one-hot encoding.
    pub fn one_hot_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.len());
        let mut acc = 0;
        for attr in &self.attributes {
            offsets.push(acc);
            acc += attr.one_hot_width();
        }
        offsets
    }

    /// Number of points in a fully categorical domain, or `None` if any
    /// attribute is numeric (or the count overflows).
    pub fn discrete_size(&self) -> Option<usize> {
        self.attributes
            .iter()
            .try_fold(1usize, |acc, a| acc.checked_mul(a.cardinality()?))
    }

    pub fn check_value(&self, col: usize, value: Value) -> Result<()> {
        let attr = &self.attributes[col];
        match (&attr.kind, value) {
            (AttributeKind::Categorical { categories }, Value::Cat(v)) if (v as usize) < categories.len() => Ok(()),
            (AttributeKind::Numeric { .. }, Value::Num(x)) if (0.0..=1.0).contains(&x) => Ok(()),
            _ => Err(Error::param(format!(
                "value {value:?} outside the domain of attribute `{}`",
                attr.name
            ))),
        }
    }

    /// Uniform draw from one attribute's domain.
    pub fn sample_value<R: Rng + ?Sized>(&self, col: usize, rng: &mut R) -> Value {
        match &self.attributes[col].kind {
            AttributeKind::Categorical { categories } => Value::Cat(rng.random_range(0..categories.len()) as u32),
            AttributeKind::Numeric { .. } => Value::Num(rng.random::<f64>()),
        }
    }
}

/// One cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Cat(u32),
    Num(f64),
}

impl Value {
    pub fn as_cat(self) -> Option<u32> {
        match self {
            Value::Cat(v) => Some(v),
            Value::Num(_) => None,
        }
    }

    pub fn as_num(self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(x),
            Value::Cat(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Cat(Vec<u32>),
    Num(Vec<f64>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Cat(v) => v.len(),
            Column::Num(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, row: usize) -> Value {
        match self {
            Column::Cat(v) => Value::Cat(v[row]),
            Column::Num(v) => Value::Num(v[row]),
        }
    }

    fn set(&mut self, row: usize, value: Value) {
        match (self, value) {
            (Column::Cat(v), Value::Cat(x)) => v[row] = x,
            (Column::Num(v), Value::Num(x)) => v[row] = x,
            _ => panic!("value kind does not match column kind"),
        }
    }
}

/// N rows over a schema, stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<DomainSchema>,
    columns: Vec<Column>,
    n_rows: usize,
}

impl Dataset {
    pub fn from_columns(schema: Arc<DomainSchema>, columns: Vec<Column>) -> Result<Self> {
        if columns.len() != schema.len() {
            return Err(Error::param(format!(
                "expected {} columns, got {}",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map(Column::len).unwrap_or(0);
        let data = Self {
            schema,
            columns,
            n_rows,
        };
        data.validate()?;
        Ok(data)
    }

    pub fn from_rows(schema: Arc<DomainSchema>, rows: &[Vec<Value>]) -> Result<Self> {
        let mut columns: Vec<Column> = schema
            .attributes()
            .iter()
            .map(|a| {
                if a.is_categorical() {
                    Column::Cat(Vec::with_capacity(rows.len()))
                } else {
                    Column::Num(Vec::with_capacity(rows.len()))
                }
            })
            .collect();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::param(format!(
                    "row {r} has {} cells, schema has {} attributes",
                    row.len(),
                    schema.len()
                )));
            }
            for (col, &value) in columns.iter_mut().zip(row) {
                match (col, value) {
                    (Column::Cat(v), Value::Cat(x)) => v.push(x),
                    (Column::Num(v), Value::Num(x)) => v.push(x),
                    _ => return Err(Error::param(format!("row {r} has a cell of the wrong kind"))),
                }
            }
        }
        let n_rows = rows.len();
        let data = Self {
            schema,
            columns,
            n_rows,
        };
        data.validate()?;
        Ok(data)
    }

    /// `n_rows` rows drawn uniformly from the domain.
    pub fn random<R: Rng + ?Sized>(schema: Arc<DomainSchema>, n_rows: usize, rng: &mut R) -> Self {
        let columns = schema
            .attributes()
            .iter()
            .map(|a| match &a.kind {
                AttributeKind::Categorical { categories } => {
                    let k = categories.len();
                    Column::Cat((0..n_rows).map(|_| rng.random_range(0..k) as u32).collect())
                }
                AttributeKind::Numeric { .. } => Column::Num((0..n_rows).map(|_| rng.random::<f64>()).collect()),
            })
            .collect();
        Self {
            schema,
            columns,
            n_rows,
        }
    }

    /// Check that every cell lies in its attribute's domain.
    pub fn validate(&self) -> Result<()> {
        for (j, (attr, col)) in self.schema.attributes().iter().zip(&self.columns).enumerate() {
            if col.len() != self.n_rows {
                return Err(Error::param(format!("column `{}` has {} rows, expected {}", attr.name, col.len(), self.n_rows)));
            }
            match (&attr.kind, col) {
                (AttributeKind::Categorical { categories }, Column::Cat(v)) => {
                    if let Some(i) = v.iter().position(|&x| x as usize >= categories.len()) {
                        return Err(Error::param(format!(
                            "row {i}, column `{}`: category index {} out of range",
                            attr.name, v[i]
                        )));
                    }
                }
                (AttributeKind::Numeric { .. }, Column::Num(v)) => {
                    if let Some(i) = v.iter().position(|x| !(0.0..=1.0).contains(x)) {
                        return Err(Error::param(format!(
                            "row {i}, column `{}`: value {} outside [0,1]",
                            attr.name, v[i]
                        )));
                    }
                }
                _ => return Err(Error::param(format!("column {j} kind does not match schema"))),
            }
        }
        Ok(())
    }

    pub fn schema(&self) -> &Arc<DomainSchema> {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Value {
        self.columns[col].get(row)
    }

    /// Overwrite one cell after checking it against the schema.
    pub fn set(&mut self, row: usize, col: usize, value: Value) -> Result<()> {
        if row >= self.n_rows {
            return Err(Error::param(format!("row {row} out of range")));
        }
        self.schema.check_value(col, value)?;
        self.columns[col].set(row, value);
        Ok(())
    }

    pub(crate) fn set_unchecked(&mut self, row: usize, col: usize, value: Value) {
        self.columns[col].set(row, value);
    }

    pub fn row(&self, i: usize) -> Vec<Value> {
        self.columns.iter().map(|c| c.get(i)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<Value>> {
        (0..self.n_rows).map(|i| self.row(i)).collect()
    }

    /// Number of cells that differ from `other` (same shape required).
    pub fn hamming(&self, other: &Dataset) -> usize {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.columns.len(), other.columns.len());
        let mut diff = 0;
        for (a, b) in self.columns.iter().zip(&other.columns) {
            diff += match (a, b) {
                (Column::Cat(x), Column::Cat(y)) => x.iter().zip(y).filter(|(p, q)| p != q).count(),
                (Column::Num(x), Column::Num(y)) => x.iter().zip(y).filter(|(p, q)| p != q).count(),
                _ => panic!("column kind mismatch"),
            };
        }
        diff
    }
}

/// One-hot encoding of a row: categorical attributes become indicator blocks,
/// numeric attributes contribute their value as a single coordinate.
pub fn one_hot(row: &[Value], schema: &DomainSchema) -> Vec<f64> {
    let mut out = vec![0.0; schema.one_hot_dim()];
    let mut offset = 0;
    for (attr, value) in schema.attributes().iter().zip(row) {
        match value {
            Value::Cat(v) => out[offset + *v as usize] = 1.0,
            Value::Num(x) => out[offset] = *x,
        }
        offset += attr.one_hot_width();
    }
    out
}

/// Affine map applied to a numeric column: x ↦ (x − min)/(max − min).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnRange {
    pub min: f64,
    pub max: f64,
}

impl ColumnRange {
    pub fn normalize(&self, x: f64) -> f64 {
        if self.max > self.min {
            (x - self.min) / (self.max - self.min)
        } else {
            0.0
        }
    }

    pub fn denormalize(&self, x: f64) -> f64 {
        self.min + x * (self.max - self.min)
    }
}

/// Per-attribute ranges (`None` for categorical attributes and for numeric
/// attributes read without normalization).
pub type NormalizationParams = Vec<Option<ColumnRange>>;

/// How numeric columns are scaled while loading.
#[derive(Debug, Clone)]
pub enum Normalization {
    /// Values are already in [0,1].
    Off,
    /// Use the schema's declared range when present, otherwise the observed min and max.
    Observed,
    /// Apply given ranges. Values may overshoot [0,1] by at most 1e-9 and are clamped.
    Fixed(NormalizationParams),
}

const FIXED_RANGE_SLACK: f64 = 1e-9;

fn ingest_err(row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Ingestion {
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Read a headed CSV file. Columns are matched to attributes by name; extra
/// CSV columns are ignored. Row numbers in errors count data rows from 1.
pub fn load_csv(
    path: impl AsRef<Path>,
    schema: Arc<DomainSchema>,
    normalization: Normalization,
) -> Result<(Dataset, NormalizationParams)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema, normalization)
}

pub fn read_csv<R: std::io::Read>(
    reader: R,
    schema: Arc<DomainSchema>,
    normalization: Normalization,
) -> Result<(Dataset, NormalizationParams)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| ingest_err(0, "<header>", e.to_string()))?
        .clone();
    let mut positions = Vec::with_capacity(schema.len());
    for attr in schema.attributes() {
        let pos = headers
            .iter()
            .position(|h| h.trim() == attr.name)
            .ok_or_else(|| ingest_err(0, &attr.name, "missing column"))?;
        positions.push(pos);
    }
    let lookups: Vec<Option<HashMap<&str, u32>>> = schema
        .attributes()
        .iter()
        .map(|a| match &a.kind {
            AttributeKind::Categorical { categories } => Some(
                categories
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.as_str(), i as u32))
                    .collect(),
            ),
            AttributeKind::Numeric { .. } => None,
        })
        .collect();

    let mut cats: Vec<Vec<u32>> = vec![Vec::new(); schema.len()];
    let mut nums: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| ingest_err(row, "<record>", e.to_string()))?;
        for (j, attr) in schema.attributes().iter().enumerate() {
            let raw = record
                .get(positions[j])
                .ok_or_else(|| ingest_err(row, &attr.name, "missing cell"))?
                .trim();
            match &lookups[j] {
                Some(map) => {
                    let idx = map
                        .get(raw)
                        .ok_or_else(|| ingest_err(row, &attr.name, format!("unknown category `{raw}`")))?;
                    cats[j].push(*idx);
                }
                None => {
                    let x: f64 = raw
                        .parse()
                        .map_err(|_| ingest_err(row, &attr.name, format!("non-numeric value `{raw}`")))?;
                    if !x.is_finite() {
                        return Err(ingest_err(row, &attr.name, format!("non-finite value `{raw}`")));
                    }
                    nums[j].push(x);
                }
            }
        }
    }

    let mut params: NormalizationParams = vec![None; schema.len()];
    let mut columns = Vec::with_capacity(schema.len());
    for (j, attr) in schema.attributes().iter().enumerate() {
        if attr.is_categorical() {
            columns.push(Column::Cat(std::mem::take(&mut cats[j])));
            continue;
        }
        let mut values = std::mem::take(&mut nums[j]);
        let range = match &normalization {
            Normalization::Off => None,
            Normalization::Observed => Some(match attr.declared_range() {
                Some((min, max)) => ColumnRange { min, max },
                None => {
                    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
                    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    if values.is_empty() {
                        ColumnRange { min: 0.0, max: 0.0 }
                    } else {
                        ColumnRange { min, max }
                    }
                }
            }),
            Normalization::Fixed(p) => p.get(j).copied().flatten(),
        };
        if let Some(range) = range {
            let slack = match normalization {
                Normalization::Fixed(_) => FIXED_RANGE_SLACK,
                _ => 0.0,
            };
            for (i, x) in values.iter_mut().enumerate() {
                let y = range.normalize(*x);
                if !(-slack..=1.0 + slack).contains(&y) {
                    return Err(ingest_err(
                        i + 1,
                        &attr.name,
                        format!("value {x} outside range [{}, {}]", range.min, range.max),
                    ));
                }
                *x = y.clamp(0.0, 1.0);
            }
        } else if let Some(i) = values.iter().position(|x| !(0.0..=1.0).contains(x)) {
            return Err(ingest_err(i + 1, &attr.name, format!("value {} outside [0,1]", values[i])));
        }
        params[j] = range;
        columns.push(Column::Num(values));
    }
    let data = Dataset::from_columns(schema, columns).map_err(|e| ingest_err(0, "<dataset>", e.to_string()))?;
    Ok((data, params))
}

/// Format with 9 significant digits, printed in shortest round-trip form.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("formatted float parses");
    format!("{rounded}")
}

/// Write a headed CSV. Numeric cells are mapped back through `denormalize`
/// when given, and written with 9 significant digits.
pub fn save_csv(data: &Dataset, path: impl AsRef<Path>, denormalize: Option<&NormalizationParams>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file), denormalize).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_csv<W: std::io::Write>(
    data: &Dataset,
    writer: W,
    denormalize: Option<&NormalizationParams>,
) -> Result<()> {
    let to_io = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
    let schema = data.schema();
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(schema.attributes().iter().map(|a| a.name.as_str()))
        .map_err(to_io)?;
    let mut record = Vec::with_capacity(schema.len());
    for i in 0..data.n_rows() {
        record.clear();
        for (j, attr) in schema.attributes().iter().enumerate() {
            let cell = match (&attr.kind, data.get(i, j)) {
                (AttributeKind::Categorical { categories }, Value::Cat(v)) => categories[v as usize].clone(),
                (AttributeKind::Numeric { .. }, Value::Num(x)) => {
                    let range = denormalize.and_then(|p| p.get(j).copied().flatten());
                    format_sig9(range.map_or(x, |r| r.denormalize(x)))
                }
                _ => unreachable!("dataset validated against schema"),
            };
            record.push(cell);
        }
        wtr.write_record(&record).map_err(to_io)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cat_num_schema() -> Arc<DomainSchema> {
        Arc::new(
            DomainSchema::new(vec![
                Attribute::categorical("color", vec!["red".into(), "green".into(), "blue".into()]),
                Attribute::numeric("size"),
            ])
            .unwrap(),
        )
    }

    #[test]
    fn one_hot_examples() {
        let s = DomainSchema::new(vec![Attribute::categorical_n("a", 3), Attribute::numeric("x")]).unwrap();
        assert_eq!(one_hot(&[Value::Cat(2), Value::Num(0.4)], &s), vec![0.0, 0.0, 1.0, 0.4]);
        let s = DomainSchema::new(vec![Attribute::categorical_n("a", 2)]).unwrap();
        assert_eq!(one_hot(&[Value::Cat(0)], &s), vec![1.0, 0.0]);
        let s = DomainSchema::new(vec![Attribute::numeric("x"), Attribute::numeric("y")]).unwrap();
        assert_eq!(one_hot(&[Value::Num(0.1), Value::Num(0.9)], &s), vec![0.1, 0.9]);
    }

    #[test]
    fn schema_validation() {
        assert!(DomainSchema::new(vec![Attribute::categorical_n("a", 1)]).is_err());
        assert!(DomainSchema::new(vec![Attribute::numeric("a"), Attribute::numeric("a")]).is_err());
        assert!(DomainSchema::new(vec![]).is_err());
        let s = cat_num_schema();
        assert_eq!(s.one_hot_dim(), 4);
        assert_eq!(s.one_hot_offsets(), vec![0, 3]);
    }

    #[test]
    fn schema_json_round_trip() {
        let text = r#"{"attributes":[
            {"name":"sex","kind":"categorical","categories":["M","F"]},
            {"name":"age","kind":"numeric","min":0,"max":100},
            {"name":"w","kind":"numeric"}]}"#;
        let s = DomainSchema::from_json(text).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.attribute(1).declared_range(), Some((0.0, 100.0)));
        assert_eq!(DomainSchema::from_json(&s.to_json()).unwrap(), s);
    }

    #[test]
    fn normalize_on_load() {
        let csv = "color,size\nred,10\ngreen,20\nblue,30\n";
        let (d, params) = read_csv(csv.as_bytes(), cat_num_schema(), Normalization::Observed).unwrap();
        assert_eq!(d.column(1), &Column::Num(vec![0.0, 0.5, 1.0]));
        assert_eq!(params[1], Some(ColumnRange { min: 10.0, max: 30.0 }));
        assert_eq!(d.column(0), &Column::Cat(vec![0, 1, 2]));
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let csv = "color,size\nred,7\ngreen,7\n";
        let (d, _) = read_csv(csv.as_bytes(), cat_num_schema(), Normalization::Observed).unwrap();
        assert_eq!(d.column(1), &Column::Num(vec![0.0, 0.0]));
    }

    #[test]
    fn ingestion_errors_name_row_and_column() {
        let bad_cat = "color,size\nred,0.1\npurple,0.2\n";
        match read_csv(bad_cat.as_bytes(), cat_num_schema(), Normalization::Off) {
            Err(Error::Ingestion { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "color");
            }
            other => panic!("expected ingestion error, got {other:?}"),
        }
        let bad_num = "color,size\nred,abc\n";
        assert!(matches!(
            read_csv(bad_num.as_bytes(), cat_num_schema(), Normalization::Off),
            Err(Error::Ingestion { ref column, .. }) if column == "size"
        ));
        let missing = "color\nred\n";
        assert!(matches!(
            read_csv(missing.as_bytes(), cat_num_schema(), Normalization::Off),
            Err(Error::Ingestion { ref column, .. }) if column == "size"
        ));
    }

    #[test]
    fn denormalize_on_save() {
        let s = Arc::new(DomainSchema::new(vec![Attribute::numeric("x")]).unwrap());
        let d = Dataset::from_rows(s, &[vec![Value::Num(0.5)]]).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf, Some(&vec![Some(ColumnRange { min: 0.0, max: 100.0 })])).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x\n50\n");
    }

    #[test]
    fn save_to_unwritable_path_fails() {
        let s = cat_num_schema();
        let d = Dataset::from_rows(s, &[vec![Value::Cat(0), Value::Num(0.1)]]).unwrap();
        let err = save_csv(&d, "/nonexistent-dir/out.csv", None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn save_load_round_trip_mixed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let s = cat_num_schema();
        let rows: Vec<Vec<Value>> = (0..5)
            .map(|i| vec![Value::Cat(i % 3), Value::Num(i as f64 / 7.0)])
            .collect();
        let d = Dataset::from_rows(s.clone(), &rows).unwrap();
        save_csv(&d, &path, None).unwrap();
        let (back, _) = load_csv(&path, s, Normalization::Off).unwrap();
        assert_eq!(back.column(0), d.column(0));
        let (Column::Num(a), Column::Num(b)) = (back.column(1), d.column(1)) else { unreachable!() };
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.5), "0.5");
        assert_eq!(format_sig9(0.123456789012), "0.123456789");
        assert_eq!(format_sig9(50.0), "50");
        assert_eq!(format_sig9(0.0), "0");
    }

    proptest! {
        #[test]
        fn corrupting_one_cell_is_detected(seed in any::<u64>(), row in 0usize..6, col in 0usize..2, bad in 3u32..100, badx in 1.0001f64..5.0) {
            let mut rng = crate::rng::substream(seed, &[]);
            let mut d = Dataset::random(cat_num_schema(), 6, &mut rng);
            prop_assert!(d.validate().is_ok());
            let value = if col == 0 { Value::Cat(bad) } else if bad % 2 == 0 { Value::Num(badx) } else { Value::Num(-badx) };
            prop_assert!(d.set(row, col, value).is_err());
            d.set_unchecked(row, col, value);
            prop_assert!(d.validate().is_err());
        }

        #[test]
        fn round_trip_random(seed in any::<u64>(), n in 1usize..20) {
            let mut rng = crate::rng::substream(seed, &[]);
            let d = Dataset::random(cat_num_schema(), n, &mut rng);
            let mut buf = Vec::new();
            write_csv(&d, &mut buf, None).unwrap();
            let (back, _) = read_csv(buf.as_slice(), cat_num_schema(), Normalization::Off).unwrap();
            prop_assert_eq!(back.column(0), d.column(0));
            let (Column::Num(a), Column::Num(b)) = (back.column(1), d.column(1)) else { unreachable!() };
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn one_hot_has_one_per_categorical(seed in any::<u64>()) {
            let mut rng = crate::rng::substream(seed, &[]);
            let s = Arc::new(DomainSchema::new(vec![
                Attribute::categorical_n("a", 3), Attribute::numeric("x"), Attribute::categorical_n("b", 5),
            ]).unwrap());
            let d = Dataset::random(s.clone(), 1, &mut rng);
            let v = one_hot(&d.row(0), &s);
            let ones = v[0..3].iter().chain(&v[4..9]).filter(|&&x| x == 1.0).count();
            prop_assert_eq!(ones, 2);
        }
    }
}
