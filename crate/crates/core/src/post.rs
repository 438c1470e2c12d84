//! Result values and the client-side aggregates the SQL dialect cannot
//! express.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize, Serializer};

use crate::taxonomy::TypeSet;

#[derive(Debug, Clone, PartialEq)]
pub enum Scalar {
    Integer(i64),
    Decimal(f64),
    Text(String),
    Datetime(String),
    Boolean(bool),
    Null,
}

impl Scalar {
    pub fn is_null(&self) -> bool {
        matches!(self, Scalar::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Integer(i) => Some(*i as f64),
            Scalar::Decimal(d) => Some(*d),
            Scalar::Boolean(b) => Some(f64::from(u8::from(*b))),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Scalar::Null => 0,
            Scalar::Integer(_) | Scalar::Decimal(_) | Scalar::Boolean(_) => 1,
            Scalar::Text(_) | Scalar::Datetime(_) => 2,
        }
    }

    /// Total order: nulls, then numbers, then text.
    pub fn total_cmp(&self, other: &Scalar) -> Ordering {
        match (self, other) {
            (Scalar::Integer(a), Scalar::Integer(b)) => a.cmp(b),
            (Scalar::Text(a) | Scalar::Datetime(a), Scalar::Text(b) | Scalar::Datetime(b)) => a.cmp(b),
            _ => match (self.as_f64(), other.as_f64()) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                _ => self.rank().cmp(&other.rank()),
            },
        }
    }

    /// Text form used by string aggregation.
    pub fn to_text(&self) -> String {
        match self {
            Scalar::Integer(i) => i.to_string(),
            Scalar::Decimal(d) => d.to_string(),
            Scalar::Text(s) | Scalar::Datetime(s) => s.clone(),
            Scalar::Boolean(b) => u8::from(*b).to_string(),
            Scalar::Null => String::new(),
        }
    }
}

impl Serialize for Scalar {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Scalar::Integer(i) => s.serialize_i64(*i),
            Scalar::Decimal(d) if d.is_finite() => s.serialize_f64(*d),
            Scalar::Text(t) | Scalar::Datetime(t) => s.serialize_str(t),
            Scalar::Boolean(b) => s.serialize_bool(*b),
            Scalar::Decimal(_) | Scalar::Null => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub label: String,
    pub types: TypeSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultTable {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Scalar>>,
    /// Set when the row cap cut the result short.
    #[serde(default)]
    pub truncated: bool,
}

/// Middle value of the sorted input, or the mean of the two middle values.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("pearson inputs differ in length: {0} and {1}")]
pub struct LengthMismatch(pub usize, pub usize);

/// Pearson r = (nΣxy − ΣxΣy) / √((nΣx² − (Σx)²)(nΣy² − (Σy)²)). `None` when
/// there are fewer than two points or either variance term is zero.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<Option<f64>, LengthMismatch> {
    if xs.len() != ys.len() {
        return Err(LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return Ok(None);
    }
    let (mut sx, mut sy, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let vx = n * sxx - sx * sx;
    let vy = n * syy - sy * sy;
    if vx <= 0.0 || vy <= 0.0 {
        return Ok(None);
    }
    let r = (n * sxy - sx * sy) / libm::sqrt(vx * vy);
    Ok(Some(r.clamp(-1.0, 1.0)))
}

/// Population standard deviation.
pub fn stddev(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(libm::sqrt(var))
}

/// Aggregates computed from raw rows on the client.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggKind {
    Count,
    CountUnique,
    Sum,
    Average,
    Max,
    Min,
    Median,
    Correlation,
    StandardDeviation,
    StringAggregation,
}

impl AggKind {
    pub fn from_op(op: &str) -> Option<AggKind> {
        Some(match op {
            "count" => AggKind::Count,
            "count_unique" => AggKind::CountUnique,
            "sum" => AggKind::Sum,
            "average" => AggKind::Average,
            "max" => AggKind::Max,
            "min" | "get_one" => AggKind::Min,
            "median" => AggKind::Median,
            "correlation" => AggKind::Correlation,
            "standard_deviation" => AggKind::StandardDeviation,
            "string_aggregation" => AggKind::StringAggregation,
            _ => return None,
        })
    }

    pub fn input_count(self) -> usize {
        if self == AggKind::Correlation {
            2
        } else {
            1
        }
    }

    /// Reduces the values of one group. `inputs[i]` holds column `i` of the
    /// group's rows in row order.
    pub fn reduce(self, inputs: &[Vec<&Scalar>]) -> Scalar {
        let present: Vec<&Scalar> = inputs[0].iter().copied().filter(|v| !v.is_null()).collect();
        let numbers = || present.iter().filter_map(|v| v.as_f64()).collect::<Vec<f64>>();
        let decimal = |v: Option<f64>| v.map_or(Scalar::Null, Scalar::Decimal);
        match self {
            AggKind::Count => Scalar::Integer(present.len() as i64),
            AggKind::CountUnique => {
                let mut sorted = present.clone();
                sorted.sort_by(|a, b| a.total_cmp(b));
                sorted.dedup_by(|a, b| a.total_cmp(b) == Ordering::Equal);
                Scalar::Integer(sorted.len() as i64)
            }
            AggKind::Sum => {
                if present.is_empty() {
                    Scalar::Null
                } else if present.iter().all(|v| matches!(v, Scalar::Integer(_))) {
                    let total = present.iter().fold(0i64, |acc, v| match v {
                        Scalar::Integer(i) => acc.wrapping_add(*i),
                        _ => acc,
                    });
                    Scalar::Integer(total)
                } else {
                    Scalar::Decimal(numbers().iter().sum())
                }
            }
            AggKind::Average => {
                let xs = numbers();
                decimal((!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64))
            }
            AggKind::Max => present
                .iter()
                .copied()
                .max_by(|a, b| a.total_cmp(b))
                .cloned()
                .unwrap_or(Scalar::Null),
            AggKind::Min => present
                .iter()
                .copied()
                .min_by(|a, b| a.total_cmp(b))
                .cloned()
                .unwrap_or(Scalar::Null),
            AggKind::Median => decimal(median(&numbers())),
            AggKind::StandardDeviation => decimal(stddev(&numbers())),
            AggKind::StringAggregation => {
                if present.is_empty() {
                    Scalar::Null
                } else {
                    let parts: Vec<String> = present.iter().map(|v| v.to_text()).collect();
                    Scalar::Text(parts.join(", "))
                }
            }
            AggKind::Correlation => {
                let (mut xs, mut ys) = (Vec::new(), Vec::new());
                for (x, y) in inputs[0].iter().zip(&inputs[1]) {
                    if let (Some(x), Some(y)) = (x.as_f64(), y.as_f64()) {
                        xs.push(x);
                        ys.push(y);
                    }
                }
                decimal(pearson(&xs, &ys).expect("equal lengths"))
            }
        }
    }
}

/// How one output column is produced from raw query rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostColumn {
    /// Raw column copied through (a group key, or a row value).
    Pass(usize),
    /// Aggregate over raw columns within each group.
    Agg { kind: AggKind, inputs: Vec<usize> },
    /// Square root of a raw column.
    Sqrt(usize),
}

/// Client-side reduction of raw rows into result rows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostAggregation {
    /// `None` maps each raw row to one output row; `Some(keys)` groups raw
    /// rows by these raw columns (an empty key list yields one group).
    pub group_keys: Option<Vec<usize>>,
    pub columns: Vec<PostColumn>,
    /// Output column index and descending flag.
    pub order: Vec<(usize, bool)>,
    pub limit: Option<u64>,
}

impl PostAggregation {
    fn max_index(&self) -> Option<usize> {
        let keys = self.group_keys.iter().flatten().copied();
        let cols = self.columns.iter().flat_map(|c| match c {
            PostColumn::Pass(i) | PostColumn::Sqrt(i) => alloc::vec![*i],
            PostColumn::Agg { inputs, .. } => inputs.clone(),
        });
        keys.chain(cols).max()
    }

    /// Checks indices against the raw column count.
    pub fn validate(&self, raw_columns: usize) -> bool {
        let raw_ok = self.max_index().is_none_or(|m| m < raw_columns);
        let order_ok = self.order.iter().all(|(i, _)| *i < self.columns.len());
        let agg_ok = self.columns.iter().all(|c| match c {
            PostColumn::Agg { kind, inputs } => inputs.len() == kind.input_count(),
            _ => true,
        });
        raw_ok && order_ok && agg_ok
    }

    pub fn apply(&self, raw: &[Vec<Scalar>]) -> Vec<Vec<Scalar>> {
        let mut out: Vec<Vec<Scalar>> = match &self.group_keys {
            None => raw.iter().map(|row| self.row_values(core::slice::from_ref(row))).collect(),
            Some(keys) => {
                let mut groups: Vec<(Vec<Scalar>, Vec<Vec<Scalar>>)> = Vec::new();
                let mut index: BTreeMap<Vec<OrdScalar>, usize> = BTreeMap::new();
                for row in raw {
                    let key: Vec<Scalar> = keys.iter().map(|k| row[*k].clone()).collect();
                    let ord: Vec<OrdScalar> = key.iter().cloned().map(OrdScalar).collect();
                    let slot = *index.entry(ord).or_insert_with(|| {
                        groups.push((key, Vec::new()));
                        groups.len() - 1
                    });
                    groups[slot].1.push(row.clone());
                }
                if keys.is_empty() && groups.is_empty() {
                    groups.push((Vec::new(), Vec::new()));
                }
                groups.iter().map(|(_, rows)| self.row_values(rows)).collect()
            }
        };
        if !self.order.is_empty() {
            out.sort_by(|a, b| {
                self.order
                    .iter()
                    .map(|(i, desc)| {
                        let o = a[*i].total_cmp(&b[*i]);
                        if *desc {
                            o.reverse()
                        } else {
                            o
                        }
                    })
                    .find(|o| *o != Ordering::Equal)
                    .unwrap_or(Ordering::Equal)
            });
        }
        if let Some(limit) = self.limit {
            out.truncate(usize::try_from(limit).unwrap_or(usize::MAX));
        }
        out
    }

    fn row_values(&self, rows: &[Vec<Scalar>]) -> Vec<Scalar> {
        self.columns
            .iter()
            .map(|c| match c {
                PostColumn::Pass(i) => rows.first().map_or(Scalar::Null, |r| r[*i].clone()),
                PostColumn::Sqrt(i) => match rows.first().and_then(|r| r[*i].as_f64()) {
                    Some(v) if v >= 0.0 => Scalar::Decimal(libm::sqrt(v)),
                    _ => Scalar::Null,
                },
                PostColumn::Agg { kind, inputs } => {
                    let columns: Vec<Vec<&Scalar>> =
                        inputs.iter().map(|i| rows.iter().map(|r| &r[*i]).collect()).collect();
                    kind.reduce(&columns)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct OrdScalar(Scalar);

impl PartialEq for OrdScalar {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for OrdScalar {}

impl PartialOrd for OrdScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdScalar {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
