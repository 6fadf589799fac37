//! Meta tools: pure operations over intermediate results.

mod table_ops;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::time_range_bounds;
use crate::value::{Record, Value};

pub use table_ops::table_op;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetaError {
    #[error("item {0} is not a valid time range")]
    InvalidRange(usize),
    #[error("tolerance must be >= 0")]
    NegativeTolerance,
    #[error("item {0} lacks the requested key")]
    MissingKey(usize),
    #[error("item {0} has a non-numeric field")]
    NonNumericField(usize),
    #[error("bad argument: {0}")]
    BadArgument(String),
    #[error("no items to operate on")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub t_start: f64,
    pub t_end: f64,
    /// Remaining record fields of the source item.
    pub payload: Option<Value>,
}

impl TimeRange {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        TimeRange { t_start, t_end, payload: None }
    }

    pub fn len(&self) -> f64 {
        self.t_end - self.t_start
    }

    pub fn is_empty(&self) -> bool {
        self.len() <= 0.0
    }

    /// Accepts `{t_start, t_end, ...}` or `[t_start, t_end]`.
    pub fn from_value(v: &Value) -> Option<TimeRange> {
        let (s, e) = time_range_bounds(v)?;
        let payload = v.as_record().and_then(|r| {
            let rest: Record =
                r.iter().filter(|(k, _)| *k != "t_start" && *k != "t_end").map(|(k, v)| (k.clone(), v.clone())).collect();
            (!rest.is_empty()).then_some(Value::Record(rest))
        });
        Some(TimeRange { t_start: s, t_end: e, payload })
    }

    pub fn to_value(&self) -> Value {
        let mut r = match &self.payload {
            Some(Value::Record(p)) => p.clone(),
            Some(other) => crate::value::record([("payload", other.clone())]),
            None => Record::new(),
        };
        r.insert("t_start".into(), Value::Real(self.t_start));
        r.insert("t_end".into(), Value::Real(self.t_end));
        Value::Record(r)
    }
}

pub fn parse_ranges(items: &[Value]) -> Result<Vec<TimeRange>, MetaError> {
    items.iter().enumerate().map(|(i, v)| TimeRange::from_value(v).ok_or(MetaError::InvalidRange(i))).collect()
}

/// Ascending by `(t_start, t_end)`; stable for equal keys.
pub fn sort_time_ranges(ranges: &[TimeRange]) -> Result<Vec<TimeRange>, MetaError> {
    for (i, r) in ranges.iter().enumerate() {
        if !(r.t_start.is_finite() && r.t_end.is_finite() && r.t_start <= r.t_end) {
            return Err(MetaError::InvalidRange(i));
        }
    }
    let mut out = ranges.to_vec();
    out.sort_by(|a, b| a.t_start.total_cmp(&b.t_start).then(a.t_end.total_cmp(&b.t_end)));
    Ok(out)
}

/// Merges ranges whose gap (`next.t_start - prev.t_end`) is at most
/// `tolerance`; overlaps have negative gaps. Merged payloads are kept under
/// `payloads`, and fields equal across all of them are lifted to the top.
pub fn merge_temporal_segments(ranges: &[TimeRange], tolerance: f64) -> Result<Vec<TimeRange>, MetaError> {
    if tolerance.is_nan() || tolerance < 0.0 {
        return Err(MetaError::NegativeTolerance);
    }
    let sorted = sort_time_ranges(ranges)?;
    let mut groups: Vec<(f64, f64, Vec<Option<Value>>)> = Vec::new();
    for r in sorted {
        match groups.last_mut() {
            Some((_, end, members)) if r.t_start - *end <= tolerance => {
                *end = end.max(r.t_end);
                members.push(r.payload);
            }
            _ => groups.push((r.t_start, r.t_end, alloc::vec![r.payload])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(s, e, members)| {
            if members.len() == 1 {
                return TimeRange { t_start: s, t_end: e, payload: members.into_iter().next().flatten() };
            }
            TimeRange { t_start: s, t_end: e, payload: Some(merged_payload(&members)) }
        })
        .collect())
}

fn merged_payload(members: &[Option<Value>]) -> Value {
    let mut out = Record::new();
    let records: Vec<Option<&Record>> = members.iter().map(|m| m.as_ref().and_then(Value::as_record)).collect();
    if let Some(Some(first)) = records.first() {
        for (k, v) in first.iter() {
            if records.iter().all(|r| r.is_some_and(|r| r.get(k) == Some(v))) {
                out.insert(k.clone(), v.clone());
            }
        }
    }
    out.insert("merged_count".into(), Value::from(members.len()));
    out.insert("payloads".into(), Value::List(members.iter().map(|m| m.clone().unwrap_or_default()).collect()));
    Value::Record(out)
}

/// Display form used as a counting/grouping key.
pub fn key_string(v: &Value) -> String {
    v.to_string()
}

pub fn count_occurrences(items: &[Value], key: Option<&str>) -> Result<BTreeMap<String, i64>, MetaError> {
    let mut out = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        let k = match key {
            Some(key) => item.get(key).ok_or(MetaError::MissingKey(i))?,
            None => item,
        };
        *out.entry(key_string(k)).or_insert(0) += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "=")]
    Eq,
}

impl Comparison {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            ">=" => Comparison::Ge,
            "<=" => Comparison::Le,
            ">" => Comparison::Gt,
            "<" => Comparison::Lt,
            "=" | "==" => Comparison::Eq,
            _ => return None,
        })
    }

    pub fn holds(self, x: f64, v: f64) -> bool {
        match self {
            Comparison::Ge => x >= v,
            Comparison::Le => x <= v,
            Comparison::Gt => x > v,
            Comparison::Lt => x < v,
            Comparison::Eq => x == v,
        }
    }
}

pub(crate) fn numeric_field(item: &Value, field: &str, i: usize) -> Result<f64, MetaError> {
    item.get(field).ok_or(MetaError::MissingKey(i))?.as_f64().ok_or(MetaError::NonNumericField(i))
}

pub fn filter_threshold(items: &[Value], field: &str, op: Comparison, value: f64) -> Result<Vec<Value>, MetaError> {
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        if op.holds(numeric_field(item, field, i)?, value) {
            out.push(item.clone());
        }
    }
    Ok(out)
}

/// Descending by `Σ weight · field`; stable for ties.
pub fn rerank_candidates(items: &[Value], score_fields: &[(String, f64)]) -> Result<Vec<Value>, MetaError> {
    if score_fields.iter().any(|(_, w)| !w.is_finite()) {
        return Err(MetaError::BadArgument("weights must be finite".into()));
    }
    let mut keyed = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let mut s = 0.0;
        for (f, w) in score_fields {
            s += w * numeric_field(item, f, i)?;
        }
        keyed.push((s, item.clone()));
    }
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(keyed.into_iter().map(|(_, v)| v).collect())
}

/// `n` items at indices `round(j (len-1) / (n-1))`, keeping first and last.
pub fn uniform_sample(items: &[Value], n: usize) -> Vec<Value> {
    let len = items.len();
    if n == 0 || len == 0 {
        return Vec::new();
    }
    if len <= n {
        return items.to_vec();
    }
    if n == 1 {
        return alloc::vec![items[0].clone()];
    }
    (0..n).map(|j| items[libm::round(j as f64 * (len - 1) as f64 / (n - 1) as f64) as usize].clone()).collect()
}

fn arg<'a>(args: &'a Record, name: &str) -> Result<&'a Value, MetaError> {
    args.get(name).filter(|v| !v.is_null()).ok_or_else(|| MetaError::BadArgument(format!("missing `{name}`")))
}

fn list_arg<'a>(args: &'a Record, name: &str) -> Result<&'a [Value], MetaError> {
    arg(args, name)?.as_list().ok_or_else(|| MetaError::BadArgument(format!("`{name}` must be a list")))
}

fn str_arg<'a>(args: &'a Record, name: &str) -> Result<&'a str, MetaError> {
    arg(args, name)?.as_str().ok_or_else(|| MetaError::BadArgument(format!("`{name}` must be a string")))
}

fn num_arg(args: &Record, name: &str) -> Result<f64, MetaError> {
    arg(args, name)?.as_f64().ok_or_else(|| MetaError::BadArgument(format!("`{name}` must be a number")))
}

fn count_arg(args: &Record, name: &str) -> Result<usize, MetaError> {
    match arg(args, name)?.as_i64() {
        Some(n) if n >= 0 => Ok(n as usize),
        _ => Err(MetaError::BadArgument(format!("`{name}` must be a nonnegative integer"))),
    }
}

fn ranges_value(rs: Vec<TimeRange>) -> Value {
    Value::List(rs.iter().map(TimeRange::to_value).collect())
}

/// Runs the meta executor named by `binding`. `None` when the binding is
/// not a meta executor.
pub fn run_meta(binding: &str, args: &Record, default_tolerance: f64) -> Option<Result<Value, MetaError>> {
    Some(match binding {
        "meta.sort_time_ranges" => {
            list_arg(args, "ranges").and_then(parse_ranges).and_then(|r| sort_time_ranges(&r)).map(ranges_value)
        }
        "meta.merge_temporal_segments" => (|| {
            let ranges = parse_ranges(list_arg(args, "ranges")?)?;
            let tol = match args.get("tolerance") {
                None | Some(Value::Null) => default_tolerance,
                Some(_) => num_arg(args, "tolerance")?,
            };
            merge_temporal_segments(&ranges, tol).map(ranges_value)
        })(),
        "meta.count_occurrences" => (|| {
            let key = match args.get("key") {
                None | Some(Value::Null) => None,
                Some(_) => Some(str_arg(args, "key")?),
            };
            let counts = count_occurrences(list_arg(args, "items")?, key)?;
            Ok(Value::Record(counts.into_iter().map(|(k, n)| (k, Value::Int(n))).collect()))
        })(),
        "meta.filter_threshold" => (|| {
            let op = Comparison::parse(str_arg(args, "op")?)
                .ok_or_else(|| MetaError::BadArgument("unknown comparison".into()))?;
            filter_threshold(list_arg(args, "items")?, str_arg(args, "field")?, op, num_arg(args, "value")?)
                .map(Value::List)
        })(),
        "meta.filter_equals" => (|| {
            let field = str_arg(args, "field")?;
            let want = arg(args, "value")?;
            let want = key_string(want);
            Ok(Value::List(
                list_arg(args, "items")?
                    .iter()
                    .filter(|it| it.get(field).is_some_and(|v| key_string(v) == want))
                    .cloned()
                    .collect(),
            ))
        })(),
        "meta.rerank" => (|| {
            let mut fields = Vec::new();
            for f in list_arg(args, "score_fields")? {
                let pair = match f {
                    Value::List(p) if p.len() == 2 => p[0].as_str().zip(p[1].as_f64()),
                    Value::Record(r) => r.get("field").and_then(Value::as_str).zip(r.get("weight").and_then(Value::as_f64)),
                    _ => None,
                };
                let (name, w) = pair.ok_or_else(|| MetaError::BadArgument("score_fields entries are [field, weight]".into()))?;
                fields.push((name.to_string(), w));
            }
            rerank_candidates(list_arg(args, "items")?, &fields).map(Value::List)
        })(),
        "meta.top_k" => (|| {
            let field = args.get("field").and_then(Value::as_str).unwrap_or("score");
            let n = count_arg(args, "n")?;
            let mut v = rerank_candidates(list_arg(args, "items")?, &[(field.to_string(), 1.0)])?;
            v.truncate(n);
            Ok(Value::List(v))
        })(),
        "meta.arithmetic" => (|| {
            let (a, b) = (num_arg(args, "a")?, num_arg(args, "b")?);
            let r = match str_arg(args, "op")? {
                "add" => a + b,
                "sub" => a - b,
                "mul" => a * b,
                "div" if b == 0.0 => return Err(MetaError::BadArgument("division by zero".into())),
                "div" => a / b,
                other => return Err(MetaError::BadArgument(format!("unknown op `{other}`"))),
            };
            Ok(Value::Real(r))
        })(),
        "meta.text_normalize" => str_arg(args, "text").map(|t| Value::Str(normalize_text(t))),
        "meta.group_by" => (|| {
            let key = str_arg(args, "key")?;
            let mut out: BTreeMap<String, Vec<Value>> = BTreeMap::new();
            for (i, it) in list_arg(args, "items")?.iter().enumerate() {
                let k = it.get(key).ok_or(MetaError::MissingKey(i))?;
                out.entry(key_string(k)).or_default().push(it.clone());
            }
            Ok(Value::Record(out.into_iter().map(|(k, v)| (k, Value::List(v))).collect()))
        })(),
        "meta.uniform_sample" => (|| Ok(Value::List(uniform_sample(list_arg(args, "items")?, count_arg(args, "n")?))))(),
        "meta.threshold_binarize" => (|| {
            let field = str_arg(args, "field")?;
            let cut = num_arg(args, "value")?;
            let mut out = Vec::new();
            for (i, it) in list_arg(args, "items")?.iter().enumerate() {
                let x = numeric_field(it, field, i)?;
                let mut r = it.as_record().cloned().unwrap_or_default();
                r.insert("above".into(), Value::Bool(x >= cut));
                out.push(Value::Record(r));
            }
            Ok(Value::List(out))
        })(),
        "meta.table_op" => table_op(args),
        _ => return None,
    })
}

/// Lowercase, punctuation to spaces, single spaces.
pub fn normalize_text(t: &str) -> String {
    let mapped: String =
        t.chars().map(|c| if c.is_alphanumeric() { c.to_lowercase().next().unwrap_or(c) } else { ' ' }).collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}
