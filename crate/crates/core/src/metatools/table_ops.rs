//! Shared executor for the long tail of meta tools. Each registry entry
//! pins its `op`; `items` carries the data and `field`/`by`/`n`/`value`/
//! `text`/`t_start`/`t_end` parameterize the op.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::{key_string, numeric_field, parse_ranges, sort_time_ranges, MetaError, TimeRange};
use crate::value::{record, Record, Value};

struct Args<'a> {
    items: &'a [Value],
    raw: &'a Record,
}

impl<'a> Args<'a> {
    fn opt_str(&self, name: &str) -> Option<&'a str> {
        self.raw.get(name).and_then(Value::as_str)
    }

    fn field(&self) -> Option<&'a str> {
        self.opt_str("field")
    }

    fn need_str(&self, name: &str) -> Result<&'a str, MetaError> {
        self.opt_str(name).ok_or_else(|| MetaError::BadArgument(format!("missing `{name}`")))
    }

    fn need_num(&self, name: &str) -> Result<f64, MetaError> {
        self.raw.get(name).and_then(Value::as_f64).ok_or_else(|| MetaError::BadArgument(format!("missing `{name}`")))
    }

    fn need_n(&self) -> Result<usize, MetaError> {
        match self.raw.get("n").and_then(Value::as_i64) {
            Some(n) if n >= 0 => Ok(n as usize),
            _ => Err(MetaError::BadArgument("`n` must be a nonnegative integer".into())),
        }
    }

    fn positive_n(&self) -> Result<usize, MetaError> {
        match self.need_n()? {
            0 => Err(MetaError::BadArgument("`n` must be >= 1".into())),
            n => Ok(n),
        }
    }

    /// Numeric view of each item: the field when given, else the item.
    fn numbers(&self) -> Result<Vec<f64>, MetaError> {
        let f = self.field();
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| match f {
                Some(f) => numeric_field(it, f, i),
                None => it.as_f64().ok_or(MetaError::NonNumericField(i)),
            })
            .collect()
    }

    fn view(&self, it: &'a Value) -> Option<&'a Value> {
        match self.field() {
            Some(f) => it.get(f),
            None => Some(it),
        }
    }

    fn texts(&self) -> Result<Vec<&'a str>, MetaError> {
        self.items
            .iter()
            .enumerate()
            .map(|(i, it)| self.view(it).and_then(Value::as_str).ok_or(MetaError::MissingKey(i)))
            .collect()
    }

    fn key_of(&self, name: &str, i: usize, it: &Value) -> Result<String, MetaError> {
        let by = self.need_str(name)?;
        it.get(by).map(key_string).ok_or(MetaError::MissingKey(i))
    }

    fn ranges(&self) -> Result<Vec<TimeRange>, MetaError> {
        parse_ranges(self.items)
    }
}

fn nums(v: Vec<f64>) -> Value {
    Value::List(v.into_iter().map(Value::Real).collect())
}

fn ranges_out(rs: impl IntoIterator<Item = TimeRange>) -> Value {
    Value::List(rs.into_iter().map(|r| r.to_value()).collect())
}

fn stable_sort_by_key(items: &[Value], keys: &[f64], descending: bool) -> Vec<Value> {
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = keys[a].total_cmp(&keys[b]);
        if descending { o.reverse() } else { o }
    });
    idx.into_iter().map(|i| items[i].clone()).collect()
}

fn mean(xs: &[f64]) -> Result<f64, MetaError> {
    if xs.is_empty() {
        return Err(MetaError::Empty);
    }
    Ok(xs.iter().sum::<f64>() / xs.len() as f64)
}

fn median(xs: &[f64]) -> Result<f64, MetaError> {
    if xs.is_empty() {
        return Err(MetaError::Empty);
    }
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    Ok(if n % 2 == 1 { s[n / 2] } else { (s[n / 2 - 1] + s[n / 2]) / 2.0 })
}

fn extreme(xs: &[f64], max: bool) -> Result<(usize, f64), MetaError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        let better = match best {
            None => true,
            Some((_, b)) => (max && x > b) || (!max && x < b),
        };
        if better {
            best = Some((i, x));
        }
    }
    best.ok_or(MetaError::Empty)
}

/// Applies `f` to each item's numeric view, writing back into the field
/// when one is given.
fn map_numbers(a: &Args<'_>, f: impl Fn(f64) -> Result<f64, MetaError>) -> Result<Value, MetaError> {
    let xs = a.numbers()?;
    let mut out = Vec::with_capacity(xs.len());
    for (it, x) in a.items.iter().zip(xs) {
        let y = f(x)?;
        out.push(match a.field() {
            Some(field) => {
                let mut r = it.as_record().cloned().unwrap_or_default();
                r.insert(field.to_string(), Value::Real(y));
                Value::Record(r)
            }
            None => Value::Real(y),
        });
    }
    Ok(Value::List(out))
}

fn map_texts(a: &Args<'_>, f: impl Fn(&str) -> String) -> Result<Value, MetaError> {
    let ts = a.texts()?;
    Ok(Value::List(
        a.items
            .iter()
            .zip(ts)
            .map(|(it, t)| match a.field() {
                Some(field) => {
                    let mut r = it.as_record().cloned().unwrap_or_default();
                    r.insert(field.to_string(), Value::Str(f(t)));
                    Value::Record(r)
                }
                None => Value::Str(f(t)),
            })
            .collect(),
    ))
}

fn filter_items(a: &Args<'_>, keep: impl Fn(usize, &Value) -> Result<bool, MetaError>) -> Result<Value, MetaError> {
    let mut out = Vec::new();
    for (i, it) in a.items.iter().enumerate() {
        if keep(i, it)? {
            out.push(it.clone());
        }
    }
    Ok(Value::List(out))
}

fn group<T>(a: &Args<'_>, mut init: impl FnMut(&Value) -> T, mut fold: impl FnMut(&mut T, &Value)) -> Result<BTreeMap<String, T>, MetaError> {
    let mut out: BTreeMap<String, T> = BTreeMap::new();
    for (i, it) in a.items.iter().enumerate() {
        let k = a.key_of("by", i, it)?;
        match out.get_mut(&k) {
            Some(acc) => fold(acc, it),
            None => {
                out.insert(k, init(it));
            }
        }
    }
    Ok(out)
}

fn mmss(t: f64) -> String {
    let total = libm::floor(t.max(0.0)) as u64;
    format!("{:02}:{:02}", total / 60, total % 60)
}

fn extract_numbers(text: &str) -> Vec<f64> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for c in text.chars().chain(core::iter::once(' ')) {
        if c.is_ascii_digit() || (c == '.' && !cur.is_empty() && !cur.contains('.')) {
            cur.push(c);
        } else if !cur.is_empty() {
            if let Ok(x) = cur.trim_end_matches('.').parse::<f64>() {
                out.push(x);
            }
            cur.clear();
        }
    }
    out
}

pub fn table_op(raw: &Record) -> Result<Value, MetaError> {
    let items = raw
        .get("items")
        .and_then(Value::as_list)
        .ok_or_else(|| MetaError::BadArgument("`items` must be a list".into()))?;
    let op = raw.get("op").and_then(Value::as_str).ok_or_else(|| MetaError::BadArgument("missing `op`".into()))?;
    let a = Args { items, raw };
    let n_items = items.len();
    match op {
        // Ranking
        "sort_desc" | "sort_asc" => {
            if a.field().is_none() {
                return Err(MetaError::BadArgument("missing `field`".into()));
            }
            Ok(Value::List(stable_sort_by_key(items, &a.numbers()?, op == "sort_desc")))
        }
        "argmax" | "argmin" => {
            let (i, _) = extreme(&a.numbers()?, op == "argmax")?;
            Ok(items[i].clone())
        }
        "bottom_n" => {
            let mut v = stable_sort_by_key(items, &a.numbers()?, false);
            v.truncate(a.need_n()?);
            Ok(Value::List(v))
        }
        "rank" => {
            let keys = a.numbers()?;
            let sorted = stable_sort_by_key(items, &keys, true);
            Ok(Value::List(
                sorted
                    .into_iter()
                    .enumerate()
                    .map(|(r, it)| {
                        let mut rec = it.as_record().cloned().unwrap_or_else(|| record([("value", it.clone())]));
                        rec.insert("rank".into(), Value::from(r + 1));
                        Value::Record(rec)
                    })
                    .collect(),
            ))
        }
        "reverse" => Ok(Value::List(items.iter().rev().cloned().collect())),
        "dedupe_best" => {
            let keys = a.numbers()?;
            let mut order: Vec<String> = Vec::new();
            let mut best: BTreeMap<String, usize> = BTreeMap::new();
            for (i, it) in items.iter().enumerate() {
                let k = a.key_of("by", i, it)?;
                match best.get(&k) {
                    Some(&j) if keys[j] >= keys[i] => {}
                    Some(_) => {
                        best.insert(k, i);
                    }
                    None => {
                        order.push(k.clone());
                        best.insert(k, i);
                    }
                }
            }
            Ok(Value::List(order.iter().map(|k| items[best[k]].clone()).collect()))
        }
        "normalize" => {
            let xs = a.numbers()?;
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            map_numbers(&a, |x| Ok(if hi > lo { (x - lo) / (hi - lo) } else { 1.0 }))
        }

        // Aggregation
        "length" => Ok(Value::from(n_items)),
        "sum" => Ok(Value::Real(a.numbers()?.iter().sum())),
        "mean" => mean(&a.numbers()?).map(Value::Real),
        "min" | "max" => extreme(&a.numbers()?, op == "max").map(|(_, x)| Value::Real(x)),
        "median" => median(&a.numbers()?).map(Value::Real),
        "stdev" => {
            let xs = a.numbers()?;
            let m = mean(&xs)?;
            Ok(Value::Real(libm::sqrt(xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64)))
        }
        "count_nonnull" => Ok(Value::from(items.iter().filter(|it| a.view(it).is_some_and(|v| !v.is_null())).count())),
        "unique" | "count_unique" => {
            let mut seen: Vec<Value> = Vec::new();
            for it in items {
                if let Some(v) = a.view(it) {
                    if !seen.iter().any(|s| s.canonical_string() == v.canonical_string()) {
                        seen.push(v.clone());
                    }
                }
            }
            Ok(if op == "unique" { Value::List(seen) } else { Value::from(seen.len()) })
        }
        "pluck" => Ok(Value::List(items.iter().map(|it| a.view(it).cloned().unwrap_or_default()).collect())),
        "flatten" => Ok(Value::List(
            items
                .iter()
                .flat_map(|it| match it {
                    Value::List(inner) => inner.clone(),
                    other => alloc::vec![other.clone()],
                })
                .collect(),
        )),
        "mode" => {
            let mut counts: Vec<(Value, usize)> = Vec::new();
            for it in items {
                if let Some(v) = a.view(it) {
                    match counts.iter_mut().find(|(c, _)| c.canonical_string() == v.canonical_string()) {
                        Some((_, n)) => *n += 1,
                        None => counts.push((v.clone(), 1)),
                    }
                }
            }
            let top = counts.iter().map(|(_, n)| *n).max().ok_or(MetaError::Empty)?;
            Ok(counts.into_iter().find(|(_, n)| *n == top).map(|(v, _)| v).unwrap_or_default())
        }
        "any" => Ok(Value::Bool(items.iter().any(|it| a.view(it).is_some_and(Value::truthy)))),
        "all" => Ok(Value::Bool(items.iter().all(|it| a.view(it).is_some_and(Value::truthy)))),

        // Temporal/Window
        "durations" => Ok(nums(a.ranges()?.iter().map(TimeRange::len).collect())),
        "total_duration" => Ok(Value::Real(a.ranges()?.iter().map(TimeRange::len).sum())),
        "span" | "intersect" => {
            let rs = a.ranges()?;
            if rs.is_empty() {
                return Err(MetaError::Empty);
            }
            let (s, e) = if op == "span" {
                (rs.iter().map(|r| r.t_start).fold(f64::INFINITY, f64::min), rs.iter().map(|r| r.t_end).fold(0.0, f64::max))
            } else {
                (rs.iter().map(|r| r.t_start).fold(0.0, f64::max), rs.iter().map(|r| r.t_end).fold(f64::INFINITY, f64::min))
            };
            if s > e {
                return Err(MetaError::Empty);
            }
            Ok(TimeRange::new(s, e).to_value())
        }
        "midpoints" => Ok(nums(a.ranges()?.iter().map(|r| (r.t_start + r.t_end) / 2.0).collect())),
        "gaps" => {
            let rs = sort_time_ranges(&a.ranges()?)?;
            let mut out = Vec::new();
            let mut reach: Option<f64> = None;
            for r in rs {
                if let Some(end) = reach {
                    if r.t_start > end {
                        out.push(TimeRange::new(end, r.t_start));
                    }
                }
                reach = Some(reach.map_or(r.t_end, |e| e.max(r.t_end)));
            }
            Ok(ranges_out(out))
        }
        "shift" | "expand" => {
            let d = a.need_num("value")?;
            let rs = a.ranges()?;
            Ok(ranges_out(rs.into_iter().map(|mut r| {
                if op == "shift" {
                    r.t_start = (r.t_start + d).max(0.0);
                    r.t_end = (r.t_end + d).max(0.0);
                } else {
                    r.t_start = (r.t_start - d).max(0.0);
                    r.t_end = (r.t_end + d).max(r.t_start);
                }
                r
            })))
        }
        "containing" => {
            let t = a.need_num("value")?;
            Ok(ranges_out(a.ranges()?.into_iter().filter(|r| r.t_start <= t && t <= r.t_end)))
        }
        "overlapping" | "within" => {
            let (s, e) = (a.need_num("t_start")?, a.need_num("t_end")?);
            let inside = op == "within";
            Ok(ranges_out(a.ranges()?.into_iter().filter(|r| {
                if inside { s <= r.t_start && r.t_end <= e } else { crate::simenv::overlaps(r.t_start, r.t_end, s, e) }
            })))
        }
        "longest" | "shortest" | "earliest" | "latest" => {
            let rs = a.ranges()?;
            let keys: Vec<f64> = rs
                .iter()
                .map(|r| match op {
                    "longest" | "shortest" => r.len(),
                    "earliest" => r.t_start,
                    _ => r.t_end,
                })
                .collect();
            let (i, _) = extreme(&keys, matches!(op, "longest" | "latest"))?;
            Ok(rs[i].to_value())
        }
        "min_duration" | "max_duration" => {
            let d = a.need_num("value")?;
            let long = op == "min_duration";
            Ok(ranges_out(a.ranges()?.into_iter().filter(|r| if long { r.len() >= d } else { r.len() <= d })))
        }

        // Math
        "product" => Ok(Value::Real(a.numbers()?.iter().product())),
        "value_range" => {
            let xs = a.numbers()?;
            let (_, hi) = extreme(&xs, true)?;
            let (_, lo) = extreme(&xs, false)?;
            Ok(Value::Real(hi - lo))
        }
        "abs_each" => map_numbers(&a, |x| Ok(libm::fabs(x))),
        "round_each" => {
            let places = a.raw.get("n").and_then(Value::as_i64).unwrap_or(0).clamp(0, 12) as i32;
            let scale = libm::pow(10.0, f64::from(places));
            map_numbers(&a, |x| Ok(libm::round(x * scale) / scale))
        }
        "cumsum" => {
            let mut acc = 0.0;
            Ok(nums(a.numbers()?.into_iter().map(|x| {
                acc += x;
                acc
            }).collect()))
        }
        "diffs" => Ok(nums(a.numbers()?.windows(2).map(|w| w[1] - w[0]).collect())),
        "pct_change" => {
            let xs = a.numbers()?;
            match (xs.first(), xs.last()) {
                (Some(&f), Some(&l)) if f != 0.0 => Ok(Value::Real((l - f) / f * 100.0)),
                (Some(_), Some(_)) => Err(MetaError::BadArgument("first value is zero".into())),
                _ => Err(MetaError::Empty),
            }
        }
        "scale" => {
            let c = a.need_num("value")?;
            map_numbers(&a, |x| Ok(x * c))
        }
        "offset" => {
            let c = a.need_num("value")?;
            map_numbers(&a, |x| Ok(x + c))
        }
        "negate" => map_numbers(&a, |x| Ok(-x)),
        "mad" => {
            let xs = a.numbers()?;
            let m = mean(&xs)?;
            Ok(Value::Real(xs.iter().map(|x| libm::fabs(x - m)).sum::<f64>() / xs.len() as f64))
        }
        "reciprocal" => map_numbers(&a, |x| {
            if x == 0.0 { Err(MetaError::BadArgument("reciprocal of zero".into())) } else { Ok(1.0 / x) }
        }),
        "sum_squares" => Ok(Value::Real(a.numbers()?.iter().map(|x| x * x).sum())),

        // Text
        "join_text" => {
            let sep = a.opt_str("text").unwrap_or(" ");
            Ok(Value::Str(a.texts()?.join(sep)))
        }
        "lowercase" => map_texts(&a, str::to_lowercase),
        "uppercase" => map_texts(&a, str::to_uppercase),
        "trim" => map_texts(&a, |t| t.trim().to_string()),
        "truncate" => {
            let n = a.raw.get("n").and_then(Value::as_i64).unwrap_or(80).max(0) as usize;
            map_texts(&a, |t| t.chars().take(n).collect())
        }
        "word_count" => Ok(Value::from(a.texts()?.iter().map(|t| t.split_whitespace().count()).sum::<usize>())),
        "char_count" => Ok(Value::from(a.texts()?.iter().map(|t| t.chars().count()).sum::<usize>())),
        "contains_text" => {
            let needle = a.need_str("text")?.to_lowercase();
            Ok(Value::Bool(a.texts()?.iter().any(|t| t.to_lowercase().contains(&needle))))
        }
        "split_words" => Ok(Value::List(
            a.texts()?.iter().flat_map(|t| t.split_whitespace().map(Value::from)).collect(),
        )),
        "extract_numbers" => Ok(nums(a.texts()?.iter().flat_map(|t| extract_numbers(t)).collect())),
        "starts_with" => {
            let prefix = a.need_str("text")?.to_lowercase();
            filter_items(&a, |i, it| {
                let t = a.view(it).and_then(Value::as_str).ok_or(MetaError::MissingKey(i))?;
                Ok(t.to_lowercase().starts_with(&prefix))
            })
        }
        "keyword_hits" => {
            let keys = crate::text::content_tokens(a.need_str("text")?);
            let hits: usize = a
                .texts()?
                .iter()
                .map(|t| crate::text::tokenize(t).iter().filter(|w| keys.contains(*w)).count())
                .sum();
            Ok(Value::from(hits))
        }
        "format_timestamps" => Ok(Value::List(
            items
                .iter()
                .enumerate()
                .map(|(i, it)| {
                    if a.field().is_none() {
                        if let Some(r) = TimeRange::from_value(it) {
                            return Ok(Value::Str(format!("{}-{}", mmss(r.t_start), mmss(r.t_end))));
                        }
                    }
                    let t = a.view(it).and_then(Value::as_f64).ok_or(MetaError::NonNumericField(i))?;
                    Ok(Value::Str(mmss(t)))
                })
                .collect::<Result<Vec<_>, MetaError>>()?,
        )),

        // Filtering
        "not_equals" => {
            let field = a.need_str("field")?;
            let text = a.need_str("text")?;
            filter_items(&a, |_, it| Ok(it.get(field).is_none_or(|v| key_string(v) != text)))
        }
        "filter_contains" => {
            let field = a.need_str("field")?;
            let needle = a.need_str("text")?.to_lowercase();
            filter_items(&a, |_, it| {
                Ok(it.get(field).and_then(Value::as_str).is_some_and(|s| s.to_lowercase().contains(&needle)))
            })
        }
        "nonnull" => {
            let field = a.need_str("field")?;
            filter_items(&a, |_, it| Ok(it.get(field).is_some_and(|v| !v.is_null())))
        }
        "nonempty" => filter_items(&a, |_, it| {
            Ok(match it {
                Value::Null => false,
                Value::Str(s) => !s.is_empty(),
                Value::List(l) => !l.is_empty(),
                Value::Record(r) => !r.is_empty(),
                _ => true,
            })
        }),
        "truthy" => {
            let field = a.need_str("field")?;
            filter_items(&a, |_, it| Ok(it.get(field).is_some_and(Value::truthy)))
        }
        "dedupe_by" => {
            let mut seen: Vec<String> = Vec::new();
            let mut out = Vec::new();
            for (i, it) in items.iter().enumerate() {
                let k = a.key_of("by", i, it)?;
                if !seen.contains(&k) {
                    seen.push(k);
                    out.push(it.clone());
                }
            }
            Ok(Value::List(out))
        }
        "skip" => Ok(Value::List(items.iter().skip(a.need_n()?).cloned().collect())),

        // Grouping
        "group_count" => {
            let g = group(&a, |_| 1i64, |n, _| *n += 1)?;
            Ok(Value::Record(g.into_iter().map(|(k, n)| (k, Value::Int(n))).collect()))
        }
        "group_first" => {
            let g = group(&a, Value::clone, |_, _| {})?;
            Ok(Value::Record(g.into_iter().collect()))
        }
        "group_sum" | "group_mean" | "group_max" => {
            let field = a.need_str("field")?;
            for (i, it) in items.iter().enumerate() {
                numeric_field(it, field, i)?;
            }
            let num = |it: &Value| it.get(field).and_then(Value::as_f64).unwrap_or(0.0);
            let g = group(&a, |it| alloc::vec![num(it)], |acc: &mut Vec<f64>, it| acc.push(num(it)))?;
            Ok(Value::Record(
                g.into_iter()
                    .map(|(k, xs)| {
                        let v = match op {
                            "group_sum" => xs.iter().sum(),
                            "group_mean" => xs.iter().sum::<f64>() / xs.len() as f64,
                            _ => xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        };
                        (k, Value::Real(v))
                    })
                    .collect(),
            ))
        }
        "chunk" => {
            let n = a.positive_n()?;
            Ok(Value::List(items.chunks(n).map(|c| Value::List(c.to_vec())).collect()))
        }
        "pairs" => Ok(Value::List(items.windows(2).map(|w| Value::List(w.to_vec())).collect())),
        "runs" => {
            let mut out: Vec<Vec<Value>> = Vec::new();
            let mut last: Option<String> = None;
            for (i, it) in items.iter().enumerate() {
                let k = a.key_of("by", i, it)?;
                match (&last, out.last_mut()) {
                    (Some(prev), Some(run)) if *prev == k => run.push(it.clone()),
                    _ => out.push(alloc::vec![it.clone()]),
                }
                last = Some(k);
            }
            Ok(Value::List(out.into_iter().map(Value::List).collect()))
        }
        "bucket_time" => {
            let width = a.positive_n()? as f64;
            let rs = a.ranges()?;
            let mut out: BTreeMap<String, Vec<Value>> = BTreeMap::new();
            for (r, it) in rs.iter().zip(items) {
                let b = libm::floor(r.t_start / width) * width;
                out.entry(crate::value::canonical_number(b)).or_default().push(it.clone());
            }
            Ok(Value::Record(out.into_iter().map(|(k, v)| (k, Value::List(v))).collect()))
        }

        // Sampling/Thresholding
        "take" => Ok(Value::List(items.iter().take(a.need_n()?).cloned().collect())),
        "take_last" => {
            let n = a.need_n()?.min(n_items);
            Ok(Value::List(items[n_items - n..].to_vec()))
        }
        "every_nth" => {
            let n = a.positive_n()?;
            Ok(Value::List(items.iter().step_by(n).cloned().collect()))
        }
        "head_tail" => Ok(Value::List(match n_items {
            0 => Vec::new(),
            1 => items.to_vec(),
            _ => alloc::vec![items[0].clone(), items[n_items - 1].clone()],
        })),
        "middle" => items.get(n_items / 2).filter(|_| n_items > 0).cloned().ok_or(MetaError::Empty),
        "above" | "below" => {
            let cut = a.need_num("value")?;
            let xs = a.numbers()?;
            filter_items(&a, |i, _| Ok(if op == "above" { xs[i] > cut } else { xs[i] < cut }))
        }
        "clamp_min" => {
            let c = a.need_num("value")?;
            map_numbers(&a, |x| Ok(x.max(c)))
        }
        "clamp_max" => {
            let c = a.need_num("value")?;
            map_numbers(&a, |x| Ok(x.min(c)))
        }
        "quantile" => {
            let q = a.need_num("value")?;
            if !(0.0..=1.0).contains(&q) {
                return Err(MetaError::BadArgument("quantile must be in [0, 1]".into()));
            }
            let mut xs = a.numbers()?;
            if xs.is_empty() {
                return Err(MetaError::Empty);
            }
            xs.sort_by(f64::total_cmp);
            let pos = q * (xs.len() - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = libm::ceil(pos) as usize;
            Ok(Value::Real(xs[lo] + (xs[hi] - xs[lo]) * (pos - lo as f64)))
        }
        other => Err(MetaError::BadArgument(format!("unknown op `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(op: &str, items: &str, extra: &[(&str, Value)]) -> Result<Value, MetaError> {
        let mut r = record([("op", Value::from(op)), ("items", Value::parse_json(items).unwrap())]);
        for (k, v) in extra {
            r.insert((*k).to_string(), v.clone());
        }
        table_op(&r)
    }

    #[test]
    fn ranking_ops() {
        let items = r#"[{"id":"a","score":1},{"id":"b","score":3},{"id":"c","score":3}]"#;
        let v = run("sort_desc", items, &[("field", "score".into())]).unwrap();
        let ids: Vec<&str> = v.as_list().unwrap().iter().map(|x| x.get("id").unwrap().as_str().unwrap()).collect();
        assert_eq!(ids, ["b", "c", "a"]);
        assert_eq!(run("argmax", items, &[("field", "score".into())]).unwrap().get("id"), Some(&Value::from("b")));
        assert_eq!(run("argmax", "[]", &[("field", "score".into())]), Err(MetaError::Empty));
    }

    #[test]
    fn aggregation_and_math() {
        assert_eq!(run("sum", "[1,2,3.5]", &[]).unwrap(), Value::Real(6.5));
        assert_eq!(run("median", "[4,1,3,2]", &[]).unwrap(), Value::Real(2.5));
        assert_eq!(run("stdev", "[1,3]", &[]).unwrap(), Value::Real(1.0));
        assert_eq!(run("length", "[1,2]", &[]).unwrap(), Value::Int(2));
        assert_eq!(run("mode", r#"["x","y","y"]"#, &[]).unwrap(), Value::from("y"));
        assert_eq!(run("diffs", "[1,4,9]", &[]).unwrap(), nums(alloc::vec![3.0, 5.0]));
        assert_eq!(run("quantile", "[1,2,3,4,5]", &[("value", Value::Real(0.5))]).unwrap(), Value::Real(3.0));
        assert!(run("reciprocal", "[0]", &[]).is_err());
    }

    #[test]
    fn temporal_ops() {
        let rs = "[[0,10],[15,20],[18,30]]";
        assert_eq!(run("total_duration", rs, &[]).unwrap(), Value::Real(27.0));
        let gaps = run("gaps", rs, &[]).unwrap();
        assert_eq!(gaps.as_list().unwrap().len(), 1);
        assert_eq!(gaps.as_list().unwrap()[0].get("t_start"), Some(&Value::Real(10.0)));
        let span = run("span", rs, &[]).unwrap();
        assert_eq!((span.get("t_start"), span.get("t_end")), (Some(&Value::Real(0.0)), Some(&Value::Real(30.0))));
        assert_eq!(run("intersect", rs, &[]), Err(MetaError::Empty));
        let longest = run("longest", rs, &[]).unwrap();
        assert_eq!(longest.get("t_end"), Some(&Value::Real(30.0)));
    }

    #[test]
    fn text_and_grouping() {
        assert_eq!(run("join_text", r#"["a","b"]"#, &[("text", "-".into())]).unwrap(), Value::from("a-b"));
        assert_eq!(run("extract_numbers", r#"["at 12.5 and 3"]"#, &[]).unwrap(), nums(alloc::vec![12.5, 3.0]));
        assert_eq!(run("format_timestamps", "[[65,130]]", &[]).unwrap(), Value::List(alloc::vec!["01:05-02:10".into()]));
        let g = run("group_count", r#"[{"k":"a"},{"k":"b"},{"k":"a"}]"#, &[("by", "k".into())]).unwrap();
        assert_eq!(g.get("a"), Some(&Value::Int(2)));
        let runs = run("runs", r#"[{"k":1},{"k":1},{"k":2},{"k":1}]"#, &[("by", "k".into())]).unwrap();
        assert_eq!(runs.as_list().unwrap().len(), 3);
        assert_eq!(run("chunk", "[1,2,3]", &[("n", Value::Int(2))]).unwrap().as_list().unwrap().len(), 2);
        assert!(run("nope", "[]", &[]).is_err());
    }
}
