//! Argument schemas: validation and bounded mechanical repair.
//!
//! Repair is deliberately narrow. It drops unsupported fields, fills
//! defaults for absent optional fields, and applies the coercion whitelist
//! (integral real -> integer, numeric string -> number). Alias rewriting
//! belongs to the resolver, not here.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::value::{Record, Value, ValueTag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Boolean,
    Integer,
    Real,
    String,
    TimeSeconds,
    TimeRange,
    List,
    Record,
    Pointer,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConstraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub one_of: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "core::ops::Not::not")]
    pub non_empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub value_kind: ValueKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<FieldConstraints>,
}

impl FieldSpec {
    pub fn required(kind: ValueKind) -> Self {
        FieldSpec { value_kind: kind, required: true, default: None, constraints: None }
    }

    pub fn optional(kind: ValueKind, default: Option<Value>) -> Self {
        FieldSpec { value_kind: kind, required: false, default, constraints: None }
    }

    pub fn with_constraints(mut self, c: FieldConstraints) -> Self {
        self.constraints = Some(c);
        self
    }

    /// Kind and constraint check. Pointers conform to every kind; they are
    /// checked after resolution.
    pub fn accepts(&self, v: &Value) -> bool {
        if v.as_pointer().is_some() {
            return true;
        }
        kind_conforms(self.value_kind, v) && self.constraints.as_ref().is_none_or(|c| c.admits(v))
    }
}

impl FieldConstraints {
    pub fn admits(&self, v: &Value) -> bool {
        if let Some(x) = v.as_f64() {
            if self.min.is_some_and(|m| x < m) || self.max.is_some_and(|m| x > m) {
                return false;
            }
        }
        if let (Some(allowed), Some(s)) = (&self.one_of, v.as_str()) {
            if !allowed.iter().any(|a| a == s) {
                return false;
            }
        }
        if self.non_empty {
            let empty = match v {
                Value::Str(s) => s.trim().is_empty(),
                Value::List(l) => l.is_empty(),
                Value::Record(r) => r.is_empty(),
                Value::Null => true,
                _ => false,
            };
            if empty {
                return false;
            }
        }
        true
    }
}

pub fn kind_conforms(kind: ValueKind, v: &Value) -> bool {
    match kind {
        ValueKind::Boolean => matches!(v, Value::Bool(_)),
        ValueKind::Integer => matches!(v, Value::Int(_)),
        ValueKind::Real => v.as_f64().is_some_and(f64::is_finite),
        ValueKind::String => matches!(v, Value::Str(_)),
        ValueKind::TimeSeconds => v.as_f64().is_some_and(|x| x.is_finite() && x >= 0.0),
        ValueKind::TimeRange => time_range_bounds(v).is_some(),
        ValueKind::List => matches!(v, Value::List(_)),
        ValueKind::Record => matches!(v, Value::Record(_)),
        ValueKind::Pointer => v.as_pointer().is_some(),
    }
}

/// `{t_start, t_end}` record or a two-element numeric list, `0 <= start <= end`.
pub fn time_range_bounds(v: &Value) -> Option<(f64, f64)> {
    let (s, e) = match v {
        Value::Record(r) => (r.get("t_start")?.as_f64()?, r.get("t_end")?.as_f64()?),
        Value::List(l) if l.len() == 2 => (l[0].as_f64()?, l[1].as_f64()?),
        _ => return None,
    };
    (s.is_finite() && e.is_finite() && 0.0 <= s && s <= e).then_some((s, e))
}

/// Ordered map from argument name to field spec. Serialized as a JSON
/// object whose key order is preserved.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSchema {
    fields: Vec<(String, FieldSpec)>,
}

impl ParamSchema {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: &str, spec: FieldSpec) -> Self {
        self.insert(name, spec);
        self
    }

    /// Inserts or replaces a field, keeping first-insertion order.
    pub fn insert(&mut self, name: &str, spec: FieldSpec) {
        match self.fields.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = spec,
            None => self.fields.push((name.to_string(), spec)),
        }
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn fields(&self) -> impl Iterator<Item = (&str, &FieldSpec)> {
        self.fields.iter().map(|(n, s)| (n.as_str(), s))
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Schema-level invariants: required fields carry no default and every
    /// default satisfies its own kind and constraints.
    pub fn check(&self) -> Result<(), String> {
        for (name, spec) in &self.fields {
            match (&spec.default, spec.required) {
                (Some(_), true) => return Err(format!("required field `{name}` has a default")),
                (Some(d), false) if !spec.accepts(d) || d.as_pointer().is_some() => {
                    return Err(format!("default of `{name}` violates its own constraints"));
                }
                _ => {}
            }
            if let Some(c) = &spec.constraints {
                if let (Some(lo), Some(hi)) = (c.min, c.max) {
                    if lo > hi {
                        return Err(format!("field `{name}` has min > max"));
                    }
                }
            }
        }
        Ok(())
    }
}

impl Serialize for ParamSchema {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.fields.len()))?;
        for (k, v) in &self.fields {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for ParamSchema {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ParamSchema;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object mapping argument names to field specs")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<ParamSchema, A::Error> {
                let mut out = ParamSchema::new();
                while let Some((k, v)) = map.next_entry::<String, FieldSpec>()? {
                    if out.field(&k).is_some() {
                        return Err(serde::de::Error::custom(format!("duplicate argument `{k}`")));
                    }
                    out.fields.push((k, v));
                }
                Ok(out)
            }
        }
        d.deserialize_map(V)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationStatus {
    Valid,
    Repaired,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coercion {
    pub field: String,
    pub from: ValueTag,
    pub to: ValueKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub status: ValidationStatus,
    pub missing: Vec<String>,
    pub unsupported: Vec<String>,
    pub coerced: Vec<Coercion>,
    /// Present fields whose kind or constraints do not match.
    pub nonconforming: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repaired_args: Option<Record>,
}

impl ValidationReport {
    pub fn is_usable(&self) -> bool {
        self.status != ValidationStatus::Invalid
    }

    /// Args to execute with: the repaired args when repair happened,
    /// otherwise the originals.
    pub fn effective_args(&self, original: &Record) -> Record {
        self.repaired_args.clone().unwrap_or_else(|| original.clone())
    }
}

fn absent(args: &Record, name: &str) -> bool {
    args.get(name).is_none_or(Value::is_null)
}

/// Reports, never fails. Valid iff every required field is present and
/// conforming, every present field conforms, and no unknown field appears.
pub fn validate_args(schema: &ParamSchema, args: &Record) -> ValidationReport {
    let mut missing = Vec::new();
    let mut nonconforming = Vec::new();
    for (name, spec) in schema.fields() {
        if absent(args, name) {
            if spec.required {
                missing.push(name.to_string());
            }
        } else if !spec.accepts(&args[name]) {
            nonconforming.push(name.to_string());
        }
    }
    let unsupported: Vec<String> =
        args.keys().filter(|k| schema.field(k).is_none()).cloned().collect();
    let status = if missing.is_empty() && nonconforming.is_empty() && unsupported.is_empty() {
        ValidationStatus::Valid
    } else {
        ValidationStatus::Invalid
    };
    ValidationReport { status, missing, unsupported, coerced: Vec::new(), nonconforming, repaired_args: None }
}

/// `args` with every absent defaulted field filled in.
pub fn with_defaults(schema: &ParamSchema, args: &Record) -> Record {
    let mut out = args.clone();
    for (name, spec) in schema.fields() {
        if let Some(d) = spec.default.as_ref().filter(|_| absent(args, name)) {
            out.insert(name.to_string(), d.clone());
        }
    }
    out
}

/// Drop unsupported fields, fill defaults, coerce, then re-validate.
pub fn repair_args(schema: &ParamSchema, args: &Record) -> ValidationReport {
    let mut out = Record::new();
    let mut unsupported = Vec::new();
    for (k, v) in args {
        if schema.field(k).is_some() {
            out.insert(k.clone(), v.clone());
        } else {
            unsupported.push(k.clone());
        }
    }
    let mut changed = !unsupported.is_empty();

    for (name, spec) in schema.fields() {
        if absent(&out, name) {
            if let Some(d) = &spec.default {
                out.insert(name.to_string(), d.clone());
                changed = true;
            }
        }
    }

    let mut coerced = Vec::new();
    for (name, spec) in schema.fields() {
        let Some(v) = out.get(name) else { continue };
        if v.is_null() || spec.accepts(v) {
            continue;
        }
        if let Some(nv) = coerce(spec.value_kind, v) {
            coerced.push(Coercion { field: name.to_string(), from: v.tag(), to: spec.value_kind });
            out.insert(name.to_string(), nv);
            changed = true;
        }
    }

    let check = validate_args(schema, &out);
    let status = match (check.status, changed) {
        (ValidationStatus::Valid, false) => ValidationStatus::Valid,
        (ValidationStatus::Valid, true) => ValidationStatus::Repaired,
        _ => ValidationStatus::Invalid,
    };
    ValidationReport {
        status,
        missing: check.missing,
        unsupported,
        coerced,
        nonconforming: check.nonconforming,
        repaired_args: (status == ValidationStatus::Repaired).then_some(out),
    }
}

fn coerce(kind: ValueKind, v: &Value) -> Option<Value> {
    match (kind, v) {
        (ValueKind::Integer, Value::Real(r)) if r.is_finite() && *r == libm::trunc(*r) => {
            Some(Value::Int(*r as i64))
        }
        (ValueKind::Integer, Value::Str(s)) => s.trim().parse::<i64>().ok().map(Value::Int),
        (ValueKind::Real | ValueKind::TimeSeconds, Value::Str(s)) => {
            s.trim().parse::<f64>().ok().filter(|x| x.is_finite()).map(Value::Real)
        }
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::record;

    fn window_schema() -> ParamSchema {
        ParamSchema::new()
            .with("t_start", FieldSpec::required(ValueKind::Real))
            .with("t_end", FieldSpec::required(ValueKind::Real))
    }

    #[test]
    fn valid_window() {
        let r = validate_args(&window_schema(), &record([("t_start", 10.into()), ("t_end", 20i64.into())]));
        assert_eq!(r.status, ValidationStatus::Valid);
        assert!(r.missing.is_empty() && r.unsupported.is_empty() && r.coerced.is_empty());
    }

    #[test]
    fn old_alias_is_missing_plus_unsupported() {
        let r = validate_args(&window_schema(), &record([("time_range_start", Value::Int(10))]));
        assert_eq!(r.status, ValidationStatus::Invalid);
        assert_eq!(r.missing, ["t_start", "t_end"]);
        assert_eq!(r.unsupported, ["time_range_start"]);
    }

    #[test]
    fn pointer_defers_kind_check() {
        let args = record([("t_start", Value::from("$last_retrieval_result")), ("t_end", Value::Int(20))]);
        assert_eq!(validate_args(&window_schema(), &args).status, ValidationStatus::Valid);
    }

    #[test]
    fn repair_drops_coerces_and_defaults() {
        let schema = ParamSchema::new()
            .with("density", FieldSpec::optional(ValueKind::Integer, Some(Value::Int(1))))
            .with("t_start", FieldSpec::required(ValueKind::Real));
        let args = record([("t_start", Value::from("12.5")), ("extra", Value::Int(1))]);
        let r = repair_args(&schema, &args);
        assert_eq!(r.status, ValidationStatus::Repaired);
        assert_eq!(r.unsupported, ["extra"]);
        assert_eq!(r.coerced.len(), 1);
        assert_eq!(r.coerced[0].from, ValueTag::String);
        let fixed = r.repaired_args.clone().unwrap();
        assert_eq!(fixed, record([("t_start", Value::Real(12.5)), ("density", Value::Int(1))]));
        assert_eq!(validate_args(&schema, &fixed).status, ValidationStatus::Valid);
    }

    #[test]
    fn repair_leaves_valid_args_alone() {
        let args = record([("t_start", Value::Int(1)), ("t_end", Value::Real(2.5))]);
        let r = repair_args(&window_schema(), &args);
        assert_eq!(r.status, ValidationStatus::Valid);
        assert!(r.repaired_args.is_none());
        assert_eq!(r.effective_args(&args), args);
    }

    #[test]
    fn repair_cannot_invent_required_values() {
        let schema = ParamSchema::new().with("query", FieldSpec::required(ValueKind::String));
        let r = repair_args(&schema, &Record::new());
        assert_eq!(r.status, ValidationStatus::Invalid);
        assert_eq!(r.missing, ["query"]);
    }

    #[test]
    fn integral_real_becomes_integer_but_fraction_does_not() {
        let schema = ParamSchema::new().with("k", FieldSpec::required(ValueKind::Integer));
        let ok = repair_args(&schema, &record([("k", Value::Real(4.0))]));
        assert_eq!(ok.repaired_args.unwrap()["k"], Value::Int(4));
        let bad = repair_args(&schema, &record([("k", Value::Real(4.5))]));
        assert_eq!(bad.status, ValidationStatus::Invalid);
        assert_eq!(bad.nonconforming, ["k"]);
    }

    #[test]
    fn schema_check_rejects_required_default_and_bad_default() {
        let mut req = FieldSpec::required(ValueKind::Integer);
        req.default = Some(Value::Int(1));
        assert!(ParamSchema::new().with("x", req).check().is_err());
        let bad = FieldSpec::optional(ValueKind::Integer, Some(Value::Int(0)))
            .with_constraints(FieldConstraints { min: Some(1.0), ..Default::default() });
        assert!(ParamSchema::new().with("x", bad).check().is_err());
    }

    #[test]
    fn schema_json_preserves_field_order() {
        let text = r#"{"z":{"value_kind":"real","required":true},"a":{"value_kind":"string"}}"#;
        let s: ParamSchema = serde_json::from_str(text).unwrap();
        let names: Vec<&str> = s.fields().map(|(n, _)| n).collect();
        assert_eq!(names, ["z", "a"]);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"z":{"value_kind":"real","required":true},"a":{"value_kind":"string","required":false}}"#);
    }
}
