//! Tool registry: specs, the manifest format, counting and availability.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::schema::{time_range_bounds, ParamSchema};
use crate::value::Value;

pub const BASE_CATEGORIES: [&str; 5] =
    ["Retrieval/Search", "Visual/Video", "Audio/Speech", "Execution/Coding", "Memory/System"];

pub const META_FAMILIES: [&str; 8] = [
    "Ranking",
    "Aggregation",
    "Temporal/Window",
    "Math",
    "Text",
    "Filtering",
    "Grouping",
    "Sampling/Thresholding",
];

const DEFAULT_MANIFEST: &str = include_str!("../data/default_manifest.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    Base,
    Meta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exposure {
    PlannerVisible,
    RuntimeInternal,
}

/// Closed predicate language over world state.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Availability {
    Always,
    RequiresModality(String),
    RequiresIndex(String),
    RequiresService(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeConstraints {
    /// Seconds.
    pub timeout: f64,
    pub max_retries: u32,
    pub budget_cost: u32,
    /// Only deterministic tools are cached.
    #[serde(default = "yes")]
    pub deterministic: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputShape {
    TimeRanges,
    Verdict,
    Frame,
    List,
    Record,
    Number,
    Text,
    Boolean,
    Counts,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSchema {
    pub shape: OutputShape,
}

impl OutputSchema {
    pub fn admits(&self, v: &Value) -> bool {
        match self.shape {
            OutputShape::TimeRanges => {
                v.as_list().is_some_and(|l| l.iter().all(|r| time_range_bounds(r).is_some()))
            }
            OutputShape::Verdict => {
                matches!(v.get("verdict").and_then(Value::as_str), Some("yes" | "no"))
            }
            OutputShape::Frame => {
                v.get("labels").is_some_and(|l| l.as_list().is_some())
                    && v.get("frame_ref").is_some_and(|r| r.as_str().is_some())
            }
            OutputShape::List => v.as_list().is_some(),
            OutputShape::Record => v.as_record().is_some(),
            OutputShape::Number => v.as_f64().is_some_and(f64::is_finite),
            OutputShape::Text => v.as_str().is_some(),
            OutputShape::Boolean => v.as_bool().is_some(),
            OutputShape::Counts => v
                .as_record()
                .is_some_and(|r| r.values().all(|c| c.as_i64().is_some_and(|n| n >= 0))),
            OutputShape::Any => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    pub kind: ToolKind,
    pub category: String,
    pub input_schema: ParamSchema,
    pub output_schema: OutputSchema,
    pub availability: Availability,
    pub constraints: RuntimeConstraints,
    pub exposure: Exposure,
    pub binding: String,
}

impl ToolSpec {
    pub fn check(&self) -> Result<(), String> {
        if self.name.is_empty() || self.name.chars().any(char::is_whitespace) {
            return Err("name must be nonempty without whitespace".into());
        }
        let families: &[&str] = match self.kind {
            ToolKind::Base => &BASE_CATEGORIES,
            ToolKind::Meta => &META_FAMILIES,
        };
        if !families.contains(&self.category.as_str()) {
            return Err(format!("category `{}` is not valid for kind {:?}", self.category, self.kind));
        }
        let t = self.constraints.timeout;
        if !(t.is_finite() && t > 0.0) {
            return Err(format!("timeout must be > 0, got {t}"));
        }
        if self.binding.is_empty() {
            return Err("binding must be nonempty".into());
        }
        self.input_schema.check()
    }

    pub fn is_planner_visible(&self) -> bool {
        self.exposure == Exposure::PlannerVisible
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("manifest parse error: {0}")]
    Parse(String),
    #[error("duplicate tool name `{0}`")]
    DuplicateName(String),
    #[error("invalid spec `{name}`: {reason}")]
    InvalidSpec { name: String, reason: String },
    #[error("registry is frozen")]
    Frozen,
}

/// What the current world offers to availability predicates.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityContext {
    pub modalities: BTreeSet<String>,
    pub indexes: BTreeSet<String>,
    pub services: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unavailable {
    Modality(String),
    Index(String),
    Service(String),
}

impl Unavailable {
    pub fn predicate(&self) -> &'static str {
        match self {
            Unavailable::Modality(_) => "modality",
            Unavailable::Index(_) => "index",
            Unavailable::Service(_) => "service",
        }
    }
}

impl core::fmt::Display for Unavailable {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        let (Unavailable::Modality(x) | Unavailable::Index(x) | Unavailable::Service(x)) = self;
        write!(f, "{} `{}` not available", self.predicate(), x)
    }
}

impl AvailabilityContext {
    /// Everything reachable: useful for registry-only inspection.
    pub fn permissive() -> Self {
        let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect();
        AvailabilityContext {
            modalities: set(&["video", "audio", "transcript"]),
            indexes: set(&["transcript", "knowledge_graph"]),
            services: set(&["web", "python"]),
        }
    }

    pub fn check(&self, a: &Availability) -> Result<(), Unavailable> {
        match a {
            Availability::Always => Ok(()),
            Availability::RequiresModality(m) if !self.modalities.contains(m) => {
                Err(Unavailable::Modality(m.clone()))
            }
            Availability::RequiresIndex(i) if !self.indexes.contains(i) => {
                Err(Unavailable::Index(i.clone()))
            }
            Availability::RequiresService(s) if !self.services.contains(s) => {
                Err(Unavailable::Service(s.clone()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absence {
    UnknownName,
    Unavailable(Unavailable),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Lookup<'a> {
    Found(&'a ToolSpec),
    Absent(Absence),
}

impl<'a> Lookup<'a> {
    pub fn found(self) -> Option<&'a ToolSpec> {
        match self {
            Lookup::Found(s) => Some(s),
            Lookup::Absent(_) => None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ToolFilter {
    pub kind: Option<ToolKind>,
    pub category: Option<String>,
}

impl ToolFilter {
    pub fn kind(kind: ToolKind) -> Self {
        ToolFilter { kind: Some(kind), category: None }
    }

    pub fn category(category: &str) -> Self {
        ToolFilter { kind: None, category: Some(category.to_string()) }
    }

    pub fn matches(&self, spec: &ToolSpec) -> bool {
        self.kind.is_none_or(|k| k == spec.kind)
            && self.category.as_deref().is_none_or(|c| c == spec.category)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ToolRegistry {
    entries: BTreeMap<String, ToolSpec>,
    frozen: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ManifestDoc {
    #[serde(rename = "$comment", default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
    tools: Vec<serde_json::Value>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses a manifest document and returns a frozen registry.
    pub fn from_manifest_str(text: &str) -> Result<Self, RegistryError> {
        let doc: ManifestDoc =
            serde_json::from_str(text).map_err(|e| RegistryError::Parse(e.to_string()))?;
        let mut reg = ToolRegistry::new();
        for (i, raw) in doc.tools.into_iter().enumerate() {
            let label = raw
                .get("name")
                .and_then(|n| n.as_str())
                .map(String::from)
                .unwrap_or_else(|| format!("#{i}"));
            let spec: ToolSpec = serde_json::from_value(raw)
                .map_err(|e| RegistryError::Parse(format!("entry {label}: {e}")))?;
            reg.register(spec)?;
        }
        reg.freeze();
        Ok(reg)
    }

    /// The shipped 134-entry library.
    pub fn default_library() -> Self {
        Self::from_manifest_str(DEFAULT_MANIFEST).expect("shipped manifest is valid")
    }

    pub fn default_manifest_text() -> &'static str {
        DEFAULT_MANIFEST
    }

    /// Manifest JSON with entries in name order.
    pub fn to_manifest_string(&self) -> String {
        let doc = ManifestDoc {
            comment: None,
            tools: self.entries.values().map(|s| serde_json::to_value(s).unwrap_or_default()).collect(),
        };
        serde_json::to_string_pretty(&doc).unwrap_or_default()
    }

    pub fn register(&mut self, spec: ToolSpec) -> Result<(), RegistryError> {
        if self.frozen {
            return Err(RegistryError::Frozen);
        }
        if self.entries.contains_key(&spec.name) {
            return Err(RegistryError::DuplicateName(spec.name));
        }
        spec.check().map_err(|reason| RegistryError::InvalidSpec { name: spec.name.clone(), reason })?;
        self.entries.insert(spec.name.clone(), spec);
        Ok(())
    }

    /// Builder-style registration for unfrozen registries.
    pub fn with_tool(mut self, spec: ToolSpec) -> Result<Self, RegistryError> {
        self.register(spec)?;
        Ok(self)
    }

    /// Unfrozen copy, for extending a loaded library in a setup phase.
    pub fn thawed(&self) -> Self {
        ToolRegistry { entries: self.entries.clone(), frozen: false }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.entries.get(name)
    }

    pub fn lookup(&self, name: &str, ctx: &AvailabilityContext) -> Lookup<'_> {
        match self.entries.get(name) {
            None => Lookup::Absent(Absence::UnknownName),
            Some(spec) => match ctx.check(&spec.availability) {
                Ok(()) => Lookup::Found(spec),
                Err(why) => Lookup::Absent(Absence::Unavailable(why)),
            },
        }
    }

    pub fn count(&self, filter: &ToolFilter) -> usize {
        self.entries.values().filter(|s| filter.matches(s)).count()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Specs in name order.
    pub fn iter(&self) -> impl Iterator<Item = &ToolSpec> {
        self.entries.values()
    }

    pub fn categories(&self) -> BTreeSet<&str> {
        self.entries.values().map(|s| s.category.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{FieldSpec, ValueKind};

    fn meta_spec(name: &str) -> ToolSpec {
        ToolSpec {
            name: name.into(),
            description: "test tool".into(),
            tags: BTreeSet::new(),
            kind: ToolKind::Meta,
            category: "Math".into(),
            input_schema: ParamSchema::new().with("x", FieldSpec::required(ValueKind::Real)),
            output_schema: OutputSchema { shape: OutputShape::Number },
            availability: Availability::Always,
            constraints: RuntimeConstraints { timeout: 1.0, max_retries: 0, budget_cost: 0, deterministic: true },
            exposure: Exposure::PlannerVisible,
            binding: "meta.arithmetic".into(),
        }
    }

    #[test]
    fn default_library_counts() {
        let reg = ToolRegistry::default_library();
        assert!(reg.is_frozen());
        assert_eq!(reg.len(), 134);
        assert_eq!(reg.count(&ToolFilter::kind(ToolKind::Base)), 26);
        assert_eq!(reg.count(&ToolFilter::kind(ToolKind::Meta)), 108);
        let per: Vec<usize> = BASE_CATEGORIES
            .iter()
            .map(|c| reg.count(&ToolFilter { kind: Some(ToolKind::Base), category: Some((*c).into()) }))
            .collect();
        assert_eq!(per, [10, 7, 4, 3, 2]);
        for fam in META_FAMILIES {
            assert!(reg.count(&ToolFilter::category(fam)) > 0, "{fam} empty");
        }
    }

    #[test]
    fn empty_and_duplicate_manifests() {
        assert_eq!(ToolRegistry::from_manifest_str(r#"{"tools": []}"#).unwrap().len(), 0);
        let one = serde_json::to_value(meta_spec("Inspect_Frame")).unwrap();
        let text = serde_json::json!({ "tools": [one.clone(), one] }).to_string();
        assert_eq!(
            ToolRegistry::from_manifest_str(&text),
            Err(RegistryError::DuplicateName("Inspect_Frame".into()))
        );
    }

    #[test]
    fn unknown_fields_rejected_with_entry_name() {
        let mut v = serde_json::to_value(meta_spec("Odd")).unwrap();
        v["color"] = "blue".into();
        let text = serde_json::json!({ "tools": [v] }).to_string();
        match ToolRegistry::from_manifest_str(&text) {
            Err(RegistryError::Parse(msg)) => assert!(msg.contains("Odd") && msg.contains("color")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn registration_rules() {
        let mut reg = ToolRegistry::default_library().thawed();
        reg.register(meta_spec("Extra_Meta")).unwrap();
        assert_eq!(reg.len(), 135);
        let mut bad = meta_spec("Zero_Timeout");
        bad.constraints.timeout = 0.0;
        assert!(matches!(reg.register(bad), Err(RegistryError::InvalidSpec { .. })));
        let mut wrong = meta_spec("Wrong_Family");
        wrong.category = "Visual/Video".into();
        assert!(matches!(reg.register(wrong), Err(RegistryError::InvalidSpec { .. })));
        reg.freeze();
        assert_eq!(reg.register(meta_spec("Late")), Err(RegistryError::Frozen));
        assert_eq!(reg.get("Extra_Meta"), Some(&meta_spec("Extra_Meta")));
    }

    #[test]
    fn lookup_reasons() {
        let reg = ToolRegistry::default_library();
        let mut ctx = AvailabilityContext::default();
        ctx.modalities.insert("video".into());
        assert!(reg.lookup("Merge_Temporal_Segments", &ctx).found().is_some());
        assert_eq!(reg.lookup("Nonexistent_Tool_X", &ctx), Lookup::Absent(Absence::UnknownName));
        match reg.lookup("Audio_Event_Detect", &ctx) {
            Lookup::Absent(Absence::Unavailable(u)) => assert_eq!(u.predicate(), "modality"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn output_shapes() {
        let tr = Value::parse_json(r#"[{"t_start":1,"t_end":2},[3,4]]"#).unwrap();
        assert!(OutputSchema { shape: OutputShape::TimeRanges }.admits(&tr));
        let bad = Value::parse_json(r#"[{"t_start":5,"t_end":2}]"#).unwrap();
        assert!(!OutputSchema { shape: OutputShape::TimeRanges }.admits(&bad));
        let verdict = Value::parse_json(r#"{"verdict":"maybe"}"#).unwrap();
        assert!(!OutputSchema { shape: OutputShape::Verdict }.admits(&verdict));
    }

    #[test]
    fn manifest_serialization_is_stable() {
        let a = ToolRegistry::default_library().to_manifest_string();
        let b = ToolRegistry::from_manifest_str(&a).unwrap().to_manifest_string();
        assert_eq!(a, b);
    }
}
