//! Action catalog, the test-case genome and service-description parsing.
//!
//! A test case is a sequence of statements; each statement pairs an *action*
//! (an HTTP method on an endpoint template, fixed for the whole run) with the
//! input data sent along with it.

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use chrono::NaiveDate;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default upper bound on the number of statements in a test.
pub const DEFAULT_MAX_TEST_LENGTH: usize = 40;

const MAX_RANDOM_STRING_LEN: usize = 16;
const INT_RANGE: (i64, i64) = (-1000, 1000);
const NUM_RANGE: (f64, f64) = (-1000.0, 1000.0);

#[derive(Debug, Error, PartialEq)]
pub enum ApiModelError {
    #[error("malformed service description at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("service description declares no operations")]
    EmptyCatalog,
    #[error("duplicate operation {0}")]
    DuplicateOperation(String),
}

impl ApiModelError {
    fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        ApiModelError::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HttpMethod {
    Get,
    Head,
    Post,
    Put,
    Patch,
    Delete,
}

impl HttpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HttpMethod::Get => "GET",
            HttpMethod::Head => "HEAD",
            HttpMethod::Post => "POST",
            HttpMethod::Put => "PUT",
            HttpMethod::Patch => "PATCH",
            HttpMethod::Delete => "DELETE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "GET" => Some(HttpMethod::Get),
            "HEAD" => Some(HttpMethod::Head),
            "POST" => Some(HttpMethod::Post),
            "PUT" => Some(HttpMethod::Put),
            "PATCH" => Some(HttpMethod::Patch),
            "DELETE" => Some(HttpMethod::Delete),
            _ => None,
        }
    }
}

impl fmt::Display for HttpMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamLocation {
    Path,
    Query,
    Header,
    Body,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    String,
    Integer,
    Number,
    Boolean,
    Date,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSchema {
    pub name: String,
    #[serde(rename = "in")]
    pub location: ParamLocation,
    #[serde(rename = "type")]
    pub value_type: ValueType,
    pub required: bool,
}

/// One HTTP operation of the service: the fixed part of a statement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub index: usize,
    pub method: HttpMethod,
    pub endpoint_template: String,
    pub params: Vec<ParamSchema>,
}

impl ActionSpec {
    /// `"METHOD /path"`, the key used by scenario files to name an action.
    pub fn label(&self) -> String {
        format!("{} {}", self.method, self.endpoint_template)
    }

    pub fn param(&self, name: &str) -> Option<&ParamSchema> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// The ordered, run-wide set of available actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCatalog {
    actions: Vec<ActionSpec>,
}

impl ActionCatalog {
    /// Builds a catalog, re-assigning indices in the given order.
    pub fn new(mut actions: Vec<ActionSpec>) -> Result<Self, ApiModelError> {
        if actions.is_empty() {
            return Err(ApiModelError::EmptyCatalog);
        }
        let mut seen = HashSet::new();
        for (i, a) in actions.iter_mut().enumerate() {
            a.index = i;
            if !seen.insert((a.method, a.endpoint_template.clone())) {
                return Err(ApiModelError::DuplicateOperation(a.label()));
            }
            check_path_params(a, &format!("endpoints[{i}]"))?;
        }
        Ok(ActionCatalog { actions })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[ActionSpec] {
        &self.actions
    }

    pub fn get(&self, index: usize) -> Option<&ActionSpec> {
        self.actions.get(index)
    }

    pub fn find(&self, method: HttpMethod, endpoint: &str) -> Option<&ActionSpec> {
        self.actions
            .iter()
            .find(|a| a.method == method && a.endpoint_template == endpoint)
    }

    /// Looks an action up by its `"METHOD /path"` label.
    pub fn find_label(&self, label: &str) -> Option<&ActionSpec> {
        let (method, path) = label.trim().split_once(' ')?;
        self.find(HttpMethod::parse(method)?, path.trim())
    }
}

impl std::ops::Index<usize> for ActionCatalog {
    type Output = ActionSpec;

    fn index(&self, index: usize) -> &ActionSpec {
        &self.actions[index]
    }
}

fn path_param_names(template: &str) -> Result<Vec<String>, String> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| format!("unterminated path parameter in '{template}'"))?;
        let name = &after[..close];
        if name.is_empty() {
            return Err(format!("empty path parameter name in '{template}'"));
        }
        names.push(name.to_string());
        rest = &after[close + 1..];
    }
    Ok(names)
}

fn check_path_params(spec: &ActionSpec, location: &str) -> Result<(), ApiModelError> {
    let in_template =
        path_param_names(&spec.endpoint_template).map_err(|m| ApiModelError::parse(location, m))?;
    let unique: BTreeSet<&String> = in_template.iter().collect();
    if unique.len() != in_template.len() {
        return Err(ApiModelError::parse(
            location,
            format!("repeated path parameter in '{}'", spec.endpoint_template),
        ));
    }
    for name in &in_template {
        let declared = spec
            .params
            .iter()
            .filter(|p| &p.name == name && p.location == ParamLocation::Path)
            .count();
        if declared != 1 {
            return Err(ApiModelError::parse(
                location,
                format!(
                    "path parameter '{name}' of '{}' must be declared exactly once with \"in\": \"path\"",
                    spec.endpoint_template
                ),
            ));
        }
    }
    for p in spec
        .params
        .iter()
        .filter(|p| p.location == ParamLocation::Path)
    {
        if !unique.contains(&p.name) {
            return Err(ApiModelError::parse(
                location,
                format!(
                    "path parameter '{}' does not occur in '{}'",
                    p.name, spec.endpoint_template
                ),
            ));
        }
    }
    let mut names = HashSet::new();
    for p in &spec.params {
        if !names.insert((&p.name, p.location)) {
            return Err(ApiModelError::parse(
                location,
                format!("parameter '{}' declared twice", p.name),
            ));
        }
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    endpoints: Vec<RawEndpoint>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEndpoint {
    method: String,
    path: String,
    #[serde(default)]
    params: Vec<RawParam>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParam {
    name: String,
    #[serde(rename = "in")]
    location: String,
    #[serde(rename = "type")]
    value_type: String,
    #[serde(default)]
    required: Option<bool>,
}

/// Parses the JSON service description
/// `{"endpoints": [{"method", "path", "params": [{"name", "in", "type", "required"}]}]}`.
pub fn parse_service_description(document: &str) -> Result<ActionCatalog, ApiModelError> {
    let raw: RawDocument = serde_json::from_str(document).map_err(|e| {
        ApiModelError::parse(
            format!("line {} column {}", e.line(), e.column()),
            e.to_string(),
        )
    })?;
    catalog_from_value(raw)
}

/// Same as [`parse_service_description`] for an already-decoded JSON value.
pub fn parse_service_value(value: &serde_json::Value) -> Result<ActionCatalog, ApiModelError> {
    let raw: RawDocument = serde_json::from_value(value.clone())
        .map_err(|e| ApiModelError::parse("service", e.to_string()))?;
    catalog_from_value(raw)
}

fn catalog_from_value(raw: RawDocument) -> Result<ActionCatalog, ApiModelError> {
    if raw.endpoints.is_empty() {
        return Err(ApiModelError::EmptyCatalog);
    }
    let mut actions = Vec::with_capacity(raw.endpoints.len());
    for (i, ep) in raw.endpoints.into_iter().enumerate() {
        let loc = format!("endpoints[{i}]");
        let method = HttpMethod::parse(&ep.method).ok_or_else(|| {
            ApiModelError::parse(
                format!("{loc}.method"),
                format!("unknown method '{}'", ep.method),
            )
        })?;
        if !ep.path.starts_with('/') {
            return Err(ApiModelError::parse(
                format!("{loc}.path"),
                format!("path '{}' must start with '/'", ep.path),
            ));
        }
        let mut params = Vec::with_capacity(ep.params.len());
        for (j, p) in ep.params.into_iter().enumerate() {
            let ploc = format!("{loc}.params[{j}]");
            let location = match p.location.as_str() {
                "path" => ParamLocation::Path,
                "query" => ParamLocation::Query,
                "header" => ParamLocation::Header,
                "body" => ParamLocation::Body,
                other => {
                    return Err(ApiModelError::parse(
                        format!("{ploc}.in"),
                        format!("unknown parameter location '{other}'"),
                    ))
                }
            };
            let value_type = match p.value_type.as_str() {
                "string" => ValueType::String,
                "integer" => ValueType::Integer,
                "number" => ValueType::Number,
                "boolean" => ValueType::Boolean,
                "date" => ValueType::Date,
                other => {
                    return Err(ApiModelError::parse(
                        format!("{ploc}.type"),
                        format!("unknown value type '{other}'"),
                    ))
                }
            };
            let required = location == ParamLocation::Path || p.required.unwrap_or(false);
            params.push(ParamSchema {
                name: p.name,
                location,
                value_type,
                required,
            });
        }
        let spec = ActionSpec {
            index: i,
            method,
            endpoint_template: ep.path,
            params,
        };
        check_path_params(&spec, &loc)?;
        actions.push(spec);
    }
    ActionCatalog::new(actions)
}

/// Concrete value of one input gene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputValue {
    Str(String),
    Int(i64),
    Num(f64),
    Bool(bool),
    /// Days since 0001-01-01 (proleptic Gregorian).
    Date(i32),
    /// The token returned by the statement `back` positions earlier in the same test.
    TokenRef {
        back: usize,
    },
}

impl InputValue {
    pub fn matches(&self, value_type: ValueType) -> bool {
        matches!(
            (self, value_type),
            (InputValue::TokenRef { .. }, _)
                | (InputValue::Str(_), ValueType::String)
                | (InputValue::Int(_), ValueType::Integer)
                | (InputValue::Num(_), ValueType::Number)
                | (InputValue::Bool(_), ValueType::Boolean)
                | (InputValue::Date(_), ValueType::Date)
        )
    }

    /// ISO-8601 rendering of a date value.
    pub fn date_string(days: i32) -> String {
        NaiveDate::from_num_days_from_ce_opt(days)
            .map(|d| d.format("%Y-%m-%d").to_string())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputGene {
    pub name: String,
    pub value: InputValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionInstance {
    pub action: usize,
    pub inputs: Vec<InputGene>,
}

impl ActionInstance {
    pub fn input(&self, name: &str) -> Option<&InputValue> {
        self.inputs
            .iter()
            .find(|g| g.name == name)
            .map(|g| &g.value)
    }
}

/// The chromosome: an ordered list of statements.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TestCase {
    pub statements: Vec<ActionInstance>,
}

impl TestCase {
    pub fn new(statements: Vec<ActionInstance>) -> Self {
        TestCase { statements }
    }

    pub fn len(&self) -> usize {
        self.statements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.statements.is_empty()
    }

    pub fn actions(&self) -> impl Iterator<Item = usize> + '_ {
        self.statements.iter().map(|s| s.action)
    }

    /// Checks the genome against the catalog: indices in range, every required
    /// parameter present exactly once, value tags matching the declared types.
    pub fn validate(&self, catalog: &ActionCatalog, max_len: usize) -> Result<(), String> {
        if self.is_empty() || self.len() > max_len {
            return Err(format!("length {} outside [1, {max_len}]", self.len()));
        }
        for (pos, stmt) in self.statements.iter().enumerate() {
            let spec = catalog
                .get(stmt.action)
                .ok_or_else(|| format!("statement {pos}: unknown action {}", stmt.action))?;
            for p in &spec.params {
                let n = stmt.inputs.iter().filter(|g| g.name == p.name).count();
                if n > 1 || (p.required && n == 0) {
                    return Err(format!(
                        "statement {pos}: parameter '{}' appears {n} times",
                        p.name
                    ));
                }
            }
            for g in &stmt.inputs {
                let p = spec
                    .param(&g.name)
                    .ok_or_else(|| format!("statement {pos}: undeclared parameter '{}'", g.name))?;
                if !g.value.matches(p.value_type) {
                    return Err(format!(
                        "statement {pos}: '{}' has the wrong value type",
                        g.name
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Per-service literal values mixed into random input sampling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiteralPool {
    pub strings: Vec<String>,
    pub integers: Vec<i64>,
    pub numbers: Vec<f64>,
}

fn date_window() -> (i32, i32) {
    use chrono::Datelike;
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).expect("valid date");
    let end = NaiveDate::from_ymd_opt(2024, 12, 31).expect("valid date");
    (start.num_days_from_ce(), end.num_days_from_ce())
}

fn random_alphanumeric<R: Rng + ?Sized>(rng: &mut R) -> String {
    const CHARSET: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    let len = rng.gen_range(0..=MAX_RANDOM_STRING_LEN);
    (0..len)
        .map(|_| CHARSET[rng.gen_range(0..CHARSET.len())] as char)
        .collect()
}

/// Samples a value for `param` in a statement at `position` of its test.
pub fn sample_value<R: Rng + ?Sized>(
    param: &ParamSchema,
    position: usize,
    pool: &LiteralPool,
    rng: &mut R,
) -> InputValue {
    match param.value_type {
        ValueType::String => {
            // token reference / literal / random, each a third when available
            let roll = rng.gen_range(0..3);
            if roll == 0 && position > 0 {
                InputValue::TokenRef {
                    back: rng.gen_range(1..=position),
                }
            } else if roll <= 1 && !pool.strings.is_empty() {
                InputValue::Str(pool.strings.choose(rng).cloned().unwrap_or_default())
            } else {
                InputValue::Str(random_alphanumeric(rng))
            }
        }
        ValueType::Integer => {
            if !pool.integers.is_empty() && rng.gen_bool(0.5) {
                InputValue::Int(*pool.integers.choose(rng).unwrap_or(&0))
            } else {
                InputValue::Int(rng.gen_range(INT_RANGE.0..=INT_RANGE.1))
            }
        }
        ValueType::Number => {
            if !pool.numbers.is_empty() && rng.gen_bool(0.5) {
                InputValue::Num(*pool.numbers.choose(rng).unwrap_or(&0.0))
            } else {
                let x: f64 = rng.gen_range(NUM_RANGE.0..=NUM_RANGE.1);
                InputValue::Num((x * 100.0).round() / 100.0)
            }
        }
        ValueType::Boolean => InputValue::Bool(rng.gen_bool(0.5)),
        ValueType::Date => {
            let (lo, hi) = date_window();
            InputValue::Date(rng.gen_range(lo..=hi))
        }
    }
}

/// A fresh statement for `action`: required parameters always, optional ones with probability 1/2.
pub fn sample_instance<R: Rng + ?Sized>(
    catalog: &ActionCatalog,
    action: usize,
    position: usize,
    pool: &LiteralPool,
    rng: &mut R,
) -> ActionInstance {
    let spec = &catalog[action];
    let mut inputs = Vec::with_capacity(spec.params.len());
    for p in &spec.params {
        if p.required || rng.gen_bool(0.5) {
            inputs.push(InputGene {
                name: p.name.clone(),
                value: sample_value(p, position, pool, rng),
            });
        }
    }
    ActionInstance { action, inputs }
}

/// A random test of uniform length in `[1, max_len]` with uniformly drawn actions.
pub fn random_test<R: Rng + ?Sized>(
    catalog: &ActionCatalog,
    pool: &LiteralPool,
    max_len: usize,
    rng: &mut R,
) -> TestCase {
    assert!(max_len >= 1, "max_len must be at least 1");
    let len = rng.gen_range(1..=max_len);
    let statements = (0..len)
        .map(|pos| {
            let action = rng.gen_range(0..catalog.len());
            sample_instance(catalog, action, pos, pool, rng)
        })
        .collect();
    TestCase { statements }
}
