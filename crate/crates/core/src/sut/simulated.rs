//! A stateful REST service simulated in-process from a JSON scenario file.
//!
//! Every action of the service has a handler: a list of statements, each with an
//! optional predicate and an effect on the resource store. A statement's effect runs
//! when it has no predicate or the predicate holds; the optional `else` effect runs
//! when the predicate fails. A `respond` effect ends the handler. Injected faults are
//! extra guarded statements spliced into a handler that respond with a 5xx status.
//!
//! Coverage targets are one line target per statement and a true/false branch pair per
//! predicate. Statements skipped by an early `respond` get an approach distance in
//! `(0.5, 1]` derived from the guard that caused the exit.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::distance::{self, BranchOutcome, CmpOp, Value};
use super::{
    is_server_error, CoverageTarget, ExecutionResult, FaultSignature, Sut, SutError, TargetKind,
};
use crate::api_model::{
    parse_service_value, ActionCatalog, ActionInstance, InputValue, LiteralPool, TestCase,
};

const DEFAULT_STATUS: u16 = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operand {
    Param(String),
    Const(serde_json::Value),
    Field {
        collection: String,
        key: Box<Operand>,
        field: String,
    },
    Exists {
        collection: String,
        key: Box<Operand>,
    },
    Count(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub lhs: Operand,
    pub op: CmpOp,
    pub rhs: Operand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WriteEffect {
    pub collection: String,
    pub key: Operand,
    #[serde(default)]
    pub fields: BTreeMap<String, Operand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocateEffect {
    pub collection: String,
    pub key: Operand,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RespondEffect {
    pub status: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<Operand>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effect {
    Create(WriteEffect),
    Read(LocateEffect),
    Update(WriteEffect),
    Delete(LocateEffect),
    Respond(RespondEffect),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementDef {
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicate: Option<Predicate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effect: Option<Effect>,
    #[serde(default, rename = "else", skip_serializing_if = "Option::is_none")]
    pub otherwise: Option<Effect>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandlerDef {
    pub action: String,
    #[serde(default)]
    pub statements: Vec<StatementDef>,
}

/// A guarded server error, spliced into the handler of `action` right after
/// statement `after` (or at the start of the handler).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultDef {
    pub action: String,
    pub id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<u32>,
    pub predicate: Predicate,
    #[serde(default = "default_fault_status")]
    pub status: u16,
}

fn default_fault_status() -> u16 {
    500
}

type Record = BTreeMap<String, serde_json::Value>;

/// The on-disk scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Golden number of coverage targets, checked by tests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<usize>,
    pub service: serde_json::Value,
    #[serde(default)]
    pub literals: LiteralPool,
    #[serde(default)]
    pub resources: BTreeMap<String, BTreeMap<String, Record>>,
    pub handlers: Vec<HandlerDef>,
    #[serde(default)]
    pub faults: Vec<FaultDef>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SutError> {
        serde_json::from_str(text).map_err(|e| SutError::Scenario(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SutError> {
        let text = std::fs::read_to_string(path.as_ref())?;
        Self::from_json(&text)
    }
}

type Store = BTreeMap<String, BTreeMap<String, BTreeMap<String, Value>>>;

#[derive(Debug, Clone)]
struct Statement {
    id: u32,
    predicate: Option<Predicate>,
    effect: Option<Effect>,
    otherwise: Option<Effect>,
    line_target: usize,
    branch_targets: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
struct Handler {
    statements: Vec<Statement>,
}

#[derive(Debug, Clone)]
pub struct SimulatedSut {
    name: String,
    catalog: ActionCatalog,
    literals: LiteralPool,
    initial: Store,
    store: Store,
    handlers: Vec<Handler>,
    targets: Vec<CoverageTarget>,
    declared_targets: Option<usize>,
}

fn json_to_value(v: &serde_json::Value) -> Result<Value, String> {
    Ok(match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => Value::Num(n.as_f64().ok_or("number out of range")?),
        serde_json::Value::String(s) => Value::Str(s.clone()),
        other => return Err(format!("non-scalar value {other}")),
    })
}

fn check_operand(op: &Operand, params: &HashSet<&str>, ctx: &str) -> Result<(), SutError> {
    match op {
        Operand::Param(name) if !params.contains(name.as_str()) => Err(SutError::Scenario(
            format!("{ctx}: parameter '{name}' is not declared by the action"),
        )),
        Operand::Const(v) => json_to_value(v)
            .map(|_| ())
            .map_err(|m| SutError::Scenario(format!("{ctx}: {m}"))),
        Operand::Field { key, .. } | Operand::Exists { key, .. } => check_operand(key, params, ctx),
        _ => Ok(()),
    }
}

fn check_effect(e: &Effect, params: &HashSet<&str>, ctx: &str) -> Result<(), SutError> {
    match e {
        Effect::Create(w) | Effect::Update(w) => {
            check_operand(&w.key, params, ctx)?;
            w.fields
                .values()
                .try_for_each(|f| check_operand(f, params, ctx))
        }
        Effect::Read(l) | Effect::Delete(l) => check_operand(&l.key, params, ctx),
        Effect::Respond(r) => {
            if !(100..=599).contains(&r.status) {
                return Err(SutError::Scenario(format!(
                    "{ctx}: invalid status {}",
                    r.status
                )));
            }
            r.token
                .as_ref()
                .map_or(Ok(()), |t| check_operand(t, params, ctx))
        }
    }
}

impl SimulatedSut {
    pub fn from_scenario(scenario: &Scenario) -> Result<Self, SutError> {
        let catalog = parse_service_value(&scenario.service)?;
        let mut defs: Vec<Vec<StatementDef>> = vec![Vec::new(); catalog.len()];
        let mut has_handler = vec![false; catalog.len()];
        for h in &scenario.handlers {
            let spec = catalog.find_label(&h.action).ok_or_else(|| {
                SutError::Scenario(format!("handler for unknown action '{}'", h.action))
            })?;
            if std::mem::replace(&mut has_handler[spec.index], true) {
                return Err(SutError::Scenario(format!(
                    "two handlers for '{}'",
                    h.action
                )));
            }
            defs[spec.index] = h.statements.clone();
        }
        for f in &scenario.faults {
            let spec = catalog.find_label(&f.action).ok_or_else(|| {
                SutError::Scenario(format!("fault {} on unknown action '{}'", f.id, f.action))
            })?;
            if !is_server_error(f.status) {
                return Err(SutError::Scenario(format!(
                    "fault {} must respond 5xx",
                    f.id
                )));
            }
            let stmts = &mut defs[spec.index];
            let at = match f.after {
                None => 0,
                Some(after) => {
                    stmts.iter().position(|s| s.id == after).ok_or_else(|| {
                        SutError::Scenario(format!(
                            "fault {}: no statement {after} in '{}'",
                            f.id, f.action
                        ))
                    })? + 1
                }
            };
            stmts.insert(
                at,
                StatementDef {
                    id: f.id,
                    predicate: Some(f.predicate.clone()),
                    effect: Some(Effect::Respond(RespondEffect {
                        status: f.status,
                        token: None,
                    })),
                    otherwise: None,
                },
            );
        }

        let mut seen_ids = HashSet::new();
        let mut targets = Vec::new();
        let mut handlers = vec![Handler::default(); catalog.len()];
        // Enumerate in scenario order: handlers as listed, then actions without a handler.
        let mut order: Vec<usize> = scenario
            .handlers
            .iter()
            .filter_map(|h| catalog.find_label(&h.action).map(|a| a.index))
            .collect();
        order.extend((0..catalog.len()).filter(|i| !has_handler[*i]));
        for action in order {
            let spec = &catalog[action];
            let params: HashSet<&str> = spec.params.iter().map(|p| p.name.as_str()).collect();
            for def in &defs[action] {
                let ctx = format!("{} statement {}", spec.label(), def.id);
                if !seen_ids.insert(def.id) {
                    return Err(SutError::Scenario(format!(
                        "duplicate statement id {}",
                        def.id
                    )));
                }
                if let Some(p) = &def.predicate {
                    check_operand(&p.lhs, &params, &ctx)?;
                    check_operand(&p.rhs, &params, &ctx)?;
                } else if def.otherwise.is_some() {
                    return Err(SutError::Scenario(format!(
                        "{ctx}: 'else' without predicate"
                    )));
                }
                for e in def.effect.iter().chain(def.otherwise.iter()) {
                    check_effect(e, &params, &ctx)?;
                }
                let line_target = targets.len();
                targets.push(CoverageTarget {
                    id: line_target,
                    kind: TargetKind::Line,
                    statement: def.id,
                    predicate: None,
                });
                let branch_targets = def.predicate.as_ref().map(|_| {
                    let t = targets.len();
                    for kind in [TargetKind::BranchTrue, TargetKind::BranchFalse] {
                        targets.push(CoverageTarget {
                            id: targets.len(),
                            kind,
                            statement: def.id,
                            predicate: Some(def.id),
                        });
                    }
                    (t, t + 1)
                });
                handlers[action].statements.push(Statement {
                    id: def.id,
                    predicate: def.predicate.clone(),
                    effect: def.effect.clone(),
                    otherwise: def.otherwise.clone(),
                    line_target,
                    branch_targets,
                });
            }
        }

        let mut initial = Store::new();
        for (collection, records) in &scenario.resources {
            let coll = initial.entry(collection.clone()).or_default();
            for (key, record) in records {
                let rec = record
                    .iter()
                    .map(|(k, v)| json_to_value(v).map(|v| (k.clone(), v)))
                    .collect::<Result<BTreeMap<_, _>, _>>()
                    .map_err(|m| SutError::Scenario(format!("resource {collection}/{key}: {m}")))?;
                coll.insert(key.clone(), rec);
            }
        }

        Ok(SimulatedSut {
            name: scenario.name.clone(),
            catalog,
            literals: scenario.literals.clone(),
            store: initial.clone(),
            initial,
            handlers,
            targets,
            declared_targets: scenario.targets,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SutError> {
        Self::from_scenario(&Scenario::from_json(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SutError> {
        Self::from_scenario(&Scenario::load(path)?)
    }

    /// The target count pinned in the scenario file, if any.
    pub fn declared_targets(&self) -> Option<usize> {
        self.declared_targets
    }

    /// Number of coverage targets contributed by the handler of `action`.
    pub fn handler_target_count(&self, action: usize) -> usize {
        self.handlers[action]
            .statements
            .iter()
            .map(|s| 1 + if s.branch_targets.is_some() { 2 } else { 0 })
            .sum()
    }

    pub fn store_snapshot(&self) -> String {
        format!("{:?}", self.store)
    }

    fn eval(&self, op: &Operand, bindings: &BTreeMap<String, Value>) -> Value {
        match op {
            Operand::Param(name) => bindings.get(name).cloned().unwrap_or(Value::Null),
            Operand::Const(v) => json_to_value(v).unwrap_or(Value::Null),
            Operand::Field {
                collection,
                key,
                field,
            } => {
                let key = self.eval(key, bindings).render();
                self.store
                    .get(collection)
                    .and_then(|c| c.get(&key))
                    .and_then(|r| r.get(field))
                    .cloned()
                    .unwrap_or(Value::Null)
            }
            Operand::Exists { collection, key } => {
                let key = self.eval(key, bindings).render();
                Value::Bool(
                    self.store
                        .get(collection)
                        .is_some_and(|c| c.contains_key(&key)),
                )
            }
            Operand::Count(collection) => {
                Value::Num(self.store.get(collection).map_or(0, |c| c.len()) as f64)
            }
        }
    }

    /// Applies an effect; returns the response when the effect ends the handler.
    fn apply(
        &mut self,
        effect: &Effect,
        bindings: &BTreeMap<String, Value>,
    ) -> Option<(u16, Option<String>)> {
        match effect {
            Effect::Create(w) => {
                let key = self.eval(&w.key, bindings).render();
                let record = w
                    .fields
                    .iter()
                    .map(|(f, op)| (f.clone(), self.eval(op, bindings)))
                    .collect();
                self.store
                    .entry(w.collection.clone())
                    .or_default()
                    .insert(key, record);
                None
            }
            Effect::Update(w) => {
                let key = self.eval(&w.key, bindings).render();
                let fields: Vec<(String, Value)> = w
                    .fields
                    .iter()
                    .map(|(f, op)| (f.clone(), self.eval(op, bindings)))
                    .collect();
                if let Some(rec) = self
                    .store
                    .get_mut(&w.collection)
                    .and_then(|c| c.get_mut(&key))
                {
                    rec.extend(fields);
                }
                None
            }
            Effect::Read(_) => None,
            Effect::Delete(l) => {
                let key = self.eval(&l.key, bindings).render();
                if let Some(c) = self.store.get_mut(&l.collection) {
                    c.remove(&key);
                }
                None
            }
            Effect::Respond(r) => {
                let token = r.token.as_ref().map(|t| self.eval(t, bindings).render());
                Some((r.status, token))
            }
        }
    }

    fn bindings(
        stmt: &ActionInstance,
        position: usize,
        tokens: &[Option<String>],
    ) -> BTreeMap<String, Value> {
        stmt.inputs
            .iter()
            .map(|g| {
                let v = match &g.value {
                    InputValue::Str(s) => Value::Str(s.clone()),
                    InputValue::Int(i) => Value::Num(*i as f64),
                    InputValue::Num(x) => Value::Num(*x),
                    InputValue::Bool(b) => Value::Bool(*b),
                    InputValue::Date(d) => Value::Str(InputValue::date_string(*d)),
                    InputValue::TokenRef { back } => Value::Str(
                        position
                            .checked_sub(*back)
                            .filter(|_| *back >= 1)
                            .and_then(|j| tokens.get(j).cloned().flatten())
                            .unwrap_or_default(),
                    ),
                };
                (g.name.clone(), v)
            })
            .collect()
    }

    /// Runs one handler; records distances into `objectives`.
    fn run_handler(
        &mut self,
        action: usize,
        bindings: &BTreeMap<String, Value>,
        objectives: &mut [f64],
    ) -> (u16, Option<String>, Option<u32>) {
        let statements = std::mem::take(&mut self.handlers[action].statements);
        let mut outcome = (DEFAULT_STATUS, None, None);
        let mut exit: Option<(usize, f64)> = None;
        for (k, stmt) in statements.iter().enumerate() {
            objectives[stmt.line_target] = 0.0;
            outcome.2 = Some(stmt.id);
            let mut branch: Option<BranchOutcome> = None;
            if let (Some(p), Some((t, f))) = (&stmt.predicate, stmt.branch_targets) {
                let lhs = self.eval(&p.lhs, bindings);
                let rhs = self.eval(&p.rhs, bindings);
                let o = distance::evaluate(&lhs, p.op, &rhs);
                objectives[t] = objectives[t].min(o.true_distance);
                objectives[f] = objectives[f].min(o.false_distance);
                branch = Some(o);
            }
            let effect = match branch {
                None => stmt.effect.as_ref(),
                Some(o) if o.taken => stmt.effect.as_ref(),
                Some(_) => stmt.otherwise.as_ref(),
            };
            if let Some(e) = effect {
                if let Some((status, token)) = self.apply(e, bindings) {
                    outcome.0 = status;
                    outcome.1 = token;
                    // how close execution came to not leaving here
                    let approach = match branch {
                        None => 1.0,
                        Some(o) => {
                            0.5 + 0.5
                                * if o.taken {
                                    o.false_distance
                                } else {
                                    o.true_distance
                                }
                        }
                    };
                    exit = Some((k, approach));
                    break;
                }
            }
        }
        if let Some((k, approach)) = exit {
            for stmt in &statements[k + 1..] {
                let ids = std::iter::once(stmt.line_target)
                    .chain(stmt.branch_targets.into_iter().flat_map(|(t, f)| [t, f]));
                for id in ids {
                    objectives[id] = objectives[id].min(approach);
                }
            }
        }
        self.handlers[action].statements = statements;
        outcome
    }
}

impl Sut for SimulatedSut {
    fn name(&self) -> &str {
        &self.name
    }

    fn catalog(&self) -> &ActionCatalog {
        &self.catalog
    }

    fn literals(&self) -> &LiteralPool {
        &self.literals
    }

    fn targets(&self) -> &[CoverageTarget] {
        &self.targets
    }

    fn reset(&mut self) {
        self.store.clone_from(&self.initial);
    }

    fn execute(&mut self, test: &TestCase) -> Result<ExecutionResult, SutError> {
        let mut objectives = vec![1.0; self.targets.len()];
        let mut statuses = Vec::with_capacity(test.len());
        let mut tokens: Vec<Option<String>> = Vec::with_capacity(test.len());
        let mut faults = BTreeSet::new();
        for (position, stmt) in test.statements.iter().enumerate() {
            if stmt.action >= self.catalog.len() {
                return Err(SutError::UnknownAction {
                    position,
                    action: stmt.action,
                });
            }
            let bindings = Self::bindings(stmt, position, &tokens);
            let (status, token, last) = self.run_handler(stmt.action, &bindings, &mut objectives);
            if is_server_error(status) {
                let spec = &self.catalog[stmt.action];
                faults.insert(FaultSignature {
                    method: spec.method,
                    endpoint: spec.endpoint_template.clone(),
                    last_statement: last,
                    status,
                });
            }
            statuses.push(status);
            tokens.push(token);
        }
        if let Some(bad) = objectives.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(SutError::Internal(format!(
                "objective {bad} outside [0, 1]"
            )));
        }
        Ok(ExecutionResult::from_objectives(
            objectives, faults, statuses,
        ))
    }
}
