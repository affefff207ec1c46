//! Black-box adapter for a running HTTP service.
//!
//! Without instrumentation the only observable signal is the response status, so
//! targets degrade to one per (action, status class) and fault signatures carry no
//! statement id.

use std::collections::BTreeSet;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{
    is_server_error, CoverageTarget, ExecutionResult, FaultSignature, Sut, SutError, TargetKind,
};
use crate::api_model::{ActionCatalog, InputValue, LiteralPool, ParamLocation, TestCase};

/// Status recorded for a request that never produced a response.
pub const NETWORK_FAILURE_STATUS: u16 = 0;

const STATUS_CLASSES: [u16; 4] = [2, 3, 4, 5];

fn default_timeout_ms() -> u64 {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    pub base_url: String,
    /// Receives an empty `POST` before every test when set.
    #[serde(default)]
    pub reset_url: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

pub struct LiveSut {
    name: String,
    config: LiveConfig,
    catalog: ActionCatalog,
    literals: LiteralPool,
    agent: ureq::Agent,
    targets: Vec<CoverageTarget>,
    warned_reset: bool,
}

impl LiveSut {
    pub fn new(
        config: LiveConfig,
        catalog: ActionCatalog,
        literals: LiteralPool,
    ) -> Result<Self, SutError> {
        url::Url::parse(&config.base_url)
            .map_err(|e| SutError::Scenario(format!("base url '{}': {e}", config.base_url)))?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        let targets = (0..catalog.len())
            .flat_map(|a| STATUS_CLASSES.iter().map(move |&c| (a, c)))
            .enumerate()
            .map(|(id, (action, class))| CoverageTarget {
                id,
                kind: TargetKind::ResponseClass(class),
                statement: action as u32,
                predicate: None,
            })
            .collect();
        Ok(LiveSut {
            name: config.base_url.clone(),
            config,
            catalog,
            literals,
            agent,
            targets,
            warned_reset: false,
        })
    }

    fn target_for(&self, action: usize, status: u16) -> Option<usize> {
        let class = status / 100;
        STATUS_CLASSES
            .iter()
            .position(|&c| c == class)
            .map(|k| action * STATUS_CLASSES.len() + k)
    }

    fn render(value: &InputValue, position: usize, tokens: &[Option<String>]) -> serde_json::Value {
        match value {
            InputValue::Str(s) => s.clone().into(),
            InputValue::Int(i) => (*i).into(),
            InputValue::Num(x) => (*x).into(),
            InputValue::Bool(b) => (*b).into(),
            InputValue::Date(d) => InputValue::date_string(*d).into(),
            InputValue::TokenRef { back } => position
                .checked_sub(*back)
                .filter(|_| *back >= 1)
                .and_then(|j| tokens.get(j).cloned().flatten())
                .unwrap_or_default()
                .into(),
        }
    }

    fn as_text(v: &serde_json::Value) -> String {
        match v {
            serde_json::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    fn send(
        &self,
        position: usize,
        test: &TestCase,
        tokens: &[Option<String>],
    ) -> (u16, Option<String>) {
        let stmt = &test.statements[position];
        let spec = &self.catalog[stmt.action];
        let mut path = spec.endpoint_template.clone();
        let mut query = Vec::new();
        let mut headers = Vec::new();
        let mut body = serde_json::Map::new();
        for g in &stmt.inputs {
            let Some(p) = spec.param(&g.name) else {
                continue;
            };
            let v = Self::render(&g.value, position, tokens);
            match p.location {
                ParamLocation::Path => {
                    let encoded: String =
                        url::form_urlencoded::byte_serialize(Self::as_text(&v).as_bytes())
                            .collect();
                    path = path.replace(&format!("{{{}}}", p.name), &encoded);
                }
                ParamLocation::Query => query.push((p.name.clone(), Self::as_text(&v))),
                ParamLocation::Header => headers.push((p.name.clone(), Self::as_text(&v))),
                ParamLocation::Body => {
                    body.insert(p.name.clone(), v);
                }
            }
        }
        let url = format!("{}{}", self.config.base_url.trim_end_matches('/'), path);
        let mut req = self.agent.request(spec.method.as_str(), &url);
        for (k, v) in &query {
            req = req.query(k, v);
        }
        for (k, v) in &headers {
            req = req.set(k, v);
        }
        let result = if body.is_empty() {
            req.call()
        } else {
            req.set("Content-Type", "application/json")
                .send_string(&serde_json::Value::Object(body).to_string())
        };
        let response = match result {
            Ok(r) => r,
            Err(ureq::Error::Status(_, r)) => r,
            Err(ureq::Error::Transport(e)) => {
                warn!("{} {url}: {e}", spec.method);
                return (NETWORK_FAILURE_STATUS, None);
            }
        };
        let status = response.status();
        let token = response
            .into_string()
            .ok()
            .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
            .and_then(|v| v.get("token").and_then(|t| t.as_str()).map(str::to_string));
        (status, token)
    }
}

impl Sut for LiveSut {
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
        match &self.config.reset_url {
            Some(url) => {
                if let Err(e) = self.agent.post(url).call() {
                    warn!("reset hook {url} failed: {e}");
                }
            }
            None if !self.warned_reset => {
                warn!(
                    "no reset hook configured for {}; service state persists between tests",
                    self.name
                );
                self.warned_reset = true;
            }
            None => {}
        }
    }

    fn execute(&mut self, test: &TestCase) -> Result<ExecutionResult, SutError> {
        let mut objectives = vec![1.0; self.targets.len()];
        let mut statuses = Vec::with_capacity(test.len());
        let mut tokens = Vec::with_capacity(test.len());
        let mut faults = BTreeSet::new();
        for (position, stmt) in test.statements.iter().enumerate() {
            if stmt.action >= self.catalog.len() {
                return Err(SutError::UnknownAction {
                    position,
                    action: stmt.action,
                });
            }
            let (status, token) = self.send(position, test, &tokens);
            if let Some(t) = self.target_for(stmt.action, status) {
                objectives[t] = 0.0;
            }
            if is_server_error(status) {
                let spec = &self.catalog[stmt.action];
                faults.insert(FaultSignature {
                    method: spec.method,
                    endpoint: spec.endpoint_template.clone(),
                    last_statement: None,
                    status,
                });
            }
            statuses.push(status);
            tokens.push(token);
        }
        Ok(ExecutionResult::from_objectives(
            objectives, faults, statuses,
        ))
    }
}
