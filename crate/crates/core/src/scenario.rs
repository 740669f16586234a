//! Scenario bindings: externally supplied values for the ANY parameters
//! of environment events, keyed by event name and occurrence index.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("scenario is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("scenario entry {index}: {message}")]
    Entry { index: usize, message: String },
}

/// A literal in a scenario file. Names resolve against the constants
/// visible to the event's machine (enumeration literals, usually).
#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioLit {
    Int(i64),
    Real(f64),
    Bool(bool),
    Name(String),
}

/// Bindings keyed by `(event name, occurrence index)`; the occurrence
/// index counts the instants at which the event's parameter-free guard
/// part held, starting from 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioBindings {
    entries: BTreeMap<(String, u32), BTreeMap<String, ScenarioLit>>,
}

impl ScenarioBindings {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn get(&self, event: &str, occurrence: u32) -> Option<&BTreeMap<String, ScenarioLit>> {
        self.entries.get(&(event.to_string(), occurrence))
    }

    pub fn insert(
        &mut self,
        event: &str,
        occurrence: u32,
        bindings: BTreeMap<String, ScenarioLit>,
    ) {
        self.entries.insert((event.to_string(), occurrence), bindings);
    }

    pub fn remove(&mut self, event: &str, occurrence: u32) {
        self.entries.remove(&(event.to_string(), occurrence));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Load the JSON schema: an array of
    /// `{"event": string, "occurrence": integer ≥ 1, "bindings": {name: literal}}`.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let arr = v.as_array().ok_or(ScenarioError::Entry {
            index: 0,
            message: "top level must be an array".into(),
        })?;
        let mut out = ScenarioBindings::default();
        for (index, e) in arr.iter().enumerate() {
            let event = e
                .get("event")
                .and_then(|x| x.as_str())
                .ok_or(ScenarioError::Entry {
                    index,
                    message: "missing string field `event`".into(),
                })?;
            let occurrence = e
                .get("occurrence")
                .and_then(|x| x.as_u64())
                .filter(|&n| n >= 1)
                .ok_or(ScenarioError::Entry {
                    index,
                    message: "missing integer field `occurrence` (must be ≥ 1)".into(),
                })? as u32;
            let bindings = e
                .get("bindings")
                .and_then(|x| x.as_object())
                .ok_or(ScenarioError::Entry {
                    index,
                    message: "missing object field `bindings`".into(),
                })?;
            let mut map = BTreeMap::new();
            for (k, raw) in bindings {
                let lit = match raw {
                    serde_json::Value::Bool(b) => ScenarioLit::Bool(*b),
                    serde_json::Value::Number(n) => {
                        if let Some(i) = n.as_i64() {
                            if !n.to_string().contains(['.', 'e', 'E']) {
                                ScenarioLit::Int(i)
                            } else {
                                ScenarioLit::Real(n.as_f64().unwrap())
                            }
                        } else {
                            ScenarioLit::Real(n.as_f64().ok_or(ScenarioError::Entry {
                                index,
                                message: format!("binding `{k}` is not a finite number"),
                            })?)
                        }
                    }
                    serde_json::Value::String(s) => ScenarioLit::Name(s.clone()),
                    other => {
                        return Err(ScenarioError::Entry {
                            index,
                            message: format!("binding `{k}` has unsupported value {other}"),
                        })
                    }
                };
                map.insert(k.clone(), lit);
            }
            out.entries.insert((event.to_string(), occurrence), map);
        }
        Ok(out)
    }

    pub fn from_path(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_loads() {
        let p = crate::corpus::incident_response_dir().join("scenario.default.json");
        let s = ScenarioBindings::from_path(&p).unwrap();
        assert_eq!(s.len(), 6);
        let b = s.get("AddHazard", 1).unwrap();
        assert_eq!(b.get("tg"), Some(&ScenarioLit::Name("CYL".into())));
        assert_eq!(b.get("sz"), Some(&ScenarioLit::Real(1.5)));
        assert_eq!(b.get("xx"), Some(&ScenarioLit::Int(5)));
    }

    #[test]
    fn malformed_occurrence_is_rejected() {
        let text = r#"[{"event": "E", "occurrence": 0, "bindings": {}}]"#;
        assert!(ScenarioBindings::from_json(text).is_err());
    }
}
