//! Machine-readable run reports.
//!
//! A report is a list of named checks, each carrying both sides of the
//! comparison it made, plus free-form details. Serialization is
//! deterministic: no timestamps, fields in declaration order.

use std::path::Path;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    /// The identity or inequality that was tested.
    pub display: String,
    pub measured: Value,
    pub bound: Value,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub provenance: Provenance,
    pub checks: Vec<Check>,
    pub details: Value,
    pub pass: bool,
}

impl Report {
    pub fn new(command: &str, seed: u64, parameters: Value) -> Self {
        Self {
            provenance: Provenance {
                tool: env!("CARGO_PKG_NAME").to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.to_string(),
                seed,
                parameters,
            },
            checks: Vec::new(),
            details: Value::Null,
            pass: true,
        }
    }

    pub fn check(
        &mut self,
        name: impl Into<String>,
        display: impl Into<String>,
        measured: impl Serialize,
        bound: impl Serialize,
        pass: bool,
    ) {
        self.pass &= pass;
        self.checks.push(Check {
            name: name.into(),
            display: display.into(),
            measured: serde_json::to_value(measured).unwrap_or(Value::Null),
            bound: serde_json::to_value(bound).unwrap_or(Value::Null),
            pass,
        });
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        if !self.details.is_object() {
            self.details = Value::Object(Default::default());
        }
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        if let Value::Object(map) = &mut self.details {
            map.insert(key.to_string(), value);
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json() + "\n")
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}: {} (measured {}, bound {})\n",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.display,
                c.measured,
                c.bound
            ));
        }
        out.push_str(&format!(
            "{}: {} of {} checks passed\n",
            self.provenance.command,
            self.checks.iter().filter(|c| c.pass).count(),
            self.checks.len()
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn failing_check_fails_report() {
        let mut r = Report::new("demo", 1, serde_json::json!({"a": 1}));
        r.check("ok", "1 <= 2", 1, 2, true);
        assert!(r.pass);
        r.check("bad", "3 <= 2", 3, 2, false);
        assert!(!r.pass);
        assert_eq!(r.failures().count(), 1);
        r.detail("x", vec![1, 2]);
        assert_eq!(r.to_json(), r.clone().to_json());
        assert!(r.summary().contains("FAIL bad"));
    }
}
