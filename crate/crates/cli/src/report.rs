use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
pub enum Relation {
    #[serde(rename = "<=")]
    AtMost,
    #[serde(rename = "<")]
    Below,
    #[serde(rename = ">=")]
    AtLeast,
    #[serde(rename = ">")]
    Above,
}

impl Relation {
    fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::AtMost => value <= threshold,
            Relation::Below => value < threshold,
            Relation::AtLeast => value >= threshold,
            Relation::Above => value > threshold,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::Below => "<",
            Relation::AtLeast => ">=",
            Relation::Above => ">",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Value {
    pub name: String,
    pub value: f64,
}

/// Accumulates checks and reported quantities for one command.
#[derive(Debug, Default)]
pub struct Collector {
    prefix: String,
    pub checks: Vec<Check>,
    pub values: Vec<Value>,
}

impl Collector {
    /// Prefixes subsequent names with `group.`; an empty group clears it.
    pub fn group(&mut self, group: &str) {
        self.prefix = group.to_string();
    }

    fn name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{name}", self.prefix)
        }
    }

    pub fn check(&mut self, name: &str, value: f64, relation: Relation, threshold: f64) {
        // NaN never passes
        let pass = !value.is_nan() && relation.holds(value, threshold);
        let name = self.name(name);
        self.checks.push(Check { name, value, threshold, relation, pass });
    }

    pub fn value(&mut self, name: &str, value: f64) {
        let name = self.name(name);
        self.values.push(Value { name, value });
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConfigEcho {
    pub dim: usize,
    pub seed: u64,
    pub trials: usize,
    pub format: String,
    pub rng: &'static str,
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: &'static str,
    pub command: String,
    pub config: ConfigEcho,
    pub timestamp: String,
    pub checks: Vec<Check>,
    pub values: Vec<Value>,
    pub pass: bool,
    pub wall_time_s: f64,
}

impl Report {
    pub fn write_json(&self, out: &mut dyn Write) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        writeln!(out)
    }

    pub fn write_csv(&self, out: &mut dyn Write) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["name", "value", "threshold", "relation", "pass"])?;
        for c in &self.checks {
            w.write_record([
                c.name.clone(),
                format!("{:e}", c.value),
                format!("{:e}", c.threshold),
                c.relation.symbol().to_string(),
                c.pass.to_string(),
            ])?;
        }
        w.flush()
    }

    pub fn write_text(&self, out: &mut dyn Write) -> std::io::Result<()> {
        writeln!(
            out,
            "{} (seed {}, dim {}, trials {})",
            self.command, self.config.seed, self.config.dim, self.config.trials
        )?;
        for c in &self.checks {
            let mark = if c.pass { "PASS" } else { "FAIL" };
            writeln!(out, "  {mark} {:<48} {:>14.6e} {} {:e}", c.name, c.value, c.relation.symbol(), c.threshold)?;
        }
        for v in &self.values {
            writeln!(out, "  ---- {:<48} {:>14.10}", v.name, v.value)?;
        }
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        writeln!(out, "{verdict}: {} checks in {:.2}s", self.checks.len(), self.wall_time_s)
    }
}
