//! Run traces: a typed event/sample stream with stable JSON-lines and
//! CSV serializations.
//!
//! Serialization is bit-deterministic: keys come in a fixed order, set
//! members are already canonically ordered, and reals are rendered with
//! 17 significant digits so binary64 values round-trip exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceHeader {
    pub project: String,
    pub seed: u64,
    pub horizon: f64,
    pub dt_max: f64,
    pub eps_t: f64,
    pub eps_guard: f64,
    pub sample_step: f64,
    pub asynch_policy: String,
    pub margin: f64,
    pub auto_plitrue: bool,
    /// Hash of the project sources, for provenance.
    pub corpus_hash: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    ModeEvent,
    Sample,
    Violation,
    RunEnd,
}

impl RecordKind {
    fn as_str(self) -> &'static str {
        match self {
            RecordKind::ModeEvent => "modeEvent",
            RecordKind::Sample => "sample",
            RecordKind::Violation => "violation",
            RecordKind::RunEnd => "runEnd",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "modeEvent" => RecordKind::ModeEvent,
            "sample" => RecordKind::Sample,
            "violation" => RecordKind::Violation,
            "runEnd" => RecordKind::RunEnd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarDelta {
    pub var: String,
    pub before: Option<Value>,
    pub after: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub kind: RecordKind,
    pub machines: Vec<String>,
    pub event: String,
    pub deltas: Vec<VarDelta>,
    pub micro_step: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("time regression: appending t={new} after t={last}")]
    TimeRegression { new: f64, last: f64 },
    #[error("malformed trace line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Trace {
    pub fn new(header: TraceHeader) -> Self {
        Trace {
            header,
            records: Vec::new(),
        }
    }

    /// Append a record; time must not regress.
    pub fn append(&mut self, r: TraceRecord) -> Result<(), TraceError> {
        if let Some(last) = self.records.last() {
            if r.t < last.t {
                return Err(TraceError::TimeRegression {
                    new: r.t,
                    last: last.t,
                });
            }
        }
        self.records.push(r);
        Ok(())
    }

    /// JSON-lines serialization: one header object followed by one
    /// object per record, keys in fixed order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let h = &self.header;
        let _ = write!(
            out,
            "{{\"project\":{},\"seed\":{},\"horizon\":{},\"dtMax\":{},\"epsT\":{},\"epsGuard\":{},\"sampleStep\":{},\"asynchPolicy\":{},\"margin\":{},\"autoPlitrue\":{},\"corpusHash\":{}}}",
            json_str(&h.project),
            h.seed,
            real(h.horizon),
            real(h.dt_max),
            real(h.eps_t),
            real(h.eps_guard),
            real(h.sample_step),
            json_str(&h.asynch_policy),
            real(h.margin),
            h.auto_plitrue,
            json_str(&h.corpus_hash),
        );
        out.push('\n');
        for r in &self.records {
            write_record(&mut out, r);
            out.push('\n');
        }
        out
    }

    /// Parse a trace back from its JSON-lines form.
    pub fn from_jsonl(text: &str) -> Result<Trace, TraceError> {
        let mut lines = text.lines().enumerate();
        let (_, first) = lines.next().ok_or(TraceError::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let hv: serde_json::Value = serde_json::from_str(first).map_err(|e| TraceError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let header = parse_header(&hv).map_err(|message| TraceError::Parse { line: 1, message })?;
        let mut trace = Trace::new(header);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let v: serde_json::Value = serde_json::from_str(line).map_err(|e| TraceError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            let rec = parse_record(&v).map_err(|message| TraceError::Parse {
                line: i + 1,
                message,
            })?;
            trace.append(rec)?;
        }
        Ok(trace)
    }

    /// CSV serialization: sample records flattened into per-variable
    /// columns.
    pub fn to_csv(&self) -> String {
        let mut columns: Vec<String> = Vec::new();
        for r in &self.records {
            if r.kind == RecordKind::Sample {
                for d in &r.deltas {
                    if !columns.contains(&d.var) {
                        columns.push(d.var.clone());
                    }
                }
            }
        }
        columns.sort();
        let mut out = String::from("t");
        for c in &columns {
            out.push(',');
            out.push_str(&csv_quote(c));
        }
        out.push('\n');
        for r in &self.records {
            if r.kind != RecordKind::Sample {
                continue;
            }
            let by_var: BTreeMap<&str, &Value> =
                r.deltas.iter().map(|d| (d.var.as_str(), &d.after)).collect();
            out.push_str(&real(r.t));
            for c in &columns {
                out.push(',');
                if let Some(v) = by_var.get(c.as_str()) {
                    match v {
                        Value::Real(x) => out.push_str(&real(*x)),
                        Value::Int(i) => {
                            let _ = write!(out, "{i}");
                        }
                        other => out.push_str(&csv_quote(&other.to_string())),
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

/// 17-significant-digit rendering; round-trips binary64 exactly.
pub fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn json_str(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if (c as u32) < 0x20 => {
                let _ = write!(out, "\\u{:04x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn csv_quote(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Value encoding: integers as bare JSON integers, reals always in
/// e-notation (so the two never collide on read), enumeration literals
/// as `"SET.LIT"` strings, tuples/sets/sequences as tagged arrays.
pub fn value_json(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Real(r) => real(*r),
        Value::Bool(b) => b.to_string(),
        Value::Enum { set, lit } => json_str(&format!("{set}.{lit}")),
        Value::Pair(a, b) => format!("{{\"p\":[{},{}]}}", value_json(a), value_json(b)),
        Value::Set(xs) => {
            let inner: Vec<String> = xs.iter().map(value_json).collect();
            format!("{{\"s\":[{}]}}", inner.join(","))
        }
        Value::Seq(xs) => {
            let inner: Vec<String> = xs.iter().map(value_json).collect();
            format!("{{\"q\":[{}]}}", inner.join(","))
        }
    }
}

pub fn value_from_json(v: &serde_json::Value) -> Result<Value, String> {
    match v {
        serde_json::Value::Bool(b) => Ok(Value::Bool(*b)),
        serde_json::Value::Number(n) => {
            // integers were written without an exponent
            if let Some(i) = n.as_i64() {
                if !n.to_string().contains(['e', 'E', '.']) {
                    return Ok(Value::Int(i));
                }
            }
            n.as_f64()
                .map(Value::Real)
                .ok_or_else(|| "unreadable number".to_string())
        }
        serde_json::Value::String(s) => {
            let (set, lit) = s
                .split_once('.')
                .ok_or_else(|| format!("expected SET.LIT enum string, got {s}"))?;
            Ok(Value::enum_lit(set, lit))
        }
        serde_json::Value::Object(m) => {
            if let Some(serde_json::Value::Array(xs)) = m.get("p") {
                if xs.len() != 2 {
                    return Err("pair needs two components".into());
                }
                return Ok(Value::Pair(
                    Box::new(value_from_json(&xs[0])?),
                    Box::new(value_from_json(&xs[1])?),
                ));
            }
            if let Some(serde_json::Value::Array(xs)) = m.get("s") {
                let items = xs.iter().map(value_from_json).collect::<Result<Vec<_>, _>>()?;
                return Ok(Value::set_from(items));
            }
            if let Some(serde_json::Value::Array(xs)) = m.get("q") {
                let items = xs.iter().map(value_from_json).collect::<Result<Vec<_>, _>>()?;
                return Ok(Value::Seq(items));
            }
            Err("unknown value object".into())
        }
        _ => Err("unsupported value".into()),
    }
}

fn write_record(out: &mut String, r: &TraceRecord) {
    let machines: Vec<String> = r.machines.iter().map(|m| json_str(m)).collect();
    let _ = write!(
        out,
        "{{\"t\":{},\"kind\":{},\"machine\":[{}],\"event\":{},\"deltas\":[",
        real(r.t),
        json_str(r.kind.as_str()),
        machines.join(","),
        json_str(&r.event),
    );
    for (i, d) in r.deltas.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        match &d.before {
            Some(b) => {
                let _ = write!(
                    out,
                    "{{\"var\":{},\"before\":{},\"after\":{}}}",
                    json_str(&d.var),
                    value_json(b),
                    value_json(&d.after)
                );
            }
            None => {
                let _ = write!(
                    out,
                    "{{\"var\":{},\"after\":{}}}",
                    json_str(&d.var),
                    value_json(&d.after)
                );
            }
        }
    }
    let _ = write!(out, "],\"microStep\":{}}}", r.micro_step);
}

fn parse_header(v: &serde_json::Value) -> Result<TraceHeader, String> {
    let get = |k: &str| v.get(k).ok_or_else(|| format!("missing header key {k}"));
    Ok(TraceHeader {
        project: get("project")?.as_str().unwrap_or_default().to_string(),
        seed: get("seed")?.as_u64().unwrap_or_default(),
        horizon: get("horizon")?.as_f64().unwrap_or_default(),
        dt_max: get("dtMax")?.as_f64().unwrap_or_default(),
        eps_t: get("epsT")?.as_f64().unwrap_or_default(),
        eps_guard: get("epsGuard")?.as_f64().unwrap_or_default(),
        sample_step: get("sampleStep")?.as_f64().unwrap_or_default(),
        asynch_policy: get("asynchPolicy")?.as_str().unwrap_or_default().to_string(),
        margin: get("margin")?.as_f64().unwrap_or_default(),
        auto_plitrue: get("autoPlitrue")?.as_bool().unwrap_or_default(),
        corpus_hash: get("corpusHash")?.as_str().unwrap_or_default().to_string(),
    })
}

fn parse_record(v: &serde_json::Value) -> Result<TraceRecord, String> {
    let kind = v
        .get("kind")
        .and_then(|k| k.as_str())
        .and_then(RecordKind::parse)
        .ok_or("bad kind")?;
    let machines = v
        .get("machine")
        .and_then(|m| m.as_array())
        .map(|xs| {
            xs.iter()
                .filter_map(|x| x.as_str().map(str::to_string))
                .collect()
        })
        .unwrap_or_default();
    let mut deltas = Vec::new();
    if let Some(ds) = v.get("deltas").and_then(|d| d.as_array()) {
        for d in ds {
            let var = d
                .get("var")
                .and_then(|x| x.as_str())
                .ok_or("delta without var")?
                .to_string();
            let before = match d.get("before") {
                Some(b) => Some(value_from_json(b)?),
                None => None,
            };
            let after = value_from_json(d.get("after").ok_or("delta without after")?)?;
            deltas.push(VarDelta { var, before, after });
        }
    }
    Ok(TraceRecord {
        t: v.get("t").and_then(|x| x.as_f64()).ok_or("bad t")?,
        kind,
        machines,
        event: v
            .get("event")
            .and_then(|x| x.as_str())
            .unwrap_or_default()
            .to_string(),
        deltas,
        micro_step: v.get("microStep").and_then(|x| x.as_u64()).unwrap_or(0) as u32,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TraceHeader {
        TraceHeader {
            project: "P".into(),
            seed: 42,
            horizon: 79.9,
            dt_max: 1e-3,
            eps_t: 1e-9,
            eps_guard: 1e-9,
            sample_step: 0.05,
            asynch_policy: "earliest-plus-margin".into(),
            margin: 1e-3,
            auto_plitrue: false,
            corpus_hash: "abc".into(),
        }
    }

    fn sample(t: f64) -> TraceRecord {
        TraceRecord {
            t,
            kind: RecordKind::Sample,
            machines: vec![],
            event: String::new(),
            deltas: vec![VarDelta {
                var: "dr1x".into(),
                before: None,
                after: Value::Real(t * 2.0),
            }],
            micro_step: 0,
        }
    }

    #[test]
    fn append_keeps_time_order() {
        let mut tr = Trace::new(header());
        tr.append(sample(0.05)).unwrap();
        tr.append(sample(0.05)).unwrap();
        tr.append(sample(0.10)).unwrap();
        assert_eq!(
            tr.append(sample(0.04)),
            Err(TraceError::TimeRegression { new: 0.04, last: 0.10 })
        );
    }

    #[test]
    fn empty_trace_serializes_to_header_only() {
        let tr = Trace::new(header());
        let text = tr.to_jsonl();
        assert_eq!(text.lines().count(), 1);
        assert!(text.starts_with("{\"project\":\"P\""));
    }

    #[test]
    fn jsonl_roundtrip_is_identity() {
        let mut tr = Trace::new(header());
        tr.append(TraceRecord {
            t: 12.0,
            kind: RecordKind::ModeEvent,
            machines: vec!["EnvironmentScenario_Mch".into()],
            event: "AddHazard".into(),
            deltas: vec![VarDelta {
                var: "hazards".into(),
                before: Some(Value::set_from(vec![])),
                after: Value::set_from(vec![Value::tuple(vec![
                    Value::enum_lit("HAZTYPE", "CYL"),
                    Value::Real(5.0),
                    Value::Real(8.0),
                    Value::Real(1.5),
                    Value::Real(3.0),
                ])]),
            }],
            micro_step: 1,
        })
        .unwrap();
        tr.append(sample(12.05)).unwrap();
        tr.append(TraceRecord {
            t: 79.9,
            kind: RecordKind::RunEnd,
            machines: vec![],
            event: String::new(),
            deltas: vec![],
            micro_step: 0,
        })
        .unwrap();
        let text = tr.to_jsonl();
        let back = Trace::from_jsonl(&text).unwrap();
        assert_eq!(back, tr);
        // determinism: serialize twice, byte-identical
        assert_eq!(tr.to_jsonl(), text);
    }

    #[test]
    fn reals_roundtrip_exactly() {
        for x in [0.1, 79.7, 1.0 / 3.0, -11.2, 1e-9, f64::MIN_POSITIVE] {
            let s = real(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }

    #[test]
    fn csv_has_sample_columns() {
        let mut tr = Trace::new(header());
        tr.append(sample(0.0)).unwrap();
        tr.append(sample(0.05)).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,dr1x");
        assert_eq!(csv.lines().count(), 3);
    }
}
