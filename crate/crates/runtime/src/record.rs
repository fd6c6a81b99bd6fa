//! Proposal stream format used to pair a compiled chain with the reference
//! interpreter step by step. One JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SnapVar {
    pub name: String,
    pub value: serde_json::Value,
    #[serde(default)]
    pub pinned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cnt: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ch: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cont: Option<Vec<String>>,
}

/// Full state of a world: every instantiated variable plus the bookkeeping
/// of pseudo nodes (observations and queries).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
pub struct Snapshot {
    pub vars: Vec<SnapVar>,
    #[serde(default)]
    pub nodes: Vec<SnapVar>,
    pub world_size: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepRecord {
    pub step: u64,
    pub var: String,
    pub proposed: serde_json::Value,
    /// Variables first instantiated by the proposal, with their sampled values.
    pub new_vars: Vec<(String, serde_json::Value)>,
    pub u: f64,
    /// Unclipped log acceptance ratio; `null` encodes minus infinity.
    #[serde(with = "neg_inf_as_null")]
    pub log_ratio: f64,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot: Option<Snapshot>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Init { model: String, snapshot: Snapshot },
    Step(StepRecord),
}

mod neg_inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

pub struct RecordWriter<W: Write> {
    out: W,
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W) -> Self {
        RecordWriter { out }
    }

    pub fn write(&mut self, r: &Record) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub fn read_records<R: BufRead>(input: R) -> Result<Vec<Record>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("record line {}: {e}", i + 1))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_round_trip_through_lines() {
        let recs = vec![
            Record::Init { model: "m".into(), snapshot: Snapshot::default() },
            Record::Step(StepRecord {
                step: 1,
                var: "z(Data[0])".into(),
                proposed: serde_json::json!(2),
                new_vars: vec![("mu(Cluster#2)".into(), serde_json::json!(0.125))],
                u: 0.5,
                log_ratio: f64::NEG_INFINITY,
                accepted: false,
                snapshot: None,
            }),
        ];
        let mut buf = Vec::new();
        let mut w = RecordWriter::new(&mut buf);
        for r in &recs {
            w.write(r).unwrap();
        }
        let back = read_records(&buf[..]).unwrap();
        assert_eq!(back, recs);
    }
}
