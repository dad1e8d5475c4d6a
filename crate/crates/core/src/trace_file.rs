//! Line-oriented JSON trace files.
//!
//! ```text
//! {"version":1,"granularity":"state","states":{"0":"start"},"actions":{"0":"up"}}
//! {"episode":0,"steps":[{"s":0,"a":0,"r":"-0.1","s_next":1,"terminal":false}]}
//! ```
//!
//! The first line is a header; every following line is one trajectory.
//! Rewards are decimal strings so they survive the round trip exactly.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::reward::Reward;
use crate::trace::{Granularity, Step, TraceError, TraceSet, Trajectory};

pub const TRACE_FILE_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum TraceFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: field `{field}`: {message}")]
    Schema { line: usize, field: String, message: String },
    #[error("line {line}: {source}")]
    Trajectory { line: usize, source: TraceError },
}

fn schema(line: usize, field: impl Into<String>, message: impl Into<String>) -> TraceFileError {
    TraceFileError::Schema { line, field: field.into(), message: message.into() }
}

#[derive(Serialize)]
struct HeaderOut<'a> {
    version: u64,
    granularity: Granularity,
    states: &'a BTreeMap<u32, String>,
    actions: &'a BTreeMap<u32, String>,
}

/// Serializes a trace set to the JSONL format.
pub fn write_traces(traces: &TraceSet) -> String {
    let header = HeaderOut {
        version: TRACE_FILE_VERSION,
        granularity: traces.granularity(),
        states: traces.state_names(),
        actions: traces.action_names(),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    for trajectory in traces.trajectories() {
        out.push_str(&serde_json::to_string(trajectory).expect("trajectory serializes"));
        out.push('\n');
    }
    out
}

pub fn save_traces(traces: &TraceSet, path: impl AsRef<Path>) -> Result<(), TraceFileError> {
    fs::write(path, write_traces(traces))?;
    Ok(())
}

pub fn load_traces(path: impl AsRef<Path>) -> Result<TraceSet, TraceFileError> {
    parse_traces(&fs::read_to_string(path)?)
}

/// Parses the JSONL format. An empty input is an empty state-keyed set.
pub fn parse_traces(text: &str) -> Result<TraceSet, TraceFileError> {
    let mut lines =
        text.lines().enumerate().map(|(idx, line)| (idx + 1, line)).filter(|(_, line)| !line.trim().is_empty());

    let Some((line_no, header_line)) = lines.next() else {
        return Ok(TraceSet::new(Granularity::State));
    };
    let header = parse_object(line_no, header_line)?;
    let mut traces = parse_header(line_no, &header)?;

    for (line_no, line) in lines {
        let object = parse_object(line_no, line)?;
        let trajectory = parse_trajectory(line_no, &object)?;
        traces.append(trajectory).map_err(|source| TraceFileError::Trajectory { line: line_no, source })?;
    }
    Ok(traces)
}

fn parse_object(line: usize, text: &str) -> Result<Map<String, Value>, TraceFileError> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(schema(line, "<line>", "expected a JSON object")),
        Err(err) => Err(schema(line, "<line>", err.to_string())),
    }
}

fn require<'a>(
    line: usize,
    object: &'a Map<String, Value>,
    field: &str,
    path: &str,
) -> Result<&'a Value, TraceFileError> {
    object.get(field).ok_or_else(|| schema(line, path, "missing"))
}

fn as_u64(line: usize, value: &Value, path: &str) -> Result<u64, TraceFileError> {
    value.as_u64().ok_or_else(|| schema(line, path, "expected a non-negative integer"))
}

fn as_u32(line: usize, value: &Value, path: &str) -> Result<u32, TraceFileError> {
    let wide = as_u64(line, value, path)?;
    u32::try_from(wide).map_err(|_| schema(line, path, "integer does not fit in 32 bits"))
}

fn name_table(line: usize, object: &Map<String, Value>, field: &str) -> Result<BTreeMap<u32, String>, TraceFileError> {
    let Some(value) = object.get(field) else {
        return Ok(BTreeMap::new());
    };
    let table = value.as_object().ok_or_else(|| schema(line, field, "expected an object"))?;
    table
        .iter()
        .map(|(id, name)| {
            let path = format!("{field}.{id}");
            let id: u32 = id.parse().map_err(|_| schema(line, &path, "id is not an integer"))?;
            let name = name.as_str().ok_or_else(|| schema(line, &path, "expected a string"))?;
            Ok((id, name.to_string()))
        })
        .collect()
}

fn parse_header(line: usize, object: &Map<String, Value>) -> Result<TraceSet, TraceFileError> {
    let version = as_u64(line, require(line, object, "version", "version")?, "version")?;
    if version != TRACE_FILE_VERSION {
        return Err(schema(line, "version", format!("unsupported version {version}")));
    }
    let granularity = require(line, object, "granularity", "granularity")?
        .as_str()
        .ok_or_else(|| schema(line, "granularity", "expected a string"))?
        .parse::<Granularity>()
        .map_err(|message| schema(line, "granularity", message))?;
    for field in object.keys() {
        if !matches!(field.as_str(), "version" | "granularity" | "states" | "actions") {
            return Err(schema(line, field.as_str(), "unknown header field"));
        }
    }
    let states = name_table(line, object, "states")?;
    let actions = name_table(line, object, "actions")?;
    Ok(TraceSet::new(granularity).with_names(states, actions))
}

fn parse_trajectory(line: usize, object: &Map<String, Value>) -> Result<Trajectory, TraceFileError> {
    let episode = as_u64(line, require(line, object, "episode", "episode")?, "episode")?;
    let steps = require(line, object, "steps", "steps")?
        .as_array()
        .ok_or_else(|| schema(line, "steps", "expected an array"))?;
    let steps =
        steps.iter().enumerate().map(|(idx, value)| parse_step(line, idx, value)).collect::<Result<Vec<_>, _>>()?;
    Ok(Trajectory::new(episode, steps))
}

fn parse_step(line: usize, idx: usize, value: &Value) -> Result<Step, TraceFileError> {
    let prefix = format!("steps[{idx}]");
    let object = value.as_object().ok_or_else(|| schema(line, &prefix, "expected an object"))?;
    let field = |name: &str| -> Result<(&Value, String), TraceFileError> {
        let path = format!("{prefix}.{name}");
        let value = require(line, object, name, &path)?;
        Ok((value, path))
    };

    let (value, path) = field("s")?;
    let s = as_u32(line, value, &path)?;
    let (value, path) = field("a")?;
    let a = as_u32(line, value, &path)?;
    let (value, path) = field("s_next")?;
    let s_next = as_u32(line, value, &path)?;
    let (value, path) = field("r")?;
    let r = value
        .as_str()
        .ok_or_else(|| schema(line, &path, "expected a decimal string"))?
        .parse::<Reward>()
        .map_err(|err| schema(line, &path, err.to_string()))?;
    let (value, path) = field("terminal")?;
    let terminal = value.as_bool().ok_or_else(|| schema(line, &path, "expected a boolean"))?;
    Ok(Step { s, a, r, s_next, terminal })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::Key;
    use proptest::prelude::*;

    const HEADER: &str =
        r#"{"version":1,"granularity":"state","states":{"0":"c","1":"s2","2":"g"},"actions":{"0":"left","1":"right"}}"#;

    fn corridor_text() -> String {
        format!(
            "{HEADER}\n{}\n{}\n",
            r#"{"episode":0,"steps":[{"s":1,"a":1,"r":"0","s_next":2,"terminal":true}]}"#,
            r#"{"episode":1,"steps":[{"s":1,"a":0,"r":"0","s_next":0,"terminal":false},{"s":0,"a":1,"r":"0","s_next":1,"terminal":false},{"s":1,"a":1,"r":"1","s_next":2,"terminal":true}]}"#
        )
    }

    #[test]
    fn parses_and_reserializes_identically() {
        let traces = parse_traces(&corridor_text()).unwrap();
        assert_eq!(traces.len(), 2);
        assert_eq!(traces.max_len(), 3);
        assert_eq!(traces.state_names()[&1], "s2");
        assert_eq!(traces.conflicts()[0].key, Key::State(2));
        assert_eq!(write_traces(&traces), corridor_text());
    }

    #[test]
    fn empty_input_is_empty_set() {
        let traces = parse_traces("").unwrap();
        assert_eq!(traces.len(), 0);
        assert_eq!(parse_traces("\n\n").unwrap().len(), 0);
    }

    #[test]
    fn seven_digit_reward_names_line_and_field() {
        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"episode":0,"steps":[{"s":1,"a":1,"r":"0.1000001","s_next":2,"terminal":true}]}"#
        );
        let err = parse_traces(&text).unwrap_err();
        match err {
            TraceFileError::Schema { line, field, message } => {
                assert_eq!(line, 2);
                assert_eq!(field, "steps[0].r");
                assert!(message.contains("fractional digits"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_is_named() {
        let text = format!("{HEADER}\n{}\n", r#"{"episode":0,"steps":[{"s":1,"a":1,"r":"0","terminal":true}]}"#);
        let err = parse_traces(&text).unwrap_err();
        assert_eq!(err.to_string(), "line 2: field `steps[0].s_next`: missing");
    }

    #[test]
    fn numeric_reward_is_rejected() {
        let text =
            format!("{HEADER}\n{}\n", r#"{"episode":0,"steps":[{"s":1,"a":1,"r":0.5,"s_next":2,"terminal":true}]}"#);
        assert!(matches!(
            parse_traces(&text),
            Err(TraceFileError::Schema { line: 2, ref field, .. }) if field == "steps[0].r"
        ));
    }

    #[test]
    fn bad_header_and_chain_errors() {
        let err = parse_traces(r#"{"version":2,"granularity":"state"}"#).unwrap_err();
        assert!(matches!(err, TraceFileError::Schema { line: 1, ref field, .. } if field == "version"));
        let err = parse_traces(r#"{"version":1,"granularity":"cell"}"#).unwrap_err();
        assert!(matches!(err, TraceFileError::Schema { line: 1, ref field, .. } if field == "granularity"));

        let text = format!(
            "{HEADER}\n{}\n",
            r#"{"episode":0,"steps":[{"s":1,"a":1,"r":"0","s_next":2,"terminal":false},{"s":0,"a":1,"r":"0","s_next":1,"terminal":false}]}"#
        );
        assert!(matches!(
            parse_traces(&text),
            Err(TraceFileError::Trajectory { line: 2, source: TraceError::ChainBreak { step: 2 } })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.jsonl");
        let traces = parse_traces(&corridor_text()).unwrap();
        save_traces(&traces, &path).unwrap();
        assert_eq!(load_traces(&path).unwrap(), traces);
    }

    proptest! {
        #[test]
        fn round_trip_preserves_structure(
            transition in any::<bool>(),
            raw in prop::collection::vec(
                prop::collection::vec((0u32..5, 0u32..4, -3_000_000i64..3_000_000), 1..6),
                0..5,
            ),
        ) {
            let granularity = if transition { Granularity::Transition } else { Granularity::State };
            let mut traces = TraceSet::new(granularity);
            for (episode, moves) in raw.into_iter().enumerate() {
                let mut s = 0;
                let last = moves.len() - 1;
                let steps = moves.into_iter().enumerate().map(|(idx, (s_next, a, micros))| {
                    let step = Step { s, a, r: Reward::from_micros(micros), s_next, terminal: idx == last && micros > 0 };
                    s = s_next;
                    step
                }).collect();
                traces.append(Trajectory::new(episode as u64, steps)).unwrap();
            }
            let back = parse_traces(&write_traces(&traces)).unwrap();
            prop_assert_eq!(back, traces);
        }
    }
}
