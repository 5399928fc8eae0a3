//! JSON-lines episode traces.
//!
//! The first line is a schema header; each episode follows as an `episode` line, its ticks and
//! transitions, and a closing `summary` line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use follow_core::adaptation::TransitionEvent;
use follow_core::follower::{RunRecord, TickRecord, Variant};
use follow_core::sim::{Arena, Shape};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const TRACE_SCHEMA: &str = "follow-trace";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Structure { line: usize, message: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpisodeHeader {
    scenario: String,
    script: usize,
    repeat: usize,
    seed: u64,
    variant: Variant,
    dt: f64,
    leader_end_time: f64,
    d_max: f64,
    arena: Arena,
    obstacles: Vec<Shape>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EpisodeSummary {
    success: bool,
    collision: bool,
    loss_time: f64,
    distance_integral: f64,
    identified_time: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header { schema: String, version: u32 },
    Episode(EpisodeHeader),
    Tick(Box<TickRecord>),
    Transition(TransitionEvent),
    Summary(EpisodeSummary),
}

fn put(w: &mut impl Write, line: &Line) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, line)?;
    w.write_all(b"\n")
}

pub fn write_trace(w: impl Write, records: &[RunRecord]) -> std::io::Result<()> {
    let mut w = BufWriter::new(w);
    put(
        &mut w,
        &Line::Header {
            schema: TRACE_SCHEMA.into(),
            version: TRACE_VERSION,
        },
    )?;
    for r in records {
        put(
            &mut w,
            &Line::Episode(EpisodeHeader {
                scenario: r.scenario.clone(),
                script: r.script,
                repeat: r.repeat,
                seed: r.seed,
                variant: r.variant,
                dt: r.dt,
                leader_end_time: r.leader_end_time,
                d_max: r.d_max,
                arena: r.arena,
                obstacles: r.obstacles.clone(),
            }),
        )?;
        for t in &r.ticks {
            put(&mut w, &Line::Tick(Box::new(t.clone())))?;
        }
        for e in &r.transitions {
            put(&mut w, &Line::Transition(e.clone()))?;
        }
        put(
            &mut w,
            &Line::Summary(EpisodeSummary {
                success: r.success,
                collision: r.collision,
                loss_time: r.loss_time,
                distance_integral: r.distance_integral,
                identified_time: r.identified_time,
            }),
        )?;
    }
    w.flush()
}

pub fn write_trace_file(path: &Path, records: &[RunRecord]) -> std::io::Result<()> {
    write_trace(File::create(path)?, records)
}

pub fn read_trace(r: impl BufRead) -> Result<Vec<RunRecord>, TraceError> {
    let mut out = Vec::new();
    let mut open: Option<RunRecord> = None;
    let mut saw_header = false;
    for (i, text) in r.lines().enumerate() {
        let text = text?;
        let line_no = i + 1;
        if text.trim().is_empty() {
            continue;
        }
        let line: Line = serde_json::from_str(&text).map_err(|source| TraceError::Json { line: line_no, source })?;
        let bad = |message: &str| TraceError::Structure {
            line: line_no,
            message: message.into(),
        };
        match line {
            Line::Header { schema, version } => {
                if saw_header {
                    return Err(bad("duplicate header"));
                }
                if schema != TRACE_SCHEMA || version != TRACE_VERSION {
                    return Err(bad(&format!("unsupported schema {schema} v{version}")));
                }
                saw_header = true;
            }
            _ if !saw_header => return Err(bad("missing header")),
            Line::Episode(h) => {
                if open.is_some() {
                    return Err(bad("episode without summary"));
                }
                open = Some(RunRecord {
                    scenario: h.scenario,
                    script: h.script,
                    repeat: h.repeat,
                    seed: h.seed,
                    variant: h.variant,
                    dt: h.dt,
                    leader_end_time: h.leader_end_time,
                    d_max: h.d_max,
                    arena: h.arena,
                    obstacles: h.obstacles,
                    ticks: Vec::new(),
                    transitions: Vec::new(),
                    success: false,
                    collision: false,
                    loss_time: 0.0,
                    distance_integral: 0.0,
                    identified_time: 0.0,
                });
            }
            Line::Tick(t) => open.as_mut().ok_or_else(|| bad("tick outside an episode"))?.ticks.push(*t),
            Line::Transition(e) => open
                .as_mut()
                .ok_or_else(|| bad("transition outside an episode"))?
                .transitions
                .push(e),
            Line::Summary(s) => {
                let mut rec = open.take().ok_or_else(|| bad("summary outside an episode"))?;
                rec.success = s.success;
                rec.collision = s.collision;
                rec.loss_time = s.loss_time;
                rec.distance_integral = s.distance_integral;
                rec.identified_time = s.identified_time;
                out.push(rec);
            }
        }
    }
    if !saw_header {
        return Err(TraceError::Structure {
            line: 0,
            message: "missing header".into(),
        });
    }
    if open.is_some() {
        return Err(TraceError::Structure {
            line: 0,
            message: "truncated episode".into(),
        });
    }
    Ok(out)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<RunRecord>, TraceError> {
    read_trace(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::record;

    fn emit(records: &[RunRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_trace(&mut buf, records).unwrap();
        buf
    }

    #[test]
    fn empty_trace_is_header_only() {
        let buf = emit(&[]);
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert!(text.contains(TRACE_SCHEMA));
        assert!(read_trace(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn records_round_trip() {
        let mut a = record(&[1.0, 2.5, 3.0], &[true, false, true]);
        a.ticks[1].match_score = Some(0.8123456789);
        a.ticks[2].signature = Some(vec![1, -1]);
        let b = record(&[0.7], &[true]);
        let back = read_trace(emit(&[a.clone(), b.clone()]).as_slice()).unwrap();
        assert_eq!(back, vec![a, b]);
    }

    #[test]
    fn structural_errors_are_reported() {
        assert!(matches!(read_trace(&b""[..]), Err(TraceError::Structure { .. })));
        let buf = emit(&[record(&[1.0], &[true])]);
        let text = String::from_utf8(buf).unwrap();
        let truncated: String = text.lines().take(2).map(|l| format!("{l}\n")).collect();
        assert!(read_trace(truncated.as_bytes()).is_err());
        assert!(matches!(read_trace(&b"{nope\n"[..]), Err(TraceError::Json { line: 1, .. })));
    }
}
