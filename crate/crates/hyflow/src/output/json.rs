//! Flowpipe and report documents.

use serde::Serialize;

use hyflow_core::engine::{BranchStatus, Flowpipe, SegmentKind};
use hyflow_core::validate::Report;
use hyflow_core::Interval;

#[derive(Serialize)]
struct SegmentDoc<'a> {
    t_lo: f64,
    t_hi: f64,
    location: &'a str,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    edge: Option<usize>,
    #[serde(skip_serializing_if = "<[_]>::is_empty")]
    events: &'a [String],
    tight: Vec<[f64; 2]>,
    hull: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct BranchDoc<'a> {
    id: usize,
    parent: Option<usize>,
    fork_time: f64,
    complete: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    abort_reason: Option<&'a str>,
    segments: Vec<SegmentDoc<'a>>,
}

#[derive(Serialize)]
struct StatsDoc {
    steps: usize,
    rejections: usize,
    crossings: usize,
    branches: usize,
}

#[derive(Serialize)]
struct FlowpipeDoc<'a> {
    variables: &'a [String],
    locations: &'a [String],
    t0: f64,
    /// Segments may end past this time; the last step is not clipped.
    t_final: f64,
    complete: bool,
    stats: StatsDoc,
    warnings: &'a [String],
    final_enclosure: Option<Vec<[f64; 2]>>,
    branches: Vec<BranchDoc<'a>>,
}

pub fn pairs(b: &[Interval]) -> Vec<[f64; 2]> {
    b.iter().map(|i| [i.lo(), i.hi()]).collect()
}

pub fn flowpipe_value(fp: &Flowpipe) -> serde_json::Value {
    let branches = fp
        .branches
        .iter()
        .map(|b| BranchDoc {
            id: b.id,
            parent: b.parent,
            fork_time: b.fork_time,
            complete: b.is_complete(),
            abort_reason: match &b.status {
                BranchStatus::Complete => None,
                BranchStatus::Aborted(m) => Some(m.as_str()),
            },
            segments: b
                .segments
                .iter()
                .map(|s| {
                    let (kind, edge) = match s.kind {
                        SegmentKind::Initial => ("initial", None),
                        SegmentKind::Step => ("step", None),
                        SegmentKind::Jump { edge } => ("jump", Some(edge)),
                    };
                    SegmentDoc {
                        t_lo: s.t_lo,
                        t_hi: s.t_hi,
                        location: &fp.locations[s.location],
                        kind,
                        edge,
                        events: &s.events,
                        tight: pairs(&s.tight),
                        hull: pairs(&s.hull),
                    }
                })
                .collect(),
        })
        .collect();
    let doc = FlowpipeDoc {
        variables: &fp.vars,
        locations: &fp.locations,
        t0: fp.t0,
        t_final: fp.t_f,
        complete: fp.complete,
        stats: StatsDoc { steps: fp.stats.steps, rejections: fp.stats.rejections, crossings: fp.stats.crossings, branches: fp.stats.branches },
        warnings: &fp.warnings,
        final_enclosure: fp.final_enclosure().map(pairs),
        branches,
    };
    serde_json::to_value(doc).expect("flowpipe documents serialize")
}

pub fn emit_json(fp: &Flowpipe) -> String {
    let mut s = serde_json::to_string_pretty(&flowpipe_value(fp)).expect("serializable");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct ViolationDoc<'a> {
    sample: usize,
    t: f64,
    state: &'a [f64],
    kind: &'a str,
}

/// Monte-Carlo containment summary; at most the first 20 violations are listed.
pub fn report_value(r: &Report) -> serde_json::Value {
    let violations: Vec<ViolationDoc> =
        r.violations.iter().take(20).map(|v| ViolationDoc { sample: v.sample, t: v.t, state: &v.state, kind: v.kind }).collect();
    serde_json::json!({
        "samples": r.samples,
        "skipped": r.skipped.len(),
        "contained": r.contained,
        "points_checked": r.points_checked,
        "containment_rate": r.rate(),
        "violation_count": r.violations.len(),
        "violations": violations,
    })
}
