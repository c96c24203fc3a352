//! One row per segment, branches in order.

use std::fmt::Write;

use hyflow_core::engine::Flowpipe;

/// Format with 17 significant digits, enough to read back the same double.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn emit_csv(fp: &Flowpipe) -> String {
    let mut out = String::from("branch,step,location,t_lo,t_hi");
    for v in &fp.vars {
        let _ = write!(out, ",{v}_tight_lo,{v}_tight_hi,{v}_hull_lo,{v}_hull_hi");
    }
    out.push('\n');
    for b in &fp.branches {
        for (k, s) in b.segments.iter().enumerate() {
            let _ = write!(out, "{},{},{},{},{}", b.id, k, fp.locations[s.location], num(s.t_lo), num(s.t_hi));
            for (t, h) in s.tight.iter().zip(&s.hull) {
                let _ = write!(out, ",{},{},{},{}", num(t.lo()), num(t.hi()), num(h.lo()), num(h.hi()));
            }
            out.push('\n');
        }
    }
    out
}
