//! Flowpipe plots: blue hull boxes with the red tight boxes drawn on top.

use std::fmt::Write;

use hyflow_core::engine::Flowpipe;
use hyflow_core::Interval;

use crate::model::PlotHint;

const WIDTH: f64 = 800.0;
const PANEL_H: f64 = 360.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const HULL_COLOR: &str = "#3b6fd6";
const TIGHT_COLOR: &str = "#d62728";

struct Panel {
    x_label: String,
    y_label: String,
    /// (x range, y range) per segment: hull then tight.
    boxes: Vec<(Interval, Interval, Interval, Interval)>,
    t_final: Option<f64>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Round numbers for axis labels: steps of 1, 2 or 5 times a power of ten.
fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn label(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    let s = format!("{r}");
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

fn range(boxes: &[(Interval, Interval, Interval, Interval)], pick: impl Fn(&(Interval, Interval, Interval, Interval)) -> Interval) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for b in boxes {
        let i = pick(b);
        lo = lo.min(i.lo());
        hi = hi.max(i.hi());
    }
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs() * 0.1);
        return (lo - pad, hi + pad);
    }
    let pad = 0.04 * (hi - lo);
    (lo - pad, hi + pad)
}

fn draw_panel(out: &mut String, p: &Panel, y0: f64) {
    let (xl, xh) = range(&p.boxes, |b| b.0);
    let (yl, yh) = range(&p.boxes, |b| b.1);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = PANEL_H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - xl) / (xh - xl) * pw;
    let sy = |y: f64| y0 + TOP + (yh - y) / (yh - yl) * ph;
    let clip = |v: f64, lo: f64, hi: f64| v.clamp(lo, hi);

    let _ = writeln!(out, "<g>");
    let rect = |x: Interval, y: Interval, color: &str, out: &mut String| {
        let x0 = clip(sx(x.lo()), LEFT, LEFT + pw);
        let x1 = clip(sx(x.hi()), LEFT, LEFT + pw);
        let ya = clip(sy(y.hi()), y0 + TOP, y0 + TOP + ph);
        let yb = clip(sy(y.lo()), y0 + TOP, y0 + TOP + ph);
        // never thinner than one pixel
        let w = (x1 - x0).max(1.0);
        let h = (yb - ya).max(1.0);
        let _ = writeln!(out, "<rect x=\"{x0:.2}\" y=\"{ya:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{color}\"/>");
    };
    let finite = |i: &Interval| i.lo().is_finite() && i.hi().is_finite();
    for (hx, hy, _, _) in &p.boxes {
        if finite(hx) && finite(hy) {
            rect(*hx, *hy, HULL_COLOR, out);
        }
    }
    for (_, _, tx, ty) in &p.boxes {
        if finite(tx) && finite(ty) {
            rect(*tx, *ty, TIGHT_COLOR, out);
        }
    }
    let _ = writeln!(out, "</g>");

    // axes
    let bottom = y0 + TOP + ph;
    let _ = writeln!(out, "<g stroke=\"black\" stroke-width=\"1\" fill=\"none\">");
    let _ = writeln!(out, "<rect x=\"{LEFT:.2}\" y=\"{:.2}\" width=\"{pw:.2}\" height=\"{ph:.2}\"/>", y0 + TOP);
    let xt = ticks(xl, xh, 8);
    let yt = ticks(yl, yh, 6);
    for &t in &xt {
        let x = sx(t);
        let _ = writeln!(out, "<line x1=\"{x:.2}\" y1=\"{bottom:.2}\" x2=\"{x:.2}\" y2=\"{:.2}\"/>", bottom + 5.0);
    }
    for &t in &yt {
        let y = sy(t);
        let _ = writeln!(out, "<line x1=\"{:.2}\" y1=\"{y:.2}\" x2=\"{LEFT:.2}\" y2=\"{y:.2}\"/>", LEFT - 5.0);
    }
    if let Some(tf) = p.t_final {
        if tf > xl && tf < xh {
            let x = sx(tf);
            let _ = writeln!(out, "<line x1=\"{x:.2}\" y1=\"{:.2}\" x2=\"{x:.2}\" y2=\"{bottom:.2}\" stroke-dasharray=\"4 3\" stroke=\"gray\"/>", y0 + TOP);
        }
    }
    let _ = writeln!(out, "</g>");
    let _ = writeln!(out, "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">");
    for &t in &xt {
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", sx(t), bottom + 18.0, label(t));
    }
    for &t in &yt {
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", LEFT - 8.0, sy(t) + 4.0, label(t));
    }
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"13\">{}</text>",
        LEFT + pw / 2.0,
        bottom + 40.0,
        escape(&p.x_label)
    );
    let cy = y0 + TOP + ph / 2.0;
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{cy:.2}\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 {cy:.2})\">{}</text>",
        escape(&p.y_label)
    );
    let _ = writeln!(out, "</g>");
}

/// Render the flowpipe as SVG 1.1.
pub fn emit_svg(fp: &Flowpipe, hint: &PlotHint) -> String {
    let outputs: Vec<usize> = if hint.outputs.is_empty() { (0..fp.vars.len()).collect() } else { hint.outputs.clone() };
    let segs: Vec<_> = fp.segments().map(|(_, s)| s).collect();
    let panels: Vec<Panel> = if hint.xy && outputs.len() >= 2 {
        let (a, b) = (outputs[0], outputs[1]);
        vec![Panel {
            x_label: fp.vars[a].clone(),
            y_label: fp.vars[b].clone(),
            boxes: segs.iter().map(|s| (s.hull[a], s.hull[b], s.tight[a], s.tight[b])).collect(),
            t_final: None,
        }]
    } else {
        outputs
            .iter()
            .map(|&v| Panel {
                x_label: "time".into(),
                y_label: fp.vars[v].clone(),
                boxes: segs
                    .iter()
                    .map(|s| {
                        let span = Interval::new(s.t_lo, s.t_hi).unwrap_or(Interval::point(s.t_lo));
                        // the tight box is the state at the segment end
                        (span, s.hull[v], Interval::point(s.t_hi), s.tight[v])
                    })
                    .collect(),
                t_final: Some(fp.t_f),
            })
            .collect()
    };
    let height = PANEL_H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\" encoding=\"UTF-8\"?>");
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{WIDTH}\" height=\"{height}\" viewBox=\"0 0 {WIDTH} {height}\">"
    );
    let _ = writeln!(out, "<rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{height}\" fill=\"white\"/>");
    for (i, p) in panels.iter().enumerate() {
        draw_panel(&mut out, p, i as f64 * PANEL_H);
    }
    let _ = writeln!(out, "</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_steps_are_round() {
        assert_eq!(ticks(0.0, 1.0, 5), vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]);
        assert_eq!(ticks(-3.0, 17.0, 4), vec![0.0, 5.0, 10.0, 15.0]);
        assert_eq!(ticks(2.0, 2.0, 4), vec![2.0]);
    }

    #[test]
    fn labels_drop_float_noise() {
        assert_eq!(label(0.6000000000000001), "0.6");
        assert_eq!(label(-0.0), "0");
    }
}
