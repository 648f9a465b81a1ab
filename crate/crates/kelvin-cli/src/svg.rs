//! Minimal SVG 1.1 line charts.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plots each line against `x`; non-finite points break the polyline.
/// A log y axis is used when every finite value is positive and they span
/// more than two decades.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, x: &[f64], lines: &[(String, Vec<f64>)]) -> String {
    let ys = lines.iter().flat_map(|l| l.1.iter().copied()).filter(|v| v.is_finite());
    let (lo, hi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |a, v| (a.0.min(v), a.1.max(v)));
    let log = lo > 0.0 && hi / lo > 100.0;
    let tf = |v: f64| if log { v.log10() } else { v };
    let (mut y0, mut y1) = if lo.is_finite() { (tf(lo), tf(hi)) } else { (0.0, 1.0) };
    if y1 - y0 < 1e-300 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let (x0, x1) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |a, &v| (a.0.min(v), a.1.max(v)));
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |v: f64| PAD + (v - x0) / xspan * (W - 2.0 * PAD);
    let py = |v: f64| H - PAD - (tf(v) - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>
<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}{}</text>"#,
        W / 2.0,
        esc(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 12.0,
        esc(x_label),
        H / 2.0,
        H / 2.0,
        if log { "log10 " } else { "" },
        esc(y_label)
    );
    for (v, anchor, xx, yy) in [(x0, "start", PAD, H - PAD + 16.0), (x1, "end", W - PAD, H - PAD + 16.0)] {
        let _ = writeln!(s, r#"<text x="{xx}" y="{yy}" text-anchor="{anchor}">{v:.4}</text>"#);
    }
    for (v, yy) in [(y0, H - PAD), (y1, PAD + 4.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{yy}" text-anchor="end">{v:.3e}</text>"#, PAD - 4.0);
    }
    for (i, (name, ys)) in lines.iter().enumerate() {
        let col = COLORS[i % COLORS.len()];
        let mut seg = Vec::new();
        let flush = |seg: &mut Vec<String>, s: &mut String| {
            if seg.len() > 1 {
                let _ = writeln!(s, r#"<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{}"/>"#, seg.join(" "));
            } else if let Some(p) = seg.first() {
                let (a, b) = p.split_once(',').unwrap();
                let _ = writeln!(s, r#"<circle cx="{a}" cy="{b}" r="2" fill="{col}"/>"#);
            }
            seg.clear();
        };
        for (&xv, &yv) in x.iter().zip(ys) {
            if yv.is_finite() && (!log || yv > 0.0) {
                seg.push(format!("{:.2},{:.2}", px(xv), py(yv)));
            } else {
                flush(&mut seg, &mut s);
            }
        }
        flush(&mut seg, &mut s);
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{col}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            W - PAD - 130.0,
            W - PAD - 110.0,
            W - PAD - 104.0,
            ly + 4.0,
            esc(name)
        );
    }
    s.push_str("</svg>\n");
    s
}
