//! Minimal loss-curve plots: per-seed traces, their mean and a shaded band of
//! one standard deviation.

use std::fmt::Write;

use zorms_core::record::SummaryRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

pub fn loss_curves(title: &str, traces: &[Vec<f64>], summary: &[SummaryRow]) -> String {
    let finite = |x: &f64| x.is_finite();
    let values = traces.iter().flatten().copied().filter(finite).chain(
        summary.iter().flat_map(|r| [r.mean_loss - r.std_loss, r.mean_loss + r.std_loss]).filter(finite),
    );
    let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    lo = lo.min(0.0);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let n = traces.iter().map(Vec::len).chain([summary.len()]).max().unwrap_or(0).max(2);
    let x = |k: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * k as f64 / (n - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v.clamp(lo, hi) - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, WIDTH / 2.0, escape(title));

    let band: Vec<&SummaryRow> = summary.iter().filter(|r| r.mean_loss.is_finite() && r.std_loss.is_finite()).collect();
    if !band.is_empty() {
        let upper: Vec<String> =
            band.iter().map(|r| format!("{:.2},{:.2}", x(r.iter), y(r.mean_loss + r.std_loss))).collect();
        let lower: Vec<String> =
            band.iter().rev().map(|r| format!("{:.2},{:.2}", x(r.iter), y(r.mean_loss - r.std_loss))).collect();
        let _ = writeln!(
            s,
            r##"<polygon class="band" points="{} {}" fill="#1f77b4" fill-opacity="0.2" stroke="none"/>"##,
            upper.join(" "),
            lower.join(" ")
        );
    }
    for t in traces {
        let _ = writeln!(s, r##"<polyline class="trace" points="{}" fill="none" stroke="#999999" stroke-width="0.8"/>"##, points(t.iter().copied(), x, y));
    }
    if !summary.is_empty() {
        let mean = summary.iter().map(|r| r.mean_loss);
        let _ = writeln!(s, r##"<polyline class="mean" points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##, points(mean, x, y));
    }

    // Axes with end labels.
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(s, r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" fill="none" stroke="black"/>"#);
    let _ = writeln!(s, r#"<text x="{x0}" y="{}" text-anchor="middle">0</text>"#, y0 + 16.0);
    let _ = writeln!(s, r#"<text x="{x1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 16.0, n - 1);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">iteration</text>"#, WIDTH / 2.0, y0 + 32.0);
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, y0, fmt_tick(lo));
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, x0 - 4.0, y1 + 4.0, fmt_tick(hi));
    let _ = writeln!(s, r#"<text x="16" y="{}" transform="rotate(-90 16 {})" text-anchor="middle">loss</text>"#, HEIGHT / 2.0, HEIGHT / 2.0);
    s.push_str("</svg>\n");
    s
}

/// Non-finite values break the line rather than being drawn.
fn points(values: impl Iterator<Item = f64>, x: impl Fn(usize) -> f64, y: impl Fn(f64) -> f64) -> String {
    values
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(k, v)| format!("{:.2},{:.2}", x(k), y(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e-2 && v.abs() < 1e4 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
