//! Static SVG chart of per-hour errors.

use std::fmt::Write;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Grouped bars, fixed beside adaptive, for each of the 24 hours. Missing
/// values leave a gap.
pub fn per_hour_svg(title: &str, fixed: &[Option<f64>], adaptive: &[Option<f64>]) -> String {
    let top = fixed
        .iter()
        .chain(adaptive)
        .flatten()
        .copied()
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    let top = if top > 0.0 { top * 1.1 } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / 24.0;
    let bar = slot * 0.4;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        MARGIN / 2.0,
        escape(title)
    );
    let base = HEIGHT - MARGIN;
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{base}" x2="{}" y2="{base}" stroke="black"/>"#,
        WIDTH - MARGIN
    );
    for tick in 0..=4 {
        let v = top * tick as f64 / 4.0;
        let y = base - plot_h * tick as f64 / 4.0;
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/><text x="{}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - MARGIN,
            MARGIN - 4.0,
            y + 4.0,
            format_tick(v)
        );
    }
    for h in 0..24 {
        let x0 = MARGIN + slot * h as f64 + slot * 0.1;
        for (j, (series, colour)) in [(fixed, "#4c72b0"), (adaptive, "#dd8452")]
            .into_iter()
            .enumerate()
        {
            if let Some(v) = series.get(h).copied().flatten().filter(|v| v.is_finite()) {
                let hgt = plot_h * v / top;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{bar:.1}" height="{hgt:.1}" fill="{colour}"><title>{v}</title></rect>"#,
                    x0 + j as f64 * bar,
                    base - hgt
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{h}</text>"#,
            x0 + bar,
            base + 14.0
        );
    }
    for (j, (label, colour)) in [("fixed", "#4c72b0"), ("adaptive", "#dd8452")]
        .into_iter()
        .enumerate()
    {
        let x = WIDTH - MARGIN - 150.0 + j as f64 * 80.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{colour}"/><text x="{}" y="{}">{label}</text>"#,
            MARGIN / 2.0 + 8.0,
            x + 14.0,
            MARGIN / 2.0 + 17.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64) -> String {
    if v == 0.0 || (1e-2..1e5).contains(&v.abs()) {
        format!("{v:.2}")
    } else {
        format!("{v:.1e}")
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
