//! Minimal horizontal bar charts for values in [0, 1].

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const LABEL_WIDTH: f64 = 300.0;
const BAR_HEIGHT: f64 = 18.0;
const GAP: f64 = 6.0;
const TOP: f64 = 40.0;

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// One bar per `(label, value)`; values are clamped to [0, 1].
pub fn bar_chart(title: &str, bars: &[(String, f64)]) -> String {
    let plot = WIDTH - LABEL_WIDTH - 60.0;
    let height = TOP + bars.len() as f64 * (BAR_HEIGHT + GAP) + 20.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="10" y="22" font-size="15" font-weight="bold">{}</text>"#,
        escape(title)
    );
    for (i, (label, value)) in bars.iter().enumerate() {
        let v = if value.is_finite() {
            value.clamp(0.0, 1.0)
        } else {
            0.0
        };
        let y = TOP + i as f64 * (BAR_HEIGHT + GAP);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL_WIDTH - 8.0,
            y + BAR_HEIGHT - 5.0,
            escape(label)
        );
        let _ = writeln!(
            s,
            r##"<rect x="{LABEL_WIDTH}" y="{y}" width="{:.2}" height="{BAR_HEIGHT}" fill="#4c78a8"/>"##,
            v * plot
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}">{:.3}</text>"#,
            LABEL_WIDTH + v * plot + 4.0,
            y + BAR_HEIGHT - 5.0,
            v
        );
    }
    s.push_str("</svg>\n");
    s
}
