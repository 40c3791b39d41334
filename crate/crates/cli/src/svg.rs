//! Horizontal bar charts of importance reports, written as plain SVG.

use std::fmt::Write;

use nn_sensitivity::explain::ImportanceReport;

pub const WIDTH: usize = 800;
pub const ROW_HEIGHT: usize = 30;
const LABEL_WIDTH: f64 = 220.0;
const VALUE_WIDTH: f64 = 80.0;
const BAR_HEIGHT: f64 = 20.0;

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// One bar per entry in ranking order on an `800 x 30·k` canvas, with the
/// percentage to two decimals after each bar. Bar lengths are relative to
/// the largest entry.
pub fn bar_chart(report: &ImportanceReport, title: &str) -> String {
    let k = report.entries.len().max(1);
    let height = ROW_HEIGHT * k;
    let span = WIDTH as f64 - LABEL_WIDTH - VALUE_WIDTH;
    let max = report.entries.iter().map(|e| e.value).fold(0.0f64, f64::max);
    let mut svg = String::new();
    writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="13">"#
    )
    .unwrap();
    writeln!(svg, "<title>{}</title>", escape(title)).unwrap();
    writeln!(svg, r##"<rect width="{WIDTH}" height="{height}" fill="#ffffff"/>"##).unwrap();
    for (i, e) in report.entries.iter().enumerate() {
        let top = (i * ROW_HEIGHT) as f64;
        let mid = top + ROW_HEIGHT as f64 / 2.0;
        let len = if max > 0.0 { span * e.value / max } else { 0.0 };
        writeln!(
            svg,
            r#"<text x="{:.1}" y="{mid:.1}" text-anchor="end" dominant-baseline="middle">{}</text>"#,
            LABEL_WIDTH - 8.0,
            escape(&e.name)
        )
        .unwrap();
        writeln!(
            svg,
            r##"<rect x="{LABEL_WIDTH:.1}" y="{:.1}" width="{len:.2}" height="{BAR_HEIGHT:.1}" fill="#3b6ea5"/>"##,
            top + (ROW_HEIGHT as f64 - BAR_HEIGHT) / 2.0
        )
        .unwrap();
        writeln!(
            svg,
            r#"<text x="{:.2}" y="{mid:.1}" dominant-baseline="middle">{:.2}%</text>"#,
            LABEL_WIDTH + len + 6.0,
            e.value
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;
    use nn_sensitivity::explain::{Metric, Scope};

    fn report() -> ImportanceReport {
        ImportanceReport::from_raw(
            Scope::Global,
            Metric::Iid,
            vec!["a<b".into(), "x".into(), "y".into()],
            vec![1.0, 3.0, 0.0],
            5,
        )
        .unwrap()
    }

    #[test]
    fn canvas_and_labels() {
        let svg = bar_chart(&report(), "t");
        assert!(svg.contains(r#"width="800" height="90""#));
        assert!(svg.contains(">75.00%<"));
        assert!(svg.contains(">25.00%<"));
        assert!(svg.contains(">0.00%<"));
        assert!(svg.contains("a&lt;b"));
        let first = svg.find(">x<").unwrap();
        let second = svg.find("a&lt;b").unwrap();
        assert!(first < second, "bars follow the ranking");
        assert!(svg.contains(r#"width="500.00""#), "largest bar spans the plot area");
    }
}
