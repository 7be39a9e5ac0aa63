//! Minimal static SVG plots: stacked count histograms and Manhattan plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const PALETTE: [&str; 8] = ["#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb", "#000000"];

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#, WIDTH / 2.0, escape(title))
        .unwrap();
    let (x0, y0, x1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN / 2.0);
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#).unwrap();
    writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN}" stroke="black"/>"#).unwrap();
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bars per cell, stacked by series (one series per cluster). `markers` are
/// dashed vertical lines at fractional cell positions.
pub fn histogram(title: &str, cell_labels: &[String], series: &[Vec<f64>], markers: &[(f64, String)]) -> String {
    let cells = cell_labels.len();
    let totals: Vec<f64> = (0..cells).map(|c| series.iter().map(|s| s[c]).sum()).collect();
    let ymax = totals.iter().copied().fold(0.0, f64::max).max(1.0);
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let bar = plot_w / cells.max(1) as f64;
    let mut s = header(title);
    for c in 0..cells {
        let mut base = HEIGHT - MARGIN;
        for (k, ser) in series.iter().enumerate() {
            let h = ser[c] / ymax * plot_h;
            if h > 0.0 {
                writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                    MARGIN + c as f64 * bar + 1.0,
                    base - h,
                    (bar - 2.0).max(0.5),
                    h,
                    PALETTE[k % PALETTE.len()]
                )
                .unwrap();
            }
            base -= h;
        }
        writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            MARGIN + (c as f64 + 0.5) * bar,
            HEIGHT - MARGIN + 14.0,
            escape(&cell_labels[c])
        )
        .unwrap();
    }
    for (pos, label) in markers {
        let x = MARGIN + pos * bar;
        writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{MARGIN}" stroke="black" stroke-dasharray="4 3"/>"#,
            HEIGHT - MARGIN
        )
        .unwrap();
        writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 3.0, MARGIN + 10.0, escape(label)).unwrap();
    }
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">log2 MIC</text>"#, WIDTH / 2.0, HEIGHT - 12.0)
        .unwrap();
    writeln!(s, r#"<text x="12" y="{:.2}">{}</text>"#, MARGIN - 6.0, ymax).unwrap();
    s.push_str("</svg>\n");
    s
}

/// Scores against genomic position with a horizontal threshold line;
/// highlighted points are drawn in red.
pub fn manhattan(title: &str, positions: &[u64], scores: &[f64], highlight: &[bool], threshold: f64) -> String {
    let xmin = positions.iter().copied().min().unwrap_or(0) as f64;
    let xmax = (positions.iter().copied().max().unwrap_or(1) as f64).max(xmin + 1.0);
    let ymax = scores.iter().copied().fold(threshold, f64::max).max(1.0) * 1.05;
    let plot_w = WIDTH - 1.5 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |p: f64| MARGIN + (p - xmin) / (xmax - xmin) * plot_w;
    let y = |v: f64| HEIGHT - MARGIN - v / ymax * plot_h;
    let mut s = header(title);
    for ((p, v), h) in positions.iter().zip(scores).zip(highlight) {
        writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{}"/>"#,
            x(*p as f64),
            y(*v),
            if *h { "#cc3311" } else { "#4477aa" }
        )
        .unwrap();
    }
    let ty = y(threshold);
    writeln!(
        s,
        r##"<line x1="{MARGIN}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#cc3311" stroke-dasharray="4 3"/>"##,
        WIDTH - MARGIN / 2.0
    )
    .unwrap();
    writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">position</text>"#, WIDTH / 2.0, HEIGHT - 12.0)
        .unwrap();
    writeln!(s, r#"<text x="12" y="{:.2}">{:.2}</text>"#, MARGIN - 6.0, ymax).unwrap();
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_draws_one_rect_per_nonzero_segment() {
        let labels: Vec<String> = ["-1", "0", "1"].iter().map(|s| s.to_string()).collect();
        let svg = histogram("t <1>", &labels, &[vec![1.0, 0.0, 2.0], vec![0.0, 3.0, 1.0]], &[(1.5, "q".into())]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        // background + 4 bars
        assert_eq!(svg.matches("<rect").count(), 5);
        assert!(svg.contains("t &lt;1&gt;"));
        assert!(svg.contains("stroke-dasharray"));
    }

    #[test]
    fn manhattan_marks_highlighted_points() {
        let svg = manhattan("m", &[1000, 2000, 3000], &[0.1, 6.0, 0.5], &[false, true, false], 1.3);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("#cc3311").count(), 2);
    }
}
