use std::fmt::Write;

use super::UvChart;

/// Wireframe of every chart, laid out left to right with a 10 unit gap.
pub fn charts_svg(charts: &[UvChart]) -> String {
    let gap = 10.0;
    let width: f64 = charts.iter().map(|c| c.size[0] + gap).sum::<f64>() + gap;
    let height = charts.iter().map(|c| c.size[1]).fold(0.0, f64::max) + 2.0 * gap;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width:.3} {height:.3}" width="{width:.0}" height="{height:.0}">"#
    );
    let mut x0 = gap;
    for c in charts {
        let _ = writeln!(
            s,
            r#"<g id="chart-{}-{}-{}" fill="none" stroke="black" stroke-width="0.5">"#,
            c.class, c.instance, c.component
        );
        for t in &c.uvs {
            // SVG y grows downward; chart v grows upward.
            let pts: Vec<String> = t
                .iter()
                .map(|p| format!("{:.3},{:.3}", x0 + p[0], gap + c.size[1] - p[1]))
                .collect();
            let _ = writeln!(s, r#"<polygon points="{}"/>"#, pts.join(" "));
        }
        let _ = writeln!(s, "</g>");
        x0 += c.size[0] + gap;
    }
    s.push_str("</svg>\n");
    s
}
