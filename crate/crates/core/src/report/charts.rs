//! Static SVG charts: the cluster timeline strip and the distribution bars.

use std::fmt::Write as _;

use super::ReportModel;

const WIDTH: f64 = 800.0;

/// One rectangle per description spanning its clip, colored by cluster.
pub fn timeline_svg(model: &ReportModel) -> String {
    let (left, right, top, bar) = (40.0, 780.0, 10.0, 30.0);
    let t0 = model.timeline.iter().map(|t| t.start_us).min().unwrap_or(0);
    let t1 = model.timeline.iter().map(|t| t.end_us).max().unwrap_or(t0 + 1).max(t0 + 1);
    let x = |t: i64| left + (t - t0) as f64 / (t1 - t0) as f64 * (right - left);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="70" viewBox="0 0 {WIDTH} 70" font-family="sans-serif">"#
    );
    for t in &model.timeline {
        let x0 = x(t.start_us);
        let _ = writeln!(
            svg,
            r#"<rect class="segment" data-index="{}" data-cluster="{}" x="{x0:.2}" y="{top}" width="{:.2}" height="{bar}" fill="{}"><title>clip {} / cluster {}</title></rect>"#,
            t.description_index,
            t.cluster_id,
            x(t.end_us) - x0,
            model.color_of(t.cluster_id).hex(),
            t.clip_index,
            t.cluster_id
        );
    }
    let _ = writeln!(
        svg,
        r##"<text x="{left}" y="58" font-size="12" fill="#555555">0 s</text>"##
    );
    let _ = writeln!(
        svg,
        r##"<text x="{right}" y="58" font-size="12" fill="#555555" text-anchor="end">{:.0} s</text>"##,
        (t1 - t0) as f64 / 1e6
    );
    svg.push_str("</svg>\n");
    svg
}

/// Horizontal bar per cluster: count and share of all descriptions.
pub fn distribution_svg(model: &ReportModel) -> String {
    let row = 28.0;
    let height = 20.0 + row * model.distribution.len() as f64;
    let (bar_x, bar_w) = (110.0, 560.0);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">"#
    );
    for (i, d) in model.distribution.iter().enumerate() {
        let y = 10.0 + row * i as f64;
        let w = d.fraction * bar_w;
        let _ = writeln!(
            svg,
            r##"<text x="10" y="{:.0}" font-size="13" fill="#333333">Cluster {}</text>"##,
            y + 15.0,
            d.cluster_id
        );
        let _ = writeln!(
            svg,
            r#"<rect class="bar" data-cluster="{}" x="{bar_x}" y="{y:.0}" width="{w:.2}" height="20" fill="{}"/>"#,
            d.cluster_id,
            model.color_of(d.cluster_id).hex()
        );
        let _ = writeln!(
            svg,
            r##"<text x="{:.2}" y="{:.0}" font-size="13" fill="#333333">{} ({:.1} %)</text>"##,
            bar_x + w + 6.0,
            y + 15.0,
            d.count,
            d.fraction * 100.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::super::testutil::model;
    use super::*;

    #[test]
    fn one_segment_per_description() {
        let m = model(&[0, 1, 1, 2], true);
        let svg = timeline_svg(&m);
        assert_eq!(svg.matches("<rect class=\"segment\"").count(), 4);
        assert!(svg.contains("x=\"40.00\""));
        assert!(svg.contains(">20 s<"));
    }

    #[test]
    fn bars_scale_with_fraction() {
        let m = model(&[0, 0, 0, 1], true);
        let svg = distribution_svg(&m);
        assert!(svg.contains("width=\"420.00\""));
        assert!(svg.contains("width=\"140.00\""));
        assert!(svg.contains("3 (75.0 %)"));
    }
}
