//! Single-file HTML report. Charts are inline SVG, overlays are `data:`
//! URIs when assets are embedded, and the interactive map is the viewer
//! bundle reading a JSON payload block. Nothing is fetched from the network
//! unless a tile URL is passed in.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use base64::Engine as _;
use serde_json::{json, Value};

use super::charts::{distribution_svg, timeline_svg};
use super::map::{geojson, render_map};
use super::{escape_xml, rel_seconds, ReportModel};
use crate::time::Timestamp;

/// Pre-built viewer; defines `window.mountFieldscribeViewer(elementId)`.
pub const VIEWER_BUNDLE: &str = include_str!("../../assets/viewer.js");
pub const PAYLOAD_ELEMENT_ID: &str = "fieldscribe-payload";
const MAP_ELEMENT_ID: &str = "fieldscribe-map";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct HtmlOptions {
    pub embed_assets: bool,
    pub tile_url: Option<String>,
}

const STYLE: &str = "body{font-family:system-ui,sans-serif;max-width:960px;margin:2em auto;padding:0 1em;color:#222}\
h1{font-size:1.8em}h2{border-bottom:1px solid #ddd;padding-bottom:.2em;margin-top:1.6em}\
.swatch{display:inline-block;width:.9em;height:.9em;margin-right:.4em;vertical-align:baseline}\
blockquote{border-left:4px solid #ccc;margin:.6em 0;padding:.2em .8em;color:#333}\
table{border-collapse:collapse;margin:.6em 0}td,th{border:1px solid #ddd;padding:3px 8px;text-align:left;vertical-align:top}\
img.overlay{max-width:100%;image-rendering:pixelated}.notice{background:#fff8e1;padding:.4em .8em;border:1px solid #ffe082}\
svg{max-width:100%;height:auto}";

/// Inline SVG does not need the namespace declaration, which would be the
/// only URL in the document.
fn inline_svg(svg: &str) -> String {
    svg.replacen(r#" xmlns="http://www.w3.org/2000/svg""#, "", 1)
}

/// JSON safe inside a `<script>` element.
fn script_json(v: &Value) -> String {
    serde_json::to_string(v)
        .expect("payload serializes")
        .replace("</", "<\\/")
        .replace("<!--", "<\\!--")
}

/// Data handed to the viewer.
pub fn viewer_payload(model: &ReportModel, tile_url: Option<&str>) -> Value {
    let palette: BTreeMap<String, String> = model
        .clusters
        .iter()
        .map(|c| (c.cluster_id.to_string(), c.color.hex()))
        .collect();
    let mut feature_of = BTreeMap::new();
    for (i, p) in model.geo_points.iter().enumerate() {
        feature_of.insert(p.description_index, i);
    }
    let timeline: Vec<Value> = model
        .timeline
        .iter()
        .filter_map(|t| {
            let f = feature_of.get(&t.description_index)?;
            Some(json!({
                "feature_index": f,
                "clip_index": t.clip_index,
                "cluster_id": t.cluster_id,
                "t_us": model.geo_points[*f].t_us,
            }))
        })
        .collect();
    let texts: Vec<&str> = model
        .geo_points
        .iter()
        .map(|p| model.descriptions[p.description_index].text.as_str())
        .collect();
    json!({
        "geojson": geojson(model),
        "timeline": timeline,
        "palette": palette,
        "texts": texts,
        "track": model.track.iter().map(|&(lat, lon)| [lon, lat]).collect::<Vec<_>>(),
        "t0_us": model.session.recorded_at_us,
        "tiles": tile_url,
    })
}

pub fn render_html(model: &ReportModel, overlays: &BTreeMap<usize, Vec<u8>>, opts: &HtmlOptions) -> String {
    let e = escape_xml;
    let mut h = String::new();
    let _ = writeln!(
        h,
        "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<meta name=\"viewport\" content=\"width=device-width, initial-scale=1\">\n<title>{}</title>\n<style>{STYLE}</style>\n</head>\n<body>",
        e(&model.title)
    );
    let _ = writeln!(h, "<h1>{}</h1>", e(&model.title));
    let s = &model.session;
    h.push_str("<ul class=\"meta\">\n");
    let _ = writeln!(h, "<li>Session: <code>{}</code></li>", e(&s.session_id));
    let _ = writeln!(h, "<li>Domain: {}</li>", e(&s.domain));
    let _ = writeln!(h, "<li>Recorded: {}</li>", Timestamp(s.recorded_at_us).to_iso8601());
    let _ = writeln!(h, "<li>Clips: {} ({:.0} s of recording)</li>", s.clip_count, s.duration_us as f64 / 1e6);
    let _ = writeln!(h, "<li>Descriptions: {}</li>", model.descriptions.len());
    let _ = writeln!(h, "<li>Clusters: {} ({})</li>", model.clusters.len(), e(&model.clustering));
    h.push_str("</ul>\n");
    for n in &model.notices {
        let _ = writeln!(h, "<p class=\"notice\">{}</p>", e(n));
    }

    h.push_str("<h2>Clusters</h2>\n");
    for c in &model.clusters {
        let _ = writeln!(h, "<section class=\"cluster\" id=\"cluster-{}\">", c.cluster_id);
        let _ = writeln!(
            h,
            "<h3><span class=\"swatch\" style=\"background:{}\"></span>Cluster {} ({} descriptions, {:.1} %)</h3>",
            c.color.hex(),
            c.cluster_id,
            c.size,
            c.fraction * 100.0
        );
        let _ = writeln!(h, "<p>Representative description (clip {}):</p>", c.representative_clip);
        let _ = writeln!(h, "<blockquote>{}</blockquote>", e(&c.representative_text));
        if let Some(img) = &c.image {
            let src = match overlays.get(&c.cluster_id) {
                Some(png) if opts.embed_assets => format!(
                    "data:image/png;base64,{}",
                    base64::engine::general_purpose::STANDARD.encode(png)
                ),
                _ => img.asset.clone(),
            };
            let _ = writeln!(
                h,
                "<img class=\"overlay\" src=\"{src}\" alt=\"Cluster {} representative frame\">",
                c.cluster_id
            );
        }
        let v = &c.visual;
        if !v.prompts.is_empty() {
            let _ = writeln!(h, "<p>Prompts: {}</p>", e(&v.prompts.join(", ")));
        }
        if !v.detections.is_empty() {
            h.push_str("<table><tr><th>Label</th><th>Score</th><th>Box (x1, y1, x2, y2)</th></tr>\n");
            for d in &v.detections {
                let [x1, y1, x2, y2] = d.bbox.coords();
                let _ = writeln!(
                    h,
                    "<tr><td>{}</td><td>{:.2}</td><td>{x1:.3}, {y1:.3}, {x2:.3}, {y2:.3}</td></tr>",
                    e(&d.label),
                    d.score
                );
            }
            h.push_str("</table>\n");
        }
        if !v.redactions.is_empty() {
            let _ = writeln!(h, "<p>{} region(s) pixelated for privacy.</p>", v.redactions.len());
        }
        h.push_str("</section>\n");
    }

    h.push_str("<h2>Map</h2>\n");
    match render_map(model) {
        Ok(map) => {
            let _ = writeln!(h, "<div id=\"{MAP_ELEMENT_ID}\"></div>");
            let _ = writeln!(
                h,
                "<details><summary>Static map</summary>\n{}</details>",
                inline_svg(&map.svg)
            );
        }
        Err(_) => h.push_str("<p>Map omitted: no geo data.</p>\n"),
    }

    h.push_str("<h2>Cluster distribution</h2>\n");
    h.push_str(&inline_svg(&distribution_svg(model)));
    h.push_str("<table><tr><th>Cluster</th><th>Color</th><th>Descriptions</th><th>Share</th></tr>\n");
    for d in &model.distribution {
        let color = model.color_of(d.cluster_id).hex();
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td><span class=\"swatch\" style=\"background:{color}\"></span>{color}</td><td>{}</td><td>{:.1} %</td></tr>",
            d.cluster_id,
            d.count,
            d.fraction * 100.0
        );
    }
    h.push_str("</table>\n");

    h.push_str("<h2>Timeline</h2>\n");
    h.push_str(&inline_svg(&timeline_svg(model)));

    if !model.metrics.is_empty() {
        h.push_str("<h2>Evaluation</h2>\n<table><tr><th>Domain</th><th>n</th><th>ARI</th><th>NMI</th><th>FMI</th></tr>\n");
        for m in &model.metrics {
            let _ = writeln!(
                h,
                "<tr><td>{}</td><td>{}</td><td>{:.3}</td><td>{:.3}</td><td>{:.3}</td></tr>",
                e(&m.domain),
                m.n,
                m.ari,
                m.nmi_arithmetic,
                m.fmi
            );
        }
        h.push_str("</table>\n");
    }

    h.push_str("<h2>All descriptions</h2>\n<table><tr><th>#</th><th>Clip</th><th>Time (s)</th><th>Cluster</th><th>Description</th></tr>\n");
    for d in &model.descriptions {
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td><span class=\"swatch\" style=\"background:{}\"></span>{}</td><td>{}</td></tr>",
            d.index,
            d.clip_index,
            rel_seconds(model, d.t_us),
            model.color_of(d.cluster_id).hex(),
            d.cluster_id,
            e(&d.text)
        );
    }
    h.push_str("</table>\n");

    if model.has_map() {
        let payload = viewer_payload(model, opts.tile_url.as_deref());
        let _ = writeln!(
            h,
            "<script type=\"application/json\" id=\"{PAYLOAD_ELEMENT_ID}\">{}</script>",
            script_json(&payload)
        );
        let _ = writeln!(h, "<script>\n{VIEWER_BUNDLE}</script>");
        let _ = writeln!(h, "<script>mountFieldscribeViewer(\"{MAP_ELEMENT_ID}\");</script>");
    }
    h.push_str("</body>\n</html>\n");
    h
}

#[cfg(test)]
mod tests {
    use super::super::testutil::model;
    use super::*;

    fn payload_of(html: &str) -> Value {
        let start = html.find("id=\"fieldscribe-payload\">").unwrap() + "id=\"fieldscribe-payload\">".len();
        let end = start + html[start..].find("</script>").unwrap();
        serde_json::from_str(&html[start..end]).unwrap()
    }

    #[test]
    fn payload_has_one_feature_per_description() {
        let m = model(&[0, 1, 1, 2, 0], true);
        let html = render_html(&m, &BTreeMap::new(), &HtmlOptions { embed_assets: true, tile_url: None });
        let p = payload_of(&html);
        assert_eq!(p["geojson"]["features"].as_array().unwrap().len(), 5);
        assert_eq!(p["timeline"].as_array().unwrap().len(), 5);
        assert_eq!(p["texts"][3], m.descriptions[3].text.as_str());
        assert_eq!(p["palette"]["2"], "#4363D8");
        assert!(p["tiles"].is_null());
        assert!(html.contains("mountFieldscribeViewer(\"fieldscribe-map\")"));
        assert!(!html.contains("://"), "no URLs at all in default mode");
    }

    #[test]
    fn script_breakout_is_escaped() {
        let mut m = model(&[0], true);
        m.descriptions[0].text = "</script><script>alert(1)</script>".into();
        let html = render_html(&m, &BTreeMap::new(), &HtmlOptions::default());
        assert_eq!(html.matches("</script>").count(), 3);
        assert_eq!(payload_of(&html)["texts"][0], "</script><script>alert(1)</script>");
    }

    #[test]
    fn tiles_only_when_requested() {
        let m = model(&[0, 1], true);
        let url = "https://tiles.example/{z}/{x}/{y}.png";
        let html = render_html(&m, &BTreeMap::new(), &HtmlOptions { embed_assets: true, tile_url: Some(url.into()) });
        assert_eq!(payload_of(&html)["tiles"], url);
    }

    #[test]
    fn overlays_become_data_uris() {
        let m = model(&[0, 1], true);
        let mut pngs = BTreeMap::new();
        pngs.insert(0, vec![1u8, 2, 3]);
        let html = render_html(&m, &pngs, &HtmlOptions { embed_assets: true, tile_url: None });
        assert!(html.contains("src=\"data:image/png;base64,AQID\""));
        assert!(html.contains("src=\"assets/cluster_01.png\""));
        let linked = render_html(&m, &pngs, &HtmlOptions { embed_assets: false, tile_url: None });
        assert!(linked.contains("src=\"assets/cluster_00.png\""));
    }
}
