use std::fmt::Write as _;

use super::{rel_seconds, ReportModel};
use crate::time::Timestamp;

/// Escapes characters that would break a table cell.
fn cell(text: &str) -> String {
    text.replace('\\', "\\\\").replace('|', "\\|").replace('\n', " ")
}

pub fn render_markdown(model: &ReportModel) -> String {
    let mut md = String::new();
    let s = &model.session;
    let _ = writeln!(md, "# {}\n", model.title);
    let _ = writeln!(md, "- Session: `{}`", s.session_id);
    let _ = writeln!(md, "- Domain: {}", s.domain);
    let _ = writeln!(md, "- Recorded: {}", Timestamp(s.recorded_at_us).to_iso8601());
    let _ = writeln!(
        md,
        "- Clips: {} ({:.0} s of recording)",
        s.clip_count,
        s.duration_us as f64 / 1e6
    );
    let _ = writeln!(md, "- Descriptions: {}", model.descriptions.len());
    let _ = writeln!(md, "- Clusters: {} ({})", model.clusters.len(), model.clustering);
    md.push('\n');
    for n in &model.notices {
        let _ = writeln!(md, "> **Note:** {n}\n");
    }

    md.push_str("## Clusters\n\n");
    for c in &model.clusters {
        let _ = writeln!(
            md,
            "### Cluster {} ({} descriptions, {:.1} %)\n",
            c.cluster_id,
            c.size,
            c.fraction * 100.0
        );
        let _ = writeln!(md, "Color: `{}`. Representative description (clip {}):\n", c.color.hex(), c.representative_clip);
        let _ = writeln!(md, "> {}\n", c.representative_text);
        if let Some(img) = &c.image {
            let _ = writeln!(md, "![Cluster {} representative frame]({})\n", c.cluster_id, img.asset);
        }
        let v = &c.visual;
        if !v.prompts.is_empty() {
            let _ = writeln!(md, "Prompts: {}\n", v.prompts.join(", "));
        }
        if !v.detections.is_empty() {
            md.push_str("| Label | Score | Box (x1, y1, x2, y2) |\n|---|---:|---|\n");
            for d in &v.detections {
                let [x1, y1, x2, y2] = d.bbox.coords();
                let _ = writeln!(md, "| {} | {:.2} | {x1:.3}, {y1:.3}, {x2:.3}, {y2:.3} |", cell(&d.label), d.score);
            }
            md.push('\n');
        }
        if !v.redactions.is_empty() {
            let _ = writeln!(md, "{} region(s) pixelated for privacy.\n", v.redactions.len());
        }
    }

    md.push_str("## Map\n\n");
    if model.has_map() {
        md.push_str("![Description locations colored by cluster](map.svg)\n\n");
        md.push_str("Point data: [map.geojson](map.geojson)\n\n");
    } else {
        md.push_str("Map omitted: no geo data.\n\n");
    }

    md.push_str("## Cluster distribution\n\n");
    md.push_str("![Cluster distribution](assets/distribution.svg)\n\n");
    md.push_str("| Cluster | Color | Descriptions | Share |\n|---:|---|---:|---:|\n");
    for d in &model.distribution {
        let _ = writeln!(
            md,
            "| {} | `{}` | {} | {:.1} % |",
            d.cluster_id,
            model.color_of(d.cluster_id).hex(),
            d.count,
            d.fraction * 100.0
        );
    }
    md.push('\n');

    md.push_str("## Timeline\n\n");
    md.push_str("![Descriptions over time colored by cluster](assets/timeline.svg)\n\n");

    if !model.metrics.is_empty() {
        md.push_str("## Evaluation\n\n| Domain | n | ARI | NMI | FMI |\n|---|---:|---:|---:|---:|\n");
        for m in &model.metrics {
            let _ = writeln!(
                md,
                "| {} | {} | {:.3} | {:.3} | {:.3} |",
                cell(&m.domain),
                m.n,
                m.ari,
                m.nmi_arithmetic,
                m.fmi
            );
        }
        md.push('\n');
    }

    md.push_str("## All descriptions\n\n| # | Clip | Time (s) | Cluster | Description |\n|---:|---:|---:|---:|---|\n");
    for d in &model.descriptions {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            d.index,
            d.clip_index,
            rel_seconds(model, d.t_us),
            d.cluster_id,
            cell(&d.text)
        );
    }
    md
}

#[cfg(test)]
mod tests {
    use super::super::testutil::model;
    use super::*;

    #[test]
    fn contains_every_representative_and_description() {
        let m = model(&[0, 1, 0, 2], true);
        let md = render_markdown(&m);
        for c in &m.clusters {
            assert!(md.contains(&format!("> {}", c.representative_text)));
        }
        for d in &m.descriptions {
            assert!(md.contains(&d.text));
        }
        assert!(md.contains("![Description locations colored by cluster](map.svg)"));
        assert_eq!(md, render_markdown(&m));
    }

    #[test]
    fn table_cells_escape_pipes() {
        let mut m = model(&[0], false);
        m.descriptions[0].text = "a | b".into();
        assert!(render_markdown(&m).contains("a \\| b"));
        assert!(render_markdown(&m).contains("Map omitted"));
    }
}
