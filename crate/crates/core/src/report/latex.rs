//! LaTeX output. The document needs only standard packages, draws the map
//! and charts with TikZ, and references overlays relative to its directory.
//! All model text goes through [`latex_escape`].

use std::fmt::Write as _;

use super::map::{project, render_map, MAP_HEIGHT, MAP_WIDTH};
use super::{rel_seconds, ReportModel};
use crate::time::Timestamp;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("cannot typeset character {ch:?} (U+{code:04X}) in {text:?}")]
pub struct LatexEscapeError {
    pub ch: char,
    pub code: u32,
    pub text: String,
}

/// Escapes text for a LaTeX body. Characters a standard T1/UTF-8 setup
/// cannot typeset, such as control characters or emoji, are errors.
pub fn latex_escape(text: &str) -> Result<String, LatexEscapeError> {
    let mut out = String::with_capacity(text.len() + 8);
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\textbackslash{}"),
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(ch);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '<' => out.push_str("\\textless{}"),
            '>' => out.push_str("\\textgreater{}"),
            '|' => out.push_str("\\textbar{}"),
            '\n' | '\t' | '\r' => out.push(' '),
            '\u{2018}' => out.push('`'),
            '\u{2019}' => out.push('\''),
            '\u{201C}' => out.push_str("``"),
            '\u{201D}' => out.push_str("''"),
            '\u{2013}' => out.push_str("--"),
            '\u{2014}' => out.push_str("---"),
            '\u{2026}' => out.push_str("\\ldots{}"),
            '\u{00A0}' => out.push('~'),
            c if c.is_control() => return Err(err(c, text)),
            c if c.is_ascii() => out.push(c),
            c if ('\u{00A1}'..='\u{00FF}').contains(&c) && c != '\u{00AD}' => out.push(c),
            c => return Err(err(c, text)),
        }
    }
    Ok(out)
}

fn err(ch: char, text: &str) -> LatexEscapeError {
    LatexEscapeError {
        ch,
        code: ch as u32,
        text: text.chars().take(80).collect(),
    }
}

fn color_name(id: usize) -> String {
    format!("cluster{id}")
}

pub fn render_latex(model: &ReportModel) -> Result<String, LatexEscapeError> {
    let mut t = String::new();
    t.push_str("\\documentclass[11pt,a4paper]{article}\n");
    t.push_str("\\usepackage[T1]{fontenc}\n\\usepackage[utf8]{inputenc}\n");
    t.push_str("\\usepackage[margin=2cm]{geometry}\n\\usepackage{graphicx}\n\\usepackage{xcolor}\n");
    t.push_str("\\usepackage{tikz}\n\\usepackage{longtable}\n\\usepackage{booktabs}\n\n");
    for c in &model.clusters {
        let _ = writeln!(t, "\\definecolor{{{}}}{{HTML}}{{{}}}", color_name(c.cluster_id), c.color.hex_bare());
    }
    t.push('\n');
    let _ = writeln!(t, "\\title{{{}}}\n\\author{{}}\n\\date{{}}\n", latex_escape(&model.title)?);
    t.push_str("\\begin{document}\n\\maketitle\n\n");

    let s = &model.session;
    t.push_str("\\begin{itemize}\n");
    let _ = writeln!(t, "\\item Session: \\texttt{{{}}}", latex_escape(&s.session_id)?);
    let _ = writeln!(t, "\\item Domain: {}", latex_escape(&s.domain)?);
    let _ = writeln!(t, "\\item Recorded: {}", Timestamp(s.recorded_at_us).to_iso8601());
    let _ = writeln!(t, "\\item Clips: {} ({:.0}\\,s of recording)", s.clip_count, s.duration_us as f64 / 1e6);
    let _ = writeln!(t, "\\item Descriptions: {}", model.descriptions.len());
    let _ = writeln!(
        t,
        "\\item Clusters: {} ({})",
        model.clusters.len(),
        latex_escape(&model.clustering)?
    );
    t.push_str("\\end{itemize}\n\n");
    for n in &model.notices {
        let _ = writeln!(t, "\\noindent\\textbf{{Note:}} {}\n", latex_escape(n)?);
    }

    t.push_str("\\section*{Clusters}\n\n");
    for c in &model.clusters {
        let name = color_name(c.cluster_id);
        let _ = writeln!(
            t,
            "\\subsection*{{\\textcolor{{{name}}}{{\\rule{{0.8em}}{{0.8em}}}} Cluster {} ({} descriptions, {:.1}\\,\\%)}}\n",
            c.cluster_id,
            c.size,
            c.fraction * 100.0
        );
        let _ = writeln!(t, "Representative description (clip {}):\n", c.representative_clip);
        let _ = writeln!(t, "\\begin{{quote}}\n{}\n\\end{{quote}}\n", latex_escape(&c.representative_text)?);
        if let Some(img) = &c.image {
            let _ = writeln!(
                t,
                "\\begin{{center}}\n\\includegraphics[width=0.6\\linewidth]{{{}}}\n\\end{{center}}\n",
                img.asset
            );
        }
        let v = &c.visual;
        if !v.prompts.is_empty() {
            let p: Result<Vec<String>, _> = v.prompts.iter().map(|p| latex_escape(p)).collect();
            let _ = writeln!(t, "Prompts: {}\n", p?.join(", "));
        }
        if !v.detections.is_empty() {
            t.push_str("\\begin{center}\n\\begin{tabular}{lrl}\n\\toprule\nLabel & Score & Box ($x_1, y_1, x_2, y_2$) \\\\\n\\midrule\n");
            for d in &v.detections {
                let [x1, y1, x2, y2] = d.bbox.coords();
                let _ = writeln!(
                    t,
                    "{} & {:.2} & {x1:.3}, {y1:.3}, {x2:.3}, {y2:.3} \\\\",
                    latex_escape(&d.label)?,
                    d.score
                );
            }
            t.push_str("\\bottomrule\n\\end{tabular}\n\\end{center}\n\n");
        }
        if !v.redactions.is_empty() {
            let _ = writeln!(t, "{} region(s) pixelated for privacy.\n", v.redactions.len());
        }
    }

    t.push_str("\\section*{Map}\n\n");
    match render_map(model) {
        Ok(map) => {
            t.push_str("\\begin{center}\n\\begin{tikzpicture}[x=0.02cm,y=-0.02cm]\n");
            let _ = writeln!(t, "\\fill[black!4] (0,0) rectangle ({MAP_WIDTH},{MAP_HEIGHT});");
            if model.track.len() > 1 {
                let pts: Vec<String> = model
                    .track
                    .iter()
                    .map(|&(lat, lon)| {
                        let (x, y) = project(&map.bounds, lat, lon);
                        format!("({x:.2},{y:.2})")
                    })
                    .collect();
                let _ = writeln!(t, "\\draw[black!40, line width=0.8pt] {};", pts.join(" -- "));
            }
            for p in &model.geo_points {
                let (x, y) = project(&map.bounds, p.lat, p.lon);
                let _ = writeln!(
                    t,
                    "\\filldraw[fill={}, draw=white] ({x:.2},{y:.2}) circle[radius=0.1cm];",
                    color_name(p.cluster_id)
                );
            }
            t.push_str("\\end{tikzpicture}\n\\end{center}\n\n");
        }
        Err(_) => t.push_str("Map omitted: no geo data.\n\n"),
    }

    t.push_str("\\section*{Cluster distribution}\n\n\\begin{center}\n\\begin{tikzpicture}[x=1cm,y=-0.6cm]\n");
    for (i, d) in model.distribution.iter().enumerate() {
        let w = d.fraction * 10.0;
        let _ = writeln!(t, "\\node[anchor=east] at (0,{i}.5) {{Cluster {}}};", d.cluster_id);
        let _ = writeln!(
            t,
            "\\fill[{}] (0.2,{i}.1) rectangle ({:.3},{i}.9);",
            color_name(d.cluster_id),
            0.2 + w
        );
        let _ = writeln!(
            t,
            "\\node[anchor=west] at ({:.3},{i}.5) {{{} ({:.1}\\,\\%)}};",
            0.3 + w,
            d.count,
            d.fraction * 100.0
        );
    }
    t.push_str("\\end{tikzpicture}\n\\end{center}\n\n");

    t.push_str("\\section*{Timeline}\n\n\\begin{center}\n\\begin{tikzpicture}[x=1cm,y=1cm]\n");
    let t0 = model.timeline.iter().map(|e| e.start_us).min().unwrap_or(0);
    let t1 = model.timeline.iter().map(|e| e.end_us).max().unwrap_or(t0 + 1).max(t0 + 1);
    let x = |us: i64| (us - t0) as f64 / (t1 - t0) as f64 * 16.0;
    for e in &model.timeline {
        let _ = writeln!(
            t,
            "\\fill[{}] ({:.3},0) rectangle ({:.3},0.8);",
            color_name(e.cluster_id),
            x(e.start_us),
            x(e.end_us)
        );
    }
    let _ = writeln!(
        t,
        "\\node[anchor=north west] at (0,0) {{0\\,s}};\n\\node[anchor=north east] at (16,0) {{{:.0}\\,s}};",
        (t1 - t0) as f64 / 1e6
    );
    t.push_str("\\end{tikzpicture}\n\\end{center}\n\n");

    if !model.metrics.is_empty() {
        t.push_str("\\section*{Evaluation}\n\n\\begin{center}\n\\begin{tabular}{lrrrr}\n\\toprule\nDomain & $n$ & ARI & NMI & FMI \\\\\n\\midrule\n");
        for m in &model.metrics {
            let _ = writeln!(
                t,
                "{} & {} & {:.3} & {:.3} & {:.3} \\\\",
                latex_escape(&m.domain)?,
                m.n,
                m.ari,
                m.nmi_arithmetic,
                m.fmi
            );
        }
        t.push_str("\\bottomrule\n\\end{tabular}\n\\end{center}\n\n");
    }

    t.push_str("\\section*{All descriptions}\n\n\\begin{longtable}{rrrrp{0.58\\linewidth}}\n\\toprule\n\\# & Clip & Time (s) & Cluster & Description \\\\\n\\midrule\n\\endhead\n");
    for d in &model.descriptions {
        let _ = writeln!(
            t,
            "{} & {} & {} & \\textcolor{{{}}}{{\\rule{{0.6em}}{{0.6em}}}}\\,{} & {} \\\\",
            d.index,
            d.clip_index,
            rel_seconds(model, d.t_us),
            color_name(d.cluster_id),
            d.cluster_id,
            latex_escape(&d.text)?
        );
    }
    t.push_str("\\bottomrule\n\\end{longtable}\n\n\\end{document}\n");
    Ok(t)
}
