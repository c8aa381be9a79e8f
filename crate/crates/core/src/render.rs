//! Deterministic SVG and markdown renderers.
//!
//! The `*_svg` / `*_markdown` functions are pure; the `render_*` wrappers
//! write their output into an [`ArtifactStore`].

use std::fmt::Write as _;

use thiserror::Error;

use crate::artifacts::{Artifact, ArtifactError, ArtifactKind, ArtifactStore};
use crate::geometry::NetworkGeometry;
use crate::trips::{LinkFlowMap, OdMatrix};

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("unknown road: {0}")]
    UnknownRoad(String),
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("top_k must be at least 1")]
    InvalidTopK,
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
}

const LOW: (f64, f64, f64) = (0.0, 255.0, 0.0);
const HIGH: (f64, f64, f64) = (255.0, 0.0, 0.0);
const UNMEASURED: &str = "#bbbbbb";
const CANVAS_PX: f64 = 1000.0;

/// Color at position `t` in `[0, 1]` on the green-to-red scale.
pub fn scale_color(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let ch = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(LOW.0, HIGH.0), ch(LOW.1, HIGH.1), ch(LOW.2, HIGH.2))
}

/// Maps a flow onto the scale; a degenerate range maps to the midpoint.
pub fn flow_color(flow: u64, min: u64, max: u64) -> String {
    if max == min {
        scale_color(0.5)
    } else {
        scale_color((flow - min) as f64 / (max - min) as f64)
    }
}

pub fn xml_escape(s: &str) -> String {
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

/// Maps planar meters onto the SVG canvas (bounding box plus 5% margin, y up).
struct Canvas {
    min_x: f64,
    max_y: f64,
    mx: f64,
    my: f64,
    width: f64,
    height: f64,
}

impl Canvas {
    fn new(geom: &NetworkGeometry) -> Self {
        let (min_x, min_y, max_x, max_y) = geom.bounds();
        let (w, h) = (max_x - min_x, max_y - min_y);
        let span = w.max(h).max(1.0);
        let mx = 0.05 * if w > 0.0 { w } else { span };
        let my = 0.05 * if h > 0.0 { h } else { span };
        Self {
            min_x,
            max_y,
            mx,
            my,
            width: w + 2.0 * mx,
            height: h + 2.0 * my,
        }
    }

    fn x(&self, x: f64) -> f64 {
        x - self.min_x + self.mx
    }

    fn y(&self, y: f64) -> f64 {
        self.max_y + self.my - y
    }

    fn span(&self) -> f64 {
        self.width.max(self.height)
    }

    fn open(&self, out: &mut String, title: &str) {
        let scale = CANVAS_PX / self.span();
        out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"0 0 {:.2} {:.2}\">",
            self.width * scale,
            self.height * scale,
            self.width,
            self.height
        );
        let _ = writeln!(out, "<title>{}</title>", xml_escape(title));
        let _ = writeln!(
            out,
            "<rect x=\"0\" y=\"0\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#ffffff\"/>",
            self.width, self.height
        );
    }

    /// Polyline points for a link, shifted to the right of travel so opposing
    /// directions stay distinguishable.
    fn link_points(&self, geom: &NetworkGeometry, road: &str, shift: f64) -> String {
        let ends = &geom.links[road];
        let a = geom.nodes[&ends.from];
        let b = geom.nodes[&ends.to];
        let (x1, y1, x2, y2) = (self.x(a.x), self.y(a.y), self.x(b.x), self.y(b.y));
        let (dx, dy) = (x2 - x1, y2 - y1);
        let len = (dx * dx + dy * dy).sqrt();
        let (ox, oy) = if len > 0.0 { (-dy / len * shift, dx / len * shift) } else { (0.0, 0.0) };
        format!("{:.2},{:.2} {:.2},{:.2}", x1 + ox, y1 + oy, x2 + ox, y2 + oy)
    }
}

/// One polyline per link in road-id order, colored by flow. Links without a
/// flow entry are drawn grey and excluded from the scale.
pub fn heatmap_svg(geom: &NetworkGeometry, flows: &LinkFlowMap, title: &str) -> Result<String, RenderError> {
    if let Some(road) = flows.flows.keys().find(|r| !geom.links.contains_key(*r)) {
        return Err(RenderError::UnknownRoad(road.clone()));
    }
    let min = flows.flows.values().copied().min().unwrap_or(0);
    let max = flows.flows.values().copied().max().unwrap_or(0);
    let canvas = Canvas::new(geom);
    let stroke = 0.008 * canvas.span();
    let mut out = String::new();
    canvas.open(&mut out, title);
    out.push_str("<g id=\"links\" fill=\"none\" stroke-linecap=\"round\">\n");
    for road in geom.links.keys() {
        let points = canvas.link_points(geom, road, stroke * 0.6);
        match flows.flows.get(road) {
            Some(&f) => {
                let _ = writeln!(
                    out,
                    "<polyline data-road=\"{r}\" points=\"{points}\" stroke=\"{c}\" stroke-width=\"{stroke:.2}\"><title>{r}: {f}</title></polyline>",
                    r = xml_escape(road),
                    c = flow_color(f, min, max),
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "<polyline data-road=\"{r}\" points=\"{points}\" stroke=\"{UNMEASURED}\" stroke-width=\"{w:.2}\"/>",
                    r = xml_escape(road),
                    w = stroke * 0.5,
                );
            }
        }
    }
    out.push_str("</g>\n");
    let font = 0.025 * canvas.span();
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{font:.2}\" font-family=\"sans-serif\">{} | min {min} max {max}</text>",
        canvas.mx,
        canvas.my,
        xml_escape(&flows.window.to_string()),
    );
    out.push_str("</svg>\n");
    Ok(out)
}

/// Top-k OD pairs by count, ties broken by `(origin, dest)`.
pub fn top_od_pairs(m: &OdMatrix, top_k: usize) -> Vec<(String, String, u64)> {
    let mut pairs: Vec<(String, String, u64)> = m
        .nonzero_pairs()
        .map(|(o, d, c)| (o.to_string(), d.to_string(), c))
        .collect();
    pairs.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| (&a.0, &a.1).cmp(&(&b.0, &b.1))));
    pairs.truncate(top_k);
    pairs
}

fn md_cell(s: &str) -> String {
    s.replace('|', "\\|")
}

pub fn od_table_markdown(m: &OdMatrix, top_k: usize) -> Result<String, RenderError> {
    if top_k == 0 {
        return Err(RenderError::InvalidTopK);
    }
    let mut out = String::new();
    let _ = writeln!(out, "**Top {top_k} OD pairs, {}**", m.window);
    out.push('\n');
    out.push_str("| Origin | Destination | Trips |\n");
    out.push_str("|---|---|---:|\n");
    for (o, d, c) in top_od_pairs(m, top_k) {
        let _ = writeln!(out, "| {} | {} | {c} |", md_cell(&o), md_cell(&d));
    }
    Ok(out)
}

/// Network drawing with a labelled circle at each marked node.
pub fn map_markers_svg(geom: &NetworkGeometry, marks: &[(String, String)], title: &str) -> Result<String, RenderError> {
    if let Some((node, _)) = marks.iter().find(|(n, _)| !geom.nodes.contains_key(n)) {
        return Err(RenderError::UnknownNode(node.clone()));
    }
    let canvas = Canvas::new(geom);
    let stroke = 0.004 * canvas.span();
    let mut out = String::new();
    canvas.open(&mut out, title);
    out.push_str("<g id=\"links\" fill=\"none\" stroke=\"#888888\">\n");
    for road in geom.links.keys() {
        let _ = writeln!(
            out,
            "<polyline data-road=\"{}\" points=\"{}\" stroke-width=\"{stroke:.2}\"/>",
            xml_escape(road),
            canvas.link_points(geom, road, 0.0)
        );
    }
    out.push_str("</g>\n<g id=\"marks\">\n");
    let r = 0.02 * canvas.span();
    let font = 0.03 * canvas.span();
    for (node, label) in marks {
        let p = geom.nodes[node];
        let (cx, cy) = (canvas.x(p.x), canvas.y(p.y));
        let _ = writeln!(
            out,
            "<circle data-node=\"{n}\" cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{r:.2}\" fill=\"#d62728\" fill-opacity=\"0.8\"/>",
            n = xml_escape(node)
        );
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{font:.2}\" font-family=\"sans-serif\">{}</text>",
            cx + 1.2 * r,
            cy - 1.2 * r,
            xml_escape(label)
        );
    }
    out.push_str("</g>\n</svg>\n");
    Ok(out)
}

pub fn render_heatmap(
    store: &ArtifactStore,
    geom: &NetworkGeometry,
    flows: &LinkFlowMap,
    title: &str,
) -> Result<Artifact, RenderError> {
    let svg = heatmap_svg(geom, flows, title)?;
    Ok(store.store(ArtifactKind::SvgImage, svg.as_bytes(), title)?)
}

pub fn render_od_table(store: &ArtifactStore, m: &OdMatrix, top_k: usize) -> Result<Artifact, RenderError> {
    let md = od_table_markdown(m, top_k)?;
    let title = format!("Top {top_k} OD pairs, {}", m.window);
    Ok(store.store(ArtifactKind::MarkdownTable, md.as_bytes(), &title)?)
}

pub fn render_map_markers(
    store: &ArtifactStore,
    geom: &NetworkGeometry,
    marks: &[(String, String)],
    title: &str,
) -> Result<Artifact, RenderError> {
    let svg = map_markers_svg(geom, marks, title)?;
    Ok(store.store(ArtifactKind::SvgImage, svg.as_bytes(), title)?)
}
