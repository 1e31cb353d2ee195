//! Deterministic SVG rendering of disk and flow layouts.
//!
//! Output depends only on the layout and the style. Coordinates are printed
//! with three decimals and elements are emitted in layout order, so equal
//! inputs give byte-identical documents.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use nftdisk_core::flowlayout::{Anchor, Endpoint, LineStyle, SegmentKind};
use nftdisk_core::{DiskLayout, FlowLayout, StackedSeries, TxStatus};

/// Categorical palette for ribbons and address colour keys.
const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f",
    "#bab0ac",
];
const BORDER_COLOR: &str = "#888888";

#[derive(Debug, Clone, PartialEq)]
pub struct SvgStyle {
    /// Width and height of the disk view in pixels.
    pub disk_size: f64,
    pub sale_color: String,
    pub transfer_color: String,
    pub inner_path_color: String,
    pub background_color: String,
    /// Horizontal distance between flow slots.
    pub slot_width: f64,
    pub lane_height: f64,
    pub ribbon_gap: f64,
    pub stack_height: f64,
}

impl Default for SvgStyle {
    fn default() -> Self {
        SvgStyle {
            disk_size: 800.0,
            sale_color: "#d62728".into(),
            transfer_color: "#1f77b4".into(),
            inner_path_color: "#7f3c8d".into(),
            background_color: "#2ca02c".into(),
            slot_width: 40.0,
            lane_height: 8.0,
            ribbon_gap: 16.0,
            stack_height: 120.0,
        }
    }
}

fn color(key: u32) -> &'static str {
    PALETTE[key as usize % PALETTE.len()]
}

struct Polar {
    center: f64,
    scale: f64,
}

impl Polar {
    fn point(&self, r: f64, angle: f64) -> (f64, f64) {
        (self.center + self.scale * r * angle.cos(), self.center - self.scale * r * angle.sin())
    }

    fn xy(&self, p: [f64; 2]) -> (f64, f64) {
        (self.center + self.scale * p[0], self.center - self.scale * p[1])
    }
}

fn annulus(p: &Polar, r_lo: f64, r_hi: f64) -> String {
    let mut d = String::new();
    for r in [r_hi, r_lo] {
        let (rr, c) = (p.scale * r, p.center);
        let _ = write!(
            d,
            "M{:.3},{:.3}A{rr:.3},{rr:.3} 0 1 0 {:.3},{:.3}A{rr:.3},{rr:.3} 0 1 0 {:.3},{:.3}Z",
            c + rr,
            c,
            c - rr,
            c,
            c + rr,
            c
        );
    }
    d
}

pub fn render_disk_svg(layout: &DiskLayout, style: &SvgStyle) -> String {
    let size = style.disk_size;
    let p = Polar { center: size / 2.0, scale: size / 2.0 - 10.0 };
    let cfg = &layout.config;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0}" height="{size:.0}" viewBox="0 0 {size:.0} {size:.0}" data-collection="{}">"#,
        escape(&layout.collection_id)
    );
    let _ = writeln!(out, r#"<g class="background">"#);
    for band in &layout.background {
        let _ = writeln!(
            out,
            r#"<path class="bg-band" d="{}" fill="{}" fill-rule="evenodd" fill-opacity="{:.3}" data-start="{}" data-end="{}"/>"#,
            annulus(&p, band.r_lo, band.r_hi),
            style.background_color,
            0.05 + 0.45 * band.intensity,
            band.start,
            band.end
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g class="lifelines">"#);
    for l in &layout.lifelines {
        let (x1, y1) = p.point(l.r_first, l.angle);
        let (x2, y2) = p.point(l.r_last, l.angle);
        let _ = writeln!(
            out,
            r#"<line class="lifeline" x1="{x1:.3}" y1="{y1:.3}" x2="{x2:.3}" y2="{y2:.3}" stroke="{BORDER_COLOR}" data-address="{}"/>"#,
            l.address
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g class="arcs" fill="none">"#);
    for arc in &layout.arcs {
        let (x0, y0) = p.point(arc.radius, arc.angle_start);
        let (x1, y1) = p.point(arc.radius, arc.angle_start + arc.span);
        let rr = p.scale * arc.radius;
        let (class, stroke) = match arc.style {
            TxStatus::Sale => ("arc-sale", &style.sale_color),
            TxStatus::Transfer => ("arc-transfer", &style.transfer_color),
        };
        let large = u8::from(arc.span > PI);
        let _ = writeln!(
            out,
            r#"<path class="{class}" d="M{x0:.3},{y0:.3}A{rr:.3},{rr:.3} 0 {large} 0 {x1:.3},{y1:.3}" stroke="{stroke}" data-tx="{}"/>"#,
            arc.tx_index
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(
        out,
        r#"<circle class="inner-circle" cx="{c:.3}" cy="{c:.3}" r="{:.3}" fill="none" stroke="{BORDER_COLOR}"/>"#,
        p.scale * cfg.inner_circle,
        c = p.center
    );
    let _ = writeln!(out, r#"<g class="inner-paths" fill="none">"#);
    for ip in &layout.inner_paths {
        let (x0, y0) = p.xy(ip.start);
        let (cx, cy) = p.xy(ip.control);
        let (x1, y1) = p.xy(ip.end);
        let _ = writeln!(
            out,
            r#"<path class="inner-path" d="M{x0:.3},{y0:.3}Q{cx:.3},{cy:.3} {x1:.3},{y1:.3}" stroke="{}" data-a="{}" data-b="{}" data-score="{:.6}" data-apex-radius="{:.6}"/>"#,
            style.inner_path_color, ip.a, ip.b, ip.score, ip.apex_radius
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g class="nodes">"#);
    for node in &layout.nodes {
        let (x, y) = p.point(cfg.ring_inner, node.angle);
        let _ = writeln!(
            out,
            r#"<circle class="node" cx="{x:.3}" cy="{y:.3}" r="3" fill="{BORDER_COLOR}" data-address="{}"><title>{}</title></circle>"#,
            node.index,
            node.address.to_hex()
        );
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

struct FlowGeometry {
    slot_width: f64,
    lane_height: f64,
    margin: f64,
    top_border: f64,
    bottom_border: f64,
    ribbon_top: Vec<f64>,
    ribbon_of: Vec<(nftdisk_core::AddressId, usize)>,
}

impl FlowGeometry {
    fn x(&self, slot: usize) -> f64 {
        self.margin + self.slot_width * slot as f64
    }

    fn y(&self, end: &Endpoint) -> f64 {
        match end.anchor {
            Anchor::TopBorder => self.top_border,
            Anchor::BottomBorder => self.bottom_border,
            Anchor::Address => {
                let r = self
                    .ribbon_of
                    .iter()
                    .find(|(a, _)| Some(*a) == end.address)
                    .map(|(_, r)| *r)
                    .expect("endpoint address has a ribbon");
                self.ribbon_top[r] + (end.lane.unwrap_or(0) as f64 + 0.5) * self.lane_height
            }
        }
    }
}

/// Renders the group's stacked holdings above the detail flow chart.
pub fn render_flow_svg(series: &StackedSeries, layout: &FlowLayout, style: &SvgStyle) -> String {
    let margin = 20.0;
    let slots = layout.slots.len();
    let width = 2.0 * margin + style.slot_width * slots.saturating_sub(1) as f64;

    // Stacked area panel.
    let stack_top = margin;
    let stack_bottom = stack_top + style.stack_height;
    let events = series.events.len();
    let peak = series.totals.iter().copied().max().unwrap_or(0).max(1) as f64;
    let sx = |e: usize| margin + (width - 2.0 * margin) * if events > 1 { e as f64 / (events - 1) as f64 } else { 0.5 };
    let sy = |v: u32| stack_bottom - style.stack_height * f64::from(v) / peak;

    // Detail panel.
    let top_border = stack_bottom + 2.0 * margin;
    let mut ribbon_top = Vec::with_capacity(layout.ribbons.len());
    let mut y = top_border + style.ribbon_gap;
    for r in &layout.ribbons {
        ribbon_top.push(y);
        y += f64::from(r.max_height.max(1)) * style.lane_height + style.ribbon_gap;
    }
    let geo = FlowGeometry {
        slot_width: style.slot_width,
        lane_height: style.lane_height,
        margin,
        top_border,
        bottom_border: y,
        ribbon_top,
        ribbon_of: layout.ribbons.iter().enumerate().map(|(i, r)| (r.address, i)).collect(),
    };
    let height = geo.bottom_border + margin;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );

    let gradients: BTreeSet<(Option<u32>, Option<u32>)> = layout
        .paths
        .iter()
        .flat_map(|p| &p.segments)
        .filter(|s| s.fill.from != s.fill.to)
        .map(|s| (s.fill.from, s.fill.to))
        .collect();
    let gradient_id = |from: Option<u32>, to: Option<u32>| {
        let key = |k: Option<u32>| k.map_or_else(|| "border".to_string(), |k| k.to_string());
        format!("grad-{}-{}", key(from), key(to))
    };
    let stop = |k: Option<u32>| k.map_or(BORDER_COLOR, color);
    out.push_str("<defs>\n");
    for (from, to) in &gradients {
        let _ = writeln!(
            out,
            r#"<linearGradient id="{}" x1="0" y1="0" x2="1" y2="0"><stop offset="0" stop-color="{}"/><stop offset="1" stop-color="{}"/></linearGradient>"#,
            gradient_id(*from, *to),
            stop(*from),
            stop(*to)
        );
    }
    out.push_str("</defs>\n");

    let _ = writeln!(out, r#"<g class="stack">"#);
    let mut below = vec![0u32; events];
    for (a, heights) in series.addresses.iter().zip(&series.heights) {
        let above: Vec<u32> = below.iter().zip(heights).map(|(b, h)| b + h).collect();
        let mut d = String::new();
        for (e, h) in above.iter().enumerate() {
            let _ = write!(d, "{}{:.3},{:.3}", if e == 0 { 'M' } else { 'L' }, sx(e), sy(*h));
        }
        for e in (0..events).rev() {
            let _ = write!(d, "L{:.3},{:.3}", sx(e), sy(below[e]));
        }
        if events > 0 {
            d.push('Z');
        }
        let key = layout.ribbons.iter().find(|r| r.address == *a).map_or(0, |r| r.color_key);
        let _ = writeln!(out, r#"<path class="stack-area" d="{d}" fill="{}" data-address="{a}"/>"#, color(key));
        below = above;
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(
        out,
        r#"<line class="border border-top" x1="{m:.3}" y1="{t:.3}" x2="{w:.3}" y2="{t:.3}" stroke="{BORDER_COLOR}"/>"#,
        m = margin,
        t = geo.top_border,
        w = width - margin
    );
    let _ = writeln!(
        out,
        r#"<line class="border border-bottom" x1="{m:.3}" y1="{b:.3}" x2="{w:.3}" y2="{b:.3}" stroke="{BORDER_COLOR}"/>"#,
        m = margin,
        b = geo.bottom_border,
        w = width - margin
    );

    let _ = writeln!(out, r#"<g class="ribbons">"#);
    for (r, ribbon) in layout.ribbons.iter().enumerate() {
        let top = geo.ribbon_top[r];
        let mut d = String::new();
        for (s, _) in ribbon.heights.iter().enumerate() {
            let _ = write!(d, "{}{:.3},{top:.3}", if s == 0 { 'M' } else { 'L' }, geo.x(s));
        }
        for (s, h) in ribbon.heights.iter().enumerate().rev() {
            let _ = write!(d, "L{:.3},{:.3}", geo.x(s), top + f64::from(*h) * geo.lane_height);
        }
        d.push('Z');
        let _ = writeln!(
            out,
            r#"<path class="ribbon" d="{d}" fill="{}" fill-opacity="0.35" data-address="{}" data-y-slot="{}"/>"#,
            color(ribbon.color_key),
            ribbon.address,
            ribbon.y_slot
        );
    }
    let _ = writeln!(out, "</g>");

    let _ = writeln!(out, r#"<g class="nft-paths" fill="none">"#);
    for path in &layout.paths {
        let _ = writeln!(out, r#"<g class="nft-path" data-token="{}">"#, path.token_id);
        for seg in &path.segments {
            let (x0, y0) = (geo.x(seg.from.slot), geo.y(&seg.from));
            let (x1, y1) = (geo.x(seg.to.slot), geo.y(&seg.to));
            let xm = (x0 + x1) / 2.0;
            let stroke = if seg.fill.from == seg.fill.to {
                stop(seg.fill.from).to_string()
            } else {
                format!("url(#{})", gradient_id(seg.fill.from, seg.fill.to))
            };
            let dash = match seg.style {
                LineStyle::Dotted => r#" stroke-dasharray="2 3""#,
                LineStyle::Solid => "",
            };
            let _ = writeln!(
                out,
                r#"<path class="nft-segment {}" d="M{x0:.3},{y0:.3}C{xm:.3},{y0:.3} {xm:.3},{y1:.3} {x1:.3},{y1:.3}" stroke="{stroke}"{dash}/>"#,
                kind_class(seg.kind)
            );
        }
        let _ = writeln!(out, "</g>");
    }
    let _ = writeln!(out, "</g>");
    out.push_str("</svg>\n");
    out
}

fn kind_class(kind: SegmentKind) -> &'static str {
    match kind {
        SegmentKind::Hold => "hold",
        SegmentKind::SaleHop => "sale-hop",
        SegmentKind::TransferHop => "transfer-hop",
        SegmentKind::MintEntry => "mint-entry",
        SegmentKind::ExternalEntry => "external-entry",
        SegmentKind::ExternalExit => "external-exit",
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
