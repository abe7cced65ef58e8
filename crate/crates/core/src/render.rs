//! Top-down SVG floor plans.

use std::collections::BTreeSet;
use std::fmt::Write;

use crate::data::SceneDocument;
use crate::geometry::SceneObject;
use crate::ordering::hash_str;

const WIDTH: f64 = 512.0;
const PAD: f64 = 16.0;
const LEGEND_ROW: f64 = 16.0;

/// Stable per-class fill color.
pub fn class_color(class: &str) -> String {
    let hue = hash_str(class) % 360;
    format!("hsl({hue},60%,55%)")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Floor polygon, rotated object footprints colored by class, and a legend.
/// Output depends only on the document, byte for byte.
pub fn render_svg(doc: &SceneDocument) -> String {
    let mut xs: Vec<f64> = doc.floor.iter().map(|p| p[0]).collect();
    let mut zs: Vec<f64> = doc.floor.iter().map(|p| p[1]).collect();
    let corners: Vec<[[f64; 2]; 4]> = doc
        .objects
        .iter()
        .map(|o| {
            SceneObject {
                class_id: 0,
                translation: o.t,
                size: o.b,
                rotation: o.r,
            }
            .footprint_corners()
        })
        .collect();
    for c in corners.iter().flatten() {
        xs.push(c[0]);
        zs.push(c[1]);
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (x0, x1, z0, z1) = if xs.is_empty() { (0.0, 1.0, 0.0, 1.0) } else { (min(&xs), max(&xs), min(&zs), max(&zs)) };
    let span = (x1 - x0).max(z1 - z0).max(1e-6);
    let scale = (WIDTH - 2.0 * PAD) / span;
    let plan_h = (z1 - z0) * scale + 2.0 * PAD;
    let classes: BTreeSet<&str> = doc.objects.iter().map(|o| o.class.as_str()).collect();
    let height = plan_h + classes.len() as f64 * LEGEND_ROW + if classes.is_empty() { 0.0 } else { PAD };
    let at = |p: [f64; 2]| (PAD + (p[0] - x0) * scale, PAD + (p[1] - z0) * scale);
    let px = |p: [f64; 2]| {
        let (x, y) = at(p);
        format!("{x:.2},{y:.2}")
    };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{height:.0}" viewBox="0 0 {WIDTH:.0} {height:.0}">"#
    )
    .unwrap();
    if let Some(id) = &doc.scene_id {
        writeln!(s, "  <title>{}</title>", escape(id)).unwrap();
    }
    writeln!(s, r##"  <rect x="0" y="0" width="{WIDTH:.0}" height="{height:.0}" fill="#ffffff"/>"##).unwrap();
    let floor: Vec<String> = doc.floor.iter().map(|&p| px(p)).collect();
    writeln!(s, r##"  <polygon class="floor" points="{}" fill="#eeeeee" stroke="#333333" stroke-width="2"/>"##, floor.join(" ")).unwrap();
    for (o, c) in doc.objects.iter().zip(&corners) {
        let pts: Vec<String> = c.iter().map(|&p| px(p)).collect();
        writeln!(
            s,
            r##"  <polygon class="object" data-class="{}" points="{}" fill="{}" fill-opacity="0.8" stroke="#222222" stroke-width="1"/>"##,
            escape(&o.class),
            pts.join(" "),
            class_color(&o.class)
        )
        .unwrap();
        // front edge marker: midpoint of the local +z side
        let front = [(c[2][0] + c[3][0]) / 2.0, (c[2][1] + c[3][1]) / 2.0];
        let ((ax, ay), (bx, by)) = (at([o.t[0], o.t[2]]), at(front));
        writeln!(
            s,
            r##"  <line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="#222222" stroke-width="1"/>"##
        )
        .unwrap();
    }
    for (i, c) in classes.iter().enumerate() {
        let y = plan_h + PAD / 2.0 + i as f64 * LEGEND_ROW;
        writeln!(
            s,
            r##"  <rect x="{PAD:.0}" y="{y:.2}" width="12" height="12" fill="{}" stroke="#222222"/>"##,
            class_color(c)
        )
        .unwrap();
        writeln!(
            s,
            r##"  <text x="{:.0}" y="{:.2}" font-family="sans-serif" font-size="12">{}</text>"##,
            PAD + 18.0,
            y + 10.0,
            escape(c)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}
