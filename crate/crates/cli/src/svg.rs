//! Minimal SVG output: rectangles, polygons, paths and text.

use std::fmt::Write;

use sievelab_core::mesh::{jump_of, Field};

pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"/>"#
        );
    }

    pub fn polygon(&mut self, points: &[[f64; 2]], fill: &str) {
        let pts: Vec<String> = points.iter().map(|p| format!("{:.2},{:.2}", p[0], p[1])).collect();
        let _ = writeln!(
            self.body,
            r#"<polygon points="{}" fill="{fill}" stroke="{fill}" stroke-width="0.3"/>"#,
            pts.join(" ")
        );
    }

    pub fn path(&mut self, points: &[[f64; 2]], stroke: &str) {
        if points.is_empty() {
            return;
        }
        let mut d = format!("M{:.2},{:.2}", points[0][0], points[0][1]);
        for p in &points[1..] {
            let _ = write!(d, " L{:.2},{:.2}", p[0], p[1]);
        }
        let _ = writeln!(
            self.body,
            r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="1.5"/>"#
        );
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, s: &str) {
        let s = s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif">{s}</text>"#
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn color(t: f64) -> String {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * (STOPS.len() - 1) as f64;
    let k = (t.floor() as usize).min(STOPS.len() - 2);
    let f = t - k as f64;
    let c: Vec<u8> = (0..3)
        .map(|i| (STOPS[k][i] + f * (STOPS[k + 1][i] - STOPS[k][i])).round() as u8)
        .collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 50.0;

/// Polyline plot; `log_y` plots `log10` of positive values and skips the rest.
pub fn line_plot(title: &str, xlabel: &str, series: &[(&str, Vec<(f64, f64)>)], log_y: bool) -> String {
    let mut svg = Svg::new(W, H);
    let tr = |v: f64| if log_y { v.log10() } else { v };
    let pts: Vec<Vec<[f64; 2]>> = series
        .iter()
        .map(|(_, s)| {
            s.iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite() && (!log_y || *y > 0.0))
                .map(|&(x, y)| [x, tr(y)])
                .collect()
        })
        .collect();
    let all: Vec<[f64; 2]> = pts.iter().flatten().copied().collect();
    svg.text(MARGIN, 24.0, 14.0, title);
    if all.is_empty() {
        svg.text(MARGIN, H / 2.0, 12.0, "no finite data");
        return svg.finish();
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in &all {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let map = |p: [f64; 2]| {
        [
            MARGIN + (p[0] - x0) / (x1 - x0) * (W - 2.0 * MARGIN),
            H - MARGIN - (p[1] - y0) / (y1 - y0) * (H - 2.0 * MARGIN),
        ]
    };
    svg.path(&[[MARGIN, MARGIN], [MARGIN, H - MARGIN], [W - MARGIN, H - MARGIN]], "black");
    let fmt = |v: f64| if log_y { format!("1e{v:.1}") } else { format!("{v:.3e}") };
    svg.text(4.0, H - MARGIN, 10.0, &fmt(y0));
    svg.text(4.0, MARGIN + 4.0, 10.0, &fmt(y1));
    svg.text(MARGIN, H - MARGIN + 16.0, 10.0, &format!("{x0}"));
    svg.text(W - MARGIN - 10.0, H - MARGIN + 16.0, 10.0, &format!("{x1}"));
    svg.text(W / 2.0, H - 12.0, 12.0, xlabel);
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    for (k, ((name, _), p)) in series.iter().zip(&pts).enumerate() {
        let c = COLORS[k % COLORS.len()];
        svg.path(&p.iter().map(|&q| map(q)).collect::<Vec<_>>(), c);
        for &q in p {
            let m = map(q);
            svg.rect(m[0] - 2.5, m[1] - 2.5, 5.0, 5.0, c);
        }
        svg.rect(W - 170.0, 36.0 + 16.0 * k as f64, 10.0, 10.0, c);
        svg.text(W - 154.0, 45.0 + 16.0 * k as f64, 11.0, name);
    }
    svg.finish()
}

const MAX_POLYGONS: usize = 20_000;
const RASTER: usize = 160;

/// Per-triangle fill colored by the nodal average. Fine meshes are binned
/// onto a raster of rectangles by centroid.
pub fn heatmap(title: &str, field: &Field) -> String {
    let space = field.space();
    let mesh = space.mesh();
    let tris = space.active_triangles();
    let mut svg = Svg::new(W, H);
    svg.text(MARGIN, 24.0, 14.0, title);
    let values: Vec<f64> = tris
        .iter()
        .map(|&t| mesh.triangles()[t].iter().map(|&v| field.node_value(v).unwrap_or(0.0)).sum::<f64>() / 3.0)
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in mesh.nodes() {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let (vmin, vmax) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (vmax - vmin).max(1e-300);
    let scale = ((W - 2.0 * MARGIN) / (x1 - x0)).min((H - 2.0 * MARGIN) / (y1 - y0));
    let map = |p: [f64; 2]| [MARGIN + (p[0] - x0) * scale, H - MARGIN - (p[1] - y0) * scale];
    if tris.len() <= MAX_POLYGONS {
        for (&t, v) in tris.iter().zip(&values) {
            let pts: Vec<[f64; 2]> = mesh.triangles()[t].iter().map(|&n| map(mesh.nodes()[n])).collect();
            svg.polygon(&pts, &color((v - vmin) / span));
        }
    } else {
        let (nx, ny) = (RASTER, ((RASTER as f64) * (y1 - y0) / (x1 - x0)).ceil().max(1.0) as usize);
        let mut sum = vec![0.0; nx * ny];
        let mut count = vec![0usize; nx * ny];
        for (&t, v) in tris.iter().zip(&values) {
            let c = mesh.centroid(t);
            let i = (((c[0] - x0) / (x1 - x0) * nx as f64) as usize).min(nx - 1);
            let j = (((c[1] - y0) / (y1 - y0) * ny as f64) as usize).min(ny - 1);
            sum[j * nx + i] += v;
            count[j * nx + i] += 1;
        }
        let (dx, dy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
        for j in 0..ny {
            for i in 0..nx {
                let k = j * nx + i;
                if count[k] > 0 {
                    let p = map([x0 + i as f64 * dx, y0 + (j + 1) as f64 * dy]);
                    let c = color((sum[k] / count[k] as f64 - vmin) / span);
                    svg.rect(p[0], p[1], dx * scale + 0.3, dy * scale + 0.3, &c);
                }
            }
        }
    }
    svg.text(MARGIN, H - 16.0, 11.0, &format!("range [{vmin:.4e}, {vmax:.4e}]"));
    svg.finish()
}

/// Nodewise jump magnitude along the interface arc length.
pub fn jump_profile(title: &str, field: &Field) -> String {
    let mesh = field.space().mesh();
    let jumps = jump_of(field);
    let mut pts = Vec::with_capacity(2 * jumps.len());
    for (e, j) in mesh.edges().iter().zip(&jumps) {
        pts.push((e.arc[0], j[0]));
        pts.push((e.arc[1], j[1]));
    }
    line_plot(title, "arc length", &[("|[u]|", pts)], false)
}
