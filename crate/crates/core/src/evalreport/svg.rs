//! Static SVG renderings. Every chart embeds its source table in `<desc>`.

use std::fmt::Write as _;

use super::report::{sig6, BedCell, EvalReport, SummaryRow, BED_CELL, TARGET_NAMES};

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(w: usize, h: usize, title: &str, data: &str) -> Self {
        let mut out = String::new();
        writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
        )
        .unwrap();
        writeln!(out, "<title>{}</title>", escape(title)).unwrap();
        writeln!(out, "<desc>\n{}</desc>", escape(data)).unwrap();
        writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
        writeln!(out, r#"<text x="{}" y="16" text-anchor="middle" font-size="13">{}</text>"#, w / 2, escape(title)).unwrap();
        Self { out }
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        writeln!(self.out, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{}</text>"#, escape(s)).unwrap();
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        writeln!(self.out, r#"<line x1="{x1:.1}" y1="{y1:.1}" x2="{x2:.1}" y2="{y2:.1}" stroke="{stroke}"/>"#).unwrap();
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        writeln!(self.out, r#"<rect x="{x:.1}" y="{y:.1}" width="{w:.1}" height="{h:.1}" fill="{fill}"/>"#).unwrap();
    }

    fn dot(&mut self, x: f64, y: f64, fill: &str) {
        writeln!(self.out, r#"<circle cx="{x:.1}" cy="{y:.1}" r="2" fill="{fill}" fill-opacity="0.7"/>"#).unwrap();
    }

    fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        writeln!(self.out, r#"<polyline points="{}" fill="none" stroke="{stroke}"/>"#, p.join(" ")).unwrap();
    }

    fn legend(&mut self, x: f64, y: f64, names: &[&str]) {
        for (i, n) in names.iter().enumerate() {
            let yy = y + 14.0 * i as f64;
            self.rect(x, yy - 8.0, 10.0, 10.0, PALETTE[i % PALETTE.len()]);
            self.text(x + 14.0, yy, "start", n);
        }
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

/// Linear map of `[lo, hi]` onto `[a, b]`.
fn scale(v: f64, lo: f64, hi: f64, a: f64, b: f64) -> f64 {
    if hi > lo {
        a + (v - lo) / (hi - lo) * (b - a)
    } else {
        (a + b) / 2.0
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Plot frame with min/max tick labels; returns the inner rectangle.
fn axes(c: &mut Canvas, x0: f64, y0: f64, w: f64, h: f64, yr: (f64, f64), xlabel: &str, ylabel: &str) {
    c.line(x0, y0 + h, x0 + w, y0 + h, "black");
    c.line(x0, y0, x0, y0 + h, "black");
    c.text(x0 - 4.0, y0 + h, "end", &sig6(yr.0));
    c.text(x0 - 4.0, y0 + 8.0, "end", &sig6(yr.1));
    c.text(x0 + w / 2.0, y0 + h + 28.0, "middle", xlabel);
    c.text(x0, y0 - 6.0, "middle", ylabel);
}

/// Grouped bars of mean % error with population-std whiskers.
pub fn summary_chart(rows: &[SummaryRow], data: &str) -> String {
    let (w, h) = (640.0, 340.0);
    let mut c = Canvas::new(w as usize, h as usize, "Mean absolute % error by variant", data);
    let (x0, y0, pw, ph) = (60.0, 40.0, 440.0, 250.0);
    let top = rows
        .iter()
        .flat_map(|r| r.stats.iter().map(|s| s.mean + s.std))
        .fold(0.0f64, f64::max)
        .max(1e-12);
    axes(&mut c, x0, y0, pw, ph, (0.0, top), "target", "% error");
    let group = pw / TARGET_NAMES.len() as f64;
    let bar = group * 0.8 / rows.len().max(1) as f64;
    for (t, name) in TARGET_NAMES.iter().enumerate() {
        let gx = x0 + group * t as f64 + group * 0.1;
        for (i, r) in rows.iter().enumerate() {
            let st = r.stats[t];
            let bx = gx + bar * i as f64;
            let yt = scale(st.mean, 0.0, top, y0 + ph, y0);
            c.rect(bx, yt, bar * 0.9, y0 + ph - yt, PALETTE[i % PALETTE.len()]);
            let cx = bx + bar * 0.45;
            let hi = scale(st.mean + st.std, 0.0, top, y0 + ph, y0);
            let lo = scale((st.mean - st.std).max(0.0), 0.0, top, y0 + ph, y0);
            c.line(cx, lo, cx, hi, "black");
        }
        c.text(x0 + group * (t as f64 + 0.5), y0 + ph + 14.0, "middle", name);
    }
    let names: Vec<&str> = rows.iter().map(|r| r.variant.as_str()).collect();
    c.legend(x0 + pw + 16.0, y0 + 10.0, &names);
    c.finish()
}

/// Signed % deviation of every evaluated part, one panel per target.
pub fn deviation_scatter(report: &EvalReport, data: &str) -> String {
    let (pw, ph) = (180.0, 200.0);
    let w = 60.0 + 4.0 * (pw + 50.0) + 130.0;
    let mut c = Canvas::new(w as usize, 300, "Predicted quality deviation per part", data);
    for (t, name) in TARGET_NAMES.iter().enumerate() {
        let x0 = 60.0 + t as f64 * (pw + 50.0);
        let y0 = 50.0;
        let yr = bounds(report.variants.iter().flat_map(|v| v.rows.iter().map(move |r| r.deviations()[t])));
        let yr = if yr.0 <= yr.1 { yr } else { (0.0, 0.0) };
        axes(&mut c, x0, y0, pw, ph, yr, &format!("{name}: part"), "% deviation");
        let zero = scale(0.0, yr.0, yr.1, y0 + ph, y0);
        if (y0..=y0 + ph).contains(&zero) {
            c.line(x0, zero, x0 + pw, zero, "#bbbbbb");
        }
        for (i, v) in report.variants.iter().enumerate() {
            let n = v.rows.len().max(2) - 1;
            for (j, r) in v.rows.iter().enumerate() {
                let x = x0 + pw * j as f64 / n as f64;
                let y = scale(r.deviations()[t], yr.0, yr.1, y0 + ph, y0);
                c.dot(x, y, PALETTE[i % PALETTE.len()]);
            }
        }
    }
    let names: Vec<&str> = report.variants.iter().map(|v| v.variant.as_str()).collect();
    c.legend(w - 125.0, 60.0, &names);
    c.finish()
}

fn heat(v: f64, lo: f64, hi: f64) -> String {
    let t = scale(v, lo, hi, 0.0, 1.0).clamp(0.0, 1.0);
    let r = (40.0 + 215.0 * t) as u8;
    let b = (255.0 - 215.0 * t) as u8;
    format!("#{r:02x}50{b:02x}")
}

/// Mean predicted density per bed cell, one panel per variant.
pub fn bed_heatmap(report: &EvalReport, cells: &[BedCell], data: &str) -> String {
    let cols = report.bed[0].div_ceil(BED_CELL).max(1);
    let rows = report.bed[1].div_ceil(BED_CELL).max(1);
    let px = (200.0 / cols as f64).min(200.0 / rows as f64);
    let (pw, ph) = (px * cols as f64, px * rows as f64);
    let n = report.variants.len();
    let w = 40.0 + n as f64 * (pw + 40.0);
    let mut c = Canvas::new(w as usize, (ph + 110.0) as usize, "Predicted density by bed location", data);
    let (lo, hi) = bounds(cells.iter().map(|c| c.pred_density));
    for (i, v) in report.variants.iter().enumerate() {
        let x0 = 40.0 + i as f64 * (pw + 40.0);
        let y0 = 50.0;
        c.rect(x0, y0, pw, ph, "#eeeeee");
        for cell in cells.iter().filter(|cell| cell.variant == v.variant) {
            c.rect(
                x0 + cell.col as f64 * px,
                y0 + cell.row as f64 * px,
                px,
                px,
                &heat(cell.pred_density, lo, hi),
            );
        }
        c.text(x0 + pw / 2.0, y0 + ph + 16.0, "middle", &v.variant);
    }
    if lo <= hi {
        c.text(40.0, ph + 96.0, "start", &format!("blue {} to red {} g/cm3", sig6(lo), sig6(hi)));
    }
    c.finish()
}

/// One polyline per named series over its index.
pub fn line_chart(title: &str, series: &[(String, Vec<f64>)], xlabel: &str, ylabel: &str, data: &str) -> String {
    let mut c = Canvas::new(640, 340, title, data);
    let (x0, y0, pw, ph) = (60.0, 40.0, 440.0, 250.0);
    let yr = bounds(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let yr = if yr.0 <= yr.1 { yr } else { (0.0, 1.0) };
    axes(&mut c, x0, y0, pw, ph, yr, xlabel, ylabel);
    let longest = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2) - 1;
    for (i, (_, v)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = v
            .iter()
            .enumerate()
            .map(|(j, &y)| (x0 + pw * j as f64 / longest as f64, scale(y, yr.0, yr.1, y0 + ph, y0)))
            .collect();
        c.polyline(&pts, PALETTE[i % PALETTE.len()]);
    }
    let names: Vec<&str> = series.iter().map(|(n, _)| n.as_str()).collect();
    c.legend(x0 + pw + 16.0, y0 + 10.0, &names);
    c.finish()
}

pub fn scatter_chart(title: &str, points: &[(f64, f64)], xlabel: &str, ylabel: &str, data: &str) -> String {
    let mut c = Canvas::new(480, 360, title, data);
    let (x0, y0, pw, ph) = (70.0, 40.0, 380.0, 270.0);
    let xr = bounds(points.iter().map(|p| p.0));
    let yr = bounds(points.iter().map(|p| p.1));
    let yr = if yr.0 <= yr.1 { yr } else { (0.0, 1.0) };
    axes(&mut c, x0, y0, pw, ph, yr, xlabel, ylabel);
    if xr.0 <= xr.1 {
        c.text(x0, y0 + ph + 14.0, "start", &sig6(xr.0));
        c.text(x0 + pw, y0 + ph + 14.0, "end", &sig6(xr.1));
    }
    for &(x, y) in points {
        c.dot(scale(x, xr.0, xr.1, x0, x0 + pw), scale(y, yr.0, yr.1, y0 + ph, y0), PALETTE[0]);
    }
    c.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_well_formed() {
        let s = line_chart("a<b", &[("x".into(), vec![1.0, 2.0, 1.5])], "epoch", "adp", "e,v\n0,1\n");
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("a&lt;b"));
        assert!(s.contains("<polyline"));
        let p = scatter_chart("r", &[(1.0, 2.0), (2.0, 3.0)], "x", "y", "");
        assert_eq!(p.matches("<circle").count(), 2);
    }
}
