//! Results tables, confusion-matrix grids, FID bar charts and heatmap images.
//!
//! Renderers only format stored values; nothing is recomputed here.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use image::{ImageBuffer, Rgb};
use serde::{Deserialize, Serialize};

use crate::classifier::{ConfusionMatrix, CvResult};
use crate::explain::Heatmap;
use crate::fid::FidResult;
use crate::pixels::Pixels;
use crate::Error;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub model_type: String,
    pub gan_used: bool,
    /// Fractions in [0, 1].
    pub mean_test_accuracy: f64,
    pub std_test_accuracy: f64,
    pub best_accuracy: f64,
    pub mean_loss: f64,
    pub confusions: Vec<ConfusionMatrix>,
    pub config: serde_json::Value,
    pub run_hash: String,
}

impl ExperimentRecord {
    pub fn from_cv(model_type: impl Into<String>, cv: &CvResult, run_hash: impl Into<String>) -> Result<Self, Error> {
        Ok(ExperimentRecord {
            model_type: model_type.into(),
            gan_used: cv.gan_used,
            mean_test_accuracy: cv.mean_test_accuracy,
            std_test_accuracy: cv.std_test_accuracy,
            best_accuracy: cv.best_accuracy,
            mean_loss: cv.mean_loss,
            confusions: cv.folds.iter().map(|f| f.confusion.clone()).collect(),
            config: serde_json::to_value(&cv.config)?,
            run_hash: run_hash.into(),
        })
    }
}

/// Fixed-point with half-away-from-zero rounding. The nudge keeps values like
/// 90.375, which are not exact in binary, from rounding down.
pub fn fixed(v: f64, decimals: u32) -> String {
    let p = 10f64.powi(decimals as i32);
    let nudged = v * p + 1e-9 * v.signum() * p.max(1.0);
    let r = nudged.round() / p;
    let r = if r == 0.0 { 0.0 } else { r };
    format!("{r:.prec$}", prec = decimals as usize)
}

pub fn percent(v: f64) -> String {
    fixed(v * 100.0, 2)
}

pub const TABLE_HEADER: [&str; 5] = [
    "Model Type",
    "GAN Images",
    "Mean Test Accuracy / %",
    "Best Accuracy Model / %",
    "Mean Loss",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<[String; 5]>,
}

impl ResultsTable {
    pub fn to_csv(&self) -> Result<String, Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(TABLE_HEADER)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Encode(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Encode(e.to_string()))
    }

    /// Columns padded to a common width and separated by ` | `.
    /// The model type is printed once per group.
    pub fn to_text(&self) -> String {
        let len = |s: &str| s.chars().count();
        let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| len(h)).collect();
        for r in &self.rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(len(c));
            }
        }
        let line = |cells: Vec<&str>| {
            let padded: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, &w)| format!("{c}{}", " ".repeat(w - len(c))))
                .collect();
            padded.join(" | ").trim_end().to_string()
        };
        let mut out = line(TABLE_HEADER.to_vec());
        out.push('\n');
        out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("-|-"));
        out.push('\n');
        let mut prev: Option<&str> = None;
        for r in &self.rows {
            let mut cells: Vec<&str> = r.iter().map(String::as_str).collect();
            // later rows of a group leave the model type blank
            if prev == Some(cells[0]) {
                cells[0] = "";
            } else {
                prev = Some(&r[0]);
            }
            out.push_str(&line(cells));
            out.push('\n');
        }
        out
    }
}

/// One row per record, grouped by model type in order of first appearance.
pub fn results_table(records: &[ExperimentRecord]) -> Result<ResultsTable, Error> {
    if records.is_empty() {
        return Err(Error::InvalidInput("no experiment records".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.model_type.as_str()) {
            order.push(&r.model_type);
        }
    }
    let mut rows = Vec::with_capacity(records.len());
    for ty in order {
        for r in records.iter().filter(|r| r.model_type == ty) {
            rows.push([
                r.model_type.clone(),
                if r.gan_used { "✓" } else { "✗" }.to_string(),
                format!("{} ± {}", percent(r.mean_test_accuracy), percent(r.std_test_accuracy)),
                percent(r.best_accuracy),
                fixed(r.mean_loss, 2),
            ]);
        }
    }
    Ok(ResultsTable { rows })
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One annotated matrix per panel, laid out in a row. Rows are true classes.
pub fn render_confusions(panels: &[(String, &ConfusionMatrix)]) -> String {
    const CELL: usize = 56;
    const MARGIN: usize = 90;
    let c = panels.first().map_or(0, |(_, m)| m.classes.len());
    let panel_w = MARGIN + c * CELL + 20;
    let panel_h = MARGIN + c * CELL + 40;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" font-family="sans-serif" font-size="12">"#,
        panel_w * panels.len().max(1),
        panel_h
    );
    for (p, (title, m)) in panels.iter().enumerate() {
        let ox = p * panel_w;
        let max = m.counts.iter().flatten().copied().max().unwrap_or(0).max(1);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" font-weight="bold">{} (n={})</text>"#,
            ox + 10,
            esc(title),
            m.total()
        );
        for (i, row) in m.counts.iter().enumerate() {
            let name = m.classes.classes()[i].as_str();
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{name}</text>"#,
                ox + MARGIN - 6,
                MARGIN + i * CELL + CELL / 2 + 4
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{name}</text>"#,
                ox + MARGIN + i * CELL + CELL / 2,
                MARGIN - 8
            );
            for (j, &n) in row.iter().enumerate() {
                let shade = 255 - (n * 200 / max) as u32;
                let (x, y) = (ox + MARGIN + j * CELL, MARGIN + i * CELL);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="rgb({shade},{shade},255)" stroke="black"/>"#
                );
                let _ = writeln!(
                    s,
                    r#"<text x="{}" y="{}" text-anchor="middle">{n}</text>"#,
                    x + CELL / 2,
                    y + CELL / 2 + 4
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">true (rows) / predicted (columns)</text>"#,
            ox + 10,
            MARGIN + c * CELL + 24
        );
    }
    s.push_str("</svg>\n");
    s
}

const BAR_COLOURS: [&str; 6] = ["#4c72b0", "#dd8452", "#c44e52", "#55a868", "#8172b3", "#937860"];

/// Grouped bars: one group per class, one bar per backend, height = FID.
pub fn render_fid_chart(fid: &FidResult) -> String {
    let classes: Vec<String> = {
        let mut v: Vec<String> = Vec::new();
        for r in &fid.rows {
            if !v.contains(&r.class.to_string()) {
                v.push(r.class.to_string());
            }
        }
        v
    };
    let backends: Vec<String> = {
        let mut v: Vec<String> = fid.rows.iter().map(|r| r.backend.clone()).collect();
        v.sort();
        v.dedup();
        v
    };
    let max = fid.rows.iter().map(|r| r.fid).fold(0.0f64, f64::max).max(1e-12);
    let (bar_w, gap, plot_h, left, top) = (28.0, 30.0, 300.0, 60.0, 30.0);
    let group_w = bar_w * backends.len() as f64 + gap;
    let width = left + group_w * classes.len() as f64 + 160.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{}" font-family="sans-serif" font-size="12">"#,
        top + plot_h + 50.0
    );
    let _ = writeln!(s, r#"<text x="10" y="18">FID ({})</text>"#, esc(&fid.extractor));
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        top + plot_h,
        width - 150.0,
        top + plot_h
    );
    for (ci, class) in classes.iter().enumerate() {
        let gx = left + gap / 2.0 + ci as f64 * group_w;
        for (bi, backend) in backends.iter().enumerate() {
            let Some(row) = fid.rows.iter().find(|r| &r.class.to_string() == class && &r.backend == backend) else {
                continue;
            };
            let h = row.fid / max * plot_h;
            let _ = writeln!(
                s,
                r#"<rect class="bar" data-class="{class}" data-backend="{}" data-fid="{}" x="{:.2}" y="{:.2}" width="{bar_w}" height="{:.2}" fill="{}"/>"#,
                esc(backend),
                row.fid,
                gx + bi as f64 * bar_w,
                top + plot_h - h,
                h,
                BAR_COLOURS[bi % BAR_COLOURS.len()]
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{class}</text>"#,
            gx + bar_w * backends.len() as f64 / 2.0,
            top + plot_h + 18.0
        );
    }
    for (bi, backend) in backends.iter().enumerate() {
        let y = top + 10.0 + bi as f64 * 18.0;
        let x = width - 140.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            y - 10.0,
            BAR_COLOURS[bi % BAR_COLOURS.len()],
            x + 18.0,
            y,
            esc(backend)
        );
    }
    s.push_str("</svg>\n");
    s
}

const VIRIDIS: [[f32; 3]; 9] = [
    [68.0, 1.0, 84.0],
    [71.0, 44.0, 122.0],
    [59.0, 81.0, 139.0],
    [44.0, 113.0, 142.0],
    [33.0, 144.0, 141.0],
    [39.0, 173.0, 129.0],
    [92.0, 200.0, 99.0],
    [170.0, 220.0, 50.0],
    [253.0, 231.0, 37.0],
];

/// Piecewise-linear viridis-like colour for `t` in [0, 1].
pub fn viridis(t: f32) -> [f32; 3] {
    let t = t.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f32;
    let i = (t.floor() as usize).min(VIRIDIS.len() - 2);
    let f = t - i as f32;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f, a[2] + (b[2] - a[2]) * f]
}

/// Colour-mapped heatmap, optionally blended over `base` with weight `alpha` for the map.
pub fn heatmap_image(map: &Heatmap, base: Option<(&Pixels, f32)>) -> Result<ImageBuffer<Rgb<u8>, Vec<u8>>, Error> {
    let mut px = Pixels::filled(map.height, map.width, [0.0; 3]);
    let base = match base {
        Some((b, a)) => {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::InvalidInput(format!("overlay alpha {a} outside [0, 1]")));
            }
            Some((b.resize(map.height, map.width), a))
        }
        None => None,
    };
    for y in 0..map.height {
        for x in 0..map.width {
            let c = viridis(map.get(y, x));
            for (k, &v) in c.iter().enumerate() {
                let out = match &base {
                    Some((b, a)) => a * v + (1.0 - a) * b.get(y, x, k),
                    None => v,
                };
                px.set(y, x, k, out);
            }
        }
    }
    Ok(px.to_rgb8())
}

pub fn heatmap_png(map: &Heatmap, base: Option<(&Pixels, f32)>) -> Result<Vec<u8>, Error> {
    let img = heatmap_image(map, base)?;
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, image::ImageFormat::Png)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}

/// FID rows as a `{class: {backend: fid}}` map for JSON consumers.
pub fn fid_matrix(fid: &FidResult) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut m: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &fid.rows {
        m.entry(r.class.to_string()).or_default().insert(r.backend.clone(), r.fid);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_away_from_zero() {
        assert_eq!(fixed(90.375, 2), "90.38");
        assert_eq!(fixed(94.375, 2), "94.38");
        assert_eq!(fixed(0.125, 2), "0.13");
        assert_eq!(fixed(-0.125, 2), "-0.13");
        assert_eq!(fixed(-0.001, 2), "0.00");
        assert_eq!(fixed(0.3, 2), "0.30");
    }

    #[test]
    fn viridis_endpoints() {
        assert_eq!(viridis(0.0), VIRIDIS[0]);
        assert_eq!(viridis(1.0), VIRIDIS[8]);
        assert_eq!(viridis(2.0), VIRIDIS[8]);
    }
}
