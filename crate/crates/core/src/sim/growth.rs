//! Memory growth curves from a trace: per-tick episodic and semantic counts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use image::{Rgb, RgbImage};

use super::trace::Trace;
use super::SimError;

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRow {
    pub stage: u8,
    pub time: f64,
    /// Per-agent `(episodic events, semantic nodes)`.
    pub per_agent: BTreeMap<String, (usize, usize)>,
}

impl GrowthRow {
    pub fn episodic_total(&self) -> usize {
        self.per_agent.values().map(|v| v.0).sum()
    }

    pub fn semantic_total(&self) -> usize {
        self.per_agent.values().map(|v| v.1).sum()
    }
}

pub fn growth_series(trace: &Trace) -> Vec<GrowthRow> {
    let mut rows: Vec<GrowthRow> = Vec::new();
    for t in &trace.ticks {
        let same = rows.last().is_some_and(|r| r.stage == t.stage && r.time == t.time);
        if !same {
            rows.push(GrowthRow {
                stage: t.stage,
                time: t.time,
                per_agent: BTreeMap::new(),
            });
        }
        let row = rows.last_mut().expect("pushed above");
        row.per_agent.insert(t.agent.clone(), (t.episodic, t.semantic));
    }
    rows
}

pub fn growth_csv(rows: &[GrowthRow]) -> String {
    let agents: Vec<String> = rows
        .iter()
        .flat_map(|r| r.per_agent.keys().cloned())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut s = String::from("stage,time,episodic_total,semantic_total");
    for a in &agents {
        let _ = write!(s, ",{a}_episodic,{a}_semantic");
    }
    s.push('\n');
    for r in rows {
        let _ = write!(
            s,
            "{},{},{},{}",
            r.stage,
            r.time,
            r.episodic_total(),
            r.semantic_total()
        );
        for a in &agents {
            let (e, m) = r.per_agent.get(a).copied().unwrap_or((0, 0));
            let _ = write!(s, ",{e},{m}");
        }
        s.push('\n');
    }
    s
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
            img.put_pixel(x as u32, y as u32, color);
        }
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Two-panel chart: total episodic events (top, red) and total semantic
/// nodes (bottom, blue) against tick index.
pub fn render_growth(rows: &[GrowthRow], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let margin = 20i64;
    let panel_h = (height as i64 - 3 * margin) / 2;
    let plot_w = width as i64 - 2 * margin;
    let series: [(Vec<usize>, Rgb<u8>); 2] = [
        (rows.iter().map(GrowthRow::episodic_total).collect(), Rgb([200, 40, 40])),
        (rows.iter().map(GrowthRow::semantic_total).collect(), Rgb([40, 70, 200])),
    ];
    for (k, (values, color)) in series.iter().enumerate() {
        let top = margin + k as i64 * (panel_h + margin);
        let bottom = top + panel_h;
        let axis = Rgb([0, 0, 0]);
        line(&mut img, (margin, top), (margin, bottom), axis);
        line(&mut img, (margin, bottom), (margin + plot_w, bottom), axis);
        let max = values.iter().copied().max().unwrap_or(0).max(1) as f64;
        let n = values.len().max(2) - 1;
        let pt = |i: usize, v: usize| {
            let x = margin + (i as f64 / n as f64 * plot_w as f64).round() as i64;
            let y = bottom - (v as f64 / max * panel_h as f64).round() as i64;
            (x, y)
        };
        for i in 1..values.len() {
            line(&mut img, pt(i - 1, values[i - 1]), pt(i, values[i]), *color);
        }
    }
    img
}

/// Write the growth table as CSV and the chart as PNG.
pub fn write_growth(trace: &Trace, csv_path: &Path, png_path: &Path) -> Result<Vec<GrowthRow>, SimError> {
    let rows = growth_series(trace);
    std::fs::write(csv_path, growth_csv(&rows)).map_err(|e| SimError::Io(format!("{}: {e}", csv_path.display())))?;
    render_growth(&rows, 640, 480)
        .save(png_path)
        .map_err(|e| SimError::Io(format!("{}: {e}", png_path.display())))?;
    Ok(rows)
}
