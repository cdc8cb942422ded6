//! Static SVG charts rendered from CSV artifacts.
//!
//! Every chart reads only its CSV file, so re-rendering is reproducible.
//! Log axes are drawn by plotting `log10` of the data.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use plotters::prelude::*;

const COLORS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(255, 127, 14),
    RGBColor(148, 103, 189),
    RGBColor(140, 86, 75),
];

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let headers = r.headers()?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| anyhow!("CSV has no column `{name}`"))
    }
}

#[derive(Debug, Clone)]
pub struct LineSpec<'a> {
    pub title: &'a str,
    pub x: &'a str,
    pub y: Vec<&'a str>,
    /// Column whose distinct values split each `y` column into series.
    pub group: Option<&'a str>,
    pub log_x: bool,
    pub log_y: bool,
    pub x_label: &'a str,
    pub y_label: &'a str,
    /// Vertical marker at this x (data units).
    pub marker: Option<f64>,
}

fn transform(v: f64, log: bool) -> Option<f64> {
    match (log, v.is_finite()) {
        (_, false) => None,
        (true, _) if v <= 0.0 => None,
        (true, _) => Some(v.log10()),
        (false, _) => Some(v),
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if hi > lo {
        let pad = 0.03 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

fn axis_label(label: &str, log: bool) -> String {
    if log {
        format!("log10 {label}")
    } else {
        label.to_string()
    }
}

pub fn line_chart(csv_path: &Path, svg_path: &Path, spec: &LineSpec<'_>) -> Result<()> {
    let table = Table::read(csv_path)?;
    let xi = table.column(spec.x)?;
    let gi = spec.group.map(|g| table.column(g)).transpose()?;
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for name in &spec.y {
        let yi = table.column(name)?;
        for row in &table.rows {
            let (Ok(x), Ok(y)) = (row[xi].parse::<f64>(), row[yi].parse::<f64>()) else {
                continue;
            };
            let (Some(x), Some(y)) = (transform(x, spec.log_x), transform(y, spec.log_y)) else {
                continue;
            };
            let label = match gi {
                Some(g) if spec.y.len() > 1 => format!("{} {}", row[g], name),
                Some(g) => row[g].clone(),
                None => name.to_string(),
            };
            series.entry(label).or_default().push((x, y));
        }
    }
    if series.values().all(Vec::is_empty) {
        bail!("nothing to plot in {}", csv_path.display());
    }
    let pts = series.values().flatten();
    let (x0, x1) = pts
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let (y0, y1) = pts.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
    let (x0, x1) = padded(x0, x1);
    let (y0, y1) = padded(y0, y1);

    let root = SVGBackend::new(svg_path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(spec.title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, y0..y1)
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc(axis_label(spec.x_label, spec.log_x))
        .y_desc(axis_label(spec.y_label, spec.log_y))
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    for (i, (label, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        chart
            .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
            .map_err(|e| anyhow!("{e}"))?
            .label(label.as_str())
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], color.stroke_width(2)));
    }
    if let Some(m) = spec.marker.and_then(|m| transform(m, spec.log_x)) {
        chart
            .draw_series(LineSeries::new(vec![(m, y0), (m, y1)], BLACK.stroke_width(1)))
            .map_err(|e| anyhow!("{e}"))?;
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}

/// Side-by-side bars over `[lo, hi)` bins, one colour per count column.
pub fn bar_chart(
    csv_path: &Path,
    svg_path: &Path,
    title: &str,
    lo: &str,
    hi: &str,
    counts: &[&str],
    x_label: &str,
) -> Result<()> {
    let table = Table::read(csv_path)?;
    let (li, hi_i) = (table.column(lo)?, table.column(hi)?);
    let cols: Vec<usize> = counts.iter().map(|c| table.column(c)).collect::<Result<_>>()?;
    let mut bins = Vec::new();
    for row in &table.rows {
        let a: f64 = row[li].parse()?;
        let b: f64 = row[hi_i].parse()?;
        let ys: Vec<f64> = cols
            .iter()
            .map(|&c| row[c].parse())
            .collect::<std::result::Result<_, _>>()?;
        bins.push((a, b, ys));
    }
    if bins.is_empty() {
        bail!("nothing to plot in {}", csv_path.display());
    }
    let x0 = bins.iter().map(|b| b.0).fold(f64::INFINITY, f64::min);
    let x1 = bins.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max);
    let ymax = bins.iter().flat_map(|b| b.2.iter().copied()).fold(0.0, f64::max);

    let root = SVGBackend::new(svg_path, (720, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| anyhow!("{e}"))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 20))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(60)
        .build_cartesian_2d(x0..x1, 0.0..(ymax * 1.05).max(1.0))
        .map_err(|e| anyhow!("{e}"))?;
    chart
        .configure_mesh()
        .x_desc(x_label)
        .y_desc("count")
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    let m = counts.len() as f64;
    for (j, name) in counts.iter().enumerate() {
        let color = COLORS[j % COLORS.len()];
        chart
            .draw_series(bins.iter().map(|(a, b, ys)| {
                let w = (b - a) / m;
                let left = a + w * j as f64;
                Rectangle::new([(left, 0.0), (left + w, ys[j])], color.filled())
            }))
            .map_err(|e| anyhow!("{e}"))?
            .label(*name)
            .legend(move |(x, y)| Rectangle::new([(x, y - 5), (x + 12, y + 5)], color.filled()));
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| anyhow!("{e}"))?;
    root.present().map_err(|e| anyhow!("{e}"))?;
    Ok(())
}
