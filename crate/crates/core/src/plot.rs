//! Training curves as a standalone SVG: discounted return and cost return
//! per epoch, with the cost limit as a dashed horizontal line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::run::csv_error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: f64,
    pub discounted_return: f64,
    pub cost_return: f64,
}

const WIDTH: f64 = 900.0;
const HEIGHT: f64 = 360.0;
const PANEL_W: f64 = 380.0;
const PANEL_H: f64 = 260.0;
const TOP: f64 = 50.0;
const LEFT: [f64; 2] = [60.0, 510.0];

/// Reads the `epoch`, `discounted_return` and `cost_return` columns of a
/// per-epoch metrics CSV; rows without evaluation values are skipped.
pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let column = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: 1,
            field: name.to_string(),
            message: format!("missing column `{name}`"),
        })
    };
    let (ie, id, ic) = (column("epoch")?, column("discounted_return")?, column("cost_return")?);
    let mut points = Vec::new();
    for (row, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let field = |i: usize| -> Result<Option<f64>> {
            let raw = rec.get(i).unwrap_or("").trim();
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>().map(Some).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                line: row + 2,
                field: headers[i].to_string(),
                message: e.to_string(),
            })
        };
        let epoch = field(ie)?.ok_or_else(|| Error::Parse {
            path: path.display().to_string(),
            line: row + 2,
            field: "epoch".into(),
            message: "empty value".into(),
        })?;
        if let (Some(d), Some(c)) = (field(id)?, field(ic)?) {
            points.push(CurvePoint {
                epoch,
                discounted_return: d,
                cost_return: c,
            });
        }
    }
    Ok(points)
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        let pad = if lo.abs() > 1e-12 { lo.abs() * 0.1 } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

struct Panel {
    left: f64,
    x: (f64, f64),
    y: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        self.left + (x - self.x.0) / (self.x.1 - self.x.0) * PANEL_W
    }

    fn py(&self, y: f64) -> f64 {
        TOP + PANEL_H - (y - self.y.0) / (self.y.1 - self.y.0) * PANEL_H
    }

    fn draw(&self, svg: &mut String, title: &str, pts: &[(f64, f64)], color: &str) {
        let (l, t) = (self.left, TOP);
        let _ = writeln!(svg, r#"<rect x="{l}" y="{t}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="14">{title}</text>"#, l + PANEL_W / 2.0, t - 12.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">epoch</text>"#, l + PANEL_W / 2.0, t + PANEL_H + 32.0);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let yv = self.y.0 + f * (self.y.1 - self.y.0);
            let xv = self.x.0 + f * (self.x.1 - self.x.0);
            let _ = writeln!(svg, r#"<text x="{}" y="{:.2}" text-anchor="end" font-size="10">{yv:.3}</text>"#, l - 4.0, self.py(yv) + 3.0);
            let _ = writeln!(svg, r#"<text x="{:.2}" y="{}" text-anchor="middle" font-size="10">{xv:.1}</text>"#, self.px(xv), t + PANEL_H + 14.0);
        }
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", self.px(x), self.py(y))).collect();
        if pts.len() > 1 {
            let _ = writeln!(svg, r#"<polyline class="curve" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        }
        for &(x, y) in pts {
            let _ = writeln!(svg, r#"<circle class="point" cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, self.px(x), self.py(y));
        }
    }
}

/// Renders the two-panel figure; `limit` adds a dashed line to the cost panel.
pub fn render_svg(points: &[CurvePoint], limit: Option<f64>) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Config("no metrics to plot".into()));
    }
    if let Some(l) = limit {
        if !l.is_finite() {
            return Err(Error::Config(format!("limit must be finite, got {l}")));
        }
    }
    let x = range(points.iter().map(|p| p.epoch));
    let ret = Panel {
        left: LEFT[0],
        x,
        y: range(points.iter().map(|p| p.discounted_return)),
    };
    let cost = Panel {
        left: LEFT[1],
        x,
        y: range(points.iter().map(|p| p.cost_return).chain(limit)),
    };
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let r: Vec<_> = points.iter().map(|p| (p.epoch, p.discounted_return)).collect();
    let c: Vec<_> = points.iter().map(|p| (p.epoch, p.cost_return)).collect();
    ret.draw(&mut svg, "discounted return", &r, "#1f77b4");
    cost.draw(&mut svg, "cost return", &c, "#d62728");
    if let Some(l) = limit {
        let y = cost.py(l);
        let _ = writeln!(
            svg,
            r#"<line class="limit" data-value="{l}" x1="{}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="black" stroke-dasharray="4 4"/>"#,
            cost.left,
            cost.left + PANEL_W
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Reads a metrics CSV and writes the figure; nothing is written on error.
pub fn plot_metrics(metrics: impl AsRef<Path>, limit: Option<f64>, out: impl AsRef<Path>) -> Result<()> {
    let svg = render_svg(&read_curve(metrics)?, limit)?;
    let out = out.as_ref();
    fs::write(out, svg).map_err(|e| Error::io(out, e))
}
