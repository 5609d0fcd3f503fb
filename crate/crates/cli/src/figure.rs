//! Plot data and static SVG rendering.
//!
//! Each figure writes a CSV of exactly what is drawn and, when there is at
//! least one data point, an SVG next to it. Coordinates are printed with two
//! decimals so output is byte-stable.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, Context, Result};
use mixplan_core::SimilarityMatrix;

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 48.0;
const POINT_COLOR: &str = "#1f77b4";
const GREY_COLOR: &str = "#b0b0b0";
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];
/// Heatmap color at intensity 1; intensity 0 is white.
pub const FULL_INTENSITY: (u8, u8, u8) = (8, 48, 107);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FigureKind {
    Scatter,
    Curves,
    Heatmap,
}

impl FigureKind {
    pub fn id(self) -> &'static str {
        match self {
            FigureKind::Scatter => "scatter",
            FigureKind::Curves => "curves",
            FigureKind::Heatmap => "heatmap",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownFigureKind(pub String);

impl fmt::Display for UnknownFigureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "unknown figure kind `{}` (expected scatter, curves or heatmap)",
            self.0
        )
    }
}

impl std::error::Error for UnknownFigureKind {}

impl FromStr for FigureKind {
    type Err = UnknownFigureKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "scatter" => Ok(FigureKind::Scatter),
            "curves" => Ok(FigureKind::Curves),
            "heatmap" => Ok(FigureKind::Heatmap),
            _ => Err(UnknownFigureKind(s.to_owned())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub label: String,
    pub advantage: f64,
    pub improvement: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub tokens: f64,
    pub value: f64,
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            _ => out.push(c),
        }
    }
    out
}

fn svg_open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{h:.0}\" viewBox=\"0 0 {w:.0} {h:.0}\">\n<rect x=\"0\" y=\"0\" width=\"{w:.0}\" height=\"{h:.0}\" fill=\"#ffffff\"/>\n"
    )
}

/// Linear map from a data range onto a pixel range.
#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, from: f64, to: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-12 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = (hi - lo) * 0.05;
        Self {
            lo: lo - pad,
            hi: hi + pad,
            from,
            to,
        }
    }

    fn map(&self, v: f64) -> f64 {
        self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
    }
}

fn axes(svg: &mut String, x: Scale, y: Scale, x_label: &str, y_label: &str) {
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
        MARGIN,
        HEIGHT - MARGIN,
        WIDTH - MARGIN,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{:.2}\" y1=\"{:.2}\" x2=\"{:.2}\" y2=\"{:.2}\" stroke=\"#000000\"/>",
        MARGIN,
        MARGIN,
        MARGIN,
        HEIGHT - MARGIN
    );
    let _ = writeln!(
        svg,
        "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        "<text x=\"14\" y=\"{:.2}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.2})\">{}</text>",
        HEIGHT / 2.0, HEIGHT / 2.0, escape(y_label)
    );
    for (v, anchor, px, py) in [
        (x.lo, "start", MARGIN, HEIGHT - MARGIN + 14.0),
        (x.hi, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 14.0),
    ] {
        let _ = writeln!(
            svg,
            "<text x=\"{px:.2}\" y=\"{py:.2}\" font-size=\"10\" text-anchor=\"{anchor}\">{v:.3}</text>"
        );
    }
    for (v, py) in [(y.lo, HEIGHT - MARGIN), (y.hi, MARGIN + 4.0)] {
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{py:.2}\" font-size=\"10\" text-anchor=\"end\">{v:.3}</text>",
            MARGIN - 4.0
        );
    }
}

/// Proximity advantage against relative improvement, one `<circle>` per
/// point. Points with |advantage| below `grey_threshold` are drawn grey.
pub fn scatter_svg(points: &[ScatterPoint], grey_threshold: f64) -> String {
    let x = Scale::new(points.iter().map(|p| p.advantage), MARGIN, WIDTH - MARGIN);
    let y = Scale::new(points.iter().map(|p| p.improvement), HEIGHT - MARGIN, MARGIN);
    let mut svg = svg_open(WIDTH, HEIGHT);
    axes(&mut svg, x, y, "proximity advantage", "relative improvement");
    for p in points {
        let fill = if p.advantage.abs() < grey_threshold {
            GREY_COLOR
        } else {
            POINT_COLOR
        };
        let _ = writeln!(
            svg,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{fill}\"><title>{}</title></circle>",
            x.map(p.advantage),
            y.map(p.improvement),
            escape(&p.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// One polyline per series, colored in name order.
pub fn curves_svg(series: &BTreeMap<String, Vec<CurvePoint>>) -> String {
    let all = || series.values().flatten();
    let x = Scale::new(all().map(|p| p.tokens), MARGIN, WIDTH - MARGIN);
    let y = Scale::new(all().map(|p| p.value), HEIGHT - MARGIN, MARGIN);
    let mut svg = svg_open(WIDTH, HEIGHT);
    axes(&mut svg, x, y, "tokens", "loss");
    for (k, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .map(|p| format!("{:.2},{:.2}", x.map(p.tokens), y.map(p.value)))
            .collect();
        let _ = writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            coords.join(" ")
        );
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{ly:.2}\" font-size=\"10\" fill=\"{color}\" text-anchor=\"end\">{}</text>",
            WIDTH - MARGIN,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Fill color for a cell value, clamped to [0, 1].
pub fn intensity_color(v: f64) -> String {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let mix = |c: u8| (255.0 - v * (255.0 - f64::from(c))).round() as u8;
    let (r, g, b) = FULL_INTENSITY;
    format!("#{:02x}{:02x}{:02x}", mix(r), mix(g), mix(b))
}

/// One `<rect>` per matrix cell.
pub fn heatmap_svg(m: &SimilarityMatrix) -> String {
    const CELL: f64 = 40.0;
    const LABEL: f64 = 120.0;
    let w = LABEL + CELL * m.col_names.len() as f64 + 8.0;
    let h = LABEL + CELL * m.row_names.len() as f64 + 8.0;
    let mut svg = svg_open(w, h);
    for (j, name) in m.col_names.iter().enumerate() {
        let cx = LABEL + CELL * (j as f64 + 0.5);
        let _ = writeln!(
            svg,
            "<text x=\"{cx:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"start\" transform=\"rotate(-45 {cx:.2} {:.2})\">{}</text>",
            LABEL - 6.0, LABEL - 6.0, escape(name)
        );
    }
    for (i, name) in m.row_names.iter().enumerate() {
        let ry = LABEL + CELL * i as f64;
        let _ = writeln!(
            svg,
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"10\" text-anchor=\"end\">{}</text>",
            LABEL - 6.0,
            ry + CELL / 2.0 + 3.0,
            escape(name)
        );
        for (j, v) in m.entries[i].iter().enumerate() {
            let _ = writeln!(
                svg,
                "<rect x=\"{:.2}\" y=\"{ry:.2}\" width=\"{CELL:.0}\" height=\"{CELL:.0}\" fill=\"{}\"><title>{:.6}</title></rect>",
                LABEL + CELL * j as f64,
                intensity_color(*v),
                v
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn read_rows(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let headers = r.headers()?.clone();
    let rows = r.records().collect::<Result<Vec<_>, _>>()?;
    Ok((headers, rows))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| anyhow!("{}: missing `{name}` column", path.display()))
}

fn number(rec: &csv::StringRecord, i: usize, path: &Path, row: usize) -> Result<f64> {
    let field = rec.get(i).unwrap_or("").trim();
    let v: f64 = field
        .parse()
        .with_context(|| format!("{} row {}: `{field}` is not a number", path.display(), row + 2))?;
    if !v.is_finite() {
        return Err(anyhow!("{} row {}: non-finite value", path.display(), row + 2));
    }
    Ok(v)
}

/// Scatter input: `advantage,improvement` plus an optional `label` column.
pub fn read_scatter(path: &Path) -> Result<Vec<ScatterPoint>> {
    let (headers, rows) = read_rows(path)?;
    let ia = column(&headers, "advantage", path)?;
    let ii = column(&headers, "improvement", path)?;
    let il = headers.iter().position(|h| h.trim() == "label");
    rows.iter()
        .enumerate()
        .map(|(k, rec)| {
            Ok(ScatterPoint {
                label: il
                    .and_then(|i| rec.get(i))
                    .map_or_else(|| format!("p{k}"), str::to_owned),
                advantage: number(rec, ia, path, k)?,
                improvement: number(rec, ii, path, k)?,
            })
        })
        .collect()
}

/// Curves input: `series,tokens,value`; points keep their input order.
pub fn read_curves(path: &Path) -> Result<BTreeMap<String, Vec<CurvePoint>>> {
    let (headers, rows) = read_rows(path)?;
    let is = column(&headers, "series", path)?;
    let it = column(&headers, "tokens", path)?;
    let iv = column(&headers, "value", path)?;
    let mut series: BTreeMap<String, Vec<CurvePoint>> = BTreeMap::new();
    for (k, rec) in rows.iter().enumerate() {
        series
            .entry(rec.get(is).unwrap_or("").to_owned())
            .or_default()
            .push(CurvePoint {
                tokens: number(rec, it, path, k)?,
                value: number(rec, iv, path, k)?,
            });
    }
    Ok(series)
}

/// Writes `out` (CSV) and, for non-empty input, the SVG beside it. Returns
/// the files written.
pub fn render_figure(kind: FigureKind, input: &Path, out: &Path, grey_threshold: f64) -> Result<Vec<PathBuf>> {
    let svg_path = out.with_extension("svg");
    let mut w = csv::Writer::from_path(out).with_context(|| format!("creating {}", out.display()))?;
    let svg = match kind {
        FigureKind::Scatter => {
            let points = read_scatter(input)?;
            w.write_record(["label", "advantage", "improvement", "near_zero"])?;
            for p in &points {
                w.write_record([
                    p.label.clone(),
                    format!("{:.6}", p.advantage),
                    format!("{:.6}", p.improvement),
                    (p.advantage.abs() < grey_threshold).to_string(),
                ])?;
            }
            (!points.is_empty()).then(|| scatter_svg(&points, grey_threshold))
        }
        FigureKind::Curves => {
            let series = read_curves(input)?;
            w.write_record(["series", "tokens", "value"])?;
            for (name, pts) in &series {
                for p in pts {
                    w.write_record([name.clone(), p.tokens.to_string(), format!("{:.6}", p.value)])?;
                }
            }
            (!series.is_empty()).then(|| curves_svg(&series))
        }
        FigureKind::Heatmap => {
            w.write_record(["row", "col", "value"])?;
            let (_, rows) = read_rows(input)?;
            if rows.is_empty() {
                None
            } else {
                let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
                let m = SimilarityMatrix::read_csv(file).with_context(|| format!("reading {}", input.display()))?;
                for (i, r) in m.row_names.iter().enumerate() {
                    for (j, c) in m.col_names.iter().enumerate() {
                        w.write_record([r.clone(), c.clone(), format!("{:.6}", m.entries[i][j])])?;
                    }
                }
                Some(heatmap_svg(&m))
            }
        }
    };
    w.flush()?;
    let mut written = vec![out.to_path_buf()];
    if let Some(svg) = svg {
        std::fs::write(&svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))?;
        written.push(svg_path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(label: &str, a: f64, i: f64) -> ScatterPoint {
        ScatterPoint {
            label: label.into(),
            advantage: a,
            improvement: i,
        }
    }

    #[test]
    fn scatter_has_one_circle_per_point() {
        let svg = scatter_svg(&[pt("a", 0.1, 0.2), pt("b", 0.005, 0.0), pt("c", -0.2, -0.1)], 0.01);
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches(GREY_COLOR).count(), 1);
    }

    #[test]
    fn intensity_endpoints() {
        assert_eq!(intensity_color(0.0), "#ffffff");
        assert_eq!(intensity_color(1.0), "#08306b");
        assert_eq!(intensity_color(2.0), "#08306b");
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("heatmap".parse::<FigureKind>(), Ok(FigureKind::Heatmap));
        assert_eq!("pie".parse::<FigureKind>(), Err(UnknownFigureKind("pie".into())));
    }

    #[test]
    fn labels_are_escaped() {
        let svg = scatter_svg(&[pt("a<b&c", 0.5, 0.5)], 0.01);
        assert!(svg.contains("a&lt;b&amp;c"));
    }

    #[test]
    fn degenerate_ranges_stay_finite() {
        let svg = scatter_svg(&[pt("a", 0.0, 0.0)], 0.01);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
