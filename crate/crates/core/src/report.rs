//! Ranked Markdown/CSV tables for F1 matrices, and CSV/SVG delta series.
//! Every renderer is a pure function of its input.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::label_index;
use crate::error::{Error, Result};
use crate::evaluation::{F1Matrix, RankMark};
use crate::parallax::{Pairing, ParallaxDelta, MEAN_LABEL};

pub const ORIENTATION_NOTE: &str = "delta = Chinese - Western; positive = Chinese higher";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedCell {
    pub value: f64,
    pub mark: RankMark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedTable {
    pub title: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<RankedCell>>,
}

impl RankedTable {
    pub fn from_matrix(title: &str, m: &F1Matrix) -> Self {
        let cells = (0..m.rows.len())
            .map(|r| {
                (0..m.cols.len())
                    .map(|c| RankedCell {
                        value: m.values[r][c],
                        mark: m.mark(r, c),
                    })
                    .collect()
            })
            .collect();
        RankedTable {
            title: title.to_owned(),
            rows: m.rows.clone(),
            cols: m.cols.clone(),
            cells,
        }
    }
}

/// GitHub-flavored table: best `**v**`, second and third `_v_`.
pub fn render_markdown(table: &RankedTable) -> String {
    let mut out = String::from("| Label |");
    for c in &table.cols {
        write!(out, " {c} |").unwrap();
    }
    out.push_str("\n|---|");
    for _ in &table.cols {
        out.push_str("---:|");
    }
    out.push('\n');
    for (label, row) in table.rows.iter().zip(&table.cells) {
        write!(out, "| {label} |").unwrap();
        for cell in row {
            write!(out, " {} |", format_cell(cell)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn format_cell(cell: &RankedCell) -> String {
    match cell.mark {
        RankMark::Best => format!("**{:.3}**", cell.value),
        RankMark::RunnerUp => format!("_{:.3}_", cell.value),
        RankMark::None => format!("{:.3}", cell.value),
    }
}

pub fn f1_csv(m: &F1Matrix) -> String {
    let mut out = String::from("label");
    for c in &m.cols {
        write!(out, ",{}", csv_field(c)).unwrap();
    }
    out.push('\n');
    for (label, row) in m.rows.iter().zip(&m.values) {
        out.push_str(&csv_field(label));
        for v in row {
            write!(out, ",{v:.3}").unwrap();
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

pub const DELTA_CSV_HEADER: &str = "pairing,label,chinese_mean,western_mean,delta,delta_display";

/// Full-precision values plus a 3-decimal display column, preceded by a
/// `#` comment line stating the sign convention.
pub fn delta_csv(deltas: &[ParallaxDelta]) -> String {
    let mut out = format!("# {ORIENTATION_NOTE}\n{DELTA_CSV_HEADER}\n");
    for d in deltas {
        writeln!(
            out,
            "{},{},{},{},{},{:.3}",
            d.pairing, d.label, d.chinese_mean, d.western_mean, d.delta, d.delta
        )
        .unwrap();
    }
    out
}

pub fn parse_delta_csv(text: &str) -> Result<Vec<ParallaxDelta>> {
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    if lines.next() != Some(DELTA_CSV_HEADER) {
        return Err(Error::Malformed("delta csv header".into()));
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::Malformed(format!("delta csv row {line:?}")));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| Error::Malformed(format!("number {s:?}")))
            };
            Ok(ParallaxDelta {
                pairing: Pairing::parse(f[0])
                    .ok_or_else(|| Error::Malformed(format!("pairing {:?}", f[0])))?,
                label: f[1].to_owned(),
                chinese_mean: num(f[2])?,
                western_mean: num(f[3])?,
                delta: num(f[4])?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaBarSeries {
    pub pairing: Pairing,
    /// One entry per label, in fixed label order.
    pub entries: Vec<(String, f64)>,
    pub orientation: String,
}

impl DeltaBarSeries {
    pub fn from_deltas(deltas: &[ParallaxDelta]) -> Result<Self> {
        let pairing = single_pairing(deltas)?;
        let mut entries: Vec<(usize, String, f64)> = deltas
            .iter()
            .filter(|d| d.label != MEAN_LABEL)
            .map(|d| {
                label_index(&d.label)
                    .map(|i| (i, d.label.clone(), d.delta))
                    .ok_or_else(|| Error::Malformed(format!("unknown label {:?}", d.label)))
            })
            .collect::<Result<_>>()?;
        entries.sort_by_key(|e| e.0);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Malformed("duplicate label in delta series".into()));
        }
        Ok(DeltaBarSeries {
            pairing,
            entries: entries.into_iter().map(|(_, l, d)| (l, d)).collect(),
            orientation: ORIENTATION_NOTE.into(),
        })
    }
}

fn single_pairing(deltas: &[ParallaxDelta]) -> Result<Pairing> {
    let first = deltas
        .first()
        .ok_or_else(|| Error::Malformed("empty delta series".into()))?;
    if deltas.iter().any(|d| d.pairing != first.pairing) {
        return Err(Error::MixedPairings);
    }
    Ok(first.pairing)
}

/// CSV (labels in fixed order, then the mean row if present) and an SVG bar
/// chart for one pairing.
pub fn emit_delta_series(deltas: &[ParallaxDelta]) -> Result<(String, String)> {
    let series = DeltaBarSeries::from_deltas(deltas)?;
    let mut ordered: Vec<ParallaxDelta> = series
        .entries
        .iter()
        .map(|(l, _)| {
            deltas
                .iter()
                .find(|d| &d.label == l)
                .cloned()
                .expect("label comes from deltas")
        })
        .collect();
    ordered.extend(deltas.iter().filter(|d| d.label == MEAN_LABEL).cloned());
    Ok((delta_csv(&ordered), render_svg(&series)))
}

const SVG_WIDTH: f64 = 760.0;
const SVG_HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const PLOT_TOP: f64 = 50.0;
const PLOT_BOTTOM: f64 = 290.0;

pub fn render_svg(series: &DeltaBarSeries) -> String {
    let n = series.entries.len().max(1) as f64;
    let slot = (SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT) / n;
    let zero_y = (PLOT_TOP + PLOT_BOTTOM) / 2.0;
    let half = (PLOT_BOTTOM - PLOT_TOP) / 2.0;
    let max_abs = series
        .entries
        .iter()
        .map(|(_, d)| d.abs())
        .fold(0.0f64, f64::max);
    let scale = if max_abs > 0.0 { half / max_abs } else { 0.0 };

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="22" font-size="14" text-anchor="middle">Parallax delta: {}</text>"#,
        SVG_WIDTH / 2.0,
        series.pairing
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{:.1}" y="40" font-size="11" text-anchor="middle">{}</text>"#,
        SVG_WIDTH / 2.0,
        xml_escape(&series.orientation)
    )
    .unwrap();
    for (i, (label, delta)) in series.entries.iter().enumerate() {
        let x = MARGIN_LEFT + slot * i as f64 + slot * 0.15;
        let w = slot * 0.7;
        let h = delta.abs() * scale;
        let (y, fill, text_y) = if *delta >= 0.0 {
            (zero_y - h, "#c0392b", zero_y - h - 4.0)
        } else {
            (zero_y, "#2e6da4", zero_y + h + 12.0)
        };
        let cx = x + w / 2.0;
        writeln!(
            s,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"><title>{}: {delta:.3}</title></rect>"#,
            xml_escape(label)
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{cx:.2}" y="{text_y:.2}" font-size="9" text-anchor="middle">{delta:.3}</text>"#
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{cx:.2}" y="{:.2}" font-size="10" text-anchor="end" transform="rotate(-45 {cx:.2} {:.2})">{}</text>"#,
            PLOT_BOTTOM + 24.0,
            PLOT_BOTTOM + 24.0,
            xml_escape(label)
        )
        .unwrap();
    }
    writeln!(
        s,
        r##"<line x1="{MARGIN_LEFT:.1}" y1="{zero_y:.1}" x2="{:.1}" y2="{zero_y:.1}" stroke="#000" stroke-width="1"/>"##,
        SVG_WIDTH - MARGIN_RIGHT
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn reports_dir(output_dir: &Path) -> PathBuf {
    output_dir.join("reports")
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `f1_chinese.md`, `f1_western.md` and the concatenated `f1.csv`.
pub fn write_f1_reports(output_dir: &Path, chinese: &F1Matrix, western: &F1Matrix) -> Result<()> {
    let dir = reports_dir(output_dir);
    for (name, title, m) in [
        ("f1_chinese.md", "Chinese-origin models", chinese),
        ("f1_western.md", "Western-origin models", western),
    ] {
        let table = RankedTable::from_matrix(title, m);
        let text = format!("# {title}\n\n{}", render_markdown(&table));
        write(&dir.join(name), &text)?;
    }
    write(&dir.join("f1.csv"), &f1_csv(&chinese.concat(western)?))
}

/// Writes `delta_<pairing>.csv` and `delta_<pairing>.svg` per pairing.
pub fn write_delta_reports(output_dir: &Path, deltas: &[ParallaxDelta]) -> Result<()> {
    let dir = reports_dir(output_dir);
    for pairing in Pairing::ALL {
        let subset: Vec<ParallaxDelta> = deltas
            .iter()
            .filter(|d| d.pairing == pairing)
            .cloned()
            .collect();
        if subset.is_empty() {
            continue;
        }
        let (csv, svg) = emit_delta_series(&subset)?;
        write(&dir.join(format!("delta_{pairing}.csv")), &csv)?;
        write(&dir.join(format!("delta_{pairing}.svg")), &svg)?;
    }
    Ok(())
}
