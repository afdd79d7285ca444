//! CSV, JSON and SVG emitters for result rows.

use std::io::Write;

use serde::Serialize;

use crate::config::OutputFormat;
use crate::error::CliError;

/// Floats with 17 significant digits.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub trait Row: Serialize {
    const HEADER: &'static [&'static str];
    fn fields(&self) -> Vec<String>;
}

pub fn write_csv<R: Row, W: Write>(rows: &[R], out: W) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CliError::Io(std::io::Error::other(e));
    w.write_record(R::HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<R: Row, W: Write>(rows: &[R], mut out: W) -> Result<(), CliError> {
    serde_json::to_writer_pretty(&mut out, rows).map_err(|e| CliError::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_rows<R: Row, W: Write>(rows: &[R], format: OutputFormat, out: W) -> Result<(), CliError> {
    match format {
        OutputFormat::Csv => write_csv(rows, out),
        OutputFormat::Json => write_json(rows, out),
        OutputFormat::Svg => Err(CliError::Config("svg output is only available for drift grids".into())),
    }
}

/// One heatmap cell: row label, column label, value, and whether the
/// value is significant.
pub struct HeatCell {
    pub row: f64,
    pub col: f64,
    pub value: f64,
    pub significant: bool,
}

fn color(v: f64, scale: f64) -> String {
    let t = if scale > 0.0 { (v / scale).clamp(-1.0, 1.0) } else { 0.0 };
    // blue for negative, red for positive
    let (r, g, b) = if t >= 0.0 {
        (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
    } else {
        (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
    };
    format!("rgb({},{},{})", r.round() as u8, g.round() as u8, b.round() as u8)
}

/// Static heatmap with rows and columns in first-seen order.
pub fn write_svg<W: Write>(cells: &[HeatCell], row_name: &str, col_name: &str, mut out: W) -> Result<(), CliError> {
    let mut rows: Vec<f64> = Vec::new();
    let mut cols: Vec<f64> = Vec::new();
    for c in cells {
        if !rows.contains(&c.row) {
            rows.push(c.row);
        }
        if !cols.contains(&c.col) {
            cols.push(c.col);
        }
    }
    let (cw, ch, left, top) = (64.0, 28.0, 70.0, 40.0);
    let width = left + cw * cols.len() as f64 + 20.0;
    let height = top + ch * rows.len() as f64 + 20.0;
    let scale = cells.iter().map(|c| c.value.abs()).fold(0.0, f64::max);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="monospace" font-size="11">"#
    )?;
    writeln!(out, r#"<text x="4" y="16">{row_name} \ {col_name}</text>"#)?;
    for (j, col) in cols.iter().enumerate() {
        let x = left + cw * j as f64 + cw / 2.0;
        writeln!(
            out,
            r#"<text x="{x}" y="{}" text-anchor="middle">{col}</text>"#,
            top - 8.0
        )?;
    }
    for (i, row) in rows.iter().enumerate() {
        let y = top + ch * i as f64;
        writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{row}</text>"#,
            left - 6.0,
            y + ch / 2.0 + 4.0
        )?;
    }
    for c in cells {
        let i = rows.iter().position(|r| *r == c.row).expect("row seen");
        let j = cols.iter().position(|v| *v == c.col).expect("col seen");
        let (x, y) = (left + cw * j as f64, top + ch * i as f64);
        let stroke = if c.significant { "black" } else { "none" };
        writeln!(
            out,
            r#"<rect x="{x}" y="{y}" width="{cw}" height="{ch}" fill="{}" stroke="{stroke}"><title>{:e}</title></rect>"#,
            color(c.value, scale),
            c.value
        )?;
    }
    writeln!(out, "</svg>")?;
    Ok(())
}
