//! Report writers: JSON envelopes, CSV tables and the trajectory SVG.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Context;
use serde::Serialize;

use ert_core::WealthStep;

pub const OUTPUT_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    #[serde(flatten)]
    body: &'a T,
}

pub fn json_string<T: Serialize>(kind: &str, body: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(&Envelope { schema_version: OUTPUT_SCHEMA_VERSION, kind, body })?)
}

pub fn write_json<T: Serialize>(path: &Path, kind: &str, body: &T) -> anyhow::Result<()> {
    let mut text = json_string(kind, body)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["trial", "index", "lambda", "multiplier", "wealth"];

/// One row per step; the header is written even with no trials.
pub fn write_trajectory_csv<W: Write>(out: W, paths: &[Vec<WealthStep>]) -> anyhow::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for (trial, path) in paths.iter().enumerate() {
        for s in path {
            w.write_record(&[
                (trial + 1).to_string(),
                s.index.to_string(),
                s.lambda.to_string(),
                s.multiplier.to_string(),
                s.wealth.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wealth paths on a log10 axis with a dashed line at `threshold`.
pub fn trajectory_svg(paths: &[Vec<WealthStep>], threshold: f64) -> String {
    const W: f64 = 800.0;
    const H: f64 = 500.0;
    const PAD: f64 = 50.0;
    const FLOOR: f64 = -6.0;
    let log = |w: f64| if w > 0.0 { w.log10().max(FLOOR) } else { FLOOR };
    let x_max = paths.iter().map(|p| p.len()).max().unwrap_or(0).max(1) as f64;
    let t = threshold.log10();
    let (mut lo, mut hi) = (0f64.min(t), 0f64.max(t));
    for s in paths.iter().flatten() {
        lo = lo.min(log(s.wealth));
        hi = hi.max(log(s.wealth));
    }
    lo = lo.floor();
    hi = hi.ceil().max(lo + 1.0);
    let sx = |i: f64| PAD + (W - 2.0 * PAD) * i / x_max;
    let sy = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{b}" x2="{r}" y2="{b}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{b}" stroke="black"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for k in (lo as i64)..=(hi as i64) {
        let y = sy(k as f64);
        let _ = writeln!(
            svg,
            r#"<text x="{x}" y="{y:.1}" font-size="11" text-anchor="end">1e{k}</text>"#,
            x = PAD - 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{x}" y="{y}" font-size="12" text-anchor="middle">observation</text>"#,
        x = W / 2.0,
        y = H - 15.0
    );
    for path in paths {
        let mut pts = format!("{:.1},{:.1}", sx(0.0), sy(0.0));
        for s in path {
            let _ = write!(pts, " {:.1},{:.1}", sx(s.index as f64), sy(log(s.wealth)));
        }
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="steelblue" stroke-opacity="0.5" points="{pts}"/>"#);
    }
    let _ = writeln!(
        svg,
        r#"<line x1="{PAD}" y1="{y:.1}" x2="{r}" y2="{y:.1}" stroke="red" stroke-dasharray="6,4"/>"#,
        y = sy(t),
        r = W - PAD
    );
    svg.push_str("</svg>\n");
    svg
}

/// Right-pads each column to its widest cell.
pub fn aligned_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
