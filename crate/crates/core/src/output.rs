//! File formats: convergence tables, field dumps, sections and PGM images.
//!
//! Binary field layout, little-endian:
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..3   | magic `CWV`                               |
//! | 3      | dimension `n` (1..=3)                     |
//! | 4..16  | node counts per axis, `u32` (unused = 0)  |
//! | 16..   | values as `f64`, canonical order          |

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Field, Mesh, MAX_DIM};
use crate::harness::{ConvergenceTable, Rate};

pub const FIELD_MAGIC: &[u8; 3] = b"CWV";
pub const TABLE_HEADER: &str = "N,M,e_C,r_C,p_C,e_C10,r_C10,p_C10,e_C1,r_C1,p_C1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableFormat {
    Csv,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldFormat {
    CsvGrid,
    FlatBinary,
}

/// Scientific notation with four significant digits and a two-digit exponent: `9.499e-06`.
pub fn format_sci(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    let s = format!("{x:.3e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn rate_cells(rate: Option<Rate>) -> [String; 2] {
    match rate {
        Some(Rate { r, p }) => [format!("{r:.2}"), format!("{p:.3}")],
        None => ["-".to_string(), "-".to_string()],
    }
}

fn table_cells(table: &ConvergenceTable) -> Vec<Vec<String>> {
    table
        .rows
        .iter()
        .map(|row| {
            let mut cells = vec![row.n.to_string(), row.m.to_string()];
            match row.errors {
                Some(e) => {
                    for (err, rate) in e.as_array().into_iter().zip(row.rates) {
                        cells.push(format_sci(err));
                        cells.extend(rate_cells(rate));
                    }
                }
                None => cells.extend(std::iter::repeat("diverged".to_string()).take(9)),
            }
            cells
        })
        .collect()
}

/// The table as text in the given format.
pub fn render_table(table: &ConvergenceTable, format: TableFormat) -> Result<String> {
    if table.rows.is_empty() {
        return Err(Error::usage("cannot write an empty convergence table"));
    }
    let header: Vec<&str> = TABLE_HEADER.split(',').collect();
    let rows = table_cells(table);
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(TABLE_HEADER);
            out.push('\n');
            for row in rows {
                out.push_str(&row.join(","));
                out.push('\n');
            }
        }
        TableFormat::Text => {
            let widths: Vec<usize> = (0..header.len())
                .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
                .collect();
            let line = |cells: &[&str]| {
                let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
                padded.join("  ").trim_end().to_string() + "\n"
            };
            out.push_str(&line(&header));
            for row in &rows {
                let cells: Vec<&str> = row.iter().map(String::as_str).collect();
                out.push_str(&line(&cells));
            }
        }
    }
    Ok(out)
}

pub fn write_table(table: &ConvergenceTable, path: &Path, format: TableFormat) -> Result<()> {
    let text = render_table(table, format)?;
    fs::write(path, text)?;
    Ok(())
}

/// One parsed csv row; `None` marks a `-` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRecord {
    pub n: usize,
    pub m: usize,
    /// `e, r, p` for `C`, `C10`, `C1` in header order.
    pub values: [Option<f64>; 9],
}

/// Parse a csv table written by [`write_table`].
pub fn parse_table_csv(text: &str) -> Result<Vec<TableRecord>> {
    let mut lines = text.lines();
    if lines.next() != Some(TABLE_HEADER) {
        return Err(Error::data("missing convergence table header"));
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(j, line)| {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 11 {
                return Err(Error::data(format!("row {}: expected 11 cells, got {}", j + 1, cells.len())));
            }
            let int = |s: &str| s.parse::<usize>().map_err(|e| Error::data(format!("row {}: {s:?}: {e}", j + 1)));
            let mut values = [None; 9];
            for (v, cell) in values.iter_mut().zip(&cells[2..]) {
                *v = match *cell {
                    "-" | "diverged" => None,
                    s => Some(s.parse::<f64>().map_err(|e| Error::data(format!("row {}: {s:?}: {e}", j + 1)))?),
                };
            }
            Ok(TableRecord { n: int(cells[0])?, m: int(cells[1])?, values })
        })
        .collect()
}

/// Field values as text or bytes in the given format.
pub fn encode_field(field: &Field, format: FieldFormat) -> Result<Vec<u8>> {
    let shape = field.shape();
    match format {
        FieldFormat::CsvGrid => {
            if shape.dim() > 2 {
                return Err(Error::usage(format!("csv_grid needs dimension <= 2, field has {}", shape.dim())));
            }
            let cols = if shape.dim() == 2 { shape.nodes(1) } else { shape.nodes(0) };
            let mut out = String::new();
            for row in field.values().chunks(cols) {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            Ok(out.into_bytes())
        }
        FieldFormat::FlatBinary => {
            let mut out = Vec::with_capacity(16 + 8 * field.values().len());
            out.extend_from_slice(FIELD_MAGIC);
            out.push(shape.dim() as u8);
            for k in 0..MAX_DIM {
                let nodes = if k < shape.dim() { shape.nodes(k) as u32 } else { 0 };
                out.extend_from_slice(&nodes.to_le_bytes());
            }
            for v in field.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
            Ok(out)
        }
    }
}

pub fn write_field(field: &Field, path: &Path, format: FieldFormat) -> Result<()> {
    let bytes = encode_field(field, format)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Node counts and values of a binary field.
pub fn decode_field(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>)> {
    if bytes.len() < 16 || &bytes[..3] != FIELD_MAGIC {
        return Err(Error::data("not a binary field file"));
    }
    let dim = bytes[3] as usize;
    if !(1..=MAX_DIM).contains(&dim) {
        return Err(Error::data(format!("unsupported dimension {dim}")));
    }
    let nodes: Vec<usize> = (0..dim)
        .map(|k| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize)
        .collect();
    let count: usize = nodes.iter().product();
    let payload = &bytes[16..];
    if payload.len() != 8 * count {
        return Err(Error::data(format!("expected {count} values, found {} bytes", payload.len())));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok((nodes, values))
}

/// Rows of a csv grid file.
pub fn parse_field_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|c| c.parse::<f64>().map_err(|e| Error::data(format!("{c:?}: {e}")))).collect())
        .collect()
}

/// 8-bit grey levels of a 2D field, top row at the largest `x2`.
///
/// Values map linearly from `[min, max]` to `[0, 255]`; a constant field is
/// all zero. With `levels >= 2` the range is cut into that many equal bands,
/// each drawn with one grey value.
pub fn image_pixels(field: &Field, levels: u32) -> Result<(usize, usize, Vec<u8>)> {
    let shape = field.shape();
    if shape.dim() != 2 {
        return Err(Error::usage(format!("images need a 2D field, got dimension {}", shape.dim())));
    }
    let (w, h) = (shape.nodes(0), shape.nodes(1));
    let (lo, hi) = field.values().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let grey = |v: f64| -> u8 {
        if !(hi > lo) {
            return 0;
        }
        let s = ((v - lo) / (hi - lo)).clamp(0.0, 1.0);
        if levels >= 2 {
            let band = ((s * levels as f64).floor() as u32).min(levels - 1);
            (band as f64 * 255.0 / (levels - 1) as f64).round() as u8
        } else {
            (s * 255.0).round() as u8
        }
    };
    let mut pixels = Vec::with_capacity(w * h);
    for j in (0..h).rev() {
        for i in 0..w {
            pixels.push(grey(field.values()[i * h + j]));
        }
    }
    Ok((w, h, pixels))
}

pub fn write_image_pgm(field: &Field, path: &Path, levels: u32) -> Result<()> {
    let (w, h, pixels) = image_pixels(field, levels)?;
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P5\n{w} {h}\n255\n")?;
    out.write_all(&pixels)?;
    out.flush()?;
    Ok(())
}

/// `(coordinate, value)` along the grid line nearest to `x_axis = value`
/// of a 2D field. `axis` is 0-based.
pub fn section(mesh: &Mesh, field: &Field, axis: usize, value: f64) -> Result<Vec<(f64, f64)>> {
    field.check_mesh(mesh, "field")?;
    if mesh.dim() != 2 || axis > 1 {
        return Err(Error::usage("sections are taken across a 2D field along axis 1 or 2"));
    }
    let fixed_axis = mesh.axis(axis);
    let i = fixed_axis.nearest_index(value).ok_or_else(|| {
        Error::data(format!(
            "section x{} = {value} lies outside [{}, {}]",
            axis + 1,
            fixed_axis.min(),
            fixed_axis.max()
        ))
    })?;
    let along = 1 - axis;
    let values = field.line_view(mesh, along, &[i])?;
    Ok(values.into_iter().enumerate().map(|(j, v)| (mesh.axis(along).coordinate(j), v)).collect())
}

pub fn write_section(mesh: &Mesh, field: &Field, axis: usize, value: f64, path: &Path) -> Result<()> {
    let pairs = section(mesh, field, axis, value)?;
    let along = 2 - axis;
    let mut out = format!("x{along},v\n");
    for (x, v) in pairs {
        out.push_str(&format!("{x:e},{v:e}\n"));
    }
    fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub requested_t: f64,
    pub t: f64,
    pub level: usize,
    pub field: PathBuf,
    pub image: Option<PathBuf>,
    pub sections: Vec<PathBuf>,
}

/// Index of the files written by a run, sorted by time.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SnapshotManifest {
    pub problem: String,
    pub cells: Vec<usize>,
    pub steps: usize,
    pub snapshots: Vec<SnapshotEntry>,
}

impl SnapshotManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::data(e.to_string()))?;
        fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::sample;
    use crate::harness::{ConvergenceTable, ErrorTriple};

    #[test]
    fn sci_format() {
        assert_eq!(format_sci(9.499e-6), "9.499e-06");
        assert_eq!(format_sci(1.161), "1.161e+00");
        assert_eq!(format_sci(2.366e-9), "2.366e-09");
    }

    #[test]
    fn one_row_table() {
        let e = ErrorTriple { e_c: 1.0, e_c10: 2.0, e_c1: 3.0 };
        let t = ConvergenceTable::from_errors("x", None, &[(5, 20, e)]);
        let s = render_table(&t, TableFormat::Csv).unwrap();
        assert_eq!(s, format!("{TABLE_HEADER}\n5,20,1.000e+00,-,-,2.000e+00,-,-,3.000e+00,-,-\n"));
        let text = render_table(&t, TableFormat::Text).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn constant_grid_csv() {
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2]).unwrap();
        let f = Field::filled(&mesh, 0.5);
        let rows = parse_field_csv(std::str::from_utf8(&encode_field(&f, FieldFormat::CsvGrid).unwrap()).unwrap()).unwrap();
        assert_eq!(rows, vec![vec![0.5; 3]; 3]);
    }

    #[test]
    fn ramp_image_and_posterize() {
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[4, 2]).unwrap();
        let f = sample(&mesh, |x| x[0]).unwrap();
        let (w, h, px) = image_pixels(&f, 0).unwrap();
        assert_eq!((w, h), (5, 3));
        assert_eq!(&px[..5], &[0, 64, 128, 191, 255]);
        let s = sample(&mesh, |x| if x[0] < 0.5 { -1.0 } else { 1.0 }).unwrap();
        let (_, _, px) = image_pixels(&s, 2).unwrap();
        let mut distinct = px.clone();
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct, vec![0, 255]);
        let (_, _, px) = image_pixels(&Field::filled(&mesh, 3.0), 0).unwrap();
        assert!(px.iter().all(|&p| p == 0));
    }

    #[test]
    fn image_top_row_is_high_x2() {
        let mesh = Mesh::uniform(&[(0.0, 1.0), (0.0, 1.0)], &[2, 2]).unwrap();
        let f = sample(&mesh, |x| x[1]).unwrap();
        let (_, _, px) = image_pixels(&f, 0).unwrap();
        assert_eq!(&px[..3], &[255, 255, 255]);
        assert_eq!(&px[6..], &[0, 0, 0]);
    }

    #[test]
    fn sections() {
        let mesh = Mesh::uniform(&[(0.0, 2.0), (0.0, 1.0)], &[4, 4]).unwrap();
        let f = sample(&mesh, |x| x[1]).unwrap();
        let s = section(&mesh, &f, 0, 1.3).unwrap();
        assert!(s.iter().all(|(x, v)| x == v));
        assert!(matches!(section(&mesh, &f, 0, 2.5), Err(Error::Data(_))));
    }
}
