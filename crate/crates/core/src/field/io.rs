//! File formats for rasters, topic fields and interest maps.
//!
//! Topic field text format (version 1):
//!
//! ```text
//! coexplore-topic-field 1
//! width 100
//! height 100
//! topics 8
//! provenance {"kind":"voronoi","n_cells":40,"sigma":5.0,"seed":7}
//! data
//! 0.91 0.02 ...        <- one cell per line, row-major
//! ```
//!
//! Floats use Rust's shortest round-trip representation, so reading a
//! written field reproduces it bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{FieldProvenance, InterestMap, LabelRaster, TopicField};
use crate::error::{Error, Result};

const FIELD_MAGIC: &str = "coexplore-topic-field";
const MAP_MAGIC: &str = "coexplore-interest-map";
const FORMAT_VERSION: u32 = 1;

/// Parses whitespace-separated integer rows. Blank lines and `#` comments are skipped.
pub fn parse_label_grid(text: &str) -> Result<LabelRaster> {
    let mut width = None;
    let mut labels = Vec::new();
    let mut height = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<i64>().map_err(|_| {
                    Error::format("label grid", format!("line {}: bad label {tok:?}", lineno + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::format(
                    "label grid",
                    format!("line {}: expected {w} columns, found {}", lineno + 1, row.len()),
                ))
            }
            _ => {}
        }
        labels.extend(row);
        height += 1;
    }
    LabelRaster::new(width.unwrap_or(0), height, labels)
}

/// Loads a class raster. `.png`, `.pgm` and `.pnm` files are read as
/// single-channel images (grey level = class label); anything else is parsed
/// as a plain-text integer grid.
pub fn load_label_raster(path: impl AsRef<Path>) -> Result<LabelRaster> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("png" | "pgm" | "pnm") => load_image_raster(path),
        _ => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_label_grid(&text)
        }
    }
}

#[cfg(feature = "raster-image")]
fn load_image_raster(path: &Path) -> Result<LabelRaster> {
    let img = image::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    // 16-bit greyscale keeps its raw levels; everything else is read as 8-bit
    let (w, h, labels): (u32, u32, Vec<i64>) = match img {
        image::DynamicImage::ImageLuma16(grey) => {
            let (w, h) = grey.dimensions();
            (w, h, grey.pixels().map(|p| i64::from(p.0[0])).collect())
        }
        other => {
            let grey = other.into_luma8();
            let (w, h) = grey.dimensions();
            (w, h, grey.pixels().map(|p| i64::from(p.0[0])).collect())
        }
    };
    LabelRaster::new(w as usize, h as usize, labels)
}

#[cfg(not(feature = "raster-image"))]
fn load_image_raster(path: &Path) -> Result<LabelRaster> {
    Err(Error::Ingestion(format!(
        "{}: image rasters need the `raster-image` feature",
        path.display()
    )))
}

pub fn field_to_string(field: &TopicField) -> String {
    let mut out = String::with_capacity(field.values().len() * 20);
    let provenance = serde_json::to_string(field.provenance()).expect("provenance serializes");
    let _ = writeln!(out, "{FIELD_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "width {}", field.width());
    let _ = writeln!(out, "height {}", field.height());
    let _ = writeln!(out, "topics {}", field.topics());
    let _ = writeln!(out, "provenance {provenance}");
    out.push_str("data\n");
    for cell in field.cells() {
        for (i, v) in cell.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out
}

struct Header<'a> {
    lines: std::str::Lines<'a>,
    what: &'static str,
}

impl<'a> Header<'a> {
    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self
            .lines
            .next()
            .ok_or_else(|| Error::format(self.what, format!("missing `{key}` line")))?;
        line.strip_prefix(key)
            .and_then(|rest| rest.strip_prefix(' ').or(if rest.is_empty() { Some("") } else { None }))
            .ok_or_else(|| Error::format(self.what, format!("expected `{key}`, found {line:?}")))
    }

    fn usize(&mut self, key: &str) -> Result<usize> {
        let raw = self.field(key)?;
        raw.trim()
            .parse()
            .map_err(|_| Error::format(self.what, format!("bad {key} {raw:?}")))
    }

    fn magic(&mut self, magic: &str) -> Result<()> {
        let version = self.field(magic)?;
        if version.trim() != FORMAT_VERSION.to_string() {
            return Err(Error::format(self.what, format!("unsupported version {version:?}")));
        }
        Ok(())
    }
}

pub fn field_from_str(text: &str) -> Result<TopicField> {
    let mut header = Header { lines: text.lines(), what: "topic field" };
    header.magic(FIELD_MAGIC)?;
    let width = header.usize("width")?;
    let height = header.usize("height")?;
    let topics = header.usize("topics")?;
    let provenance: FieldProvenance = serde_json::from_str(header.field("provenance")?)
        .map_err(|e| Error::format("topic field", format!("provenance: {e}")))?;
    header.field("data")?;
    let mut values = Vec::with_capacity(width * height * topics);
    for (row, line) in header.lines.enumerate() {
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(tok.parse::<f64>().map_err(|_| {
                Error::format("topic field", format!("cell {row}: bad value {tok:?}"))
            })?);
        }
        if values.len() - before != topics {
            return Err(Error::format(
                "topic field",
                format!("cell {row}: expected {topics} values"),
            ));
        }
    }
    TopicField::from_values(width, height, topics, values, provenance)
}

pub fn save_field(field: &TopicField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, field_to_string(field)).map_err(|e| Error::io(path, e))
}

pub fn load_field(path: impl AsRef<Path>) -> Result<TopicField> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    field_from_str(&text)
}

pub fn interest_map_to_string(map: &InterestMap) -> String {
    let mut out = String::with_capacity(map.labels().len() + map.height() + 64);
    let _ = writeln!(out, "{MAP_MAGIC} {FORMAT_VERSION}");
    let _ = writeln!(out, "width {}", map.width());
    let _ = writeln!(out, "height {}", map.height());
    out.push_str("data\n");
    for row in map.labels().chunks(map.width().max(1)) {
        out.extend(row.iter().map(|&l| if l { '1' } else { '0' }));
        out.push('\n');
    }
    out
}

pub fn interest_map_from_str(text: &str) -> Result<InterestMap> {
    let mut header = Header { lines: text.lines(), what: "interest map" };
    header.magic(MAP_MAGIC)?;
    let width = header.usize("width")?;
    let height = header.usize("height")?;
    header.field("data")?;
    let mut labels = Vec::with_capacity(width * height);
    for line in header.lines {
        for c in line.trim().chars() {
            labels.push(match c {
                '0' => false,
                '1' => true,
                other => {
                    return Err(Error::format("interest map", format!("bad label {other:?}")))
                }
            });
        }
    }
    InterestMap::new(width, height, labels)
}

pub fn save_interest_map(map: &InterestMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, interest_map_to_string(map)).map_err(|e| Error::io(path, e))
}

pub fn load_interest_map(path: impl AsRef<Path>) -> Result<InterestMap> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    interest_map_from_str(&text)
}
