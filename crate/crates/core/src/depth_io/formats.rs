//! Depth frame file formats: binary PGM (`P5`), raw little-endian 16-bit with
//! a JSON sidecar, and comma-separated text.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DepthFrame;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DepthFormat {
    Pgm16,
    Raw16le,
    Csv,
}

impl DepthFormat {
    /// Guesses the format from a file extension (`pgm`, `raw`, `csv`).
    pub fn from_extension(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "pgm" => Some(DepthFormat::Pgm16),
            "raw" => Some(DepthFormat::Raw16le),
            "csv" => Some(DepthFormat::Csv),
            _ => None,
        }
    }
}

impl FromStr for DepthFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pgm16" | "pgm" => Ok(DepthFormat::Pgm16),
            "raw16le" | "raw" => Ok(DepthFormat::Raw16le),
            "csv" => Ok(DepthFormat::Csv),
            other => Err(format!("unknown depth format `{other}`")),
        }
    }
}

/// Width and height for a `raw16le` frame, stored next to it as
/// `<name>.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub width: usize,
    pub height: usize,
}

pub fn load_depth_frame(path: impl AsRef<Path>, format: DepthFormat) -> Result<DepthFrame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        DepthFormat::Pgm16 => {
            let img = parse_pgm(path, &bytes)?;
            DepthFrame::new(img.width, img.height, img.data).map_err(|e| with_path(e, path))
        }
        DepthFormat::Raw16le => parse_raw16le(path, &bytes),
        DepthFormat::Csv => parse_csv(path, &bytes),
    }
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::DimensionMismatch { reason, .. } => Error::DimensionMismatch {
            context: path.display().to_string(),
            reason,
        },
        other => other,
    }
}

/// A decoded PGM image. Samples are widened to `u16` regardless of maxval.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PgmImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PgmImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(path, &bytes)
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            if b == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Option<&str> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .filter(|s| !s.is_empty())
    }
}

fn parse_pgm(path: &Path, bytes: &[u8]) -> Result<PgmImage> {
    let mut cur = HeaderCursor { bytes, pos: 0 };
    match cur.token() {
        Some("P5") => {}
        Some(other) => {
            return Err(Error::header(
                path,
                format!("expected magic P5, got `{other}`"),
            ))
        }
        None => return Err(Error::header(path, "empty file")),
    }
    let mut field = |name: &str| -> Result<usize> {
        let tok = cur
            .token()
            .ok_or_else(|| Error::header(path, format!("missing {name}")))?;
        tok.parse::<usize>()
            .map_err(|_| Error::header(path, format!("{name} `{tok}` is not an integer")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::header(path, "zero width or height"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::header(
            path,
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
        return Err(Error::header(path, "missing raster separator"));
    }
    let raster = &bytes[cur.pos + 1..];
    let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
    let expected = width * height * bytes_per_sample;
    if raster.len() != expected {
        return Err(Error::DimensionMismatch {
            context: path.display().to_string(),
            reason: format!(
                "{width}×{height} at {bytes_per_sample} byte(s)/sample needs {expected} raster bytes, found {}",
                raster.len()
            ),
        });
    }
    let data = if bytes_per_sample == 2 {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        raster.iter().map(|&b| b as u16).collect()
    };
    Ok(PgmImage {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn parse_raw16le(path: &Path, bytes: &[u8]) -> Result<DepthFrame> {
    let sidecar_path = sidecar_path(path);
    let text = fs::read_to_string(&sidecar_path).map_err(|e| Error::io(&sidecar_path, e))?;
    let sidecar: RawSidecar = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: sidecar_path.clone(),
        source: e,
    })?;
    if bytes.is_empty() {
        return Err(Error::header(path, "empty file"));
    }
    let expected = sidecar.width * sidecar.height * 2;
    if bytes.len() != expected {
        return Err(Error::DimensionMismatch {
            context: path.display().to_string(),
            reason: format!(
                "sidecar declares {}×{} ({} bytes), file has {} bytes",
                sidecar.width,
                sidecar.height,
                expected,
                bytes.len()
            ),
        });
    }
    let data = bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    DepthFrame::new(sidecar.width, sidecar.height, data).map_err(|e| with_path(e, path))
}

fn parse_csv(path: &Path, bytes: &[u8]) -> Result<DepthFrame> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let mut width = None;
    let mut data = Vec::new();
    let mut height = 0;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::DimensionMismatch {
            context: path.display().to_string(),
            reason: format!("row {}: {e}", row + 1),
        })?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::DimensionMismatch {
                    context: path.display().to_string(),
                    reason: format!("row {} has {} values, expected {w}", row + 1, record.len()),
                })
            }
            Some(_) => {}
        }
        for field in record.iter() {
            let value = field.parse::<u16>().map_err(|_| {
                Error::header(
                    path,
                    format!("row {}: `{field}` is not a 16-bit depth sample", row + 1),
                )
            })?;
            data.push(value);
        }
        height += 1;
    }
    let width = width.ok_or_else(|| Error::header(path, "no rows"))?;
    DepthFrame::new(width, height, data).map_err(|e| with_path(e, path))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes a 16-bit binary PGM with maxval 65535 (big-endian samples).
pub fn write_pgm16(
    path: impl AsRef<Path>,
    width: usize,
    height: usize,
    data: &[u16],
) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n65535\n").into_bytes();
    out.reserve(data.len() * 2);
    for &s in data {
        out.extend_from_slice(&s.to_be_bytes());
    }
    write_bytes(path.as_ref(), &out)
}

/// Writes an 8-bit binary PGM with maxval 255.
pub fn write_pgm8(path: impl AsRef<Path>, width: usize, height: usize, data: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(data);
    write_bytes(path.as_ref(), &out)
}

/// Writes raw little-endian samples plus the `<name>.json` sidecar.
pub fn write_raw16le(path: impl AsRef<Path>, frame: &DepthFrame) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = frame.data().iter().flat_map(|s| s.to_le_bytes()).collect();
    write_bytes(path, &bytes)?;
    let sidecar = RawSidecar {
        width: frame.width(),
        height: frame.height(),
    };
    let json = serde_json::to_string(&sidecar).expect("sidecar serializes");
    write_bytes(&sidecar_path(path), json.as_bytes())
}

pub fn write_csv(path: impl AsRef<Path>, frame: &DepthFrame) -> Result<()> {
    let mut out = String::new();
    for row in frame.data().chunks(frame.width()) {
        let line: Vec<String> = row.iter().map(u16::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_bytes(path.as_ref(), out.as_bytes())
}
