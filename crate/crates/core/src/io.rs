//! File formats.
//!
//! * `FSR1` field series: magic `FSR1`, `u32` LE rows, cols, T; `rows*cols`
//!   land bytes (0/1); `T*rows*cols` `f32` LE values (time-major, row-major);
//!   `T*2` `u16` LE (year, day of year).
//! * Single fields as CSV, row-major, land written as `NaN`.
//! * 8-bit binary PGM heatmaps with a `.txt` sidecar recording the scaling.
//! * `CKP1` checkpoints: magic `CKP1`, `u32` LE rows, cols, section count;
//!   each section is a `u32` name length, ASCII name, `u32` rank, `u64` LE
//!   dims, then `f64` LE payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries, GridShape, LandMask, Stamp};

const FSR_MAGIC: &[u8; 4] = b"FSR1";
const CKP_MAGIC: &[u8; 4] = b"CKP1";

fn format_err(what: &'static str, detail: impl Into<String>) -> Error {
    Error::Format {
        what,
        detail: detail.into(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Cursor<'a> {
    fn new(buf: &'a [u8], what: &'static str) -> Self {
        Self { buf, pos: 0, what }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| format_err(self.what, format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(format_err(
                self.what,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn encode_series(series: &FieldSeries) -> Vec<u8> {
    let shape = series.shape();
    let n = shape.len();
    let t = series.len();
    let mut out = Vec::with_capacity(16 + n + 4 * n * t + 4 * t);
    out.extend_from_slice(FSR_MAGIC);
    for v in [shape.rows, shape.cols, t] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend(series.land().as_slice().iter().map(|&l| l as u8));
    for field in series.fields() {
        for &v in field.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for s in series.stamps() {
        out.extend_from_slice(&s.year.to_le_bytes());
        out.extend_from_slice(&s.day.to_le_bytes());
    }
    out
}

pub fn decode_series(bytes: &[u8]) -> Result<FieldSeries> {
    let mut cur = Cursor::new(bytes, "FSR1 series");
    if cur.take(4)? != FSR_MAGIC {
        return Err(format_err("FSR1 series", "bad magic"));
    }
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let t = cur.u32()? as usize;
    let shape = GridShape::new(rows, cols).map_err(|e| format_err("FSR1 series", e.to_string()))?;
    let land_bytes = cur.take(shape.len())?;
    let land = land_bytes
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format_err("FSR1 series", format!("land byte {other}"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let land = LandMask::new(shape, land)?;
    let mut fields = Vec::with_capacity(t);
    for _ in 0..t {
        let values = (0..shape.len())
            .map(|_| cur.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        fields.push(Field::new(land.clone(), values).map_err(|e| format_err("FSR1 series", e.to_string()))?);
    }
    let mut stamps = Vec::with_capacity(t);
    for _ in 0..t {
        let year = cur.u16()?;
        let day = cur.u16()?;
        stamps.push(Stamp::new(year, day).map_err(|e| format_err("FSR1 series", e.to_string()))?);
    }
    cur.finish()?;
    FieldSeries::new(fields, stamps).map_err(|e| format_err("FSR1 series", e.to_string()))
}

pub fn write_series(path: &Path, series: &FieldSeries) -> Result<()> {
    write_bytes(path, &encode_series(series))
}

pub fn read_series(path: &Path) -> Result<FieldSeries> {
    decode_series(&read_bytes(path)?)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Row-major CSV; non-finite and land cells are written as `NaN`.
pub fn field_to_csv(field: &Field) -> String {
    let shape = field.shape();
    let mut out = String::new();
    for r in 0..shape.rows {
        let line: Vec<String> = (0..shape.cols)
            .map(|c| {
                let v = field.get(r, c);
                if field.is_land(r, c) || !v.is_finite() {
                    "NaN".to_string()
                } else {
                    format!("{v}")
                }
            })
            .collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Parses a CSV grid; `NaN` cells become land.
pub fn field_from_csv(text: &str) -> Result<Field> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|tok| {
                let tok = tok.trim();
                tok.parse::<f64>()
                    .map_err(|_| format_err("field CSV", format!("line {}: bad number `{tok}`", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        match cols {
            None => cols = Some(row.len()),
            Some(c) if c != row.len() => {
                return Err(format_err(
                    "field CSV",
                    format!("line {} has {} columns, expected {c}", lineno + 1, row.len()),
                ))
            }
            _ => {}
        }
        values.extend(row);
        rows += 1;
    }
    let shape = GridShape::new(rows, cols.unwrap_or(0))
        .map_err(|_| format_err("field CSV", "empty grid"))?;
    let land = LandMask::new(shape, values.iter().map(|v| v.is_nan()).collect())?;
    Field::new(land, values)
}

pub fn write_field_csv(path: &Path, field: &Field) -> Result<()> {
    write_bytes(path, field_to_csv(field).as_bytes())
}

pub fn read_field_csv(path: &Path) -> Result<Field> {
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| format_err("field CSV", "not UTF-8"))?;
    field_from_csv(&text)
}

/// Linear scaling used for a PGM heatmap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PgmScale {
    pub min: f64,
    pub max: f64,
}

/// 8-bit binary PGM. Finite sea values map linearly from `[min, max]` to
/// `1..=255`; land and non-finite cells are 0.
pub fn field_to_pgm(field: &Field) -> (Vec<u8>, PgmScale) {
    let shape = field.shape();
    let finite: Vec<f64> = field
        .sea_values()
        .map(|(_, v)| v)
        .filter(|v| v.is_finite())
        .collect();
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scale = if finite.is_empty() {
        PgmScale { min: 0.0, max: 0.0 }
    } else {
        PgmScale { min, max }
    };
    let mut out = format!("P5\n{} {}\n255\n", shape.cols, shape.rows).into_bytes();
    for (i, &v) in field.values().iter().enumerate() {
        let px = if field.land().is_land(i) || !v.is_finite() {
            0
        } else if scale.max > scale.min {
            1 + ((v - scale.min) / (scale.max - scale.min) * 254.0).round() as u8
        } else {
            128
        };
        out.push(px);
    }
    (out, scale)
}

/// Writes `path` and `path.txt` with the scaling.
pub fn write_field_pgm(path: &Path, field: &Field) -> Result<()> {
    let (bytes, scale) = field_to_pgm(field);
    write_bytes(path, &bytes)?;
    let mut sidecar = path.as_os_str().to_owned();
    sidecar.push(".txt");
    let text = format!(
        "scaling=linear\nmin={}\nmax={}\nlevels=1..255\nmasked=0\n",
        scale.min, scale.max
    );
    write_bytes(Path::new(&sidecar), text.as_bytes())
}

/// Named `f64` block in a checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Section {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, data: Vec<f64>) -> Self {
        let s = Self {
            name: name.into(),
            dims,
            data,
        };
        debug_assert_eq!(s.dims.iter().product::<usize>(), s.data.len());
        s
    }

    pub fn vector(name: impl Into<String>, data: Vec<f64>) -> Self {
        let n = data.len();
        Self::new(name, vec![n], data)
    }
}

/// Container of named `f64` blocks keyed to one grid shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub shape: GridShape,
    pub sections: Vec<Section>,
}

impl Checkpoint {
    pub fn new(shape: GridShape) -> Self {
        Self {
            shape,
            sections: Vec::new(),
        }
    }

    pub fn push(&mut self, section: Section) {
        self.sections.push(section);
    }

    pub fn section(&self, name: &str) -> Result<&Section> {
        self.sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| format_err("checkpoint", format!("missing section {name}")))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CKP_MAGIC);
        out.extend_from_slice(&(self.shape.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.shape.cols as u32).to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for s in &self.sections {
            out.extend_from_slice(&(s.name.len() as u32).to_le_bytes());
            out.extend_from_slice(s.name.as_bytes());
            out.extend_from_slice(&(s.dims.len() as u32).to_le_bytes());
            for &d in &s.dims {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in &s.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor::new(bytes, "checkpoint");
        if cur.take(4)? != CKP_MAGIC {
            return Err(format_err("checkpoint", "bad magic"));
        }
        let rows = cur.u32()? as usize;
        let cols = cur.u32()? as usize;
        let shape = GridShape::new(rows, cols).map_err(|e| format_err("checkpoint", e.to_string()))?;
        let count = cur.u32()?;
        let mut sections = Vec::new();
        for _ in 0..count {
            let name_len = cur.u32()? as usize;
            let name = std::str::from_utf8(cur.take(name_len)?)
                .map_err(|_| format_err("checkpoint", "section name not UTF-8"))?
                .to_string();
            let rank = cur.u32()? as usize;
            let dims = (0..rank)
                .map(|_| cur.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len: usize = dims.iter().product();
            if len > bytes.len() / 8 {
                return Err(format_err("checkpoint", format!("section {name} too large")));
            }
            let data = (0..len).map(|_| cur.f64()).collect::<Result<Vec<_>>>()?;
            sections.push(Section { name, dims, data });
        }
        cur.finish()?;
        Ok(Self { shape, sections })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_bytes(path, &self.encode())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::decode(&read_bytes(path)?)
    }
}
