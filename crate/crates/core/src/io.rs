//! Cloud file formats.
//!
//! `ppmx` (little-endian):
//!
//! | field   | type      | notes                         |
//! |---------|-----------|-------------------------------|
//! | magic   | `b"PPMX"` |                               |
//! | version | u16       | 1                             |
//! | flags   | u16       | bit 0: label present          |
//! | N       | u32       | point count                   |
//! | C       | u32       | class count, 0 if none        |
//! | label   | u32       | only when flag bit 0 is set   |
//! | points  | N*3 f32   | x, y, z point-major           |
//!
//! `xyz` text: one point per line as three whitespace-separated decimals.
//! Lines starting with `#` are comments; `# label <k>` and `# classes <C>`
//! carry the label metadata.

use std::path::Path;

use crate::cloud::{Point, PointCloud};
use crate::error::{Error, Offset, Result};

pub const PPMX_MAGIC: &[u8; 4] = b"PPMX";
pub const PPMX_VERSION: u16 = 1;
const FLAG_LABEL: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    XyzText,
    PpmxBinary,
}

impl CloudFormat {
    /// Guesses the format from a file extension (`.ppmx` or `.xyz`/`.txt`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "ppmx" => Some(CloudFormat::PpmxBinary),
            "xyz" | "txt" => Some(CloudFormat::XyzText),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            CloudFormat::XyzText => "xyz",
            CloudFormat::PpmxBinary => "ppmx",
        }
    }
}

/// Size of a ppmx header for the given cloud.
pub fn ppmx_header_len(has_label: bool) -> usize {
    16 + if has_label { 4 } else { 0 }
}

pub fn encode_ppmx(cloud: &PointCloud) -> Vec<u8> {
    let has_label = cloud.label().is_some();
    let mut out = Vec::with_capacity(ppmx_header_len(has_label) + cloud.len() * 12);
    out.extend_from_slice(PPMX_MAGIC);
    out.extend_from_slice(&PPMX_VERSION.to_le_bytes());
    let flags = if has_label { FLAG_LABEL } else { 0 };
    out.extend_from_slice(&flags.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u32).to_le_bytes());
    out.extend_from_slice(&cloud.num_classes().unwrap_or(0).to_le_bytes());
    if let Some(label) = cloud.label() {
        out.extend_from_slice(&label.to_le_bytes());
    }
    for p in cloud.points() {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn decode_ppmx(bytes: &[u8]) -> Result<PointCloud> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4)?;
    if magic != PPMX_MAGIC {
        return Err(Error::format(Offset::Byte(0), "bad magic, expected PPMX"));
    }
    let at = r.pos();
    let version = r.u16()?;
    if version != PPMX_VERSION {
        return Err(Error::format(
            Offset::Byte(at),
            format!("unsupported ppmx version {version}"),
        ));
    }
    let at = r.pos();
    let flags = r.u16()?;
    if flags & !FLAG_LABEL != 0 {
        return Err(Error::format(
            Offset::Byte(at),
            format!("unknown flag bits {flags:#06x}"),
        ));
    }
    let at = r.pos();
    let n = r.u32()? as usize;
    if n == 0 {
        return Err(Error::format(Offset::Byte(at), "point count must be at least 1"));
    }
    let c_at = r.pos();
    let num_classes = r.u32()?;
    let label = if flags & FLAG_LABEL != 0 {
        Some((r.pos(), r.u32()?))
    } else {
        None
    };
    let expected = r.pos() as usize + n * 12;
    if bytes.len() != expected {
        return Err(Error::format(
            Offset::Byte(bytes.len().min(expected) as u64),
            format!(
                "payload length mismatch: header declares {n} points ({expected} bytes), file has {}",
                bytes.len()
            ),
        ));
    }
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let at = r.pos();
        let p = [r.f32()?, r.f32()?, r.f32()?];
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(Offset::Byte(at), "non-finite coordinate"));
        }
        points.push(p);
    }
    let cloud = PointCloud::new(points)?;
    let classes = (num_classes != 0).then_some(num_classes);
    match label {
        Some((at, l)) => cloud
            .with_label(l, classes)
            .map_err(|e| Error::format(Offset::Byte(at), e.to_string())),
        None if classes.is_some() => Err(Error::format(
            Offset::Byte(c_at),
            "class count present without a label",
        )),
        None => Ok(cloud),
    }
}

pub fn encode_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in cloud.points() {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    if let Some(label) = cloud.label() {
        out.push_str(&format!("# label {label}\n"));
    }
    if let Some(c) = cloud.num_classes() {
        out.push_str(&format!("# classes {c}\n"));
    }
    out
}

pub fn decode_xyz(text: &str) -> Result<PointCloud> {
    let mut points: Vec<Point> = Vec::new();
    let mut label = None;
    let mut classes = None;
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut toks = comment.split_whitespace();
            let key = toks.next();
            let value = toks.next().and_then(|v| v.parse::<u32>().ok());
            match (key, value, toks.next()) {
                (Some("label"), Some(v), None) => label = Some(v),
                (Some("classes"), Some(v), None) => classes = Some(v),
                _ => {}
            }
            continue;
        }
        let mut coords = [0.0f32; 3];
        let mut toks = line.split_whitespace();
        for c in coords.iter_mut() {
            let tok = toks
                .next()
                .ok_or_else(|| Error::format(Offset::Line(lineno), "expected 3 coordinates"))?;
            *c = tok.parse().map_err(|_| {
                Error::format(Offset::Line(lineno), format!("invalid number {tok:?}"))
            })?;
            if !c.is_finite() {
                return Err(Error::format(Offset::Line(lineno), "non-finite coordinate"));
            }
        }
        if toks.next().is_some() {
            return Err(Error::format(Offset::Line(lineno), "expected 3 coordinates"));
        }
        points.push(coords);
    }
    if points.is_empty() {
        return Err(Error::format(Offset::Line(1), "no points in file"));
    }
    let cloud = PointCloud::new(points)?;
    match (label, classes) {
        (Some(l), c) => cloud.with_label(l, c),
        (None, Some(_)) => Err(Error::format(
            Offset::Line(1),
            "class count present without a label",
        )),
        (None, None) => Ok(cloud),
    }
}

pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Vec<u8> {
    match format {
        CloudFormat::PpmxBinary => encode_ppmx(cloud),
        CloudFormat::XyzText => encode_xyz(cloud).into_bytes(),
    }
}

pub fn decode_cloud(bytes: &[u8], format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::PpmxBinary => decode_ppmx(bytes),
        CloudFormat::XyzText => {
            let text = std::str::from_utf8(bytes).map_err(|e| {
                Error::format(Offset::Byte(e.valid_up_to() as u64), "invalid UTF-8")
            })?;
            decode_xyz(text)
        }
    }
}

/// Reads a cloud, using the file stem as its id.
pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let cloud = decode_cloud(&bytes, format).map_err(|e| e.in_file(path))?;
    Ok(match path.file_stem().and_then(|s| s.to_str()) {
        Some(stem) => cloud.with_id(stem),
        None => cloud,
    })
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    std::fs::write(path, encode_cloud(cloud, format)).map_err(|e| Error::io(path, e))
}

/// Little-endian cursor that reports byte offsets on truncation.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn pos(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                Offset::Byte(self.bytes.len() as u64),
                format!("unexpected end of file, needed {n} bytes at byte {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
