//! `HTF1` binary container for complex fields and volumes.
//!
//! Layout (little endian):
//!
//! | offset | size | content |
//! |-------:|-----:|---------|
//! | 0  | 4 | magic `HTF1` |
//! | 4  | 2 | version `u16` (1) |
//! | 6  | 2 | kind `u16`: 0 field2d, 1 volume |
//! | 8  | 12 | nx, ny, nz `u32` |
//! | 20 | 56 | dx, dy, dz, wavelength, na, magnification, z_center `f64` |
//! | 76 | 16 nx ny nz | `(re, im)` pairs as `f64`, x fastest, then y, then z |
//!
//! A 2D field is stored with `nz = 1` and `z_center = 0`.

use std::fs;
use std::path::Path;

use ndarray::{Array2, Array3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{Field2D, FieldVolume, GridSpec};

pub const MAGIC: &[u8; 4] = b"HTF1";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 76;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum FieldKind {
    Field2D = 0,
    Volume = 1,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Header {
    pub kind: FieldKind,
    pub nx: u32,
    pub ny: u32,
    pub nz: u32,
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
    pub wavelength: f64,
    pub na: f64,
    pub magnification: f64,
    pub z_center: f64,
}

impl Header {
    fn for_grid(kind: FieldKind, g: &GridSpec, nz: usize, z_center: f64) -> Result<Self> {
        let dim = |n: usize| u32::try_from(n).map_err(|_| Error::Format(format!("dimension {n} exceeds u32")));
        Ok(Header {
            kind,
            nx: dim(g.nx)?,
            ny: dim(g.ny)?,
            nz: dim(nz)?,
            dx: g.dx,
            dy: g.dy,
            dz: g.dz,
            wavelength: g.wavelength,
            na: g.na,
            magnification: g.magnification,
            z_center,
        })
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.nx as usize,
            self.ny as usize,
            self.dx,
            self.dy,
            self.dz,
            self.wavelength,
            self.na,
            self.magnification,
        )
    }

    pub fn samples(&self) -> usize {
        self.nx as usize * self.ny as usize * self.nz as usize
    }

    fn encode(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.kind as u16).to_le_bytes());
        for n in [self.nx, self.ny, self.nz] {
            out.extend_from_slice(&n.to_le_bytes());
        }
        for v in [
            self.dx,
            self.dy,
            self.dz,
            self.wavelength,
            self.na,
            self.magnification,
            self.z_center,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }

    fn decode(bytes: &[u8], source: &str) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(Error::BadMagic(source.to_string()));
        }
        if bytes.len() < HEADER_LEN {
            return Err(Error::Format(format!(
                "{source}: truncated header ({} bytes)",
                bytes.len()
            )));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != VERSION {
            return Err(Error::Format(format!("{source}: unsupported version {version}")));
        }
        let kind = match u16_at(6) {
            0 => FieldKind::Field2D,
            1 => FieldKind::Volume,
            k => return Err(Error::Format(format!("{source}: unknown kind {k}"))),
        };
        Ok(Header {
            kind,
            nx: u32_at(8),
            ny: u32_at(12),
            nz: u32_at(16),
            dx: f64_at(20),
            dy: f64_at(28),
            dz: f64_at(36),
            wavelength: f64_at(44),
            na: f64_at(52),
            magnification: f64_at(60),
            z_center: f64_at(68),
        })
    }
}

/// Decoded file contents.
#[derive(Clone, Debug, PartialEq)]
pub enum Stored {
    Field(Field2D),
    Volume(FieldVolume),
}

impl Stored {
    pub fn grid(&self) -> &GridSpec {
        match self {
            Stored::Field(f) => f.grid(),
            Stored::Volume(v) => v.grid(),
        }
    }
}

fn encode_payload<'a>(values: impl Iterator<Item = &'a Complex64>, out: &mut Vec<u8>) {
    for c in values {
        out.extend_from_slice(&c.re.to_le_bytes());
        out.extend_from_slice(&c.im.to_le_bytes());
    }
}

pub fn encode_field(f: &Field2D) -> Result<Vec<u8>> {
    let h = Header::for_grid(FieldKind::Field2D, f.grid(), 1, 0.0)?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * h.samples());
    h.encode(&mut out);
    encode_payload(f.values().iter(), &mut out);
    Ok(out)
}

pub fn encode_volume(u: &FieldVolume) -> Result<Vec<u8>> {
    let h = Header::for_grid(FieldKind::Volume, u.grid(), u.nz(), u.z_center())?;
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * h.samples());
    h.encode(&mut out);
    encode_payload(u.values().iter(), &mut out);
    Ok(out)
}

/// Parses an `HTF1` byte buffer. `source` names the input in error messages.
pub fn decode(bytes: &[u8], source: &str) -> Result<Stored> {
    let h = Header::decode(bytes, source)?;
    let grid = h.grid()?;
    let n = h.samples();
    let expected = HEADER_LEN + 16 * n;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{source}: payload holds {} bytes, header implies {}",
            bytes.len().saturating_sub(HEADER_LEN),
            16 * n
        )));
    }
    let values: Vec<Complex64> = bytes[HEADER_LEN..]
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    let (nx, ny, nz) = (h.nx as usize, h.ny as usize, h.nz as usize);
    match h.kind {
        FieldKind::Field2D => {
            if nz != 1 {
                return Err(Error::Format(format!("{source}: 2D field with nz = {nz}")));
            }
            let a = Array2::from_shape_vec((ny, nx), values).expect("length checked");
            Ok(Stored::Field(Field2D::new(grid, a)?))
        }
        FieldKind::Volume => {
            let a = Array3::from_shape_vec((nz, ny, nx), values).expect("length checked");
            Ok(Stored::Volume(FieldVolume::new(grid, h.z_center, a)?))
        }
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_field(path: impl AsRef<Path>, f: &Field2D) -> Result<()> {
    write_bytes(path.as_ref(), &encode_field(f)?)
}

pub fn write_volume(path: impl AsRef<Path>, u: &FieldVolume) -> Result<()> {
    write_bytes(path.as_ref(), &encode_volume(u)?)
}

pub fn read_stored(path: impl AsRef<Path>) -> Result<Stored> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<Field2D> {
    match read_stored(path.as_ref())? {
        Stored::Field(f) => Ok(f),
        Stored::Volume(_) => Err(Error::Format(format!(
            "{}: expected a 2D field, found a volume",
            path.as_ref().display()
        ))),
    }
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<FieldVolume> {
    match read_stored(path.as_ref())? {
        Stored::Volume(u) => Ok(u),
        Stored::Field(_) => Err(Error::Format(format!(
            "{}: expected a volume, found a 2D field",
            path.as_ref().display()
        ))),
    }
}
