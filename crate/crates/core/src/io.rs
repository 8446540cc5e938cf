//! Field files and boundary-trace tables.
//!
//! A field is stored as `<name>.bin` (little-endian `f64` pairs `(re, im)`,
//! component-major, x fastest) next to a JSON sidecar `<name>.json` holding
//! `{N, box_side, components, name}`.

use crate::domain::BoundarySample;
use crate::error::{Error, Result};
use crate::grid::{Field, Grid, ScalarField, VectorField, C64};
use crate::vec3::CVec;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    #[serde(rename = "N")]
    pub n: usize,
    pub box_side: f64,
    pub components: usize,
    pub name: String,
}

impl FieldHeader {
    pub fn for_field(field: &Field, name: &str) -> Self {
        FieldHeader {
            n: field.grid().n(),
            box_side: field.grid().box_side(),
            components: field.component_count(),
            name: name.to_string(),
        }
    }

    pub fn payload_len(&self) -> Option<usize> {
        self.n
            .checked_mul(self.n)?
            .checked_mul(self.n)?
            .checked_mul(self.components)?
            .checked_mul(16)
    }
}

pub fn encode_field(field: &Field) -> Vec<u8> {
    let slices = field.component_slices();
    let mut out = Vec::with_capacity(slices.len() * slices[0].len() * 16);
    for comp in slices {
        for v in comp {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
    }
    out
}

pub fn parse_header(json: &str) -> Result<FieldHeader> {
    let h: FieldHeader = serde_json::from_str(json)?;
    if h.components != 1 && h.components != 3 {
        return Err(Error::Format(format!(
            "component count {} not in {{1, 3}}",
            h.components
        )));
    }
    Grid::new(h.n, h.box_side)?;
    if h.payload_len().is_none() {
        return Err(Error::Format("grid size overflows".into()));
    }
    Ok(h)
}

/// Decodes a payload against its header; rejects size mismatches and non-finite samples.
pub fn decode_field(bytes: &[u8], header: &FieldHeader) -> Result<Field> {
    let grid = Grid::new(header.n, header.box_side)?;
    let want = header
        .payload_len()
        .ok_or_else(|| Error::Format("grid size overflows".into()))?;
    if bytes.len() != want {
        return Err(Error::Format(format!(
            "payload has {} bytes, expected {want}",
            bytes.len()
        )));
    }
    let count = grid.node_count();
    let mut comps: Vec<Vec<C64>> = Vec::with_capacity(header.components);
    for c in 0..header.components {
        let mut v = Vec::with_capacity(count);
        for i in 0..count {
            let off = (c * count + i) * 16;
            let re = f64::from_le_bytes(bytes[off..off + 8].try_into().expect("8 bytes"));
            let im = f64::from_le_bytes(bytes[off + 8..off + 16].try_into().expect("8 bytes"));
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::Format(format!("non-finite sample at component {c}, node {i}")));
            }
            v.push(C64::new(re, im));
        }
        comps.push(v);
    }
    Ok(match header.components {
        1 => Field::Scalar(ScalarField::from_values(grid, comps.pop().expect("one"))?),
        _ => {
            let c2 = comps.pop().expect("three");
            let c1 = comps.pop().expect("three");
            let c0 = comps.pop().expect("three");
            Field::Vector(VectorField::from_components(grid, [c0, c1, c2])?)
        }
    })
}

pub fn field_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{name}.bin")), dir.join(format!("{name}.json")))
}

/// Writes `<dir>/<name>.bin` and `<dir>/<name>.json`; returns the binary path.
pub fn write_field(dir: &Path, name: &str, field: &Field) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (bin, json) = field_paths(dir, name);
    std::fs::write(&bin, encode_field(field))?;
    let header = FieldHeader::for_field(field, name);
    std::fs::write(&json, serde_json::to_string_pretty(&header)?)?;
    Ok(bin)
}

pub fn read_field(dir: &Path, name: &str) -> Result<Field> {
    let (bin, json) = field_paths(dir, name);
    let header = parse_header(&std::fs::read_to_string(json)?)?;
    decode_field(&std::fs::read(bin)?, &header)
}

pub fn read_scalar(dir: &Path, name: &str) -> Result<ScalarField> {
    match read_field(dir, name)? {
        Field::Scalar(f) => Ok(f),
        Field::Vector(_) => Err(Error::Format(format!("{name}: expected a scalar field"))),
    }
}

pub fn read_vector(dir: &Path, name: &str) -> Result<VectorField> {
    match read_field(dir, name)? {
        Field::Vector(f) => Ok(f),
        Field::Scalar(_) => Err(Error::Format(format!("{name}: expected a vector field"))),
    }
}

/// One row of a boundary-trace table: sample geometry, `G = ν×E` and `ν×D`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub nx: f64,
    pub ny: f64,
    pub nz: f64,
    pub g1_re: f64,
    pub g1_im: f64,
    pub g2_re: f64,
    pub g2_im: f64,
    pub g3_re: f64,
    pub g3_im: f64,
    pub d1_re: f64,
    pub d1_im: f64,
    pub d2_re: f64,
    pub d2_im: f64,
    pub d3_re: f64,
    pub d3_im: f64,
}

impl TraceRow {
    pub fn new(s: &BoundarySample, g: CVec, d: CVec) -> Self {
        TraceRow {
            x: s.point[0],
            y: s.point[1],
            z: s.point[2],
            nx: s.normal[0],
            ny: s.normal[1],
            nz: s.normal[2],
            g1_re: g[0].re,
            g1_im: g[0].im,
            g2_re: g[1].re,
            g2_im: g[1].im,
            g3_re: g[2].re,
            g3_im: g[2].im,
            d1_re: d[0].re,
            d1_im: d[0].im,
            d2_re: d[1].re,
            d2_im: d[1].im,
            d3_re: d[2].re,
            d3_im: d[2].im,
        }
    }

    pub fn point(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn normal(&self) -> [f64; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub fn g(&self) -> CVec {
        [
            C64::new(self.g1_re, self.g1_im),
            C64::new(self.g2_re, self.g2_im),
            C64::new(self.g3_re, self.g3_im),
        ]
    }

    pub fn d(&self) -> CVec {
        [
            C64::new(self.d1_re, self.d1_im),
            C64::new(self.d2_re, self.d2_im),
            C64::new(self.d3_re, self.d3_im),
        ]
    }

    fn is_finite(&self) -> bool {
        [
            self.x, self.y, self.z, self.nx, self.ny, self.nz, self.g1_re, self.g1_im, self.g2_re, self.g2_im,
            self.g3_re, self.g3_im, self.d1_re, self.d1_im, self.d2_re, self.d2_im, self.d3_re, self.d3_im,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

pub fn encode_traces(rows: &[TraceRow]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Parses a trace table; every value must be finite and every normal unit length.
pub fn decode_traces(bytes: &[u8]) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(bytes);
    let mut rows = Vec::new();
    for (i, rec) in r.deserialize::<TraceRow>().enumerate() {
        let row = rec?;
        if !row.is_finite() {
            return Err(Error::Format(format!("row {i}: non-finite value")));
        }
        let nn = crate::vec3::rnorm(row.normal());
        if (nn - 1.0).abs() > 1e-9 {
            return Err(Error::Format(format!("row {i}: normal has length {nn}")));
        }
        rows.push(row);
    }
    Ok(rows)
}
