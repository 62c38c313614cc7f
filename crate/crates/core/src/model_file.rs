//! Versioned flat file for linear model weights.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                           |
//! |--------|------|-------------------------------------------------|
//! | 0      | 4    | magic `KGSM`                                    |
//! | 4      | 2    | format version (u16, currently 1)               |
//! | 6      | 1    | kind: 1 detector, 2 domain classifier, 3 ranker |
//! | 7      | 1    | reserved, 0                                     |
//! | 8      | 4    | output count `C` (u32)                          |
//! | 12     | 4    | feature dimension `D` (u32, hash size)          |
//! | 16     | 8    | decision threshold (f64, NaN when unused)       |
//! | 24     | 8·C  | bias per output (f64)                           |
//! | …      | 8·CD | weights, row-major by output (f64)              |

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::linear::LinearModel;

pub const MAGIC: &[u8; 4] = b"KGSM";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Detector = 1,
    Domain = 2,
    Ranker = 3,
}

impl ModelKind {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(ModelKind::Detector),
            2 => Ok(ModelKind::Domain),
            3 => Ok(ModelKind::Ranker),
            other => Err(Error::ModelFormat(format!("unknown model kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub kind: ModelKind,
    pub threshold: Option<f64>,
    pub model: LinearModel,
}

impl ModelFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let m = &self.model;
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * (m.classes + m.weights.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.kind as u8);
        out.push(0);
        out.extend_from_slice(&(m.classes as u32).to_le_bytes());
        out.extend_from_slice(&(m.dim as u32).to_le_bytes());
        out.extend_from_slice(&self.threshold.unwrap_or(f64::NAN).to_le_bytes());
        for v in m.bias.iter().chain(&m.weights) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(Error::ModelFormat("missing KGSM header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {version}")));
        }
        let kind = ModelKind::from_byte(bytes[6])?;
        let classes = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let threshold = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
        let expected = classes
            .checked_mul(dim)
            .and_then(|w| w.checked_add(classes))
            .and_then(|n| n.checked_mul(8))
            .and_then(|n| n.checked_add(HEADER_LEN))
            .ok_or_else(|| Error::ModelFormat("header sizes overflow".into()))?;
        if bytes.len() != expected {
            return Err(Error::ModelFormat(format!(
                "expected {expected} bytes, found {}",
                bytes.len()
            )));
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let bias: Vec<f64> = floats.by_ref().take(classes).collect();
        let weights: Vec<f64> = floats.collect();
        Ok(ModelFile {
            kind,
            threshold: (!threshold.is_nan()).then_some(threshold),
            model: LinearModel {
                dim,
                classes,
                bias,
                weights,
            },
        })
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn read<R: Read>(mut r: R) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    pub fn expect_kind(self, kind: ModelKind) -> Result<Self> {
        if self.kind == kind {
            Ok(self)
        } else {
            Err(Error::ModelFormat(format!(
                "expected a {kind:?} model, found {:?}",
                self.kind
            )))
        }
    }
}
