//! TFLO / TMAP dense float fields.
//!
//! Layout, all little-endian:
//!
//! ```text
//! offset  size  field
//!      0     4  magic, "TFLO" (flow, depth) or "TMAP" (topology)
//!      4     4  version, u32 = 1
//!      8     4  width, u32
//!     12     4  height, u32
//!     16     4  channels, u32 (2 for flow/topology, 1 for depth)
//!     20     …  width·height·channels f32, row-major from the top row,
//!               channels interleaved; invalid entries are quiet NaN
//! ```

use std::path::Path;

use super::IoError;
use crate::flow::{FlowField, TopologyMap};
use crate::grid::Grid;

pub const HEADER_LEN: usize = 20;
pub const VERSION: u32 = 1;
pub const QUIET_NAN_BITS: u32 = 0x7FC0_0000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Magic {
    Tflo,
    Tmap,
}

impl Magic {
    pub fn bytes(self) -> [u8; 4] {
        match self {
            Magic::Tflo => *b"TFLO",
            Magic::Tmap => *b"TMAP",
        }
    }

    fn parse(b: [u8; 4]) -> Option<Self> {
        match &b {
            b"TFLO" => Some(Magic::Tflo),
            b"TMAP" => Some(Magic::Tmap),
            _ => None,
        }
    }
}

/// What a field file holds, as far as the header can tell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Flow,
    Depth,
    Topology,
}

impl FieldKind {
    pub fn name(self) -> &'static str {
        match self {
            FieldKind::Flow => "flow",
            FieldKind::Depth => "depth",
            FieldKind::Topology => "topology",
        }
    }
}

/// Header plus payload of a field file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawField {
    pub magic: Magic,
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl RawField {
    pub fn kind(&self) -> FieldKind {
        match (self.magic, self.channels) {
            (Magic::Tmap, _) => FieldKind::Topology,
            (Magic::Tflo, 1) => FieldKind::Depth,
            (Magic::Tflo, _) => FieldKind::Flow,
        }
    }

    fn check(&self) -> Result<(), IoError> {
        let ok_channels = match self.magic {
            Magic::Tflo => matches!(self.channels, 1 | 2),
            Magic::Tmap => self.channels == 2,
        };
        if !ok_channels || self.width == 0 || self.height == 0 {
            return Err(IoError::BadHeader(format!(
                "{:?} {}x{} with {} channels",
                self.magic, self.width, self.height, self.channels
            )));
        }
        Ok(())
    }

    fn expect(&self, kind: FieldKind) -> Result<(), IoError> {
        if self.kind() != kind {
            return Err(IoError::BadHeader(format!(
                "expected a {} field, found {}",
                kind.name(),
                self.kind().name()
            )));
        }
        Ok(())
    }

    fn pairs(&self) -> Grid<[f32; 2]> {
        let data = self.data.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
        Grid::from_vec(self.width as usize, self.height as usize, data).expect("checked length")
    }

    pub fn into_flow(self) -> Result<FlowField, IoError> {
        self.expect(FieldKind::Flow)?;
        Ok(FlowField::from_grid(self.pairs()))
    }

    pub fn into_topology(self) -> Result<TopologyMap, IoError> {
        self.expect(FieldKind::Topology)?;
        Ok(TopologyMap {
            values: self.pairs(),
        })
    }

    pub fn into_depth(self) -> Result<Grid<f32>, IoError> {
        self.expect(FieldKind::Depth)?;
        Ok(
            Grid::from_vec(self.width as usize, self.height as usize, self.data)
                .expect("checked length"),
        )
    }

    fn from_pairs(magic: Magic, grid: &Grid<[f32; 2]>) -> Self {
        Self {
            magic,
            width: grid.width() as u32,
            height: grid.height() as u32,
            channels: 2,
            data: grid.as_slice().iter().flatten().copied().collect(),
        }
    }
}

impl From<&FlowField> for RawField {
    fn from(f: &FlowField) -> Self {
        RawField::from_pairs(Magic::Tflo, f.vectors())
    }
}

impl From<&TopologyMap> for RawField {
    fn from(t: &TopologyMap) -> Self {
        RawField::from_pairs(Magic::Tmap, &t.values)
    }
}

impl From<&Grid<f32>> for RawField {
    fn from(d: &Grid<f32>) -> Self {
        Self {
            magic: Magic::Tflo,
            width: d.width() as u32,
            height: d.height() as u32,
            channels: 1,
            data: d.as_slice().to_vec(),
        }
    }
}

pub fn encode(field: &RawField) -> Result<Vec<u8>, IoError> {
    field.check()?;
    let expected = field.width as usize * field.height as usize * field.channels as usize;
    if field.data.len() != expected {
        return Err(IoError::BadHeader(format!(
            "{} values for a {}x{}x{} field",
            field.data.len(),
            field.width,
            field.height,
            field.channels
        )));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * expected);
    out.extend_from_slice(&field.magic.bytes());
    for v in [VERSION, field.width, field.height, field.channels] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &field.data {
        let bits = if v.is_nan() {
            QUIET_NAN_BITS
        } else {
            v.to_bits()
        };
        out.extend_from_slice(&bits.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<RawField, IoError> {
    if bytes.len() < 4 {
        return Err(IoError::TruncatedHeader(bytes.len()));
    }
    let magic = Magic::parse(bytes[..4].try_into().unwrap())
        .ok_or_else(|| IoError::BadMagic(bytes[..4].try_into().unwrap()))?;
    if bytes.len() < HEADER_LEN {
        return Err(IoError::TruncatedHeader(bytes.len()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let mut field = RawField {
        magic,
        width: word(1),
        height: word(2),
        channels: word(3),
        data: Vec::new(),
    };
    field.check()?;
    let expected = (field.width as u64)
        .checked_mul(field.height as u64)
        .and_then(|n| n.checked_mul(field.channels as u64 * 4))
        .ok_or_else(|| IoError::BadHeader("field size overflows".into()))?;
    let payload = &bytes[HEADER_LEN..];
    match (payload.len() as u64).cmp(&expected) {
        std::cmp::Ordering::Less => {
            return Err(IoError::TruncatedPayload {
                expected,
                got: payload.len() as u64,
            })
        }
        std::cmp::Ordering::Greater => {
            return Err(IoError::TrailingData {
                expected,
                got: payload.len() as u64,
            })
        }
        std::cmp::Ordering::Equal => {}
    }
    field.data = payload
        .chunks_exact(4)
        .map(|c| f32::from_bits(u32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(field)
}

pub fn write_tflo(path: impl AsRef<Path>, field: &RawField) -> Result<(), IoError> {
    let path = path.as_ref();
    let bytes = encode(field)?;
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

pub fn read_tflo(path: impl AsRef<Path>) -> Result<RawField, IoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(&bytes)
}
