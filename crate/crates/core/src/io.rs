//! Plain-text and binary export of fields, phase maps and corrector matrices.
//!
//! Binary fields are little-endian: the magic `HLSF`, a `u32` kind
//! (0 nodal, 1 per element), `u32` columns, `u32` rows, then row-major `f64` values.

use crate::error::{Error, Result};
use crate::grid::{ScalarField, StructuredGrid};
use crate::homogenize::CorrectorMatrixField;
use crate::microstructure::PhaseMap;

pub const FIELD_MAGIC: [u8; 4] = *b"HLSF";
const HEADER_LEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Nodal,
    Element,
}

impl FieldKind {
    fn code(self) -> u32 {
        match self {
            FieldKind::Nodal => 0,
            FieldKind::Element => 1,
        }
    }
}

/// Row-major binary image of a field with its dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryField {
    pub kind: FieldKind,
    pub dims: [usize; 2],
    pub values: Vec<f64>,
}

/// Columns and rows of the distinct nodes of a grid (periodic grids fold the
/// last row and column onto the first).
pub fn node_dims<G: StructuredGrid + ?Sized>(grid: &G) -> [usize; 2] {
    let [mx, my] = grid.shape();
    if grid.node_count() == (mx + 1) * (my + 1) {
        [mx + 1, my + 1]
    } else {
        [mx, my]
    }
}

impl BinaryField {
    pub fn nodal<G: StructuredGrid + ?Sized>(field: &ScalarField, grid: &G) -> Result<Self> {
        field.check_len(grid)?;
        Ok(BinaryField { kind: FieldKind::Nodal, dims: node_dims(grid), values: field.values().to_vec() })
    }

    pub fn elementwise<G: StructuredGrid + ?Sized>(values: &[f64], grid: &G) -> Result<Self> {
        if values.len() != grid.element_count() {
            return Err(Error::InvalidArgument(format!(
                "{} values for {} elements",
                values.len(),
                grid.element_count()
            )));
        }
        Ok(BinaryField { kind: FieldKind::Element, dims: grid.shape(), values: values.to_vec() })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(&FIELD_MAGIC);
        out.extend_from_slice(&self.kind.code().to_le_bytes());
        out.extend_from_slice(&(self.dims[0] as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims[1] as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || bytes[..4] != FIELD_MAGIC {
            return Err(Error::InvalidArgument("not a binary field (bad magic)".into()));
        }
        let word = |k: usize| u32::from_le_bytes(bytes[k..k + 4].try_into().expect("4 bytes")) as usize;
        let kind = match word(4) {
            0 => FieldKind::Nodal,
            1 => FieldKind::Element,
            other => return Err(Error::InvalidArgument(format!("unknown field kind {other}"))),
        };
        let dims = [word(8), word(12)];
        let body = &bytes[HEADER_LEN..];
        if body.len() != 8 * dims[0] * dims[1] {
            return Err(Error::InvalidArgument(format!(
                "binary field of {}x{} needs {} value bytes, found {}",
                dims[0],
                dims[1],
                8 * dims[0] * dims[1],
                body.len()
            )));
        }
        let values = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(BinaryField { kind, dims, values })
    }
}

/// `x,y,value` per node.
pub fn field_csv<G: StructuredGrid + ?Sized>(field: &ScalarField, grid: &G) -> Result<String> {
    field.check_len(grid)?;
    let mut out = String::from("x,y,value\n");
    for (k, v) in field.values().iter().enumerate() {
        let p = grid.node_position(k);
        out.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", p.x, p.y, v));
    }
    Ok(out)
}

/// `x,y,value` per element center.
pub fn element_csv<G: StructuredGrid + ?Sized>(values: &[f64], grid: &G) -> Result<String> {
    if values.len() != grid.element_count() {
        return Err(Error::InvalidArgument(format!("{} values for {} elements", values.len(), grid.element_count())));
    }
    let mut out = String::from("x,y,value\n");
    for (e, v) in values.iter().enumerate() {
        let p = grid.element_center(e);
        out.push_str(&format!("{:.12e},{:.12e},{:.12e}\n", p.x, p.y, v));
    }
    Ok(out)
}

/// `element,phase`, phases counted from 1.
pub fn phase_map_csv(phases: &PhaseMap) -> String {
    let mut out = String::from("element,phase\n");
    for (e, &p) in phases.labels().iter().enumerate() {
        out.push_str(&format!("{e},{}\n", p + 1));
    }
    out
}

/// `x,y,p11,p12,p21,p22` per cell element center.
pub fn corrector_matrix_csv(p: &CorrectorMatrixField) -> String {
    let grid = p.grid();
    let mut out = String::from("x,y,p11,p12,p21,p22\n");
    for (e, m) in p.values().iter().enumerate() {
        let c = grid.element_center(e);
        out.push_str(&format!(
            "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\n",
            c.x,
            c.y,
            m[(0, 0)],
            m[(0, 1)],
            m[(1, 0)],
            m[(1, 1)]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_cell_grid, build_domain_grid, Rect};

    #[test]
    fn binary_round_trip_and_header() {
        let g = build_domain_grid(Rect::unit(), [3, 2], 0.0).unwrap();
        let f = ScalarField::from_fn(&g, |p| p.x + 2.0 * p.y);
        let b = BinaryField::nodal(&f, &g).unwrap();
        assert_eq!(b.dims, [4, 3]);
        let bytes = b.to_bytes();
        assert_eq!(&bytes[..4], b"HLSF");
        assert_eq!(bytes.len(), 16 + 8 * 12);
        assert_eq!(BinaryField::from_bytes(&bytes).unwrap(), b);
        assert!(BinaryField::from_bytes(&bytes[..20]).is_err());
        assert!(BinaryField::from_bytes(b"XXXX").is_err());
        let cell = build_cell_grid(4).unwrap();
        assert_eq!(node_dims(&cell), [4, 4]);
    }

    #[test]
    fn csv_layouts() {
        let g = build_domain_grid(Rect::unit(), [1, 1], 0.0).unwrap();
        let csv = field_csv(&ScalarField::from_fn(&g, |p| p.x), &g).unwrap();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("x,y,value\n"));
        let pm = phase_map_csv(&PhaseMap::new(vec![0, 1]));
        assert_eq!(pm, "element,phase\n0,1\n1,2\n");
        assert!(element_csv(&[1.0, 2.0], &g).is_err());
    }
}
