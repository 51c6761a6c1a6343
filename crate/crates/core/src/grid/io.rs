//! Field serialization: plot-ready CSV and a bit-exact binary layout.
//!
//! Binary layout (little endian):
//! `b"MFGF"`, version `u8`, kind `u8` (0 node field, 1 face field),
//! scalar width `u8` (4 or 8), dim `u8`, N `u32`, K `u32`, t0, T (scalar
//! width each), then all values time-major (per slice: component blocks of
//! N^d values, axis 0 fastest).

use std::io::Write;

use super::{FluxField, ScalarField, TorusGrid};
use crate::error::{MfgError, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"MFGF";
const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Node = 0,
    Face = 1,
}

fn write_header<T: Scalar>(out: &mut Vec<u8>, grid: &TorusGrid<T>, kind: Kind) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[VERSION, kind as u8, T::WIDTH, grid.dim() as u8]);
    out.extend_from_slice(&(grid.n_space() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n_time() as u32).to_le_bytes());
    grid.t0().write_le(out);
    grid.t_end().write_le(out);
}

fn read_header<T: Scalar>(bytes: &[u8], kind: Kind) -> Result<(TorusGrid<T>, usize)> {
    let w = T::WIDTH as usize;
    let header_len = 16 + 2 * w;
    if bytes.len() < header_len || &bytes[..4] != MAGIC {
        return Err(MfgError::Format("missing MFGF header".into()));
    }
    if bytes[4] != VERSION {
        return Err(MfgError::Format(format!("unsupported version {}", bytes[4])));
    }
    if bytes[5] != kind as u8 {
        return Err(MfgError::Format("field kind mismatch".into()));
    }
    if bytes[6] != T::WIDTH {
        return Err(MfgError::Format(format!("scalar width {} does not match {}", bytes[6], T::WIDTH)));
    }
    let dim = bytes[7] as usize;
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let k = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let t0 = T::read_le(&bytes[16..16 + w]);
    let t1 = T::read_le(&bytes[16 + w..16 + 2 * w]);
    Ok((TorusGrid::new(dim, n, k, t0, t1)?, header_len))
}

fn read_values<T: Scalar>(bytes: &[u8], count: usize) -> Result<Vec<T>> {
    let w = T::WIDTH as usize;
    if bytes.len() != count * w {
        return Err(MfgError::Format(format!("expected {} value bytes, found {}", count * w, bytes.len())));
    }
    Ok(bytes.chunks_exact(w).map(T::read_le).collect())
}

pub fn scalar_to_bytes<T: Scalar>(field: &ScalarField<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + field.values().len() * T::WIDTH as usize);
    write_header(&mut out, field.grid(), Kind::Node);
    field.values().iter().for_each(|v| v.write_le(&mut out));
    out
}

pub fn scalar_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<ScalarField<T>> {
    let (grid, start) = read_header::<T>(bytes, Kind::Node)?;
    let values = read_values(&bytes[start..], grid.nodes() * grid.slices())?;
    ScalarField::from_values(grid, values)
}

pub fn flux_to_bytes<T: Scalar>(field: &FluxField<T>) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + field.values().len() * T::WIDTH as usize);
    write_header(&mut out, field.grid(), Kind::Face);
    field.values().iter().for_each(|v| v.write_le(&mut out));
    out
}

pub fn flux_from_bytes<T: Scalar>(bytes: &[u8]) -> Result<FluxField<T>> {
    let (grid, start) = read_header::<T>(bytes, Kind::Face)?;
    let values = read_values(&bytes[start..], grid.faces() * grid.slices())?;
    FluxField::from_values(grid, values)
}

fn index_header(dim: usize) -> &'static str {
    if dim == 1 { "slice,t,i0,x0" } else { "slice,t,i0,i1,x0,x1" }
}

fn write_index<T: Scalar>(w: &mut impl Write, grid: &TorusGrid<T>, n: usize, node: usize) -> std::io::Result<()> {
    let ix = grid.multi_index(node);
    let x = grid.coords(node);
    if grid.dim() == 1 {
        write!(w, "{},{},{},{}", n, grid.time(n), ix[0], x[0])
    } else {
        write!(w, "{},{},{},{},{},{}", n, grid.time(n), ix[0], ix[1], x[0], x[1])
    }
}

/// One row per (slice, node): indices, coordinates, value.
pub fn write_scalar_csv<T: Scalar>(field: &ScalarField<T>, w: &mut impl Write) -> Result<()> {
    let grid = field.grid();
    writeln!(w, "{},value", index_header(grid.dim()))?;
    for n in 0..grid.slices() {
        for (i, v) in field.slice(n).iter().enumerate() {
            write_index(w, grid, n, i)?;
            writeln!(w, ",{v}")?;
        }
    }
    Ok(())
}

/// One row per (slice, node); component `k` is the value on the face
/// `x + dx/2·e_k` attached to that node.
pub fn write_flux_csv<T: Scalar>(field: &FluxField<T>, w: &mut impl Write) -> Result<()> {
    let grid = field.grid();
    let nodes = grid.nodes();
    let comps = if grid.dim() == 1 { "w0" } else { "w0,w1" };
    writeln!(w, "{},{comps}", index_header(grid.dim()))?;
    for n in 0..grid.slices() {
        let s = field.slice(n);
        for i in 0..nodes {
            write_index(w, grid, n, i)?;
            for k in 0..grid.dim() {
                write!(w, ",{}", s[k * nodes + i])?;
            }
            writeln!(w)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            dim in 1usize..=2,
            n in 4usize..7,
            k in 2usize..4,
            t0 in -3.0f64..3.0,
            len in 0.01f64..5.0,
            seed in any::<u64>(),
        ) {
            let g = TorusGrid::new(dim, n, k, t0, t0 + len).unwrap();
            let mut s = seed;
            let mut next = || { s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); f64::from_bits((s >> 12) | 0x3ff0_0000_0000_0000) - 1.5 };
            let vals: Vec<f64> = (0..g.nodes() * g.slices()).map(|_| next()).collect();
            let f = ScalarField::from_values(g, vals).unwrap();
            let back: ScalarField<f64> = scalar_from_bytes(&scalar_to_bytes(&f)).unwrap();
            prop_assert_eq!(back.grid(), f.grid());
            prop_assert!(back.values().iter().zip(f.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
            let fl = FluxField::from_values(g, (0..g.faces() * g.slices()).map(|_| next()).collect()).unwrap();
            let back: FluxField<f64> = flux_from_bytes(&flux_to_bytes(&fl)).unwrap();
            prop_assert!(back.values().iter().zip(fl.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn rejects_wrong_kind_and_width() {
        let g = TorusGrid::new(1, 4, 2, 0.0, 1.0).unwrap();
        let bytes = scalar_to_bytes(&ScalarField::<f64>::zeros(g));
        assert!(flux_from_bytes::<f64>(&bytes).is_err());
        assert!(scalar_from_bytes::<f32>(&bytes).is_err());
        assert!(scalar_from_bytes::<f64>(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn csv_rows() {
        let g = TorusGrid::new(2, 4, 2, 0.0, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x, _| x[0]);
        let mut buf = Vec::new();
        write_scalar_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 16);
        assert!(text.starts_with("slice,t,i0,i1,x0,x1,value\n0,0,0,0,0,0,0\n"));
    }
}
