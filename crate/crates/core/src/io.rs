//! Binary and CSV formats shared by the library and the command line.

use std::io::Write;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::geometry::PointSet;

/// Little-endian cursor over an untrusted byte slice.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn position(&self) -> usize {
        self.pos
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if n > self.remaining() {
            return Err(Error::Decode(format!("need {n} bytes at offset {}, {} left", self.pos, self.remaining())));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut a = [0u8; N];
        a.copy_from_slice(self.take(N)?);
        Ok(a)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Decode("length overflow".into()))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Dense matrix as `rows u64 | cols u64 | row-major f64`, little endian.
pub fn encode_matrix(m: ArrayView2<f64>) -> Vec<u8> {
    let (rows, cols) = m.dim();
    let mut out = Vec::with_capacity(16 + 8 * rows * cols);
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in m.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut r = ByteReader::new(bytes);
    let rows = r.u64()?;
    let cols = r.u64()?;
    let count = rows
        .checked_mul(cols)
        .and_then(|c| usize::try_from(c).ok())
        .filter(|c| c.checked_mul(8) == Some(r.remaining()))
        .ok_or_else(|| Error::Decode(format!("{rows}x{cols} matrix does not match payload of {} bytes", r.remaining())))?;
    let values = r.f64s(count)?;
    Array2::from_shape_vec((rows as usize, cols as usize), values).map_err(|e| Error::Decode(e.to_string()))
}

pub fn write_matrix(path: &std::path::Path, m: ArrayView2<f64>) -> Result<()> {
    std::fs::write(path, encode_matrix(m))?;
    Ok(())
}

/// Point set as CSV with header `x0,x1[,x2],tag`.
pub fn write_points_csv<W: Write>(out: W, points: &PointSet) -> Result<()> {
    let d = points.interior.ncols();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.push("tag".into());
    w.write_record(&header)?;
    for (set, tag) in [(&points.interior, "interior"), (&points.boundary, "boundary")] {
        for row in set.rows() {
            let mut rec: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            rec.push(tag.into());
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same f64.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn matrix_round_trip() {
        let m = array![[1.0, -2.5, 3.0], [f64::MIN_POSITIVE, 0.0, 1e300]];
        let bytes = encode_matrix(m.view());
        assert_eq!(bytes.len(), 16 + 48);
        assert_eq!(decode_matrix(&bytes).unwrap(), m);
        assert!(decode_matrix(&bytes[..bytes.len() - 8]).is_err());
        assert!(decode_matrix(&[0u8; 5]).is_err());
    }

    #[test]
    fn huge_dimensions_are_rejected() {
        let mut bytes = u64::MAX.to_le_bytes().to_vec();
        bytes.extend_from_slice(&u64::MAX.to_le_bytes());
        assert!(decode_matrix(&bytes).is_err());
    }

    #[test]
    fn points_csv_layout() {
        let ps = PointSet { interior: array![[0.5, 0.25]], boundary: array![[0.0, 1.0]], seed: 0 };
        let mut buf = Vec::new();
        write_points_csv(&mut buf, &ps).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "x0,x1,tag\n0.5,0.25,interior\n0.0,1.0,boundary\n");
    }
}
