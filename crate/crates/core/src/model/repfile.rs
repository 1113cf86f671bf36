//! Externally produced representation matrices.
//!
//! ```text
//! "MRCH" | version u16 | count u32 |
//!   count × ( id_len u32 | id UTF-8 | n u32 | d u32 | n·d × f32 LE, row-major )
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::spanconv::MrcInstance;

pub const REPRESENTATION_MAGIC: &[u8; 4] = b"MRCH";
const VERSION: u16 = 1;

/// `H` matrices keyed by instance id (`<sentence>/<type>`).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepresentationSet {
    pub matrices: BTreeMap<String, Array2<f32>>,
}

impl RepresentationSet {
    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Array2<f32>> {
        self.matrices.get(id)
    }

    /// Common width of every matrix, if there is at least one.
    pub fn width(&self) -> Option<usize> {
        self.matrices.values().next().map(|m| m.ncols())
    }

    pub fn h_for(&self, instance: &MrcInstance) -> Result<Array2<f64>> {
        let id = instance.id();
        let m = self.get(&id).ok_or_else(|| Error::Representation(format!("no matrix for instance `{id}`")))?;
        if m.nrows() != instance.len() {
            return Err(Error::Representation(format!(
                "instance `{id}` has {} positions but its matrix has {} rows",
                instance.len(),
                m.nrows()
            )));
        }
        Ok(m.mapv(f64::from))
    }

    /// Every instance has a matrix with matching row count, all widths agree.
    pub fn check_against(&self, instances: &[MrcInstance]) -> Result<()> {
        let width = self.width();
        for inst in instances {
            let h = self.h_for(inst)?;
            if Some(h.ncols()) != width {
                return Err(Error::Representation(format!("instance `{}` has inconsistent width", inst.id())));
            }
        }
        Ok(())
    }
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Representation("truncated file".into()));
    }
    let (head, rest) = buf.split_at(n);
    *buf = rest;
    Ok(head)
}

fn take_u32(buf: &mut &[u8]) -> Result<u32> {
    Ok(u32::from_le_bytes(take(buf, 4)?.try_into().expect("4 bytes")))
}

pub fn read_representations<R: Read>(mut r: R) -> Result<RepresentationSet> {
    let mut data = Vec::new();
    r.read_to_end(&mut data).map_err(|e| Error::Representation(e.to_string()))?;
    let mut buf = data.as_slice();
    if take(&mut buf, 4)? != REPRESENTATION_MAGIC {
        return Err(Error::Representation("bad magic".into()));
    }
    let version = u16::from_le_bytes(take(&mut buf, 2)?.try_into().expect("2 bytes"));
    if version != VERSION {
        return Err(Error::Representation(format!("unsupported version {version}")));
    }
    let count = take_u32(&mut buf)?;
    let mut set = RepresentationSet::default();
    for _ in 0..count {
        let id_len = take_u32(&mut buf)? as usize;
        let id = std::str::from_utf8(take(&mut buf, id_len)?)
            .map_err(|_| Error::Representation("id is not UTF-8".into()))?
            .to_string();
        let n = take_u32(&mut buf)? as usize;
        let d = take_u32(&mut buf)? as usize;
        let bytes = take(
            &mut buf,
            n.checked_mul(d)
                .and_then(|x| x.checked_mul(4))
                .ok_or_else(|| Error::Representation(format!("matrix `{id}` is too large")))?,
        )?;
        let values: Vec<f32> =
            bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Representation(format!("matrix `{id}` has non-finite entries")));
        }
        let m = Array2::from_shape_vec((n, d), values).expect("length is n·d");
        if set.matrices.insert(id.clone(), m).is_some() {
            return Err(Error::Representation(format!("duplicate id `{id}`")));
        }
    }
    if !buf.is_empty() {
        return Err(Error::Representation(format!("{} trailing bytes", buf.len())));
    }
    Ok(set)
}

pub fn write_representations<W: Write>(mut w: W, set: &RepresentationSet) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(REPRESENTATION_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(set.len() as u32).to_le_bytes());
    for (id, m) in &set.matrices {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        buf.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
        buf.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
        for v in m.iter() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(|e| Error::Representation(e.to_string()))
}

/// Reads a representation file and checks it against `instances`.
pub fn import_representations(path: &Path, instances: &[MrcInstance]) -> Result<RepresentationSet> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let set = read_representations(BufReader::new(file))?;
    set.check_against(instances)?;
    Ok(set)
}

pub fn export_representations(path: &Path, set: &RepresentationSet) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_representations(&mut w, set)?;
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RepresentationSet {
        let mut set = RepresentationSet::default();
        set.matrices.insert("s-0/C".into(), Array2::from_shape_fn((3, 4), |(i, j)| (i * 4 + j) as f32 * 0.1 - 0.3));
        set.matrices.insert("s-1/C".into(), Array2::from_elem((2, 4), 1.0e-7));
        set
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let mut buf = Vec::new();
        write_representations(&mut buf, &sample()).unwrap();
        let back = read_representations(buf.as_slice()).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.get("s-0/C").unwrap().dim(), (3, 4));
    }

    #[test]
    fn truncation_and_bad_headers_fail() {
        let mut buf = Vec::new();
        write_representations(&mut buf, &sample()).unwrap();
        for cut in [3, 8, 20, buf.len() - 1] {
            assert!(read_representations(&buf[..cut]).is_err(), "cut {cut}");
        }
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_representations(magic.as_slice()).is_err());
        let mut version = buf.clone();
        version[4] = 9;
        assert!(read_representations(version.as_slice()).is_err());
    }

    #[test]
    fn non_finite_is_rejected() {
        let mut set = sample();
        set.matrices.get_mut("s-1/C").unwrap()[[0, 0]] = f32::NAN;
        let mut buf = Vec::new();
        write_representations(&mut buf, &set).unwrap();
        assert!(read_representations(buf.as_slice()).is_err());
    }
}
