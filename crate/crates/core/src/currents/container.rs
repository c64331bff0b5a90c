//! Binary container: `b"TCUR"`, `u32` version, `u64` header length, a JSON
//! header, then one little-endian complex array per multi-index in header order.

use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Current, FormIndex, SingularAtom};
use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, GridSpec, Interval};

const MAGIC: &[u8; 4] = b"TCUR";
const VERSION: u32 = 1;

/// Element type of the stored arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dtype {
    /// Two little-endian `f32` per sample.
    #[default]
    Complex64,
    /// Two little-endian `f64` per sample.
    Complex128,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    bidegree: [usize; 2],
    grid: GridSpec,
    grid_id: String,
    order: u32,
    support_bound: Vec<Interval>,
    dtype: Dtype,
    components: Vec<FormIndex>,
    atoms: Vec<SingularAtom>,
}

/// Stable textual identity of a grid.
pub fn grid_id(spec: &GridSpec) -> String {
    let bbox: Vec<String> = spec
        .bbox
        .iter()
        .map(|b| format!("{}:{}", b[0], b[1]))
        .collect();
    format!("n{}-r{}-{}", spec.n, spec.resolution, bbox.join(","))
}

pub fn write_current<W: Write>(mut w: W, current: &Current, dtype: Dtype) -> Result<()> {
    let (p, q) = current.bidegree();
    let spec = current.grid().spec();
    let header = Header {
        bidegree: [p, q],
        grid_id: grid_id(&spec),
        grid: spec,
        order: current.declared_order(),
        support_bound: current.support_bound().to_vec(),
        dtype,
        components: current.components().iter().map(|(i, _)| *i).collect(),
        atoms: current.atoms().to_vec(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::new();
    for (_, field) in current.components() {
        buf.clear();
        for v in field {
            match dtype {
                Dtype::Complex64 => {
                    buf.extend_from_slice(&(v.re as f32).to_le_bytes());
                    buf.extend_from_slice(&(v.im as f32).to_le_bytes());
                }
                Dtype::Complex128 => {
                    buf.extend_from_slice(&v.re.to_le_bytes());
                    buf.extend_from_slice(&v.im.to_le_bytes());
                }
            }
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_current<R: Read>(mut r: R) -> Result<Current> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::InvalidCurrent("not a current container".into()));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != VERSION {
        return Err(Error::InvalidCurrent(format!(
            "unsupported container version {version}"
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json)?;
    let grid = header.grid.build()?;
    if header.grid_id != grid_id(&header.grid) {
        return Err(Error::InvalidCurrent(
            "grid id does not match grid spec".into(),
        ));
    }
    let mut current = Current::zero(&grid, header.bidegree[0], header.bidegree[1])?;
    let width = match header.dtype {
        Dtype::Complex64 => 8,
        Dtype::Complex128 => 16,
    };
    let mut bytes = vec![0u8; grid.len() * width];
    for idx in header.components {
        r.read_exact(&mut bytes)?;
        let field = bytes
            .chunks_exact(width)
            .map(|c| match header.dtype {
                Dtype::Complex64 => Complex64::new(
                    f32::from_le_bytes(c[0..4].try_into().unwrap()) as f64,
                    f32::from_le_bytes(c[4..8].try_into().unwrap()) as f64,
                ),
                Dtype::Complex128 => Complex64::new(
                    f64::from_le_bytes(c[0..8].try_into().unwrap()),
                    f64::from_le_bytes(c[8..16].try_into().unwrap()),
                ),
            })
            .collect();
        current.set_component(idx, field)?;
    }
    for atom in header.atoms {
        current.add_atom(atom)?;
    }
    current.set_order(header.order);
    Ok(current.with_support_bound(header.support_bound))
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomOnly {
    n_complex: usize,
    bidegree: [usize; 2],
    declared_order: u32,
    atoms: Vec<SingularAtom>,
}

/// JSON form of a current whose smooth part vanishes.
pub fn write_atom_json(current: &Current) -> Result<String> {
    if current
        .components()
        .iter()
        .any(|(_, f)| f.iter().any(|v| *v != super::ZERO))
    {
        return Err(Error::InvalidCurrent(
            "JSON form holds atom-only currents".into(),
        ));
    }
    let (p, q) = current.bidegree();
    let doc = AtomOnly {
        n_complex: current.grid().n_complex(),
        bidegree: [p, q],
        declared_order: current.declared_order(),
        atoms: current.atoms().to_vec(),
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn read_atom_json(text: &str, grid: &ComplexGrid) -> Result<Current> {
    let doc: AtomOnly = serde_json::from_str(text)?;
    if doc.n_complex != grid.n_complex() {
        return Err(Error::InvalidCurrent(format!(
            "current is in C^{}, grid in C^{}",
            doc.n_complex,
            grid.n_complex()
        )));
    }
    let mut current = Current::zero(grid, doc.bidegree[0], doc.bidegree[1])?;
    for atom in doc.atoms {
        current.add_atom(atom)?;
    }
    if doc.declared_order < current.declared_order() {
        return Err(Error::InvalidCurrent(format!(
            "declared order {} below atom order {}",
            doc.declared_order,
            current.declared_order()
        )));
    }
    current.set_order(doc.declared_order);
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_current() -> Current {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 32).unwrap();
        let f = g.sample(|x| Complex64::new(x[0] * 0.5, x[1].sin()));
        let mut c = Current::form01(&g, vec![f]).unwrap();
        let mut a = SingularAtom::dirac(vec![0.0, 0.125], FormIndex::dzbar(1));
        a.derivative = vec![0, 2];
        a.coefficient = Complex64::new(0.5, -1.0);
        c.add_atom(a).unwrap();
        c
    }

    #[test]
    fn binary_roundtrip_exact_in_double() {
        let c = sample_current();
        let mut buf = Vec::new();
        write_current(&mut buf, &c, Dtype::Complex128).unwrap();
        assert_eq!(&buf[..4], MAGIC);
        let back = read_current(buf.as_slice()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn binary_roundtrip_single_precision() {
        let c = sample_current();
        let mut buf = Vec::new();
        write_current(&mut buf, &c, Dtype::Complex64).unwrap();
        let back = read_current(buf.as_slice()).unwrap();
        let diff = back.sub(&c).unwrap();
        assert!(diff.l2_norm() < 1e-6 * c.l2_norm());
        assert_eq!(back.atoms(), c.atoms());
    }

    #[test]
    fn atom_json_roundtrip() {
        let g = ComplexGrid::cube(1, -1.0, 1.0, 32).unwrap();
        let mut c = Current::zero(&g, 0, 1).unwrap();
        c.add_atom(SingularAtom::dirac(vec![0.25, 0.0], FormIndex::dzbar(1)))
            .unwrap();
        let text = write_atom_json(&c).unwrap();
        let back = read_atom_json(&text, &g).unwrap();
        assert_eq!(back, c);
        assert!(write_atom_json(&sample_current()).is_err());
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_current(&b"NOPE0000"[..]).is_err());
    }
}
