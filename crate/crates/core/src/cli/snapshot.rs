//! Binary snapshot files.
//!
//! Little-endian. Header: magic `ELS2`, format version `u32`, `N` as `u32`,
//! `R` as `f64`, time as `f64`. Then for each chart (north, south): the
//! director as three `N x N` planes, the velocity as two `N x N` planes
//! (`u^1`, `u^2`), the pressure as one plane. Planes are row-major in the
//! node index `j * N + i`.

use std::path::Path;

use nalgebra::Vector3;
use num_complex::Complex64;

use crate::charts::ChartAtlas;
use crate::error::{Error, Result};
use crate::fields::{FlowState, NodeField};

pub const MAGIC: &[u8; 4] = b"ELS2";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 8 + 8;

/// A decoded snapshot. The atlas is not rebuilt; use [`Snapshot::atlas`].
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub n: usize,
    pub extent: f64,
    pub state: FlowState,
}

impl Snapshot {
    pub fn atlas(&self) -> Result<ChartAtlas> {
        ChartAtlas::new(self.n, self.extent)
    }
}

pub fn encoded_len(n: usize) -> usize {
    HEADER_LEN + 2 * 6 * n * n * 8
}

pub fn encode(n: usize, extent: f64, state: &FlowState) -> Vec<u8> {
    let nn = n * n;
    let mut out = Vec::with_capacity(encoded_len(n));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&extent.to_le_bytes());
    out.extend_from_slice(&state.time.to_le_bytes());
    let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
    for c in 0..2 {
        let d = &state.director.charts[c];
        let u = &state.velocity.charts[c];
        let p = &state.pressure.charts[c];
        assert!(
            d.len() == nn && u.len() == nn && p.len() == nn,
            "field size does not match N"
        );
        for comp in 0..3 {
            d.iter().for_each(|v| put(v[comp]));
        }
        u.iter().for_each(|v| put(v.re));
        u.iter().for_each(|v| put(v.im));
        p.iter().for_each(|&v| put(v));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const K: usize>(&mut self, what: &str) -> Result<[u8; K]> {
        let end = self.pos + K;
        if end > self.bytes.len() {
            return Err(Error::Snapshot {
                offset: self.bytes.len(),
                reason: format!(
                    "truncated while reading {what} (expected {K} bytes at {})",
                    self.pos
                ),
            });
        }
        let mut a = [0u8; K];
        a.copy_from_slice(&self.bytes[self.pos..end]);
        self.pos = end;
        Ok(a)
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        self.take::<8>(what).map(f64::from_le_bytes)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        self.take::<4>(what).map(u32::from_le_bytes)
    }
}

pub fn decode(bytes: &[u8]) -> Result<Snapshot> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take::<4>("magic")?;
    if &magic != MAGIC {
        return Err(Error::Snapshot {
            offset: 0,
            reason: format!("bad magic {magic:?}"),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Snapshot {
            offset: 4,
            reason: format!("unsupported version {version}"),
        });
    }
    let n = r.u32("N")? as usize;
    if !(17..=8193).contains(&n) {
        return Err(Error::Snapshot {
            offset: 8,
            reason: format!("implausible N = {n}"),
        });
    }
    let extent = r.f64("R")?;
    let time = r.f64("time")?;
    if bytes.len() < encoded_len(n) {
        return Err(Error::Snapshot {
            offset: bytes.len(),
            reason: format!(
                "truncated: {} bytes, N = {n} needs {}",
                bytes.len(),
                encoded_len(n)
            ),
        });
    }
    if bytes.len() > encoded_len(n) {
        return Err(Error::Snapshot {
            offset: encoded_len(n),
            reason: format!("{} trailing bytes", bytes.len() - encoded_len(n)),
        });
    }
    let nn = n * n;
    let plane =
        |r: &mut Reader, what: &str| -> Result<Vec<f64>> { (0..nn).map(|_| r.f64(what)).collect() };
    let mut d: [Vec<Vector3<f64>>; 2] = [Vec::new(), Vec::new()];
    let mut u: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
    let mut p: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    for c in 0..2 {
        let (x, y, z) = (
            plane(&mut r, "d1")?,
            plane(&mut r, "d2")?,
            plane(&mut r, "d3")?,
        );
        d[c] = (0..nn).map(|k| Vector3::new(x[k], y[k], z[k])).collect();
        let (a, b) = (plane(&mut r, "u1")?, plane(&mut r, "u2")?);
        u[c] = a
            .iter()
            .zip(&b)
            .map(|(&a, &b)| Complex64::new(a, b))
            .collect();
        p[c] = plane(&mut r, "p")?;
    }
    Ok(Snapshot {
        n,
        extent,
        state: FlowState {
            time,
            director: NodeField { charts: d },
            velocity: NodeField { charts: u },
            pressure: NodeField { charts: p },
        },
    })
}

pub fn write_snapshot(path: &Path, atlas: &ChartAtlas, state: &FlowState) -> Result<()> {
    std::fs::write(path, encode(atlas.resolution(), atlas.extent(), state))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let bytes =
        std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charts::build_atlas;
    use crate::fields::{make_power_map, make_random_velocity, ScalarField};

    fn sample() -> (ChartAtlas, FlowState) {
        let atlas = build_atlas(17, 1.5).unwrap();
        let d = make_power_map(&atlas, 2).unwrap();
        let u = make_random_velocity(&atlas, 3, 2, 0.4).unwrap();
        let mut s = FlowState::new(&atlas, d, u);
        s.pressure = ScalarField::from_fn(&atlas, |c, k| atlas.point(c, k).x - 1e-300);
        s.time = 0.125;
        (atlas, s)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (atlas, s) = sample();
        let bytes = encode(atlas.resolution(), atlas.extent(), &s);
        assert_eq!(bytes.len(), encoded_len(17));
        let back = decode(&bytes).unwrap();
        assert_eq!(back.n, 17);
        assert_eq!(back.extent.to_bits(), 1.5f64.to_bits());
        assert_eq!(back.state, s);
        assert_eq!(encode(17, 1.5, &back.state), bytes);
    }

    #[test]
    fn header_layout() {
        let (atlas, s) = sample();
        let bytes = encode(atlas.resolution(), atlas.extent(), &s);
        assert_eq!(&bytes[0..4], b"ELS2");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 17);
        assert_eq!(f64::from_le_bytes(bytes[20..28].try_into().unwrap()), 0.125);
        // First value: north chart, d1 at node 0.
        let d1 = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        assert_eq!(d1, s.director.charts[0][0].x);
    }

    #[test]
    fn corrupt_files_name_the_offset() {
        let (atlas, s) = sample();
        let bytes = encode(atlas.resolution(), atlas.extent(), &s);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode(&bad),
            Err(Error::Snapshot { offset: 0, .. })
        ));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            decode(&bad),
            Err(Error::Snapshot { offset: 4, .. })
        ));
        let cut = &bytes[..bytes.len() - 5];
        match decode(cut) {
            Err(Error::Snapshot { offset, .. }) => assert_eq!(offset, cut.len()),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            decode(&bytes[..10]),
            Err(Error::Snapshot { offset: 10, .. })
        ));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode(&long), Err(Error::Snapshot { .. })));
    }
}
