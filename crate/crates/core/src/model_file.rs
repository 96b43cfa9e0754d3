//! Versioned binary container for trained flows.
//!
//! All integers are u64 little-endian unless noted, all floats f64
//! little-endian, so a saved model reproduces densities and samples bit for
//! bit.
//!
//! ```text
//! "SINF" | version u32 | direction u8 (0 SIG, 1 GIS) | d
//! shape flag u8 [S, S, c] | preprocess u8 (0 none, 1 logit) [λ f64]
//! layer count, then per layer:
//!   patch flag u8 [S, c, q, dy, dx, mode u8 (0 full depth, 1 single channel)]
//!   transform count, then per transform:
//!     dim, K, basis (dim × K, column-major)
//!     per axis: α₁, α₂, M, xs[M], ys[M], derivs[M]
//! ```

use crate::error::{Result, SinfError};
use crate::flow::{Direction, Flow, SinfLayer, SliceTransform};
use crate::patch::{ChannelMode, PatchLayout};
use crate::preprocess::Preprocess;
use crate::sliced::SliceBasis;
use crate::spline::{RegularizedMap, RqSpline};
use nalgebra::DMatrix;

pub const MODEL_MAGIC: &[u8; 4] = b"SINF";
pub const MODEL_VERSION: u32 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u64(&mut self, v: usize) {
        self.buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                SinfError::Format(format!("truncated model file at byte {}", self.pos))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| SinfError::Format(format!("count {v} out of range")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        // Bound the allocation by what is actually left in the buffer.
        if n.saturating_mul(8) > self.bytes.len() - self.pos {
            return Err(SinfError::Format("truncated model file".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn flag(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(SinfError::Format(format!("invalid flag byte {v}"))),
        }
    }
}

pub fn serialize(flow: &Flow) -> Vec<u8> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(MODEL_MAGIC);
    w.buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    w.u8(match flow.direction() {
        Direction::Sig => 0,
        Direction::Gis => 1,
    });
    w.u64(flow.dim());
    match flow.image_shape() {
        Some((h, wd, c)) => {
            w.u8(1);
            w.u64(h);
            w.u64(wd);
            w.u64(c);
        }
        None => w.u8(0),
    }
    match flow.preprocess() {
        Preprocess::Identity => w.u8(0),
        Preprocess::Logit { lambda } => {
            w.u8(1);
            w.f64(lambda);
        }
    }
    w.u64(flow.layers().len());
    for layer in flow.layers() {
        match layer.patch() {
            Some(p) => {
                w.u8(1);
                w.u64(p.side());
                w.u64(p.channels());
                w.u64(p.patch_side());
                w.u64(p.shift().0);
                w.u64(p.shift().1);
                w.u8(match p.mode() {
                    ChannelMode::FullDepth => 0,
                    ChannelMode::SingleChannel => 1,
                });
            }
            None => w.u8(0),
        }
        w.u64(layer.transforms().len());
        for t in layer.transforms() {
            let a = t.basis().matrix();
            w.u64(a.nrows());
            w.u64(a.ncols());
            w.f64s(a.as_slice());
            for map in t.maps() {
                w.f64(map.alpha_spline());
                w.f64(map.alpha_tail());
                let s = map.base();
                w.u64(s.num_knots());
                w.f64s(s.xs());
                w.f64s(s.ys());
                w.f64s(s.derivs());
            }
        }
    }
    w.buf
}

pub fn deserialize(bytes: &[u8]) -> Result<Flow> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4).ok() != Some(MODEL_MAGIC.as_slice()) {
        return Err(SinfError::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(SinfError::Version {
            found: version,
            expected: MODEL_VERSION,
        });
    }
    let direction = match r.u8()? {
        0 => Direction::Sig,
        1 => Direction::Gis,
        v => return Err(SinfError::Format(format!("unknown direction tag {v}"))),
    };
    let dim = r.u64()?;
    let shape = if r.flag()? {
        Some((r.u64()?, r.u64()?, r.u64()?))
    } else {
        None
    };
    let preprocess = match r.u8()? {
        0 => Preprocess::Identity,
        1 => Preprocess::logit(r.f64()?)?,
        v => return Err(SinfError::Format(format!("unknown preprocess tag {v}"))),
    };
    let mut flow = Flow::new(dim, direction)
        .with_image_shape(shape)
        .with_preprocess(preprocess);
    let n_layers = r.u64()?;
    for _ in 0..n_layers {
        let layout = if r.flag()? {
            let side = r.u64()?;
            let channels = r.u64()?;
            let q = r.u64()?;
            let shift = (r.u64()?, r.u64()?);
            let mode = match r.u8()? {
                0 => ChannelMode::FullDepth,
                1 => ChannelMode::SingleChannel,
                v => return Err(SinfError::Format(format!("unknown channel mode {v}"))),
            };
            Some(PatchLayout::new(side, channels, q, shift, mode)?)
        } else {
            None
        };
        let n_transforms = r.u64()?;
        let mut transforms = Vec::new();
        for _ in 0..n_transforms {
            let rows = r.u64()?;
            let cols = r.u64()?;
            let data = r.f64s(rows.saturating_mul(cols))?;
            let basis = SliceBasis::new(DMatrix::from_column_slice(rows, cols, &data))?;
            let mut maps = Vec::with_capacity(cols);
            for _ in 0..cols {
                let a1 = r.f64()?;
                let a2 = r.f64()?;
                let m = r.u64()?;
                let xs = r.f64s(m)?;
                let ys = r.f64s(m)?;
                let ds = r.f64s(m)?;
                maps.push(RegularizedMap::new(RqSpline::new(xs, ys, ds)?, a1, a2)?);
            }
            transforms.push(SliceTransform::new(basis, maps)?);
        }
        let layer = match layout {
            Some(l) => SinfLayer::patched(l, transforms)?,
            None => {
                if transforms.len() != 1 {
                    return Err(SinfError::Format(
                        "unpatched layer must hold exactly one transform".into(),
                    ));
                }
                SinfLayer::new(transforms.pop().unwrap())
            }
        };
        flow.push(layer)?;
    }
    if r.pos != bytes.len() {
        return Err(SinfError::Format(format!(
            "{} trailing bytes after model",
            bytes.len() - r.pos
        )));
    }
    Ok(flow)
}

pub fn save(path: &std::path::Path, flow: &Flow) -> Result<()> {
    std::fs::write(path, serialize(flow))?;
    Ok(())
}

pub fn load(path: &std::path::Path) -> Result<Flow> {
    deserialize(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_flow_roundtrip() {
        let flow = Flow::new(3, Direction::Gis).with_preprocess(Preprocess::logit(1e-6).unwrap());
        let back = deserialize(&serialize(&flow)).unwrap();
        assert_eq!(back, flow);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        let bytes = serialize(&Flow::new(2, Direction::Sig));
        let mut bad = bytes.clone();
        bad[1] = b'X';
        assert!(matches!(deserialize(&bad), Err(SinfError::Format(_))));
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(matches!(
            deserialize(&v2),
            Err(SinfError::Version { found: 2, .. })
        ));
        assert!(deserialize(&bytes[..bytes.len() - 3]).is_err());
    }
}
