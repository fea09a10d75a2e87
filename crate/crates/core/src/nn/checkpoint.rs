//! Parameter checkpoint files.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic    8 bytes  "SPNNCKP\0"
//! version  u32      1
//! manifest u32 length + UTF-8 bytes (free-form key=value lines, may be empty)
//! count    u32      number of layers
//! table    per layer:
//!            kind u8 (0 dense, 1 conv), act u8, act_arg u32, bias u8,
//!            dense: in u32, out u32
//!            conv:  cin u32, cout u32, k u32, h u32, w u32
//!            offset u64
//! payload  per layer, in table order: row-major weights as f64, then bias
//! ```

use std::io::{Read, Write};

use super::activation::Activation;
use super::layer::{Conv2d, DenseLayer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SPNNCKP\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerRec {
    Dense(DenseLayer),
    Conv(Conv2d),
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

fn get_u8(r: &mut impl Read) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

pub(crate) fn put_f64s(w: &mut impl Write, v: &[f64]) -> Result<()> {
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn get_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn write_checkpoint(w: &mut impl Write, manifest: &str, layers: &[LayerRec]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u32(w, manifest.len())?;
    w.write_all(manifest.as_bytes())?;
    put_u32(w, layers.len())?;
    for l in layers {
        match l {
            LayerRec::Dense(d) => {
                let (c, a) = d.activation.code();
                w.write_all(&[0, c])?;
                w.write_all(&a.to_le_bytes())?;
                w.write_all(&[d.bias.is_some() as u8])?;
                put_u32(w, d.inp)?;
                put_u32(w, d.out)?;
                w.write_all(&(d.offset as u64).to_le_bytes())?;
            }
            LayerRec::Conv(cv) => {
                let (c, a) = cv.activation.code();
                w.write_all(&[1, c])?;
                w.write_all(&a.to_le_bytes())?;
                w.write_all(&[1])?;
                for v in [cv.cin, cv.cout, cv.k, cv.h, cv.w] {
                    put_u32(w, v)?;
                }
                w.write_all(&(cv.offset as u64).to_le_bytes())?;
            }
        }
    }
    for l in layers {
        match l {
            LayerRec::Dense(d) => {
                put_f64s(w, &d.weights)?;
                if let Some(b) = &d.bias {
                    put_f64s(w, b)?;
                }
            }
            LayerRec::Conv(c) => {
                put_f64s(w, &c.weights)?;
                put_f64s(w, &c.bias)?;
            }
        }
    }
    Ok(())
}

pub fn read_checkpoint(r: &mut impl Read) -> Result<(String, Vec<LayerRec>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = get_u32(r)?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let mlen = get_u32(r)?;
    let mut mbytes = vec![0u8; mlen];
    r.read_exact(&mut mbytes)?;
    let manifest =
        String::from_utf8(mbytes).map_err(|e| Error::Format(format!("manifest: {e}")))?;
    let count = get_u32(r)?;
    let mut layers = Vec::with_capacity(count);
    for _ in 0..count {
        let kind = get_u8(r)?;
        let code = get_u8(r)?;
        let arg = get_u32(r)? as u32;
        let bias = get_u8(r)? != 0;
        let act = Activation::from_code(code, arg)
            .ok_or_else(|| Error::Format(format!("unknown activation code {code}")))?;
        let layer = match kind {
            0 => {
                let inp = get_u32(r)?;
                let out = get_u32(r)?;
                LayerRec::Dense(DenseLayer::new(inp, out, bias, act)?)
            }
            1 => {
                let d: Vec<usize> = (0..5).map(|_| get_u32(r)).collect::<Result<_>>()?;
                LayerRec::Conv(Conv2d {
                    cin: d[0],
                    cout: d[1],
                    k: d[2],
                    h: d[3],
                    w: d[4],
                    weights: vec![0.0; d[0] * d[1] * d[2] * d[2]],
                    bias: vec![0.0; d[1]],
                    activation: act,
                    offset: 0,
                })
            }
            k => return Err(Error::Format(format!("unknown layer kind {k}"))),
        };
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        let offset = u64::from_le_bytes(b) as usize;
        layers.push(match layer {
            LayerRec::Dense(mut d) => {
                d.offset = offset;
                LayerRec::Dense(d)
            }
            LayerRec::Conv(mut c) => {
                c.offset = offset;
                LayerRec::Conv(c)
            }
        });
    }
    for l in &mut layers {
        match l {
            LayerRec::Dense(d) => {
                d.weights = get_f64s(r, d.weights.len())?;
                if let Some(b) = &mut d.bias {
                    *b = get_f64s(r, b.len())?;
                }
            }
            LayerRec::Conv(c) => {
                c.weights = get_f64s(r, c.weights.len())?;
                c.bias = get_f64s(r, c.bias.len())?;
            }
        }
    }
    Ok((manifest, layers))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut d = DenseLayer::glorot(3, 4, true, Activation::SinPow(3), &mut rng).unwrap();
        d.offset = 17;
        let c = Conv2d::glorot(1, 2, 3, 5, 5, Activation::Tanh, &mut rng).unwrap();
        let n = DenseLayer::glorot(2, 2, false, Activation::Identity, &mut rng).unwrap();
        let layers = vec![LayerRec::Dense(d), LayerRec::Conv(c), LayerRec::Dense(n)];
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, "geometry=sphere\n", &layers).unwrap();
        let (m, back) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(m, "geometry=sphere\n");
        assert_eq!(back, layers);
    }

    #[test]
    fn rejects_bad_magic() {
        let buf = b"NOTACKPT\x01\0\0\0".to_vec();
        assert!(matches!(read_checkpoint(&mut buf.as_slice()), Err(Error::Format(_))));
    }
}
