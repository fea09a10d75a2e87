use std::f64::consts::PI;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};

use super::family::{sample_family_with, split_rng, Family, FamilySpec, Split};
use crate::bases::Geometry;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{get_f64s, put_f64s};

/// Collocation points keep this distance from the sphere poles.
pub const POLE_BAND: f64 = 0.05;

/// One collocation sample: the initial condition it belongs to, a point
/// and a time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainTriple {
    pub ic: usize,
    pub point: Vec<f64>,
    pub t: f64,
}

/// `n` triples, each with its own initial condition, plus a fixed set of
/// grid indices per triple for the initial-condition loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub family: Family,
    pub triples: Vec<TrainTriple>,
    pub l0_points: Vec<Vec<usize>>,
    pub t_end: f64,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }
}

pub fn random_point<R: Rng>(geometry: Geometry, rng: &mut R) -> Vec<f64> {
    match geometry {
        Geometry::Interval => vec![rng.random::<f64>()],
        Geometry::Sphere => vec![
            POLE_BAND + (PI - 2.0 * POLE_BAND) * rng.random::<f64>(),
            2.0 * PI * rng.random::<f64>(),
        ],
        Geometry::Torus => vec![2.0 * PI * rng.random::<f64>(), 2.0 * PI * rng.random::<f64>()],
    }
}

/// Deterministic in `seed`. `l0_per` grid indices are drawn per triple;
/// if it is at least the grid size every triple uses the whole grid.
pub fn build_dataset(spec: &FamilySpec, t_end: f64, n: usize, l0_per: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::Config("dataset size must be positive".into()));
    }
    if !(t_end > 0.0) {
        return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
    }
    let family = sample_family_with(spec, n, &mut split_rng(seed, Split::Train))?;
    let mut rng = split_rng(seed, Split::Collocation);
    let len = spec.sample_len();
    let mut triples = Vec::with_capacity(n);
    let mut l0_points = Vec::with_capacity(n);
    for ic in 0..n {
        let point = random_point(spec.geometry, &mut rng);
        let t = t_end * rng.random::<f64>();
        triples.push(TrainTriple { ic, point, t });
        l0_points.push(if l0_per >= len {
            (0..len).collect()
        } else {
            (0..l0_per).map(|_| rng.random_range(0..len)).collect()
        });
    }
    Ok(Dataset { family, triples, l0_points, t_end, seed })
}

const MAGIC: &[u8; 8] = b"SPNNDAT\0";

fn spec_hash(spec: &FamilySpec, t_end: f64, n: usize, l0_per: usize, seed: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(format!("{spec:?}|{t_end:e}|{n}|{l0_per}|{seed}"));
    h.finalize().into()
}

/// Binary dataset file, little-endian:
/// magic `SPNNDAT\0`, 32-byte SHA-256 of the generating parameters,
/// `u64` count, `u64` coefficient dim, `u64` sample length, `u64` point dim,
/// then per initial condition: coefficients, samples, point, `t`,
/// `u64` number of grid indices and the indices as `u64`.
pub fn write_dataset(w: &mut impl Write, d: &Dataset, hash: &[u8; 32]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(hash)?;
    let pd = d.triples.first().map_or(0, |t| t.point.len());
    for v in [d.len(), d.family.spec.dim(), d.family.spec.sample_len(), pd] {
        w.write_all(&(v as u64).to_le_bytes())?;
    }
    for (i, tr) in d.triples.iter().enumerate() {
        put_f64s(w, &d.family.coeffs[i])?;
        put_f64s(w, &d.family.samples[i])?;
        put_f64s(w, &tr.point)?;
        put_f64s(w, &[tr.t])?;
        w.write_all(&(d.l0_points[i].len() as u64).to_le_bytes())?;
        for &j in &d.l0_points[i] {
            w.write_all(&(j as u64).to_le_bytes())?;
        }
    }
    Ok(())
}

fn get_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Reads a dataset written for `spec`. A hash mismatch is a format error.
pub fn read_dataset(r: &mut impl Read, spec: &FamilySpec, t_end: f64, seed: u64, hash: &[u8; 32]) -> Result<Dataset> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    let mut h = [0u8; 32];
    r.read_exact(&mut h)?;
    if &magic != MAGIC || &h != hash {
        return Err(Error::Format("dataset cache does not match".into()));
    }
    let n = get_u64(r)? as usize;
    let dim = get_u64(r)? as usize;
    let len = get_u64(r)? as usize;
    let pd = get_u64(r)? as usize;
    let mut family = Family { spec: *spec, coeffs: Vec::with_capacity(n), samples: Vec::with_capacity(n) };
    let mut triples = Vec::with_capacity(n);
    let mut l0_points = Vec::with_capacity(n);
    for ic in 0..n {
        family.coeffs.push(get_f64s(r, dim)?);
        family.samples.push(get_f64s(r, len)?);
        let point = get_f64s(r, pd)?;
        let t = get_f64s(r, 1)?[0];
        triples.push(TrainTriple { ic, point, t });
        let m = get_u64(r)? as usize;
        l0_points.push((0..m).map(|_| get_u64(r).map(|v| v as usize)).collect::<Result<_>>()?);
    }
    Ok(Dataset { family, triples, l0_points, t_end, seed })
}

/// [`build_dataset`] through a file cache in `dir`.
pub fn cached_dataset(
    dir: &Path,
    spec: &FamilySpec,
    t_end: f64,
    n: usize,
    l0_per: usize,
    seed: u64,
) -> Result<Dataset> {
    let hash = spec_hash(spec, t_end, n, l0_per, seed);
    let name: String = hash[..12].iter().map(|b| format!("{b:02x}")).collect();
    let path = dir.join(format!("{name}.data"));
    if let Ok(f) = fs::File::open(&path) {
        if let Ok(d) = read_dataset(&mut BufReader::new(f), spec, t_end, seed, &hash) {
            return Ok(d);
        }
    }
    let d = build_dataset(spec, t_end, n, l0_per, seed)?;
    fs::create_dir_all(dir)?;
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(fs::File::create(&tmp)?);
        write_dataset(&mut w, &d, &hash)?;
        w.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_domain() {
        let spec = FamilySpec::sphere(2);
        let a = build_dataset(&spec, 1.0, 200, 8, 3).unwrap();
        assert_eq!(a, build_dataset(&spec, 1.0, 200, 8, 3).unwrap());
        for tr in &a.triples {
            assert!(tr.point[0] >= POLE_BAND && tr.point[0] <= PI - POLE_BAND);
            assert!((0.0..1.0).contains(&tr.t));
        }
        assert!(a.l0_points.iter().all(|p| p.len() == 8 && p.iter().all(|&j| j < 400)));
        let full = build_dataset(&FamilySpec::interval(3, 11), 0.5, 4, 50, 3).unwrap();
        assert_eq!(full.l0_points[0], (0..11).collect::<Vec<_>>());
        assert!(build_dataset(&spec, 1.0, 0, 8, 3).is_err());
    }

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = FamilySpec::torus(2, 4, 4);
        let a = cached_dataset(dir.path(), &spec, 1.0, 30, 5, 9).unwrap();
        let b = cached_dataset(dir.path(), &spec, 1.0, 30, 5, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, build_dataset(&spec, 1.0, 30, 5, 9).unwrap());
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
