//! On-disk cache of oracle trajectories.
//!
//! File name: hex SHA-256 of `(pde kind, coefficient, t_end, basis
//! fingerprint, dt, nonlinear flag, initial coefficients)`. Contents,
//! little-endian:
//!
//! ```text
//! magic "SPNNTRJ\0", version u32 = 1, dt f64, steps u32, K u32,
//! (steps + 1) * K f64 coefficients, time-major
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use super::{imex_bdf4_solve, ImexOptions, OracleSolution, PdeSpec, SpectralSystem};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{get_f64s, put_f64s};

#[derive(Debug, Clone)]
pub struct TrajectoryCache {
    pub dir: PathBuf,
}

fn key(pde: &PdeSpec, sys: &dyn SpectralSystem, opts: &ImexOptions, c0: &[f64]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{:?}:{}:{}:", pde.kind, pde.coef, pde.t_end));
    h.update(sys.fingerprint());
    h.update(format!(":{}:{}:{}:", opts.dt, opts.nonlinear, opts.startup_substeps));
    for v in c0 {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl TrajectoryCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        TrajectoryCache { dir: dir.into() }
    }

    pub fn solve(
        &self,
        c0: &[f64],
        pde: &PdeSpec,
        sys: &dyn SpectralSystem,
        opts: &ImexOptions,
    ) -> Result<OracleSolution> {
        let path = self.dir.join(format!("{}.traj", key(pde, sys, opts, c0)));
        if let Ok(f) = fs::File::open(&path) {
            if let Ok(sol) = read(&mut BufReader::new(f), sys) {
                return Ok(sol);
            }
        }
        let sol = imex_bdf4_solve(c0, pde, sys, opts)?;
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            write(&mut w, &sol)?;
            w.flush()?;
        }
        fs::rename(tmp, path)?;
        Ok(sol)
    }
}

fn write(w: &mut impl Write, sol: &OracleSolution) -> Result<()> {
    w.write_all(b"SPNNTRJ\0")?;
    w.write_all(&1u32.to_le_bytes())?;
    put_f64s(w, &[sol.dt])?;
    w.write_all(&(sol.steps as u32).to_le_bytes())?;
    w.write_all(&(sol.coeffs[0].len() as u32).to_le_bytes())?;
    for c in &sol.coeffs {
        put_f64s(w, c)?;
    }
    Ok(())
}

fn read(r: &mut impl Read, sys: &dyn SpectralSystem) -> Result<OracleSolution> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    let mut u = [0u8; 4];
    r.read_exact(&mut u)?;
    if &magic != b"SPNNTRJ\0" || u32::from_le_bytes(u) != 1 {
        return Err(Error::Format("bad trajectory header".into()));
    }
    let dt = get_f64s(r, 1)?[0];
    r.read_exact(&mut u)?;
    let steps = u32::from_le_bytes(u) as usize;
    r.read_exact(&mut u)?;
    let k = u32::from_le_bytes(u) as usize;
    let coeffs = (0..=steps).map(|_| get_f64s(r, k)).collect::<Result<_>>()?;
    Ok(OracleSolution {
        basis: sys.id(),
        coeffs,
        dt,
        steps,
        startup: "cached".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::Geometry;
    use crate::oracle::SphereSystem;

    #[test]
    fn cache_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cache = TrajectoryCache::new(dir.path());
        let sys = SphereSystem::new(2).unwrap();
        let pde = PdeSpec {
            t_end: 0.05,
            ..PdeSpec::allen_cahn(0.1, Geometry::Sphere)
        };
        let c0: Vec<f64> = (0..9).map(|i| 0.1 * i as f64).collect();
        let a = cache.solve(&c0, &pde, &sys, &ImexOptions::default()).unwrap();
        let b = cache.solve(&c0, &pde, &sys, &ImexOptions::default()).unwrap();
        assert_eq!(a.coeffs, b.coeffs);
        assert_eq!(b.startup, "cached");
    }
}
