//! Linear finite elements on the embedded torus and the resulting discrete
//! Laplace-Beltrami eigenbasis.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::nn::checkpoint::{get_f64s, put_f64s};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusGeometry {
    pub major: f64,
    pub minor: f64,
    pub n_theta: usize,
    pub n_phi: usize,
}

impl TorusGeometry {
    pub fn new(major: f64, minor: f64, n_theta: usize, n_phi: usize) -> Result<Self> {
        if !(major > minor && minor > 0.0) {
            return Err(Error::InvalidGrid(format!("need R > r > 0, got R={major}, r={minor}")));
        }
        if n_theta < 3 || n_phi < 3 {
            return Err(Error::InvalidGrid(format!("grid {n_theta}x{n_phi} below 3x3")));
        }
        Ok(TorusGeometry {
            major,
            minor,
            n_theta,
            n_phi,
        })
    }

    pub fn embed(&self, theta: f64, phi: f64) -> [f64; 3] {
        let ring = self.major + self.minor * theta.cos();
        [ring * phi.cos(), ring * phi.sin(), self.minor * theta.sin()]
    }

    /// Parameter values of vertex `(i, j)`.
    pub fn node(&self, i: usize, j: usize) -> (f64, f64) {
        (
            2.0 * PI * i as f64 / self.n_theta as f64,
            2.0 * PI * j as f64 / self.n_phi as f64,
        )
    }

    /// Vertex parameters flattened with `j` (phi) fastest.
    pub fn grid(&self) -> Vec<(f64, f64)> {
        let mut g = Vec::with_capacity(self.n_theta * self.n_phi);
        for i in 0..self.n_theta {
            for j in 0..self.n_phi {
                g.push(self.node(i, j));
            }
        }
        g
    }

    pub fn area(&self) -> f64 {
        4.0 * PI * PI * self.major * self.minor
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusMesh {
    pub geom: TorusGeometry,
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[usize; 3]>,
}

impl TorusMesh {
    pub fn edge_count(&self) -> usize {
        let mut edges = BTreeSet::new();
        for t in &self.triangles {
            for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edge_count() as i64 + self.triangles.len() as i64
    }
}

pub fn build_torus_mesh(geom: TorusGeometry) -> Result<TorusMesh> {
    let geom = TorusGeometry::new(geom.major, geom.minor, geom.n_theta, geom.n_phi)?;
    let (nt, np) = (geom.n_theta, geom.n_phi);
    let id = |i: usize, j: usize| (i % nt) * np + (j % np);
    let vertices = geom.grid().iter().map(|&(t, p)| geom.embed(t, p)).collect();
    let mut triangles = Vec::with_capacity(2 * nt * np);
    for i in 0..nt {
        for j in 0..np {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    Ok(TorusMesh {
        geom,
        vertices,
        triangles,
    })
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// P1 stiffness `S` and consistent mass `B`.
pub fn assemble_fem(mesh: &TorusMesh) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = mesh.vertices.len();
    let mut s = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, n);
    for (ti, t) in mesh.triangles.iter().enumerate() {
        let p = t.map(|v| mesh.vertices[v]);
        // edge opposite vertex a
        let e = [sub(p[2], p[1]), sub(p[0], p[2]), sub(p[1], p[0])];
        let c = cross(e[2], sub(p[2], p[0]));
        let area = 0.5 * dot(c, c).sqrt();
        if !(area > 1e-14) {
            return Err(Error::DegenerateTriangle(ti));
        }
        let mut k = [[0.0; 3]; 3];
        for a in 0..3 {
            for bb in (a + 1)..3 {
                let v = dot(e[a], e[bb]) / (4.0 * area);
                k[a][bb] = v;
                k[bb][a] = v;
            }
        }
        for a in 0..3 {
            k[a][a] = -(0..3).filter(|&bb| bb != a).map(|bb| k[a][bb]).sum::<f64>();
        }
        for a in 0..3 {
            for bb in 0..3 {
                s[(t[a], t[bb])] += k[a][bb];
                let m = if a == bb { area / 6.0 } else { area / 12.0 };
                b[(t[a], t[bb])] += m;
            }
        }
    }
    Ok((s, b))
}

/// Discrete eigenpairs `S v = lambda B v`, ascending, `B`-orthonormal.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    pub geom: TorusGeometry,
    pub eigenvalues: Vec<f64>,
    /// Column `k` holds the nodal values of eigenvector `k`.
    pub vectors: DMatrix<f64>,
    pub mass: DMatrix<f64>,
    pub stiffness: DMatrix<f64>,
}

pub fn solve_eigenbasis(
    geom: TorusGeometry,
    s: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: usize,
) -> Result<EigenBasis> {
    let n = s.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidShape(format!("K = {k} with {n} vertices")));
    }
    let chol = b.clone().cholesky().ok_or(Error::CholeskyFailure)?;
    let l = chol.l();
    // A = L^-1 S L^-T
    let y = l
        .solve_lower_triangular(s)
        .ok_or(Error::CholeskyFailure)?;
    let a = l
        .solve_lower_triangular(&y.transpose())
        .ok_or(Error::CholeskyFailure)?;
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut vals = Vec::with_capacity(k);
    let mut ys = DMatrix::zeros(n, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        vals.push(eig.eigenvalues[i]);
        ys.set_column(c, &eig.eigenvectors.column(i));
    }
    let mut v = l
        .transpose()
        .solve_upper_triangular(&ys)
        .ok_or(Error::CholeskyFailure)?;
    for c in 0..k {
        let mut col = v.column_mut(c);
        let first = col.iter().copied().find(|x| x.abs() > 1e-12).unwrap_or(0.0);
        if first < 0.0 {
            col.neg_mut();
        }
    }
    Ok(EigenBasis {
        geom,
        eigenvalues: vals,
        vectors: v,
        mass: b.clone(),
        stiffness: s.clone(),
    })
}

impl EigenBasis {
    pub fn build(geom: TorusGeometry, k: usize) -> Result<EigenBasis> {
        let mesh = build_torus_mesh(geom)?;
        let (s, b) = assemble_fem(&mesh)?;
        solve_eigenbasis(mesh.geom, &s, &b, k)
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn n_nodes(&self) -> usize {
        self.vectors.nrows()
    }

    /// `c = V^T B f` for nodal values `f`.
    pub fn transform(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n_nodes() {
            return Err(Error::ShapeMismatch {
                expected: self.n_nodes(),
                got: f.len(),
            });
        }
        let bf = super::apply(&self.mass, f);
        Ok((0..self.len())
            .map(|c| self.vectors.column(c).iter().zip(&bf).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// Nodal values of `sum c_k v_k`.
    pub fn synthesize(&self, c: &[f64]) -> Vec<f64> {
        super::apply(&self.vectors, c)
    }

    /// `(max_k |v_i^T B v_j - delta_ij|, max_k ||S v - lambda B v|| / ||S v||)`.
    pub fn invariant_errors(&self) -> (f64, f64) {
        let g = self.vectors.transpose() * &self.mass * &self.vectors;
        let mut orth: f64 = 0.0;
        for i in 0..self.len() {
            for j in 0..self.len() {
                let d = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((g[(i, j)] - d).abs());
            }
        }
        let mut res: f64 = 0.0;
        for c in 0..self.len() {
            let v = self.vectors.column(c);
            let sv = &self.stiffness * v;
            let bv = &self.mass * v;
            let r = &sv - bv * self.eigenvalues[c];
            let scale = sv.norm().max(self.mass.norm() * v.norm() * 1e-3);
            res = res.max(r.norm() / scale);
        }
        (orth, res)
    }

    /// Persists `n_theta, n_phi, R, r, K, eigenvalues, nodal matrix`.
    ///
    /// ```text
    /// magic "SPNNEIG\0", version u32 = 1, n_theta u32, n_phi u32,
    /// R f64, r f64, K u32, K x f64 eigenvalues,
    /// K columns of n_theta*n_phi f64 nodal values
    /// ```
    /// All little-endian. Mass and stiffness are rebuilt on load.
    pub fn save(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"SPNNEIG\0")?;
        w.write_all(&1u32.to_le_bytes())?;
        w.write_all(&(self.geom.n_theta as u32).to_le_bytes())?;
        w.write_all(&(self.geom.n_phi as u32).to_le_bytes())?;
        put_f64s(w, &[self.geom.major, self.geom.minor])?;
        w.write_all(&(self.len() as u32).to_le_bytes())?;
        put_f64s(w, &self.eigenvalues)?;
        put_f64s(w, self.vectors.as_slice())?;
        Ok(())
    }

    pub fn load(r: &mut impl Read) -> Result<EigenBasis> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"SPNNEIG\0" {
            return Err(Error::Format("bad eigenbasis magic".into()));
        }
        let mut u = [0u8; 4];
        let mut next = |r: &mut dyn Read| -> Result<usize> {
            r.read_exact(&mut u)?;
            Ok(u32::from_le_bytes(u) as usize)
        };
        if next(r)? != 1 {
            return Err(Error::Format("unsupported eigenbasis version".into()));
        }
        let nt = next(r)?;
        let np = next(r)?;
        let rr = get_f64s(r, 2)?;
        let k = next(r)?;
        let geom = TorusGeometry::new(rr[0], rr[1], nt, np)?;
        let eigenvalues = get_f64s(r, k)?;
        let vectors = DMatrix::from_vec(nt * np, k, get_f64s(r, nt * np * k)?);
        let mesh = build_torus_mesh(geom)?;
        let (stiffness, mass) = assemble_fem(&mesh)?;
        Ok(EigenBasis {
            geom,
            eigenvalues,
            vectors,
            mass,
            stiffness,
        })
    }
}

/// Value of eigenvector `k` (0-based) at `(theta, phi)` by linear
/// interpolation on the containing mesh triangle.
pub fn torus_basis_eval(basis: &EigenBasis, k: usize, theta: f64, phi: f64) -> f64 {
    let col = basis.vectors.column(k);
    interpolate(&basis.geom, |v| col[v], theta, phi)
}

pub fn interpolate<F: Fn(usize) -> f64>(geom: &TorusGeometry, nodal: F, theta: f64, phi: f64) -> f64 {
    let (nt, np) = (geom.n_theta, geom.n_phi);
    let u = theta.rem_euclid(2.0 * PI) / (2.0 * PI) * nt as f64;
    let v = phi.rem_euclid(2.0 * PI) / (2.0 * PI) * np as f64;
    let (i, j) = (u.floor() as usize % nt, v.floor() as usize % np);
    let (fu, fv) = (u - u.floor(), v - v.floor());
    let id = |a: usize, b: usize| ((i + a) % nt) * np + (j + b) % np;
    let v00 = nodal(id(0, 0));
    let v11 = nodal(id(1, 1));
    if fu >= fv {
        (1.0 - fu) * v00 + (fu - fv) * nodal(id(1, 0)) + fv * v11
    } else {
        (1.0 - fv) * v00 + (fv - fu) * nodal(id(0, 1)) + fu * v11
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mesh_counts() {
        let m = build_torus_mesh(TorusGeometry::new(2.0, 1.0, 15, 15).unwrap()).unwrap();
        assert_eq!(m.vertices.len(), 225);
        assert_eq!(m.triangles.len(), 450);
        assert_eq!(m.edge_count(), 675);
        assert_eq!(m.euler_characteristic(), 0);
        let m3 = build_torus_mesh(TorusGeometry::new(2.0, 1.0, 3, 3).unwrap()).unwrap();
        assert_eq!(m3.euler_characteristic(), 0);
        assert_eq!(m.vertices[0], [3.0, 0.0, 0.0]);
        assert!(TorusGeometry::new(1.0, 2.0, 5, 5).is_err());
        assert!(TorusGeometry::new(2.0, 1.0, 2, 5).is_err());
    }

    #[test]
    fn fem_matrices() {
        let m = build_torus_mesh(TorusGeometry::new(2.0, 1.0, 12, 12).unwrap()).unwrap();
        let (s, b) = assemble_fem(&m).unwrap();
        for i in 0..s.nrows() {
            assert!(s.row(i).sum().abs() < 1e-13);
            for j in 0..s.ncols() {
                assert_eq!(s[(i, j)], s[(j, i)]);
                assert_eq!(b[(i, j)], b[(j, i)]);
            }
        }
    }

    #[test]
    fn eigenbasis_contract_and_interpolation() {
        let eb = EigenBasis::build(TorusGeometry::new(2.0, 1.0, 8, 8).unwrap(), 10).unwrap();
        assert!(eb.eigenvalues[0].abs() < 1e-8);
        let c0 = eb.vectors[(0, 0)];
        assert!(c0 > 0.0);
        for i in 0..eb.n_nodes() {
            assert!((eb.vectors[(i, 0)] - c0).abs() < 1e-8);
        }
        let (orth, res) = eb.invariant_errors();
        assert!(orth < 1e-8 && res < 1e-8, "{orth} {res}");
        let (t, p) = eb.geom.node(3, 5);
        assert_eq!(torus_basis_eval(&eb, 4, t, p), eb.vectors[(3 * 8 + 5, 4)]);
        assert!((torus_basis_eval(&eb, 0, 1.234, 5.0) - c0).abs() < 1e-10);
        // barycenter of triangle (i,j),(i+1,j),(i+1,j+1)
        let h = 2.0 * PI / 8.0;
        let (bt, bp) = (2.0 * h + 2.0 / 3.0 * h, h + 1.0 / 3.0 * h);
        let mean = (eb.vectors[(2 * 8 + 1, 3)] + eb.vectors[(3 * 8 + 1, 3)] + eb.vectors[(3 * 8 + 2, 3)]) / 3.0;
        assert!((torus_basis_eval(&eb, 3, bt, bp) - mean).abs() < 1e-12);
    }

    #[test]
    fn persistence_round_trip() {
        let eb = EigenBasis::build(TorusGeometry::new(2.0, 1.0, 5, 6).unwrap(), 4).unwrap();
        let mut buf = Vec::new();
        eb.save(&mut buf).unwrap();
        let back = EigenBasis::load(&mut buf.as_slice()).unwrap();
        assert_eq!(back.eigenvalues, eb.eigenvalues);
        assert_eq!(back.vectors, eb.vectors);
        assert_eq!(back.mass, eb.mass);
    }
}
