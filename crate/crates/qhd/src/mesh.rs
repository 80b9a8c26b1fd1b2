//! Regular grids on the unit box, wavefunctions and diagonal observables.

use nalgebra_sparse::{CooMatrix, CsrMatrix};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::Objective;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// r+1 nodes per edge at j/r, wavefunction vanishes outside.
    Dirichlet,
    /// N nodes per edge at j/N, wrapping around.
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "MeshRepr")]
pub struct Mesh {
    dim: usize,
    cells_per_edge: usize,
    boundary: Boundary,
}

#[derive(Deserialize)]
struct MeshRepr {
    dim: usize,
    cells_per_edge: usize,
    boundary: Boundary,
}

impl TryFrom<MeshRepr> for Mesh {
    type Error = Error;
    fn try_from(m: MeshRepr) -> Result<Self> {
        Mesh::new(m.dim, m.cells_per_edge, m.boundary)
    }
}

impl Mesh {
    pub fn new(dim: usize, cells_per_edge: usize, boundary: Boundary) -> Result<Self> {
        if dim == 0 || cells_per_edge == 0 {
            return invalid("mesh dimension and resolution must be positive");
        }
        let m = Mesh { dim, cells_per_edge, boundary };
        let per_edge = m.nodes_per_edge() as u128;
        if per_edge.checked_pow(dim as u32).is_none_or(|n| n > usize::MAX as u128 / 32) {
            return Err(Error::Resource(format!("{per_edge}^{dim} nodes")));
        }
        Ok(m)
    }

    pub fn dirichlet(dim: usize, r: usize) -> Result<Self> {
        Self::new(dim, r, Boundary::Dirichlet)
    }

    pub fn periodic(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, n, Boundary::Periodic)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_edge(&self) -> usize {
        self.cells_per_edge
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn nodes_per_edge(&self) -> usize {
        match self.boundary {
            Boundary::Dirichlet => self.cells_per_edge + 1,
            Boundary::Periodic => self.cells_per_edge,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes_per_edge().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        j as f64 / self.cells_per_edge as f64
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let m = self.nodes_per_edge();
        let mut idx = vec![0; self.dim];
        for k in (0..self.dim).rev() {
            idx[k] = flat % m;
            flat /= m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let m = self.nodes_per_edge();
        idx.iter().fold(0, |acc, &j| acc * m + j)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).into_iter().map(|j| self.coordinate(j)).collect()
    }

    /// Stride of axis `k` in the flat layout.
    pub fn stride(&self, k: usize) -> usize {
        self.nodes_per_edge().pow((self.dim - 1 - k) as u32)
    }

    pub(crate) fn ensure_same(&self, other: &Mesh) -> Result<()> {
        if self != other {
            return invalid(format!("mesh mismatch: {self:?} vs {other:?}"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveFunction {
    mesh: Mesh,
    amplitudes: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct WaveFunctionRepr {
    mesh: Mesh,
    amplitudes: Vec<[f64; 2]>,
}

impl Serialize for WaveFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        WaveFunctionRepr {
            mesh: self.mesh,
            amplitudes: self.amplitudes.iter().map(|c| [c.re, c.im]).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WaveFunction {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = WaveFunctionRepr::deserialize(d)?;
        let amps = r.amplitudes.into_iter().map(|[re, im]| Complex64::new(re, im)).collect();
        WaveFunction::from_amplitudes(r.mesh, amps).map_err(serde::de::Error::custom)
    }
}

impl WaveFunction {
    /// Normalizes the given amplitudes to unit norm.
    pub fn from_amplitudes(mesh: Mesh, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != mesh.len() {
            return invalid(format!("expected {} amplitudes, got {}", mesh.len(), amplitudes.len()));
        }
        let norm = amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return invalid("amplitudes must have finite nonzero norm");
        }
        amplitudes.iter_mut().for_each(|c| *c /= norm);
        Ok(WaveFunction { mesh, amplitudes })
    }

    /// Wraps amplitudes without renormalizing; used by the integrators.
    pub(crate) fn from_raw(mesh: Mesh, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(amplitudes.len(), mesh.len());
        WaveFunction { mesh, amplitudes }
    }

    pub fn point_mass(mesh: Mesh, flat: usize) -> Result<Self> {
        if flat >= mesh.len() {
            return invalid("node index out of range");
        }
        let mut a = vec![Complex64::new(0.0, 0.0); mesh.len()];
        a[flat] = Complex64::new(1.0, 0.0);
        Ok(WaveFunction { mesh, amplitudes: a })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Marginal density of axis `k`.
    pub fn marginal(&self, k: usize) -> Vec<f64> {
        let m = self.mesh.nodes_per_edge();
        let mut out = vec![0.0; m];
        for (flat, c) in self.amplitudes.iter().enumerate() {
            out[(flat / self.mesh.stride(k)) % m] += c.norm_sqr();
        }
        out
    }

    /// Copies a periodic state onto the Dirichlet mesh with r = N, node j
    /// taking the amplitude of periodic node j mod N, then renormalizes.
    pub fn to_dirichlet(&self) -> Result<WaveFunction> {
        if self.mesh.boundary != Boundary::Periodic {
            return invalid("state is not on a periodic mesh");
        }
        let n = self.mesh.cells_per_edge;
        let target = Mesh::dirichlet(self.mesh.dim, n)?;
        let amps = (0..target.len())
            .map(|flat| {
                let idx: Vec<usize> = target.multi_index(flat).into_iter().map(|j| j % n).collect();
                self.amplitudes[self.mesh.flat_index(&idx)]
            })
            .collect();
        WaveFunction::from_amplitudes(target, amps)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator {
    mesh: Mesh,
    values: Vec<f64>,
}

impl DiagonalOperator {
    pub fn new(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.len() {
            return invalid(format!("expected {} values, got {}", mesh.len(), values.len()));
        }
        if let Some(node) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { node, msg: "non-finite value".into() });
        }
        Ok(DiagonalOperator { mesh, values })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

pub struct FdmOperators {
    pub laplacian: CsrMatrix<f64>,
    pub position: Vec<DiagonalOperator>,
}

/// Kronecker sum over `d` axes of the symmetric tridiagonal matrix with
/// off-diagonal `off[j]` between nodes j and j+1, plus `diag(flat)` on the
/// diagonal.
pub fn lattice_operator(m: usize, d: usize, off: &[f64], diag: impl Fn(usize) -> f64) -> CsrMatrix<f64> {
    assert_eq!(off.len() + 1, m);
    let len = m.pow(d as u32);
    let mut coo = CooMatrix::new(len, len);
    for flat in 0..len {
        let dv = diag(flat);
        if dv != 0.0 {
            coo.push(flat, flat, dv);
        }
        let mut rest = flat;
        for k in (0..d).rev() {
            let stride = m.pow((d - 1 - k) as u32);
            let j = rest % m;
            rest /= m;
            if j > 0 && off[j - 1] != 0.0 {
                coo.push(flat, flat - stride, off[j - 1]);
            }
            if j + 1 < m && off[j] != 0.0 {
                coo.push(flat, flat + stride, off[j]);
            }
        }
    }
    CsrMatrix::from(&coo)
}

/// Lattice adjacency Â_d of the (r+1)^d grid.
pub fn lattice_adjacency(r: usize, d: usize) -> CsrMatrix<f64> {
    lattice_operator(r + 1, d, &vec![1.0; r], |_| 0.0)
}

/// Finite-difference Laplacian r²(Â_d − 2d·I) and position observables.
pub fn build_fdm_operators(mesh: &Mesh) -> Result<FdmOperators> {
    if mesh.boundary != Boundary::Dirichlet {
        return invalid("finite-difference operators need a dirichlet mesh");
    }
    let (r, d) = (mesh.cells_per_edge, mesh.dim);
    let r2 = (r * r) as f64;
    let laplacian = lattice_operator(r + 1, d, &vec![r2; r], |_| -2.0 * d as f64 * r2);
    let position = (0..d)
        .map(|k| {
            let vals = (0..mesh.len()).map(|flat| mesh.coordinate(mesh.multi_index(flat)[k])).collect();
            DiagonalOperator::new(*mesh, vals)
        })
        .collect::<Result<_>>()?;
    Ok(FdmOperators { laplacian, position })
}

pub fn discretize_objective(mesh: &Mesh, f: &dyn Objective) -> Result<DiagonalOperator> {
    if f.dim() != mesh.dim {
        return invalid(format!("objective dimension {} on a {}-d mesh", f.dim(), mesh.dim));
    }
    let mut values = Vec::with_capacity(mesh.len());
    for flat in 0..mesh.len() {
        let v = f.eval(&mesh.point(flat));
        if !v.is_finite() {
            return Err(Error::Evaluation { node: flat, msg: format!("f = {v}") });
        }
        values.push(v);
    }
    Ok(DiagonalOperator { mesh: *mesh, values })
}

pub fn uniform_state(mesh: &Mesh) -> WaveFunction {
    let a = Complex64::new(1.0 / (mesh.len() as f64).sqrt(), 0.0);
    WaveFunction { mesh: *mesh, amplitudes: vec![a; mesh.len()] }
}

/// Real Gaussian with |ψ|² ∝ exp(−|x−c|²/(2·variance)) sampled at the nodes.
pub fn gaussian_state(mesh: &Mesh, center: &[f64], variance: f64) -> Result<WaveFunction> {
    if center.len() != mesh.dim || center.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return invalid("center must be a point of the unit box");
    }
    if !(variance > 0.0) {
        return invalid("variance must be positive");
    }
    let amps = (0..mesh.len())
        .map(|flat| {
            let r2: f64 = mesh.point(flat).iter().zip(center).map(|(x, c)| (x - c) * (x - c)).sum();
            Complex64::new((-r2 / (4.0 * variance)).exp(), 0.0)
        })
        .collect();
    WaveFunction::from_amplitudes(*mesh, amps)
}

pub fn expectation(psi: &WaveFunction, obs: &DiagonalOperator) -> Result<f64> {
    psi.mesh.ensure_same(&obs.mesh)?;
    Ok(psi.amplitudes.iter().zip(&obs.values).map(|(c, v)| v * c.norm_sqr()).sum())
}

/// Flat node indices drawn i.i.d. from |ψ|².
pub fn sample_indices(psi: &WaveFunction, shots: usize, seed: u64) -> Result<Vec<usize>> {
    let dist = WeightedIndex::new(psi.density()).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..shots).map(|_| dist.sample(&mut rng)).collect())
}

pub fn sample_positions(psi: &WaveFunction, shots: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if shots == 0 {
        return invalid("shots must be at least 1");
    }
    Ok(sample_indices(psi, shots, seed)?.into_iter().map(|i| psi.mesh.point(i)).collect())
}

/// Strict `distance < radius` test on squared distances. A node whose
/// distance equals the radius up to rounding counts as a tie and is excluded.
pub fn inside_ball(d2: f64, radius: f64) -> bool {
    d2 < radius * radius * (1.0 - 1e-12)
}

/// Probability mass of `density` on nodes strictly closer than `radius` to `x_star`.
pub fn mass_within(mesh: &Mesh, density: &[f64], x_star: &[f64], radius: f64) -> f64 {
    density
        .iter()
        .enumerate()
        .filter(|(flat, _)| {
            let p = mesh.point(*flat);
            inside_ball(p.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), radius)
        })
        .map(|(_, p)| p)
        .sum()
}

pub fn success_probability(psi: &WaveFunction, x_star: &[f64], radius: f64) -> Result<f64> {
    if !(radius > 0.0) {
        return invalid("radius must be positive");
    }
    if x_star.len() != psi.mesh.dim {
        return invalid("x_star dimension mismatch");
    }
    Ok(mass_within(&psi.mesh, &psi.density(), x_star, radius).min(1.0))
}

/// Precomputed mask of nodes within `radius` of `x_star`.
pub(crate) fn ball_mask(mesh: &Mesh, x_star: &[f64], radius: f64) -> Vec<bool> {
    (0..mesh.len())
        .map(|flat| inside_ball(mesh.point(flat).iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), radius))
        .collect()
}
