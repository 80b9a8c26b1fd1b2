//! Low-energy spectra of the discretized QHD Hamiltonian, probability
//! spectra, energy ratios and the convex Lyapunov monitor.

use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dynamics::Schedule;
use crate::error::{invalid, Error, Result};
use crate::fft::{signed_frequency, FftNd};
use crate::mesh::{lattice_operator, Boundary, DiagonalOperator, Mesh, WaveFunction};
use crate::objectives::Objective;

/// e^φ(−½∇²) + e^χ f on the interior nodes of a Dirichlet mesh.
///
/// Boundary nodes carry the zero boundary condition and are not unknowns;
/// the kinetic part is −½r²(Â − 2d·I) on the (r−1)^d interior lattice.
#[derive(Clone, Debug)]
pub struct Hamiltonian {
    mesh: Mesh,
    nodes: Vec<usize>,
    op: CsrMatrix<f64>,
}

impl Hamiltonian {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    /// Mesh index of each unknown.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn operator(&self) -> &CsrMatrix<f64> {
        &self.op
    }
}

fn interior_nodes(mesh: &Mesh) -> Vec<usize> {
    let r = mesh.cells_per_edge();
    (0..mesh.len())
        .filter(|&flat| mesh.multi_index(flat).iter().all(|&j| j > 0 && j < r))
        .collect()
}

pub fn build_hamiltonian(mesh: &Mesh, f: &dyn Objective, e_phi: f64, e_chi: f64) -> Result<Hamiltonian> {
    if mesh.boundary() != Boundary::Dirichlet {
        return invalid("spectral hamiltonian needs a dirichlet mesh");
    }
    if mesh.cells_per_edge() < 2 {
        return invalid("need r >= 2 for interior nodes");
    }
    if !(e_phi >= 0.0 && e_chi >= 0.0) {
        return invalid("coefficients must be non-negative");
    }
    if f.dim() != mesh.dim() {
        return invalid("objective dimension mismatch");
    }
    let (r, d) = (mesh.cells_per_edge(), mesh.dim());
    let nodes = interior_nodes(mesh);
    let mut pot = Vec::with_capacity(nodes.len());
    for &flat in &nodes {
        let v = f.eval(&mesh.point(flat));
        if !v.is_finite() {
            return Err(Error::Evaluation { node: flat, msg: format!("f = {v}") });
        }
        pot.push(v);
    }
    let r2 = (r * r) as f64;
    let op = lattice_operator(r - 1, d, &vec![-0.5 * e_phi * r2; r - 2], |i| {
        e_phi * d as f64 * r2 + e_chi * pot[i]
    });
    Ok(Hamiltonian { mesh: *mesh, nodes, op })
}

#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors in operator coordinates.
    pub eigenvectors: Vec<Vec<f64>>,
    mesh: Option<(Mesh, Vec<usize>)>,
}

impl EigenSystem {
    /// Eigenvector `n` on the full mesh, zero on nodes that are not unknowns.
    pub fn on_mesh(&self, n: usize) -> Option<Vec<f64>> {
        let (mesh, nodes) = self.mesh.as_ref()?;
        let mut v = vec![0.0; mesh.len()];
        for (i, &flat) in nodes.iter().enumerate() {
            v[flat] = self.eigenvectors[n][i];
        }
        Some(v)
    }
}

fn spmv(op: &CsrMatrix<f64>, x: &[f64], y: &mut [f64]) {
    for (i, row) in op.row_iter().enumerate() {
        y[i] = row.col_indices().iter().zip(row.values()).map(|(&j, v)| v * x[j]).sum();
    }
}

/// Max absolute row sum, an upper bound on the spectral norm.
pub fn operator_norm_bound(op: &CsrMatrix<f64>) -> f64 {
    op.row_iter().map(|r| r.values().iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
}

/// Orthogonalizes `w` against `basis` twice, returning the coefficients.
fn reorthogonalize(basis: &[Vec<f64>], w: &mut [f64]) -> Vec<f64> {
    let mut h = vec![0.0; basis.len()];
    for _ in 0..2 {
        for (i, v) in basis.iter().enumerate() {
            let c = dot(v, w);
            axpy(-c, v, w);
            h[i] += c;
        }
    }
    h
}

pub fn dense_lowest(op: &CsrMatrix<f64>, k: usize) -> EigenSystem {
    let n = op.nrows();
    let mut m = DMatrix::zeros(n, n);
    for (i, row) in op.row_iter().enumerate() {
        for (&j, &v) in row.col_indices().iter().zip(row.values()) {
            m[(i, j)] = v;
        }
    }
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let take = k.min(n);
    EigenSystem {
        eigenvalues: order[..take].iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: order[..take].iter().map(|&i| eig.eigenvectors.column(i).iter().copied().collect()).collect(),
        mesh: None,
    }
}

struct Lanczos<'a> {
    op: &'a CsrMatrix<f64>,
    locked: &'a [Vec<f64>],
    basis_size: usize,
    norm: f64,
    tol: f64,
    max_matvecs: usize,
}

impl Lanczos<'_> {
    /// Thick-restart Lanczos with full reorthogonalization for the `k`
    /// smallest eigenpairs of the operator with the locked vectors deflated.
    fn run(&self, k: usize, start: Vec<f64>) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let n = self.op.nrows();
        let m = self.basis_size;
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut t = DMatrix::<f64>::zeros(m, m);
        let mut v = start;
        reorthogonalize(self.locked, &mut v);
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let mut matvecs = 0;
        let mut fresh = ChaCha8Rng::seed_from_u64(0x1a2c);
        loop {
            // Expand the basis from its current size up to m.
            let mut beta = 0.0;
            let mut w = vec![0.0; n];
            while basis.len() < m {
                let j = basis.len();
                basis.push(v.clone());
                spmv(self.op, &basis[j], &mut w);
                matvecs += 1;
                // Locked directions are shifted above the spectrum rather than
                // projected out, so rounding leakage into them is not amplified.
                for u in self.locked {
                    axpy(2.0 * self.norm * dot(u, &basis[j]), u, &mut w);
                }
                let h = reorthogonalize(&basis, &mut w);
                for (i, hi) in h.iter().enumerate() {
                    t[(i, j)] = *hi;
                    t[(j, i)] = *hi;
                }
                beta = dot(&w, &w).sqrt();
                if beta <= 1e-12 * self.norm {
                    // Invariant subspace: continue from a fresh direction.
                    let mut z: Vec<f64> = (0..n).map(|_| fresh.random::<f64>() - 0.5).collect();
                    reorthogonalize(self.locked, &mut z);
                    reorthogonalize(&basis, &mut z);
                    let nz = dot(&z, &z).sqrt();
                    if nz < 1e-12 {
                        break;
                    }
                    z.iter_mut().for_each(|x| *x /= nz);
                    v = z;
                    beta = 0.0;
                } else {
                    v = w.iter().map(|x| x / beta).collect();
                }
            }
            let size = basis.len();
            let tm = t.view((0, 0), (size, size)).into_owned();
            let eig = SymmetricEigen::new(tm);
            let mut order: Vec<usize> = (0..size).collect();
            order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let want = k.min(size);
            let res: Vec<f64> = order[..want].iter().map(|&i| (beta * eig.eigenvectors[(size - 1, i)]).abs()).collect();
            let done = res.iter().all(|r| *r <= self.tol) || size >= n.saturating_sub(self.locked.len());
            if done || matvecs >= self.max_matvecs {
                let vals = order[..want].iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = order[..want].iter().map(|&i| combine(&basis, eig.eigenvectors.column(i).as_slice())).collect();
                if !done {
                    return Err(Error::Convergence { residuals: res });
                }
                return Ok((vals, vecs));
            }
            // Thick restart: keep the lowest Ritz vectors plus the residual direction.
            let keep = (k + (m - k) / 2).min(size - 1);
            let kept: Vec<Vec<f64>> =
                order[..keep].iter().map(|&i| combine(&basis, eig.eigenvectors.column(i).as_slice())).collect();
            t.fill(0.0);
            for (a, &i) in order[..keep].iter().enumerate() {
                t[(a, a)] = eig.eigenvalues[i];
            }
            basis = kept;
        }
    }
}

fn combine(basis: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; basis[0].len()];
    for (v, c) in basis.iter().zip(coeffs) {
        axpy(*c, v, &mut out);
    }
    out
}

/// The `k` smallest eigenpairs of a sparse symmetric operator.
///
/// Thick-restart Lanczos from the normalized all-ones vector. A second pass
/// from a seeded vector, deflated against the first pass, recovers
/// eigenvectors orthogonal to the first Krylov space (symmetry sectors), and
/// the union is sorted. Small operators are solved densely.
pub fn lowest_eigenpairs_op(op: &CsrMatrix<f64>, k: usize) -> Result<EigenSystem> {
    if k == 0 || k > 32 {
        return invalid("need 1 <= k <= 32");
    }
    let n = op.nrows();
    let norm = operator_norm_bound(op).max(f64::MIN_POSITIVE);
    if n <= 400 {
        return Ok(dense_lowest(op, k));
    }
    let basis_size = (4 * k + 40).max(120);
    let first = Lanczos { op, locked: &[], basis_size, norm, tol: 1e-10 * norm, max_matvecs: 200_000 }
        .run(k, vec![1.0; n])?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x51de);
    let start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let second = Lanczos { op, locked: &first.1, basis_size, norm, tol: 1e-10 * norm, max_matvecs: 200_000 }
        .run(k, start)?;
    let mut pairs: Vec<(f64, Vec<f64>)> =
        first.0.into_iter().zip(first.1).chain(second.0.into_iter().zip(second.1)).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.truncate(k);
    let mut w = vec![0.0; n];
    let mut residuals = Vec::new();
    for (e, v) in &pairs {
        spmv(op, v, &mut w);
        axpy(-e, v, &mut w);
        residuals.push(dot(&w, &w).sqrt());
    }
    if residuals.iter().any(|r| *r > 1e-8 * norm) {
        return Err(Error::Convergence { residuals });
    }
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(EigenSystem { eigenvalues, eigenvectors, mesh: None })
}

pub fn lowest_eigenpairs(h: &Hamiltonian, k: usize) -> Result<EigenSystem> {
    let mut eig = lowest_eigenpairs_op(&h.op, k)?;
    eig.mesh = Some((h.mesh, h.nodes.clone()));
    Ok(eig)
}

/// Eigenvalues closer than this (relative) form one degenerate level.
const DEGENERACY_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilitySpectrum {
    /// |⟨n|ψ⟩|² per eigenvector.
    pub probs: Vec<f64>,
    /// (first, last, mass) per degenerate level; the mass is basis independent.
    pub levels: Vec<(usize, usize, f64)>,
    /// 1 − Σ|c_n|², the weight outside the computed eigenspace.
    pub residual: f64,
}

impl ProbabilitySpectrum {
    /// Mass on eigenvectors with index > n plus the residual.
    pub fn mass_above(&self, n: usize) -> f64 {
        self.probs.iter().skip(n + 1).sum::<f64>() + self.residual
    }
}

pub fn probability_spectrum(psi: &WaveFunction, eig: &EigenSystem) -> Result<ProbabilitySpectrum> {
    let (mesh, nodes) = eig.mesh.as_ref().ok_or_else(|| Error::InvalidArgument("eigensystem has no mesh".into()))?;
    psi.mesh().ensure_same(mesh)?;
    let amps = psi.amplitudes();
    let probs: Vec<f64> = eig
        .eigenvectors
        .iter()
        .map(|v| {
            let c: Complex64 = nodes.iter().zip(v).map(|(&flat, x)| amps[flat] * x).sum();
            c.norm_sqr()
        })
        .collect();
    let mut levels = Vec::new();
    let mut start = 0;
    for i in 1..=probs.len() {
        let split = i == probs.len() || {
            let (a, b) = (eig.eigenvalues[i - 1], eig.eigenvalues[i]);
            (b - a).abs() > DEGENERACY_TOL * a.abs().max(b.abs()).max(1.0)
        };
        if split {
            levels.push((start, i - 1, probs[start..i].iter().sum()));
            start = i;
        }
    }
    let total: f64 = probs.iter().sum();
    Ok(ProbabilitySpectrum { probs, levels, residual: (psi.norm_sqr() - total).max(0.0) })
}

pub fn energy_ratio(eig: &EigenSystem) -> Result<f64> {
    if eig.eigenvalues.len() < 2 {
        return invalid("need at least two eigenvalues");
    }
    let e0 = eig.eigenvalues[0];
    if !(e0 > 0.0) {
        return Err(Error::Domain(format!("E0 = {e0} is not positive; shift f by f_min")));
    }
    Ok(eig.eigenvalues[1] / e0)
}

/// (ω₁ + 3ω₂)/(ω₁ + ω₂): first-excited to ground energy of a 2D harmonic
/// oscillator with frequencies ω₁ ≥ ω₂.
pub fn semiclassical_ratio(omega: &[f64]) -> Result<f64> {
    if omega.len() != 2 {
        return Err(Error::UnsupportedDimension(omega.len()));
    }
    let (w1, w2) = (omega[0], omega[1]);
    if !(w1 >= w2 && w2 > 0.0) {
        return invalid("need omega_1 >= omega_2 > 0");
    }
    Ok((w1 + 3.0 * w2) / (w1 + w2))
}

/// W = ½‖Ĵψ‖² + e^{β_t}⟨f⟩ with Ĵ = e^{−γ_t}p̂ + (x̂ − x*), the momentum
/// applied by spectral differentiation on the periodic mesh.
pub fn lyapunov_w(psi: &WaveFunction, sched: &Schedule, t: f64, f: &DiagonalOperator, x_star: &[f64]) -> Result<f64> {
    let mesh = *psi.mesh();
    if mesh.boundary() != Boundary::Periodic {
        return invalid("lyapunov monitor needs a periodic mesh");
    }
    mesh.ensure_same(f.mesh())?;
    let (_, beta, gamma) =
        sched.abg(t).ok_or_else(|| Error::InvalidArgument("schedule lacks beta and gamma".into()))?;
    if x_star.len() != mesh.dim() {
        return invalid("x_star dimension mismatch");
    }
    let n = mesh.nodes_per_edge();
    let fft = FftNd::new(n, mesh.dim());
    let mut spec = psi.amplitudes().to_vec();
    fft.forward(&mut spec);
    let eg = (-gamma).exp();
    let mut j2 = 0.0;
    for (k, xs) in x_star.iter().enumerate().take(mesh.dim()) {
        let stride = mesh.stride(k);
        let mut p: Vec<Complex64> = spec
            .iter()
            .enumerate()
            .map(|(flat, c)| c * (2.0 * std::f64::consts::PI * signed_frequency((flat / stride) % n, n)))
            .collect();
        fft.inverse(&mut p);
        for (flat, (pc, c)) in p.iter().zip(psi.amplitudes()).enumerate() {
            let x = mesh.coordinate((flat / stride) % n) - xs;
            j2 += (pc * eg + c * x).norm_sqr();
        }
    }
    let ef: f64 = psi.amplitudes().iter().zip(f.values()).map(|(c, v)| c.norm_sqr() * v).sum();
    Ok(0.5 * j2 + beta.exp() * ef)
}
