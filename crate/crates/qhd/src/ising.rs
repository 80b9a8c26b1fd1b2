//! Hamming and radix-2 encodings of quadratic programs onto Ising machines,
//! QUBO/Ising conversion and text formats, time-energy rescaling, relaxed
//! discretized QHD, and a dense Ising-machine simulator.
//!
//! Qubit q is bit n−1−q of a basis index, so qubit 0 is the leftmost
//! character of a bitstring. A spin is z = +1 for bit 0 and −1 for bit 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra_sparse::CsrMatrix;
use num_complex::Complex64;

use crate::dynamics::{Observation, ScalarFn, Schedule, Trajectory};
use crate::error::{invalid, Error, Result};
use crate::mesh::{lattice_operator, Mesh, WaveFunction};
use crate::objectives::QpInstance;

/// Σ h_j z_j + Σ_{j>k} J_jk z_j z_k + offset.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingModel {
    pub n: usize,
    pub h: Vec<f64>,
    /// Keyed (j, k) with j > k.
    pub j: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

/// Σ q_j x_j + Σ_{j<k} q_jk x_j x_k + offset.
#[derive(Clone, Debug, PartialEq)]
pub struct QuboModel {
    pub n: usize,
    pub linear: Vec<f64>,
    /// Keyed (j, k) with j < k.
    pub quadratic: BTreeMap<(usize, usize), f64>,
    pub offset: f64,
}

fn bit(index: usize, n: usize, q: usize) -> usize {
    (index >> (n - 1 - q)) & 1
}

impl IsingModel {
    pub fn zero(n: usize) -> Self {
        IsingModel { n, h: vec![0.0; n], j: BTreeMap::new(), offset: 0.0 }
    }

    /// Adds `v` to the coupling of the unordered pair {a, b}.
    pub fn add_coupling(&mut self, a: usize, b: usize, v: f64) -> Result<()> {
        if a == b || a >= self.n || b >= self.n {
            return invalid(format!("bad coupling ({a}, {b})"));
        }
        *self.j.entry((a.max(b), a.min(b))).or_insert(0.0) += v;
        Ok(())
    }

    pub fn energy_bits(&self, bits: &[u8]) -> f64 {
        let z = |q: usize| if bits[q] == 0 { 1.0 } else { -1.0 };
        let mut e = self.offset;
        for (q, h) in self.h.iter().enumerate() {
            e += h * z(q);
        }
        for (&(a, b), v) in &self.j {
            e += v * z(a) * z(b);
        }
        e
    }

    pub fn energy_index(&self, index: usize) -> f64 {
        let bits: Vec<u8> = (0..self.n).map(|q| bit(index, self.n, q) as u8).collect();
        self.energy_bits(&bits)
    }

    /// Diagonal of the 2^n problem Hamiltonian.
    pub fn diagonal(&self) -> Result<Vec<f64>> {
        if self.n > 24 {
            return Err(Error::Resource(format!("2^{} diagonal", self.n)));
        }
        Ok((0..1usize << self.n).map(|i| self.energy_index(i)).collect())
    }
}

impl QuboModel {
    pub fn zero(n: usize) -> Self {
        QuboModel { n, linear: vec![0.0; n], quadratic: BTreeMap::new(), offset: 0.0 }
    }

    pub fn energy_bits(&self, x: &[u8]) -> f64 {
        let mut e = self.offset;
        for (q, c) in self.linear.iter().enumerate() {
            e += c * x[q] as f64;
        }
        for (&(a, b), v) in &self.quadratic {
            e += v * (x[a] * x[b]) as f64;
        }
        e
    }
}

pub fn qubo_to_ising(m: &QuboModel) -> IsingModel {
    let mut out = IsingModel::zero(m.n);
    out.offset = m.offset;
    for (q, c) in m.linear.iter().enumerate() {
        out.h[q] -= c / 2.0;
        out.offset += c / 2.0;
    }
    for (&(a, b), v) in &m.quadratic {
        out.h[a] -= v / 4.0;
        out.h[b] -= v / 4.0;
        out.offset += v / 4.0;
        *out.j.entry((b, a)).or_insert(0.0) += v / 4.0;
    }
    out
}

pub fn ising_to_qubo(m: &IsingModel) -> QuboModel {
    let mut out = QuboModel::zero(m.n);
    out.offset = m.offset;
    for (q, h) in m.h.iter().enumerate() {
        out.linear[q] -= 2.0 * h;
        out.offset += h;
    }
    for (&(a, b), v) in &m.j {
        out.linear[a] -= 2.0 * v;
        out.linear[b] -= 2.0 * v;
        out.offset += v;
        *out.quadratic.entry((b, a)).or_insert(0.0) += 4.0 * v;
    }
    out
}

fn fmt_float(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else {
        format!("{v}")
    }
}

fn write_model(kind: &str, n: usize, offset: f64, terms: &[(usize, usize, f64)]) -> String {
    let mut s = format!("# {kind} n={n} offset={}\n", fmt_float(offset));
    for &(i, j, c) in terms {
        if c != 0.0 {
            let _ = writeln!(s, "{i} {j} {}", fmt_float(c));
        }
    }
    s
}

type Terms = (usize, f64, Vec<(usize, usize, f64)>);

fn parse_model(kind: &str, text: &str) -> Result<Terms> {
    let mut lines = text.split('\n');
    let header = lines.next().unwrap_or("");
    let rest = header
        .strip_prefix(&format!("# {kind} n="))
        .ok_or_else(|| Error::Parse(format!("expected '# {kind} n=…' header")))?;
    let (n, off) = rest.split_once(" offset=").ok_or_else(|| Error::Parse("missing offset".into()))?;
    let n: usize = n.parse().map_err(|_| Error::Parse(format!("bad n '{n}'")))?;
    let offset: f64 = off.parse().map_err(|_| Error::Parse(format!("bad offset '{off}'")))?;
    let mut terms = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(' ').collect();
        let bad = || Error::Parse(format!("line {}: '{line}'", ln + 2));
        if f.len() != 3 {
            return Err(bad());
        }
        let i: usize = f[0].parse().map_err(|_| bad())?;
        let j: usize = f[1].parse().map_err(|_| bad())?;
        let c: f64 = f[2].parse().map_err(|_| bad())?;
        if i > j || j >= n {
            return Err(bad());
        }
        terms.push((i, j, c));
    }
    Ok((n, offset, terms))
}

impl QuboModel {
    /// `# qubo n=<n> offset=<x>` then `i j coeff` lines, i = j linear and
    /// i < j quadratic, sorted by (i, j), zero terms omitted.
    pub fn to_text(&self) -> String {
        let mut terms: Vec<(usize, usize, f64)> = self.linear.iter().enumerate().map(|(i, c)| (i, i, *c)).collect();
        terms.extend(self.quadratic.iter().map(|(&(a, b), v)| (a, b, *v)));
        terms.sort_by_key(|t| (t.0, t.1));
        write_model("qubo", self.n, self.offset, &terms)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (n, offset, terms) = parse_model("qubo", text)?;
        let mut m = QuboModel::zero(n);
        m.offset = offset;
        for (i, j, c) in terms {
            if i == j {
                m.linear[i] += c;
            } else {
                *m.quadratic.entry((i, j)).or_insert(0.0) += c;
            }
        }
        Ok(m)
    }
}

impl IsingModel {
    /// Same layout as the QUBO format under a `# ising` header; a coupling
    /// J_jk (j > k) is written as `k j coeff`.
    pub fn to_text(&self) -> String {
        let mut terms: Vec<(usize, usize, f64)> = self.h.iter().enumerate().map(|(i, c)| (i, i, *c)).collect();
        terms.extend(self.j.iter().map(|(&(a, b), v)| (b, a, *v)));
        terms.sort_by_key(|t| (t.0, t.1));
        write_model("ising", self.n, self.offset, &terms)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (n, offset, terms) = parse_model("ising", text)?;
        let mut m = IsingModel::zero(n);
        m.offset = offset;
        for (i, j, c) in terms {
            if i == j {
                m.h[i] += c;
            } else {
                m.add_coupling(i, j, c)?;
            }
        }
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Hamming,
    Radix2,
}

/// x_p = Σ_i p_i w_{p,i}, qubit p·b + i holding bit i of variable p.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionLayout {
    pub d: usize,
    pub bits: usize,
    pub p: Vec<f64>,
    pub encoding: Encoding,
}

impl PrecisionLayout {
    pub fn hamming(d: usize, r: usize) -> Result<Self> {
        if d == 0 || r == 0 {
            return invalid("need d, r >= 1");
        }
        Ok(PrecisionLayout { d, bits: r, p: vec![1.0 / r as f64; r], encoding: Encoding::Hamming })
    }

    /// p = (2^{1−b}, 2^{1−b}, 2^{2−b}, …, 1/2), summing to 1.
    pub fn radix2(d: usize, b: usize) -> Result<Self> {
        if d == 0 || b == 0 || b > 52 {
            return invalid("need d >= 1 and 1 <= b <= 52");
        }
        let mut p: Vec<f64> = (0..b).map(|i| 0.5f64.powi((b - i.max(1)) as i32)).collect();
        if b == 1 {
            p = vec![1.0];
        }
        Ok(PrecisionLayout { d, bits: b, p, encoding: Encoding::Radix2 })
    }

    pub fn qubits(&self) -> usize {
        self.d * self.bits
    }
}

/// f(w) = ½wᵀPᵀQPw + bᵀPw with w² = w folded into the linear terms.
pub fn qp_to_qubo(qp: &QpInstance, layout: &PrecisionLayout) -> Result<QuboModel> {
    if layout.d != qp.dim() {
        return invalid("layout and QP dimensions differ");
    }
    let nb = layout.bits;
    let mut m = QuboModel::zero(layout.qubits());
    for (v, bv) in qp.b().iter().enumerate() {
        for i in 0..nb {
            m.linear[v * nb + i] += bv * layout.p[i];
        }
    }
    for &(u, v, q) in qp.triplets() {
        for i in 0..nb {
            for k in 0..nb {
                let (a, c) = (u * nb + i, v * nb + k);
                let w = q * layout.p[i] * layout.p[k];
                if a == c {
                    m.linear[a] += 0.5 * w;
                } else if u == v {
                    // Diagonal Q block: each unordered pair is visited twice.
                    *m.quadratic.entry((a.min(c), a.max(c))).or_insert(0.0) += 0.5 * w;
                } else {
                    *m.quadratic.entry((a.min(c), a.max(c))).or_insert(0.0) += w;
                }
            }
        }
    }
    Ok(m)
}

/// Hamming encoding: variable p owns qubits p·r … p·r + r − 1 and reads
/// x_p = (Hamming weight)/r.
pub fn hamming_encode_qp(qp: &QpInstance, r: usize) -> Result<IsingModel> {
    if r == 0 {
        return invalid("need r >= 1");
    }
    let d = qp.dim();
    let rf = r as f64;
    let q = qp.q_dense();
    let mut m = IsingModel::zero(d * r);
    for p in 0..d {
        let row: f64 = q.row(p).sum();
        for j in p * r..(p + 1) * r {
            m.h[j] = -(row + 2.0 * qp.b()[p]) / (4.0 * rf);
        }
    }
    for p in 0..d {
        for qv in 0..=p {
            let c = q[(p, qv)] / (4.0 * rf * rf);
            if c == 0.0 {
                continue;
            }
            for j in p * r..(p + 1) * r {
                for k in qv * r..(qv + 1) * r {
                    if j > k {
                        m.j.insert((j, k), c);
                    }
                }
            }
        }
    }
    let mut g = 0.0;
    for p in 0..d {
        g += 0.125 * (1.0 + 1.0 / rf) * q[(p, p)] + 0.5 * qp.b()[p];
        for qv in 0..p {
            g += 0.25 * q[(p, qv)];
        }
    }
    m.offset = g;
    Ok(m)
}

pub fn decode_bits(bits: &[u8], layout: &PrecisionLayout) -> Result<Vec<f64>> {
    if bits.len() != layout.qubits() {
        return invalid(format!("bitstring has {} bits, expected {}", bits.len(), layout.qubits()));
    }
    Ok(bits.chunks(layout.bits).map(|w| w.iter().zip(&layout.p).map(|(b, p)| *b as f64 * p).sum()).collect())
}

pub fn decode_samples(samples: &[Vec<u8>], layout: &PrecisionLayout) -> Result<Vec<Vec<f64>>> {
    samples.iter().map(|b| decode_bits(b, layout)).collect()
}

pub fn parse_bitstring(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            _ => Err(Error::Parse(format!("bad bit '{c}'"))),
        })
        .collect()
}

pub fn bitstring(index: usize, n: usize) -> String {
    (0..n).map(|q| if bit(index, n, q) == 1 { '1' } else { '0' }).collect()
}

/// Per-axis relaxed adjacency Â' with (j, j+1) entry √((j+1)(r−j)/r).
pub fn relaxed_adjacency_1d(r: usize) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(r + 1, r + 1);
    for (j, w) in relaxed_weights(r).into_iter().enumerate() {
        a[(j, j + 1)] = w;
        a[(j + 1, j)] = w;
    }
    a
}

fn relaxed_weights(r: usize) -> Vec<f64> {
    (0..r).map(|j| (((j + 1) * (r - j)) as f64 / r as f64).sqrt()).collect()
}

/// Kronecker sum of Â' over d axes on the (r+1)^d grid.
pub fn relaxed_adjacency(r: usize, d: usize) -> Result<CsrMatrix<f64>> {
    if r == 0 || d == 0 {
        return invalid("need r, d >= 1");
    }
    Ok(lattice_operator(r + 1, d, &relaxed_weights(r), |_| 0.0))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Columns are ⊗_k |H_{j_k}⟩ for grid nodes (j_1,…,j_d) in row-major order.
pub fn hamming_isometry(r: usize, d: usize) -> Result<DMatrix<f64>> {
    let n = r * d;
    if r == 0 || d == 0 {
        return invalid("need r, d >= 1");
    }
    if n > 14 {
        return Err(Error::Resource(format!("{n} qubits exceeds the dense cap of 14")));
    }
    let grid = Mesh::dirichlet(d, r)?;
    let mut v = DMatrix::zeros(1 << n, grid.len());
    for b in 0..1usize << n {
        let weights: Vec<usize> = (0..d).map(|k| (k * r..(k + 1) * r).map(|q| bit(b, n, q)).sum()).collect();
        let col = grid.flat_index(&weights);
        v[(b, col)] = weights.iter().map(|&j| 1.0 / binomial(r, j).sqrt()).product();
    }
    Ok(v)
}

/// Operators acting on 2^n amplitudes without forming a dense matrix.
pub enum QubitOperator<'a> {
    Dense(&'a DMatrix<f64>),
    Diagonal(&'a [f64]),
    /// scale·Σ_q σx_q over n qubits.
    TransverseField { n: usize, scale: f64 },
}

impl QubitOperator<'_> {
    pub fn apply(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            QubitOperator::Dense(h) => *h * v,
            QubitOperator::Diagonal(d) => DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| d[i] * v[(i, j)]),
            QubitOperator::TransverseField { n, scale } => DMatrix::from_fn(v.nrows(), v.ncols(), |i, j| {
                scale * (0..*n).map(|q| v[(i ^ (1 << q), j)]).sum::<f64>()
            }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EncodingReport {
    pub leakage: f64,
    pub mismatch: f64,
    pub pass: bool,
}

/// leakage = ‖(I − VVᵀ)HV‖_max, mismatch = ‖VᵀHV − H_target‖_max.
pub fn verify_subspace_encoding(h: &QubitOperator, v: &DMatrix<f64>, target: &DMatrix<f64>, tol: f64) -> Result<EncodingReport> {
    if target.nrows() != v.ncols() || target.ncols() != v.ncols() {
        return invalid("target shape does not match V");
    }
    let hv = h.apply(v);
    if hv.nrows() != v.nrows() {
        return invalid("operator shape does not match V");
    }
    let restricted = v.transpose() * &hv;
    let leak = &hv - v * &restricted;
    let leakage = leak.amax();
    let mismatch = (&restricted - target).amax();
    Ok(EncodingReport { leakage, mismatch, pass: leakage <= tol && mismatch <= tol })
}

/// Physical-time envelopes A(ξ)/h and B(ξ)/h of an annealer run.
#[derive(Clone)]
pub struct AnnealEnvelope {
    pub lambda: f64,
    pub t_f: f64,
    a_over_h: ScalarFn,
    b_over_h: ScalarFn,
}

impl std::fmt::Debug for AnnealEnvelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnealEnvelope").field("lambda", &self.lambda).field("t_f", &self.t_f).finish()
    }
}

impl AnnealEnvelope {
    pub fn a_over_h(&self, xi: f64) -> f64 {
        (self.a_over_h)(xi)
    }

    pub fn b_over_h(&self, xi: f64) -> f64 {
        (self.b_over_h)(xi)
    }

    /// Effective QHD evolution time T = λ·t_f.
    pub fn effective_time(&self) -> f64 {
        self.lambda * self.t_f
    }

    /// A(ξ)/h = λ r^{3/2} e^{φ(λξ)}, B(ξ)/h = 2λ e^{χ(λξ)}.
    pub fn from_schedule(sched: &Schedule, r: usize, lambda: f64, t_f: f64) -> Result<Self> {
        if !(lambda > 0.0 && t_f > 0.0) || r == 0 {
            return invalid("need lambda > 0, t_f > 0, r >= 1");
        }
        let (s1, s2) = (sched.clone(), sched.clone());
        let r32 = (r as f64).powf(1.5);
        Ok(AnnealEnvelope {
            lambda,
            t_f,
            a_over_h: std::sync::Arc::new(move |xi| lambda * r32 * s1.e_phi(lambda * xi)),
            b_over_h: std::sync::Arc::new(move |xi| 2.0 * lambda * s2.e_chi(lambda * xi)),
        })
    }

    /// Machine-emulation surrogate: A falls linearly from A(0) to 0 and B
    /// grows quadratically to B(1) over t_f.
    pub fn annealer_surrogate(a0_over_h: f64, b1_over_h: f64, t_f: f64) -> Self {
        AnnealEnvelope {
            lambda: 1.0,
            t_f,
            a_over_h: std::sync::Arc::new(move |xi| a0_over_h * (1.0 - xi / t_f).max(0.0)),
            b_over_h: std::sync::Arc::new(move |xi| b1_over_h * (xi / t_f).min(1.0).powi(2)),
        }
    }
}

/// λ = (A(0)/h)/(r^{3/2} e^{φ(0)}), so that A(0)/h matches the machine.
pub fn anneal_rescale(sched: &Schedule, r: usize, a0_over_h: f64, t_f: f64) -> Result<AnnealEnvelope> {
    let e0 = sched.e_phi(0.0);
    if !(e0 > 0.0 && e0.is_finite()) {
        return invalid("e^phi(0) must be positive and finite");
    }
    let lambda = a0_over_h / ((r as f64).powf(1.5) * e0);
    AnnealEnvelope::from_schedule(sched, r, lambda, t_f)
}

/// Multiplies axis `k` of an m^d row-major array by the m×m matrix `u`.
fn apply_axis(psi: &mut [Complex64], m: usize, d: usize, k: usize, u: &DMatrix<Complex64>, line: &mut [Complex64]) {
    let stride = m.pow((d - 1 - k) as u32);
    let block = m * stride;
    for chunk in psi.chunks_mut(block) {
        for o in 0..stride {
            for (j, l) in line.iter_mut().enumerate() {
                *l = chunk[j * stride + o];
            }
            for i in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for j in 0..m {
                    acc += u[(i, j)] * line[j];
                }
                chunk[i * stride + o] = acc;
            }
        }
    }
}

/// Binomial amplitudes √(C(r,j)/2^r) on each axis of the (r+1)^d grid.
pub fn binomial_state(r: usize, d: usize) -> Result<WaveFunction> {
    let mesh = Mesh::dirichlet(d, r)?;
    let axis: Vec<f64> = (0..=r).map(|j| (binomial(r, j) / 2f64.powi(r as i32)).sqrt()).collect();
    let amps = (0..mesh.len())
        .map(|flat| Complex64::new(mesh.multi_index(flat).iter().map(|&j| axis[j]).product(), 0.0))
        .collect();
    WaveFunction::from_amplitudes(mesh, amps)
}

/// Strang splitting of i∂φ = [−(e^φ r²/2)Â'_d + e^χ F̂_d]φ on the (r+1)^d
/// grid with exact per-axis kinetic exponentials, from the binomial state.
pub fn relaxed_qhd_evolve(qp: &QpInstance, r: usize, sched: &Schedule, t_final: f64, dt: f64) -> Result<Trajectory> {
    let d = qp.dim();
    let mesh = Mesh::dirichlet(d, r)?;
    if mesh.len() > 200_000 {
        return Err(Error::Resource(format!("{} grid nodes", mesh.len())));
    }
    if !(dt > 0.0 && t_final >= 0.0) {
        return invalid("need dt > 0 and T >= 0");
    }
    let steps = (t_final / dt).round() as usize;
    let h = if steps == 0 { 0.0 } else { t_final / steps as f64 };
    let fvals: Vec<f64> = (0..mesh.len()).map(|i| qp.value(&mesh.point(i))).collect();
    let eig = SymmetricEigen::new(relaxed_adjacency_1d(r));
    let m = r + 1;
    let r2 = (r * r) as f64;
    let mut psi = binomial_state(r, d)?.into_amplitudes();
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    let observe = |t: f64, psi: &[Complex64]| {
        let (mut ef, mut norm) = (0.0, 0.0);
        for (c, f) in psi.iter().zip(&fvals) {
            norm += c.norm_sqr();
            ef += c.norm_sqr() * f;
        }
        Observation { t, ef, success_prob: f64::NAN, norm }
    };
    let mut observables = vec![observe(0.0, &psi)];
    for k in 0..steps {
        let t = (k as f64 + 0.5) * h;
        let (a, b) = (sched.e_phi(t), sched.e_chi(t));
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NumericalBlowup { step: k });
        }
        for (c, f) in psi.iter_mut().zip(&fvals) {
            *c *= Complex64::from_polar(1.0, -0.5 * h * b * f);
        }
        // exp(+i h a r²/2 Â') = V diag(e^{iθλ}) Vᵀ
        let theta = h * a * r2 / 2.0;
        let u = DMatrix::from_fn(m, m, |i, j| {
            (0..m)
                .map(|l| Complex64::from_polar(1.0, theta * eig.eigenvalues[l]) * eig.eigenvectors[(i, l)] * eig.eigenvectors[(j, l)])
                .sum::<Complex64>()
        });
        for ax in 0..d {
            apply_axis(&mut psi, m, d, ax, &u, &mut line);
        }
        for (c, f) in psi.iter_mut().zip(&fvals) {
            *c *= Complex64::from_polar(1.0, -0.5 * h * b * f);
        }
        let obs = observe((k + 1) as f64 * h, &psi);
        if !obs.norm.is_finite() {
            return Err(Error::NumericalBlowup { step: k });
        }
        observables.push(obs);
    }
    Ok(Trajectory { observables, snapshots: Vec::new(), final_state: WaveFunction::from_raw(mesh, psi) })
}

#[derive(Clone, Debug)]
pub struct IsingRun {
    pub n: usize,
    pub state: Vec<Complex64>,
    /// Steps of the accepted (finest) run.
    pub steps: usize,
}

impl IsingRun {
    /// Per-variable Hamming-weight distributions for blocks of r qubits.
    pub fn hamming_marginals(&self, r: usize) -> Result<Vec<Vec<f64>>> {
        if r == 0 || !self.n.is_multiple_of(r) {
            return invalid("block size must divide the qubit count");
        }
        let d = self.n / r;
        let mut out = vec![vec![0.0; r + 1]; d];
        for (b, c) in self.state.iter().enumerate() {
            let p = c.norm_sqr();
            for (k, row) in out.iter_mut().enumerate() {
                let w: usize = (k * r..(k + 1) * r).map(|q| bit(b, self.n, q)).sum();
                row[w] += p;
            }
        }
        Ok(out)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.state.iter().map(|c| c.norm_sqr()).collect()
    }
}

struct IsingDense<'a> {
    n: usize,
    diag: &'a [f64],
    diag_max: f64,
}

impl IsingDense<'_> {
    /// (−(a/2)S_x + (b/2)H_P) v.
    fn apply(&self, a: f64, b: f64, v: &[Complex64], out: &mut [Complex64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut flip = Complex64::new(0.0, 0.0);
            for q in 0..self.n {
                flip += v[i ^ (1 << q)];
            }
            *o = -0.5 * a * flip + 0.5 * b * self.diag[i] * v[i];
        }
    }

    /// v ← exp(−i·tau·H(a, b)) v by scaled Taylor series.
    fn expm_apply(&self, a: f64, b: f64, tau: f64, v: &mut [Complex64]) {
        let norm = 0.5 * a.abs() * self.n as f64 + 0.5 * b.abs() * self.diag_max;
        let pieces = (tau.abs() * norm).ceil().max(1.0) as usize;
        let h = tau / pieces as f64;
        let dim = v.len();
        let mut term = vec![Complex64::new(0.0, 0.0); dim];
        let mut next = vec![Complex64::new(0.0, 0.0); dim];
        for _ in 0..pieces {
            term.copy_from_slice(v);
            for k in 1..60 {
                self.apply(a, b, &term, &mut next);
                let c = Complex64::new(0.0, -h / k as f64);
                let mut tn = 0.0;
                for (t, x) in term.iter_mut().zip(&next) {
                    *t = c * x;
                    tn += t.norm_sqr();
                }
                v.iter_mut().zip(&term).for_each(|(x, t)| *x += t);
                if tn.sqrt() < 1e-17 {
                    break;
                }
            }
        }
    }
}

fn ising_run_fixed(sim: &IsingDense, env: &AnnealEnvelope, t_f: f64, steps: usize) -> Vec<Complex64> {
    let dim = 1usize << sim.n;
    let mut psi = vec![Complex64::new(1.0 / (dim as f64).sqrt(), 0.0); dim];
    let h = t_f / steps as f64;
    let s3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);
    for k in 0..steps {
        let t = k as f64 * h;
        let (ax1, bx1) = (env.a_over_h(t + c1 * h), env.b_over_h(t + c1 * h));
        let (ax2, bx2) = (env.a_over_h(t + c2 * h), env.b_over_h(t + c2 * h));
        sim.expm_apply(a2 * ax1 + a1 * ax2, a2 * bx1 + a1 * bx2, h, &mut psi);
        sim.expm_apply(a1 * ax1 + a2 * ax2, a1 * bx1 + a2 * bx2, h, &mut psi);
    }
    psi
}

/// Dense state-vector run of iψ' = [−(A/h)/2·S_x + (B/h)/2·H_P]ψ from |+⟩^n
/// over [0, t_f] with the fourth-order commutator-free Magnus integrator.
/// The step count starts at ⌈t_f/dt⌉ and doubles until successive final
/// states agree within 1e-9.
pub fn simulate_ising_dense(model: &IsingModel, env: &AnnealEnvelope, t_f: f64, dt: f64) -> Result<IsingRun> {
    if model.n > 14 {
        return Err(Error::Resource(format!("{} qubits exceeds the dense cap of 14", model.n)));
    }
    if !(dt > 0.0 && t_f > 0.0) {
        return invalid("need dt > 0 and t_f > 0");
    }
    let diag = model.diagonal()?;
    let sim = IsingDense { n: model.n, diag: &diag, diag_max: diag.iter().fold(0.0, |m, v| m.max(v.abs())) };
    let mut steps = (t_f / dt).ceil().max(1.0) as usize;
    let mut prev = ising_run_fixed(&sim, env, t_f, steps);
    for _ in 0..14 {
        steps *= 2;
        let cur = ising_run_fixed(&sim, env, t_f, steps);
        let diff = cur.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        prev = cur;
        if diff <= 1e-9 {
            let drift = (prev.iter().map(|c| c.norm_sqr()).sum::<f64>() - 1.0).abs();
            if drift > 1e-8 {
                return Err(Error::Stability(format!("norm drift {drift:.3e}")));
            }
            return Ok(IsingRun { n: model.n, state: prev, steps });
        }
    }
    Err(Error::Stability("step halving did not converge".into()))
}
