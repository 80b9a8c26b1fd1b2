//! Objective functions on boxes, unit-box rescaling, quadratic models and
//! box-constrained quadratic programs.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub trait Objective: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> f64;
    fn grad(&self, x: &[f64]) -> Vec<f64>;
    fn minimizer(&self) -> Option<Vec<f64>> {
        None
    }
    fn f_min(&self) -> Option<f64> {
        None
    }
    fn hessian_at_min(&self) -> Option<DMatrix<f64>> {
        None
    }
    fn name(&self) -> String {
        "anonymous".into()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestFunctionKind {
    Levy,
    SumOfSquares,
    Rosenbrock,
    Rastrigin,
    Ackley,
    Griewank,
    StyblinskiTang,
    Dropwave,
}

impl TestFunctionKind {
    pub const ALL: [TestFunctionKind; 8] = [
        TestFunctionKind::Levy,
        TestFunctionKind::SumOfSquares,
        TestFunctionKind::Rosenbrock,
        TestFunctionKind::Rastrigin,
        TestFunctionKind::Ackley,
        TestFunctionKind::Griewank,
        TestFunctionKind::StyblinskiTang,
        TestFunctionKind::Dropwave,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestFunctionKind::Levy => "levy",
            TestFunctionKind::SumOfSquares => "sum_of_squares",
            TestFunctionKind::Rosenbrock => "rosenbrock",
            TestFunctionKind::Rastrigin => "rastrigin",
            TestFunctionKind::Ackley => "ackley",
            TestFunctionKind::Griewank => "griewank",
            TestFunctionKind::StyblinskiTang => "styblinski_tang",
            TestFunctionKind::Dropwave => "dropwave",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        let key = name.to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown objective '{name}'")))
    }

    /// Native search box [a, b] per axis.
    pub fn domain(self) -> (f64, f64) {
        match self {
            TestFunctionKind::Levy | TestFunctionKind::SumOfSquares => (-10.0, 10.0),
            TestFunctionKind::Rosenbrock => (-5.0, 10.0),
            TestFunctionKind::Rastrigin | TestFunctionKind::Dropwave => (-5.12, 5.12),
            TestFunctionKind::Ackley => (-32.768, 32.768),
            TestFunctionKind::Griewank => (-600.0, 600.0),
            TestFunctionKind::StyblinskiTang => (-5.0, 5.0),
        }
    }
}

/// Root of 4x³ − 32x + 5 = 0 near −2.9035.
fn styblinski_tang_root() -> f64 {
    let mut x: f64 = -2.9;
    for _ in 0..50 {
        x -= (4.0 * x.powi(3) - 32.0 * x + 5.0) / (12.0 * x * x - 32.0);
    }
    x
}

/// Standard benchmark function on its native domain.
#[derive(Clone, Debug)]
pub struct TestFunction {
    kind: TestFunctionKind,
    dim: usize,
}

impl TestFunction {
    pub fn new(kind: TestFunctionKind, dim: usize) -> Result<Self> {
        if dim == 0 || (kind == TestFunctionKind::Dropwave && dim != 2) {
            return Err(Error::UnsupportedDimension(dim));
        }
        Ok(TestFunction { kind, dim })
    }

    pub fn kind(&self) -> TestFunctionKind {
        self.kind
    }
}

impl Objective for TestFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let d = self.dim as f64;
        match self.kind {
            TestFunctionKind::Levy => {
                let w: Vec<f64> = x.iter().map(|xi| 1.0 + (xi - 1.0) / 4.0).collect();
                let n = w.len();
                let mut s = (PI * w[0]).sin().powi(2);
                for wi in &w[..n - 1] {
                    s += (wi - 1.0).powi(2) * (1.0 + 10.0 * (PI * wi + 1.0).sin().powi(2));
                }
                s + (w[n - 1] - 1.0).powi(2) * (1.0 + (2.0 * PI * w[n - 1]).sin().powi(2))
            }
            TestFunctionKind::SumOfSquares => {
                x.iter().enumerate().map(|(i, xi)| (i + 1) as f64 * xi * xi).sum()
            }
            TestFunctionKind::Rosenbrock => x
                .windows(2)
                .map(|p| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (p[0] - 1.0).powi(2))
                .sum(),
            TestFunctionKind::Rastrigin => {
                10.0 * d + x.iter().map(|xi| xi * xi - 10.0 * (2.0 * PI * xi).cos()).sum::<f64>()
            }
            TestFunctionKind::Ackley => {
                let r = (x.iter().map(|xi| xi * xi).sum::<f64>() / d).sqrt();
                let c = x.iter().map(|xi| (2.0 * PI * xi).cos()).sum::<f64>() / d;
                -20.0 * (-0.2 * r).exp() - c.exp() + 20.0 + E
            }
            TestFunctionKind::Griewank => {
                let s: f64 = x.iter().map(|xi| xi * xi).sum::<f64>() / 4000.0;
                let p: f64 =
                    x.iter().enumerate().map(|(i, xi)| (xi / ((i + 1) as f64).sqrt()).cos()).product();
                s - p + 1.0
            }
            TestFunctionKind::StyblinskiTang => {
                0.5 * x.iter().map(|xi| xi.powi(4) - 16.0 * xi * xi + 5.0 * xi).sum::<f64>()
            }
            TestFunctionKind::Dropwave => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                -(1.0 + (12.0 * r2.sqrt()).cos()) / (0.5 * r2 + 2.0)
            }
        }
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let d = n as f64;
        match self.kind {
            TestFunctionKind::Levy => {
                let w: Vec<f64> = x.iter().map(|xi| 1.0 + (xi - 1.0) / 4.0).collect();
                let mut g = vec![0.0; n];
                g[0] += PI * (2.0 * PI * w[0]).sin();
                for i in 0..n - 1 {
                    let s = (PI * w[i] + 1.0).sin();
                    g[i] += 2.0 * (w[i] - 1.0) * (1.0 + 10.0 * s * s)
                        + (w[i] - 1.0).powi(2) * 10.0 * PI * (2.0 * (PI * w[i] + 1.0)).sin();
                }
                let wl = w[n - 1];
                let s = (2.0 * PI * wl).sin();
                g[n - 1] += 2.0 * (wl - 1.0) * (1.0 + s * s)
                    + (wl - 1.0).powi(2) * 2.0 * PI * (4.0 * PI * wl).sin();
                g.iter().map(|gi| gi / 4.0).collect()
            }
            TestFunctionKind::SumOfSquares => {
                x.iter().enumerate().map(|(i, xi)| 2.0 * (i + 1) as f64 * xi).collect()
            }
            TestFunctionKind::Rosenbrock => {
                let mut g = vec![0.0; n];
                for i in 0..n - 1 {
                    let t = x[i + 1] - x[i] * x[i];
                    g[i] += -400.0 * x[i] * t + 2.0 * (x[i] - 1.0);
                    g[i + 1] += 200.0 * t;
                }
                g
            }
            TestFunctionKind::Rastrigin => {
                x.iter().map(|xi| 2.0 * xi + 20.0 * PI * (2.0 * PI * xi).sin()).collect()
            }
            TestFunctionKind::Ackley => {
                let r = (x.iter().map(|xi| xi * xi).sum::<f64>() / d).sqrt();
                let c = x.iter().map(|xi| (2.0 * PI * xi).cos()).sum::<f64>() / d;
                x.iter()
                    .map(|xi| {
                        let radial = if r > 0.0 { 4.0 * (-0.2 * r).exp() * xi / (d * r) } else { 0.0 };
                        radial + c.exp() * 2.0 * PI * (2.0 * PI * xi).sin() / d
                    })
                    .collect()
            }
            TestFunctionKind::Griewank => {
                let c: Vec<f64> =
                    x.iter().enumerate().map(|(i, xi)| (xi / ((i + 1) as f64).sqrt()).cos()).collect();
                (0..n)
                    .map(|i| {
                        let si = ((i + 1) as f64).sqrt();
                        let others: f64 = (0..n).filter(|&k| k != i).map(|k| c[k]).product();
                        x[i] / 2000.0 + (x[i] / si).sin() / si * others
                    })
                    .collect()
            }
            TestFunctionKind::StyblinskiTang => {
                x.iter().map(|xi| 0.5 * (4.0 * xi.powi(3) - 32.0 * xi + 5.0)).collect()
            }
            TestFunctionKind::Dropwave => {
                let r2 = x[0] * x[0] + x[1] * x[1];
                let r = r2.sqrt();
                let num = 1.0 + (12.0 * r).cos();
                let den = 0.5 * r2 + 2.0;
                x.iter()
                    .map(|xi| {
                        let dnum = if r > 0.0 { -12.0 * (12.0 * r).sin() * xi / r } else { 0.0 };
                        -(dnum * den - num * xi) / (den * den)
                    })
                    .collect()
            }
        }
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        let v = match self.kind {
            TestFunctionKind::Levy | TestFunctionKind::Rosenbrock => 1.0,
            TestFunctionKind::StyblinskiTang => styblinski_tang_root(),
            _ => 0.0,
        };
        Some(vec![v; self.dim])
    }

    fn f_min(&self) -> Option<f64> {
        Some(match self.kind {
            TestFunctionKind::StyblinskiTang => {
                let x = styblinski_tang_root();
                0.5 * self.dim as f64 * (x.powi(4) - 16.0 * x * x + 5.0 * x)
            }
            TestFunctionKind::Dropwave => -1.0,
            _ => 0.0,
        })
    }

    fn hessian_at_min(&self) -> Option<DMatrix<f64>> {
        let n = self.dim;
        match self.kind {
            TestFunctionKind::Levy => {
                // w-space curvatures at w = 1, scaled by (dw/dx)² = 1/16.
                let mut h = DMatrix::zeros(n, n);
                let s1 = 1f64.sin().powi(2);
                for i in 0..n {
                    let mut c = 0.0;
                    if i == 0 {
                        c += 2.0 * PI * PI;
                    }
                    if i + 1 < n {
                        c += 2.0 * (1.0 + 10.0 * s1);
                    } else {
                        c += 2.0;
                    }
                    h[(i, i)] = c / 16.0;
                }
                Some(h)
            }
            TestFunctionKind::SumOfSquares => {
                Some(DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * (i + 1) as f64 } else { 0.0 }))
            }
            TestFunctionKind::Rastrigin => {
                Some(DMatrix::from_diagonal_element(n, n, 2.0 + 40.0 * PI * PI))
            }
            TestFunctionKind::StyblinskiTang => {
                let x = styblinski_tang_root();
                Some(DMatrix::from_diagonal_element(n, n, 6.0 * x * x - 16.0))
            }
            TestFunctionKind::Rosenbrock => {
                let mut h = DMatrix::zeros(n, n);
                for i in 0..n - 1 {
                    h[(i, i)] += 802.0;
                    h[(i + 1, i + 1)] += 200.0;
                    h[(i, i + 1)] -= 400.0;
                    h[(i + 1, i)] -= 400.0;
                }
                Some(h)
            }
            _ => None,
        }
    }

    fn name(&self) -> String {
        self.kind.name().into()
    }
}

/// f̃(u) = (f(a + L·u) − f_min)/L on [0,1]^d with L = b − a.
///
/// The whole shifted function is divided by L, so the minimum is exactly 0
/// and ∇f̃(u) = ∇f(a + L·u).
#[derive(Clone)]
pub struct Rescaled {
    inner: Arc<dyn Objective>,
    a: f64,
    l: f64,
    f_min: f64,
}

pub fn rescale_to_unit_box(f: Arc<dyn Objective>, a: f64, b: f64) -> Result<Rescaled> {
    if !(a < b) {
        return invalid(format!("empty interval [{a}, {b}]"));
    }
    let f_min = f.f_min().ok_or_else(|| Error::InvalidArgument("f_min unknown".into()))?;
    Ok(Rescaled { inner: f, a, l: b - a, f_min })
}

impl Rescaled {
    pub fn to_native(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|ui| self.a + self.l * ui).collect()
    }

    pub fn inner(&self) -> &Arc<dyn Objective> {
        &self.inner
    }

    pub fn scale(&self) -> f64 {
        self.l
    }
}

impl Objective for Rescaled {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn eval(&self, u: &[f64]) -> f64 {
        (self.inner.eval(&self.to_native(u)) - self.f_min) / self.l
    }

    fn grad(&self, u: &[f64]) -> Vec<f64> {
        self.inner.grad(&self.to_native(u))
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        self.inner.minimizer().map(|x| x.iter().map(|xi| (xi - self.a) / self.l).collect())
    }

    fn f_min(&self) -> Option<f64> {
        Some(0.0)
    }

    fn hessian_at_min(&self) -> Option<DMatrix<f64>> {
        self.inner.hessian_at_min().map(|h| h * self.l)
    }

    fn name(&self) -> String {
        self.inner.name()
    }
}

/// Registered test function rescaled from its native box onto [0,1]^d.
pub fn objective_by_name(name: &str, dim: usize) -> Result<Rescaled> {
    let kind = TestFunctionKind::from_name(name)?;
    let (a, b) = kind.domain();
    rescale_to_unit_box(Arc::new(TestFunction::new(kind, dim)?), a, b)
}

/// Two-dimensional Levy function rescaled from [−10,10]².
pub fn levy2() -> Rescaled {
    objective_by_name("levy", 2).expect("levy is registered")
}

/// Eigenvalues of the raw Levy Hessian at (1, 1), descending.
pub fn levy_hessian_eigenvalues() -> (f64, f64) {
    ((PI * PI + 1.0 + 10.0 * 1f64.sin().powi(2)) / 8.0, 1.0 / 8.0)
}

/// f(x*) + ½(x − x*)ᵀ H (x − x*).
#[derive(Clone, Debug)]
pub struct QuadraticModel {
    x_star: Vec<f64>,
    f_min: f64,
    hessian: DMatrix<f64>,
}

impl QuadraticModel {
    pub fn new(x_star: Vec<f64>, f_min: f64, hessian: DMatrix<f64>) -> Result<Self> {
        let n = x_star.len();
        if hessian.nrows() != n || hessian.ncols() != n {
            return invalid("hessian shape mismatch");
        }
        Ok(QuadraticModel { x_star, f_min, hessian })
    }
}

impl Objective for QuadraticModel {
    fn dim(&self) -> usize {
        self.x_star.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        let dx = nalgebra::DVector::from_iterator(x.len(), x.iter().zip(&self.x_star).map(|(a, b)| a - b));
        self.f_min + 0.5 * dx.dot(&(&self.hessian * &dx))
    }

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let dx = nalgebra::DVector::from_iterator(x.len(), x.iter().zip(&self.x_star).map(|(a, b)| a - b));
        (&self.hessian * dx).iter().copied().collect()
    }

    fn minimizer(&self) -> Option<Vec<f64>> {
        Some(self.x_star.clone())
    }

    fn f_min(&self) -> Option<f64> {
        Some(self.f_min)
    }

    fn hessian_at_min(&self) -> Option<DMatrix<f64>> {
        Some(self.hessian.clone())
    }

    fn name(&self) -> String {
        "quadratic_model".into()
    }
}

pub fn quadratic_model(f: &dyn Objective) -> Result<QuadraticModel> {
    match (f.minimizer(), f.f_min(), f.hessian_at_min()) {
        (Some(x), Some(v), Some(h)) => QuadraticModel::new(x, v, h),
        _ => invalid("objective lacks minimizer, f_min or hessian metadata"),
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Objective built from closures.
#[derive(Clone)]
pub struct FnObjective {
    dim: usize,
    eval: Arc<EvalFn>,
    grad: Arc<GradFn>,
    minimizer: Option<Vec<f64>>,
    f_min: Option<f64>,
    name: String,
}

impl FnObjective {
    pub fn new(
        dim: usize,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        FnObjective { dim, eval: Arc::new(eval), grad: Arc::new(grad), minimizer: None, f_min: None, name: "custom".into() }
    }

    pub fn with_minimum(mut self, x_star: Vec<f64>, f_min: f64) -> Self {
        self.minimizer = Some(x_star);
        self.f_min = Some(f_min);
        self
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.into();
        self
    }
}

impl Objective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }
    fn minimizer(&self) -> Option<Vec<f64>> {
        self.minimizer.clone()
    }
    fn f_min(&self) -> Option<f64> {
        self.f_min
    }
    fn name(&self) -> String {
        self.name.clone()
    }
}

/// f(x) = ½xᵀQx + bᵀx on [0,1]^d, Q stored as its upper triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QpRepr", into = "QpRepr")]
pub struct QpInstance {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

#[derive(Clone, Serialize, Deserialize)]
struct QpRepr {
    dim: usize,
    triplets: Vec<(usize, usize, f64)>,
    b: Vec<f64>,
}

impl TryFrom<QpRepr> for QpInstance {
    type Error = Error;
    fn try_from(r: QpRepr) -> Result<Self> {
        QpInstance::new(r.dim, r.triplets, r.b)
    }
}

impl From<QpInstance> for QpRepr {
    fn from(q: QpInstance) -> Self {
        QpRepr { dim: q.dim, triplets: q.triplets, b: q.b }
    }
}

impl QpInstance {
    /// Entries (i, j, v) with i > j are mirrored into the upper triangle;
    /// zeros are dropped and a repeated position is an error.
    pub fn new(dim: usize, triplets: Vec<(usize, usize, f64)>, b: Vec<f64>) -> Result<Self> {
        if b.len() != dim {
            return invalid(format!("b has length {}, expected {dim}", b.len()));
        }
        let mut t: Vec<(usize, usize, f64)> = triplets
            .into_iter()
            .filter(|e| e.2 != 0.0)
            .map(|(i, j, v)| (i.min(j), i.max(j), v))
            .collect();
        if t.iter().any(|&(_, j, v)| j >= dim || !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
            return invalid("entry out of range or non-finite");
        }
        t.sort_by_key(|x| (x.0, x.1));
        if t.windows(2).any(|w| (w[0].0, w[0].1) == (w[1].0, w[1].1)) {
            return invalid("repeated matrix entry");
        }
        Ok(QpInstance { dim, triplets: t, b })
    }

    pub fn from_dense(q: &DMatrix<f64>, b: Vec<f64>) -> Result<Self> {
        let n = q.nrows();
        if q.ncols() != n {
            return invalid("Q must be square");
        }
        let mut t = Vec::new();
        for i in 0..n {
            for j in i..n {
                if q[(i, j)] != q[(j, i)] {
                    return invalid("Q must be symmetric");
                }
                t.push((i, j, q[(i, j)]));
            }
        }
        Self::new(n, t, b)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn triplets(&self) -> &[(usize, usize, f64)] {
        &self.triplets
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn q_dense(&self) -> DMatrix<f64> {
        let mut q = DMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.triplets {
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
        q
    }

    /// Nonzero count of each row of the full symmetric Q.
    pub fn row_nonzeros(&self, count_diagonal: bool) -> Vec<usize> {
        let mut c = vec![0; self.dim];
        for &(i, j, _) in &self.triplets {
            if i == j {
                if count_diagonal {
                    c[i] += 1;
                }
            } else {
                c[i] += 1;
                c[j] += 1;
            }
        }
        c
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let mut v: f64 = self.b.iter().zip(x).map(|(b, x)| b * x).sum();
        for &(i, j, q) in &self.triplets {
            v += if i == j { 0.5 * q * x[i] * x[i] } else { q * x[i] * x[j] };
        }
        v
    }

    /// Value and gradient Qx + b in one pass over the stored entries.
    pub fn eval_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        if x.len() != self.dim {
            return invalid(format!("point has dimension {}, expected {}", x.len(), self.dim));
        }
        let mut g = self.b.clone();
        let mut v: f64 = self.b.iter().zip(x).map(|(b, x)| b * x).sum();
        for &(i, j, q) in &self.triplets {
            if i == j {
                v += 0.5 * q * x[i] * x[i];
                g[i] += q * x[i];
            } else {
                v += q * x[i] * x[j];
                g[i] += q * x[j];
                g[j] += q * x[i];
            }
        }
        Ok((v, g))
    }
}

pub fn qp_eval_grad(qp: &QpInstance, x: &[f64]) -> Result<(f64, Vec<f64>)> {
    qp.eval_grad(x)
}

impl Objective for QpInstance {
    fn dim(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> f64 {
        self.value(x)
    }
    fn grad(&self, x: &[f64]) -> Vec<f64> {
        self.eval_grad(x).map(|(_, g)| g).unwrap_or_else(|_| vec![f64::NAN; self.dim])
    }
    fn name(&self) -> String {
        "qp".into()
    }
}
