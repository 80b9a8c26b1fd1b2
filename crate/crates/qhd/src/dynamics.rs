//! Schedules and time evolution: pseudo-spectral QHD, radix-2 QAA and time
//! dilation.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::fft::{signed_frequency, FftNd};
use crate::mesh::{ball_mask, discretize_objective, Boundary, DiagonalOperator, Mesh, WaveFunction};
use crate::objectives::Objective;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    TwoParam,
    ThreeParam,
    PiecewiseAnneal,
}

#[derive(Clone)]
struct ThreeParam {
    alpha: ScalarFn,
    beta: ScalarFn,
    gamma: ScalarFn,
}

/// Time-dependent coefficients e^{φ_t} (kinetic) and e^{χ_t} (potential),
/// or an annealing progress g(t) ∈ [0,1].
#[derive(Clone)]
pub struct Schedule {
    kind: ScheduleKind,
    e_phi: ScalarFn,
    e_chi: ScalarFn,
    three: Option<ThreeParam>,
    progress: Option<ScalarFn>,
    knots: Vec<(f64, f64)>,
    horizon: f64,
    name: String,
}

impl std::fmt::Debug for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Schedule")
            .field("kind", &self.kind)
            .field("name", &self.name)
            .field("horizon", &self.horizon)
            .field("knots", &self.knots)
            .finish()
    }
}

/// Knots of the custom annealing schedule, in microseconds.
pub const CUSTOM_ANNEAL_KNOTS: [(f64, f64); 4] = [(0.0, 0.0), (400.0, 0.3), (640.0, 0.6), (800.0, 1.0)];

#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSpec {
    /// e^φ = 2/(s + t³), e^χ = 2t³.
    NesterovNonconvex { s: f64, horizon: f64 },
    /// α = log(2/t), β = γ = 2 log t.
    NesterovThreeParam { horizon: f64 },
    /// g(t) = t/T.
    LinearQaa { horizon: f64 },
    /// Piecewise-linear g through the knots.
    CustomPiecewise { knots: Vec<(f64, f64)> },
    /// Local adiabatic schedule for unstructured search over `states` items.
    LocalAdiabatic { horizon: f64, states: f64 },
}

fn arc(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> ScalarFn {
    Arc::new(f)
}

fn central_diff(f: &ScalarFn, t: f64) -> f64 {
    let h = 1e-6 * t.abs().max(1e-3);
    (f(t + h) - f(t - h)) / (2.0 * h)
}

impl Schedule {
    pub fn two_param(
        e_phi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        e_chi: impl Fn(f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
    ) -> Self {
        Schedule {
            kind: ScheduleKind::TwoParam,
            e_phi: arc(e_phi),
            e_chi: arc(e_chi),
            three: None,
            progress: None,
            knots: Vec::new(),
            horizon,
            name: "two_param".into(),
        }
    }

    /// e^φ = e^{α−γ}, e^χ = e^{α+β+γ}; the ideal scaling conditions γ̇ = e^α
    /// and β̇ ≤ e^α are checked on a sample grid of (0, horizon].
    pub fn three_param(
        alpha: impl Fn(f64) -> f64 + Send + Sync + 'static,
        beta: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: impl Fn(f64) -> f64 + Send + Sync + 'static,
        horizon: f64,
    ) -> Result<Self> {
        let s = Self::three_param_unchecked(arc(alpha), arc(beta), arc(gamma), horizon);
        s.validate_ideal_scaling()?;
        Ok(s)
    }

    fn three_param_unchecked(alpha: ScalarFn, beta: ScalarFn, gamma: ScalarFn, horizon: f64) -> Self {
        let (a1, g1) = (alpha.clone(), gamma.clone());
        let (a2, b2, g2) = (alpha.clone(), beta.clone(), gamma.clone());
        Schedule {
            kind: ScheduleKind::ThreeParam,
            e_phi: arc(move |t| (a1(t) - g1(t)).exp()),
            e_chi: arc(move |t| (a2(t) + b2(t) + g2(t)).exp()),
            three: Some(ThreeParam { alpha, beta, gamma }),
            progress: None,
            knots: Vec::new(),
            horizon,
            name: "three_param".into(),
        }
    }

    fn validate_ideal_scaling(&self) -> Result<()> {
        let tp = self.three.as_ref().expect("three-parameter schedule");
        let n = 1000;
        for i in 1..=n {
            let t = self.horizon * i as f64 / n as f64;
            let ea = (tp.alpha)(t).exp();
            let gd = central_diff(&tp.gamma, t);
            let bd = central_diff(&tp.beta, t);
            let tol = 1e-5 * ea.max(1.0);
            if (gd - ea).abs() > tol {
                return Err(Error::Validation { t, msg: format!("gamma' = {gd} but e^alpha = {ea}") });
            }
            if bd > ea + tol {
                return Err(Error::Validation { t, msg: format!("beta' = {bd} exceeds e^alpha = {ea}") });
            }
        }
        Ok(())
    }

    /// Annealing schedule through strictly increasing knots (t_k, s_k) with
    /// s non-decreasing from 0 to 1.
    pub fn piecewise(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.len() < 2 {
            return invalid("need at least two knots");
        }
        if knots.windows(2).any(|w| !(w[1].0 > w[0].0) || w[1].1 < w[0].1) {
            return invalid("knot times must increase and values must not decrease");
        }
        if knots[0].1 != 0.0 || knots[knots.len() - 1].1 != 1.0 {
            return invalid("knot values must run from 0 to 1");
        }
        let k = knots.clone();
        let g = arc(move |t| interpolate(&k, t));
        let mut s = Self::from_progress(g, knots[knots.len() - 1].0, "piecewise");
        s.knots = knots;
        Ok(s)
    }

    fn from_progress(g: ScalarFn, horizon: f64, name: &str) -> Self {
        let (g1, g2) = (g.clone(), g.clone());
        Schedule {
            kind: ScheduleKind::PiecewiseAnneal,
            e_phi: arc(move |t| 1.0 - g1(t)),
            e_chi: arc(move |t| g2(t)),
            three: None,
            progress: Some(g),
            knots: Vec::new(),
            horizon,
            name: name.into(),
        }
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn e_phi(&self, t: f64) -> f64 {
        (self.e_phi)(t)
    }

    pub fn e_chi(&self, t: f64) -> f64 {
        (self.e_chi)(t)
    }

    /// (α, β, γ) at t for three-parameter schedules.
    pub fn abg(&self, t: f64) -> Option<(f64, f64, f64)> {
        self.three.as_ref().map(|p| ((p.alpha)(t), (p.beta)(t), (p.gamma)(t)))
    }

    /// Annealing progress g(t); falls back to clamped t/horizon.
    pub fn g(&self, t: f64) -> f64 {
        match &self.progress {
            Some(g) => g(t),
            None => (t / self.horizon).clamp(0.0, 1.0),
        }
    }

    /// The same schedule with its knot times scaled to end at `horizon`.
    pub fn stretched_to(&self, horizon: f64) -> Result<Self> {
        if self.knots.is_empty() {
            return invalid("only knot schedules can be stretched");
        }
        let c = horizon / self.horizon;
        Schedule::piecewise(self.knots.iter().map(|&(t, s)| (t * c, s)).collect())
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    if t <= knots[0].0 {
        return knots[0].1;
    }
    for w in knots.windows(2) {
        let ((t0, s0), (t1, s1)) = (w[0], w[1]);
        if t <= t1 {
            return s0 + (s1 - s0) * (t - t0) / (t1 - t0);
        }
    }
    knots[knots.len() - 1].1
}

pub fn make_schedule(spec: &ScheduleSpec) -> Result<Schedule> {
    match spec.clone() {
        ScheduleSpec::NesterovNonconvex { s, horizon } => {
            if !(s > 0.0) {
                return invalid("regularization s must be positive");
            }
            let mut sc = Schedule::two_param(move |t| 2.0 / (s + t * t * t), |t| 2.0 * t * t * t, horizon);
            sc.name = "nesterov_nonconvex".into();
            Ok(sc)
        }
        ScheduleSpec::NesterovThreeParam { horizon } => {
            let mut sc =
                Schedule::three_param(|t| (2.0 / t).ln(), |t| 2.0 * t.ln(), |t| 2.0 * t.ln(), horizon)?;
            sc.name = "nesterov_three_param".into();
            Ok(sc)
        }
        ScheduleSpec::LinearQaa { horizon } => {
            if !(horizon > 0.0) {
                return invalid("horizon must be positive");
            }
            let mut sc = Schedule::piecewise(vec![(0.0, 0.0), (horizon, 1.0)])?;
            sc.name = "linear".into();
            Ok(sc)
        }
        ScheduleSpec::CustomPiecewise { knots } => Schedule::piecewise(knots),
        ScheduleSpec::LocalAdiabatic { horizon, states } => {
            if !(states > 1.0) {
                return invalid("local adiabatic schedule needs more than one state");
            }
            let c = (states - 1.0).sqrt();
            let g = arc(move |t: f64| {
                let u = (t / horizon).clamp(0.0, 1.0);
                0.5 + ((2.0 * u - 1.0) * c.atan()).tan() / (2.0 * c)
            });
            Ok(Schedule::from_progress(g, horizon, "local_adiabatic"))
        }
    }
}

/// Time dilation by an increasing map τ: ẽ^φ(t) = τ̇·e^φ(τ(t)) and likewise
/// for e^χ; three-parameter inputs become α∘τ + log τ̇, β∘τ, γ∘τ.
pub fn dilate_schedule(
    sched: &Schedule,
    tau: impl Fn(f64) -> f64 + Send + Sync + 'static,
    tau_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
) -> Result<Schedule> {
    let n = 2000;
    let mut prev = tau(0.0);
    for i in 1..=n {
        let cur = tau(sched.horizon * i as f64 / n as f64);
        if !(cur > prev) {
            return invalid("tau must be increasing");
        }
        prev = cur;
    }
    let (tau, tau_dot) = (arc(tau), arc(tau_dot));
    match sched.kind {
        ScheduleKind::PiecewiseAnneal => invalid("annealing schedules cannot be dilated"),
        ScheduleKind::TwoParam => {
            let (p, c) = (sched.e_phi.clone(), sched.e_chi.clone());
            let (t1, d1, t2, d2) = (tau.clone(), tau_dot.clone(), tau, tau_dot);
            let mut s = Schedule::two_param(move |t| d1(t) * p(t1(t)), move |t| d2(t) * c(t2(t)), sched.horizon);
            s.name = format!("{}_dilated", sched.name);
            Ok(s)
        }
        ScheduleKind::ThreeParam => {
            let tp = sched.three.clone().expect("three-parameter schedule");
            let (ta, tb, tg) = (tau.clone(), tau.clone(), tau);
            let (a, b, g) = (tp.alpha, tp.beta, tp.gamma);
            let mut s = Schedule::three_param_unchecked(
                arc(move |t| a(ta(t)) + tau_dot(t).ln()),
                arc(move |t| b(tb(t))),
                arc(move |t| g(tg(t))),
                sched.horizon,
            );
            s.name = format!("{}_dilated", sched.name);
            Ok(s)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub t: f64,
    pub ef: f64,
    pub success_prob: f64,
    pub norm: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub observables: Vec<Observation>,
    pub snapshots: Vec<(f64, WaveFunction)>,
    pub final_state: WaveFunction,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.observables.iter().map(|o| o.t).collect()
    }

    pub fn snapshot(&self, t: f64) -> Option<&WaveFunction> {
        self.snapshots.iter().find(|(s, _)| (s - t).abs() <= 1e-9 * t.abs().max(1.0)).map(|(_, w)| w)
    }

    pub fn last(&self) -> &Observation {
        self.observables.last().expect("trajectory has at least the initial observation")
    }
}

#[derive(Clone, Debug)]
pub struct QhdOptions {
    /// Start time of the integration.
    pub t0: f64,
    /// Multiplies the kinetic coefficient; 1/W² maps a box of width W onto the unit box.
    pub kinetic_scale: f64,
    pub radius: f64,
    /// Defaults to the objective's minimizer.
    pub x_star: Option<Vec<f64>>,
}

impl Default for QhdOptions {
    fn default() -> Self {
        QhdOptions { t0: 0.0, kinetic_scale: 1.0, radius: 0.1, x_star: None }
    }
}

fn step_count(span: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(span >= 0.0) {
        return invalid("need dt > 0 and a non-negative time span");
    }
    let n = (span / dt).round();
    if (n * dt - span).abs() > 1e-9 * span.max(1.0) {
        return invalid(format!("dt = {dt} does not divide the time span {span}"));
    }
    Ok(n as usize)
}

fn snapshot_steps(t0: f64, dt: f64, steps: usize, times: &[f64]) -> Result<Vec<(usize, f64)>> {
    times
        .iter()
        .map(|&t| {
            let k = ((t - t0) / dt).round();
            if k < 0.0 || k as usize > steps || (t0 + k * dt - t).abs() > 1e-9 * t.abs().max(1.0) {
                return invalid(format!("snapshot time {t} is not on the step grid"));
            }
            Ok((k as usize, t))
        })
        .collect()
}

struct Recorder<'a> {
    potential: &'a [f64],
    mask: Option<Vec<bool>>,
}

impl Recorder<'_> {
    fn observe(&self, t: f64, amps: &[Complex64]) -> Observation {
        let (mut ef, mut norm, mut sp) = (0.0, 0.0, 0.0);
        for (i, c) in amps.iter().enumerate() {
            let p = c.norm_sqr();
            norm += p;
            ef += p * self.potential[i];
            if let Some(m) = &self.mask {
                if m[i] {
                    sp += p;
                }
            }
        }
        let success_prob = if self.mask.is_some() { sp } else { f64::NAN };
        Observation { t, ef, success_prob, norm }
    }
}

/// Kinetic eigenvalues ½Σ(2πk_i)² on the periodic N^d grid.
pub fn kinetic_symbol(mesh: &Mesh) -> Vec<f64> {
    let n = mesh.nodes_per_edge();
    (0..mesh.len())
        .map(|flat| {
            mesh.multi_index(flat)
                .into_iter()
                .map(|j| {
                    let w = 2.0 * std::f64::consts::PI * signed_frequency(j, n);
                    0.5 * w * w
                })
                .sum()
        })
        .collect()
}

/// Pseudo-spectral QHD: per step, the potential phase exp(−i·dt·b_j·f)
/// followed by the kinetic phase exp(−i·dt·a_j·½|2πk|²) in Fourier space,
/// with a_j = e^{φ(t_j)}, b_j = e^{χ(t_j)}, t_j = t0 + j·dt.
#[allow(clippy::too_many_arguments)]
pub fn qhd_evolve(
    mesh: &Mesh,
    f: &dyn Objective,
    sched: &Schedule,
    t_final: f64,
    dt: f64,
    psi0: &WaveFunction,
    snapshot_times: &[f64],
    opts: &QhdOptions,
) -> Result<Trajectory> {
    if mesh.boundary() != Boundary::Periodic {
        return invalid("pseudo-spectral evolution needs a periodic mesh");
    }
    let potential = discretize_objective(mesh, f)?;
    let x_star = opts.x_star.clone().or_else(|| f.minimizer());
    qhd_evolve_potential(&potential, sched, t_final, dt, psi0, snapshot_times, opts, x_star.as_deref())
}

#[allow(clippy::too_many_arguments)]
pub fn qhd_evolve_potential(
    potential: &DiagonalOperator,
    sched: &Schedule,
    t_final: f64,
    dt: f64,
    psi0: &WaveFunction,
    snapshot_times: &[f64],
    opts: &QhdOptions,
    x_star: Option<&[f64]>,
) -> Result<Trajectory> {
    let mesh = *potential.mesh();
    if mesh.boundary() != Boundary::Periodic {
        return invalid("pseudo-spectral evolution needs a periodic mesh");
    }
    psi0.mesh().ensure_same(&mesh)?;
    let steps = step_count(t_final - opts.t0, dt)?;
    let snaps = snapshot_steps(opts.t0, dt, steps, snapshot_times)?;
    let fft = FftNd::new(mesh.nodes_per_edge(), mesh.dim());
    let kin = kinetic_symbol(&mesh);
    let fvals = potential.values();
    let rec = Recorder { potential: fvals, mask: x_star.map(|x| ball_mask(&mesh, x, opts.radius)) };

    let mut psi: Vec<Complex64> = psi0.amplitudes().to_vec();
    let mut observables = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::new();
    observables.push(rec.observe(opts.t0, &psi));
    let take = |k: usize, psi: &[Complex64], out: &mut Vec<(f64, WaveFunction)>| {
        for &(_, t) in snaps.iter().filter(|(s, _)| *s == k) {
            out.push((t, WaveFunction::from_raw(mesh, psi.to_vec())));
        }
    };
    take(0, &psi, &mut snapshots);
    for j in 0..steps {
        let t = opts.t0 + j as f64 * dt;
        let a = sched.e_phi(t) * opts.kinetic_scale;
        let b = sched.e_chi(t);
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::NumericalBlowup { step: j });
        }
        for (c, v) in psi.iter_mut().zip(fvals) {
            *c *= Complex64::from_polar(1.0, -dt * b * v);
        }
        fft.forward(&mut psi);
        for (c, k) in psi.iter_mut().zip(&kin) {
            *c *= Complex64::from_polar(1.0, -dt * a * k);
        }
        fft.inverse(&mut psi);
        let obs = rec.observe(opts.t0 + (j + 1) as f64 * dt, &psi);
        if !obs.norm.is_finite() {
            return Err(Error::NumericalBlowup { step: j });
        }
        observables.push(obs);
        take(j + 1, &psi, &mut snapshots);
    }
    Ok(Trajectory { observables, snapshots, final_state: WaveFunction::from_raw(mesh, psi) })
}

/// Objective restricted to the radix-2 grid: variable k reads its q bits as
/// the binary fraction j/2^q, variable 0 in the most significant bits, so the
/// bitstring index equals the row-major index of the periodic 2^q mesh.
#[derive(Clone, Debug)]
pub struct Radix2Problem {
    mesh: Mesh,
    q: usize,
    diag: Vec<f64>,
}

impl Radix2Problem {
    pub fn from_diag(d: usize, q: usize, diag: Vec<f64>) -> Result<Self> {
        if q == 0 || d * q > 24 {
            return invalid("need 1 <= d*q <= 24");
        }
        let mesh = Mesh::periodic(d, 1 << q)?;
        if diag.len() != mesh.len() {
            return invalid("diagonal length must be 2^(d q)");
        }
        Ok(Radix2Problem { mesh, q, diag })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn qubits(&self) -> usize {
        self.q * self.mesh.dim()
    }

    pub fn bits_per_var(&self) -> usize {
        self.q
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn decode(&self, bits: usize) -> Vec<f64> {
        self.mesh.point(bits)
    }
}

pub fn radix2_problem(f: &dyn Objective, q: usize) -> Result<Radix2Problem> {
    let d = f.dim();
    if q == 0 || d * q > 24 {
        return invalid("need 1 <= d*q <= 24");
    }
    let mesh = Mesh::periodic(d, 1 << q)?;
    let diag = discretize_objective(&mesh, f)?.values().to_vec();
    Radix2Problem::from_diag(d, q, diag)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum QaaIntegrator {
    /// Half diagonal phase, exact per-qubit σx rotations, half diagonal phase.
    #[default]
    Strang,
    /// Real/imaginary kick-drift-kick on ψ = R + iI.
    Leapfrog,
}

#[derive(Clone, Debug)]
pub struct QaaOptions {
    pub integrator: QaaIntegrator,
    pub x_star: Option<Vec<f64>>,
    pub radius: f64,
}

impl Default for QaaOptions {
    fn default() -> Self {
        QaaOptions { integrator: QaaIntegrator::Strang, x_star: None, radius: 0.1 }
    }
}

/// H₀ = −Σσx applied matrix-free.
fn apply_h0(n: usize, v: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for b in 0..n {
        let m = 1usize << b;
        for (i, o) in out.iter_mut().enumerate() {
            *o -= v[i ^ m];
        }
    }
}

/// Evolves `psi` under (1−g)H₀ + gH₁ from `t_start` to `t_end` (either
/// direction) with steps of size close to `dt`.
#[allow(clippy::too_many_arguments)]
pub fn qaa_propagate(
    problem: &Radix2Problem,
    sched: &Schedule,
    psi: &mut [Complex64],
    t_start: f64,
    t_end: f64,
    dt: f64,
    integrator: QaaIntegrator,
    mut on_step: impl FnMut(usize, f64, &[Complex64]),
) -> Result<()> {
    let n = problem.qubits();
    let diag = problem.diag();
    let steps = step_count((t_end - t_start).abs(), dt)?;
    let h = if steps == 0 { 0.0 } else { (t_end - t_start) / steps as f64 };
    let dim = diag.len();
    let (mut re, mut im, mut tmp) = (vec![0.0; dim], vec![0.0; dim], vec![0.0; dim]);
    let apply_h = |g: f64, v: &[f64], out: &mut [f64], tmp: &mut [f64]| {
        apply_h0(n, v, tmp);
        for i in 0..dim {
            out[i] = (1.0 - g) * tmp[i] + g * diag[i] * v[i];
        }
    };
    for k in 0..steps {
        let t = t_start + k as f64 * h;
        match integrator {
            QaaIntegrator::Strang => {
                let g = sched.g(t + 0.5 * h);
                for (c, v) in psi.iter_mut().zip(diag) {
                    *c *= Complex64::from_polar(1.0, -0.5 * h * g * v);
                }
                let (s, c) = (h * (1.0 - g)).sin_cos();
                for b in 0..n {
                    let m = 1usize << b;
                    for i in 0..dim {
                        if i & m == 0 {
                            let (x, y) = (psi[i], psi[i | m]);
                            psi[i] = x * c + Complex64::new(0.0, s) * y;
                            psi[i | m] = y * c + Complex64::new(0.0, s) * x;
                        }
                    }
                }
                for (c, v) in psi.iter_mut().zip(diag) {
                    *c *= Complex64::from_polar(1.0, -0.5 * h * g * v);
                }
            }
            QaaIntegrator::Leapfrog => {
                for (i, c) in psi.iter().enumerate() {
                    re[i] = c.re;
                    im[i] = c.im;
                }
                let mut hv = vec![0.0; dim];
                apply_h(sched.g(t), &re, &mut hv, &mut tmp);
                im.iter_mut().zip(&hv).for_each(|(x, y)| *x -= 0.5 * h * y);
                apply_h(sched.g(t + 0.5 * h), &im, &mut hv, &mut tmp);
                re.iter_mut().zip(&hv).for_each(|(x, y)| *x += h * y);
                apply_h(sched.g(t + h), &re, &mut hv, &mut tmp);
                im.iter_mut().zip(&hv).for_each(|(x, y)| *x -= 0.5 * h * y);
                for (i, c) in psi.iter_mut().enumerate() {
                    *c = Complex64::new(re[i], im[i]);
                }
            }
        }
        if !psi[0].re.is_finite() {
            return Err(Error::NumericalBlowup { step: k });
        }
        on_step(k + 1, t + h, psi);
    }
    Ok(())
}

/// QAA from the uniform superposition (ground state of H₀) over [0, T].
pub fn qaa_evolve(
    problem: &Radix2Problem,
    sched: &Schedule,
    t_final: f64,
    dt: f64,
    opts: &QaaOptions,
) -> Result<Trajectory> {
    let mesh = *problem.mesh();
    let x_star = opts.x_star.clone();
    let rec = Recorder { potential: problem.diag(), mask: x_star.map(|x| ball_mask(&mesh, &x, opts.radius)) };
    let mut psi = crate::mesh::uniform_state(&mesh).into_amplitudes();
    let mut observables = vec![rec.observe(0.0, &psi)];
    qaa_propagate(problem, sched, &mut psi, 0.0, t_final, dt, opts.integrator, |_, t, p| {
        observables.push(rec.observe(t, p))
    })?;
    let drift = (observables.last().unwrap().norm - 1.0).abs();
    if t_final > 0.0 && drift / t_final > 1e-6 {
        return Err(Error::Stability(format!(
            "norm drift {drift:.3e} over T = {t_final}; use a smaller dt"
        )));
    }
    Ok(Trajectory { observables, snapshots: Vec::new(), final_state: WaveFunction::from_raw(mesh, psi) })
}
