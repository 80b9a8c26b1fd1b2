//! Benchmark harness: QP generation, grid ground truth, local refinement,
//! time-to-solution, T-count estimates and the experiment runner.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical::{nagd_run, sgd_run};
use crate::dynamics::{make_schedule, ScheduleSpec};
use crate::error::{invalid, Error, Result};
use crate::ising::relaxed_qhd_evolve;
use crate::mesh::{sample_indices, Mesh};
use crate::objectives::QpInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QpGenOptions {
    /// Count the diagonal entry towards the per-row sparsity.
    pub count_diagonal: bool,
    /// Draw every entry of b; otherwise each entry is nonzero with probability s/d.
    pub dense_b: bool,
}

impl Default for QpGenOptions {
    fn default() -> Self {
        QpGenOptions { count_diagonal: false, dense_b: true }
    }
}

/// Symmetric Q with U[−1,1] entries, a full diagonal and at most s
/// off-diagonal nonzeros per row (s − 1 when the diagonal counts), plus
/// b with U[−1,1] entries.
pub fn generate_qp(d: usize, s: usize, seed: u64, opts: QpGenOptions) -> Result<QpInstance> {
    if s == 0 || s > d {
        return invalid(format!("need 1 <= s <= d, got s = {s}, d = {d}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cap = if opts.count_diagonal { s - 1 } else { s };
    let mut t: Vec<(usize, usize, f64)> = (0..d).map(|i| (i, i, rng.random_range(-1.0..=1.0))).collect();
    let mut count = vec![0usize; d];
    let mut taken = std::collections::BTreeSet::new();
    for i in 0..d {
        let mut cands: Vec<usize> =
            (0..d).filter(|&j| j != i && !taken.contains(&(i.min(j), i.max(j))) && count[j] < cap).collect();
        cands.shuffle(&mut rng);
        for j in cands {
            if count[i] >= cap {
                break;
            }
            taken.insert((i.min(j), i.max(j)));
            t.push((i, j, rng.random_range(-1.0..=1.0)));
            count[i] += 1;
            count[j] += 1;
        }
    }
    let b = (0..d)
        .map(|_| {
            let keep = opts.dense_b || rng.random::<f64>() < s as f64 / d as f64;
            let v = rng.random_range(-1.0..=1.0);
            if keep {
                v
            } else {
                0.0
            }
        })
        .collect();
    QpInstance::new(d, t, b)
}

/// Exhaustive minimum over the (r+1)^d grid; the first minimizer in
/// row-major order wins ties.
pub fn grid_bruteforce_min(qp: &QpInstance, r: usize) -> Result<(Vec<f64>, f64)> {
    let mesh = Mesh::dirichlet(qp.dim(), r)?;
    if mesh.len() > 10_000_000 {
        return Err(Error::Resource(format!("{} grid points", mesh.len())));
    }
    let mut best = (0, f64::INFINITY);
    for flat in 0..mesh.len() {
        let v = qp.value(&mesh.point(flat));
        if v < best.1 {
            best = (flat, v);
        }
    }
    Ok((mesh.point(best.0), best.1))
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Projected gradient descent with Armijo backtracking. Steps that would
/// raise f are rejected, so f(result) ≤ f(x0).
pub fn local_refine(qp: &QpInstance, x0: &[f64], tol: f64) -> Result<Vec<f64>> {
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut g) = qp.eval_grad(&x)?;
    for _ in 0..10_000 {
        let mut pg = x.iter().zip(&g).map(|(a, b)| a - b).collect::<Vec<_>>();
        project(&mut pg);
        let pg_norm = pg.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        if pg_norm <= tol {
            break;
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let mut xn: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            project(&mut xn);
            let decrease: f64 = g.iter().zip(x.iter().zip(&xn)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let fnew = qp.value(&xn);
            if fnew <= fx - 1e-4 * decrease && fnew <= fx {
                accepted = Some((xn, fnew));
                break;
            }
            step *= 0.5;
        }
        let Some((xn, fnew)) = accepted else { break };
        x = xn;
        fx = fnew;
        g = qp.eval_grad(&x)?.1;
    }
    Ok(x)
}

/// Grid minimum at resolution r, improved by refining from the `starts`
/// best grid points.
pub fn ground_truth(qp: &QpInstance, r: usize, starts: usize) -> Result<(Vec<f64>, f64)> {
    let mesh = Mesh::dirichlet(qp.dim(), r)?;
    if mesh.len() > 10_000_000 {
        return Err(Error::Resource(format!("{} grid points", mesh.len())));
    }
    let mut vals: Vec<(f64, usize)> = (0..mesh.len()).map(|i| (qp.value(&mesh.point(i)), i)).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best = (mesh.point(vals[0].1), vals[0].0);
    for &(_, i) in vals.iter().take(starts.max(1)) {
        let x = local_refine(qp, &mesh.point(i), 1e-10)?;
        let v = qp.value(&x);
        if v < best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// t_f·⌈ln 0.01 / ln(1 − p_s)⌉; infinite when p_s = 0 and t_f when p_s ≥ 0.99.
pub fn tts(t_f: f64, p_s: f64) -> Result<f64> {
    if !(t_f > 0.0) || !(0.0..=1.0).contains(&p_s) {
        return invalid("need t_f > 0 and 0 <= p_s <= 1");
    }
    if p_s == 0.0 {
        return Ok(f64::INFINITY);
    }
    if p_s >= 0.99 {
        return Ok(t_f);
    }
    Ok(t_f * (0.01f64.ln() / (1.0 - p_s).ln()).ceil())
}

/// |f_found − f_star| ≤ 0.01, with 1e-12 slack for the decimal boundary.
pub fn success(f_found: f64, f_star: f64) -> bool {
    (f_found - f_star).abs() <= 0.01 + 1e-12
}

/// (c_add, c_mult, c_aqft) for q-qubit arithmetic.
pub fn tcount_constants(q: u32) -> Result<(u64, u64, u64)> {
    match q {
        3 => Ok((587, 173, 170)),
        16 => Ok((4704, 6328, 1162)),
        32 => Ok((11144, 26642, 2698)),
        _ => invalid(format!("no T-count constants for q = {q}")),
    }
}

/// 2((c_add + c_mult)(s + 2) + c_aqft)·d·R.
pub fn tcount(d: u64, s: u64, r: u64, q: u32) -> Result<u64> {
    let (ca, cm, cq) = tcount_constants(q)?;
    Ok(2 * ((ca + cm) * (s + 2) + cq) * d * r)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TtsReport {
    pub solver: String,
    pub t_f: f64,
    pub p_s: f64,
    pub tts: f64,
    pub trials: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverConfig {
    /// Returns the ground-truth minimizer.
    ExactOracle {
        #[serde(default)]
        tf_seconds: Option<f64>,
    },
    /// Uniform node of the (r+1)^d grid.
    UniformGrid {
        resolution: usize,
        #[serde(default)]
        tf_seconds: Option<f64>,
    },
    /// Uniform point of the box.
    UniformBox {
        #[serde(default)]
        tf_seconds: Option<f64>,
    },
    /// Shots from the final density of the relaxed QHD grid evolution.
    RelaxedQhd {
        resolution: usize,
        #[serde(rename = "T")]
        t_final: f64,
        dt: f64,
        #[serde(default = "default_s")]
        s: f64,
        #[serde(default)]
        tf_seconds: Option<f64>,
    },
    Nagd {
        step: f64,
        iters: usize,
    },
    Sgd {
        step: f64,
        iters: usize,
        #[serde(default = "default_sigma")]
        noise_sigma: f64,
    },
}

fn default_s() -> f64 {
    1e-3
}

fn default_sigma() -> f64 {
    1.0
}

impl SolverConfig {
    pub fn name(&self) -> String {
        match self {
            SolverConfig::ExactOracle { .. } => "exact_oracle".into(),
            SolverConfig::UniformGrid { resolution, .. } => format!("uniform_grid_r{resolution}"),
            SolverConfig::UniformBox { .. } => "uniform_box".into(),
            SolverConfig::RelaxedQhd { resolution, .. } => format!("relaxed_qhd_r{resolution}"),
            SolverConfig::Nagd { .. } => "nagd".into(),
            SolverConfig::Sgd { .. } => "sgd".into(),
        }
    }

    /// Declared time per trial: the physical or effective evolution time
    /// for simulated solvers, iters·step for gradient methods, 1 otherwise.
    pub fn tf_seconds(&self) -> f64 {
        match self {
            SolverConfig::ExactOracle { tf_seconds } | SolverConfig::UniformGrid { tf_seconds, .. } | SolverConfig::UniformBox { tf_seconds } => {
                tf_seconds.unwrap_or(1.0)
            }
            SolverConfig::RelaxedQhd { tf_seconds, t_final, .. } => tf_seconds.unwrap_or(*t_final),
            SolverConfig::Nagd { step, iters } | SolverConfig::Sgd { step, iters, .. } => step * *iters as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum InstanceSource {
    Generate {
        count: usize,
        dim: usize,
        sparsity: usize,
        #[serde(default)]
        options: Option<QpGenOptions>,
    },
    Files {
        paths: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instances: InstanceSource,
    pub solvers: Vec<SolverConfig>,
    pub trials: usize,
    pub seed: u64,
    #[serde(default = "default_truth_resolution")]
    pub ground_truth_resolution: usize,
    #[serde(default = "default_starts")]
    pub refine_starts: usize,
    #[serde(default = "default_true")]
    pub refine: bool,
}

fn default_truth_resolution() -> usize {
    8
}

fn default_starts() -> usize {
    50
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub instance: usize,
    pub f_star: f64,
    pub reports: Vec<TtsReport>,
    /// Success probability before refinement, per solver.
    pub raw_ps: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub rows: Vec<InstanceRow>,
    pub failures: Vec<(usize, String)>,
}

/// Seed for (instance, solver) derived from the master seed.
pub fn derive_seed(master: u64, instance: usize, solver: usize) -> u64 {
    let mut z = master ^ ((instance as u64) << 32) ^ (solver as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of generated instance `i`.
pub fn instance_seed(master: u64, i: usize) -> u64 {
    derive_seed(master, i, usize::MAX)
}

/// Final points of `trials` runs of one solver, before refinement.
pub fn solver_points(solver: &SolverConfig, qp: &QpInstance, x_star: &[f64], trials: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let d = qp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match solver {
        SolverConfig::ExactOracle { .. } => Ok(vec![x_star.to_vec(); trials]),
        SolverConfig::UniformGrid { resolution, .. } => {
            let r = *resolution as f64;
            Ok((0..trials)
                .map(|_| (0..d).map(|_| rng.random_range(0..=*resolution) as f64 / r).collect())
                .collect())
        }
        SolverConfig::UniformBox { .. } => Ok((0..trials).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()),
        SolverConfig::RelaxedQhd { resolution, t_final, dt, s, .. } => {
            let sched = make_schedule(&ScheduleSpec::NesterovNonconvex { s: *s, horizon: *t_final })?;
            let traj = relaxed_qhd_evolve(qp, *resolution, &sched, *t_final, *dt)?;
            let psi = traj.final_state;
            Ok(sample_indices(&psi, trials, seed)?.into_iter().map(|i| psi.mesh().point(i)).collect())
        }
        SolverConfig::Nagd { step, iters } => (0..trials)
            .map(|_| {
                let x0: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                Ok(nagd_run(qp, &x0, *step, *iters, true)?.points.pop().expect("trace has points"))
            })
            .collect(),
        SolverConfig::Sgd { step, iters, noise_sigma } => (0..trials)
            .map(|k| {
                let x0: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
                let run_seed = seed.wrapping_add(k as u64);
                Ok(sgd_run(qp, &x0, *step, *iters, *noise_sigma, run_seed, true)?.points.pop().expect("trace has points"))
            })
            .collect(),
    }
}

fn run_instance(cfg: &ExperimentConfig, idx: usize, qp: &QpInstance) -> Result<InstanceRow> {
    let (x_star, f_star) = ground_truth(qp, cfg.ground_truth_resolution, cfg.refine_starts)?;
    let mut reports = Vec::new();
    let mut raw_ps = Vec::new();
    for (si, solver) in cfg.solvers.iter().enumerate() {
        let pts = solver_points(solver, qp, &x_star, cfg.trials, derive_seed(cfg.seed, idx, si))?;
        let raw = pts.iter().filter(|x| success(qp.value(x), f_star)).count();
        let mut hits = 0;
        for x in &pts {
            let y = if cfg.refine { local_refine(qp, x, 1e-8)? } else { x.clone() };
            if success(qp.value(&y), f_star) {
                hits += 1;
            }
        }
        let p_s = hits as f64 / cfg.trials as f64;
        let t_f = solver.tf_seconds();
        reports.push(TtsReport { solver: solver.name(), t_f, p_s, tts: tts(t_f, p_s)?, trials: cfg.trials });
        raw_ps.push(raw as f64 / cfg.trials as f64);
    }
    Ok(InstanceRow { instance: idx, f_star, reports, raw_ps })
}

pub fn load_instances(cfg: &ExperimentConfig) -> Result<Vec<Result<QpInstance>>> {
    Ok(match &cfg.instances {
        InstanceSource::Generate { count, dim, sparsity, options } => (0..*count)
            .map(|i| generate_qp(*dim, *sparsity, instance_seed(cfg.seed, i), options.unwrap_or_default()))
            .collect(),
        InstanceSource::Files { paths } => paths
            .iter()
            .map(|p| Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?))
            .collect(),
    })
}

/// Runs every solver on every instance; instance failures are recorded and
/// the remaining instances still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.trials == 0 {
        return invalid("trial count must be at least 1");
    }
    let instances = load_instances(cfg)?;
    let results: Vec<Result<InstanceRow>> = instances
        .par_iter()
        .enumerate()
        .map(|(i, qp)| match qp {
            Ok(qp) => run_instance(cfg, i, qp),
            Err(e) => Err(Error::InvalidArgument(e.to_string())),
        })
        .collect();
    let mut report = ExperimentReport { rows: Vec::new(), failures: Vec::new() };
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => report.rows.push(row),
            Err(e) => report.failures.push((i, e.to_string())),
        }
    }
    Ok(report)
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

/// `tts_summary.csv` with columns instance, solver, tf_seconds, ps, tts_seconds.
pub fn tts_summary_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("instance,solver,tf_seconds,ps,tts_seconds\n");
    for row in &report.rows {
        for r in &row.reports {
            s.push_str(&format!("{},{},{},{},{}\n", row.instance, r.solver, fmt_num(r.t_f), fmt_num(r.p_s), fmt_num(r.tts)));
        }
    }
    s
}

/// Writes `tts_summary.csv` and `run_meta.json` into `out`.
pub fn write_report(cfg: &ExperimentConfig, report: &ExperimentReport, out: &Path, wall_seconds: f64) -> Result<()> {
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("tts_summary.csv"), tts_summary_csv(report))?;
    let meta = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "failures": report.failures,
        "raw_success": report.rows.iter().map(|r| (r.instance, r.raw_ps.clone())).collect::<Vec<_>>(),
        "wall_seconds": wall_seconds,
    });
    std::fs::write(out.join("run_meta.json"), serde_json::to_string_pretty(&meta)? + "\n")?;
    Ok(())
}
