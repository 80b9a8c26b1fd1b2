//! Classical baselines: Nesterov accelerated gradient descent and stochastic
//! gradient descent on the unit box.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::mesh::inside_ball;
use crate::objectives::Objective;

#[derive(Clone, Debug, PartialEq)]
pub struct IterateTrace {
    pub points: Vec<Vec<f64>>,
    /// t_k = k·s.
    pub effective_times: Vec<f64>,
    pub values: Vec<f64>,
}

fn project(x: &mut [f64]) {
    x.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

fn checked_grad(f: &dyn Objective, x: &[f64], step: usize) -> Result<Vec<f64>> {
    let g = f.grad(x);
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation { node: step, msg: "non-finite gradient".into() });
    }
    Ok(g)
}

fn check_inputs(f: &dyn Objective, x0: &[f64], s: f64) -> Result<()> {
    if !(s > 0.0) {
        return invalid("stepsize must be positive");
    }
    if x0.len() != f.dim() {
        return invalid("initial point dimension mismatch");
    }
    Ok(())
}

/// x_k = y_{k−1} − s∇f(y_{k−1}), y_k = x_k + (k−1)/(k+2)·(x_k − x_{k−1}),
/// starting from y_0 = x_0.
pub fn nagd_run(f: &dyn Objective, x0: &[f64], s: f64, steps: usize, projection: bool) -> Result<IterateTrace> {
    check_inputs(f, x0, s)?;
    let mut x_prev = x0.to_vec();
    let mut y = x0.to_vec();
    let mut trace = IterateTrace {
        points: vec![x0.to_vec()],
        effective_times: vec![0.0],
        values: vec![f.eval(x0)],
    };
    for k in 1..=steps {
        let g = checked_grad(f, &y, k)?;
        let mut x: Vec<f64> = y.iter().zip(&g).map(|(yi, gi)| yi - s * gi).collect();
        if projection {
            project(&mut x);
        }
        let m = (k as f64 - 1.0) / (k as f64 + 2.0);
        y = x.iter().zip(&x_prev).map(|(a, b)| a + m * (a - b)).collect();
        if projection {
            project(&mut y);
        }
        trace.values.push(f.eval(&x));
        trace.effective_times.push(k as f64 * s);
        trace.points.push(x.clone());
        x_prev = x;
    }
    Ok(trace)
}

/// x_{k+1} = x_k − s(∇f(x_k) + ξ_k), ξ_k ~ N(0, σ²) per component.
pub fn sgd_run(
    f: &dyn Objective,
    x0: &[f64],
    s: f64,
    steps: usize,
    noise_sigma: f64,
    seed: u64,
    projection: bool,
) -> Result<IterateTrace> {
    check_inputs(f, x0, s)?;
    if !(noise_sigma >= 0.0) {
        return invalid("noise_sigma must be non-negative");
    }
    let normal = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = x0.to_vec();
    let mut trace = IterateTrace {
        points: vec![x.clone()],
        effective_times: vec![0.0],
        values: vec![f.eval(&x)],
    };
    for k in 1..=steps {
        let g = checked_grad(f, &x, k)?;
        for (xi, gi) in x.iter_mut().zip(&g) {
            let noise = if noise_sigma > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            *xi -= s * (gi + noise);
        }
        if projection {
            project(&mut x);
        }
        trace.values.push(f.eval(&x));
        trace.effective_times.push(k as f64 * s);
        trace.points.push(x.clone());
    }
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub success_frac: Vec<f64>,
    pub mean_loss: Vec<f64>,
}

pub fn ensemble_stats(traces: &[IterateTrace], x_star: &[f64], radius: f64) -> Result<EnsembleStats> {
    let Some(first) = traces.first() else {
        return invalid("empty ensemble");
    };
    let len = first.points.len();
    if traces.iter().any(|t| t.points.len() != len) {
        return invalid("traces differ in length");
    }
    let n = traces.len() as f64;
    let mut stats = EnsembleStats { times: first.effective_times.clone(), success_frac: vec![0.0; len], mean_loss: vec![0.0; len] };
    for t in traces {
        for k in 0..len {
            let d2: f64 = t.points[k].iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
            if inside_ball(d2, radius) {
                stats.success_frac[k] += 1.0;
            }
            stats.mean_loss[k] += t.values[k];
        }
    }
    stats.success_frac.iter_mut().for_each(|v| *v /= n);
    stats.mean_loss.iter_mut().for_each(|v| *v /= n);
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Nagd,
    Sgd,
}

#[derive(Clone, Debug)]
pub struct EnsembleConfig {
    pub algorithm: Algorithm,
    pub step: f64,
    pub iters: usize,
    pub runs: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub projection: bool,
}

/// Runs from uniformly random initial points; run i draws its start and its
/// gradient noise from seed + i.
pub fn run_ensemble(f: &dyn Objective, cfg: &EnsembleConfig) -> Result<Vec<IterateTrace>> {
    use rand::Rng;
    (0..cfg.runs)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0: Vec<f64> = (0..f.dim()).map(|_| rng.random::<f64>()).collect();
            match cfg.algorithm {
                Algorithm::Nagd => nagd_run(f, &x0, cfg.step, cfg.iters, cfg.projection),
                Algorithm::Sgd => sgd_run(f, &x0, cfg.step, cfg.iters, cfg.noise_sigma, seed ^ 0x5eed, cfg.projection),
            }
        })
        .collect()
}
