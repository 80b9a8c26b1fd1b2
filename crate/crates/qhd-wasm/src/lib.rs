//! wasm-bindgen entry points for the static demo page in `www/`.

use qhd::dynamics::{make_schedule, qhd_evolve, QhdOptions, Schedule, ScheduleSpec};
use qhd::ising::{hamming_encode_qp, qp_to_qubo, PrecisionLayout};
use qhd::mesh::{uniform_state, Mesh};
use qhd::objectives::{levy2, QpInstance};
use qhd::spectral::{build_hamiltonian, energy_ratio, lowest_eigenpairs};
use wasm_bindgen::prelude::*;

fn levy_schedule(horizon: f64) -> Result<Schedule, String> {
    make_schedule(&ScheduleSpec::NesterovNonconvex { s: 1e-3, horizon }).map_err(|e| e.to_string())
}

/// Final QHD density on the Levy function over an n×n periodic grid,
/// row-major with x slowest, followed by the success probability.
#[wasm_bindgen]
pub fn levy_density(n: usize, t_final: f64, dt: f64) -> Result<Vec<f64>, String> {
    if n > 256 {
        return Err("grid is limited to 256 nodes per edge".into());
    }
    let mesh = Mesh::periodic(2, n).map_err(|e| e.to_string())?;
    let sched = levy_schedule(t_final)?;
    let traj = qhd_evolve(&mesh, &levy2(), &sched, t_final, dt, &uniform_state(&mesh), &[], &QhdOptions::default())
        .map_err(|e| e.to_string())?;
    let mut out = traj.final_state.density();
    out.push(traj.last().success_prob);
    Ok(out)
}

/// E₁/E₀ of the instantaneous Levy Hamiltonian on the r-cell Dirichlet
/// grid at each time.
#[wasm_bindgen]
pub fn energy_ratio_curve(r: usize, times: Vec<f64>) -> Result<Vec<f64>, String> {
    if r > 96 {
        return Err("grid is limited to 96 cells per edge".into());
    }
    let horizon = times.iter().copied().fold(1.0, f64::max);
    let sched = levy_schedule(horizon)?;
    let mesh = Mesh::dirichlet(2, r).map_err(|e| e.to_string())?;
    times
        .iter()
        .map(|&t| {
            let h = build_hamiltonian(&mesh, &levy2(), sched.e_phi(t), sched.e_chi(t))?;
            energy_ratio(&lowest_eigenpairs(&h, 2)?)
        })
        .collect::<qhd::Result<Vec<f64>>>()
        .map_err(|e| e.to_string())
}

/// Ising (Hamming) or QUBO (radix-2) text for the QP ½xᵀQx + bᵀx, with Q
/// given row-major.
#[wasm_bindgen]
pub fn encode_qp(q: Vec<f64>, b: Vec<f64>, bits: usize, encoding: &str) -> Result<String, String> {
    let d = b.len();
    if q.len() != d * d {
        return Err(format!("Q has {} entries, expected {}", q.len(), d * d));
    }
    let mut t = Vec::new();
    for i in 0..d {
        for j in i..d {
            if q[i * d + j] != q[j * d + i] {
                return Err(format!("Q is not symmetric at ({i}, {j})"));
            }
            t.push((i, j, q[i * d + j]));
        }
    }
    let qp = QpInstance::new(d, t, b).map_err(|e| e.to_string())?;
    if d * bits > 64 {
        return Err("at most 64 qubits".into());
    }
    match encoding {
        "hamming" => hamming_encode_qp(&qp, bits).map(|m| m.to_text()),
        "radix2" => PrecisionLayout::radix2(d, bits).and_then(|l| qp_to_qubo(&qp, &l)).map(|m| m.to_text()),
        other => return Err(format!("unknown encoding '{other}'")),
    }
    .map_err(|e| e.to_string())
}
