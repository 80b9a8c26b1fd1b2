use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use qhd::bench::{self, ExperimentConfig, QpGenOptions};
use qhd::classical::{ensemble_stats, run_ensemble, Algorithm, EnsembleConfig};
use qhd::dynamics::{
    make_schedule, qaa_evolve, qhd_evolve, radix2_problem, QaaIntegrator, QaaOptions, QhdOptions, Schedule, ScheduleSpec,
    Trajectory, CUSTOM_ANNEAL_KNOTS,
};
use qhd::ising::{
    anneal_rescale, bitstring, decode_bits, hamming_encode_qp, parse_bitstring, qp_to_qubo, qubo_to_ising,
    simulate_ising_dense, AnnealEnvelope, IsingModel, PrecisionLayout,
};
use qhd::mesh::{sample_indices, uniform_state, Mesh};
use qhd::objectives::{objective_by_name, Objective, QpInstance};
use qhd::spectral::{build_hamiltonian, lowest_eigenpairs, probability_spectrum};
use qhd::Error;

#[derive(Parser)]
#[command(name = "qhd", version, about = "Quantum Hamiltonian Descent toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScheduleName {
    NesterovNonconvex,
    NesterovThreeParam,
    Linear,
    Custom,
    LocalAdiabatic,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Algo {
    Nagd,
    Sgd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EncodingName {
    Hamming,
    Radix2,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelFormat {
    Ising,
    Qubo,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Integrator {
    Strang,
    Leapfrog,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Envelope {
    NesterovNonconvex,
    Surrogate,
}

#[derive(clap::Args)]
struct EvolveArgs {
    #[arg(long, default_value = "levy")]
    objective: String,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(id = "T", long = "T", default_value_t = 10.0)]
    t_final: f64,
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Comma-separated snapshot times.
    #[arg(long, value_delimiter = ',')]
    snapshots: Vec<f64>,
    /// Recorded in the output; the evolution itself is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    radius: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Pseudo-spectral QHD on a periodic N^d grid.
    SimulateQhd {
        #[command(flatten)]
        common: EvolveArgs,
        /// Grid points per axis.
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "nesterov-nonconvex")]
        schedule: ScheduleName,
        /// Regularization s of the non-convex schedule.
        #[arg(long, default_value_t = 1e-3)]
        s: f64,
        /// Start time of the integration.
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
    },
    /// Quantum adiabatic baseline on the radix-2 encoding.
    SimulateQaa {
        #[command(flatten)]
        common: EvolveArgs,
        /// Bits per variable.
        #[arg(long, default_value_t = 6)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "linear")]
        schedule: ScheduleName,
        #[arg(long, value_enum, default_value = "strang")]
        integrator: Integrator,
    },
    /// Ensembles of classical gradient runs.
    Classical {
        #[arg(long, value_enum, default_value = "nagd")]
        algo: Algo,
        #[arg(long, default_value = "levy")]
        objective: String,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1.0)]
        noise_sigma: f64,
        #[arg(long, value_enum, default_value = "on")]
        projection: OnOff,
        #[arg(long, default_value_t = 0.1)]
        radius: f64,
        /// Write every k-th iterate.
        #[arg(long, default_value_t = 1)]
        every: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probability spectra and energy ratios along a QHD run.
    Spectrum {
        #[arg(long, default_value = "levy")]
        objective: String,
        #[arg(long, default_value_t = 64)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "nesterov-nonconvex")]
        schedule: ScheduleName,
        #[arg(long, default_value_t = 1e-3)]
        s: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        levels: usize,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode a QP as an Ising or QUBO model.
    Encode {
        #[arg(long)]
        qp: PathBuf,
        #[arg(long, value_enum, default_value = "hamming")]
        encoding: EncodingName,
        /// Qubits per variable for the Hamming encoding.
        #[arg(long, default_value_t = 8)]
        resolution: usize,
        /// Bits per variable for the radix-2 encoding.
        #[arg(long, default_value_t = 4)]
        bits: usize,
        #[arg(long, value_enum, default_value = "ising")]
        format: ModelFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dense quantum Ising machine run of a Hamming-encoded model.
    AnnealSim {
        #[arg(long)]
        model: PathBuf,
        /// Qubits per variable of the Hamming encoding.
        #[arg(long)]
        resolution: usize,
        #[arg(long, value_enum, default_value = "nesterov-nonconvex")]
        schedule: Envelope,
        #[arg(long, default_value_t = 1e-3)]
        s: f64,
        /// Physical anneal time.
        #[arg(long, default_value_t = 1.0)]
        tf: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        /// Time dilation λ; ignored when --a0 is given.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// Machine A(0)/h used to calibrate λ.
        #[arg(long)]
        a0: Option<f64>,
        /// B(1)/h of the surrogate envelope.
        #[arg(long, default_value_t = 1.0)]
        b1: f64,
        #[arg(long, default_value_t = 1000)]
        shots: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate random sparse QP instances.
    QpGen {
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        sparsity: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        count_diagonal: bool,
        #[arg(long)]
        sparse_b: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a benchmark described by a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Time-to-solution for 99% confidence.
    Tts {
        #[arg(long)]
        tf: f64,
        #[arg(long)]
        ps: f64,
    },
    /// T-count of the digital implementation.
    Tcount {
        #[arg(long)]
        dim: u64,
        #[arg(long)]
        sparsity: u64,
        #[arg(long)]
        iters: u64,
        #[arg(long)]
        qubits: u32,
    },
}

type CliResult<T> = Result<T, Box<dyn std::error::Error>>;

fn schedule_for(name: ScheduleName, s: f64, horizon: f64, states: f64) -> qhd::Result<Schedule> {
    let spec = match name {
        ScheduleName::NesterovNonconvex => ScheduleSpec::NesterovNonconvex { s, horizon },
        ScheduleName::NesterovThreeParam => ScheduleSpec::NesterovThreeParam { horizon },
        ScheduleName::Linear => ScheduleSpec::LinearQaa { horizon },
        ScheduleName::Custom => {
            return Schedule::piecewise(CUSTOM_ANNEAL_KNOTS.to_vec())?.stretched_to(horizon);
        }
        ScheduleName::LocalAdiabatic => ScheduleSpec::LocalAdiabatic { horizon, states },
    };
    make_schedule(&spec)
}

fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v}")
    }
}

fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn write_observables(dir: &Path, traj: &Trajectory) -> CliResult<()> {
    let mut w = csv::Writer::from_path(dir.join("observables.csv"))?;
    w.write_record(["t", "Ef", "success_prob", "norm"])?;
    for o in &traj.observables {
        w.write_record([num(o.t), num(o.ef), num(o.success_prob), num(o.norm)])?;
    }
    w.flush()?;
    Ok(())
}

fn write_snapshots(dir: &Path, traj: &Trajectory) -> CliResult<()> {
    for (t, psi) in &traj.snapshots {
        let doc = serde_json::json!({
            "t": t,
            "mesh": psi.mesh(),
            "density": psi.density(),
            "amplitudes": psi.amplitudes().iter().map(|c| [c.re, c.im]).collect::<Vec<_>>(),
        });
        fs::write(dir.join(format!("snapshot_{}.json", num(*t))), serde_json::to_string(&doc)? + "\n")?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::SimulateQhd { common, resolution, schedule, s, t0 } => {
            let f = objective_by_name(&common.objective, common.dim)?;
            let mesh = Mesh::periodic(common.dim, resolution)?;
            let sched = schedule_for(schedule, s, common.t_final, mesh.len() as f64)?;
            let opts = QhdOptions { t0, radius: common.radius, ..QhdOptions::default() };
            let traj =
                qhd_evolve(&mesh, &f, &sched, common.t_final, common.dt, &uniform_state(&mesh), &common.snapshots, &opts)?;
            fs::create_dir_all(&common.out)?;
            write_observables(&common.out, &traj)?;
            write_snapshots(&common.out, &traj)?;
        }
        Command::SimulateQaa { common, resolution, schedule, integrator } => {
            let f = objective_by_name(&common.objective, common.dim)?;
            let problem = radix2_problem(&f, resolution)?;
            let sched = schedule_for(schedule, 1e-3, common.t_final, problem.diag().len() as f64)?;
            let opts = QaaOptions {
                integrator: match integrator {
                    Integrator::Strang => QaaIntegrator::Strang,
                    Integrator::Leapfrog => QaaIntegrator::Leapfrog,
                },
                x_star: f.minimizer(),
                radius: common.radius,
            };
            let traj = qaa_evolve(&problem, &sched, common.t_final, common.dt, &opts)?;
            fs::create_dir_all(&common.out)?;
            write_observables(&common.out, &traj)?;
            if !common.snapshots.is_empty() {
                eprintln!("note: simulate-qaa writes the final state only");
            }
            let mut traj = traj;
            traj.snapshots.push((common.t_final, traj.final_state.clone()));
            write_snapshots(&common.out, &traj)?;
        }
        Command::Classical { algo, objective, dim, step, iters, runs, seed, noise_sigma, projection, radius, every, out } => {
            let f = objective_by_name(&objective, dim)?;
            let cfg = EnsembleConfig {
                algorithm: match algo {
                    Algo::Nagd => Algorithm::Nagd,
                    Algo::Sgd => Algorithm::Sgd,
                },
                step,
                iters,
                runs,
                seed,
                noise_sigma,
                projection: matches!(projection, OnOff::On),
            };
            let traces = run_ensemble(&f, &cfg)?;
            let x_star = f.minimizer().ok_or("objective has no declared minimizer")?;
            let stats = ensemble_stats(&traces, &x_star, radius)?;
            fs::create_dir_all(&out)?;
            let mut w = csv::Writer::from_path(out.join("ensemble.csv"))?;
            w.write_record(["t", "success_frac", "mean_loss"])?;
            for k in (0..stats.times.len()).filter(|k| k % every.max(1) == 0 || *k + 1 == stats.times.len()) {
                w.write_record([num(stats.times[k]), num(stats.success_frac[k]), num(stats.mean_loss[k])])?;
            }
            w.flush()?;
        }
        Command::Spectrum { objective, resolution, schedule, s, times, levels, dt, out } => {
            let f = objective_by_name(&objective, 2)?;
            let horizon = times.iter().cloned().fold(0.0, f64::max);
            let sched = schedule_for(schedule, s, horizon, 0.0)?;
            let pmesh = Mesh::periodic(2, resolution)?;
            let traj = qhd_evolve(&pmesh, &f, &sched, horizon, dt, &uniform_state(&pmesh), &times, &QhdOptions::default())?;
            let dmesh = Mesh::dirichlet(2, resolution)?;
            fs::create_dir_all(&out)?;
            let mut ws = csv::Writer::from_path(out.join("spectrum.csv"))?;
            let mut wr = csv::Writer::from_path(out.join("ratios.csv"))?;
            ws.write_record(["t", "n", "prob"])?;
            wr.write_record(["t", "E0", "E1", "ratio"])?;
            for &t in &times {
                let h = build_hamiltonian(&dmesh, &f, sched.e_phi(t), sched.e_chi(t))?;
                let eig = lowest_eigenpairs(&h, levels.max(2))?;
                let psi = traj.snapshot(t).ok_or("missing snapshot")?.to_dirichlet()?;
                let spec = probability_spectrum(&psi, &eig)?;
                for (n, p) in spec.probs.iter().enumerate() {
                    ws.write_record([num(t), n.to_string(), num(*p)])?;
                }
                let (e0, e1) = (eig.eigenvalues[0], eig.eigenvalues[1]);
                wr.write_record([num(t), num(e0), num(e1), num(e1 / e0)])?;
            }
            ws.flush()?;
            wr.flush()?;
        }
        Command::Encode { qp, encoding, resolution, bits, format, out } => {
            let qp: QpInstance = serde_json::from_str(&fs::read_to_string(&qp)?)?;
            let layout = match encoding {
                EncodingName::Hamming => PrecisionLayout::hamming(qp.dim(), resolution)?,
                EncodingName::Radix2 => PrecisionLayout::radix2(qp.dim(), bits)?,
            };
            let text = match (format, encoding) {
                (ModelFormat::Ising, EncodingName::Hamming) => hamming_encode_qp(&qp, resolution)?.to_text(),
                (ModelFormat::Ising, EncodingName::Radix2) => qubo_to_ising(&qp_to_qubo(&qp, &layout)?).to_text(),
                (ModelFormat::Qubo, _) => qp_to_qubo(&qp, &layout)?.to_text(),
            };
            ensure_parent(&out)?;
            fs::write(&out, text)?;
        }
        Command::AnnealSim { model, resolution, schedule, s, tf, dt, lambda, a0, b1, shots, seed, out } => {
            let model = IsingModel::from_text(&fs::read_to_string(&model)?)?;
            let layout = PrecisionLayout::hamming(model.n / resolution.max(1), resolution)?;
            if layout.qubits() != model.n {
                return Err(Box::new(Error::InvalidArgument("resolution must divide the qubit count".into())));
            }
            let env = match schedule {
                Envelope::NesterovNonconvex => {
                    let sched = make_schedule(&ScheduleSpec::NesterovNonconvex { s, horizon: tf })?;
                    match a0 {
                        Some(a0) => anneal_rescale(&sched, resolution, a0, tf)?,
                        None => AnnealEnvelope::from_schedule(&sched, resolution, lambda, tf)?,
                    }
                }
                Envelope::Surrogate => AnnealEnvelope::annealer_surrogate(a0.unwrap_or(1.0), b1, tf),
            };
            let run = simulate_ising_dense(&model, &env, tf, dt)?;
            let wf = qhd::mesh::WaveFunction::from_amplitudes(Mesh::periodic(1, 1 << model.n)?, run.state.clone())?;
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for i in sample_indices(&wf, shots, seed)? {
                *counts.entry(i).or_default() += 1;
            }
            ensure_parent(&out)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["bitstring", "count", "decoded_point", "energy"])?;
            for (i, c) in counts {
                let bits = bitstring(i, model.n);
                let x = decode_bits(&parse_bitstring(&bits)?, &layout)?;
                let point = x.iter().map(|v| num(*v)).collect::<Vec<_>>().join(";");
                w.write_record([bits, c.to_string(), point, num(model.energy_index(i))])?;
            }
            w.flush()?;
        }
        Command::QpGen { dim, sparsity, count, seed, count_diagonal, sparse_b, out } => {
            fs::create_dir_all(&out)?;
            let opts = QpGenOptions { count_diagonal, dense_b: !sparse_b };
            for i in 0..count {
                let qp = bench::generate_qp(dim, sparsity, bench::instance_seed(seed, i), opts)?;
                fs::write(out.join(format!("qp_{i:04}.json")), serde_json::to_string_pretty(&qp)? + "\n")?;
            }
        }
        Command::Bench { config, out } => {
            let cfg: ExperimentConfig = serde_json::from_str(&fs::read_to_string(&config)?)?;
            let start = Instant::now();
            let report = bench::run_experiment(&cfg)?;
            bench::write_report(&cfg, &report, &out, start.elapsed().as_secs_f64())?;
            for (i, e) in &report.failures {
                eprintln!("instance {i} failed: {e}");
            }
            if !report.failures.is_empty() {
                return Err(format!("{} instance(s) failed", report.failures.len()).into());
            }
        }
        Command::Tts { tf, ps } => println!("{}", num(bench::tts(tf, ps)?)),
        Command::Tcount { dim, sparsity, iters, qubits } => println!("{}", bench::tcount(dim, sparsity, iters, qubits)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
