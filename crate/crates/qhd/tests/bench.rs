use proptest::prelude::*;
use qhd::bench::*;
use qhd::mesh::Mesh;
use qhd::objectives::QpInstance;

fn identity_qp(b: Vec<f64>) -> QpInstance {
    let d = b.len();
    QpInstance::new(d, (0..d).map(|i| (i, i, 1.0)).collect(), b).unwrap()
}

#[test]
fn generated_instances_are_deterministic_and_sparse() {
    let o = QpGenOptions::default();
    assert_eq!(generate_qp(5, 5, 11, o).unwrap(), generate_qp(5, 5, 11, o).unwrap());
    assert_ne!(generate_qp(5, 5, 11, o).unwrap(), generate_qp(5, 5, 12, o).unwrap());
    for seed in 0..20 {
        let qp = generate_qp(50, 5, seed, o).unwrap();
        assert!(qp.row_nonzeros(false).iter().all(|&c| c <= 5));
        let counted = generate_qp(50, 5, seed, QpGenOptions { count_diagonal: true, dense_b: true }).unwrap();
        assert!(counted.row_nonzeros(true).iter().all(|&c| c <= 5));
    }
    assert!(generate_qp(5, 0, 1, o).is_err());
    assert!(generate_qp(5, 6, 1, o).is_err());
}

#[test]
fn generated_entry_statistics() {
    let mut entries = Vec::new();
    let mut seed = 0;
    while entries.len() < 10_000 {
        let qp = generate_qp(20, 5, seed, QpGenOptions::default()).unwrap();
        entries.extend(qp.triplets().iter().map(|t| t.2));
        entries.extend_from_slice(qp.b());
        seed += 1;
    }
    let mean = entries.iter().sum::<f64>() / entries.len() as f64;
    assert!(mean.abs() <= 0.02, "{mean}");
    assert!(entries.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn sparse_b_option() {
    let qp = generate_qp(40, 2, 5, QpGenOptions { count_diagonal: false, dense_b: false }).unwrap();
    let zeros = qp.b().iter().filter(|&&v| v == 0.0).count();
    assert!(zeros > 20, "{zeros}");
}

#[test]
fn brute_force_examples() {
    let (x, f) = grid_bruteforce_min(&identity_qp(vec![-1.0, -1.0]), 8).unwrap();
    assert_eq!((x, f), (vec![1.0, 1.0], -1.0));
    let (x, f) = grid_bruteforce_min(&identity_qp(vec![0.0, 0.0]), 8).unwrap();
    assert_eq!((x, f), (vec![0.0, 0.0], 0.0));
    let flat = QpInstance::new(2, vec![], vec![0.0, 0.0]).unwrap();
    assert_eq!(grid_bruteforce_min(&flat, 4).unwrap().0, vec![0.0, 0.0]);
    assert!(matches!(grid_bruteforce_min(&identity_qp(vec![0.0; 8]), 8), Err(qhd::Error::Resource(_))));
}

#[test]
fn brute_force_agrees_with_multistart_refinement() {
    for seed in 0..5 {
        let qp = generate_qp(2, 2, seed, QpGenOptions::default()).unwrap();
        let (_, f_grid) = grid_bruteforce_min(&qp, 8).unwrap();
        let mesh = Mesh::dirichlet(2, 8).unwrap();
        let best = (0..mesh.len())
            .map(|i| qp.value(&local_refine(&qp, &mesh.point(i), 1e-10).unwrap()))
            .fold(f64::INFINITY, f64::min);
        assert!(best <= f_grid);
        // Grid spacing 1/8 and |Q| ≤ 1 bound the grid gap by d·(1/16)².
        assert!(f_grid - best <= 2.0 / 256.0 + 1e-12, "{f_grid} vs {best}");
        let (_, f_truth) = ground_truth(&qp, 8, mesh.len()).unwrap();
        assert!((f_truth - best).abs() <= 1e-9);
    }
}

#[test]
fn refine_examples() {
    let qp = identity_qp(vec![-0.5, -0.25]);
    assert_eq!(local_refine(&qp, &[0.5, 0.25], 1e-10).unwrap(), vec![0.5, 0.25]);
    let x = local_refine(&identity_qp(vec![-2.0, -2.0, -2.0]), &[0.1, 0.5, 0.9], 1e-10).unwrap();
    assert!(x.iter().all(|&v| (v - 1.0).abs() <= 1e-10), "{x:?}");
}

#[test]
fn tts_examples() {
    assert_eq!(tts(1.0, 0.99).unwrap(), 1.0);
    assert_eq!(tts(1.0, 0.5).unwrap(), 7.0);
    assert_eq!(tts(2.5, 1.0).unwrap(), 2.5);
    assert!(tts(1.0, 0.0).unwrap().is_infinite());
    assert!(tts(0.0, 0.5).is_err());
    assert!(tts(1.0, 1.5).is_err());
}

#[test]
fn success_examples() {
    assert!(success(-1.0, -1.0));
    assert!(success(0.3 + 0.01, 0.3));
    assert!(success(0.0100, 0.0));
    assert!(!success(0.011, 0.0));
}

#[test]
fn tcount_examples() {
    assert_eq!(tcount(50, 5, 1000, 3).unwrap(), 549_000_000);
    assert_eq!(tcount(75, 5, 1000, 3).unwrap(), 823_500_000);
    assert_eq!(tcount(60, 5, 1000, 16).unwrap(), 9_406_320_000);
    assert_eq!(tcount(1, 1, 1, 3).unwrap(), 4900);
    assert!(matches!(tcount(1, 1, 1, 8), Err(qhd::Error::InvalidArgument(_))));
}

fn config(solvers: Vec<SolverConfig>, dim: usize, count: usize, trials: usize, refine: bool) -> ExperimentConfig {
    ExperimentConfig {
        instances: InstanceSource::Generate { count, dim, sparsity: dim, options: None },
        solvers,
        trials,
        seed: 77,
        ground_truth_resolution: 8,
        refine_starts: 20,
        refine,
    }
}

#[test]
fn exact_oracle_always_succeeds() {
    let cfg = config(vec![SolverConfig::ExactOracle { tf_seconds: Some(0.5) }], 3, 3, 10, true);
    let rep = run_experiment(&cfg).unwrap();
    for row in &rep.rows {
        assert_eq!(row.reports[0].p_s, 1.0);
        assert_eq!(row.reports[0].tts, 0.5);
    }
}

#[test]
fn uniform_grid_success_matches_exhaustive_count() {
    let cfg = config(vec![SolverConfig::UniformGrid { resolution: 8, tf_seconds: None }], 2, 1, 10_000, false);
    let rep = run_experiment(&cfg).unwrap();
    let row = &rep.rows[0];
    let qp = &load_instances(&cfg).unwrap()[0].as_ref().unwrap().clone();
    let mesh = Mesh::dirichlet(2, 8).unwrap();
    let hits = (0..mesh.len()).filter(|&i| success(qp.value(&mesh.point(i)), row.f_star)).count();
    let p = hits as f64 / 81.0;
    let sigma = (p * (1.0 - p) / 10_000.0).sqrt();
    assert!((row.reports[0].p_s - p).abs() <= 4.0 * sigma + 1e-12, "{} vs {p}", row.reports[0].p_s);
}

#[test]
fn refinement_never_lowers_success() {
    let cfg = config(
        vec![
            SolverConfig::UniformBox { tf_seconds: None },
            SolverConfig::UniformGrid { resolution: 3, tf_seconds: None },
            SolverConfig::Nagd { step: 0.05, iters: 20 },
        ],
        3,
        4,
        200,
        true,
    );
    let rep = run_experiment(&cfg).unwrap();
    for row in &rep.rows {
        for (r, raw) in row.reports.iter().zip(&row.raw_ps) {
            assert!(r.p_s >= *raw, "{} {} < {}", r.solver, r.p_s, raw);
        }
    }
}

#[test]
fn experiment_is_deterministic() {
    let cfg = config(
        vec![
            SolverConfig::UniformBox { tf_seconds: None },
            SolverConfig::Sgd { step: 0.01, iters: 50, noise_sigma: 0.5 },
            SolverConfig::RelaxedQhd { resolution: 2, t_final: 1.0, dt: 1e-2, s: 1e-3, tf_seconds: None },
        ],
        2,
        3,
        50,
        true,
    );
    let a = tts_summary_csv(&run_experiment(&cfg).unwrap());
    let b = tts_summary_csv(&run_experiment(&cfg).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with("instance,solver,tf_seconds,ps,tts_seconds\n"));
    assert_eq!(a.lines().count(), 1 + 3 * 3);
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(a, tts_summary_csv(&run_experiment(&other).unwrap()));
}

#[test]
fn csv_formats_infinity() {
    let rep = ExperimentReport {
        rows: vec![InstanceRow {
            instance: 0,
            f_star: -1.0,
            reports: vec![TtsReport { solver: "x".into(), t_f: 1.0, p_s: 0.0, tts: f64::INFINITY, trials: 1 }],
            raw_ps: vec![0.0],
        }],
        failures: vec![],
    };
    assert_eq!(tts_summary_csv(&rep), "instance,solver,tf_seconds,ps,tts_seconds\n0,x,1,0,inf\n");
}

#[test]
fn bad_instances_are_recorded() {
    let mut cfg = config(vec![SolverConfig::UniformBox { tf_seconds: None }], 2, 1, 5, true);
    cfg.instances = InstanceSource::Files { paths: vec!["/nonexistent/qp.json".into()] };
    assert!(load_instances(&cfg).unwrap()[0].is_err());
    let rep = run_experiment(&cfg).unwrap();
    assert_eq!((rep.rows.len(), rep.failures.len()), (0, 1));
    cfg.trials = 0;
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn derived_seeds_differ() {
    let seeds = [derive_seed(1, 0, 0), derive_seed(1, 0, 1), derive_seed(1, 1, 0), derive_seed(2, 0, 0), instance_seed(1, 0)];
    for i in 0..seeds.len() {
        for j in 0..i {
            assert_ne!(seeds[i], seeds[j]);
        }
    }
}

proptest! {
    #[test]
    fn tts_non_increasing(t_f in 1e-3f64..1e3, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tts(t_f, hi).unwrap() <= tts(t_f, lo).unwrap());
    }

    #[test]
    fn tts_formula(t_f in 1e-3f64..1e3, p in 1e-6f64..0.99) {
        let want = t_f * (0.01f64.ln() / (1.0 - p).ln()).ceil();
        prop_assert_eq!(tts(t_f, p).unwrap(), want);
    }

    #[test]
    fn refine_never_increases_f(seed in any::<u64>(), x0 in proptest::collection::vec(0.0f64..=1.0, 4)) {
        let qp = generate_qp(4, 3, seed, QpGenOptions::default()).unwrap();
        let x = local_refine(&qp, &x0, 1e-8).unwrap();
        prop_assert!(qp.value(&x) <= qp.value(&x0));
        prop_assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn generated_qp_is_sparse(d in 1usize..30, s_frac in 0.0f64..1.0, seed in any::<u64>(), count_diagonal in any::<bool>()) {
        let s = 1 + ((d - 1) as f64 * s_frac) as usize;
        let qp = generate_qp(d, s, seed, QpGenOptions { count_diagonal, dense_b: true }).unwrap();
        prop_assert!(qp.row_nonzeros(count_diagonal).iter().all(|&c| c <= s));
    }
}
