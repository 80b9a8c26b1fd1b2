use nalgebra::DMatrix;
use nalgebra_sparse::convert::serial::convert_csr_dense;
use nalgebra_sparse::CsrMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qhd::mesh::*;
use qhd::objectives::{levy2, FnObjective};
use qhd::spectral::lowest_eigenpairs_op;
use qhd::Error;

fn square() -> FnObjective {
    FnObjective::new(1, |x| x[0] * x[0], |x| vec![2.0 * x[0]])
}

#[test]
fn fdm_laplacian_1d_r2() {
    let m = Mesh::dirichlet(1, 2).unwrap();
    let ops = build_fdm_operators(&m).unwrap();
    let l = convert_csr_dense(&ops.laplacian);
    let want = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0]) * 4.0;
    assert_eq!(l, want);
    assert_eq!(ops.position[0].values(), &[0.0, 0.5, 1.0]);
}

#[test]
fn unit_square_adjacency_counts_each_edge_twice() {
    // Four edges of the square, stored symmetrically: 2·d·2^{d−1} = 8.
    let a = lattice_adjacency(1, 2);
    assert_eq!(a.nnz(), 8);
    assert!(a.values().iter().all(|&v| v == 1.0));
}

#[test]
fn fdm_needs_dirichlet_and_positive_sizes() {
    assert!(build_fdm_operators(&Mesh::periodic(1, 4).unwrap()).is_err());
    assert!(Mesh::dirichlet(0, 2).is_err());
    assert!(Mesh::dirichlet(2, 0).is_err());
}

#[test]
fn node_counts_match_boundary() {
    let d = Mesh::dirichlet(2, 5).unwrap();
    let p = Mesh::periodic(2, 5).unwrap();
    assert_eq!((d.nodes_per_edge(), d.len()), (6, 36));
    assert_eq!((p.nodes_per_edge(), p.len()), (5, 25));
    assert_eq!(d.coordinate(5), 1.0);
    assert_eq!(p.coordinate(4), 0.8);
}

#[test]
fn row_major_axis_zero_slowest() {
    let m = Mesh::dirichlet(2, 2).unwrap();
    assert_eq!(m.multi_index(1), vec![0, 1]);
    assert_eq!(m.multi_index(3), vec![1, 0]);
    assert_eq!(m.flat_index(&[2, 1]), 7);
    assert_eq!(m.point(7), vec![1.0, 0.5]);
}

#[test]
fn discretize_examples() {
    let m = Mesh::dirichlet(1, 2).unwrap();
    assert_eq!(discretize_objective(&m, &square()).unwrap().values(), &[0.0, 0.25, 1.0]);
    let half = FnObjective::new(1, |x| 0.5 * x[0] * x[0], |x| vec![x[0]]);
    assert_eq!(discretize_objective(&m, &half).unwrap().values(), &[0.0, 0.125, 0.5]);
}

#[test]
fn discretized_levy_vanishes_at_minimizer_node() {
    // (1 + 10)/20 = 0.55 is a node of the periodic N = 20 mesh.
    let m = Mesh::periodic(2, 20).unwrap();
    let f = levy2();
    let op = discretize_objective(&m, &f).unwrap();
    let node = m.flat_index(&[11, 11]);
    assert!(op.values()[node].abs() < 1e-12);
}

#[test]
fn discretize_reports_bad_node() {
    let m = Mesh::dirichlet(1, 4).unwrap();
    let f = FnObjective::new(1, |x| if x[0] == 0.5 { f64::NAN } else { 0.0 }, |_| vec![0.0]);
    match discretize_objective(&m, &f) {
        Err(Error::Evaluation { node, .. }) => assert_eq!(node, 2),
        other => panic!("expected evaluation error, got {other:?}"),
    }
}

#[test]
fn uniform_examples() {
    let m = Mesh::dirichlet(1, 2).unwrap();
    let u = uniform_state(&m);
    for c in u.amplitudes() {
        assert!((c.re - 1.0 / 3f64.sqrt()).abs() < 1e-15 && c.im == 0.0);
    }
    let p = uniform_state(&Mesh::periodic(2, 4).unwrap());
    assert_eq!(p.amplitudes().len(), 16);
    assert!(p.amplitudes().iter().all(|c| (c.re - 0.25).abs() < 1e-15));
}

#[test]
fn gaussian_is_symmetric_and_real() {
    let m = Mesh::dirichlet(1, 40).unwrap();
    let g = gaussian_state(&m, &[0.5], 1.0).unwrap();
    let a = g.amplitudes();
    for j in 0..=40 {
        assert!((a[j].re - a[40 - j].re).abs() < 1e-14);
        assert_eq!(a[j].im, 0.0);
    }
}

#[test]
fn gaussian_unit_variance_on_wide_box() {
    // A box of width 16 mapped onto [0,1]: variance 1 becomes 1/256.
    let w = 16.0;
    let m = Mesh::periodic(1, 512).unwrap();
    let g = gaussian_state(&m, &[0.5], 1.0 / (w * w)).unwrap();
    let rho = g.density();
    let var: f64 = rho.iter().enumerate().map(|(j, p)| p * (w * (m.coordinate(j) - 0.5)).powi(2)).sum();
    assert!((var - 1.0).abs() <= 0.02, "variance {var}");
}

#[test]
fn wide_gaussian_approaches_uniform() {
    let m = Mesh::dirichlet(2, 10).unwrap();
    let g = gaussian_state(&m, &[0.3, 0.6], 1e6).unwrap();
    let u = uniform_state(&m);
    let sup = g.amplitudes().iter().zip(u.amplitudes()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(sup < 1e-3);
}

#[test]
fn gaussian_rejects_bad_input() {
    let m = Mesh::dirichlet(1, 4).unwrap();
    assert!(gaussian_state(&m, &[1.5], 0.1).is_err());
    assert!(gaussian_state(&m, &[0.5], 0.0).is_err());
}

#[test]
fn expectation_examples() {
    let m = Mesh::dirichlet(1, 2).unwrap();
    let ops = build_fdm_operators(&m).unwrap();
    let u = uniform_state(&m);
    assert!((expectation(&u, &ops.position[0]).unwrap() - 0.5).abs() < 1e-15);
    let pm = WaveFunction::point_mass(m, 2).unwrap();
    assert_eq!(expectation(&pm, &ops.position[0]).unwrap(), 1.0);
    let f = discretize_objective(&m, &square()).unwrap();
    assert!((expectation(&u, &f).unwrap() - 5.0 / 12.0).abs() < 1e-15);
    let other = uniform_state(&Mesh::dirichlet(1, 3).unwrap());
    assert!(expectation(&other, &f).is_err());
}

#[test]
fn sampling_point_mass_and_determinism() {
    let m = Mesh::dirichlet(2, 3).unwrap();
    let pm = WaveFunction::point_mass(m, 6).unwrap();
    let s = sample_positions(&pm, 50, 1).unwrap();
    assert!(s.iter().all(|p| *p == m.point(6)));
    let u = uniform_state(&m);
    assert_eq!(sample_positions(&u, 100, 9).unwrap(), sample_positions(&u, 100, 9).unwrap());
    assert!(sample_positions(&u, 0, 9).is_err());
}

#[test]
fn uniform_sampling_frequencies() {
    let m = Mesh::dirichlet(1, 2).unwrap();
    let shots = 100_000;
    let idx = sample_indices(&uniform_state(&m), shots, 3).unwrap();
    let p = 1.0 / 3.0;
    let sigma = (shots as f64 * p * (1.0 - p)).sqrt();
    for j in 0..3 {
        let c = idx.iter().filter(|&&i| i == j).count() as f64;
        assert!((c - shots as f64 * p).abs() < 5.0 * sigma);
    }
}

#[test]
fn success_probability_examples() {
    let m = Mesh::dirichlet(1, 100).unwrap();
    let pm = WaveFunction::point_mass(m, 50).unwrap();
    assert_eq!(success_probability(&pm, &[0.5], 0.1).unwrap(), 1.0);
    // Nodes j/100 with |j/100 − 0.5| < 0.1 are j = 41..=59.
    let count = (0..=100).filter(|j| (*j as i64 - 50).abs() < 10).count();
    assert_eq!(count, 19);
    let p = success_probability(&uniform_state(&m), &[0.5], 0.1).unwrap();
    assert!((p - count as f64 / 101.0).abs() < 1e-12);
    assert!((p - 0.188).abs() < 1e-3);
    let m2 = Mesh::dirichlet(2, 7).unwrap();
    assert!((success_probability(&uniform_state(&m2), &[0.2, 0.9], 2f64.sqrt() + 1e-9).unwrap() - 1.0).abs() < 1e-12);
    assert!(success_probability(&pm, &[0.5], 0.0).is_err());
}

#[test]
fn radius_boundary_is_excluded() {
    let m = Mesh::dirichlet(1, 4).unwrap();
    let pm = WaveFunction::point_mass(m, 1).unwrap();
    assert_eq!(success_probability(&pm, &[0.5], 0.25).unwrap(), 0.0);
}

#[test]
fn laplacian_is_symmetric_negative_semidefinite() {
    for d in 1..=2 {
        for r in 1..=16 {
            let ops = build_fdm_operators(&Mesh::dirichlet(d, r).unwrap()).unwrap();
            let l = convert_csr_dense(&ops.laplacian);
            assert_eq!(l, l.transpose());
            let ev = l.symmetric_eigenvalues();
            assert!(ev.iter().all(|&e| e <= 1e-9 * (r * r) as f64), "d={d} r={r}");
        }
    }
}

fn interior(op: &CsrMatrix<f64>, mesh: &Mesh) -> CsrMatrix<f64> {
    let r = mesh.cells_per_edge();
    let keep: Vec<usize> = (0..mesh.len()).filter(|&f| mesh.multi_index(f).iter().all(|&j| j > 0 && j < r)).collect();
    let dense = convert_csr_dense(op);
    let sub = DMatrix::from_fn(keep.len(), keep.len(), |i, j| dense[(keep[i], keep[j])]);
    CsrMatrix::from(&sub)
}

#[test]
fn kinetic_spectrum_converges_to_box_levels() {
    // The Dirichlet condition pins the boundary nodes to zero, so the
    // kinetic operator acts on the interior unknowns.
    let m = Mesh::dirichlet(2, 64).unwrap();
    let ops = build_fdm_operators(&m).unwrap();
    let mut k = interior(&ops.laplacian, &m);
    k.values_mut().iter_mut().for_each(|v| *v *= -0.5);
    let eig = lowest_eigenpairs_op(&k, 2).unwrap();
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((eig.eigenvalues[0] / pi2 - 1.0).abs() <= 0.02);
    assert!((eig.eigenvalues[1] / (2.5 * pi2) - 1.0).abs() <= 0.02);
}

#[test]
fn to_dirichlet_copies_and_wraps() {
    let p = Mesh::periodic(1, 4).unwrap();
    let amps: Vec<Complex64> = (1..=4).map(|v| Complex64::new(v as f64, 0.0)).collect();
    let psi = WaveFunction::from_amplitudes(p, amps).unwrap();
    let d = psi.to_dirichlet().unwrap();
    assert_eq!(d.mesh().nodes_per_edge(), 5);
    let a = d.amplitudes();
    assert_eq!(a[0], a[4]);
    assert!((d.norm_sqr() - 1.0).abs() < 1e-14);
}

#[test]
fn wavefunction_json_round_trip() {
    let m = Mesh::periodic(2, 3).unwrap();
    let g = gaussian_state(&m, &[0.2, 0.7], 0.05).unwrap();
    let s = serde_json::to_string(&g).unwrap();
    let back: WaveFunction = serde_json::from_str(&s).unwrap();
    assert_eq!(back, g);
}

#[test]
fn mismatched_diagonal_rejected() {
    let m = Mesh::dirichlet(1, 2).unwrap();
    assert!(DiagonalOperator::new(m, vec![0.0; 2]).is_err());
    assert!(DiagonalOperator::new(m, vec![0.0, f64::INFINITY, 0.0]).is_err());
}

proptest! {
    #[test]
    fn constructors_are_normalized(
        d in 1usize..=3, r in 1usize..=6,
        c in proptest::collection::vec(0.0f64..=1.0, 3),
        var in 1e-3f64..10.0,
        re in proptest::collection::vec(-1.0f64..1.0, 1..=1),
    ) {
        let m = Mesh::dirichlet(d, r).unwrap();
        prop_assert!((uniform_state(&m).norm_sqr() - 1.0).abs() <= 1e-10);
        let g = gaussian_state(&m, &c[..d], var).unwrap();
        prop_assert!((g.norm_sqr() - 1.0).abs() <= 1e-10);
        let amps: Vec<Complex64> = (0..m.len()).map(|i| Complex64::new(re[0] + i as f64, 1.0)).collect();
        let w = WaveFunction::from_amplitudes(m, amps).unwrap();
        prop_assert!((w.norm_sqr() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn coordinates_in_unit_box(d in 1usize..=3, r in 1usize..=8, periodic in any::<bool>()) {
        let m = if periodic { Mesh::periodic(d, r) } else { Mesh::dirichlet(d, r) }.unwrap();
        for f in 0..m.len() {
            prop_assert!(m.point(f).iter().all(|x| (0.0..=1.0).contains(x)));
            prop_assert_eq!(m.flat_index(&m.multi_index(f)), f);
        }
    }

    #[test]
    fn uniform_position_expectation_is_half(d in 1usize..=3, r in 1usize..=8) {
        let m = Mesh::dirichlet(d, r).unwrap();
        let ops = build_fdm_operators(&m).unwrap();
        let u = uniform_state(&m);
        for k in 0..d {
            prop_assert!((expectation(&u, &ops.position[k]).unwrap() - 0.5).abs() <= 1e-14);
        }
    }

    #[test]
    fn success_probability_in_unit_interval(seed in any::<u64>(), radius in 1e-3f64..2.0) {
        let m = Mesh::dirichlet(2, 5).unwrap();
        let amps: Vec<Complex64> = (0..m.len()).map(|i| Complex64::new(((seed >> (i % 60)) & 7) as f64 + 0.1, 0.0)).collect();
        let psi = WaveFunction::from_amplitudes(m, amps).unwrap();
        let p = success_probability(&psi, &[0.4, 0.6], radius).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}
