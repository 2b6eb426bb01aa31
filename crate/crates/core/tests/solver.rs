mod support;

use fdcb::arrays::{steering_matrix, Direction, UpaGeometry};
use fdcb::channels::{spherical_wave_channel, ArrayPairLayout, ChannelEstimate, ChannelMatrix};
use fdcb::codebooks::{cbf_codebook, QuantizationSpec};
use fdcb::linalg::complex_gaussian_matrix;
use fdcb::rng::stream;
use fdcb::solver::{
    coverage_residual, design_codebooks, expected_objective, solve_tx_subproblem, tx_quadratic,
    SolverConfig, TraceStep, FEASIBILITY_SLACK,
};
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;
use support::barrier_coverage_qp;

struct Instance {
    est: ChannelEstimate,
    w: Array2<Complex64>,
    a_tx: fdcb::arrays::SteeringMatrix,
    sigma_sq: f64,
}

fn random_instance(seed: u64) -> Instance {
    let mut rng = stream(seed, &[7]);
    let tx = UpaGeometry::half_wavelength(rng.random_range(1..=2), rng.random_range(2..=4));
    let rx = UpaGeometry::half_wavelength(rng.random_range(1..=2), rng.random_range(2..=4));
    let m = rng.random_range(2..=4);
    let region: Vec<Direction> = (0..m)
        .map(|_| Direction::new(rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5)).unwrap())
        .collect();
    let h = complex_gaussian_matrix(&mut rng, rx.num_elements(), tx.num_elements(), 1.0);
    let w = Array2::from_shape_fn((rx.num_elements(), m), |_| {
        Complex64::from_polar(rng.random_range(0.3..1.0), rng.random_range(0.0..6.3))
    });
    let eps = [0.01, 0.1][rng.random_range(0..2)];
    let sigma_sq = 10f64.powf(rng.random_range(-2.0..-0.5));
    Instance {
        est: ChannelEstimate::new(ChannelMatrix::new(h), eps).unwrap(),
        w,
        a_tx: steering_matrix(&tx, &region).unwrap(),
        sigma_sq,
    }
}

#[test]
fn subproblem_matches_interior_point_reference() {
    let cfg = SolverConfig::default();
    for seed in 0..6 {
        let inst = random_instance(seed);
        let a = inst.a_tx.entries();
        let out = solve_tx_subproblem(
            inst.w.view(),
            &inst.est,
            &inst.a_tx,
            inst.sigma_sq,
            a.view(),
            &cfg,
        )
        .unwrap();
        let q = tx_quadratic(inst.w.view(), &inst.est).unwrap();
        let (_, reference) = barrier_coverage_qp(&q, a, inst.sigma_sq);
        let rel = (out.objective - reference) / reference;
        assert!(out.is_feasible(), "seed {seed}");
        assert!(
            rel.abs() < 5e-3,
            "seed {seed}: {} vs {reference}",
            out.objective
        );
    }
}

#[test]
fn reference_solver_is_feasible_and_beats_matched_filter() {
    let inst = random_instance(42);
    let a = inst.a_tx.entries();
    let q = tx_quadratic(inst.w.view(), &inst.est).unwrap();
    let (f, obj) = barrier_coverage_qp(&q, a, inst.sigma_sq);
    let (n, m) = a.dim();
    let res = coverage_residual(a.view(), f.view()) / ((n * n * m) as f64);
    assert!(res <= inst.sigma_sq * (1.0 + 1e-9));
    assert!(f.iter().all(|z| z.norm() <= 1.0));
    let mf: f64 = (0..m)
        .map(|i| {
            let col = a.column(i);
            col.iter()
                .zip(q.dot(&col).iter())
                .map(|(x, y)| (x.conj() * y).re)
                .sum::<f64>()
        })
        .sum();
    assert!(obj < mf);
}

#[test]
fn design_on_small_reference_layout() {
    let g = UpaGeometry::half_wavelength(4, 4);
    let layout = ArrayPairLayout::stacked(g.clone(), g.clone(), 5.0).unwrap();
    let h = spherical_wave_channel(&layout).unwrap();
    let region = fdcb::arrays::grid_region((-45.0, 45.0, 45.0), (-15.0, 15.0, 15.0)).unwrap();
    let a = steering_matrix(&g, &region).unwrap();
    let spec = QuantizationSpec::uniform(6).unwrap();
    let est = ChannelEstimate::perfect(h);
    let cfg = SolverConfig::with_sigma_sq(0.01);
    let r = design_codebooks(&est, &a, &a, &spec, &cfg).unwrap();
    assert!(r.coverage_residual_tx <= 0.01 + FEASIBILITY_SLACK);
    assert!(r.coverage_residual_rx <= 0.01 + FEASIBILITY_SLACK);
    let steps: Vec<TraceStep> = r.objective_trace.iter().map(|e| e.step).collect();
    assert_eq!(
        steps,
        [
            TraceStep::Initial,
            TraceStep::SolveTx,
            TraceStep::ProjectTx,
            TraceStep::SolveRx,
            TraceStep::ProjectRx
        ]
    );
    let f = r.tx_codebook.matrix();
    let w = r.rx_codebook.matrix();
    let last = expected_objective(f.view(), w.view(), &est).unwrap();
    assert!((last - r.final_objective()).abs() <= 1e-9 * last.max(1e-30));
    let cbf = cbf_codebook(&g, &region, &spec).unwrap();
    let base = expected_objective(cbf.matrix().view(), cbf.matrix().view(), &est).unwrap();
    assert!(last < base);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn subproblem_is_feasible_and_not_worse_than_warm_start(seed in 0u64..10_000) {
        let inst = random_instance(seed);
        let a = inst.a_tx.entries();
        let cfg = SolverConfig::default();
        let out = solve_tx_subproblem(inst.w.view(), &inst.est, &inst.a_tx, inst.sigma_sq, a.view(), &cfg).unwrap();
        prop_assert!(out.is_feasible());
        let q = tx_quadratic(inst.w.view(), &inst.est).unwrap();
        let warm: f64 = a.columns().into_iter()
            .map(|col| col.iter().zip(q.dot(&col).iter()).map(|(x, y)| (x.conj() * y).re).sum::<f64>())
            .sum();
        prop_assert!(out.objective <= warm * (1.0 + 1e-9));
    }

    #[test]
    fn expected_objective_is_nonnegative_and_quadratic(seed in 0u64..10_000, s in 0.1f64..3.0) {
        let inst = random_instance(seed);
        let f = inst.a_tx.entries();
        let base = expected_objective(f.view(), inst.w.view(), &inst.est).unwrap();
        prop_assert!(base >= 0.0);
        let scaled = f.mapv(|z| z * s);
        let v = expected_objective(scaled.view(), inst.w.view(), &inst.est).unwrap();
        prop_assert!((v - s * s * base).abs() <= 1e-9 * v.max(base));
    }
}
