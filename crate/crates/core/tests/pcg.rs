//! PCG behaviour on the preconditioner test problems.

use sgn_core::krylov::{pcg, PcgOptions, PcgReport};
use sgn_core::operators::{coeffs_for, solve_a, CoeffVariant, ConstraintOperator};
use sgn_core::scenarios::{square_wave_problem, test_problem_1d, LinearProblem};
use sgn_core::{PeriodicGrid, Real, VectorField};

fn solve<T: Real>(pr: &LinearProblem<T>, variant: CoeffVariant, tol: T) -> (VectorField<T>, PcgReport<T>) {
    let c = coeffs_for(variant, &pr.eta, &pr.bathy).unwrap();
    let op = ConstraintOperator::from_depth(&pr.eta, &pr.bathy).unwrap();
    let (xs, _) =
        pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, None, &PcgOptions::new(tol * T::lit(1e-2), 2000)).unwrap();
    let opts = PcgOptions::new(tol, 1000).with_reference(&xs).with_kappa(c.kappa_ub);
    pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, None, &opts).unwrap()
}

#[test]
fn error_stays_below_the_condition_bound() {
    for n in [64, 256] {
        let g = PeriodicGrid::<f64>::new_1d(n, 1.0).unwrap();
        for (eta0, h0) in [(1.0, 1.0), (4.0, 1.0), (1.0, 4.0)] {
            let (_, rep) = solve(&test_problem_1d(eta0, h0, &g).unwrap(), CoeffVariant::Variable, 1e-12);
            assert!(rep.converged && rep.iterations <= 200, "n={n} ({eta0},{h0}): {} its", rep.iterations);
            assert_eq!(rep.bound_history.len(), rep.eps_history.len());
            for (k, (e, b)) in rep.eps_history.iter().zip(&rep.bound_history).enumerate() {
                assert!(e <= b, "n={n} ({eta0},{h0}) k={k}: {e} > {b}");
            }
        }
    }
}

#[test]
fn iteration_count_is_mesh_independent() {
    let its: Vec<usize> = [64, 512, 2048]
        .iter()
        .map(|&n| {
            let g = PeriodicGrid::<f64>::new_1d(n, 1.0).unwrap();
            let (_, rep) = solve(&test_problem_1d(1.0, 1.0, &g).unwrap(), CoeffVariant::Variable, 1e-9);
            rep.iterations_to(1e-8).unwrap()
        })
        .collect();
    let spread = its.iter().max().unwrap() - its.iter().min().unwrap();
    assert!(spread <= 2, "{its:?}");
}

#[test]
fn pointwise_coefficients_beat_separate_maxima_on_square_wave() {
    let g = PeriodicGrid::<f64>::new_1d(128, 1.0).unwrap();
    let pr = square_wave_problem(0.08, &g).unwrap();
    let var = solve(&pr, CoeffVariant::Variable, 1e-9).1.iterations_to(1e-8).unwrap();
    let simp = solve(&pr, CoeffVariant::Simplified, 1e-9).1.iterations_to(1e-8).unwrap();
    let ratio = simp as f64 / var as f64;
    assert!((1.2..=2.0).contains(&ratio), "{var} vs {simp}");
}

#[test]
fn single_precision_solve_matches_double() {
    let g64 = PeriodicGrid::<f64>::new_1d(64, 1.0).unwrap();
    let g32 = PeriodicGrid::<f32>::new_1d(64, 1.0).unwrap();
    let (x64, _) = solve(&test_problem_1d(1.0, 1.0, &g64).unwrap(), CoeffVariant::Variable, 1e-12);
    let pr32 = test_problem_1d(1.0f32, 1.0, &g32).unwrap();
    let c = coeffs_for(CoeffVariant::Variable, &pr32.eta, &pr32.bathy).unwrap();
    let op = ConstraintOperator::from_depth(&pr32.eta, &pr32.bathy).unwrap();
    let (x32, rep) = pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr32.rhs, None, &PcgOptions::new(1e-5, 500)).unwrap();
    assert!(rep.converged);
    let scale = x64.inf_norm();
    for (a, b) in x64.component(0).values().iter().zip(x32.component(0).values()) {
        assert!((a - *b as f64).abs() < 1e-3 * scale);
    }
}

#[test]
fn warm_start_reaches_the_same_solution_faster() {
    let g = PeriodicGrid::<f64>::new_1d(128, 1.0).unwrap();
    let pr = test_problem_1d(1.0, 1.0, &g).unwrap();
    let c = coeffs_for(CoeffVariant::Variable, &pr.eta, &pr.bathy).unwrap();
    let op = ConstraintOperator::from_depth(&pr.eta, &pr.bathy).unwrap();
    let opts = PcgOptions::new(1e-12, 500);
    let (cold, cold_rep) = pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, None, &opts).unwrap();
    let guess = cold.scale(1.0 + 1e-6);
    let (warm, warm_rep) = pcg(|v| op.apply(v), |r| solve_a(&c, r), &pr.rhs, Some(&guess), &opts).unwrap();
    assert!(warm_rep.iterations < cold_rep.iterations);
    assert!((&warm - &cold).inf_norm() < 1e-10 * cold.inf_norm());
}
