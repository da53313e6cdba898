use std::fs;

use lrfmp::evaluation::{evaluate_approx, evaluate_model, rrmse};
use lrfmp::forward::{generate_dataset, synthetic_orbit, CoefficientModel, NoiseSpec};
use lrfmp::io::{read_coefficients, read_dataset, read_expansion, write_coefficients, write_dataset, write_expansion, CoefficientFormat};
use lrfmp::optimize::Budget;
use lrfmp::solver::{solve, solve_with, DictionarySpec, SolverConfig, Status};
use lrfmp::sphere::driscoll_healy;

fn config(iterations: usize) -> SolverConfig {
    SolverConfig {
        lambda: 1e-7,
        max_iterations: iterations,
        rde_threshold: 0.05,
        dictionary: DictionarySpec { sh_max_degree: 12, seed_gamma: 4, ..DictionarySpec::default() },
        global_budget: Budget { max_evals: 200, ..Budget::default() },
        local_budget: Budget { max_evals: 60, ..Budget::default() },
        ..SolverConfig::default()
    }
}

#[test]
fn files_round_trip_through_a_solve() {
    let dir = tempfile::tempdir().unwrap();
    let model = CoefficientModel::random_kaula(3, 10, 21);
    write_coefficients(&model, &dir.path().join("m.txt")).unwrap();
    assert_eq!(read_coefficients(&dir.path().join("m.txt"), CoefficientFormat::Simple).unwrap(), model);

    let ds = generate_dataset(&model, &synthetic_orbit(1500, 12.0, 89.0, 1.075, 1.082), NoiseSpec { level: 0.02, seed: 5 }).unwrap();
    write_dataset(&ds, &dir.path().join("d.csv")).unwrap();
    let back = read_dataset(&dir.path().join("d.csv")).unwrap();
    assert_eq!(back, ds);

    let out = solve(&config(40), &back).unwrap();
    write_expansion(&out.approximation, &out.history, &dir.path().join("e.json")).unwrap();
    let (a, history) = read_expansion(&dir.path().join("e.json")).unwrap();
    assert_eq!(a, out.approximation);
    assert_eq!(history, out.history);

    let grid = driscoll_healy(37, 73).unwrap();
    let reference = evaluate_model(&model, &grid);
    assert_eq!(evaluate_approx(&a, &grid), evaluate_approx(&out.approximation, &grid));
    let err = rrmse(&evaluate_approx(&a, &grid), &reference).unwrap();
    assert!(err < 1.0, "RRMSE {err}");
}

#[test]
fn gfc_and_simple_models_agree() {
    let dir = tempfile::tempdir().unwrap();
    let gfc = dir.path().join("m.gfc");
    fs::write(
        &gfc,
        "product_type gravity_field\nmax_degree 4\nend_of_head ====\n\
         gfc 3 0 0.5D+00 0.0 0 0\ngfc 3 2 -1.25e-1 2.5e-1 0 0\ngfc 4 1 1.0 -2.0 0 0\n",
    )
    .unwrap();
    let m = read_coefficients(&gfc, CoefficientFormat::Gfc).unwrap();
    let want = CoefficientModel::from_entries([(3, 0, 0.5), (3, -2, -0.125), (3, 2, 0.25), (4, -1, 1.0), (4, 1, -2.0)]).unwrap();
    assert_eq!(m.coeffs, want.coeffs);
}

#[test]
fn warm_start_with_the_exact_model_needs_no_iterations() {
    let model = CoefficientModel::random_kaula(3, 8, 2);
    let ds = generate_dataset(&model, &synthetic_orbit(800, 8.0, 89.0, 1.075, 1.082), NoiseSpec { level: 0.0, seed: 0 }).unwrap();
    let c = config(10);
    let out = solve_with(&c, &ds, c.dictionary.build().unwrap(), model.clone()).unwrap();
    assert_eq!(out.status, Status::Converged);
    assert!(out.history.is_empty());
    assert!(out.final_rde < 1e-12);
    let grid = driscoll_healy(19, 37).unwrap();
    assert!(rrmse(&evaluate_approx(&out.approximation, &grid), &evaluate_model(&model, &grid)).unwrap() < 1e-13);
}
