//! Desk-scale end-to-end run: a random degree 3..=36 model, 20 000 orbit
//! points with 5% noise, progress every 25 iterations.
//!
//! cargo run --release -p lrfmp --example desk_scale -- [global_evals] [local_evals] [iterations]

use std::time::Instant;

use lrfmp::evaluation::{evaluate_approx, evaluate_model, rrmse};
use lrfmp::forward::{generate_dataset, synthetic_orbit, CoefficientModel, NoiseSpec};
use lrfmp::optimize::Budget;
use lrfmp::solver::{iterate, DictionarySpec, SolverConfig, SolverState};
use lrfmp::sphere::driscoll_healy;

fn arg(i: usize, default: usize) -> usize {
    std::env::args().nth(i).map(|s| s.parse().expect("integer argument")).unwrap_or(default)
}

fn main() -> lrfmp::Result<()> {
    let config = SolverConfig {
        lambda: 1e-8,
        max_iterations: arg(3, 500),
        rde_threshold: 0.05,
        dictionary: DictionarySpec { sh_max_degree: 36, ..DictionarySpec::default() },
        global_budget: Budget { max_evals: arg(1, 600), ..Budget::default() },
        local_budget: Budget { max_evals: arg(2, 200), ..Budget::default() },
        ..SolverConfig::default()
    };
    let model = CoefficientModel::random_kaula(3, 36, 2024);
    let orbit = synthetic_orbit(20_000, 160.0, 89.0, 1.075, 1.082);
    let ds = generate_dataset(&model, &orbit, NoiseSpec { level: 0.05, seed: 7 })?;
    let grid = driscoll_healy(181, 361)?;
    let reference = evaluate_model(&model, &grid);

    let mut state = SolverState::new(&ds, CoefficientModel::default(), config.dictionary.build()?)?;
    let start = Instant::now();
    let report = |state: &SolverState| -> lrfmp::Result<()> {
        let f = evaluate_approx(state.approximation(), &grid);
        let mut counts = [0usize; 3];
        for row in state.history() {
            counts[match row.element.type_tag() {
                "SH" => 0,
                "APK" => 1,
                _ => 2,
            }] += 1;
        }
        println!(
            "{:4} RDE {:.4} RRMSE {:.4} SH/APK/APW {:?} {:.1}s",
            state.iterations(),
            state.rde()?,
            rrmse(&f, &reference)?,
            counts,
            start.elapsed().as_secs_f64()
        );
        Ok(())
    };
    while state.rde()? > config.rde_threshold && state.iterations() < config.max_iterations {
        if let Some(status) = iterate(&mut state, &config)? {
            println!("stopped: {status:?}");
            break;
        }
        if state.iterations() % 25 == 0 {
            report(&state)?;
        }
    }
    report(&state)
}
