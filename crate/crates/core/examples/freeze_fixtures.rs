//! Regenerates the frozen fixtures under `fixtures/`.
//!
//! Run with `cargo run -p qnbench-core --example freeze_fixtures`. The regression
//! tests compare against the files this writes, so only rerun it deliberately.

use std::path::Path;

use qnbench::bench::{landscape_scan, random_directions};
use qnbench::optimizers::{run, Hyper, Method, MethodOptions, StopRule};
use qnbench::problems::{brute_force, generate_problem};
use qnbench::{AnsatzConfig, Evaluator, ShotMode};
use serde_json::json;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    std::fs::create_dir_all(&dir).unwrap();
    let g3 = generate_problem(3, 32, 1.0, (1.0, 1.0)).unwrap();
    let g5 = generate_problem(5, 32, 0.7, (10.0, 100.0)).unwrap();
    std::fs::write(dir.join("graph_n3_s32.txt"), g3.to_text()).unwrap();
    std::fs::write(dir.join("graph_n5_s32.txt"), g5.to_text()).unwrap();

    let exact = |g: &qnbench::WeightedGraph, p: usize| {
        Evaluator::new(g.clone(), AnsatzConfig::new(g.n_vertices(), p, ShotMode::Exact).unwrap(), 0).unwrap()
    };
    let theta5 = [0.31, -0.72];
    let mut e5 = exact(&g5, 1);
    let value5 = e5.exact_expectation(&theta5);
    let grad5 = e5.gradient_flat(&theta5);

    let theta3 = [0.4, -1.1];
    let bfgs = run(Method::Bfgs, &mut exact(&g3, 1), &theta3, &Hyper::defaults(Method::Bfgs), &MethodOptions::default(),
        &StopRule::max_iterations(1), 0);
    let qng = run(Method::QngBlock, &mut exact(&g3, 1), &theta3, &Hyper::defaults(Method::QngBlock), &MethodOptions::default(),
        &StopRule::max_iterations(1), 0);
    let qbang = run(Method::QBang, &mut exact(&g3, 1), &theta3, &Hyper::defaults(Method::QBang), &MethodOptions::default(),
        &StopRule::max_iterations(5), 0);

    let (d1, d2) = random_directions(2, 32);
    let grid = landscape_scan(&e5, &theta5, &d1, &d2, 300, 1.0);

    let golden = json!({
        "n3_truth": { "optimal_value": brute_force(&g3).unwrap().optimal_value },
        "n5_truth": {
            "optimal_value": brute_force(&g5).unwrap().optimal_value,
            "optimal_assignments": brute_force(&g5).unwrap().optimal_assignments.iter().map(ToString::to_string).collect::<Vec<_>>(),
        },
        "n5_theta": theta5,
        "n5_expectation": value5,
        "n5_gradient": grad5,
        "n3_theta": theta3,
        "n3_bfgs_step1": { "theta": bfgs.history[0].theta, "backtracks": bfgs.diagnostics.backtracks },
        "n3_qng_block_step1": qng.history[0].theta,
        "n3_qbang_trajectory": qbang.history.iter().map(|r| r.theta.clone()).collect::<Vec<_>>(),
        "n5_landscape": { "direction_seed": 32, "grid": 300, "range": 1.0, "checksum": grid.checksum() },
    });
    std::fs::write(dir.join("golden.json"), serde_json::to_string_pretty(&golden).unwrap() + "\n").unwrap();
}
