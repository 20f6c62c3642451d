//! Regression checks against the frozen files in `fixtures/`.

mod common;

use common::*;
use qnbench::bench::{landscape_scan, random_directions};
use qnbench::optimizers::{run, Hyper, Method, MethodOptions, StopRule};
use qnbench::problems::{brute_force, generate_problem};

#[test]
fn generator_reproduces_frozen_graphs() {
    let g3 = generate_problem(3, 32, 1.0, (1.0, 1.0)).unwrap();
    let g5 = generate_problem(5, 32, 0.7, (10.0, 100.0)).unwrap();
    assert_eq!(g3.to_text(), std::fs::read_to_string(fixture_path("graph_n3_s32.txt")).unwrap());
    assert_eq!(g5.to_text(), std::fs::read_to_string(fixture_path("graph_n5_s32.txt")).unwrap());
    assert_eq!(triangle(), g3);
    assert_eq!(five_node(), g5);
}

#[test]
fn ground_truths_match() {
    let gold = golden();
    assert_eq!(brute_force(&triangle()).unwrap().optimal_value, gold["n3_truth"]["optimal_value"].as_f64().unwrap());
    let t5 = brute_force(&five_node()).unwrap();
    assert_eq!(t5.optimal_value, gold["n5_truth"]["optimal_value"].as_f64().unwrap());
    let names: Vec<String> = t5.optimal_assignments.iter().map(ToString::to_string).collect();
    assert_eq!(serde_json::json!(names), gold["n5_truth"]["optimal_assignments"]);
}

#[test]
fn five_node_expectation_and_gradient() {
    let gold = golden();
    let theta = floats(&gold["n5_theta"]);
    let mut e = exact(&five_node(), 1);
    assert!(close(&[e.exact_expectation(&theta)], &[gold["n5_expectation"].as_f64().unwrap()], 1e-12));
    assert!(close(&e.gradient_flat(&theta), &floats(&gold["n5_gradient"]), 1e-12));
}

#[test]
fn first_steps_and_trajectories() {
    let gold = golden();
    let theta = floats(&gold["n3_theta"]);
    let one = StopRule::max_iterations(1);
    let opts = MethodOptions::default();
    let bfgs = run(Method::Bfgs, &mut exact(&triangle(), 1), &theta, &Hyper::defaults(Method::Bfgs), &opts, &one, 0);
    assert!(close(&bfgs.history[0].theta, &floats(&gold["n3_bfgs_step1"]["theta"]), 1e-12));
    assert_eq!(bfgs.diagnostics.backtracks as u64, gold["n3_bfgs_step1"]["backtracks"].as_u64().unwrap());

    let qng = run(Method::QngBlock, &mut exact(&triangle(), 1), &theta, &Hyper::defaults(Method::QngBlock), &opts, &one, 0);
    assert!(close(&qng.history[0].theta, &floats(&gold["n3_qng_block_step1"]), 1e-12));

    let qbang = run(Method::QBang, &mut exact(&triangle(), 1), &theta, &Hyper::defaults(Method::QBang), &opts,
        &StopRule::max_iterations(5), 0);
    let want = gold["n3_qbang_trajectory"].as_array().unwrap();
    assert_eq!(qbang.history.len(), want.len());
    for (rec, w) in qbang.history.iter().zip(want) {
        assert!(close(&rec.theta, &floats(w), 1e-12));
    }
}

#[test]
fn five_node_landscape_checksum() {
    let gold = &golden()["n5_landscape"];
    let theta = floats(&golden()["n5_theta"]);
    let (d1, d2) = random_directions(2, gold["direction_seed"].as_u64().unwrap());
    let grid = landscape_scan(&exact(&five_node(), 1), &theta, &d1, &d2, gold["grid"].as_u64().unwrap() as usize,
        gold["range"].as_f64().unwrap());
    assert_eq!(grid.values.len(), 300);
    assert_eq!(grid.checksum(), gold["checksum"].as_str().unwrap());
}
