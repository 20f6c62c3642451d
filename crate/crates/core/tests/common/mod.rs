#![allow(dead_code)]

use std::path::PathBuf;

use qnbench::problems::WeightedGraph;
use qnbench::{AnsatzConfig, Evaluator, ShotMode};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn load_graph(name: &str) -> WeightedGraph {
    WeightedGraph::from_text(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

pub fn triangle() -> WeightedGraph {
    load_graph("graph_n3_s32.txt")
}

pub fn five_node() -> WeightedGraph {
    load_graph("graph_n5_s32.txt")
}

pub fn golden() -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(fixture_path("golden.json")).unwrap()).unwrap()
}

pub fn floats(v: &serde_json::Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

pub fn exact(g: &WeightedGraph, p: usize) -> Evaluator {
    Evaluator::new(g.clone(), AnsatzConfig::new(g.n_vertices(), p, ShotMode::Exact).unwrap(), 0).unwrap()
}

pub fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}
