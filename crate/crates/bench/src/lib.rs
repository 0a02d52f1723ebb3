//! Benchmark fixtures.

use std::sync::Arc;

use disg_core::{GameParams, MarkovModel, SimplexGrid};

/// Two-state chain watched through two binary symmetric channels with
/// accuracy 0.6.
pub fn two_state_model() -> MarkovModel {
    MarkovModel::with_bsc(vec![vec![0.8, 0.2], vec![0.15, 0.85]], 0.6, 0.6).expect("valid model")
}

/// Three-state chain with noisy ternary channels.
pub fn three_state_model() -> MarkovModel {
    let t = vec![
        vec![0.7, 0.2, 0.1],
        vec![0.1, 0.8, 0.1],
        vec![0.2, 0.2, 0.6],
    ];
    let ch = vec![
        vec![0.6, 0.2, 0.2],
        vec![0.2, 0.6, 0.2],
        vec![0.2, 0.2, 0.6],
    ];
    MarkovModel::new(t, [ch.clone(), ch]).expect("valid model")
}

pub fn params(cost: f64) -> GameParams {
    GameParams::symmetric(0.9, cost).expect("valid params")
}

pub fn grid(num_states: usize, resolution: u32) -> Arc<SimplexGrid> {
    SimplexGrid::build(num_states, resolution).expect("grid fits")
}
