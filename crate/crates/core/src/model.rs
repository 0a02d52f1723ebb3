//! Hidden Markov chain, per-agent observation channels, exchanged signals,
//! exact Bayesian belief filtering and the reception-gain primitive.
//!
//! Entropies are measured in bits. `0 log 0` is taken as 0, and any
//! probability below [`PROB_EPS`] is treated as an exact zero inside a
//! logarithm.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-sum tolerance used by every stochasticity check.
pub const STOCHASTIC_TOL: f64 = 1e-9;

/// Probabilities below this value never reach a logarithm.
pub const PROB_EPS: f64 = 1e-15;

/// One of the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Agent {
    One,
    Two,
}

impl Agent {
    pub const BOTH: [Agent; 2] = [Agent::One, Agent::Two];

    pub fn other(self) -> Agent {
        match self {
            Agent::One => Agent::Two,
            Agent::Two => Agent::One,
        }
    }

    /// Zero-based slot used for per-agent arrays.
    pub fn index(self) -> usize {
        match self {
            Agent::One => 0,
            Agent::Two => 1,
        }
    }

    /// One-based label (1 or 2).
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_number(n: u8) -> Option<Agent> {
        match n {
            1 => Some(Agent::One),
            2 => Some(Agent::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Agent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Sharing decision of one agent at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    /// Send nothing (`a = 0`).
    Defect,
    /// Send the current private observation (`a = 1`).
    Share,
}

impl Action {
    pub const ALL: [Action; 2] = [Action::Defect, Action::Share];

    pub fn from_bit(bit: u8) -> Option<Action> {
        match bit {
            0 => Some(Action::Defect),
            1 => Some(Action::Share),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Action::Defect => 0,
            Action::Share => 1,
        }
    }

    pub fn is_share(self) -> bool {
        self == Action::Share
    }
}

/// What an agent receives from the other one: the other agent's observation
/// when it shared, `Epsilon` otherwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Signal {
    Obs(usize),
    Epsilon,
}

impl Signal {
    /// The signal emitted by a sender holding `obs` and choosing `action`.
    pub fn emit(obs: usize, action: Action) -> Signal {
        match action {
            Action::Share => Signal::Obs(obs),
            Action::Defect => Signal::Epsilon,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Signal::Obs(y) => write!(f, "{y}"),
            Signal::Epsilon => write!(f, "eps"),
        }
    }
}

/// Dense row-major matrix whose rows are probability vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stochastic {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Stochastic {
    fn from_rows(rows: &[Vec<f64>]) -> Stochastic {
        let cols = rows.first().map_or(0, Vec::len);
        Stochastic {
            rows: rows.len(),
            cols,
            data: rows.iter().flatten().copied().collect(),
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

/// Transition kernel of the hidden chain plus one emission channel per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovModel {
    transition: Stochastic,
    channels: [Stochastic; 2],
}

fn check_rows(name: &str, rows: &[Vec<f64>], expect_rows: usize) -> Result<()> {
    if rows.len() != expect_rows {
        return Err(Error::DimensionMismatch(format!(
            "{name} has {} rows, expected {expect_rows}",
            rows.len()
        )));
    }
    let width = rows.first().map_or(0, Vec::len);
    if width == 0 {
        return Err(Error::DimensionMismatch(format!("{name} has empty rows")));
    }
    for (r, row) in rows.iter().enumerate() {
        if row.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "{name} row {r} has {} entries, expected {width}",
                row.len()
            )));
        }
        for (c, &v) in row.iter().enumerate() {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::NegativeEntry {
                    matrix: name.to_string(),
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::NonStochasticRow {
                matrix: name.to_string(),
                row: r,
                sum,
            });
        }
    }
    Ok(())
}

/// Checks every model invariant on raw rows. The error names the offending
/// matrix (`transition`, `channel[1]`, `channel[2]`) and row.
pub fn validate_model(transition: &[Vec<f64>], channels: [&[Vec<f64>]; 2]) -> Result<()> {
    let n = transition.len();
    if n < 2 {
        return Err(Error::DimensionMismatch(format!(
            "need at least 2 states, got {n}"
        )));
    }
    check_rows("transition", transition, n)?;
    if transition[0].len() != n {
        return Err(Error::DimensionMismatch(format!(
            "transition is {n}x{}, expected square",
            transition[0].len()
        )));
    }
    for (i, ch) in channels.iter().enumerate() {
        check_rows(&format!("channel[{}]", i + 1), ch, n)?;
    }
    Ok(())
}

/// Binary symmetric channel with `p` on the diagonal.
pub fn bsc(p: f64) -> Vec<Vec<f64>> {
    vec![vec![p, 1.0 - p], vec![1.0 - p, p]]
}

impl MarkovModel {
    pub fn new(transition: Vec<Vec<f64>>, channels: [Vec<Vec<f64>>; 2]) -> Result<MarkovModel> {
        validate_model(&transition, [&channels[0], &channels[1]])?;
        Ok(MarkovModel {
            transition: Stochastic::from_rows(&transition),
            channels: [
                Stochastic::from_rows(&channels[0]),
                Stochastic::from_rows(&channels[1]),
            ],
        })
    }

    /// Two-state chain observed through binary symmetric channels with
    /// correct-symbol probabilities `p1` and `p2`.
    pub fn with_bsc(transition: Vec<Vec<f64>>, p1: f64, p2: f64) -> Result<MarkovModel> {
        if transition.len() != 2 {
            return Err(Error::DimensionMismatch(
                "binary symmetric channels need exactly 2 states".into(),
            ));
        }
        MarkovModel::new(transition, [bsc(p1), bsc(p2)])
    }

    pub fn num_states(&self) -> usize {
        self.transition.rows
    }

    pub fn num_obs(&self, agent: Agent) -> usize {
        self.channels[agent.index()].cols
    }

    #[inline]
    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transition.get(from, to)
    }

    pub fn transition_matrix(&self) -> &Stochastic {
        &self.transition
    }

    /// `P(Y^agent = obs | X = state)`.
    #[inline]
    pub fn emission(&self, agent: Agent, state: usize, obs: usize) -> f64 {
        self.channels[agent.index()].get(state, obs)
    }

    pub fn channel(&self, agent: Agent) -> &Stochastic {
        &self.channels[agent.index()]
    }

    pub fn validate(&self) -> Result<()> {
        validate_model(
            &self.transition.to_rows(),
            [&self.channels[0].to_rows(), &self.channels[1].to_rows()],
        )
    }
}

/// A probability vector over the hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(probs: Vec<f64>) -> Result<Belief> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("empty".into()));
        }
        if let Some((i, v)) = probs
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(Error::InvalidBelief(format!("entry {i} is {v}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Belief(probs))
    }

    /// Normalizes a nonnegative vector with a positive sum.
    pub(crate) fn normalized(mut weights: Vec<f64>) -> Result<Belief> {
        let sum: f64 = weights.iter().sum();
        if sum.is_nan() || sum <= 0.0 || !sum.is_finite() {
            return Err(Error::ZeroLikelihood);
        }
        weights.iter_mut().for_each(|w| *w /= sum);
        Ok(Belief(weights))
    }

    pub fn uniform(num_states: usize) -> Belief {
        Belief(vec![1.0 / num_states as f64; num_states])
    }

    pub fn vertex(num_states: usize, state: usize) -> Belief {
        let mut p = vec![0.0; num_states];
        p[state] = 1.0;
        Belief(p)
    }

    /// Two-state belief with `P(X = 0) = p0`.
    pub fn binary(p0: f64) -> Result<Belief> {
        Belief::new(vec![p0, 1.0 - p0])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_dim(model: &MarkovModel, belief: &Belief) -> Result<()> {
    if belief.len() != model.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "belief has {} entries, model has {} states",
            belief.len(),
            model.num_states()
        )));
    }
    Ok(())
}

/// Likelihood of `signal` given the state and the sender's action:
/// 1 for (`Epsilon`, defect), the sender's emission probability for
/// (`Obs(y)`, share), and 0 for mismatched pairs.
pub fn signal_likelihood(
    model: &MarkovModel,
    sender: Agent,
    state: usize,
    signal: Signal,
    sender_action: Action,
) -> f64 {
    match (signal, sender_action) {
        (Signal::Epsilon, Action::Defect) => 1.0,
        (Signal::Obs(y), Action::Share) => model.emission(sender, state, y),
        _ => 0.0,
    }
}

/// One-step prediction `π' = πᵀ P` without any observation.
pub fn predict(model: &MarkovModel, belief: &Belief) -> Belief {
    let n = model.num_states();
    let mut next = vec![0.0; n];
    for (x, &w) in belief.probs().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (x2, slot) in next.iter_mut().enumerate() {
            *slot += w * model.transition(x, x2);
        }
    }
    Belief(next)
}

/// Exact filter step for `agent`: conditions on its own observation and on
/// the signal received from the other agent, then predicts one step ahead.
pub fn belief_update(
    model: &MarkovModel,
    belief: &Belief,
    agent: Agent,
    own_obs: usize,
    signal: Signal,
    opp_action: Action,
) -> Result<Belief> {
    check_dim(model, belief)?;
    let opp = agent.other();
    match (signal, opp_action) {
        (Signal::Epsilon, Action::Defect) => {}
        (Signal::Obs(y), Action::Share) if y < model.num_obs(opp) => {}
        (Signal::Obs(y), Action::Share) => {
            return Err(Error::DimensionMismatch(format!(
                "signal symbol {y} out of range for agent {opp}"
            )))
        }
        _ => {
            return Err(Error::SignalActionMismatch {
                signal: signal.to_string(),
                action: opp_action.bit(),
            })
        }
    }
    if own_obs >= model.num_obs(agent) {
        return Err(Error::DimensionMismatch(format!(
            "observation {own_obs} out of range for agent {agent}"
        )));
    }
    let posterior: Vec<f64> = belief
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &w)| {
            let own = model.emission(agent, x, own_obs);
            let received = signal_likelihood(model, opp, x, signal, opp_action);
            // Agent 1's factor first, so both agents compute bit-identical
            // beliefs after a mutual exchange.
            match agent {
                Agent::One => w * own * received,
                Agent::Two => w * received * own,
            }
        })
        .collect();
    let posterior = Belief::normalized(posterior)?;
    Ok(predict(model, &posterior))
}

/// Filter step when both observations are exchanged, returning the
/// successor belief and the joint probability of the observation pair.
/// Returns `None` when the pair has zero probability.
pub fn cooperative_successor(
    model: &MarkovModel,
    belief: &Belief,
    agent: Agent,
    own_obs: usize,
    opp_obs: usize,
) -> Option<(f64, Belief)> {
    let opp = agent.other();
    let weights: Vec<f64> = belief
        .probs()
        .iter()
        .enumerate()
        .map(|(x, &w)| {
            let own = model.emission(agent, x, own_obs);
            let received = model.emission(opp, x, opp_obs);
            match agent {
                Agent::One => w * own * received,
                Agent::Two => w * received * own,
            }
        })
        .collect();
    let mass: f64 = weights.iter().sum();
    if mass <= 0.0 {
        return None;
    }
    let posterior = Belief(weights.into_iter().map(|w| w / mass).collect());
    Some((mass, predict(model, &posterior)))
}

/// Shannon entropy in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&v| v > PROB_EPS)
        .map(|&v| -v * v.log2())
        .sum()
}

/// `H(X | Y^agent)` under the belief.
pub fn conditional_entropy_own(model: &MarkovModel, belief: &Belief, agent: Agent) -> f64 {
    let n = model.num_states();
    let mut total = 0.0;
    for y in 0..model.num_obs(agent) {
        let joint: Vec<f64> = (0..n)
            .map(|x| belief[x] * model.emission(agent, x, y))
            .collect();
        let py: f64 = joint.iter().sum();
        if py <= PROB_EPS {
            continue;
        }
        let cond: Vec<f64> = joint.iter().map(|v| v / py).collect();
        total += py * entropy_bits(&cond);
    }
    total
}

/// `H(X | Y^agent, Y^other)` under the belief.
pub fn conditional_entropy_joint(model: &MarkovModel, belief: &Belief, agent: Agent) -> f64 {
    let n = model.num_states();
    let opp = agent.other();
    let mut total = 0.0;
    for y in 0..model.num_obs(agent) {
        for z in 0..model.num_obs(opp) {
            let joint: Vec<f64> = (0..n)
                .map(|x| belief[x] * model.emission(agent, x, y) * model.emission(opp, x, z))
                .collect();
            let pyz: f64 = joint.iter().sum();
            if pyz <= PROB_EPS {
                continue;
            }
            let cond: Vec<f64> = joint.iter().map(|v| v / pyz).collect();
            total += pyz * entropy_bits(&cond);
        }
    }
    total
}

/// Reception gain `I(X; Y^other | Y^agent)` in bits, with `X ~ belief`.
///
/// Computed as the expected divergence between the other agent's channel
/// rows and their posterior mixture, for each own observation. The mixture
/// is accumulated as offsets from a reference row so that exactly
/// independent cases (vertex beliefs, uninformative channels, fully
/// revealing own channel) give exactly zero.
pub fn conditional_mutual_information(model: &MarkovModel, belief: &Belief, agent: Agent) -> f64 {
    let n = model.num_states();
    let opp = agent.other();
    let mut total = 0.0;
    let mut post = vec![0.0; n];
    for y in 0..model.num_obs(agent) {
        let mut py = 0.0;
        for (x, slot) in post.iter_mut().enumerate() {
            *slot = belief[x] * model.emission(agent, x, y);
            py += *slot;
        }
        if py <= PROB_EPS {
            continue;
        }
        post.iter_mut().for_each(|v| *v /= py);
        let Some(reference) = post.iter().position(|&q| q > 0.0) else {
            continue;
        };
        let mut inner = 0.0;
        for z in 0..model.num_obs(opp) {
            let base = model.emission(opp, reference, z);
            let mix = base
                + post
                    .iter()
                    .enumerate()
                    .map(|(x, &q)| q * (model.emission(opp, x, z) - base))
                    .sum::<f64>();
            if mix <= PROB_EPS {
                continue;
            }
            for (x, &q) in post.iter().enumerate() {
                let b = model.emission(opp, x, z);
                if q > 0.0 && b > PROB_EPS {
                    inner += q * b * (b / mix).log2();
                }
            }
        }
        total += py * inner;
    }
    total.max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernel() -> Vec<Vec<f64>> {
        vec![vec![0.8, 0.2], vec![0.15, 0.85]]
    }

    fn base_model() -> MarkovModel {
        MarkovModel::with_bsc(kernel(), 0.6, 0.6).unwrap()
    }

    #[test]
    fn validates_reference_kernel() {
        assert!(validate_model(&kernel(), [&bsc(0.6), &bsc(0.6)]).is_ok());
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(validate_model(&id, [&id, &id]).is_ok());
    }

    #[test]
    fn reports_offending_row() {
        let bad = vec![vec![0.8, 0.3], vec![0.15, 0.85]];
        match validate_model(&bad, [&bsc(0.6), &bsc(0.6)]) {
            Err(Error::NonStochasticRow { matrix, row, .. }) => {
                assert_eq!(matrix, "transition");
                assert_eq!(row, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
        let neg = vec![vec![1.2, -0.2], vec![0.5, 0.5]];
        assert!(matches!(
            validate_model(&kernel(), [&neg, &bsc(0.6)]),
            Err(Error::NegativeEntry { row: 0, col: 1, .. })
        ));
        let ragged = vec![vec![1.0], vec![0.5, 0.5]];
        assert!(matches!(
            validate_model(&kernel(), [&bsc(0.6), &ragged]),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            validate_model(&[vec![1.0]], [&[vec![1.0]], &[vec![1.0]]]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn update_after_private_observation() {
        let m = base_model();
        let b = belief_update(
            &m,
            &Belief::uniform(2),
            Agent::One,
            0,
            Signal::Epsilon,
            Action::Defect,
        )
        .unwrap();
        assert!((b[0] - 0.54).abs() < 1e-12);
        assert!((b[1] - 0.46).abs() < 1e-12);
    }

    #[test]
    fn uninformative_channels_only_predict() {
        let flat = vec![vec![0.3, 0.7], vec![0.3, 0.7]];
        let m = MarkovModel::new(kernel(), [flat.clone(), flat]).unwrap();
        let b = belief_update(
            &m,
            &Belief::vertex(2, 0),
            Agent::Two,
            1,
            Signal::Epsilon,
            Action::Defect,
        )
        .unwrap();
        assert!((b[0] - 0.8).abs() < 1e-15 && (b[1] - 0.2).abs() < 1e-15);
        let start = Belief::binary(0.37).unwrap();
        let b = belief_update(&m, &start, Agent::One, 0, Signal::Epsilon, Action::Defect).unwrap();
        let p = predict(&m, &start);
        assert!((b[0] - p[0]).abs() < 1e-15);
    }

    #[test]
    fn update_rejects_inconsistent_inputs() {
        let m = base_model();
        let u = Belief::uniform(2);
        assert!(matches!(
            belief_update(&m, &u, Agent::One, 0, Signal::Epsilon, Action::Share),
            Err(Error::SignalActionMismatch { .. })
        ));
        assert!(matches!(
            belief_update(&m, &u, Agent::One, 0, Signal::Obs(1), Action::Defect),
            Err(Error::SignalActionMismatch { .. })
        ));
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let sharp = MarkovModel::new(kernel(), [id.clone(), id]).unwrap();
        assert_eq!(
            belief_update(
                &sharp,
                &Belief::vertex(2, 0),
                Agent::One,
                1,
                Signal::Epsilon,
                Action::Defect
            ),
            Err(Error::ZeroLikelihood)
        );
    }

    #[test]
    fn signal_likelihood_cases() {
        let m = base_model();
        assert_eq!(
            signal_likelihood(&m, Agent::Two, 0, Signal::Epsilon, Action::Defect),
            1.0
        );
        assert_eq!(
            signal_likelihood(&m, Agent::Two, 0, Signal::Obs(0), Action::Share),
            0.6
        );
        assert_eq!(
            signal_likelihood(&m, Agent::Two, 0, Signal::Obs(0), Action::Defect),
            0.0
        );
        assert_eq!(
            signal_likelihood(&m, Agent::Two, 0, Signal::Epsilon, Action::Share),
            0.0
        );
    }

    #[test]
    fn mutual_information_reference_values() {
        let m = base_model();
        let mi = conditional_mutual_information(&m, &Belief::uniform(2), Agent::One);
        // Enumeration over the eight (x, y1, y2) outcomes.
        assert!((mi - 0.027_894_941_540_533_07).abs() < 1e-12, "{mi}");
        assert_eq!(
            conditional_mutual_information(&m, &Belief::vertex(2, 0), Agent::One),
            0.0
        );
        assert_eq!(
            conditional_mutual_information(&m, &Belief::vertex(2, 1), Agent::Two),
            0.0
        );
        let flat = vec![vec![0.45, 0.55], vec![0.45, 0.55]];
        let m = MarkovModel::new(kernel(), [bsc(0.7), flat]).unwrap();
        assert_eq!(
            conditional_mutual_information(&m, &Belief::binary(0.3).unwrap(), Agent::One),
            0.0
        );
        let id = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = MarkovModel::new(kernel(), [id, bsc(0.6)]).unwrap();
        assert_eq!(
            conditional_mutual_information(&m, &Belief::uniform(2), Agent::One),
            0.0
        );
    }

    #[test]
    fn belief_constructor_checks() {
        assert!(Belief::new(vec![0.5, 0.6]).is_err());
        assert!(Belief::new(vec![-0.1, 1.1]).is_err());
        assert!(Belief::new(vec![]).is_err());
        assert!(Belief::new(vec![0.25, 0.75]).is_ok());
    }
}
