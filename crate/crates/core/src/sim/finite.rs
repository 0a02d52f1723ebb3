//! Exhaustive equilibrium check of the finite-horizon game over pure
//! strategies that depend on the common history only.
//!
//! A strategy is a tree: the action at the root, then one subtree per
//! observable outcome of the step. The outcome seen by agent `n` is its own
//! signal (its observation if it shared, nothing otherwise) together with
//! the signal received from the other agent. Histories made impossible by
//! the agent's own earlier actions are pruned, which keeps the count at
//! `S(d) = Σ_a S(d-1)^{m_a}` with `m_a` the number of outcomes after `a`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    belief_update, conditional_mutual_information, cooperative_successor, Action, Agent, Belief,
    MarkovModel, Signal,
};
use crate::reward::GameParams;

/// Largest number of strategy profiles the check will enumerate.
pub const PROFILE_LIMIT: u128 = 1_000_000;

const NASH_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub horizon: usize,
    pub restriction: String,
    pub strategies: [usize; 2],
    pub profiles: usize,
    /// Expected total payoffs of the never-share profile.
    pub no_sharing_payoffs: [f64; 2],
    /// Never-sharing is a Nash equilibrium of the restricted game.
    pub no_sharing_is_nash: bool,
    /// Profiles in which somebody shares at a reachable history.
    pub sharing_profiles: usize,
    /// Of those, the ones that are Nash equilibria.
    pub sharing_nash_profiles: usize,
    /// Largest gain any agent obtains by a unilateral switch to never
    /// sharing, over all sharing profiles. Positive means every such
    /// profile is broken by that deviation.
    pub min_deviation_gain: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
struct Tree {
    action: Action,
    /// Indexed by `own * (1 + |Y^{-n}|) + received`; `own` is the own
    /// observation when sharing and 0 otherwise, `received` is 0 for
    /// nothing and `1 + y` for observation `y`.
    children: Vec<Tree>,
}

fn outcomes(model: &MarkovModel, agent: Agent, action: Action) -> usize {
    let own = if action.is_share() {
        model.num_obs(agent)
    } else {
        1
    };
    own * (1 + model.num_obs(agent.other()))
}

fn count_strategies(model: &MarkovModel, agent: Agent, depth: usize) -> u128 {
    if depth == 0 {
        return 1;
    }
    let inner = count_strategies(model, agent, depth - 1);
    Action::ALL
        .iter()
        .map(|&a| {
            let m = outcomes(model, agent, a) as u32;
            inner.checked_pow(m).unwrap_or(u128::MAX)
        })
        .fold(0u128, |acc, v| acc.saturating_add(v))
}

fn enumerate(model: &MarkovModel, agent: Agent, depth: usize) -> Vec<Tree> {
    if depth == 1 {
        return Action::ALL
            .iter()
            .map(|&action| Tree {
                action,
                children: Vec::new(),
            })
            .collect();
    }
    let inner = enumerate(model, agent, depth - 1);
    let mut out = Vec::new();
    for action in Action::ALL {
        let m = outcomes(model, agent, action);
        // Mixed-radix counter over the choice of subtree for each outcome.
        let mut digits = vec![0usize; m];
        loop {
            out.push(Tree {
                action,
                children: digits.iter().map(|&d| inner[d].clone()).collect(),
            });
            let mut k = 0;
            while k < m {
                digits[k] += 1;
                if digits[k] < inner.len() {
                    break;
                }
                digits[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
    }
    out
}

fn never_share(depth: usize, model: &MarkovModel, agent: Agent) -> Tree {
    let children = if depth <= 1 {
        Vec::new()
    } else {
        (0..outcomes(model, agent, Action::Defect))
            .map(|_| never_share(depth - 1, model, agent))
            .collect()
    };
    Tree {
        action: Action::Defect,
        children,
    }
}

fn child_index(model: &MarkovModel, agent: Agent, own: Signal, received: Signal) -> usize {
    let own = match own {
        Signal::Obs(y) => y,
        Signal::Epsilon => 0,
    };
    let received = match received {
        Signal::Obs(y) => 1 + y,
        Signal::Epsilon => 0,
    };
    own * (1 + model.num_obs(agent.other())) + received
}

struct Play<'a> {
    model: &'a MarkovModel,
    cost: [f64; 2],
    horizon: usize,
}

impl Play<'_> {
    /// Adds the expected payoff from step `t` on. `full` is the belief
    /// given both agents' information, `beliefs` the agents' own ones.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        t: usize,
        prob: f64,
        full: &Belief,
        beliefs: &[Belief; 2],
        nodes: [&Tree; 2],
        payoff: &mut [f64; 2],
        shares: &mut bool,
    ) -> Result<()> {
        let actions = [nodes[0].action, nodes[1].action];
        *shares |= actions.iter().any(|a| a.is_share());
        for agent in Agent::BOTH {
            let i = agent.index();
            let gain = if actions[1 - i].is_share() {
                conditional_mutual_information(self.model, &beliefs[i], agent)
            } else {
                0.0
            };
            payoff[i] += prob * (gain - f64::from(actions[i].bit()) * self.cost[i]);
        }
        if t + 1 == self.horizon {
            return Ok(());
        }
        for y1 in 0..self.model.num_obs(Agent::One) {
            for y2 in 0..self.model.num_obs(Agent::Two) {
                let Some((mass, next_full)) =
                    cooperative_successor(self.model, full, Agent::One, y1, y2)
                else {
                    continue;
                };
                let signals = [Signal::emit(y1, actions[0]), Signal::emit(y2, actions[1])];
                let next = [
                    belief_update(
                        self.model,
                        &beliefs[0],
                        Agent::One,
                        y1,
                        signals[1],
                        actions[1],
                    )?,
                    belief_update(
                        self.model,
                        &beliefs[1],
                        Agent::Two,
                        y2,
                        signals[0],
                        actions[0],
                    )?,
                ];
                let children = [
                    &nodes[0].children[child_index(self.model, Agent::One, signals[0], signals[1])],
                    &nodes[1].children[child_index(self.model, Agent::Two, signals[1], signals[0])],
                ];
                self.walk(
                    t + 1,
                    prob * mass,
                    &next_full,
                    &next,
                    children,
                    payoff,
                    shares,
                )?;
            }
        }
        Ok(())
    }

    fn evaluate(&self, prior: &Belief, s1: &Tree, s2: &Tree) -> Result<([f64; 2], bool)> {
        let mut payoff = [0.0; 2];
        let mut shares = false;
        let beliefs = [prior.clone(), prior.clone()];
        self.walk(0, 1.0, prior, &beliefs, [s1, s2], &mut payoff, &mut shares)?;
        Ok((payoff, shares))
    }
}

/// Enumerates every profile of common-history pure strategies over
/// `horizon` steps from the common prior and checks that never sharing
/// is the only equilibrium behaviour. Payoffs are undiscounted expected
/// sums of reception gain minus transmission cost.
pub fn finite_horizon_bruteforce(
    model: &MarkovModel,
    params: &GameParams,
    horizon: usize,
    prior: &Belief,
) -> Result<Verdict> {
    params.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    if prior.len() != model.num_states() {
        return Err(Error::DimensionMismatch(
            "prior dimension differs from the model".into(),
        ));
    }
    let counts = [
        count_strategies(model, Agent::One, horizon),
        count_strategies(model, Agent::Two, horizon),
    ];
    let profiles = counts[0].saturating_mul(counts[1]);
    if profiles > PROFILE_LIMIT {
        return Err(Error::EnumerationTooLarge {
            profiles,
            limit: PROFILE_LIMIT,
        });
    }
    let trees = [
        enumerate(model, Agent::One, horizon),
        enumerate(model, Agent::Two, horizon),
    ];
    let play = Play {
        model,
        cost: params.cost,
        horizon,
    };
    let (n1, n2) = (trees[0].len(), trees[1].len());
    let mut payoffs = vec![[0.0; 2]; n1 * n2];
    let mut shares = vec![false; n1 * n2];
    for (i, s1) in trees[0].iter().enumerate() {
        for (j, s2) in trees[1].iter().enumerate() {
            let (p, sh) = play.evaluate(prior, s1, s2)?;
            payoffs[i * n2 + j] = p;
            shares[i * n2 + j] = sh;
        }
    }
    // Best payoff of agent 1 against each column and of agent 2 against each row.
    let best1: Vec<f64> = (0..n2)
        .map(|j| {
            (0..n1)
                .map(|i| payoffs[i * n2 + j][0])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let best2: Vec<f64> = (0..n1)
        .map(|i| {
            (0..n2)
                .map(|j| payoffs[i * n2 + j][1])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let is_nash = |i: usize, j: usize| {
        let p = payoffs[i * n2 + j];
        p[0] >= best1[j] - NASH_TOL && p[1] >= best2[i] - NASH_TOL
    };

    let nc = [
        never_share(horizon, model, Agent::One),
        never_share(horizon, model, Agent::Two),
    ];
    let (nc_payoffs, _) = play.evaluate(prior, &nc[0], &nc[1])?;
    let nc_index = |agent: usize| {
        trees[agent]
            .iter()
            .position(|t| !contains_share(t))
            .expect("the never-share tree is enumerated")
    };
    let (i0, j0) = (nc_index(0), nc_index(1));
    let no_sharing_is_nash = is_nash(i0, j0);

    let mut sharing_profiles = 0;
    let mut sharing_nash_profiles = 0;
    let mut min_deviation_gain = f64::INFINITY;
    for i in 0..n1 {
        for j in 0..n2 {
            if !shares[i * n2 + j] {
                continue;
            }
            sharing_profiles += 1;
            if is_nash(i, j) {
                sharing_nash_profiles += 1;
            }
            let p = payoffs[i * n2 + j];
            let gain = (payoffs[i0 * n2 + j][0] - p[0]).max(payoffs[i * n2 + j0][1] - p[1]);
            min_deviation_gain = min_deviation_gain.min(gain);
        }
    }
    Ok(Verdict {
        horizon,
        restriction: "pure strategies measurable with respect to the common history".into(),
        strategies: [n1, n2],
        profiles: n1 * n2,
        no_sharing_payoffs: nc_payoffs,
        no_sharing_is_nash,
        sharing_profiles,
        sharing_nash_profiles,
        min_deviation_gain,
        holds: no_sharing_is_nash && sharing_nash_profiles == 0,
    })
}

fn contains_share(t: &Tree) -> bool {
    t.action.is_share() || t.children.iter().any(contains_share)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_model() -> MarkovModel {
        MarkovModel::with_bsc(vec![vec![0.8, 0.2], vec![0.15, 0.85]], 0.6, 0.6).unwrap()
    }

    #[test]
    fn strategy_counts() {
        let m = base_model();
        assert_eq!(count_strategies(&m, Agent::One, 1), 2);
        assert_eq!(count_strategies(&m, Agent::One, 2), 72);
        assert_eq!(enumerate(&m, Agent::Two, 2).len(), 72);
        assert!(count_strategies(&m, Agent::One, 3) > 100_000_000_000);
    }

    #[test]
    fn one_step_sharing_loses_exactly_the_cost() {
        let m = base_model();
        let p = GameParams::symmetric(0.9, 0.027).unwrap();
        let v = finite_horizon_bruteforce(&m, &p, 1, &Belief::uniform(2)).unwrap();
        assert!(v.holds && v.no_sharing_is_nash);
        assert_eq!(v.profiles, 4);
        assert_eq!(v.sharing_profiles, 3);
        assert!((v.min_deviation_gain - 0.027).abs() < 1e-15);
        assert_eq!(v.no_sharing_payoffs, [0.0, 0.0]);
    }

    #[test]
    fn three_steps_are_refused() {
        let m = base_model();
        let p = GameParams::symmetric(0.9, 0.027).unwrap();
        let err = finite_horizon_bruteforce(&m, &p, 3, &Belief::uniform(2)).unwrap_err();
        assert!(matches!(err, Error::EnumerationTooLarge { .. }));
    }

    #[test]
    fn zero_cost_makes_own_action_irrelevant() {
        let m = base_model();
        let p = GameParams::symmetric(0.9, 0.0).unwrap();
        let trees = enumerate(&m, Agent::One, 1);
        let play = Play {
            model: &m,
            cost: p.cost,
            horizon: 1,
        };
        let prior = Belief::binary(0.3).unwrap();
        for opp in &trees {
            let a = play.evaluate(&prior, &trees[0], opp).unwrap().0;
            let b = play.evaluate(&prior, &trees[1], opp).unwrap().0;
            assert_eq!(a[0], b[0]);
        }
        let v = finite_horizon_bruteforce(&m, &p, 1, &prior).unwrap();
        assert!(v.no_sharing_is_nash && !v.holds);
    }
}
