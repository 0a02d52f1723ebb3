//! Monte-Carlo tree search on the belief MDP of one agent facing a CGT
//! opponent, used to cross-check the grid solver without discretization.

use std::collections::HashMap;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    conditional_mutual_information, cooperative_successor, Action, Agent, Belief, MarkovModel,
};
use crate::reward::GameParams;
use crate::sim::sample_index;
use crate::strategy::{Region, SharingFlag};

use super::QValues;

/// UCB exploration weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exploration {
    /// Range of the returns seen so far at the root.
    Adaptive,
    Fixed(f64),
}

/// Policy used to value a node the first time it is reached.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rollout {
    /// Defect at once: the value is the current reception gain.
    AlwaysDefect,
    /// Share while the belief stays in the opponent's region.
    Cooperate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PomcpConfig {
    pub simulations: usize,
    pub horizon: usize,
    pub exploration: Exploration,
    pub rollout: Rollout,
    pub seed: u64,
}

impl Default for PomcpConfig {
    fn default() -> Self {
        PomcpConfig {
            simulations: 20_000,
            horizon: 60,
            exploration: Exploration::Adaptive,
            rollout: Rollout::AlwaysDefect,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PomcpResult {
    pub action: Action,
    /// Mean sampled return of each root action.
    pub q: QValues,
    pub visits: [usize; 2],
}

#[derive(Default)]
struct Node {
    visits: usize,
    count: [usize; 2],
    total: [f64; 2],
    children: HashMap<(usize, usize), Node>,
}

struct Search<'a> {
    model: &'a MarkovModel,
    opp_region: &'a Region,
    agent: Agent,
    cost: f64,
    delta: f64,
    horizon: usize,
    exploration: Exploration,
    rollout: Rollout,
    ret_min: f64,
    ret_max: f64,
    rng: ChaCha8Rng,
}

impl Search<'_> {
    /// Reception gain at `belief` if the opponent shares there.
    fn gain(&self, belief: &Belief) -> (bool, f64) {
        let inside = self.opp_region.contains(belief).unwrap_or(false);
        let g = if inside {
            conditional_mutual_information(self.model, belief, self.agent)
        } else {
            0.0
        };
        (inside, g)
    }

    fn weight(&self) -> f64 {
        match self.exploration {
            Exploration::Fixed(w) => w,
            Exploration::Adaptive => {
                if self.ret_max > self.ret_min {
                    self.ret_max - self.ret_min
                } else {
                    1.0
                }
            }
        }
    }

    fn select(&self, node: &Node) -> usize {
        // Untried actions first, sharing before defecting.
        for a in [1, 0] {
            if node.count[a] == 0 {
                return a;
            }
        }
        let w = self.weight();
        let ln_n = (node.visits as f64).ln();
        let score = |a: usize| {
            node.total[a] / node.count[a] as f64 + w * (ln_n / node.count[a] as f64).sqrt()
        };
        if score(1) >= score(0) {
            1
        } else {
            0
        }
    }

    fn sample_pair(&mut self, belief: &Belief) -> (usize, usize) {
        let x = sample_index(&mut self.rng, belief.probs());
        let y = sample_index(&mut self.rng, self.model.channel(self.agent).row(x));
        let z = sample_index(&mut self.rng, self.model.channel(self.agent.other()).row(x));
        (y, z)
    }

    fn rollout(&mut self, mut belief: Belief, mut depth: usize) -> f64 {
        let mut total = 0.0;
        let mut discount = 1.0;
        while depth < self.horizon {
            let (inside, gain) = self.gain(&belief);
            if self.rollout == Rollout::AlwaysDefect || !inside {
                return total + discount * gain;
            }
            total += discount * (gain - self.cost);
            let (y, z) = self.sample_pair(&belief);
            belief = cooperative_successor(self.model, &belief, self.agent, y, z)
                .expect("sampled observation pair has positive probability")
                .1;
            discount *= self.delta;
            depth += 1;
        }
        total
    }

    fn simulate(&mut self, node: &mut Node, belief: &Belief, depth: usize) -> f64 {
        if depth >= self.horizon {
            return 0.0;
        }
        let (inside, gain) = self.gain(belief);
        let a = self.select(node);
        let ret = if a == 0 || !inside {
            // Any defection ends cooperation for good; the rest is zero.
            gain - a as f64 * self.cost
        } else {
            let (y, z) = self.sample_pair(belief);
            let (_, next) = cooperative_successor(self.model, belief, self.agent, y, z)
                .expect("sampled observation pair has positive probability");
            let future = match node.children.get_mut(&(y, z)) {
                Some(child) => {
                    let mut child = std::mem::take(child);
                    let v = self.simulate(&mut child, &next, depth + 1);
                    node.children.insert((y, z), child);
                    v
                }
                None => {
                    node.children.insert((y, z), Node::default());
                    self.rollout(next, depth + 1)
                }
            };
            gain - self.cost + self.delta * future
        };
        node.visits += 1;
        node.count[a] += 1;
        node.total[a] += ret;
        ret
    }
}

/// Plans agent `agent`'s action at `(s, belief)` by UCT search over exact
/// beliefs against a CGT opponent sharing on `opp_region`.
pub fn pomcp_plan(
    model: &MarkovModel,
    s: SharingFlag,
    belief: &Belief,
    opp_region: &Region,
    params: &GameParams,
    agent: Agent,
    config: &PomcpConfig,
) -> Result<PomcpResult> {
    params.validate()?;
    if belief.len() != model.num_states() || opp_region.grid().num_states() != model.num_states() {
        return Err(Error::DimensionMismatch(
            "belief, region and model disagree on the state count".into(),
        ));
    }
    if config.simulations == 0 || config.horizon == 0 {
        return Err(Error::InvalidParams(
            "search needs at least one simulation and horizon 1".into(),
        ));
    }
    let cost = params.cost(agent);
    if !s.is_cooperating() {
        return Ok(PomcpResult {
            action: Action::Defect,
            q: QValues {
                defect: 0.0,
                share: -cost,
            },
            visits: [0, 0],
        });
    }
    let mut search = Search {
        model,
        opp_region,
        agent,
        cost,
        delta: params.delta,
        horizon: config.horizon,
        exploration: config.exploration,
        rollout: config.rollout,
        ret_min: f64::INFINITY,
        ret_max: f64::NEG_INFINITY,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    let mut root = Node::default();
    for _ in 0..config.simulations {
        let r = search.simulate(&mut root, belief, 0);
        search.ret_min = search.ret_min.min(r);
        search.ret_max = search.ret_max.max(r);
    }
    let mean = |a: usize| {
        if root.count[a] == 0 {
            f64::NEG_INFINITY
        } else {
            root.total[a] / root.count[a] as f64
        }
    };
    let q = QValues {
        defect: mean(0),
        share: mean(1),
    };
    Ok(PomcpResult {
        action: q.greedy(),
        q,
        visits: root.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::SimplexGrid;

    fn model() -> MarkovModel {
        MarkovModel::with_bsc(vec![vec![0.8, 0.2], vec![0.15, 0.85]], 0.6, 0.6).unwrap()
    }

    #[test]
    fn deviated_flag_defects_without_search() {
        let g = SimplexGrid::build(2, 20).unwrap();
        let params = GameParams::symmetric(0.9, 0.01).unwrap();
        let r = pomcp_plan(
            &model(),
            SharingFlag::Deviated,
            &Belief::uniform(2),
            &Region::full(&g),
            &params,
            Agent::One,
            &PomcpConfig::default(),
        )
        .unwrap();
        assert_eq!(r.action, Action::Defect);
        assert_eq!(r.q.share, -0.01);
        assert_eq!(r.visits, [0, 0]);
    }

    #[test]
    fn opponent_never_sharing_means_defect() {
        let g = SimplexGrid::build(2, 20).unwrap();
        let params = GameParams::symmetric(0.9, 0.01).unwrap();
        let cfg = PomcpConfig {
            simulations: 500,
            ..PomcpConfig::default()
        };
        let r = pomcp_plan(
            &model(),
            SharingFlag::Cooperating,
            &Belief::uniform(2),
            &Region::empty(&g),
            &params,
            Agent::Two,
            &cfg,
        )
        .unwrap();
        assert_eq!(r.action, Action::Defect);
        assert_eq!(r.q.defect, 0.0);
        assert!((r.q.share + 0.01).abs() < 1e-15);
    }

    #[test]
    fn free_sharing_is_chosen_and_search_is_reproducible() {
        let g = SimplexGrid::build(2, 20).unwrap();
        let params = GameParams::symmetric(0.9, 0.0).unwrap();
        let cfg = PomcpConfig {
            simulations: 2000,
            horizon: 30,
            seed: 7,
            ..PomcpConfig::default()
        };
        let b = Belief::binary(0.4).unwrap();
        let a = pomcp_plan(
            &model(),
            SharingFlag::Cooperating,
            &b,
            &Region::full(&g),
            &params,
            Agent::One,
            &cfg,
        )
        .unwrap();
        let again = pomcp_plan(
            &model(),
            SharingFlag::Cooperating,
            &b,
            &Region::full(&g),
            &params,
            Agent::One,
            &cfg,
        )
        .unwrap();
        assert_eq!(a, again);
        assert_eq!(a.action, Action::Share);
        assert!(a.q.share > a.q.defect);
    }
}
