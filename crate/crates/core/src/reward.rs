//! Stage rewards: reception gain, the CGT-form reward and the
//! cost-adjusted stage reward, plus the pluggable reward contract.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    conditional_mutual_information, Action, Agent, Belief, MarkovModel, Signal, PROB_EPS,
};
use crate::strategy::{Region, SharingFlag};

/// Discount factor, per-agent transmission costs and value-iteration limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GameParams {
    pub delta: f64,
    pub cost: [f64; 2],
    pub vi_tolerance: f64,
    pub max_iterations: usize,
}

impl GameParams {
    pub fn new(
        delta: f64,
        cost: [f64; 2],
        vi_tolerance: f64,
        max_iterations: usize,
    ) -> Result<GameParams> {
        let p = GameParams {
            delta,
            cost,
            vi_tolerance,
            max_iterations,
        };
        p.validate()?;
        Ok(p)
    }

    /// Same cost for both agents, tolerance `1e-9`, at most 10 000 sweeps.
    pub fn symmetric(delta: f64, cost: f64) -> Result<GameParams> {
        GameParams::new(delta, [cost, cost], 1e-9, 10_000)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParams(format!(
                "delta = {} not in [0, 1)",
                self.delta
            )));
        }
        if self.cost.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidParams(format!(
                "costs {:?} must be nonnegative",
                self.cost
            )));
        }
        if self.vi_tolerance.is_nan() || self.vi_tolerance <= 0.0 {
            return Err(Error::InvalidParams("vi_tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn cost(&self, agent: Agent) -> f64 {
        self.cost[agent.index()]
    }

    pub fn with_cost(mut self, cost: [f64; 2]) -> GameParams {
        self.cost = cost;
        self
    }
}

/// A reception-gain function `r(x, y_own, z; π)`.
///
/// Implementations must satisfy two conditions for the equilibrium results
/// to carry over: (A) the expectation under a sharing opponent is
/// nonnegative, and (B) the expectation is zero when nothing is received.
/// [`check_reward_conditions`] tests both at a given belief.
pub trait InformationReward: Send + Sync {
    fn pointwise(
        &self,
        model: &MarkovModel,
        agent: Agent,
        belief: &Belief,
        state: usize,
        own_obs: usize,
        signal: Signal,
    ) -> f64;

    /// Expected reward when the other agent shares, by enumeration of
    /// `(x, y_own, y_other)`.
    fn expected_when_shared(&self, model: &MarkovModel, belief: &Belief, agent: Agent) -> f64 {
        let opp = agent.other();
        let mut total = 0.0;
        for x in 0..model.num_states() {
            if belief[x] == 0.0 {
                continue;
            }
            for y in 0..model.num_obs(agent) {
                for z in 0..model.num_obs(opp) {
                    let p = belief[x] * model.emission(agent, x, y) * model.emission(opp, x, z);
                    if p > 0.0 {
                        total += p * self.pointwise(model, agent, belief, x, y, Signal::Obs(z));
                    }
                }
            }
        }
        total
    }
}

/// Log-likelihood-ratio gain whose expectation is the conditional mutual
/// information `I(X; Y^other | Y^own)` in bits.
#[derive(Debug, Clone, Copy, Default)]
pub struct MutualInformation;

impl InformationReward for MutualInformation {
    fn pointwise(
        &self,
        model: &MarkovModel,
        agent: Agent,
        belief: &Belief,
        state: usize,
        own_obs: usize,
        signal: Signal,
    ) -> f64 {
        let Signal::Obs(z) = signal else {
            return 0.0;
        };
        let opp = agent.other();
        let n = model.num_states();
        let weights: Vec<f64> = (0..n)
            .map(|x| belief[x] * model.emission(agent, x, own_obs))
            .collect();
        let py: f64 = weights.iter().sum();
        if py <= PROB_EPS {
            return 0.0;
        }
        let mix: f64 = weights
            .iter()
            .enumerate()
            .map(|(x, w)| w / py * model.emission(opp, x, z))
            .sum();
        let b = model.emission(opp, state, z);
        if mix <= PROB_EPS || b <= PROB_EPS {
            return 0.0;
        }
        (b / mix).log2()
    }

    fn expected_when_shared(&self, model: &MarkovModel, belief: &Belief, agent: Agent) -> f64 {
        conditional_mutual_information(model, belief, agent)
    }
}

/// Outcome of testing conditions (A) and (B) on a reward at one belief.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardConditions {
    pub expectation_when_shared: f64,
    pub expectation_when_withheld: f64,
    pub nonnegative: bool,
    pub zero_when_withheld: bool,
}

pub fn check_reward_conditions(
    reward: &dyn InformationReward,
    model: &MarkovModel,
    belief: &Belief,
    agent: Agent,
    tol: f64,
) -> RewardConditions {
    let shared = reward.expected_when_shared(model, belief, agent);
    let mut withheld = 0.0;
    for x in 0..model.num_states() {
        for y in 0..model.num_obs(agent) {
            let p = belief[x] * model.emission(agent, x, y);
            if p > 0.0 {
                withheld += p * reward.pointwise(model, agent, belief, x, y, Signal::Epsilon);
            }
        }
    }
    RewardConditions {
        expectation_when_shared: shared,
        expectation_when_withheld: withheld,
        nonnegative: shared >= -tol,
        zero_when_withheld: withheld.abs() <= tol,
    }
}

fn check_region_dim(belief: &Belief, region: &Region) -> Result<()> {
    if belief.len() != region.grid().num_states() {
        return Err(Error::GridMismatch(format!(
            "belief has {} entries, region grid has {} states",
            belief.len(),
            region.grid().num_states()
        )));
    }
    Ok(())
}

/// `r̃(s, π)`: the reception gain when cooperation is intact and the belief
/// lies in the other agent's cooperation region, zero otherwise.
pub fn cgt_reward(
    model: &MarkovModel,
    s: SharingFlag,
    belief: &Belief,
    opp_region: &Region,
    agent: Agent,
) -> Result<f64> {
    check_region_dim(belief, opp_region)?;
    if !s.is_cooperating() || !opp_region.contains(belief)? {
        return Ok(0.0);
    }
    Ok(conditional_mutual_information(model, belief, agent))
}

/// `r̃(s, π) − a·c`.
pub fn stage_reward(
    model: &MarkovModel,
    s: SharingFlag,
    belief: &Belief,
    opp_region: &Region,
    agent: Agent,
    own_action: Action,
    params: &GameParams,
) -> Result<f64> {
    let gain = cgt_reward(model, s, belief, opp_region, agent)?;
    Ok(gain - f64::from(own_action.bit()) * params.cost(agent))
}

/// Strategy-weighted reception gain: the probability that the other agent
/// shares times the conditional mutual information.
pub fn expected_reception_gain(
    model: &MarkovModel,
    belief: &Belief,
    opp_share_prob: f64,
    agent: Agent,
) -> f64 {
    assert!(
        (0.0..=1.0).contains(&opp_share_prob),
        "share probability {opp_share_prob} outside [0, 1]"
    );
    opp_share_prob * conditional_mutual_information(model, belief, agent)
}
