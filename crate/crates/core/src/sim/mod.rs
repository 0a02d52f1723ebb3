//! Forward simulation of the game under CGT profiles, Monte-Carlo value
//! estimation, one-shot deviation tests and the finite-horizon check.

mod finite;

use std::io::Write;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    belief_update, conditional_mutual_information, Action, Agent, Belief, MarkovModel, Signal,
};
use crate::reward::{stage_reward, GameParams, InformationReward, MutualInformation};
use crate::strategy::{cgt_action, flag_update, Region, SharingFlag};

pub use finite::{finite_horizon_bruteforce, Verdict, PROFILE_LIMIT};

/// Draws an index from a probability vector with one uniform variate.
pub(crate) fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Independent stream for rollout `index` derived from one seed.
pub(crate) fn rollout_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A pair of CGT strategies, one cooperation region per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct CgtProfile {
    regions: [Region; 2],
}

impl CgtProfile {
    pub fn new(region_1: Region, region_2: Region) -> Result<CgtProfile> {
        region_1.check_same_grid(&region_2)?;
        Ok(CgtProfile {
            regions: [region_1, region_2],
        })
    }

    pub fn symmetric(region: Region) -> CgtProfile {
        CgtProfile {
            regions: [region.clone(), region],
        }
    }

    pub fn region(&self, agent: Agent) -> &Region {
        &self.regions[agent.index()]
    }

    /// Short text form, e.g. `cgt(120/201,120/201)`.
    pub fn describe(&self) -> String {
        format!(
            "cgt({}/{},{}/{})",
            self.regions[0].len(),
            self.regions[0].grid().len(),
            self.regions[1].len(),
            self.regions[1].grid().len()
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Step {
    pub t: usize,
    pub state: usize,
    pub obs: [usize; 2],
    pub actions: [Action; 2],
    pub signals: [Signal; 2],
    /// Flag in force when the actions were chosen.
    pub flag: SharingFlag,
    /// Beliefs held when the actions were chosen.
    pub beliefs: [Belief; 2],
    pub stage_rewards: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub horizon: usize,
    pub seed: u64,
    pub profile: String,
    pub steps: Vec<Step>,
}

impl TrajectoryRecord {
    /// One row per step. `signal_n` is what agent `n` sent.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let n = self.steps.first().map_or(0, |s| s.beliefs[0].len());
        let mut header: Vec<String> = [
            "t", "state", "obs_1", "obs_2", "action_1", "action_2", "signal_1", "signal_2", "flag",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        for agent in 1..=2 {
            header.extend((0..n).map(|x| format!("belief_{agent}_{x}")));
        }
        header.push("reward_1".into());
        header.push("reward_2".into());
        w.write_record(&header)?;
        for s in &self.steps {
            let mut rec = vec![
                s.t.to_string(),
                s.state.to_string(),
                s.obs[0].to_string(),
                s.obs[1].to_string(),
                s.actions[0].bit().to_string(),
                s.actions[1].bit().to_string(),
                s.signals[0].to_string(),
                s.signals[1].to_string(),
                s.flag.bit().to_string(),
            ];
            for b in &s.beliefs {
                rec.extend(b.probs().iter().map(|p| p.to_string()));
            }
            rec.push(s.stage_rewards[0].to_string());
            rec.push(s.stage_rewards[1].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Mean discounted return of one agent over independent rollouts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Bound on the discounted rewards cut off by the finite horizon.
    pub truncation_bound: f64,
}

struct Start<'a> {
    belief: &'a Belief,
    flag: SharingFlag,
    /// Action forced on one agent at `t = 0`.
    forced: Option<(Agent, Action)>,
}

/// Runs one path. Every step consumes exactly three uniforms (two
/// observations and the next state) after the initial state draw, so
/// paths that differ only in actions share their randomness.
fn rollout(
    model: &MarkovModel,
    profile: &CgtProfile,
    params: &GameParams,
    start: &Start,
    horizon: usize,
    rng: &mut ChaCha8Rng,
    mut record: Option<&mut Vec<Step>>,
) -> Result<[f64; 2]> {
    let mut state = sample_index(rng, start.belief.probs());
    let mut beliefs = [start.belief.clone(), start.belief.clone()];
    let mut flag = start.flag;
    let mut returns = [0.0; 2];
    let mut discount = 1.0;
    for t in 0..horizon {
        let obs = [
            sample_index(rng, model.channel(Agent::One).row(state)),
            sample_index(rng, model.channel(Agent::Two).row(state)),
        ];
        let mut actions = [Action::Defect; 2];
        for agent in Agent::BOTH {
            actions[agent.index()] = match start.forced {
                Some((a, act)) if t == 0 && a == agent => act,
                _ => cgt_action(flag, &beliefs[agent.index()], profile.region(agent))?,
            };
        }
        let signals = [
            Signal::emit(obs[0], actions[0]),
            Signal::emit(obs[1], actions[1]),
        ];
        let mut rewards = [0.0; 2];
        for agent in Agent::BOTH {
            let i = agent.index();
            rewards[i] = stage_reward(
                model,
                flag,
                &beliefs[i],
                profile.region(agent.other()),
                agent,
                actions[i],
                params,
            )?;
            returns[i] += discount * rewards[i];
        }
        let next_beliefs = [
            belief_update(
                model,
                &beliefs[0],
                Agent::One,
                obs[0],
                signals[1],
                actions[1],
            )?,
            belief_update(
                model,
                &beliefs[1],
                Agent::Two,
                obs[1],
                signals[0],
                actions[0],
            )?,
        ];
        let next_state = sample_index(rng, model.transition_matrix().row(state));
        if let Some(steps) = record.as_deref_mut() {
            steps.push(Step {
                t,
                state,
                obs,
                actions,
                signals,
                flag,
                beliefs: beliefs.clone(),
                stage_rewards: rewards,
            });
        }
        flag = flag_update(flag, actions[0], actions[1]);
        beliefs = next_beliefs;
        state = next_state;
        discount *= params.delta;
    }
    Ok(returns)
}

fn check_inputs(model: &MarkovModel, profile: &CgtProfile, belief: &Belief) -> Result<()> {
    if belief.len() != model.num_states()
        || profile.region(Agent::One).grid().num_states() != model.num_states()
    {
        return Err(Error::DimensionMismatch(
            "belief, profile and model disagree on the state count".into(),
        ));
    }
    Ok(())
}

/// Samples one path of the game from the common prior `initial_belief`
/// with cooperation intact at `t = 0`.
pub fn simulate(
    model: &MarkovModel,
    profile: &CgtProfile,
    params: &GameParams,
    initial_belief: &Belief,
    horizon: usize,
    seed: u64,
) -> Result<TrajectoryRecord> {
    check_inputs(model, profile, initial_belief)?;
    if horizon == 0 {
        return Err(Error::InvalidParams("horizon must be at least 1".into()));
    }
    let mut steps = Vec::with_capacity(horizon);
    let start = Start {
        belief: initial_belief,
        flag: SharingFlag::Cooperating,
        forced: None,
    };
    rollout(
        model,
        profile,
        params,
        &start,
        horizon,
        &mut rollout_rng(seed, 0),
        Some(&mut steps),
    )?;
    Ok(TrajectoryRecord {
        horizon,
        seed,
        profile: profile.describe(),
        steps,
    })
}

/// `max |r̃ − a·c|` over the grid for `agent`.
fn max_abs_stage_reward(
    model: &MarkovModel,
    profile: &CgtProfile,
    params: &GameParams,
    agent: Agent,
) -> f64 {
    let grid = profile.region(agent).grid();
    let max_gain = grid
        .points()
        .iter()
        .map(|p| conditional_mutual_information(model, p, agent))
        .fold(0.0, f64::max);
    max_gain.max(params.cost(agent))
}

fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    // Shifted by the first sample so that constant samples give an exact mean.
    let base = samples[0];
    let mean = base + samples.iter().map(|v| v - base).sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn run_rollouts(
    model: &MarkovModel,
    profile: &CgtProfile,
    params: &GameParams,
    start: &Start,
    agent: Agent,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..n_rollouts)
        .into_par_iter()
        .map(|i| {
            let mut rng = rollout_rng(seed, i as u64);
            rollout(model, profile, params, start, horizon, &mut rng, None)
                .map(|r| r[agent.index()])
        })
        .collect()
}

fn check_budget(n_rollouts: usize, horizon: usize) -> Result<()> {
    if n_rollouts < 2 || horizon == 0 {
        return Err(Error::InvalidParams(
            "need at least 2 rollouts and horizon 1".into(),
        ));
    }
    Ok(())
}

/// Monte-Carlo estimate of `agent`'s discounted return from
/// `(s = 1, initial_belief)` under `profile`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_value(
    model: &MarkovModel,
    profile: &CgtProfile,
    params: &GameParams,
    initial_belief: &Belief,
    agent: Agent,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<ValueEstimate> {
    check_inputs(model, profile, initial_belief)?;
    check_budget(n_rollouts, horizon)?;
    let start = Start {
        belief: initial_belief,
        flag: SharingFlag::Cooperating,
        forced: None,
    };
    let samples = run_rollouts(
        model, profile, params, &start, agent, n_rollouts, horizon, seed,
    )?;
    let (mean, stderr) = mean_stderr(&samples);
    Ok(ValueEstimate {
        mean,
        stderr,
        truncation_bound: params.delta.powi(horizon as i32)
            * max_abs_stage_reward(model, profile, params, agent)
            / (1.0 - params.delta),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub flag: SharingFlag,
    pub prescribed: Action,
    pub deviation: Action,
    pub prescribed_value: ValueEstimate,
    pub deviation_value: ValueEstimate,
    /// Mean of the paired differences deviation − prescription.
    pub gap: f64,
    pub gap_stderr: f64,
    pub threshold: f64,
    pub violation: bool,
}

/// Compares the prescribed CGT action at `(flag, belief)` with the one-shot
/// deviation, both followed by the symmetric profile on `c_region`. Both
/// branches use the same random streams.
#[allow(clippy::too_many_arguments)]
pub fn deviation_test(
    model: &MarkovModel,
    c_region: &Region,
    params: &GameParams,
    belief: &Belief,
    flag: SharingFlag,
    agent: Agent,
    n_rollouts: usize,
    horizon: usize,
    seed: u64,
) -> Result<DeviationReport> {
    let profile = CgtProfile::symmetric(c_region.clone());
    check_inputs(model, &profile, belief)?;
    check_budget(n_rollouts, horizon)?;
    let prescribed = cgt_action(flag, belief, c_region)?;
    let deviation = match prescribed {
        Action::Share => Action::Defect,
        Action::Defect => Action::Share,
    };
    let run = |action| {
        let start = Start {
            belief,
            flag,
            forced: Some((agent, action)),
        };
        run_rollouts(
            model, &profile, params, &start, agent, n_rollouts, horizon, seed,
        )
    };
    let presc = run(prescribed)?;
    let dev = run(deviation)?;
    let diffs: Vec<f64> = dev.iter().zip(&presc).map(|(d, p)| d - p).collect();
    let (gap, gap_stderr) = mean_stderr(&diffs);
    let truncation_bound = params.delta.powi(horizon as i32)
        * max_abs_stage_reward(model, &profile, params, agent)
        / (1.0 - params.delta);
    let estimate = |s: &[f64]| {
        let (mean, stderr) = mean_stderr(s);
        ValueEstimate {
            mean,
            stderr,
            truncation_bound,
        }
    };
    let threshold = 3.0 * gap_stderr + truncation_bound + 2.0 * params.vi_tolerance;
    Ok(DeviationReport {
        flag,
        prescribed,
        deviation,
        prescribed_value: estimate(&presc),
        deviation_value: estimate(&dev),
        gap,
        gap_stderr,
        threshold,
        violation: gap > threshold,
    })
}

/// Sample average of the pathwise log-likelihood-ratio gain when the other
/// agent shares, with its standard error. Converges to the conditional
/// mutual information at `belief`.
pub fn pathwise_gain_average(
    model: &MarkovModel,
    belief: &Belief,
    agent: Agent,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if belief.len() != model.num_states() {
        return Err(Error::DimensionMismatch(
            "belief dimension differs from the model".into(),
        ));
    }
    if n_samples < 2 {
        return Err(Error::InvalidParams("need at least 2 samples".into()));
    }
    let mut rng = rollout_rng(seed, 0);
    let opp = agent.other();
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            let x = sample_index(&mut rng, belief.probs());
            let y = sample_index(&mut rng, model.channel(agent).row(x));
            let z = sample_index(&mut rng, model.channel(opp).row(x));
            MutualInformation.pointwise(model, agent, belief, x, y, Signal::Obs(z))
        })
        .collect();
    Ok(mean_stderr(&samples))
}
