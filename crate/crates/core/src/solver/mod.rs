//! Best response of one agent against a CGT opponent.
//!
//! The best-response problem is a POMDP whose information state is the
//! pair (flag, belief). With the flag at 0 the value is identically zero,
//! so only the flag-1 slice is solved, on the simplex grid:
//!
//! ```text
//! V(π) = r̃(π) + max{0, −c + δ Σ P(y, y' | π) V(f(π, y, y'))}   for π ∈ C
//! V(π) = 0                                                      for π ∉ C
//! ```
//!
//! Successor beliefs off the grid are valued by linear interpolation for
//! two states and by the nearest grid point otherwise.

mod pomcp;

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    conditional_mutual_information, cooperative_successor, Action, Agent, Belief, MarkovModel,
};
use crate::reward::{cgt_reward, GameParams, InformationReward};
use crate::strategy::{coordinate_header, Region, SharingFlag, SimplexGrid};

pub use pomcp::{pomcp_plan, Exploration, PomcpConfig, PomcpResult, Rollout};

/// Sparse weights `(grid index, weight)` whose dot product with a value
/// vector evaluates a function at an off-grid belief.
pub(crate) fn interpolation_stencil(grid: &SimplexGrid, belief: &Belief) -> Vec<(usize, f64)> {
    if grid.num_states() == 2 {
        let r = grid.resolution();
        let pos = (belief[0] * r as f64).clamp(0.0, r as f64);
        let lo = (pos.floor() as u32).min(r - 1);
        let frac = pos - lo as f64;
        if frac == 0.0 {
            vec![(lo as usize, 1.0)]
        } else if frac == 1.0 {
            vec![(lo as usize + 1, 1.0)]
        } else {
            vec![(lo as usize, 1.0 - frac), (lo as usize + 1, frac)]
        }
    } else {
        vec![(grid.nearest_unchecked(belief.probs()), 1.0)]
    }
}

/// Precomputed per-agent dynamics on a grid: the reception gain at every
/// grid point and the sparse expected-successor operator under mutual
/// sharing. Reusable across opponent regions and cost levels.
#[derive(Debug, Clone)]
pub struct BestResponseProblem {
    grid: Arc<SimplexGrid>,
    agent: Agent,
    gains: Vec<f64>,
    successors: Vec<Vec<(usize, f64)>>,
}

impl BestResponseProblem {
    pub fn new(
        model: &MarkovModel,
        grid: &Arc<SimplexGrid>,
        agent: Agent,
    ) -> Result<BestResponseProblem> {
        BestResponseProblem::with_reward(model, grid, agent, &crate::reward::MutualInformation)
    }

    /// Same as [`BestResponseProblem::new`] with a custom reception gain.
    pub fn with_reward(
        model: &MarkovModel,
        grid: &Arc<SimplexGrid>,
        agent: Agent,
        reward: &dyn InformationReward,
    ) -> Result<BestResponseProblem> {
        if grid.num_states() != model.num_states() {
            return Err(Error::GridMismatch(format!(
                "grid has {} states, model has {}",
                grid.num_states(),
                model.num_states()
            )));
        }
        let opp = agent.other();
        let rows: Vec<(f64, Vec<(usize, f64)>)> = grid
            .points()
            .par_iter()
            .map(|p| {
                let gain = reward.expected_when_shared(model, p, agent);
                let mut row: Vec<(usize, f64)> = Vec::new();
                for y in 0..model.num_obs(agent) {
                    for z in 0..model.num_obs(opp) {
                        let Some((prob, next)) = cooperative_successor(model, p, agent, y, z)
                        else {
                            continue;
                        };
                        for (j, w) in interpolation_stencil(grid, &next) {
                            match row.iter_mut().find(|(k, _)| *k == j) {
                                Some(slot) => slot.1 += prob * w,
                                None => row.push((j, prob * w)),
                            }
                        }
                    }
                }
                row.sort_by_key(|&(j, _)| j);
                (gain, row)
            })
            .collect();
        let (gains, successors) = rows.into_iter().unzip();
        Ok(BestResponseProblem {
            grid: Arc::clone(grid),
            agent,
            gains,
            successors,
        })
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    /// Reception gain at each grid point when the opponent shares.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    /// Largest grid gain, the `R_max` of the contraction bounds.
    pub fn max_gain(&self) -> f64 {
        self.gains.iter().copied().fold(0.0, f64::max)
    }

    /// `E[V(f(π_i, y, y'))]` under mutual sharing.
    #[inline]
    pub fn expected_next(&self, index: usize, values: &[f64]) -> f64 {
        self.successors[index]
            .iter()
            .map(|&(j, w)| w * values[j])
            .sum()
    }

    fn check_region(&self, region: &Region) -> Result<()> {
        if **region.grid() != *self.grid {
            return Err(Error::GridMismatch(format!(
                "region grid ({}, {}) differs from the solver grid ({}, {})",
                region.grid().num_states(),
                region.grid().resolution(),
                self.grid.num_states(),
                self.grid.resolution()
            )));
        }
        Ok(())
    }

    /// Value iteration from `V ≡ 0` with Jacobi sweeps.
    pub fn solve(&self, opp_region: &Region, params: &GameParams) -> Result<ValueTable> {
        self.check_region(opp_region)?;
        params.validate()?;
        let c = params.cost(self.agent);
        let delta = params.delta;
        let n = self.grid.len();
        let mut values = vec![0.0; n];
        let mut next = vec![0.0; n];
        let mut history = Vec::new();
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < params.max_iterations {
            next.par_iter_mut()
                .with_min_len(512)
                .enumerate()
                .for_each(|(i, slot)| {
                    *slot = if opp_region.contains_index(i) {
                        let share = -c + delta * self.expected_next(i, &values);
                        self.gains[i] + share.max(0.0)
                    } else {
                        0.0
                    };
                });
            residual = values
                .iter()
                .zip(&next)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            std::mem::swap(&mut values, &mut next);
            iterations += 1;
            history.push(residual);
            if residual < params.vi_tolerance {
                break;
            }
        }
        Ok(ValueTable {
            grid: Arc::clone(&self.grid),
            values,
            opp_region: opp_region.clone(),
            agent: self.agent,
            residual,
            iterations,
            converged: residual < params.vi_tolerance,
            residual_history: history,
        })
    }

    /// Q-values at grid point `index` against the table's opponent region.
    pub fn q_at(&self, table: &ValueTable, index: usize, params: &GameParams) -> QValues {
        let c = params.cost(self.agent);
        if !table.opp_region.contains_index(index) {
            return QValues {
                defect: 0.0,
                share: 0.0 - c,
            };
        }
        let gain = self.gains[index];
        QValues {
            defect: gain,
            share: gain - c + params.delta * self.expected_next(index, &table.values),
        }
    }

    /// Grid points where sharing is a best response: `q_share ≥ q_defect`
    /// inside the opponent region. Points outside can only tie when the
    /// cost is zero, and the opponent never shares there, so they are
    /// excluded.
    pub fn greedy_region(&self, table: &ValueTable, params: &GameParams) -> Result<Region> {
        self.check_region(&table.opp_region)?;
        let c = params.cost(self.agent);
        let mask: Vec<bool> = (0..self.grid.len())
            .map(|i| {
                let q = self.q_at(table, i, params);
                q.share >= q.defect && (c > 0.0 || table.opp_region.contains_index(i))
            })
            .collect();
        if let Some(index) =
            (0..mask.len()).find(|&i| mask[i] && !table.opp_region.contains_index(i))
        {
            return Err(Error::OracleViolation { index });
        }
        Ok(Region::from_mask(&self.grid, mask))
    }
}

/// Pair of action values at `s = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QValues {
    pub defect: f64,
    pub share: f64,
}

impl QValues {
    pub fn gap(&self) -> f64 {
        self.share - self.defect
    }

    /// Greedy action, cooperating on ties.
    pub fn greedy(&self) -> Action {
        if self.share >= self.defect {
            Action::Share
        } else {
            Action::Defect
        }
    }
}

/// Solved flag-1 value slice `V(s = 1, ·)` on the grid.
#[derive(Debug, Clone)]
pub struct ValueTable {
    grid: Arc<SimplexGrid>,
    values: Vec<f64>,
    opp_region: Region,
    agent: Agent,
    residual: f64,
    iterations: usize,
    converged: bool,
    residual_history: Vec<f64>,
}

impl ValueTable {
    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn opp_region(&self) -> &Region {
        &self.opp_region
    }

    pub fn agent(&self) -> Agent {
        self.agent
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// `false` when the sweep limit was hit before reaching the tolerance.
    pub fn converged(&self) -> bool {
        self.converged
    }

    /// Sup-norm change of every sweep, in order.
    pub fn residual_history(&self) -> &[f64] {
        &self.residual_history
    }

    /// `V(s, π)`: zero for `s = 0`, interpolated from the grid otherwise.
    pub fn value(&self, s: SharingFlag, belief: &Belief) -> Result<f64> {
        if belief.len() != self.grid.num_states() {
            return Err(Error::GridMismatch(
                "belief dimension differs from the grid".into(),
            ));
        }
        if !s.is_cooperating() {
            return Ok(0.0);
        }
        Ok(interpolation_stencil(&self.grid, belief)
            .into_iter()
            .map(|(j, w)| w * self.values[j])
            .sum())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = coordinate_header(self.grid.num_states(), None);
        header.pop();
        header.push("value".into());
        w.write_record(&header)?;
        for (p, v) in self.grid.points().iter().zip(&self.values) {
            let mut rec: Vec<String> = p.probs().iter().map(|x| x.to_string()).collect();
            rec.push(v.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(())
    }
}

/// Solves agent `agent`'s best response against a CGT opponent sharing on
/// `opp_region`. A table that hit the sweep limit is returned with
/// `converged() == false`.
pub fn solve_best_response(
    model: &MarkovModel,
    opp_region: &Region,
    params: &GameParams,
    agent: Agent,
) -> Result<ValueTable> {
    BestResponseProblem::new(model, opp_region.grid(), agent)?.solve(opp_region, params)
}

/// `Q(1, π, ·)` at an arbitrary belief.
pub fn q_values(
    model: &MarkovModel,
    table: &ValueTable,
    belief: &Belief,
    params: &GameParams,
    agent: Agent,
) -> Result<QValues> {
    if agent != table.agent {
        return Err(Error::InvalidParams(format!(
            "table was solved for agent {}, not {agent}",
            table.agent
        )));
    }
    let gain = cgt_reward(
        model,
        SharingFlag::Cooperating,
        belief,
        &table.opp_region,
        agent,
    )?;
    let c = params.cost(agent);
    if !table.opp_region.contains(belief)? {
        return Ok(QValues {
            defect: gain,
            share: gain - c,
        });
    }
    let opp = agent.other();
    let mut expected = 0.0;
    for y in 0..model.num_obs(agent) {
        for z in 0..model.num_obs(opp) {
            if let Some((prob, next)) = cooperative_successor(model, belief, agent, y, z) {
                expected += prob * table.value(SharingFlag::Cooperating, &next)?;
            }
        }
    }
    Ok(QValues {
        defect: gain,
        share: gain - c + params.delta * expected,
    })
}

/// `Q(0, π, a) = −a·c`: after a deviation nobody shares again, so only the
/// cost of the current action remains.
pub fn punishment_q(action: Action, params: &GameParams, agent: Agent) -> f64 {
    -f64::from(action.bit()) * params.cost(agent)
}

/// Best-response cooperation region extracted from a solved table.
pub fn greedy_region(
    model: &MarkovModel,
    table: &ValueTable,
    params: &GameParams,
    agent: Agent,
) -> Result<Region> {
    if agent != table.agent {
        return Err(Error::InvalidParams(format!(
            "table was solved for agent {}, not {agent}",
            table.agent
        )));
    }
    BestResponseProblem::new(model, table.grid(), agent)?.greedy_region(table, params)
}

/// Largest reception gain over the grid for `agent`.
pub fn max_grid_gain(model: &MarkovModel, grid: &SimplexGrid, agent: Agent) -> f64 {
    grid.points()
        .iter()
        .map(|p| conditional_mutual_information(model, p, agent))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::bsc;
    use crate::strategy::cgt_action_at;

    fn base_model() -> MarkovModel {
        MarkovModel::with_bsc(vec![vec![0.8, 0.2], vec![0.15, 0.85]], 0.6, 0.6).unwrap()
    }

    #[test]
    fn stencil_hits_grid_points_exactly() {
        let g = SimplexGrid::build(2, 200).unwrap();
        assert_eq!(
            interpolation_stencil(&g, &Belief::binary(0.5).unwrap()),
            vec![(100, 1.0)]
        );
        assert_eq!(
            interpolation_stencil(&g, &Belief::binary(1.0).unwrap()),
            vec![(200, 1.0)]
        );
        let s = interpolation_stencil(&g, &Belief::binary(0.5025).unwrap());
        assert_eq!(s.len(), 2);
        assert_eq!((s[0].0, s[1].0), (100, 101));
        assert!((s[0].1 - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_opponent_region_gives_zero_table() {
        let m = base_model();
        let g = SimplexGrid::build(2, 50).unwrap();
        let params = GameParams::symmetric(0.9, 0.027).unwrap();
        let t = solve_best_response(&m, &Region::empty(&g), &params, Agent::One).unwrap();
        assert!(t.values().iter().all(|&v| v == 0.0));
        assert!(t.converged());
        assert!(greedy_region(&m, &t, &params, Agent::One)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn free_sharing_keeps_everything() {
        let m = base_model();
        let g = SimplexGrid::build(2, 50).unwrap();
        let params = GameParams::symmetric(0.9, 0.0).unwrap();
        let t = solve_best_response(&m, &Region::full(&g), &params, Agent::Two).unwrap();
        let problem = BestResponseProblem::new(&m, &g, Agent::Two).unwrap();
        for i in 1..g.len() - 1 {
            assert!(t.values()[i] >= problem.gains()[i]);
            assert!(problem.gains()[i] > 0.0);
        }
        assert!(greedy_region(&m, &t, &params, Agent::Two)
            .unwrap()
            .is_full());
        let band = Region::from_indices(&g, 10..30).unwrap();
        let t = solve_best_response(&m, &band, &params, Agent::Two).unwrap();
        assert_eq!(greedy_region(&m, &t, &params, Agent::Two).unwrap(), band);
    }

    #[test]
    fn reference_setup_converges_within_contraction_bound() {
        let m = base_model();
        let g = SimplexGrid::build(2, 200).unwrap();
        let params = GameParams::symmetric(0.9, 0.027).unwrap();
        let problem = BestResponseProblem::new(&m, &g, Agent::One).unwrap();
        let t = problem.solve(&Region::full(&g), &params).unwrap();
        let r_max = problem.max_gain();
        let bound =
            ((params.vi_tolerance * (1.0 - params.delta) / r_max).ln() / params.delta.ln()).ceil();
        assert!(t.converged());
        assert!(t.residual() < params.vi_tolerance);
        assert!(
            t.iterations() as f64 <= bound,
            "{} > {bound}",
            t.iterations()
        );
    }

    #[test]
    fn geometric_residual_decay() {
        // A cost low enough for cooperation keeps the max-branch active, so
        // the sweep sequence is long enough to observe the contraction.
        let m = base_model();
        let g = SimplexGrid::build(2, 200).unwrap();
        let params = GameParams::symmetric(0.9, 0.022).unwrap();
        let t = solve_best_response(&m, &Region::full(&g), &params, Agent::One).unwrap();
        let h = t.residual_history();
        assert!(h.len() > 20);
        for w in h.windows(2).skip(3) {
            if w[0] > 1e-13 {
                assert!(
                    w[1] <= 0.9 * w[0] * (1.0 + 1e-9) + 1e-15,
                    "{} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn values_vanish_off_region_and_q_structure() {
        let m = base_model();
        let g = SimplexGrid::build(2, 100).unwrap();
        let params = GameParams::symmetric(0.9, 0.02).unwrap();
        let c_region = Region::from_indices(&g, 20..70).unwrap();
        let problem = BestResponseProblem::new(&m, &g, Agent::One).unwrap();
        let t = problem.solve(&c_region, &params).unwrap();
        for i in 0..g.len() {
            let q = problem.q_at(&t, i, &params);
            if !c_region.contains_index(i) {
                assert_eq!(t.values()[i], 0.0);
                assert_eq!(q.share - q.defect, -0.02);
            }
            // Grid and off-grid evaluation agree at grid points.
            let q2 = q_values(&m, &t, g.point(i), &params, Agent::One).unwrap();
            assert!((q.share - q2.share).abs() < 1e-12 && (q.defect - q2.defect).abs() < 1e-12);
        }
        assert_eq!(t.value(SharingFlag::Deviated, g.point(40)).unwrap(), 0.0);
        assert_eq!(punishment_q(Action::Share, &params, Agent::One), -0.02);
        assert_eq!(punishment_q(Action::Defect, &params, Agent::One), 0.0);
    }

    #[test]
    fn prohibitive_cost_empties_greedy_region() {
        let m = base_model();
        let g = SimplexGrid::build(2, 60).unwrap();
        let r_max = max_grid_gain(&m, &g, Agent::One);
        let c = 0.9 * r_max / (1.0 - 0.9) + 1e-6;
        let params = GameParams::symmetric(0.9, c).unwrap();
        let t = solve_best_response(&m, &Region::full(&g), &params, Agent::One).unwrap();
        assert!(greedy_region(&m, &t, &params, Agent::One)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn greedy_policy_is_a_cgt_policy() {
        let m = MarkovModel::new(
            vec![vec![0.8, 0.2], vec![0.15, 0.85]],
            [bsc(0.62), bsc(0.58)],
        )
        .unwrap();
        let g = SimplexGrid::build(2, 80).unwrap();
        let params = GameParams::symmetric(0.9, 0.021).unwrap();
        let c_region = Region::from_indices(&g, 5..75).unwrap();
        let problem = BestResponseProblem::new(&m, &g, Agent::Two).unwrap();
        let t = problem.solve(&c_region, &params).unwrap();
        let region = problem.greedy_region(&t, &params).unwrap();
        for i in 0..g.len() {
            let greedy = problem.q_at(&t, i, &params).greedy();
            let expected = if c_region.contains_index(i) {
                greedy
            } else {
                Action::Defect
            };
            assert_eq!(
                cgt_action_at(SharingFlag::Cooperating, i, &region),
                expected
            );
            assert_eq!(
                cgt_action_at(SharingFlag::Deviated, i, &region),
                Action::Defect
            );
        }
    }

    #[test]
    fn not_converged_is_flagged() {
        let m = base_model();
        let g = SimplexGrid::build(2, 50).unwrap();
        let params = GameParams::new(0.99, [0.0, 0.0], 1e-12, 5).unwrap();
        let t = solve_best_response(&m, &Region::full(&g), &params, Agent::One).unwrap();
        assert!(!t.converged());
        assert_eq!(t.iterations(), 5);
    }

    #[test]
    fn three_state_solve_runs() {
        let m = MarkovModel::new(
            vec![
                vec![0.7, 0.2, 0.1],
                vec![0.1, 0.8, 0.1],
                vec![0.2, 0.2, 0.6],
            ],
            [
                vec![vec![0.7, 0.3], vec![0.4, 0.6], vec![0.2, 0.8]],
                vec![vec![0.6, 0.4], vec![0.5, 0.5], vec![0.1, 0.9]],
            ],
        )
        .unwrap();
        let g = SimplexGrid::build(3, 12).unwrap();
        let params = GameParams::symmetric(0.9, 0.01).unwrap();
        let t = solve_best_response(&m, &Region::full(&g), &params, Agent::One).unwrap();
        assert!(t.converged());
        assert!(t.values().iter().all(|v| v.is_finite() && *v >= 0.0));
    }
}
