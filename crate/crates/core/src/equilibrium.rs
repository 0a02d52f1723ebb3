//! Cooperation-equilibrium regions: the best-response oracle, iterative
//! refinement toward the maximal region, equilibrium checks and the
//! absorbing-box construction.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{
    conditional_mutual_information, cooperative_successor, Agent, Belief, MarkovModel,
};
use crate::reward::GameParams;
use crate::solver::{BestResponseProblem, ValueTable};
use crate::strategy::{Region, SimplexGrid};

/// Absolute threshold separating a positive reception gain from zero.
pub const POSITIVITY_THRESHOLD: f64 = 1e-9;

/// Slack used when testing box membership of a belief.
pub const BOX_SLACK: f64 = 1e-12;

/// Result of one oracle evaluation `O^n(C)`.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub region: Region,
    pub table: ValueTable,
}

impl OracleOutcome {
    pub fn converged(&self) -> bool {
        self.table.converged()
    }
}

/// Outcome of iterative refinement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItraReport {
    pub agent: u8,
    pub region: Region,
    /// The halting test fired: `region` is a fixed point of the refinement map.
    pub halted_fixed_point: bool,
    pub iterations_used: usize,
    /// Size of each iterate, starting with the first application of the map.
    pub chain: Vec<usize>,
    /// A best-response solve hit its sweep limit; `region` is the last
    /// iterate computed from converged solves.
    pub tainted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumCheck {
    pub is_equilibrium: bool,
    /// Grid points where `O^n(C)` differs from `C`, per agent.
    pub witnesses: [Vec<usize>; 2],
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AbsorbingReport {
    /// `[λ_min(x'), λ_max(x')]` per state.
    #[serde(rename = "box")]
    pub bounds: Vec<(f64, f64)>,
    pub lambda_min: Vec<f64>,
    pub lambda_max: Vec<f64>,
    pub region: Region,
    pub is_absorbing: bool,
    pub r_inf: f64,
    pub is_positive: bool,
    pub epsilon_tilde: f64,
    pub suggested_cost: Option<f64>,
}

/// Holds the per-agent best-response problems on one grid so that
/// repeated oracle calls skip the successor precomputation.
#[derive(Debug, Clone)]
pub struct EquilibriumSolver {
    grid: Arc<SimplexGrid>,
    params: GameParams,
    problems: [BestResponseProblem; 2],
}

impl EquilibriumSolver {
    pub fn new(
        model: &MarkovModel,
        grid: &Arc<SimplexGrid>,
        params: &GameParams,
    ) -> Result<EquilibriumSolver> {
        params.validate()?;
        Ok(EquilibriumSolver {
            grid: Arc::clone(grid),
            params: *params,
            problems: [
                BestResponseProblem::new(model, grid, Agent::One)?,
                BestResponseProblem::new(model, grid, Agent::Two)?,
            ],
        })
    }

    pub fn grid(&self) -> &Arc<SimplexGrid> {
        &self.grid
    }

    pub fn params(&self) -> &GameParams {
        &self.params
    }

    pub fn problem(&self, agent: Agent) -> &BestResponseProblem {
        &self.problems[agent.index()]
    }

    /// Same solver with different costs; the precomputed dynamics are reused.
    pub fn with_params(&self, params: &GameParams) -> Result<EquilibriumSolver> {
        params.validate()?;
        Ok(EquilibriumSolver {
            grid: Arc::clone(&self.grid),
            params: *params,
            problems: self.problems.clone(),
        })
    }

    /// `O^n(C)`: where sharing is a best response for `agent` against a CGT
    /// opponent cooperating on `c_region`.
    pub fn oracle(&self, agent: Agent, c_region: &Region) -> Result<OracleOutcome> {
        let problem = self.problem(agent);
        let table = problem.solve(c_region, &self.params)?;
        let region = problem.greedy_region(&table, &self.params)?;
        Ok(OracleOutcome { region, table })
    }

    /// `F^n(C) = O^n(O^{-n}(C))`, or `None` when a solve did not converge.
    pub fn refine_once(&self, agent: Agent, c_region: &Region) -> Result<Option<Region>> {
        let inner = self.oracle(agent.other(), c_region)?;
        if !inner.converged() {
            return Ok(None);
        }
        let outer = self.oracle(agent, &inner.region)?;
        if !outer.converged() {
            return Ok(None);
        }
        Ok(Some(outer.region))
    }

    /// Applies `F^n` up to `k` times from `start`, halting once an iterate
    /// is mapped to itself.
    pub fn refine(&self, agent: Agent, start: &Region, k: usize) -> Result<ItraReport> {
        start.check_same_grid(&Region::empty(&self.grid))?;
        if k == 0 {
            return Err(Error::InvalidParams("refinement needs k >= 1".into()));
        }
        let mut report = ItraReport {
            agent: agent.number(),
            region: start.clone(),
            halted_fixed_point: false,
            iterations_used: 0,
            chain: Vec::new(),
            tainted: false,
        };
        let Some(mut current) = self.refine_once(agent, start)? else {
            report.tainted = true;
            return Ok(report);
        };
        for i in 1..=k {
            report.iterations_used = i;
            report.chain.push(current.len());
            report.region = current.clone();
            let Some(next) = self.refine_once(agent, &current)? else {
                report.tainted = true;
                return Ok(report);
            };
            if next == current {
                report.halted_fixed_point = true;
                return Ok(report);
            }
            current = next;
        }
        Ok(report)
    }

    /// Iterative refinement from the full grid.
    pub fn itra(&self, agent: Agent, k: usize) -> Result<ItraReport> {
        self.refine(agent, &Region::full(&self.grid), k)
    }

    /// `O^1(C) = C` and `O^2(C) = C`.
    pub fn check(&self, c_region: &Region) -> Result<EquilibriumCheck> {
        let mut witnesses: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        let mut converged = true;
        for agent in Agent::BOTH {
            let out = self.oracle(agent, c_region)?;
            converged &= out.converged();
            witnesses[agent.index()] = out.region.symmetric_difference(c_region)?;
        }
        Ok(EquilibriumCheck {
            is_equilibrium: witnesses.iter().all(Vec::is_empty),
            witnesses,
            converged,
        })
    }

    /// `δ·E[V(1, π') | π, a = 1] − c` at every grid point of `c_region`,
    /// against an opponent cooperating on `c_region`.
    pub fn continuation_margins(
        &self,
        agent: Agent,
        c_region: &Region,
    ) -> Result<Vec<(usize, f64)>> {
        let problem = self.problem(agent);
        let table = problem.solve(c_region, &self.params)?;
        let c = self.params.cost(agent);
        Ok(c_region
            .indices()
            .map(|i| {
                (
                    i,
                    self.params.delta * problem.expected_next(i, table.values()) - c,
                )
            })
            .collect())
    }
}

/// `O^n(C)` as a one-off call. Check `converged()` on the outcome.
pub fn oracle_o(
    model: &MarkovModel,
    c_region: &Region,
    params: &GameParams,
    agent: Agent,
) -> Result<OracleOutcome> {
    let problem = BestResponseProblem::new(model, c_region.grid(), agent)?;
    let table = problem.solve(c_region, params)?;
    let region = problem.greedy_region(&table, params)?;
    Ok(OracleOutcome { region, table })
}

/// Iterative refinement for `agent` on `grid`.
pub fn itra(
    model: &MarkovModel,
    params: &GameParams,
    grid: &Arc<SimplexGrid>,
    k: usize,
    agent: Agent,
) -> Result<ItraReport> {
    EquilibriumSolver::new(model, grid, params)?.itra(agent, k)
}

pub fn is_equilibrium_region(
    model: &MarkovModel,
    c_region: &Region,
    params: &GameParams,
) -> Result<EquilibriumCheck> {
    EquilibriumSolver::new(model, c_region.grid(), params)?.check(c_region)
}

fn in_box(belief: &Belief, lo: &[f64], hi: &[f64]) -> bool {
    belief
        .probs()
        .iter()
        .zip(lo.iter().zip(hi))
        .all(|(&p, (&l, &h))| p >= l - BOX_SLACK && p <= h + BOX_SLACK)
}

/// Box spanned by the column extremes of the transition kernel, its grid
/// points, and the infimum reception gain over them.
pub fn absorbing_box(
    model: &MarkovModel,
    grid: &Arc<SimplexGrid>,
    params: &GameParams,
    epsilon_tilde: f64,
) -> Result<AbsorbingReport> {
    params.validate()?;
    if !(epsilon_tilde > 0.0 && epsilon_tilde <= params.delta) {
        return Err(Error::InvalidParams(format!(
            "epsilon_tilde must lie in (0, {}], got {epsilon_tilde}",
            params.delta
        )));
    }
    if grid.num_states() != model.num_states() {
        return Err(Error::GridMismatch(format!(
            "grid has {} states, model has {}",
            grid.num_states(),
            model.num_states()
        )));
    }
    let n = model.num_states();
    let column = |x2: usize| (0..n).map(move |x| model.transition(x, x2));
    let lambda_min: Vec<f64> = (0..n)
        .map(|x2| column(x2).fold(f64::INFINITY, f64::min))
        .collect();
    let lambda_max: Vec<f64> = (0..n)
        .map(|x2| column(x2).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let region = Region::from_predicate(grid, |p| in_box(p, &lambda_min, &lambda_max));

    let mut is_absorbing = true;
    'outer: for i in region.indices() {
        let p = grid.point(i);
        for y in 0..model.num_obs(Agent::One) {
            for z in 0..model.num_obs(Agent::Two) {
                if let Some((_, next)) = cooperative_successor(model, p, Agent::One, y, z) {
                    if !in_box(&next, &lambda_min, &lambda_max) {
                        is_absorbing = false;
                        break 'outer;
                    }
                }
            }
        }
    }

    let r_inf = if region.is_empty() {
        0.0
    } else {
        Agent::BOTH
            .iter()
            .flat_map(|&a| {
                region
                    .indices()
                    .map(move |i| conditional_mutual_information(model, grid.point(i), a))
            })
            .fold(f64::INFINITY, f64::min)
    };
    let is_positive = r_inf > POSITIVITY_THRESHOLD;
    Ok(AbsorbingReport {
        bounds: lambda_min
            .iter()
            .copied()
            .zip(lambda_max.iter().copied())
            .collect(),
        lambda_min,
        lambda_max,
        region,
        is_absorbing,
        r_inf,
        is_positive,
        epsilon_tilde,
        suggested_cost: is_positive.then_some(epsilon_tilde * r_inf),
    })
}

/// Whether the state and the other agent's observation are dependent given
/// the agent's own observation under `belief`.
pub fn corollary_dependence_check(model: &MarkovModel, belief: &Belief, agent: Agent) -> bool {
    conditional_mutual_information(model, belief, agent) > POSITIVITY_THRESHOLD
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_model() -> MarkovModel {
        MarkovModel::with_bsc(vec![vec![0.8, 0.2], vec![0.15, 0.85]], 0.6, 0.6).unwrap()
    }

    #[test]
    fn oracle_basics() {
        let m = base_model();
        let g = SimplexGrid::build(2, 40).unwrap();
        let p = GameParams::symmetric(0.9, 0.02).unwrap();
        assert!(oracle_o(&m, &Region::empty(&g), &p, Agent::One)
            .unwrap()
            .region
            .is_empty());
        let free = GameParams::symmetric(0.9, 0.0).unwrap();
        let c = Region::from_indices(&g, [3, 4, 5, 20, 21, 30]).unwrap();
        assert_eq!(oracle_o(&m, &c, &free, Agent::Two).unwrap().region, c);
    }

    #[test]
    fn itra_trivial_cases() {
        let m = base_model();
        let g = SimplexGrid::build(2, 40).unwrap();
        let free = GameParams::symmetric(0.9, 0.0).unwrap();
        let r = itra(&m, &free, &g, 5, Agent::One).unwrap();
        assert!(r.halted_fixed_point && r.region.is_full());
        assert_eq!(r.iterations_used, 1);

        let huge = GameParams::symmetric(0.9, 1.0).unwrap();
        let r = itra(&m, &huge, &g, 5, Agent::One).unwrap();
        assert!(r.halted_fixed_point && r.region.is_empty());
        assert!(r.iterations_used <= 2);
    }

    #[test]
    fn itra_chain_shrinks_to_an_equilibrium() {
        let m = base_model();
        let g = SimplexGrid::build(2, 100).unwrap();
        let p = GameParams::symmetric(0.9, 0.022).unwrap();
        let solver = EquilibriumSolver::new(&m, &g, &p).unwrap();
        let r = solver.itra(Agent::One, 50).unwrap();
        assert!(r.halted_fixed_point && !r.tainted);
        assert!(r.chain.windows(2).all(|w| w[1] <= w[0]));
        assert!(!r.region.is_empty() && !r.region.is_full());
        assert!(solver.check(&r.region).unwrap().is_equilibrium);
        for (_, margin) in solver.continuation_margins(Agent::One, &r.region).unwrap() {
            assert!(margin >= -2.0 * p.vi_tolerance);
        }
    }

    #[test]
    fn equilibrium_checks() {
        let m = base_model();
        let g = SimplexGrid::build(2, 50).unwrap();
        let p = GameParams::symmetric(0.9, 0.027).unwrap();
        assert!(
            is_equilibrium_region(&m, &Region::empty(&g), &p)
                .unwrap()
                .is_equilibrium
        );
        let free = GameParams::symmetric(0.9, 0.0).unwrap();
        assert!(
            is_equilibrium_region(&m, &Region::full(&g), &free)
                .unwrap()
                .is_equilibrium
        );
        let check = is_equilibrium_region(&m, &Region::full(&g), &p).unwrap();
        assert!(!check.is_equilibrium);
        assert!(check.witnesses[0].contains(&0) && check.witnesses[0].contains(&50));
    }

    #[test]
    fn base_box() {
        let m = base_model();
        let g = SimplexGrid::build(2, 200).unwrap();
        let p = GameParams::symmetric(0.9, 0.0).unwrap();
        let rep = absorbing_box(&m, &g, &p, 0.9).unwrap();
        assert_eq!(rep.bounds, vec![(0.15, 0.8), (0.2, 0.85)]);
        assert!(rep.is_absorbing && rep.is_positive);
        assert_eq!(rep.region.intervals().unwrap(), vec![(0.15, 0.8)]);
        let cost = rep.suggested_cost.unwrap();
        let p = GameParams::symmetric(0.9, cost).unwrap();
        assert!(
            is_equilibrium_region(&m, &rep.region, &p)
                .unwrap()
                .is_equilibrium
        );

        let flat = MarkovModel::with_bsc(vec![vec![0.8, 0.2], vec![0.15, 0.85]], 0.5, 0.6).unwrap();
        let rep = absorbing_box(&flat, &g, &GameParams::symmetric(0.9, 0.0).unwrap(), 0.5).unwrap();
        assert!(!rep.is_positive && rep.suggested_cost.is_none());
        assert!(absorbing_box(&m, &g, &p, 0.95).is_err());
    }

    #[test]
    fn dependence() {
        let m = base_model();
        assert!(corollary_dependence_check(
            &m,
            &Belief::uniform(2),
            Agent::One
        ));
        assert!(!corollary_dependence_check(
            &m,
            &Belief::vertex(2, 0),
            Agent::One
        ));
        let exact = MarkovModel::new(
            vec![vec![0.8, 0.2], vec![0.15, 0.85]],
            [vec![vec![1.0, 0.0], vec![0.0, 1.0]], crate::model::bsc(0.6)],
        )
        .unwrap();
        assert!(!corollary_dependence_check(
            &exact,
            &Belief::uniform(2),
            Agent::One
        ));
    }
}
