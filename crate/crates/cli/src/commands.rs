use std::fs;
use std::path::Path;

use disg_core::strategy::write_stacked_csv;
use disg_core::{
    absorbing_box, estimate_value, finite_horizon_bruteforce, simulate as run_path, Agent,
    CgtProfile, EquilibriumSolver, GameParams, ItraReport, MarkovModel, Region, SimplexGrid,
};
use serde_json::{json, Value};

use crate::config::{prior, ExperimentConfig};
use crate::error::CliError;
use crate::plot::emit_region_plot;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json values serialize");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn region_csv(regions: &[(String, Region)]) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write_stacked_csv(regions, &mut buf)?;
    Ok(buf)
}

struct Setup {
    cfg: ExperimentConfig,
    model: MarkovModel,
    params: GameParams,
    resolution: u32,
}

fn setup(config: &Path, grid: Option<u32>) -> Result<Setup, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let model = cfg.build_model()?;
    let params = cfg.build_params()?;
    let resolution = grid.unwrap_or(cfg.grid.resolution);
    if resolution == 0 {
        return Err(CliError::Config(
            "grid resolution must be at least 1".into(),
        ));
    }
    Ok(Setup {
        cfg,
        model,
        params,
        resolution,
    })
}

fn agent(cfg: &ExperimentConfig) -> Agent {
    Agent::from_number(cfg.itra.agent).expect("agent checked on parse")
}

fn run_itra(
    model: &MarkovModel,
    params: &GameParams,
    resolution: u32,
    agent: Agent,
    k: usize,
) -> Result<ItraReport, CliError> {
    let grid = SimplexGrid::build(model.num_states(), resolution)?;
    Ok(EquilibriumSolver::new(model, &grid, params)?.itra(agent, k)?)
}

fn tainted(report: &ItraReport) -> CliError {
    CliError::NotConverged(format!(
        "a best-response solve hit the sweep limit after {} refinement steps",
        report.iterations_used
    ))
}

pub fn validate(config: &Path) -> Result<(), CliError> {
    let s = setup(config, None)?;
    println!(
        "{}",
        json!({
            "ok": true,
            "num_states": s.model.num_states(),
            "num_obs": [s.model.num_obs(Agent::One), s.model.num_obs(Agent::Two)],
            "delta": s.params.delta,
            "costs": s.params.cost,
        })
    );
    Ok(())
}

pub fn solve(config: &Path, out: &Path, grid: Option<u32>) -> Result<(), CliError> {
    let s = setup(config, grid)?;
    let report = run_itra(
        &s.model,
        &s.params,
        s.resolution,
        agent(&s.cfg),
        s.cfg.itra.k,
    )?;
    ensure_dir(out)?;
    let regions = [("itra".to_string(), report.region.clone())];
    write_file(&out.join("region.csv"), &region_csv(&regions)?)?;
    write_json(
        &out.join("itra.json"),
        &json!({
            "delta": s.params.delta,
            "costs": s.params.cost,
            "k": s.cfg.itra.k,
            "report": report,
        }),
    )?;
    if s.model.num_states() == 2 {
        write_file(
            &out.join("region.svg"),
            emit_region_plot(&regions)?.as_bytes(),
        )?;
    }
    if report.tainted {
        return Err(tainted(&report));
    }
    Ok(())
}

pub fn bound(config: &Path, out: &Path, grid: Option<u32>) -> Result<(), CliError> {
    let s = setup(config, grid)?;
    let spec = s
        .cfg
        .bound
        .as_ref()
        .ok_or_else(|| CliError::Config("bound needs a `bound` section".into()))?;
    let g = SimplexGrid::build(s.model.num_states(), s.resolution)?;
    let report = absorbing_box(&s.model, &g, &s.params, spec.epsilon_tilde)?;
    let check = match report.suggested_cost {
        Some(c) if !report.region.is_empty() => {
            let params = s.params.with_cost([c, c]);
            Some(EquilibriumSolver::new(&s.model, &g, &params)?.check(&report.region)?)
        }
        _ => None,
    };
    ensure_dir(out)?;
    write_json(
        &out.join("bound.json"),
        &json!({
            "delta": s.params.delta,
            "report": report,
            "equilibrium_at_suggested_cost": check,
        }),
    )
}

pub fn simulate(
    config: &Path,
    out: &Path,
    grid: Option<u32>,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let s = setup(config, grid)?;
    let spec = s
        .cfg
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::Config("simulate needs a `simulate` section".into()))?;
    let seed = seed.unwrap_or(spec.seed);
    let start = prior(&spec.prior, s.model.num_states())?;
    let report = run_itra(
        &s.model,
        &s.params,
        s.resolution,
        agent(&s.cfg),
        s.cfg.itra.k,
    )?;
    if report.tainted {
        return Err(tainted(&report));
    }
    let profile = CgtProfile::symmetric(report.region.clone());
    let path = run_path(&s.model, &profile, &s.params, &start, spec.horizon, seed)?;
    ensure_dir(out)?;
    let mut buf = Vec::new();
    path.write_csv(&mut buf)?;
    write_file(&out.join("trajectory.csv"), &buf)?;
    if spec.rollouts > 0 {
        let values = Agent::BOTH
            .iter()
            .map(|&a| {
                estimate_value(
                    &s.model,
                    &profile,
                    &s.params,
                    &start,
                    a,
                    spec.rollouts,
                    spec.horizon,
                    seed,
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        write_json(
            &out.join("simulate.json"),
            &json!({
                "seed": seed,
                "horizon": spec.horizon,
                "rollouts": spec.rollouts,
                "region_size": report.region.len(),
                "values": values,
            }),
        )?;
    }
    Ok(())
}

pub fn finite_check(config: &Path, out: &Path) -> Result<(), CliError> {
    let s = setup(config, None)?;
    let spec =
        s.cfg.finite_check.as_ref().ok_or_else(|| {
            CliError::Config("finite-check needs a `finite_check` section".into())
        })?;
    let start = prior(&spec.prior, s.model.num_states())?;
    let verdict = finite_horizon_bruteforce(&s.model, &s.params, spec.horizon, &start)?;
    ensure_dir(out)?;
    write_json(&out.join("finite_check.json"), &json!(verdict))
}

pub fn sweep(config: &Path, out: &Path, grid: Option<u32>) -> Result<(), CliError> {
    let s = setup(config, grid)?;
    let entries = s
        .cfg
        .sweep
        .as_ref()
        .filter(|e| !e.is_empty())
        .ok_or_else(|| CliError::Config("sweep needs a non-empty `sweep` list".into()))?;
    let who = agent(&s.cfg);
    let mut regions = Vec::with_capacity(entries.len());
    let mut rows = Vec::with_capacity(entries.len());
    let mut any_tainted = None;
    for entry in entries {
        let model = s.cfg.build_model_with(entry.p1, entry.p2)?;
        let params = s.params.with_cost([entry.cost, entry.cost]);
        params.validate()?;
        let report = run_itra(&model, &params, s.resolution, who, s.cfg.itra.k)?;
        if report.tainted && any_tainted.is_none() {
            any_tainted = Some(tainted(&report));
        }
        let label = entry.label();
        rows.push(json!({
            "label": label,
            "cost": entry.cost,
            "p1": entry.p1,
            "p2": entry.p2,
            "size": report.region.len(),
            "intervals": report.region.intervals(),
            "halted_fixed_point": report.halted_fixed_point,
            "iterations_used": report.iterations_used,
            "tainted": report.tainted,
        }));
        regions.push((label, report.region));
    }
    ensure_dir(out)?;
    write_file(&out.join("sweep.csv"), &region_csv(&regions)?)?;
    write_json(
        &out.join("sweep.json"),
        &json!({ "delta": s.params.delta, "entries": rows }),
    )?;
    if s.model.num_states() == 2 {
        write_file(
            &out.join("sweep.svg"),
            emit_region_plot(&regions)?.as_bytes(),
        )?;
    }
    match any_tainted {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn plot(input: &Path, out: &Path) -> Result<(), CliError> {
    let text = fs::read(input).map_err(io_err(input))?;
    let labelled = text.starts_with(b"label,");
    let regions = if labelled {
        Region::read_stacked_csv(text.as_slice())?
    } else {
        vec![("region".to_string(), Region::read_csv(text.as_slice())?)]
    };
    let svg = emit_region_plot(&regions)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    write_file(out, svg.as_bytes())
}
