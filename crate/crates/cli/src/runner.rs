//! Route execution: builds the models from a validated config, runs the
//! requested route, and writes the declared artifacts.

use num_complex::Complex64;
use serde_json::json;
use sqpulse::collision::{self, CollisionModel};
use sqpulse::hilbert::{Checkpoint, DensityOperator, Operator, StateVector};
use sqpulse::pulse::PulseGrid;
use sqpulse::sme::{self, HierarchyState, Method, SmeModel};
use sqpulse::squeezed::{squeeze_coefficients_with_target, CoefficientTable};
use sqpulse::stats::pairwise_sum;
use sqpulse::trajectories::AnalyticModel;
use sqpulse::transfer;

use crate::artifacts::{ArtifactDir, StateSeries};
use crate::config::{Route, RunConfig};

/// Errors a route run can produce: numerical/model ones from the library
/// and I/O ones from artifact writing.
#[derive(Debug)]
pub enum RunError {
    Core(sqpulse::Error),
    Io(std::io::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Core(e) => write!(f, "{e}"),
            RunError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<sqpulse::Error> for RunError {
    fn from(e: sqpulse::Error) -> Self {
        RunError::Core(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e)
    }
}

pub type RunResult = Result<(), RunError>;

pub struct RunContext {
    pub config: RunConfig,
    pub artifacts: ArtifactDir,
    pub verbose: bool,
}

pub fn coefficients(config: &RunConfig) -> sqpulse::Result<CoefficientTable> {
    squeeze_coefficients_with_target(
        config.input.n,
        &config.squeeze_params()?,
        config.numerics.m_cut,
        config.numerics.coeff_deficit,
    )
}

fn ground_state(dim: usize) -> StateVector {
    StateVector::basis(dim, 0)
}

fn sme_model(config: &RunConfig) -> sqpulse::Result<SmeModel> {
    let mut model = SmeModel::new(
        config.build_system()?,
        config.squeeze_params()?,
        config.input.n,
        config.input.profile,
        config.n_cut(),
    )?;
    model.stress_limit = config.numerics.stress_limit;
    Ok(model)
}

/// Mean of per-trajectory checkpoint states with a fixed pairwise
/// reduction (thread-count independent).
fn mean_checkpoints(per_traj: &[Vec<Checkpoint>], dim: usize) -> Vec<Checkpoint> {
    if per_traj.is_empty() || per_traj[0].is_empty() {
        return Vec::new();
    }
    let n_points = per_traj[0].len();
    let n_traj = per_traj.len() as f64;
    (0..n_points)
        .map(|ci| {
            let mut mean = Operator::zeros(dim);
            for i in 0..dim {
                for j in 0..dim {
                    let re: Vec<f64> = per_traj
                        .iter()
                        .map(|cps| cps[ci].rho.re[i * dim + j])
                        .collect();
                    let im: Vec<f64> = per_traj
                        .iter()
                        .map(|cps| cps[ci].rho.im[i * dim + j])
                        .collect();
                    mean.set(
                        i,
                        j,
                        Complex64::new(pairwise_sum(&re) / n_traj, pairwise_sum(&im) / n_traj),
                    );
                }
            }
            Checkpoint {
                t: per_traj[0][ci].t,
                rho: DensityOperator::from_operator(&mean),
            }
        })
        .collect()
}

pub fn run_simulate(ctx: &RunContext) -> RunResult {
    match ctx.config.run.route {
        Route::Collision => run_collision(ctx),
        Route::Sme => run_sme(ctx),
        _ => unreachable!("validated in main"),
    }
}

fn run_collision(ctx: &RunContext) -> RunResult {
    let config = &ctx.config;
    let grid = PulseGrid::from_profile(
        &config.input.profile,
        config.input.t_start,
        config.input.t_end,
        config.numerics.bins,
    )?;
    let model = CollisionModel::new(
        config.build_system()?,
        grid,
        coefficients(config)?,
        config.numerics.ancilla_dim,
    )?;
    let seed = config.run.seed.expect("validated");
    let records = collision::run_ensemble(
        &model,
        seed,
        config.run.trajectories,
        &config.run.checkpoints,
    )?;

    ctx.artifacts.write_jsonl("trajectories.jsonl", &records)?;
    let per_traj: Vec<Vec<Checkpoint>> = records.iter().map(|r| r.checkpoints.clone()).collect();
    let means = mean_checkpoints(&per_traj, model.sys_dim());
    ctx.artifacts
        .write_json("states.json", &StateSeries { checkpoints: means })?;

    let counts: Vec<f64> = records.iter().map(|r| r.count_times.len() as f64).collect();
    let mean_counts = pairwise_sum(&counts) / counts.len() as f64;
    let mut eta_totals = vec![0u64; config.numerics.ancilla_dim];
    for r in &records {
        for (k, &c) in r.eta_counts.iter().enumerate() {
            eta_totals[k] += c;
        }
    }
    let max_leak = records.iter().map(|r| r.leak.abs()).fold(0.0, f64::max);
    ctx.artifacts.write_json(
        "summary.json",
        &json!({
            "route": "collision",
            "trajectories": records.len(),
            "mean_counts": mean_counts,
            "eta_totals": eta_totals,
            "max_leak": max_leak,
            "offgrid_mass": model.grid.offgrid_mass(),
        }),
    )?;
    if ctx.verbose {
        eprintln!(
            "collision: {} trajectories, mean counts {mean_counts:.4}, max leak {max_leak:.2e}",
            records.len()
        );
    }
    Ok(())
}

fn run_sme(ctx: &RunContext) -> RunResult {
    let config = &ctx.config;
    let model = sme_model(config)?;
    let psi0 = ground_state(model.system.dim());
    let seed = config.run.seed.expect("validated");
    let (means, mean_counts, records) = sme::ensemble_mean(
        &model,
        &psi0,
        config.numerics.dt,
        config.input.t_end,
        seed,
        config.run.trajectories,
        &config.run.checkpoints,
    )?;
    let checkpoints: Vec<Checkpoint> = config
        .run
        .checkpoints
        .iter()
        .zip(&means)
        .map(|(&t, op)| Checkpoint {
            t,
            rho: DensityOperator::from_operator(op),
        })
        .collect();
    ctx.artifacts
        .write_json("states.json", &StateSeries { checkpoints })?;
    ctx.artifacts.write_jsonl("records.jsonl", &records)?;
    ctx.artifacts.write_json(
        "summary.json",
        &json!({
            "route": "sme",
            "trajectories": records.len(),
            "mean_counts": mean_counts,
        }),
    )?;
    if ctx.verbose {
        eprintln!("sme: {} trajectories, mean counts {mean_counts:.4}", records.len());
    }
    Ok(())
}

fn hierarchy_dump(state: &HierarchyState, t: f64) -> serde_json::Value {
    let mut components = Vec::new();
    for np in 0..=state.n_cut() {
        for npp in 0..=state.n_cut() {
            let op = state.component(np, npp);
            components.push(json!({
                "np": np,
                "npp": npp,
                "re": op.data().iter().map(|z| z.re).collect::<Vec<_>>(),
                "im": op.data().iter().map(|z| z.im).collect::<Vec<_>>(),
            }));
        }
    }
    json!({ "t": t, "n_cut": state.n_cut(), "components": components })
}

pub fn run_master(ctx: &RunContext) -> RunResult {
    let config = &ctx.config;
    let model = sme_model(config)?;
    let psi0 = ground_state(model.system.dim());
    // Full hierarchy dumps at the checkpoints, evolved incrementally.
    let mut dumps = Vec::new();
    {
        let mut state = model.initial_unconditional(&psi0);
        let mut work = sme::RkWork::new(&state);
        let dt = config.numerics.dt;
        let mut t = 0.0;
        for &tc in &config.run.checkpoints {
            let steps = ((tc - t) / dt).round().max(0.0) as usize;
            for k in 0..steps {
                sme::master_step(&model, &mut state, t + k as f64 * dt, dt, Method::Rk4, &mut work)?;
            }
            t += steps as f64 * dt;
            dumps.push(hierarchy_dump(&state, t));
        }
    }
    let (final_state, checkpoints, report) = sme::master_evolve(
        &model,
        &psi0,
        config.numerics.dt,
        config.input.t_end,
        &config.run.checkpoints,
        Method::Rk4,
    )?;
    ctx.artifacts
        .write_json("states.json", &StateSeries { checkpoints })?;
    dumps.push(hierarchy_dump(&final_state, config.input.t_end));
    ctx.artifacts.write_json("hierarchy.json", &dumps)?;
    ctx.artifacts.write_json(
        "summary.json",
        &json!({
            "route": "master",
            "n_cut": model.n_cut,
            "truncation_stress": report.truncation_stress,
            "truncation_influence": report.truncation_influence,
            "final_trace": final_state.trace_at(model.n_input).re,
        }),
    )?;
    if ctx.verbose {
        eprintln!(
            "master: final trace {:.12}, stress {:.3e}",
            final_state.trace_at(model.n_input).re,
            report.truncation_stress
        );
    }
    Ok(())
}

pub fn run_analytic(ctx: &RunContext) -> RunResult {
    let config = &ctx.config;
    let mut model = AnalyticModel::new(
        config.build_system()?,
        config.input.profile,
        coefficients(config)?,
    );
    model.ode_dt = config.numerics.ode_dt;
    let psi0 = ground_state(model.system.dim());
    let s_max = config.numerics.s_max;
    let orders = &config.numerics.quad_points;

    let dist = model.count_distribution(&psi0, config.input.t_end, s_max, orders)?;
    let rows: Vec<String> = dist
        .p
        .iter()
        .enumerate()
        .map(|(s, p)| format!("{s},{p:.12e},{:.3e}", dist.deficit))
        .collect();
    ctx.artifacts.write_csv("counts.csv", "s,P,deficit", &rows)?;

    let mut checkpoints = Vec::new();
    for &t in &config.run.checkpoints {
        let sigma = model.apriori_decomposition(&psi0, t, s_max, orders)?;
        checkpoints.push(Checkpoint {
            t,
            rho: DensityOperator::from_operator(&sigma),
        });
    }
    ctx.artifacts
        .write_json("states.json", &StateSeries { checkpoints })?;
    ctx.artifacts.write_json(
        "summary.json",
        &json!({
            "route": "analytic",
            "s_max": s_max,
            "count_distribution": dist.p,
            "deficit": dist.deficit,
        }),
    )?;
    if ctx.verbose {
        eprintln!("analytic: P = {:?}, deficit {:.3e}", dist.p, dist.deficit);
    }
    Ok(())
}

pub fn run_transfer(ctx: &RunContext) -> RunResult {
    let config = &ctx.config;
    let (delta, gamma, dim) = match config.system {
        crate::config::SystemConfig::Cavity { delta, gamma, dim } => (delta, gamma, dim),
        _ => {
            return Err(sqpulse::Error::Invalid(
                "system.kind: the transfer route needs a cavity system".into(),
            )
            .into())
        }
    };
    let cavity = transfer::CavityModel::new(delta, gamma, dim, config.input.n)?;
    let table = coefficients(config)?;
    let deltas = if config.run.scan_deltas.is_empty() {
        (-8..=8).map(|k| k as f64 * gamma / 4.0).collect()
    } else {
        config.run.scan_deltas.clone()
    };
    let rows = transfer::detuning_scan(
        &cavity,
        &deltas,
        config.input.t_start,
        config.input.t_end,
        if config.input.r > 0.0 { Some(&table) } else { None },
    )?;
    let csv: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{:.12e},{:.12e},{:.3e}",
                r.delta, r.rise_rate, r.t, r.p, r.p_max, r.gap
            )
        })
        .collect();
    ctx.artifacts
        .write_csv("scan.csv", "delta,rise_rate,t,P,P_max,gap", &csv)?;
    let best = rows
        .iter()
        .max_by(|a, b| a.p.partial_cmp(&b.p).unwrap())
        .expect("scan has rows");
    ctx.artifacts.write_json(
        "summary.json",
        &json!({
            "route": "transfer",
            "best_delta": best.delta,
            "best_p": best.p,
            "p_max": best.p_max,
        }),
    )?;
    if ctx.verbose {
        eprintln!("transfer: best P {:.6} at delta {}", best.p, best.delta);
    }
    Ok(())
}
