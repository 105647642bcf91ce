//! The exact discrete repeated-interaction route.
//!
//! Each time bin carries one bath oscillator (truncated at `ancilla_dim`)
//! that collides with the system through the step unitary
//! `U = exp(-i tau (1 (x) H_S + (i/sqrt(tau)) (b^dag (x) L - b (x) L^dag)))`
//! and is then measured in the photon-number basis. The conditional state
//! of system + not-yet-collided field is carried by the indexed family of
//! system vectors `psi(m)`, updated by the exact recurrence
//!
//! `psi'(m) = sum_{m'} sqrt(C(m+m', m')) (sqrt(tau) xi_j)^{m'} V_{eta m'} psi(m+m')`
//!
//! with `V_{m m'}` the Fock blocks of `U`. A first-order truncated step
//! using the explicit O(sqrt(tau)) blocks is provided alongside; the exact
//! step is the oracle it is tested against.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrityError, Result};
use crate::hilbert::{matrix_exponential, Checkpoint, DensityOperator, Operator, StateVector};
use crate::pulse::PulseGrid;
use crate::quad::sqrt_binomial;
use crate::seeding::derive_rng;
use crate::squeezed::CoefficientTable;
use crate::system::System;

/// Everything one collision-model run needs.
#[derive(Debug, Clone)]
pub struct CollisionModel {
    pub system: System,
    pub grid: PulseGrid,
    pub coeffs: CoefficientTable,
    pub ancilla_dim: usize,
}

impl CollisionModel {
    pub fn new(
        system: System,
        grid: PulseGrid,
        coeffs: CoefficientTable,
        ancilla_dim: usize,
    ) -> Result<Self> {
        if ancilla_dim < 2 {
            return Err(Error::Invalid(format!(
                "ancilla dimension must be >= 2, got {ancilla_dim}"
            )));
        }
        Ok(CollisionModel {
            system,
            grid,
            coeffs,
            ancilla_dim,
        })
    }

    pub fn tau(&self) -> f64 {
        self.grid.tau()
    }

    pub fn sys_dim(&self) -> usize {
        self.system.dim()
    }
}

/// Per-step unitary on ancilla (x) system, ordered so index
/// `a * sys_dim + s` is ancilla level `a`, system level `s`.
pub fn build_step_unitary(model: &CollisionModel) -> Result<Operator> {
    let tau = model.tau();
    let a = model.ancilla_dim;
    let b = Operator::annihilation(a)?;
    let b_dag = b.adjoint();
    let id_a = Operator::identity(a);

    // -i tau H_k = -i tau 1 (x) H_S + sqrt(tau) (b^dag (x) L - b (x) L^dag)
    let mut gen = Operator::kron(&id_a, model.system.h()).scaled(Complex64::new(0.0, -tau));
    gen.add_scaled(
        Complex64::new(tau.sqrt(), 0.0),
        &Operator::kron(&b_dag, model.system.l()),
    );
    gen.add_scaled(
        Complex64::new(-tau.sqrt(), 0.0),
        &Operator::kron(&b, model.system.l_dag()),
    );
    matrix_exponential(&gen, Complex64::ONE)
}

/// The Fock blocks `V_{m m'} = (<m| (x) 1) U (|m'> (x) 1)` of a step
/// unitary.
#[derive(Debug, Clone)]
pub struct VBlocks {
    ancilla_dim: usize,
    sys_dim: usize,
    blocks: Vec<Operator>,
}

impl VBlocks {
    #[inline]
    pub fn block(&self, m: usize, m_prime: usize) -> &Operator {
        &self.blocks[m * self.ancilla_dim + m_prime]
    }

    pub fn ancilla_dim(&self) -> usize {
        self.ancilla_dim
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    /// Reassembles `sum |m><m'| (x) V_{m m'}`; must reproduce the unitary
    /// exactly.
    pub fn reassemble(&self) -> Operator {
        let n = self.ancilla_dim * self.sys_dim;
        let mut u = Operator::zeros(n);
        for m in 0..self.ancilla_dim {
            for mp in 0..self.ancilla_dim {
                let v = self.block(m, mp);
                for i in 0..self.sys_dim {
                    for j in 0..self.sys_dim {
                        u.set(m * self.sys_dim + i, mp * self.sys_dim + j, v.at(i, j));
                    }
                }
            }
        }
        u
    }

    /// Row-block-wise unitarity defect
    /// `max_{m', m''} || sum_m V_{m m''}^dag V_{m m'} - delta 1 ||_F`.
    pub fn unitarity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for mp in 0..self.ancilla_dim {
            for mpp in 0..self.ancilla_dim {
                let mut acc = Operator::zeros(self.sys_dim);
                for m in 0..self.ancilla_dim {
                    let left = self.block(m, mpp).adjoint();
                    Operator::gemm_acc(&mut acc, Complex64::ONE, &left, self.block(m, mp));
                }
                if mp == mpp {
                    acc.add_scaled(-Complex64::ONE, &Operator::identity(self.sys_dim));
                }
                worst = worst.max(acc.frobenius_norm());
            }
        }
        worst
    }
}

pub fn extract_v_blocks(u: &Operator, ancilla_dim: usize, sys_dim: usize) -> Result<VBlocks> {
    if u.dim() != ancilla_dim * sys_dim {
        return Err(Error::Dimension(format!(
            "unitary dim {} != ancilla {ancilla_dim} x system {sys_dim}",
            u.dim()
        )));
    }
    let mut blocks = Vec::with_capacity(ancilla_dim * ancilla_dim);
    for m in 0..ancilla_dim {
        for mp in 0..ancilla_dim {
            blocks.push(Operator::from_fn(sys_dim, |i, j| {
                u.at(m * sys_dim + i, mp * sys_dim + j)
            }));
        }
    }
    Ok(VBlocks {
        ancilla_dim,
        sys_dim,
        blocks,
    })
}

/// Blocks of the step unitary from the model in one call.
pub fn model_blocks(model: &CollisionModel) -> Result<VBlocks> {
    extract_v_blocks(
        &build_step_unitary(model)?,
        model.ancilla_dim,
        model.sys_dim(),
    )
}

/// The explicit first-order blocks: `V_00 = 1 - i tau H - (tau/2) L^dag L`,
/// `V_10 = sqrt(tau) L`, `V_01 = -sqrt(tau) L^dag`, `V_11 = 1`.
pub fn first_order_blocks(system: &System, tau: f64) -> [Operator; 4] {
    let d = system.dim();
    let mut v00 = Operator::identity(d);
    v00.add_scaled(Complex64::new(0.0, -tau), system.h());
    v00.add_scaled(Complex64::new(-tau / 2.0, 0.0), system.l_dag_l());
    let v10 = system.l().scaled(Complex64::new(tau.sqrt(), 0.0));
    let v01 = system.l_dag().scaled(Complex64::new(-tau.sqrt(), 0.0));
    let v11 = Operator::identity(d);
    [v00, v10, v01, v11]
}

/// The conditional-vector family `{psi(m)}` at step `j`, together with its
/// outcome record and accumulated log-weight.
///
/// At `j = 0` the family is `psi(m) = a_m(n_gamma) |psi_0>`; the trajectory
/// probability at any step is `exp(log_weight) * sum_m ||psi(m)||^2 u_j^m`.
#[derive(Debug, Clone)]
pub struct ConditionalVectors {
    pub psi: Vec<StateVector>,
    pub step: usize,
    pub record: Vec<u8>,
    pub log_weight: f64,
    /// Probability mass lost to ancilla / family truncation so far.
    pub leak: f64,
}

impl ConditionalVectors {
    pub fn initial(coeffs: &CoefficientTable, psi0: &StateVector) -> Self {
        let psi = coeffs
            .coeffs()
            .iter()
            .map(|&a| {
                let mut v = psi0.clone();
                v.scale_mut(a);
                v
            })
            .collect();
        ConditionalVectors {
            psi,
            step: 0,
            record: Vec::new(),
            log_weight: 0.0,
            leak: 0.0,
        }
    }

    pub fn m_cut(&self) -> usize {
        self.psi.len() - 1
    }

    /// `sum_m ||psi(m)||^2 u_j^m` (the trace of the unnormalized reduced
    /// state, up to the accumulated weight).
    pub fn weight(&self, grid: &PulseGrid) -> f64 {
        let u = grid.u(self.step.min(grid.bins()));
        let mut u_pow = 1.0;
        let mut acc = 0.0;
        for v in &self.psi {
            acc += v.norm_sq() * u_pow;
            u_pow *= u;
        }
        acc
    }

    fn rescale(&mut self, factor: f64) {
        let z = Complex64::new(factor, 0.0);
        for v in &mut self.psi {
            v.scale_mut(z);
        }
    }
}

/// One exact collision + measurement outcome `eta`, per the unnormalized
/// recurrence; `step` advances and the record grows.
pub fn step_exact(
    state: &ConditionalVectors,
    blocks: &VBlocks,
    grid: &PulseGrid,
    eta: u8,
) -> Result<ConditionalVectors> {
    let mut out = state.clone();
    step_exact_into(state, blocks, grid, eta, &mut out.psi)?;
    out.step = state.step + 1;
    out.record.push(eta);
    Ok(out)
}

fn step_exact_into(
    state: &ConditionalVectors,
    blocks: &VBlocks,
    grid: &PulseGrid,
    eta: u8,
    out: &mut [StateVector],
) -> Result<()> {
    let a_dim = blocks.ancilla_dim;
    if (eta as usize) >= a_dim {
        return Err(Error::Invalid(format!(
            "outcome eta = {eta} outside ancilla dimension {a_dim}"
        )));
    }
    let j = state.step;
    if j >= grid.bins() {
        return Err(Error::Invalid(format!(
            "step {j} beyond pulse grid of {} bins",
            grid.bins()
        )));
    }
    let m_cut = state.m_cut();
    let root_tau_xi = Complex64::new(grid.tau().sqrt(), 0.0) * grid.xi(j);
    // (sqrt(tau) xi_j)^{m'} for m' < ancilla_dim.
    let mut powers = vec![Complex64::ONE; a_dim];
    for mp in 1..a_dim {
        powers[mp] = powers[mp - 1] * root_tau_xi;
    }
    for m in 0..=m_cut {
        out[m].zero_out();
        let reach = (m_cut - m).min(a_dim - 1);
        for mp in 0..=reach {
            let coeff = Complex64::new(sqrt_binomial(m + mp, mp), 0.0) * powers[mp];
            blocks
                .block(eta as usize, mp)
                .apply_acc(coeff, &state.psi[m + mp], &mut out[m]);
        }
    }
    Ok(())
}

/// One step of the first-order difference equations, `eta` in {0, 1}:
/// `psi'(m) = V_{eta 0} psi(m) + sqrt((m+1) tau) xi_j V_{eta 1} psi(m+1)`.
pub fn step_truncated(
    state: &ConditionalVectors,
    model: &CollisionModel,
    eta: u8,
) -> Result<ConditionalVectors> {
    if eta > 1 {
        return Err(Error::Invalid(format!(
            "truncated step admits only eta in {{0, 1}}, got {eta}"
        )));
    }
    let [v00, v10, v01, v11] = first_order_blocks(&model.system, model.tau());
    let (keep, raise) = if eta == 0 { (v00, v01) } else { (v10, v11) };
    let j = state.step;
    if j >= model.grid.bins() {
        return Err(Error::Invalid(format!(
            "step {j} beyond pulse grid of {} bins",
            model.grid.bins()
        )));
    }
    let xi_j = model.grid.xi(j);
    let tau = model.tau();
    let m_cut = state.m_cut();
    let mut out = state.clone();
    for m in 0..=m_cut {
        out.psi[m].zero_out();
        keep.apply_acc(Complex64::ONE, &state.psi[m], &mut out.psi[m]);
        if m + 1 <= m_cut {
            let coeff = Complex64::new(((m + 1) as f64 * tau).sqrt(), 0.0) * xi_j;
            raise.apply_acc(coeff, &state.psi[m + 1], &mut out.psi[m]);
        }
    }
    out.step = j + 1;
    out.record.push(eta);
    Ok(out)
}

/// Exact conditional outcome distribution at the next step: applies the
/// step for every candidate `eta` and weighs by
/// `sum_m ||psi'(m)||^2 u_{j+1}^m`. The unnormalized total equals the
/// current weight up to truncation leak.
pub fn outcome_distribution(
    state: &ConditionalVectors,
    blocks: &VBlocks,
    grid: &PulseGrid,
) -> Result<(Vec<ConditionalVectors>, Vec<f64>, f64)> {
    let a_dim = blocks.ancilla_dim;
    let mut candidates = Vec::with_capacity(a_dim);
    let mut weights = Vec::with_capacity(a_dim);
    for eta in 0..a_dim {
        let cand = step_exact(state, blocks, grid, eta as u8)?;
        weights.push(cand.weight(grid));
        candidates.push(cand);
    }
    let total: f64 = weights.iter().sum();
    Ok((candidates, weights, total))
}

/// Samples the next outcome from the exact conditional distribution;
/// returns `(eta, probability of eta)`.
pub fn sample_outcome(
    state: &ConditionalVectors,
    blocks: &VBlocks,
    grid: &PulseGrid,
    rng: &mut impl Rng,
) -> Result<(u8, f64)> {
    let before = state.weight(grid);
    if before < 1e-280 {
        return Err(IntegrityError::DeadTrajectory { step: state.step }.into());
    }
    let (_, weights, total) = outcome_distribution(state, blocks, grid)?;
    if total < 1e-280 {
        return Err(IntegrityError::DeadTrajectory { step: state.step }.into());
    }
    let draw: f64 = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (eta, w) in weights.iter().enumerate() {
        acc += w;
        if draw < acc || eta == weights.len() - 1 {
            return Ok((eta as u8, w / total));
        }
    }
    unreachable!()
}

/// Reduces the family to the normalized conditional system state and the
/// trajectory probability `exp(log_weight) * current weight`.
pub fn reduce(state: &ConditionalVectors, grid: &PulseGrid) -> Result<(DensityOperator, f64)> {
    let d = state.psi[0].dim();
    let u = grid.u(state.step.min(grid.bins()));
    let mut rho = Operator::zeros(d);
    let mut u_pow = 1.0;
    for v in &state.psi {
        rho.outer_acc(Complex64::new(u_pow, 0.0), v, v);
        u_pow *= u;
    }
    let tr = rho.trace().re;
    if tr < 1e-280 {
        return Err(IntegrityError::DeadTrajectory { step: state.step }.into());
    }
    rho.scale_mut(Complex64::new(1.0 / tr, 0.0));
    Ok((
        DensityOperator::from_operator(&rho),
        state.log_weight.exp() * tr,
    ))
}

/// A sampled (or replayed) trajectory: count times, outcome tallies, and
/// conditional states at the requested checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub seed: u64,
    /// Bin-midpoint times of detections, one entry per detected photon.
    pub count_times: Vec<f64>,
    pub logp: f64,
    pub checkpoints: Vec<Checkpoint>,
    /// Tally of outcomes eta = 0, 1, 2, ... over all steps.
    pub eta_counts: Vec<u64>,
    /// Probability mass lost to truncation over the whole run.
    pub leak: f64,
}

/// Runs one trajectory; a deterministic, bit-reproducible function of
/// `(model, seed)`.
pub fn run_trajectory(
    model: &CollisionModel,
    seed: u64,
    checkpoints: &[f64],
) -> Result<TrajectoryRecord> {
    run_trajectory_with_blocks(model, &model_blocks(model)?, seed, checkpoints)
}

/// As [`run_trajectory`], reusing precomputed blocks across an ensemble.
pub fn run_trajectory_with_blocks(
    model: &CollisionModel,
    blocks: &VBlocks,
    seed: u64,
    checkpoints: &[f64],
) -> Result<TrajectoryRecord> {
    let mut rng = derive_rng(seed, 0);
    let mut state = initial_state(model);
    let mut record = TrajectoryRecord {
        seed,
        count_times: Vec::new(),
        logp: 0.0,
        checkpoints: Vec::new(),
        eta_counts: vec![0; model.ancilla_dim],
        leak: state.leak,
    };
    let mut next_checkpoint = 0usize;
    let grid = &model.grid;
    for j in 0..grid.bins() {
        let (candidates, weights, total) = outcome_distribution(&state, blocks, grid)?;
        if total < 1e-280 {
            return Err(IntegrityError::DeadTrajectory { step: j }.into());
        }
        record.leak += 1.0 - total;
        let draw: f64 = rng.random::<f64>() * total;
        let mut eta = model.ancilla_dim - 1;
        let mut acc = 0.0;
        for (k, w) in weights.iter().enumerate() {
            acc += w;
            if draw < acc {
                eta = k;
                break;
            }
        }
        let w = weights[eta];
        state = candidates.into_iter().nth(eta).unwrap();
        state.log_weight += w.ln();
        state.rescale(1.0 / w.sqrt());
        record.eta_counts[eta] += 1;
        for _ in 0..eta {
            record.count_times.push(grid.t_mid(j));
        }
        while next_checkpoint < checkpoints.len()
            && grid.t_edge(j + 1) >= checkpoints[next_checkpoint] - 1e-9
        {
            let (rho, _) = reduce(&state, grid)?;
            record.checkpoints.push(Checkpoint {
                t: grid.t_edge(j + 1),
                rho,
            });
            next_checkpoint += 1;
        }
    }
    record.logp = state.log_weight;
    Ok(record)
}

/// Replays a fixed outcome record (one entry per bin) without sampling;
/// used for matched-record comparisons against the continuous route.
pub fn run_with_record(
    model: &CollisionModel,
    outcomes: &[u8],
    checkpoints: &[f64],
) -> Result<(ConditionalVectors, Vec<Checkpoint>)> {
    if outcomes.len() != model.grid.bins() {
        return Err(Error::Invalid(format!(
            "record length {} != grid bins {}",
            outcomes.len(),
            model.grid.bins()
        )));
    }
    let blocks = model_blocks(model)?;
    let mut state = initial_state(model);
    let mut points = Vec::new();
    let mut next_checkpoint = 0usize;
    for (j, &eta) in outcomes.iter().enumerate() {
        let next = step_exact(&state, &blocks, &model.grid, eta)?;
        let w = next.weight(&model.grid);
        if w < 1e-280 {
            return Err(IntegrityError::DeadTrajectory { step: j }.into());
        }
        state = next;
        state.log_weight += w.ln();
        state.rescale(1.0 / w.sqrt());
        while next_checkpoint < checkpoints.len()
            && model.grid.t_edge(j + 1) >= checkpoints[next_checkpoint] - 1e-9
        {
            let (rho, _) = reduce(&state, &model.grid)?;
            points.push(Checkpoint {
                t: model.grid.t_edge(j + 1),
                rho,
            });
            next_checkpoint += 1;
        }
    }
    Ok((state, points))
}

/// Runs an ensemble of trajectories in parallel; results come back in
/// stream order, so the output is independent of thread count.
pub fn run_ensemble(
    model: &CollisionModel,
    seed: u64,
    n_traj: usize,
    checkpoints: &[f64],
) -> Result<Vec<TrajectoryRecord>> {
    use rayon::prelude::*;
    let blocks = model_blocks(model)?;
    let runs: Vec<Result<TrajectoryRecord>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            run_trajectory_with_blocks(model, &blocks, seed.wrapping_add(i as u64), checkpoints)
        })
        .collect();
    runs.into_iter().collect()
}

/// Initial family (system ground state) normalized on the grid, with the
/// coefficient-table deficit folded into the reported leak.
pub fn initial_state(model: &CollisionModel) -> ConditionalVectors {
    initial_state_from(model, &StateVector::basis(model.sys_dim(), 0))
}

pub fn initial_state_from(model: &CollisionModel, psi0: &StateVector) -> ConditionalVectors {
    let mut state = ConditionalVectors::initial(&model.coeffs, psi0);
    let w = state.weight(&model.grid);
    state.leak = 1.0 - w;
    state.rescale(1.0 / w.sqrt());
    state
}
