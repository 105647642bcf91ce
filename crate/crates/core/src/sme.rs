//! Continuous-time route: the coupled hierarchies of photon-counting
//! stochastic master equations and deterministic master equations.
//!
//! A [`HierarchyState`] carries the doubly indexed family of system
//! operators `rho^{n', n''}` (conditional), `sigma^{n', n''}`
//! (unconditional) or `varrho^{m', m''}` (photon-number basis), truncated
//! at `n_cut`. The conditional evolution alternates a no-count drift with
//! jump maps sampled at the intensity `k_t`; averaging over records gives
//! the deterministic hierarchy, which can also be obtained in the
//! number basis and converted with the squeeze coefficients.
//!
//! Out-of-range neighbours are treated as zero; the norm reaching the
//! truncation boundary is accumulated as a stress diagnostic and raised as
//! an integrity failure rather than silently distorting results, as is a
//! negative intensity.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IntegrityError, Result};
use crate::hilbert::{Checkpoint, DensityOperator, Operator, StateVector, SuperOp};
use crate::pulse::Profile;
use crate::seeding::derive_rng;
use crate::squeezed::{CoefficientTable, SqueezeParams};
use crate::stats::pairwise_sum;
use crate::system::System;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HierarchyKind {
    /// Conditional operators `rho^{n',n''}` (normalized along a record).
    Conditional,
    /// Unconditional operators `sigma^{n',n''}`.
    Unconditional,
    /// Photon-number-basis operators `varrho^{m',m''}`.
    NumberBasis,
}

/// The indexed family of system operators, truncated at `n_cut`.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyState {
    n_cut: usize,
    dim: usize,
    kind: HierarchyKind,
    ops: Vec<Operator>,
}

impl HierarchyState {
    /// `delta_{n', n''} |psi_0><psi_0|` initial data.
    pub fn delta_init(n_cut: usize, psi0: &StateVector, kind: HierarchyKind) -> Self {
        let dim = psi0.dim();
        let side = n_cut + 1;
        let mut ops = vec![Operator::zeros(dim); side * side];
        let pure = Operator::outer(psi0, psi0);
        for n in 0..side {
            ops[n * side + n] = pure.clone();
        }
        HierarchyState {
            n_cut,
            dim,
            kind,
            ops,
        }
    }

    pub fn zeros_like(other: &HierarchyState) -> Self {
        HierarchyState {
            n_cut: other.n_cut,
            dim: other.dim,
            kind: other.kind,
            ops: vec![Operator::zeros(other.dim); other.ops.len()],
        }
    }

    #[inline]
    fn idx(&self, np: usize, npp: usize) -> usize {
        np * (self.n_cut + 1) + npp
    }

    pub fn n_cut(&self) -> usize {
        self.n_cut
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> HierarchyKind {
        self.kind
    }

    pub fn component(&self, np: usize, npp: usize) -> &Operator {
        &self.ops[self.idx(np, npp)]
    }

    pub fn component_mut(&mut self, np: usize, npp: usize) -> &mut Operator {
        let i = self.idx(np, npp);
        &mut self.ops[i]
    }

    pub fn trace_at(&self, n: usize) -> Complex64 {
        self.component(n, n).trace()
    }

    /// `max || ops(n',n'') - ops(n'',n')^dag ||_F` over all pairs.
    pub fn conjugate_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for np in 0..=self.n_cut {
            for npp in np..=self.n_cut {
                let a = self.component(np, npp);
                let b = self.component(npp, np).adjoint();
                worst = worst.max((a - &b).frobenius_norm());
            }
        }
        worst
    }

    /// Largest Frobenius norm among components touching the truncation
    /// boundary `n' = n_cut` or `n'' = n_cut`.
    pub fn boundary_norm(&self) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..=self.n_cut {
            worst = worst.max(self.component(self.n_cut, k).frobenius_norm());
            worst = worst.max(self.component(k, self.n_cut).frobenius_norm());
        }
        worst
    }

    /// Largest component norm; only the physical component is
    /// trace-normalized, the rest can transiently amplify after a
    /// low-intensity count.
    pub fn max_component_norm(&self) -> f64 {
        self.ops
            .iter()
            .map(|op| op.frobenius_norm())
            .fold(0.0, f64::max)
    }

    pub fn scale_all(&mut self, z: Complex64) {
        for op in &mut self.ops {
            op.scale_mut(z);
        }
    }

    pub fn add_scaled_state(&mut self, z: Complex64, other: &HierarchyState) {
        for (a, b) in self.ops.iter_mut().zip(&other.ops) {
            a.add_scaled(z, b);
        }
    }

    pub fn zero_all(&mut self) {
        for op in &mut self.ops {
            op.zero_out();
        }
    }

    /// Copies the adjoint of every upper-triangle component into its
    /// mirror slot; used by the evolutions, which assemble only
    /// `n' <= n''` and restore `ops(n'',n') = ops(n',n'')^dag` exactly.
    fn mirror_lower_from_upper(&mut self) {
        let side = self.n_cut + 1;
        let d = self.dim;
        for np in 0..side {
            for npp in (np + 1)..side {
                // Upper index precedes its mirror in the row-major layout.
                let (src_idx, dst_idx) = (np * side + npp, npp * side + np);
                let (head, tail) = self.ops.split_at_mut(dst_idx);
                let (src, dst) = (&head[src_idx], &mut tail[0]);
                for i in 0..d {
                    for j in 0..d {
                        dst.data_mut()[j * d + i] = src.data()[i * d + j].conj();
                    }
                }
            }
        }
    }
}

/// Superoperator `L rho = -i[H, rho] - 1/2 {L^dag L, rho} + L rho L^dag`
/// applied to a single operator.
pub fn lindblad(system: &System, rho: &Operator) -> Result<Operator> {
    if rho.dim() != system.dim() {
        return Err(Error::Dimension(format!(
            "lindblad: operator dim {} vs system dim {}",
            rho.dim(),
            system.dim()
        )));
    }
    let mut out = Operator::zeros(rho.dim());
    let mut scratch = Operator::zeros(rho.dim());
    lindblad_into(system, rho, &mut out, &mut scratch);
    Ok(out)
}

fn lindblad_into(system: &System, rho: &Operator, out: &mut Operator, scratch: &mut Operator) {
    let i = Complex64::new(0.0, 1.0);
    Operator::gemm_acc(out, -i, system.h(), rho);
    Operator::gemm_acc(out, i, rho, system.h());
    Operator::gemm_acc(out, Complex64::new(-0.5, 0.0), system.l_dag_l(), rho);
    Operator::gemm_acc(out, Complex64::new(-0.5, 0.0), rho, system.l_dag_l());
    scratch.zero_out();
    Operator::gemm_acc(scratch, Complex64::ONE, system.l(), rho);
    Operator::gemm_acc(out, Complex64::ONE, scratch, system.l_dag());
}

/// Precomputed sparse superoperators of one system; every hierarchy
/// right-hand side is assembled from these.
#[derive(Debug, Clone)]
pub struct SuperKit {
    /// `-i[H, .] - 1/2 {L^dag L, .}`.
    free: SuperOp,
    /// The full Lindblad superoperator (free + sandwich).
    lindblad: SuperOp,
    /// `L^dag .`
    ldag_left: SuperOp,
    /// `. L`
    l_right: SuperOp,
    /// `L .`
    l_left: SuperOp,
    /// `. L^dag`
    ldag_right: SuperOp,
    /// `L . L^dag`
    sandwich: SuperOp,
}

impl SuperKit {
    pub fn new(system: &System) -> Self {
        let d = system.dim();
        let i = Complex64::new(0.0, 1.0);
        let free = SuperOp::from_linear(d, |rho| {
            let mut out = Operator::zeros(d);
            Operator::gemm_acc(&mut out, -i, system.h(), rho);
            Operator::gemm_acc(&mut out, i, rho, system.h());
            Operator::gemm_acc(&mut out, Complex64::new(-0.5, 0.0), system.l_dag_l(), rho);
            Operator::gemm_acc(&mut out, Complex64::new(-0.5, 0.0), rho, system.l_dag_l());
            out
        });
        let sandwich = SuperOp::from_linear(d, |rho| {
            let tmp = system.l().mul(rho).unwrap();
            tmp.mul(system.l_dag()).unwrap()
        });
        let lindblad = SuperOp::from_linear(d, |rho| {
            let mut out = Operator::zeros(d);
            free.apply_acc(Complex64::ONE, rho, &mut out);
            sandwich.apply_acc(Complex64::ONE, rho, &mut out);
            out
        });
        SuperKit {
            free,
            lindblad,
            ldag_left: SuperOp::from_linear(d, |rho| system.l_dag().mul(rho).unwrap()),
            l_right: SuperOp::from_linear(d, |rho| rho.mul(system.l()).unwrap()),
            l_left: SuperOp::from_linear(d, |rho| system.l().mul(rho).unwrap()),
            ldag_right: SuperOp::from_linear(d, |rho| rho.mul(system.l_dag()).unwrap()),
            sandwich,
        }
    }
}

/// Model for the continuous-time hierarchies.
#[derive(Debug, Clone)]
pub struct SmeModel {
    pub system: System,
    pub params: SqueezeParams,
    pub n_input: usize,
    pub profile: Profile,
    pub n_cut: usize,
    /// Estimated truncation influence above this limit aborts the run.
    /// Healthy hierarchies at the recommended cut (n + 10) stay below
    /// ~1e-3 here; genuinely undersized ones signal at order one.
    pub stress_limit: f64,
    /// When false, crossing the stress limit flags the trajectory in its
    /// integrity report instead of aborting; ensembles account for the
    /// flagged fraction in aggregate.
    pub stress_abort: bool,
    kit: SuperKit,
}

impl SmeModel {
    pub fn new(
        system: System,
        params: SqueezeParams,
        n_input: usize,
        profile: Profile,
        n_cut: usize,
    ) -> Result<Self> {
        if n_cut < n_input {
            return Err(Error::Invalid(format!(
                "hierarchy cut {n_cut} below input photon number {n_input}"
            )));
        }
        let kit = SuperKit::new(&system);
        Ok(SmeModel {
            system,
            params,
            n_input,
            profile,
            n_cut,
            stress_limit: 0.05,
            stress_abort: true,
            kit,
        })
    }

    pub fn xi(&self, t: f64) -> Complex64 {
        Complex64::new(self.profile.value(t), 0.0)
    }

    pub fn initial_conditional(&self, psi0: &StateVector) -> HierarchyState {
        HierarchyState::delta_init(self.n_cut, psi0, HierarchyKind::Conditional)
    }

    pub fn initial_unconditional(&self, psi0: &StateVector) -> HierarchyState {
        HierarchyState::delta_init(self.n_cut, psi0, HierarchyKind::Unconditional)
    }

    fn combos(&self) -> (f64, f64, Complex64) {
        (
            self.params.cosh_r(),
            self.params.sinh_r(),
            self.params.phase(),
        )
    }

    fn diagonal_shift_terms(
        &self,
        state: &HierarchyState,
        np: usize,
        npp: usize,
        xi_sq: f64,
        sign: f64,
        out: &mut Operator,
    ) {
        // sign * |xi|^2 (sqrt(n'n'') c^2 rho^{n'-1,n''-1}
        //               + sqrt((n'+1)(n''+1)) s^2 rho^{n'+1,n''+1})
        // - sign * |xi|^2 c s (sqrt(n'(n''+1)) e^{-2i phi} rho^{n'-1,n''+1}
        //                      + sqrt((n'+1)n'') e^{2i phi} rho^{n'+1,n''-1})
        let (c, s, phase) = self.combos();
        let f = sign * xi_sq;
        if np >= 1 && npp >= 1 {
            out.add_scaled(
                Complex64::new(f * ((np * npp) as f64).sqrt() * c * c, 0.0),
                state.component(np - 1, npp - 1),
            );
        }
        if np + 1 <= state.n_cut && npp + 1 <= state.n_cut {
            out.add_scaled(
                Complex64::new(f * (((np + 1) * (npp + 1)) as f64).sqrt() * s * s, 0.0),
                state.component(np + 1, npp + 1),
            );
        }
        if np >= 1 && npp + 1 <= state.n_cut {
            out.add_scaled(
                Complex64::new(-f * ((np * (npp + 1)) as f64).sqrt() * c * s, 0.0) * phase.conj(),
                state.component(np - 1, npp + 1),
            );
        }
        if np + 1 <= state.n_cut && npp >= 1 {
            out.add_scaled(
                Complex64::new(-f * (((np + 1) * npp) as f64).sqrt() * c * s, 0.0) * phase,
                state.component(np + 1, npp - 1),
            );
        }
    }

    /// Linear no-count generator: `d rho = D[rho] dt` between counts
    /// (unnormalized form). The coupling terms read
    /// `- xi L^dag X_{n'} - xi* Y_{n''} L` with
    /// `X_{n'} = sqrt(n') c rho^{n'-1,n''} - sqrt(n'+1) s e^{2i phi} rho^{n'+1,n''}`,
    /// `Y_{n''} = sqrt(n'') c rho^{n',n''-1} - sqrt(n''+1) s e^{-2i phi} rho^{n',n''+1}`.
    pub fn drift_generator_into(&self, state: &HierarchyState, xi: Complex64, out: &mut HierarchyState) {
        let (c, s, phase) = self.combos();
        let xi_sq = xi.norm_sqr();
        for np in 0..=state.n_cut {
            for npp in np..=state.n_cut {
                let idx = state.idx(np, npp);
                let rho = &state.ops[idx];
                let dst = &mut out.ops[idx];
                dst.zero_out();
                self.kit.free.apply_acc(Complex64::ONE, rho, dst);
                if np >= 1 {
                    let w = -xi * Complex64::new((np as f64).sqrt() * c, 0.0);
                    self.kit.ldag_left.apply_acc(w, state.component(np - 1, npp), dst);
                }
                if np + 1 <= state.n_cut {
                    let w = xi * Complex64::new(((np + 1) as f64).sqrt() * s, 0.0) * phase;
                    self.kit.ldag_left.apply_acc(w, state.component(np + 1, npp), dst);
                }
                if npp >= 1 {
                    let w = -xi.conj() * Complex64::new((npp as f64).sqrt() * c, 0.0);
                    self.kit.l_right.apply_acc(w, state.component(np, npp - 1), dst);
                }
                if npp + 1 <= state.n_cut {
                    let w = xi.conj()
                        * Complex64::new(((npp + 1) as f64).sqrt() * s, 0.0)
                        * phase.conj();
                    self.kit.l_right.apply_acc(w, state.component(np, npp + 1), dst);
                }
                self.diagonal_shift_terms(state, np, npp, xi_sq, -1.0, dst);
            }
        }
        out.mirror_lower_from_upper();
    }

    /// Unnormalized count map `J[rho] = L rho L^dag + xi* L Y + xi X L^dag
    /// + ...`; dividing its physical trace out gives the post-count state.
    pub fn jump_map_into(&self, state: &HierarchyState, xi: Complex64, out: &mut HierarchyState) {
        let (c, s, phase) = self.combos();
        let xi_sq = xi.norm_sqr();
        for np in 0..=state.n_cut {
            for npp in np..=state.n_cut {
                let idx = state.idx(np, npp);
                let rho = &state.ops[idx];
                let dst = &mut out.ops[idx];
                dst.zero_out();
                self.kit.sandwich.apply_acc(Complex64::ONE, rho, dst);
                if npp >= 1 {
                    let w = xi.conj() * Complex64::new((npp as f64).sqrt() * c, 0.0);
                    self.kit.l_left.apply_acc(w, state.component(np, npp - 1), dst);
                }
                if npp + 1 <= state.n_cut {
                    let w = -xi.conj()
                        * Complex64::new(((npp + 1) as f64).sqrt() * s, 0.0)
                        * phase.conj();
                    self.kit.l_left.apply_acc(w, state.component(np, npp + 1), dst);
                }
                if np >= 1 {
                    let w = xi * Complex64::new((np as f64).sqrt() * c, 0.0);
                    self.kit.ldag_right.apply_acc(w, state.component(np - 1, npp), dst);
                }
                if np + 1 <= state.n_cut {
                    let w = -xi * Complex64::new(((np + 1) as f64).sqrt() * s, 0.0) * phase;
                    self.kit.ldag_right.apply_acc(w, state.component(np + 1, npp), dst);
                }
                self.diagonal_shift_terms(state, np, npp, xi_sq, 1.0, dst);
            }
        }
        out.mirror_lower_from_upper();
    }

    /// Deterministic master hierarchy right-hand side:
    /// `d sigma / dt = L sigma + xi [X, L^dag] + xi* [L, Y]`.
    pub fn master_rhs_into(&self, state: &HierarchyState, xi: Complex64, out: &mut HierarchyState) {
        let (c, s, phase) = self.combos();
        for np in 0..=state.n_cut {
            for npp in np..=state.n_cut {
                let idx = state.idx(np, npp);
                let rho = &state.ops[idx];
                let dst = &mut out.ops[idx];
                dst.zero_out();
                self.kit.lindblad.apply_acc(Complex64::ONE, rho, dst);
                // xi [X, L^dag] with the commutator split as . L^dag - L^dag .
                if np >= 1 {
                    let w = xi * Complex64::new((np as f64).sqrt() * c, 0.0);
                    let below = state.component(np - 1, npp);
                    self.kit.ldag_right.apply_acc(w, below, dst);
                    self.kit.ldag_left.apply_acc(-w, below, dst);
                }
                if np + 1 <= state.n_cut {
                    let w = -xi * Complex64::new(((np + 1) as f64).sqrt() * s, 0.0) * phase;
                    let above = state.component(np + 1, npp);
                    self.kit.ldag_right.apply_acc(w, above, dst);
                    self.kit.ldag_left.apply_acc(-w, above, dst);
                }
                // xi* [L, Y] with the commutator split as L . - . L
                if npp >= 1 {
                    let w = xi.conj() * Complex64::new((npp as f64).sqrt() * c, 0.0);
                    let left = state.component(np, npp - 1);
                    self.kit.l_left.apply_acc(w, left, dst);
                    self.kit.l_right.apply_acc(-w, left, dst);
                }
                if npp + 1 <= state.n_cut {
                    let w = -xi.conj()
                        * Complex64::new(((npp + 1) as f64).sqrt() * s, 0.0)
                        * phase.conj();
                    let right = state.component(np, npp + 1);
                    self.kit.l_left.apply_acc(w, right, dst);
                    self.kit.l_right.apply_acc(-w, right, dst);
                }
            }
        }
        out.mirror_lower_from_upper();
    }

    /// Counting intensity `k_t` of the normalized conditional hierarchy:
    /// the six-term trace expression at the physical index.
    pub fn intensity(&self, state: &HierarchyState, xi: Complex64) -> Result<f64> {
        let n = self.n_input;
        let (c, s, phase) = self.combos();
        let xi_sq = xi.norm_sqr();
        let mut k = Complex64::ZERO;

        // Tr L^dag L rho^{n,n}
        k += trace_prod(self.system.l_dag_l(), state.component(n, n));
        // xi* Tr L (sqrt(n) c rho^{n,n-1} - sqrt(n+1) s e^{-2i phi} rho^{n,n+1})
        if n >= 1 {
            k += xi.conj()
                * Complex64::new((n as f64).sqrt() * c, 0.0)
                * trace_prod(self.system.l(), state.component(n, n - 1));
        }
        if n + 1 <= state.n_cut {
            k -= xi.conj()
                * Complex64::new(((n + 1) as f64).sqrt() * s, 0.0)
                * phase.conj()
                * trace_prod(self.system.l(), state.component(n, n + 1));
        }
        // xi Tr L^dag (sqrt(n) c rho^{n-1,n} - sqrt(n+1) s e^{2i phi} rho^{n+1,n})
        if n >= 1 {
            k += xi
                * Complex64::new((n as f64).sqrt() * c, 0.0)
                * trace_prod(self.system.l_dag(), state.component(n - 1, n));
        }
        if n + 1 <= state.n_cut {
            k -= xi
                * Complex64::new(((n + 1) as f64).sqrt() * s, 0.0)
                * phase
                * trace_prod(self.system.l_dag(), state.component(n + 1, n));
        }
        // |xi|^2 (n c^2 Tr rho^{n-1,n-1} + (n+1) s^2 Tr rho^{n+1,n+1})
        if n >= 1 {
            k += Complex64::new(xi_sq * n as f64 * c * c, 0.0)
                * state.component(n - 1, n - 1).trace();
        }
        if n + 1 <= state.n_cut {
            k += Complex64::new(xi_sq * (n + 1) as f64 * s * s, 0.0)
                * state.component(n + 1, n + 1).trace();
        }
        // -|xi|^2 sqrt(n(n+1)) c s (e^{2i phi} Tr rho^{n+1,n-1}
        //                           + e^{-2i phi} Tr rho^{n-1,n+1})
        if n >= 1 && n + 1 <= state.n_cut {
            let w = Complex64::new(xi_sq * ((n * (n + 1)) as f64).sqrt() * c * s, 0.0);
            k -= w * phase * state.component(n + 1, n - 1).trace();
            k -= w * phase.conj() * state.component(n - 1, n + 1).trace();
        }

        let scale = 1.0 + k.norm();
        if k.im.abs() > 1e-10 * scale {
            return Err(Error::Invalid(format!(
                "intensity has non-real value {k}; hierarchy state corrupted"
            )));
        }
        Ok(k.re)
    }
}

fn trace_prod(a: &Operator, b: &Operator) -> Complex64 {
    let n = a.dim();
    let (ad, bd) = (a.data(), b.data());
    let mut acc = Complex64::ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += ad[i * n + j] * bd[j * n + i];
        }
    }
    acc
}

/// One explicit-Euler no-count step of the normalized filtering hierarchy;
/// returns the renormalization applied (`1/(1 - k dt)` to Euler order).
pub fn drift_step(
    model: &SmeModel,
    state: &HierarchyState,
    xi: Complex64,
    dt: f64,
    rhs: &mut HierarchyState,
) -> Result<(HierarchyState, f64)> {
    let mut next = state.clone();
    let factor = drift_step_in_place(model, &mut next, xi, dt, rhs)?;
    Ok((next, factor))
}

/// Euler no-count step writing through `rhs`, no allocation; returns the
/// renormalization factor applied.
fn drift_step_in_place(
    model: &SmeModel,
    state: &mut HierarchyState,
    xi: Complex64,
    dt: f64,
    rhs: &mut HierarchyState,
) -> Result<f64> {
    model.drift_generator_into(state, xi, rhs);
    state.add_scaled_state(Complex64::new(dt, 0.0), rhs);
    let tr = state.trace_at(model.n_input).re;
    if tr <= 0.0 {
        return Err(IntegrityError::DeadTrajectory { step: 0 }.into());
    }
    state.scale_all(Complex64::new(1.0 / tr, 0.0));
    Ok(1.0 / tr)
}

/// The normalized post-count state `J[rho] / k_t`.
pub fn jump_step(
    model: &SmeModel,
    state: &HierarchyState,
    xi: Complex64,
) -> Result<HierarchyState> {
    let k = model.intensity(state, xi)?;
    if k <= 0.0 {
        return Err(Error::Invalid(format!(
            "jump applied at non-positive intensity k = {k}"
        )));
    }
    let mut out = HierarchyState::zeros_like(state);
    model.jump_map_into(state, xi, &mut out);
    out.scale_all(Complex64::new(1.0 / k, 0.0));
    Ok(out)
}

/// Counting record: ordered jump times and the step process `N_t`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CountingRecord {
    pub times: Vec<f64>,
}

impl CountingRecord {
    pub fn new(mut times: Vec<f64>) -> Result<Self> {
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(
                "counting record times must be strictly increasing".into(),
            ));
        }
        Ok(CountingRecord { times })
    }

    /// `N_t`: number of counts at or before `t`.
    pub fn n_at(&self, t: f64) -> usize {
        self.times.iter().take_while(|&&x| x <= t).count()
    }
}

/// Diagnostics accumulated over a hierarchy run.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IntegrityReport {
    /// Set when the influence estimate crossed the limit on a run that was
    /// configured not to abort.
    pub stress_flagged: bool,
    pub most_negative_intensity: f64,
    /// Integrated norm of the couplings dropped at the hierarchy boundary,
    /// `int |xi| s sqrt(n_cut + 1) ||boundary|| dt`.
    pub truncation_stress: f64,
    /// Estimated influence of the dropped couplings on the physical
    /// component: the boundary error must propagate inward through
    /// `d = n_cut + 1 - n` couplings, each bounded by `s sqrt(k) int|xi|`,
    /// with the `1/d!` of the time ordering. Compared against the stress
    /// limit.
    pub truncation_influence: f64,
    pub coarse_step_warnings: usize,
}

/// Tracks the dropped-coupling diagnostics along a run.
#[derive(Debug, Clone)]
struct StressTracker {
    n_input: usize,
    n_cut: usize,
    s: f64,
}

impl StressTracker {
    fn new(model: &SmeModel) -> Self {
        StressTracker {
            n_input: model.n_input,
            n_cut: model.n_cut,
            s: model.params.sinh_r(),
        }
    }

    /// One step of diagnostics: `(stress increment, influence estimate)`.
    ///
    /// The stress increment is the literal norm of the dropped coupling.
    /// The influence estimate asks whether the truncation is biting:
    /// a healthy hierarchy decays towards its cut, so the boundary norm
    /// *relative to the largest retained component* is small, while an
    /// undersized cut shows no decay (ratio near one). The ratio is
    /// weighted by the inward-propagation chain: errors reach the
    /// physical component only through `d = n_cut + 1 - n` further
    /// couplings, each bounded by `s sqrt(k)` times the remaining pulse
    /// mass `int_t |xi|`, time-ordered (hence the `1/d!`).
    fn step(
        &mut self,
        dt: f64,
        xi_norm: f64,
        boundary: f64,
        max_component: f64,
        l1_remaining: f64,
    ) -> (f64, f64) {
        let increment = dt * xi_norm * self.s * ((self.n_cut + 1) as f64).sqrt() * boundary;
        let d = (self.n_cut + 1 - self.n_input) as f64;
        let relative = if max_component > 0.0 { boundary / max_component } else { 0.0 };
        let influence = if self.s > 0.0 && l1_remaining > 0.0 && relative > 0.0 {
            let ln = relative.ln()
                + d * (self.s * l1_remaining).ln()
                + 0.5
                    * (crate::quad::ln_factorial(self.n_cut + 1)
                        - crate::quad::ln_factorial(self.n_input))
                - crate::quad::ln_factorial(self.n_cut + 1 - self.n_input);
            ln.exp()
        } else {
            0.0
        };
        (increment, influence)
    }
}

/// Result of one conditional trajectory.
#[derive(Debug, Clone)]
pub struct SmeTrajectory {
    pub record: CountingRecord,
    pub checkpoints: Vec<Checkpoint>,
    pub final_state: HierarchyState,
    pub integrity: IntegrityReport,
}

/// Samples one conditional trajectory with Euler time step `dt`: per step
/// a Bernoulli(`k_t dt`) decides jump vs drift. Reproducible from the seed.
pub fn run_sme_trajectory(
    model: &SmeModel,
    psi0: &StateVector,
    dt: f64,
    t_end: f64,
    seed: u64,
    checkpoints: &[f64],
) -> Result<SmeTrajectory> {
    let mut rng = derive_rng(seed, 1);
    let steps = (t_end / dt).round() as usize;
    let mut state = model.initial_conditional(psi0);
    let mut rhs = HierarchyState::zeros_like(&state);
    let mut report = IntegrityReport::default();
    let mut tracker = StressTracker::new(model);
    let mut times = Vec::new();
    let mut points = Vec::new();
    let mut next_checkpoint = 0usize;

    // The exact intensity is nonnegative; truncation distortion shows up
    // as structural negativity. Euler stepping of the nonlinear equation
    // additionally dips O(dt) below zero where k_t crosses zero (right
    // after low-intensity counts, where the renormalized auxiliary
    // components can also transiently amplify), so the gate carries a
    // dt-proportional, state-amplitude-aware allowance that vanishes in
    // the continuum limit.
    let k_scale = model.system.l_dag_l().one_norm()
        * (2.0 * model.params.r).cosh()
        * (model.n_input + 1) as f64;

    for step in 0..steps {
        let t = step as f64 * dt;
        let xi = model.xi(t);
        let k = model.intensity(&state, xi)?;
        let amp = state.max_component_norm().max(1.0);
        if k < -1e-9 - 50.0 * dt * k_scale * amp {
            return Err(IntegrityError::NegativeIntensity { t, value: k }.into());
        }
        report.most_negative_intensity = report.most_negative_intensity.min(k);
        let mut p = (k * dt).max(0.0);
        if p > 0.5 {
            if amp > 1.5 {
                // Transient post-count amplification; clamp and record.
                p = 0.5;
                report.coarse_step_warnings += 1;
            } else {
                return Err(IntegrityError::StepTooCoarse { t, k_dt: p }.into());
            }
        }
        if p > 0.1 {
            report.coarse_step_warnings += 1;
        }
        let jump = rng.random::<f64>() < p;
        if jump {
            state = jump_step(model, &state, xi)?;
            times.push(t);
        } else {
            drift_step_in_place(model, &mut state, xi, dt, &mut rhs)?;
        }
        let (increment, influence) = tracker.step(
            dt,
            xi.norm(),
            state.boundary_norm(),
            state.max_component_norm(),
            model.profile.l1_tail(t),
        );
        report.truncation_stress += increment;
        report.truncation_influence = report.truncation_influence.max(influence);
        if report.truncation_influence > model.stress_limit {
            if model.stress_abort {
                return Err(IntegrityError::TruncationStress {
                    t,
                    stress: report.truncation_influence,
                    limit: model.stress_limit,
                }
                .into());
            }
            report.stress_flagged = true;
        }
        while next_checkpoint < checkpoints.len()
            && (step + 1) as f64 * dt >= checkpoints[next_checkpoint] - 1e-9
        {
            points.push(Checkpoint {
                t: (step + 1) as f64 * dt,
                rho: DensityOperator::from_operator(
                    state.component(model.n_input, model.n_input),
                ),
            });
            next_checkpoint += 1;
        }
    }
    Ok(SmeTrajectory {
        record: CountingRecord { times },
        checkpoints: points,
        final_state: state,
        integrity: report,
    })
}

/// Integration scheme for the deterministic hierarchies and record replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Euler,
    Rk4,
}

/// Replays a fixed counting record deterministically: the linear no-count
/// generator is integrated between counts (renormalizing for output only),
/// and the count map is applied at the step containing each count time.
pub fn run_sme_with_record(
    model: &SmeModel,
    psi0: &StateVector,
    record: &CountingRecord,
    dt: f64,
    t_end: f64,
    checkpoints: &[f64],
    method: Method,
) -> Result<(HierarchyState, Vec<Checkpoint>)> {
    let steps = (t_end / dt).round() as usize;
    let mut state = model.initial_conditional(psi0);
    let mut euler_rhs = HierarchyState::zeros_like(&state);
    let mut work = RkWork::new(&state);
    let mut points = Vec::new();
    let mut next_checkpoint = 0usize;
    let mut next_count = 0usize;

    for step in 0..steps {
        let t = step as f64 * dt;
        // Counts scheduled within [t, t + dt) fire at the step start.
        if next_count < record.times.len() && record.times[next_count] < t + dt * (1.0 - 1e-9) {
            let xi = model.xi(record.times[next_count]);
            let mut out = HierarchyState::zeros_like(&state);
            model.jump_map_into(&state, xi, &mut out);
            state = out;
            next_count += 1;
        }
        match method {
            Method::Euler => {
                let xi = model.xi(t);
                model.drift_generator_into(&state, xi, &mut euler_rhs);
                state.add_scaled_state(Complex64::new(dt, 0.0), &euler_rhs);
            }
            Method::Rk4 => {
                rk4_step(
                    &mut state,
                    t,
                    dt,
                    |s, tt, out| model.drift_generator_into(s, model.xi(tt), out),
                    &mut work,
                )?;
            }
        }
        // Keep the linear solution scaled to its physical trace.
        let tr = state.trace_at(model.n_input).re;
        if tr < 1e-280 {
            return Err(IntegrityError::DeadTrajectory { step }.into());
        }
        state.scale_all(Complex64::new(1.0 / tr, 0.0));
        while next_checkpoint < checkpoints.len()
            && (step + 1) as f64 * dt >= checkpoints[next_checkpoint] - 1e-9
        {
            points.push(Checkpoint {
                t: (step + 1) as f64 * dt,
                rho: DensityOperator::from_operator(
                    state.component(model.n_input, model.n_input),
                ),
            });
            next_checkpoint += 1;
        }
    }
    Ok((state, points))
}

/// Reusable Runge-Kutta stage buffers.
pub struct RkWork {
    k1: HierarchyState,
    k2: HierarchyState,
    k3: HierarchyState,
    k4: HierarchyState,
    tmp: HierarchyState,
}

impl RkWork {
    pub fn new(template: &HierarchyState) -> Self {
        RkWork {
            k1: HierarchyState::zeros_like(template),
            k2: HierarchyState::zeros_like(template),
            k3: HierarchyState::zeros_like(template),
            k4: HierarchyState::zeros_like(template),
            tmp: HierarchyState::zeros_like(template),
        }
    }
}

fn rk4_step(
    state: &mut HierarchyState,
    t: f64,
    dt: f64,
    mut rhs: impl FnMut(&HierarchyState, f64, &mut HierarchyState),
    work: &mut RkWork,
) -> Result<()> {
    rhs(state, t, &mut work.k1);
    work.tmp.clone_from(state);
    work.tmp
        .add_scaled_state(Complex64::new(dt / 2.0, 0.0), &work.k1);
    rhs(&work.tmp, t + dt / 2.0, &mut work.k2);
    work.tmp.clone_from(state);
    work.tmp
        .add_scaled_state(Complex64::new(dt / 2.0, 0.0), &work.k2);
    rhs(&work.tmp, t + dt / 2.0, &mut work.k3);
    work.tmp.clone_from(state);
    work.tmp.add_scaled_state(Complex64::new(dt, 0.0), &work.k3);
    rhs(&work.tmp, t + dt, &mut work.k4);
    state.add_scaled_state(Complex64::new(dt / 6.0, 0.0), &work.k1);
    state.add_scaled_state(Complex64::new(dt / 3.0, 0.0), &work.k2);
    state.add_scaled_state(Complex64::new(dt / 3.0, 0.0), &work.k3);
    state.add_scaled_state(Complex64::new(dt / 6.0, 0.0), &work.k4);
    Ok(())
}

/// One deterministic master-hierarchy step.
pub fn master_step(
    model: &SmeModel,
    state: &mut HierarchyState,
    t: f64,
    dt: f64,
    method: Method,
    work: &mut RkWork,
) -> Result<()> {
    match method {
        Method::Euler => {
            model.master_rhs_into(state, model.xi(t), &mut work.k1);
            let k1 = HierarchyState::clone(&work.k1);
            state.add_scaled_state(Complex64::new(dt, 0.0), &k1);
            Ok(())
        }
        Method::Rk4 => rk4_step(
            state,
            t,
            dt,
            |s, tt, out| model.master_rhs_into(s, model.xi(tt), out),
            work,
        ),
    }
}

/// Integrates the unconditional master hierarchy to `t_end`.
pub fn master_evolve(
    model: &SmeModel,
    psi0: &StateVector,
    dt: f64,
    t_end: f64,
    checkpoints: &[f64],
    method: Method,
) -> Result<(HierarchyState, Vec<Checkpoint>, IntegrityReport)> {
    let steps = (t_end / dt).round() as usize;
    let mut state = model.initial_unconditional(psi0);
    let mut work = RkWork::new(&state);
    let mut report = IntegrityReport::default();
    let mut tracker = StressTracker::new(model);
    let mut points = Vec::new();
    let mut next_checkpoint = 0usize;
    for step in 0..steps {
        let t = step as f64 * dt;
        master_step(model, &mut state, t, dt, method, &mut work)?;
        let (increment, influence) = tracker.step(
            dt,
            model.xi(t).norm(),
            state.boundary_norm(),
            state.max_component_norm(),
            model.profile.l1_tail(t),
        );
        report.truncation_stress += increment;
        report.truncation_influence = report.truncation_influence.max(influence);
        if report.truncation_influence > model.stress_limit {
            return Err(IntegrityError::TruncationStress {
                t,
                stress: report.truncation_influence,
                limit: model.stress_limit,
            }
            .into());
        }
        while next_checkpoint < checkpoints.len()
            && (step + 1) as f64 * dt >= checkpoints[next_checkpoint] - 1e-9
        {
            points.push(Checkpoint {
                t: (step + 1) as f64 * dt,
                rho: DensityOperator::from_operator(
                    state.component(model.n_input, model.n_input),
                ),
            });
            next_checkpoint += 1;
        }
    }
    Ok((state, points, report))
}

/// Photon-number-basis hierarchy `varrho^{m',m''}` with the downward-only
/// couplings; exactly closed for `m <= m_cut`.
pub fn number_basis_rhs_into(
    kit: &SuperKit,
    state: &HierarchyState,
    xi: Complex64,
    out: &mut HierarchyState,
) {
    for mp in 0..=state.n_cut {
        for mpp in mp..=state.n_cut {
            let idx = state.idx(mp, mpp);
            let rho = &state.ops[idx];
            let dst = &mut out.ops[idx];
            dst.zero_out();
            kit.lindblad.apply_acc(Complex64::ONE, rho, dst);
            // sqrt(m') xi [rho^{m'-1,m''}, L^dag]
            if mp >= 1 {
                let w = xi * Complex64::new((mp as f64).sqrt(), 0.0);
                let below = state.component(mp - 1, mpp);
                kit.ldag_right.apply_acc(w, below, dst);
                kit.ldag_left.apply_acc(-w, below, dst);
            }
            // sqrt(m'') xi* [L, rho^{m',m''-1}]
            if mpp >= 1 {
                let w = xi.conj() * Complex64::new((mpp as f64).sqrt(), 0.0);
                let left = state.component(mp, mpp - 1);
                kit.l_left.apply_acc(w, left, dst);
                kit.l_right.apply_acc(-w, left, dst);
            }
        }
    }
    out.mirror_lower_from_upper();
}

/// Integrates the number-basis hierarchy (`m_cut` from the coefficient
/// table) to `t_end`.
pub fn number_basis_evolve(
    system: &System,
    profile: &Profile,
    psi0: &StateVector,
    m_cut: usize,
    dt: f64,
    t_end: f64,
    method: Method,
) -> Result<HierarchyState> {
    let mut state = HierarchyState::delta_init(m_cut, psi0, HierarchyKind::NumberBasis);
    number_basis_evolve_between(system, profile, &mut state, 0.0, t_end, dt, method)?;
    Ok(state)
}

/// Continues a number-basis hierarchy from `t_from` to `t_to`.
pub fn number_basis_evolve_between(
    system: &System,
    profile: &Profile,
    state: &mut HierarchyState,
    t_from: f64,
    t_to: f64,
    dt: f64,
    method: Method,
) -> Result<()> {
    if state.kind != HierarchyKind::NumberBasis {
        return Err(Error::Invalid(
            "number_basis_evolve_between expects a number-basis hierarchy".into(),
        ));
    }
    let steps = ((t_to - t_from) / dt).round().max(0.0) as usize;
    let kit = SuperKit::new(system);
    let mut work = RkWork::new(state);
    for step in 0..steps {
        let t = t_from + step as f64 * dt;
        match method {
            Method::Euler => {
                let xi = Complex64::new(profile.value(t), 0.0);
                number_basis_rhs_into(&kit, state, xi, &mut work.k1);
                let k1 = HierarchyState::clone(&work.k1);
                state.add_scaled_state(Complex64::new(dt, 0.0), &k1);
            }
            Method::Rk4 => {
                let profile = *profile;
                rk4_step(
                    state,
                    t,
                    dt,
                    |s, tt, out| {
                        number_basis_rhs_into(
                            &kit,
                            s,
                            Complex64::new(profile.value(tt), 0.0),
                            out,
                        )
                    },
                    &mut work,
                )?;
            }
        }
    }
    Ok(())
}

/// Converts the number-basis hierarchy into the squeezed-basis component
/// `sigma^{n',n''} = sum a_{m'}(n') a*_{m''}(n'') varrho^{m',m''}`.
pub fn convert_basis(
    number: &HierarchyState,
    table_left: &CoefficientTable,
    table_right: &CoefficientTable,
) -> Result<Operator> {
    if number.kind != HierarchyKind::NumberBasis {
        return Err(Error::Invalid(
            "convert_basis expects a number-basis hierarchy".into(),
        ));
    }
    if table_left.m_cut() != number.n_cut || table_right.m_cut() != number.n_cut {
        return Err(Error::Invalid(format!(
            "coefficient cut ({}, {}) inconsistent with hierarchy cut {}",
            table_left.m_cut(),
            table_right.m_cut(),
            number.n_cut
        )));
    }
    let mut sigma = Operator::zeros(number.dim);
    for mp in 0..=number.n_cut {
        let a_l = table_left.coeff(mp);
        if a_l == Complex64::ZERO {
            continue;
        }
        for mpp in 0..=number.n_cut {
            let a_r = table_right.coeff(mpp);
            if a_r == Complex64::ZERO {
                continue;
            }
            sigma.add_scaled(a_l * a_r.conj(), number.component(mp, mpp));
        }
    }
    Ok(sigma)
}

/// Samples an ensemble of conditional trajectories, in stream order.
///
/// Per-trajectory stress alarms flag instead of aborting; a trajectory
/// that dies numerically (a rare conditional excursion the Euler step
/// cannot survive) is redrawn from a disjoint substream, deterministic
/// and thread-count independent. The combined fraction of flagged plus
/// redrawn trajectories must stay below 0.5%, otherwise the whole
/// ensemble fails with a truncation-stress error.
pub fn run_ensemble(
    model: &SmeModel,
    psi0: &StateVector,
    dt: f64,
    t_end: f64,
    seed: u64,
    n_traj: usize,
    checkpoints: &[f64],
) -> Result<Vec<SmeTrajectory>> {
    use rayon::prelude::*;
    let mut per_traj = model.clone();
    per_traj.stress_abort = false;
    let runs: Vec<Result<(SmeTrajectory, usize)>> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut attempt = 0usize;
            loop {
                let stream = seed.wrapping_add((i + attempt * n_traj) as u64);
                match run_sme_trajectory(&per_traj, psi0, dt, t_end, stream, checkpoints) {
                    Ok(t) => return Ok((t, attempt)),
                    Err(Error::Integrity(_)) if attempt < 3 => attempt += 1,
                    Err(e) => return Err(e),
                }
            }
        })
        .collect();
    let mut trajectories = Vec::with_capacity(n_traj);
    let mut redrawn = 0usize;
    for r in runs {
        let (t, attempt) = r?;
        redrawn += attempt;
        trajectories.push(t);
    }
    let flagged = trajectories
        .iter()
        .filter(|t| t.integrity.stress_flagged)
        .count();
    if (flagged + redrawn) as f64 > 0.005 * n_traj as f64 {
        return Err(IntegrityError::TruncationStress {
            t: t_end,
            stress: (flagged + redrawn) as f64 / n_traj as f64,
            limit: 0.005,
        }
        .into());
    }
    Ok(trajectories)
}

/// Ensemble mean of conditional trajectories at the checkpoints, reduced
/// with a fixed pairwise tree so the result is independent of thread
/// count. Returns `(checkpoint means, mean count number, records)`.
pub fn ensemble_mean(
    model: &SmeModel,
    psi0: &StateVector,
    dt: f64,
    t_end: f64,
    seed: u64,
    n_traj: usize,
    checkpoints: &[f64],
) -> Result<(Vec<Operator>, f64, Vec<CountingRecord>)> {
    let trajectories = run_ensemble(model, psi0, dt, t_end, seed, n_traj, checkpoints)?;
    let dim = model.system.dim();
    let mut means = Vec::with_capacity(checkpoints.len());
    for ci in 0..checkpoints.len() {
        let mut mean = Operator::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                let res: Vec<f64> = trajectories
                    .iter()
                    .map(|t| {
                        let r = &t.checkpoints[ci].rho;
                        r.re[i * dim + j]
                    })
                    .collect();
                let ims: Vec<f64> = trajectories
                    .iter()
                    .map(|t| {
                        let r = &t.checkpoints[ci].rho;
                        r.im[i * dim + j]
                    })
                    .collect();
                mean.set(
                    i,
                    j,
                    Complex64::new(pairwise_sum(&res), pairwise_sum(&ims))
                        / Complex64::new(n_traj as f64, 0.0),
                );
            }
        }
        means.push(mean);
    }
    let counts: Vec<f64> = trajectories
        .iter()
        .map(|t| t.record.times.len() as f64)
        .collect();
    let mean_counts = pairwise_sum(&counts) / n_traj as f64;
    Ok((
        means,
        mean_counts,
        trajectories.into_iter().map(|t| t.record).collect(),
    ))
}
