//! The monitored quantum system: Hamiltonian, jump operator, and the
//! derived operators every route keeps reusing.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::Operator;

/// System Hamiltonian `H_S` (angular frequency, hbar = 1) and jump
/// operator `L` (units time^{-1/2}).
#[derive(Debug, Clone, PartialEq)]
pub struct System {
    h: Operator,
    l: Operator,
    l_dag: Operator,
    l_dag_l: Operator,
}

impl System {
    pub fn new(h: Operator, l: Operator) -> Result<Self> {
        if h.dim() != l.dim() {
            return Err(Error::Dimension(format!(
                "H dim {} != L dim {}",
                h.dim(),
                l.dim()
            )));
        }
        if !h.is_hermitian(1e-12 * (1.0 + h.frobenius_norm())) {
            return Err(Error::Invalid("system Hamiltonian is not Hermitian".into()));
        }
        let l_dag = l.adjoint();
        let l_dag_l = l_dag.mul(&l)?;
        Ok(System { h, l, l_dag, l_dag_l })
    }

    /// Two-level atom in the rotating frame: `H = delta |e><e|`,
    /// `L = sqrt(gamma) sigma_-`, basis `(|g>, |e>)`.
    pub fn two_level(delta: f64, gamma: f64) -> Result<Self> {
        if gamma < 0.0 {
            return Err(Error::Invalid(format!("coupling gamma must be >= 0, got {gamma}")));
        }
        let h = Operator::from_fn(2, |i, j| {
            if i == 1 && j == 1 {
                Complex64::new(delta, 0.0)
            } else {
                Complex64::ZERO
            }
        });
        let l = Operator::annihilation(2)?.scaled(Complex64::new(gamma.sqrt(), 0.0));
        Self::new(h, l)
    }

    /// Cavity mode in the rotating frame: `H = delta a^dag a`,
    /// `L = sqrt(gamma) a` on a `dim`-dimensional Fock truncation.
    pub fn cavity(delta: f64, gamma: f64, dim: usize) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::Invalid(format!("coupling gamma must be > 0, got {gamma}")));
        }
        let h = Operator::number(dim).scaled(Complex64::new(delta, 0.0));
        let l = Operator::annihilation(dim)?.scaled(Complex64::new(gamma.sqrt(), 0.0));
        Self::new(h, l)
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    pub fn l(&self) -> &Operator {
        &self.l
    }

    pub fn l_dag(&self) -> &Operator {
        &self.l_dag
    }

    pub fn l_dag_l(&self) -> &Operator {
        &self.l_dag_l
    }

    /// Non-Hermitian generator `G = H - (i/2) L^dag L` of the no-count
    /// propagation.
    pub fn effective_generator(&self) -> Operator {
        let mut g = self.h.clone();
        g.add_scaled(Complex64::new(0.0, -0.5), &self.l_dag_l);
        g
    }
}
