//! Dense operator algebra on truncated Fock spaces.
//!
//! Everything downstream (collision unitaries, hierarchy components,
//! propagators) is carried by [`Operator`]: a small dense complex matrix.
//! The spaces involved are tiny (system dim ≲ 32, ancilla dim ≲ 8), so
//! dense storage with hand-rolled kernels beats any sparse or BLAS-backed
//! representation here.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense complex square matrix on a truncated Fock (or any finite) space.
///
/// Row-major; immutable use is the norm, mutating helpers exist for hot
/// loops that must not allocate.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Vec<Complex64>,
}

/// Complex state vector on the same truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    dim: usize,
    data: Vec<Complex64>,
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        Operator {
            dim,
            data: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            op.data[i * dim + i] = Complex64::ONE;
        }
        op
    }

    /// Annihilation operator: `b|n> = sqrt(n)|n-1>`, i.e. entries
    /// `(b)_{m-1,m} = sqrt(m)`.
    pub fn annihilation(dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::Invalid(format!(
                "annihilation operator needs dim >= 2, got {dim}"
            )));
        }
        let mut op = Self::zeros(dim);
        for m in 1..dim {
            op.data[(m - 1) * dim + m] = Complex64::new((m as f64).sqrt(), 0.0);
        }
        Ok(op)
    }

    pub fn creation(dim: usize) -> Result<Self> {
        Ok(Self::annihilation(dim)?.adjoint())
    }

    /// Number operator `diag(0, 1, ..., dim-1)`.
    pub fn number(dim: usize) -> Self {
        let mut op = Self::zeros(dim);
        for m in 0..dim {
            op.data[m * dim + m] = Complex64::new(m as f64, 0.0);
        }
        op
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut op = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                op.data[i * dim + j] = f(i, j);
            }
        }
        op
    }

    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("from_rows: ragged rows".into()));
        }
        Ok(Operator {
            dim,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.dim + j] = v;
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn adjoint(&self) -> Self {
        let n = self.dim;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[j * n + i] = self.data[i * n + j].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn scaled(&self, z: Complex64) -> Self {
        Operator {
            dim: self.dim,
            data: self.data.iter().map(|v| v * z).collect(),
        }
    }

    pub fn scale_mut(&mut self, z: Complex64) {
        for v in &mut self.data {
            *v *= z;
        }
    }

    pub fn add_scaled(&mut self, z: Complex64, other: &Operator) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += z * b;
        }
    }

    pub fn zero_out(&mut self) {
        self.data.fill(Complex64::ZERO);
    }

    /// `out += alpha * a * b`; the only matrix product used in hot loops.
    pub fn gemm_acc(out: &mut Operator, alpha: Complex64, a: &Operator, b: &Operator) {
        let n = out.dim;
        debug_assert!(a.dim == n && b.dim == n);
        for i in 0..n {
            for k in 0..n {
                let aik = alpha * a.data[i * n + k];
                if aik == Complex64::ZERO {
                    continue;
                }
                let brow = &b.data[k * n..(k + 1) * n];
                let orow = &mut out.data[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aik * brow[j];
                }
            }
        }
    }

    pub fn mul(&self, other: &Operator) -> Result<Operator> {
        if self.dim != other.dim {
            return Err(Error::Dimension(format!(
                "product of {}x{} with {}x{}",
                self.dim, self.dim, other.dim, other.dim
            )));
        }
        let mut out = Operator::zeros(self.dim);
        Self::gemm_acc(&mut out, Complex64::ONE, self, other);
        Ok(out)
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        if self.dim != psi.dim {
            return Err(Error::Dimension(format!(
                "operator dim {} applied to vector dim {}",
                self.dim, psi.dim
            )));
        }
        let mut out = StateVector::zero(self.dim);
        self.apply_acc(Complex64::ONE, psi, &mut out);
        Ok(out)
    }

    /// `out += alpha * A * psi` without allocation.
    #[inline]
    pub fn apply_acc(&self, alpha: Complex64, psi: &StateVector, out: &mut StateVector) {
        let n = self.dim;
        for i in 0..n {
            let row = &self.data[i * n..(i + 1) * n];
            let mut acc = Complex64::ZERO;
            for j in 0..n {
                acc += row[j] * psi.data[j];
            }
            out.data[i] += alpha * acc;
        }
    }

    /// `|v><w|`.
    pub fn outer(v: &StateVector, w: &StateVector) -> Operator {
        let n = v.dim;
        let mut out = Operator::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out.data[i * n + j] = v.data[i] * w.data[j].conj();
            }
        }
        out
    }

    /// `self += alpha * |v><w|` without allocation.
    pub fn outer_acc(&mut self, alpha: Complex64, v: &StateVector, w: &StateVector) {
        let n = self.dim;
        for i in 0..n {
            let vi = alpha * v.data[i];
            let row = &mut self.data[i * n..(i + 1) * n];
            for j in 0..n {
                row[j] += vi * w.data[j].conj();
            }
        }
    }

    pub fn kron(a: &Operator, b: &Operator) -> Operator {
        let (na, nb) = (a.dim, b.dim);
        let n = na * nb;
        let mut out = Operator::zeros(n);
        for ia in 0..na {
            for ja in 0..na {
                let aij = a.data[ia * na + ja];
                if aij == Complex64::ZERO {
                    continue;
                }
                for ib in 0..nb {
                    for jb in 0..nb {
                        out.data[(ia * nb + ib) * n + (ja * nb + jb)] =
                            aij * b.data[ib * nb + jb];
                    }
                }
            }
        }
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Maximum absolute column sum (the induced 1-norm).
    pub fn one_norm(&self) -> f64 {
        let n = self.dim;
        (0..n)
            .map(|j| (0..n).map(|i| self.data[i * n + j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.dim;
        for i in 0..n {
            for j in i..n {
                if (self.data[i * n + j] - self.data[j * n + i].conj()).norm() > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Eigenvalues of a Hermitian matrix by cyclic complex Jacobi sweeps.
    pub fn hermitian_eigenvalues(&self) -> Result<Vec<f64>> {
        if !self.is_hermitian(1e-9 * (1.0 + self.frobenius_norm())) {
            return Err(Error::Invalid(
                "hermitian_eigenvalues called on a non-Hermitian matrix".into(),
            ));
        }
        let n = self.dim;
        let mut h = self.clone();
        let scale = self.frobenius_norm().max(1e-300);
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += h.data[p * n + q].norm_sqr();
                }
            }
            if off.sqrt() <= 1e-14 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = h.data[p * n + q];
                    let mag = apq.norm();
                    if mag <= 1e-300 {
                        continue;
                    }
                    let phase = apq / mag;
                    let app = h.data[p * n + p].re;
                    let aqq = h.data[q * n + q].re;
                    let theta = (aqq - app) / (2.0 * mag);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    // G: identity except G[p,p]=c, G[p,q]=-s*phase, G[q,p]=s*conj(phase), G[q,q]=c.
                    // Columns: col_p' = c col_p + s conj(phase) col_q ; col_q' = -s phase col_p + c col_q.
                    for k in 0..n {
                        let hkp = h.data[k * n + p];
                        let hkq = h.data[k * n + q];
                        h.data[k * n + p] = c * hkp + s * phase.conj() * hkq;
                        h.data[k * n + q] = -s * phase * hkp + c * hkq;
                    }
                    // Rows via G^dagger on the left.
                    for k in 0..n {
                        let hpk = h.data[p * n + k];
                        let hqk = h.data[q * n + k];
                        h.data[p * n + k] = c * hpk + s * phase * hqk;
                        h.data[q * n + k] = -s * phase.conj() * hpk + c * hqk;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| h.data[i * n + i].re).collect();
        eig.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(eig)
    }

    /// Trace norm (sum of |eigenvalues|) of a Hermitian matrix.
    pub fn trace_norm(&self) -> Result<f64> {
        Ok(self.hermitian_eigenvalues()?.iter().map(|x| x.abs()).sum())
    }
}

impl std::ops::Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator addition dim mismatch");
        let mut out = self.clone();
        out.add_scaled(Complex64::ONE, rhs);
        out
    }
}

impl std::ops::Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator subtraction dim mismatch");
        let mut out = self.clone();
        out.add_scaled(-Complex64::ONE, rhs);
        out
    }
}

/// A linear map on operators, stored sparsely over the `d^2` entry basis.
///
/// Hierarchy evolutions apply the same few superoperators (commutators
/// with H, one-sided multiplications by L, the sandwich L . L^dag) to
/// thousands of small components per step; probing the map once on the
/// matrix-unit basis and replaying the nonzero entries is far cheaper
/// than re-doing dense products.
#[derive(Debug, Clone)]
pub struct SuperOp {
    dim: usize,
    entries: Vec<(u32, u32, Complex64)>,
}

impl SuperOp {
    /// Builds the sparse form of a linear operator map by probing it on
    /// all matrix units.
    pub fn from_linear(dim: usize, f: impl Fn(&Operator) -> Operator) -> Self {
        let mut entries = Vec::new();
        let mut probe = Operator::zeros(dim);
        for col in 0..dim * dim {
            probe.data[col] = Complex64::ONE;
            let image = f(&probe);
            debug_assert_eq!(image.dim(), dim);
            for (row, &v) in image.data.iter().enumerate() {
                if v != Complex64::ZERO {
                    entries.push((row as u32, col as u32, v));
                }
            }
            probe.data[col] = Complex64::ZERO;
        }
        SuperOp { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `dst += alpha * S[src]`.
    #[inline]
    pub fn apply_acc(&self, alpha: Complex64, src: &Operator, dst: &mut Operator) {
        debug_assert!(src.dim == self.dim && dst.dim == self.dim);
        let s = &src.data;
        let d = &mut dst.data;
        for &(row, col, v) in &self.entries {
            d[row as usize] += alpha * v * s[col as usize];
        }
    }
}

/// `AB - BA`.
pub fn commutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "commutator of dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut out = Operator::zeros(a.dim());
    Operator::gemm_acc(&mut out, Complex64::ONE, a, b);
    Operator::gemm_acc(&mut out, -Complex64::ONE, b, a);
    Ok(out)
}

/// `AB + BA`.
pub fn anticommutator(a: &Operator, b: &Operator) -> Result<Operator> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension(format!(
            "anticommutator of dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let mut out = Operator::zeros(a.dim());
    Operator::gemm_acc(&mut out, Complex64::ONE, a, b);
    Operator::gemm_acc(&mut out, Complex64::ONE, b, a);
    Ok(out)
}

impl StateVector {
    pub fn zero(dim: usize) -> Self {
        StateVector {
            dim,
            data: vec![Complex64::ZERO; dim],
        }
    }

    pub fn basis(dim: usize, k: usize) -> Self {
        let mut v = Self::zero(dim);
        v.data[k] = Complex64::ONE;
        v
    }

    pub fn from_vec(data: Vec<Complex64>) -> Self {
        StateVector {
            dim: data.len(),
            data,
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, i: usize) -> Complex64 {
        self.data[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: Complex64) {
        self.data[i] = v;
    }

    /// `<self|other>` (conjugate-linear in `self`).
    pub fn dot(&self, other: &StateVector) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale_mut(&mut self, z: Complex64) {
        for v in &mut self.data {
            *v *= z;
        }
    }

    pub fn add_scaled(&mut self, z: Complex64, other: &StateVector) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += z * b;
        }
    }

    pub fn zero_out(&mut self) {
        self.data.fill(Complex64::ZERO);
    }

    pub fn normalized(&self) -> StateVector {
        let n = self.norm();
        let mut v = self.clone();
        v.scale_mut(Complex64::new(1.0 / n, 0.0));
        v
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Density operator: an [`Operator`] that is Hermitian and trace-normalized
/// (to 1 for states; unnormalized conditional operators carry their own
/// declared trace).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityOperator {
    pub dim: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl DensityOperator {
    pub fn from_operator(op: &Operator) -> Self {
        DensityOperator {
            dim: op.dim(),
            re: op.data().iter().map(|z| z.re).collect(),
            im: op.data().iter().map(|z| z.im).collect(),
        }
    }

    pub fn pure(psi: &StateVector) -> Self {
        Self::from_operator(&Operator::outer(psi, psi))
    }

    pub fn to_operator(&self) -> Operator {
        Operator {
            dim: self.dim,
            data: self
                .re
                .iter()
                .zip(&self.im)
                .map(|(&re, &im)| Complex64::new(re, im))
                .collect(),
        }
    }

    /// Checks hermiticity and the declared trace.
    pub fn validate(&self, expected_trace: f64, tol: f64) -> Result<()> {
        let op = self.to_operator();
        if !op.is_finite() {
            return Err(Error::Invalid("density operator has non-finite entries".into()));
        }
        if !op.is_hermitian(tol) {
            return Err(Error::Invalid("density operator is not Hermitian".into()));
        }
        let tr = op.trace();
        if (tr.re - expected_trace).abs() > tol || tr.im.abs() > tol {
            return Err(Error::Invalid(format!(
                "density operator trace {tr} differs from declared {expected_trace}"
            )));
        }
        Ok(())
    }
}

/// Trace-norm distance `|| A - B ||_1` between two Hermitian operators.
pub fn trace_norm_distance(a: &Operator, b: &Operator) -> Result<f64> {
    (a - b).trace_norm()
}

/// A conditional or unconditional system state recorded at a time point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub rho: DensityOperator,
}

/// `exp(z A)` by Pade-13 scaling and squaring.
///
/// Backward error is below 1e-12 (in the induced 1-norm) for any finite
/// argument; overflow surfaces as an explicit error, never as silent NaN.
pub fn matrix_exponential(a: &Operator, z: Complex64) -> Result<Operator> {
    let mut m = a.scaled(z);
    if !m.is_finite() {
        return Err(Error::Overflow("non-finite input to matrix exponential".into()));
    }
    let norm = m.one_norm();
    const THETA13: f64 = 5.371_920_351_148_152;
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as u32
    } else {
        0
    };
    if squarings > 60 {
        return Err(Error::Overflow(format!(
            "matrix exponential argument norm {norm:.3e} too large"
        )));
    }
    m.scale_mut(Complex64::new(0.5f64.powi(squarings as i32), 0.0));

    let x = pade13(&m)?;
    let mut result = x;
    for _ in 0..squarings {
        let mut sq = Operator::zeros(result.dim());
        Operator::gemm_acc(&mut sq, Complex64::ONE, &result, &result);
        result = sq;
    }
    if !result.is_finite() {
        return Err(Error::Overflow(
            "matrix exponential overflowed during squaring".into(),
        ));
    }
    Ok(result)
}

fn pade13(m: &Operator) -> Result<Operator> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = m.dim();
    let id = Operator::identity(n);
    let m2 = m.mul(m)?;
    let m4 = m2.mul(&m2)?;
    let m6 = m4.mul(&m2)?;

    let mut inner_u = Operator::zeros(n);
    inner_u.add_scaled(Complex64::new(B[13], 0.0), &m6);
    inner_u.add_scaled(Complex64::new(B[11], 0.0), &m4);
    inner_u.add_scaled(Complex64::new(B[9], 0.0), &m2);
    let mut u_poly = m6.mul(&inner_u)?;
    u_poly.add_scaled(Complex64::new(B[7], 0.0), &m6);
    u_poly.add_scaled(Complex64::new(B[5], 0.0), &m4);
    u_poly.add_scaled(Complex64::new(B[3], 0.0), &m2);
    u_poly.add_scaled(Complex64::new(B[1], 0.0), &id);
    let u = m.mul(&u_poly)?;

    let mut inner_v = Operator::zeros(n);
    inner_v.add_scaled(Complex64::new(B[12], 0.0), &m6);
    inner_v.add_scaled(Complex64::new(B[10], 0.0), &m4);
    inner_v.add_scaled(Complex64::new(B[8], 0.0), &m2);
    let mut v = m6.mul(&inner_v)?;
    v.add_scaled(Complex64::new(B[6], 0.0), &m6);
    v.add_scaled(Complex64::new(B[4], 0.0), &m4);
    v.add_scaled(Complex64::new(B[2], 0.0), &m2);
    v.add_scaled(Complex64::new(B[0], 0.0), &id);

    let lhs = &v - &u;
    let rhs = &v + &u;
    lu_solve(lhs, rhs)
}

/// Solves `A X = B` by LU with partial pivoting; consumes both.
fn lu_solve(mut a: Operator, mut b: Operator) -> Result<Operator> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Dimension("lu_solve shape mismatch".into()));
    }
    for col in 0..n {
        let (pivot_row, pivot_mag) = (col..n)
            .map(|r| (r, a.at(r, col).norm()))
            .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap())
            .unwrap();
        if pivot_mag < 1e-300 {
            return Err(Error::Overflow("singular matrix in Pade solve".into()));
        }
        if pivot_row != col {
            for j in 0..n {
                let tmp = a.at(col, j);
                a.set(col, j, a.at(pivot_row, j));
                a.set(pivot_row, j, tmp);
                let tmp = b.at(col, j);
                b.set(col, j, b.at(pivot_row, j));
                b.set(pivot_row, j, tmp);
            }
        }
        let inv_pivot = Complex64::ONE / a.at(col, col);
        for r in (col + 1)..n {
            let factor = a.at(r, col) * inv_pivot;
            if factor == Complex64::ZERO {
                continue;
            }
            for j in col..n {
                let v = a.at(r, j) - factor * a.at(col, j);
                a.set(r, j, v);
            }
            for j in 0..n {
                let v = b.at(r, j) - factor * b.at(col, j);
                b.set(r, j, v);
            }
        }
    }
    // Back substitution.
    let mut x = Operator::zeros(n);
    for j in 0..n {
        for i in (0..n).rev() {
            let mut acc = b.at(i, j);
            for k in (i + 1)..n {
                acc -= a.at(i, k) * x.at(k, j);
            }
            x.set(i, j, acc / a.at(i, i));
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn annihilation_dim2_is_sigma_minus() {
        let b = Operator::annihilation(2).unwrap();
        assert_eq!(b.at(0, 1), c(1.0, 0.0));
        assert_eq!(b.at(0, 0), Complex64::ZERO);
        assert_eq!(b.at(1, 0), Complex64::ZERO);
        assert_eq!(b.at(1, 1), Complex64::ZERO);
    }

    #[test]
    fn annihilation_lowers_fock_states() {
        let b = Operator::annihilation(3).unwrap();
        let two = StateVector::basis(3, 2);
        let lowered = b.apply(&two).unwrap();
        let mut expect = StateVector::zero(3);
        expect.set(1, c(2.0f64.sqrt(), 0.0));
        for i in 0..3 {
            assert_eq!(lowered.at(i), expect.at(i));
        }
    }

    #[test]
    fn annihilation_rejects_dim_below_two() {
        assert!(Operator::annihilation(1).is_err());
    }

    #[test]
    fn ccr_has_corner_defect() {
        // Truncation artifact: [b, b^dag] = 1 except the bottom-right entry,
        // which is -(dim-1). Diagonal entries are sums of fl(sqrt(m)^2), so
        // equality holds to one ulp, and off-diagonals are exactly zero.
        for dim in [8usize, 16] {
            let b = Operator::annihilation(dim).unwrap();
            let comm = commutator(&b, &b.adjoint()).unwrap();
            for i in 0..dim {
                for j in 0..dim {
                    let expect = if i == j {
                        if i == dim - 1 {
                            c(-((dim - 1) as f64), 0.0)
                        } else {
                            c(1.0, 0.0)
                        }
                    } else {
                        Complex64::ZERO
                    };
                    if i == j {
                        assert!(
                            (comm.at(i, j) - expect).norm() <= 1e-12 * (dim as f64),
                            "entry ({i},{j}) at dim {dim}: {}",
                            comm.at(i, j)
                        );
                    } else {
                        assert_eq!(comm.at(i, j), expect, "entry ({i},{j}) at dim {dim}");
                    }
                }
            }
        }
    }

    #[test]
    fn commutator_with_self_vanishes() {
        let b = Operator::annihilation(5).unwrap();
        let comm = commutator(&b, &b).unwrap();
        assert_eq!(comm.frobenius_norm(), 0.0);
    }

    #[test]
    fn commutator_rejects_dim_mismatch() {
        let a = Operator::identity(3);
        let b = Operator::identity(4);
        assert!(commutator(&a, &b).is_err());
    }

    #[test]
    fn trace_of_identity() {
        assert_eq!(Operator::identity(5).trace(), c(5.0, 0.0));
    }

    #[test]
    fn exp_of_zero_is_identity() {
        let z = Operator::zeros(4);
        let e = matrix_exponential(&z, Complex64::ONE).unwrap();
        assert!((&e - &Operator::identity(4)).frobenius_norm() < 1e-15);
    }

    #[test]
    fn exp_of_diagonal() {
        let omega = 1.7;
        let a = Operator::from_fn(2, |i, j| {
            if i == 1 && j == 1 {
                c(0.0, -omega)
            } else {
                Complex64::ZERO
            }
        });
        let t = 0.93;
        let e = matrix_exponential(&a, c(t, 0.0)).unwrap();
        assert!((e.at(0, 0) - c(1.0, 0.0)).norm() < 1e-14);
        assert!((e.at(1, 1) - Complex64::from_polar(1.0, -omega * t)).norm() < 1e-14);
        assert!(e.at(0, 1).norm() < 1e-15 && e.at(1, 0).norm() < 1e-15);
    }

    #[test]
    fn exp_of_sigma_x_closed_form() {
        // exp(i theta sigma_x) = cos(theta) 1 + i sin(theta) sigma_x;
        // theta = pi/2 gives i sigma_x.
        let sx = Operator::from_fn(2, |i, j| if i != j { c(1.0, 0.0) } else { Complex64::ZERO });
        let e = matrix_exponential(&sx, c(0.0, std::f64::consts::FRAC_PI_2)).unwrap();
        let expect = sx.scaled(c(0.0, 1.0));
        assert!((&e - &expect).frobenius_norm() < 1e-13);
    }

    #[test]
    fn exp_of_anti_hermitian_is_unitary() {
        // -i tau H with H Hermitian; unitarity defect below 1e-10.
        let dim = 6;
        let h = Operator::from_fn(dim, |i, j| {
            let v = c(
                ((i * 7 + j * 3) % 5) as f64 - 2.0,
                if i == j { 0.0 } else { ((i * 3 + j) % 3) as f64 - 1.0 },
            );
            if i <= j {
                v
            } else {
                Complex64::ZERO
            }
        });
        let h = &h + &h.adjoint(); // Hermitian by construction
        let u = matrix_exponential(&h, c(0.0, -0.37)).unwrap();
        let udu = u.adjoint().mul(&u).unwrap();
        assert!((&udu - &Operator::identity(dim)).frobenius_norm() < 1e-10);
    }

    #[test]
    fn exp_overflow_is_explicit() {
        let a = Operator::from_fn(2, |i, j| if i == j { c(1.0, 0.0) } else { Complex64::ZERO });
        let err = matrix_exponential(&a, c(1e300, 0.0));
        assert!(matches!(err, Err(Error::Overflow(_))));
    }

    #[test]
    fn hermitian_eigenvalues_of_known_matrices() {
        let sz = Operator::from_fn(2, |i, j| {
            if i == j {
                c(if i == 0 { 1.0 } else { -1.0 }, 0.0)
            } else {
                Complex64::ZERO
            }
        });
        let eig = sz.hermitian_eigenvalues().unwrap();
        assert!((eig[0] + 1.0).abs() < 1e-14 && (eig[1] - 1.0).abs() < 1e-14);

        // sigma_y has eigenvalues +-1 and complex entries.
        let sy = Operator::from_fn(2, |i, j| match (i, j) {
            (0, 1) => c(0.0, -1.0),
            (1, 0) => c(0.0, 1.0),
            _ => Complex64::ZERO,
        });
        let eig = sy.hermitian_eigenvalues().unwrap();
        assert!((eig[0] + 1.0).abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn density_operator_validation() {
        let psi = StateVector::from_vec(vec![c(0.6, 0.0), c(0.0, 0.8)]).normalized();
        let rho = DensityOperator::pure(&psi);
        rho.validate(1.0, 1e-10).unwrap();

        // Wrong declared trace.
        assert!(rho.validate(0.5, 1e-10).is_err());

        // Non-Hermitian entries.
        let mut bad = rho.clone();
        bad.im[1] += 1e-3;
        assert!(bad.validate(1.0, 1e-6).is_err());
    }

    #[test]
    fn trace_norm_of_projector_difference() {
        let e0 = StateVector::basis(2, 0);
        let e1 = StateVector::basis(2, 1);
        let d = &Operator::outer(&e0, &e0) - &Operator::outer(&e1, &e1);
        assert!((d.trace_norm().unwrap() - 2.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn adjoint_is_involution(seed in 0u64..500) {
            let dim = 2 + (seed % 5) as usize;
            let a = pseudorandom_operator(dim, seed);
            let back = a.adjoint().adjoint();
            prop_assert!((&a - &back).frobenius_norm() == 0.0);
        }

        #[test]
        fn trace_is_cyclic(seed in 0u64..500) {
            let dim = 2 + (seed % 4) as usize;
            let a = pseudorandom_operator(dim, seed);
            let b = pseudorandom_operator(dim, seed.wrapping_add(9001));
            let tab = a.mul(&b).unwrap().trace();
            let tba = b.mul(&a).unwrap().trace();
            prop_assert!((tab - tba).norm() < 1e-12 * (1.0 + tab.norm()));
        }

        #[test]
        fn eigenvalue_sum_matches_trace(seed in 0u64..200) {
            let dim = 2 + (seed % 5) as usize;
            let a = pseudorandom_operator(dim, seed);
            let h = &a + &a.adjoint();
            let eig = h.hermitian_eigenvalues().unwrap();
            let sum: f64 = eig.iter().sum();
            prop_assert!((sum - h.trace().re).abs() < 1e-10 * (1.0 + sum.abs()));
        }
    }

    fn pseudorandom_operator(dim: usize, seed: u64) -> Operator {
        // Cheap deterministic pseudo-random entries; good enough for algebra laws.
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        Operator::from_fn(dim, |_, _| Complex64::new(next(), next()))
    }
}
