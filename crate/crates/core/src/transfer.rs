//! Photon transfer from the wave packet into a cavity: closed-form
//! transfer probabilities, the optimal rising-exponential profile, and
//! parameter scans.
//!
//! For a cavity (`H = Delta a^dag a`, `L = sqrt(Gamma) a`) starting in the
//! vacuum, the probability that all `n` pulse photons sit inside the
//! cavity at time `t` is
//! `P = Gamma^n e^{-n Gamma t} |I(t)|^{2n}` with the single overlap
//! integral `I = int_{t0}^{t} xi_s e^{(i Delta + Gamma/2) s} ds`; for a
//! squeezed input the probability is the coefficient-weighted series over
//! the same integral. Both are maximized at resonance by the rising
//! exponential `xi ~ e^{Gamma s / 2}`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pulse::Profile;
use crate::quad::integrate_complex;
use crate::squeezed::CoefficientTable;

/// Cavity coupled to the wave packet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityModel {
    /// Detuning `omega_0 - omega_c` between cavity and pulse carrier.
    pub delta: f64,
    /// Coupling rate (> 0).
    pub gamma: f64,
    /// Cavity Fock truncation (>= expected excitation + margin).
    pub dim: usize,
    /// Photon number of the (pre-squeeze) input state.
    pub n: usize,
}

impl CavityModel {
    pub fn new(delta: f64, gamma: f64, dim: usize, n: usize) -> Result<Self> {
        if gamma <= 0.0 {
            return Err(Error::Invalid(format!("cavity coupling must be > 0, got {gamma}")));
        }
        if dim < n + 1 {
            return Err(Error::Invalid(format!(
                "cavity truncation {dim} below input photon number {n}"
            )));
        }
        Ok(CavityModel { delta, gamma, dim, n })
    }
}

/// Overlap integral `int_{t0}^{t} xi_s e^{(i Delta + Gamma/2) s} ds` for an
/// arbitrary (complex) envelope, by doubling composite quadrature.
pub fn overlap_integral_with(
    xi: impl Fn(f64) -> Complex64,
    delta: f64,
    gamma: f64,
    t0: f64,
    t: f64,
) -> Complex64 {
    integrate_complex(
        |s| xi(s) * (Complex64::new(gamma / 2.0, delta) * s).exp(),
        t0,
        t,
        1e-12,
    )
}

pub fn overlap_integral(profile: &Profile, delta: f64, gamma: f64, t0: f64, t: f64) -> Complex64 {
    overlap_integral_with(
        |s| Complex64::new(profile.value(s), 0.0),
        delta,
        gamma,
        t0,
        t,
    )
}

/// Transfer probability for an arbitrary envelope function.
pub fn p_transfer_fock_with(
    model: &CavityModel,
    xi: impl Fn(f64) -> Complex64,
    t0: f64,
    t: f64,
) -> f64 {
    let overlap = overlap_integral_with(xi, model.delta, model.gamma, t0, t);
    let n = model.n as i32;
    (model.gamma * (-model.gamma * t).exp() * overlap.norm_sqr()).powi(n)
}

/// `P_{n}(t) = Gamma^n e^{-n Gamma t} |int xi e^{(i Delta + Gamma/2)s}|^{2n}`
/// for a photon-number input on `[t0, t]`.
pub fn p_transfer_fock(model: &CavityModel, profile: &Profile, t0: f64, t: f64) -> f64 {
    p_transfer_fock_with(model, |s| Complex64::new(profile.value(s), 0.0), t0, t)
}

/// The transfer-optimal profile: `xi ~ e^{Gamma s/2}` on `[t0, t]`.
pub fn optimal_profile(gamma: f64, t0: f64, t: f64) -> Result<Profile> {
    if !(t > t0) {
        return Err(Error::Invalid(format!("optimal profile needs t > t0, got [{t0}, {t}]")));
    }
    Ok(Profile::ExpRise {
        rate: gamma,
        start: t0,
        end: t,
    })
}

/// Maximum transfer probability for the photon-number input, attained at
/// resonance by the optimal profile: `(1 - e^{-Gamma (t - t0)})^n`.
pub fn p_transfer_max_fock(n: usize, gamma: f64, t0: f64, t: f64) -> f64 {
    (1.0 - (-gamma * (t - t0)).exp()).powi(n as i32)
}

/// Transfer series for a squeezed input:
/// `P = sum_k Gamma^k e^{-k Gamma t} |I|^{2k} |a_k(n_gamma)|^2`,
/// summed to the coefficient truncation.
pub fn p_transfer_squeezed(
    model: &CavityModel,
    profile: &Profile,
    t0: f64,
    t: f64,
    table: &CoefficientTable,
) -> f64 {
    let overlap = overlap_integral(profile, model.delta, model.gamma, t0, t);
    let base = model.gamma * (-model.gamma * t).exp() * overlap.norm_sqr();
    let mut p = 0.0;
    let mut base_pow = 1.0;
    for k in 0..=table.m_cut() {
        p += base_pow * table.coeff(k).norm_sqr();
        base_pow *= base;
    }
    p
}

/// Maximum squeezed transfer probability:
/// `sum_k (1 - e^{-Gamma (t - t0)})^k |a_k|^2`.
pub fn p_transfer_max_squeezed(table: &CoefficientTable, gamma: f64, t0: f64, t: f64) -> f64 {
    let base = 1.0 - (-gamma * (t - t0)).exp();
    let mut p = 0.0;
    let mut base_pow = 1.0;
    for k in 0..=table.m_cut() {
        p += base_pow * table.coeff(k).norm_sqr();
        base_pow *= base;
    }
    p
}

/// One row of a transfer parameter scan.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScanRow {
    pub delta: f64,
    pub rise_rate: f64,
    pub t: f64,
    pub p: f64,
    pub p_max: f64,
    pub gap: f64,
}

/// Scans detuning over the optimal envelope; the maximum sits at
/// resonance.
pub fn detuning_scan(
    model: &CavityModel,
    deltas: &[f64],
    t0: f64,
    t: f64,
    table: Option<&CoefficientTable>,
) -> Result<Vec<ScanRow>> {
    let profile = optimal_profile(model.gamma, t0, t)?;
    let p_max = match table {
        Some(tab) => p_transfer_max_squeezed(tab, model.gamma, t0, t),
        None => p_transfer_max_fock(model.n, model.gamma, t0, t),
    };
    Ok(deltas
        .iter()
        .map(|&delta| {
            let m = CavityModel { delta, ..*model };
            let p = match table {
                Some(tab) => p_transfer_squeezed(&m, &profile, t0, t, tab),
                None => p_transfer_fock(&m, &profile, t0, t),
            };
            ScanRow {
                delta,
                rise_rate: model.gamma,
                t,
                p,
                p_max,
                gap: p_max - p,
            }
        })
        .collect())
}

/// Scans the rise rate of exponential envelopes `xi ~ e^{kappa s/2}` at
/// resonance; the maximum sits at `kappa = Gamma`.
pub fn rise_rate_scan(
    model: &CavityModel,
    rates: &[f64],
    t0: f64,
    t: f64,
) -> Result<Vec<ScanRow>> {
    let p_max = p_transfer_max_fock(model.n, model.gamma, t0, t);
    rates
        .iter()
        .map(|&rate| {
            if rate <= 0.0 {
                return Err(Error::Invalid(format!("rise rate must be > 0, got {rate}")));
            }
            let profile = Profile::ExpRise {
                rate,
                start: t0,
                end: t,
            };
            let m = CavityModel { delta: 0.0, ..*model };
            let p = p_transfer_fock(&m, &profile, t0, t);
            Ok(ScanRow {
                delta: 0.0,
                rise_rate: rate,
                t,
                p,
                p_max,
                gap: p_max - p,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{gauss_legendre_on, ordered_simplex_nodes};
    use crate::squeezed::{squeeze_coefficients, SqueezeParams};
    use crate::system::System;
    use crate::trajectories::AnalyticModel;
    use crate::hilbert::StateVector;

    #[test]
    fn no_pulse_means_no_transfer() {
        let model = CavityModel::new(0.0, 1.0, 4, 1).unwrap();
        let profile = Profile::Flat { start: 20.0, end: 21.0 };
        assert_eq!(p_transfer_fock(&model, &profile, 0.0, 2.0), 0.0);
    }

    #[test]
    fn optimal_profile_reaches_the_closed_form() {
        for n in 1..=3usize {
            let gamma = 1.3;
            let (t0, t) = (0.0, 2.0);
            let model = CavityModel::new(0.0, gamma, n + 2, n).unwrap();
            let profile = optimal_profile(gamma, t0, t).unwrap();
            let p = p_transfer_fock(&model, &profile, t0, t);
            let p_max = p_transfer_max_fock(n, gamma, t0, t);
            assert!((p - p_max).abs() < 1e-8, "n = {n}: {p} vs {p_max}");
        }
    }

    #[test]
    fn half_transfer_at_ln_two() {
        // n = 1, Gamma = 1, t0 = 0, t = ln 2, optimal profile: P = 1/2.
        let model = CavityModel::new(0.0, 1.0, 3, 1).unwrap();
        let t = 2.0f64.ln();
        let profile = optimal_profile(1.0, 0.0, t).unwrap();
        let p = p_transfer_fock(&model, &profile, 0.0, t);
        assert!((p - 0.5).abs() < 1e-9, "P = {p}");
    }

    #[test]
    fn long_rise_approaches_perfect_transfer() {
        let gamma = 1.0;
        let model = CavityModel::new(0.0, gamma, 4, 2).unwrap();
        let mut last = 0.0;
        for window in [1.0, 2.0, 4.0, 8.0, 12.0] {
            let profile = optimal_profile(gamma, -window, 0.0).unwrap();
            let p = p_transfer_fock(&model, &profile, -window, 0.0);
            assert!(p > last, "monotone approach");
            last = p;
        }
        assert!(last > 1.0 - 1e-4, "P = {last} for the longest rise");
    }

    #[test]
    fn detuning_strictly_reduces_transfer() {
        let gamma = 1.0;
        let (t0, t) = (0.0, 2.5);
        let profile = optimal_profile(gamma, t0, t).unwrap();
        let resonant = CavityModel::new(0.0, gamma, 3, 1).unwrap();
        let p_res = p_transfer_fock(&resonant, &profile, t0, t);
        for delta in [0.3, 1.0, -0.5] {
            let detuned = CavityModel::new(delta, gamma, 3, 1).unwrap();
            let p = p_transfer_fock(&detuned, &profile, t0, t);
            assert!(p < p_res - 1e-4, "delta = {delta}: {p} vs {p_res}");
        }
    }

    #[test]
    fn orthogonal_perturbations_decrease_transfer() {
        // First-order stationarity of the optimal profile: any normalized
        // perturbed profile transfers strictly less.
        let gamma = 1.0;
        let (t0, t) = (0.0, 2.0);
        let model = CavityModel::new(0.0, gamma, 3, 1).unwrap();
        let best = optimal_profile(gamma, t0, t).unwrap();
        let p_opt = p_transfer_fock(&model, &best, t0, t);

        let (xs, ws) = gauss_legendre_on(64, t0, t);
        let inner = |f: &dyn Fn(f64) -> f64, g: &dyn Fn(f64) -> f64| -> f64 {
            xs.iter().zip(&ws).map(|(x, w)| f(*x) * g(*x) * w).sum()
        };
        for (i, freq) in [1.0, 2.0, 3.5, 5.0, 7.0].iter().enumerate() {
            let raw = move |s: f64| (freq * s).sin() + 0.2 * (i as f64) * (2.0 * freq * s).cos();
            // Orthogonalize against the optimal profile, then normalize the
            // perturbed envelope.
            let overlap = inner(&raw, &|s| best.value(s));
            let ortho = move |s: f64| raw(s) - overlap * best.value(s);
            let ortho_norm = inner(&ortho, &ortho).sqrt();
            for eps in [0.05, 0.2] {
                let perturbed = move |s: f64| best.value(s) + eps * ortho(s) / ortho_norm;
                let norm = inner(&perturbed, &perturbed).sqrt();
                let p = p_transfer_fock_with(
                    &model,
                    |s| Complex64::new(perturbed(s) / norm, 0.0),
                    t0,
                    t,
                );
                assert!(
                    p < p_opt + 1e-12,
                    "perturbation {i} eps {eps}: {p} vs {p_opt}"
                );
                // Quadratic, not linear, decrease near the optimum.
                if eps == 0.05 {
                    assert!(p_opt - p < 0.1 * eps, "decrease too steep at eps {eps}");
                }
            }
        }
    }

    #[test]
    fn squeezed_series_reduces_to_fock_at_zero_squeezing() {
        let model = CavityModel::new(0.4, 1.0, 5, 2).unwrap();
        let profile = Profile::Gaussian { center: 1.0, sigma: 0.4 };
        let table = squeeze_coefficients(2, &SqueezeParams::new(0.0, 0.0).unwrap(), 2).unwrap();
        let p_series = p_transfer_squeezed(&model, &profile, 0.0, 2.0, &table);
        let p_fock = p_transfer_fock(&model, &profile, 0.0, 2.0);
        assert!((p_series - p_fock).abs() < 1e-14);
    }

    #[test]
    fn squeezed_vacuum_long_window_transfers_everything() {
        let gamma = 1.0;
        let (t0, t) = (-14.0, 0.0);
        let params = SqueezeParams::new(0.5, 0.0).unwrap();
        let table = squeeze_coefficients(0, &params, 24).unwrap();
        let model = CavityModel::new(0.0, gamma, table.m_cut() + 2, 0).unwrap();
        let profile = optimal_profile(gamma, t0, t).unwrap();
        let p = p_transfer_squeezed(&model, &profile, t0, t, &table);
        assert!(
            (p - 1.0).abs() < 1e-5 + table.deficit(),
            "P = {p}, deficit {}",
            table.deficit()
        );
    }

    #[test]
    fn transfer_probability_never_exceeds_maximum() {
        let gamma = 1.0;
        let (t0, t) = (0.0, 2.0);
        let profiles = [
            Profile::Gaussian { center: 1.0, sigma: 0.3 },
            Profile::Flat { start: 0.0, end: 2.0 },
            Profile::ExpDecay { rate: 1.5, start: 0.2 },
            Profile::ExpRise { rate: 0.7, start: 0.0, end: 2.0 },
        ];
        for n in 1..=2usize {
            let model = CavityModel::new(0.0, gamma, n + 2, n).unwrap();
            let p_max = p_transfer_max_fock(n, gamma, t0, t);
            for profile in &profiles {
                for tt in [0.7, 1.4, 2.0] {
                    let p = p_transfer_fock(&model, profile, t0, tt);
                    let cap = p_transfer_max_fock(n, gamma, t0, tt);
                    assert!(p <= cap + 1e-9, "{profile:?} at t = {tt}: {p} vs {cap}");
                    assert!(p <= p_max + 1e-9);
                }
            }
        }
    }

    #[test]
    fn nested_integral_identity() {
        // The ordered n-fold integral of the symmetric product equals
        // I^n / n!; the single-integral transfer formula relies on it.
        let gamma = 1.1;
        let delta = 0.4;
        let profile = Profile::Gaussian { center: 1.0, sigma: 0.35 };
        let (t0, t) = (0.0, 2.0);
        let single = overlap_integral(&profile, delta, gamma, t0, t);
        for n in 1..=3usize {
            let nodes = ordered_simplex_nodes(t, &vec![24; n]);
            let mut nested = Complex64::ZERO;
            for (times, w) in &nodes {
                let mut prod = Complex64::new(*w, 0.0);
                for &s in times {
                    prod *= Complex64::new(profile.value(s), 0.0)
                        * (Complex64::new(gamma / 2.0, delta) * s).exp();
                }
                nested += prod;
            }
            let factorial: f64 = (1..=n).product::<usize>() as f64;
            let expect = single.powu(n as u32) / factorial;
            assert!(
                (nested - expect).norm() < 1e-8 * expect.norm(),
                "n = {n}: {nested} vs {expect}"
            );
        }
    }

    #[test]
    fn transfer_matches_no_count_vector_norm() {
        // Independent route: P = ||psi_{t|0}(0)||^2 from the conditional
        // family on the cavity system.
        let gamma = 1.0;
        let (t0, t) = (0.0, 2.0);

        // Photon-number input, n = 1.
        let cavity = CavityModel::new(0.0, gamma, 4, 1).unwrap();
        let profile = optimal_profile(gamma, t0, t).unwrap();
        let table = squeeze_coefficients(1, &SqueezeParams::new(0.0, 0.0).unwrap(), 1).unwrap();
        let mut analytic = AnalyticModel::new(
            System::cavity(0.0, gamma, 4).unwrap(),
            profile,
            table,
        );
        analytic.ode_dt = 0.001;
        let family = analytic.no_count_vectors(&StateVector::basis(4, 0), t);
        let p_route = family[0].norm_sq();
        let p_closed = p_transfer_fock(&cavity, &profile, t0, t);
        assert!(
            (p_route - p_closed).abs() < 1e-6,
            "{p_route} vs {p_closed}"
        );

        // Squeezed input, n = 1, r = 0.3.
        let params = SqueezeParams::new(0.3, 0.0).unwrap();
        let table = squeeze_coefficients(1, &params, 18).unwrap();
        let dim = table.m_cut() + 2;
        let cavity = CavityModel::new(0.0, gamma, dim, 1).unwrap();
        let mut analytic = AnalyticModel::new(
            System::cavity(0.0, gamma, dim).unwrap(),
            profile,
            table.clone(),
        );
        analytic.ode_dt = 0.001;
        let family = analytic.no_count_vectors(&StateVector::basis(dim, 0), t);
        let p_route = family[0].norm_sq();
        let p_series = p_transfer_squeezed(&cavity, &profile, t0, t, &table);
        assert!(
            (p_route - p_series).abs() < 1e-5,
            "{p_route} vs {p_series}"
        );
    }

    #[test]
    fn detuning_scan_peaks_at_resonance() {
        let model = CavityModel::new(0.0, 1.0, 3, 1).unwrap();
        let deltas: Vec<f64> = (-8..=8).map(|k| k as f64 * 0.25).collect();
        let rows = detuning_scan(&model, &deltas, 0.0, 2.0, None).unwrap();
        let best = rows
            .iter()
            .max_by(|a, b| a.p.partial_cmp(&b.p).unwrap())
            .unwrap();
        assert_eq!(best.delta, 0.0);
        assert!(best.gap.abs() < 1e-9);
    }

    #[test]
    fn rise_rate_scan_peaks_at_gamma() {
        // Grid argmax plus a golden-section refinement as the oracle.
        let gamma = 1.0;
        let model = CavityModel::new(0.0, gamma, 3, 1).unwrap();
        let rates: Vec<f64> = (1..=30).map(|k| k as f64 * 0.1).collect();
        let rows = rise_rate_scan(&model, &rates, 0.0, 3.0).unwrap();
        let best = rows
            .iter()
            .max_by(|a, b| a.p.partial_cmp(&b.p).unwrap())
            .unwrap();
        assert!((best.rise_rate - gamma).abs() < 0.11, "grid argmax {}", best.rise_rate);

        let p_of = |rate: f64| {
            let profile = Profile::ExpRise { rate, start: 0.0, end: 3.0 };
            p_transfer_fock(&model, &profile, 0.0, 3.0)
        };
        let (mut lo, mut hi) = (0.2, 3.0);
        let phi = (5.0f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let a = hi - phi * (hi - lo);
            let b = lo + phi * (hi - lo);
            if p_of(a) < p_of(b) {
                lo = a;
            } else {
                hi = b;
            }
        }
        let argmax = 0.5 * (lo + hi);
        assert!((argmax - gamma).abs() < 1e-4, "golden-section argmax {argmax}");
    }

    #[test]
    fn degenerate_scan_has_single_row() {
        let model = CavityModel::new(0.0, 1.0, 3, 1).unwrap();
        let rows = detuning_scan(&model, &[0.0], 0.0, 1.0, None).unwrap();
        assert_eq!(rows.len(), 1);
    }
}
