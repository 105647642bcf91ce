//! Declarative run configuration: a single JSON file describing the
//! system, the input field state, the discretizations and the run.

use serde::{Deserialize, Serialize};
use sqpulse::pulse::Profile;
use sqpulse::squeezed::SqueezeParams;
use sqpulse::system::System;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub input: InputConfig,
    #[serde(default)]
    pub numerics: Numerics,
    pub run: RunSection,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    TwoLevel { delta: f64, gamma: f64 },
    Cavity { delta: f64, gamma: f64, dim: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Photon number of the pre-squeeze Fock state.
    pub n: usize,
    /// Squeeze magnitude.
    #[serde(default)]
    pub r: f64,
    /// Squeeze phase (radians).
    #[serde(default)]
    pub phi: f64,
    pub profile: Profile,
    pub t_start: f64,
    pub t_end: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Collision-model bins over [t_start, t_end].
    pub bins: usize,
    /// Continuous-route time step.
    pub dt: f64,
    /// Hierarchy truncation; defaults to n + 10.
    pub n_cut: Option<usize>,
    /// Coefficient-table truncation request.
    pub m_cut: usize,
    pub ancilla_dim: usize,
    pub coeff_deficit: f64,
    /// Maximum count number for the analytic route.
    pub s_max: usize,
    /// Gauss-Legendre points per simplex dimension (one entry per s).
    pub quad_points: Vec<usize>,
    /// RK4 step of the analytic family propagation.
    pub ode_dt: f64,
    /// Truncation-influence alarm threshold.
    pub stress_limit: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            bins: 800,
            dt: 0.002,
            n_cut: None,
            m_cut: 24,
            ancilla_dim: 3,
            coeff_deficit: 1e-10,
            s_max: 3,
            quad_points: vec![32, 32, 16],
            ode_dt: 0.005,
            stress_limit: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Collision,
    Sme,
    Master,
    Analytic,
    Transfer,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub route: Route,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    /// Mandatory for the stochastic routes.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
    /// Transfer-scan detunings (transfer route only).
    #[serde(default)]
    pub scan_deltas: Vec<f64>,
}

fn default_trajectories() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub prefix: Option<String>,
}

impl RunConfig {
    /// Field-path-precise validation.
    pub fn validate(&self) -> Result<(), String> {
        match self.system {
            SystemConfig::TwoLevel { gamma, .. } => {
                if gamma < 0.0 {
                    return Err(format!("system.gamma: must be >= 0, got {gamma}"));
                }
            }
            SystemConfig::Cavity { gamma, dim, .. } => {
                if gamma <= 0.0 {
                    return Err(format!("system.gamma: must be > 0, got {gamma}"));
                }
                if dim < 2 {
                    return Err(format!("system.dim: must be >= 2, got {dim}"));
                }
            }
        }
        if self.input.r < 0.0 {
            return Err(format!("input.r: must be >= 0, got {}", self.input.r));
        }
        if !(self.input.t_end > self.input.t_start) {
            return Err(format!(
                "input.t_end: must exceed input.t_start, got [{}, {}]",
                self.input.t_start, self.input.t_end
            ));
        }
        match self.input.profile {
            Profile::Gaussian { sigma, .. } if sigma <= 0.0 => {
                return Err(format!("input.profile.sigma: must be > 0, got {sigma}"));
            }
            Profile::ExpDecay { rate, .. } | Profile::ExpRise { rate, .. } if rate <= 0.0 => {
                return Err(format!("input.profile.rate: must be > 0, got {rate}"));
            }
            Profile::Flat { start, end } if !(end > start) => {
                return Err(format!(
                    "input.profile: flat window must have end > start, got [{start}, {end}]"
                ));
            }
            _ => {}
        }
        if self.numerics.bins < 2 {
            return Err(format!("numerics.bins: must be >= 2, got {}", self.numerics.bins));
        }
        if self.numerics.dt <= 0.0 {
            return Err(format!("numerics.dt: must be > 0, got {}", self.numerics.dt));
        }
        if self.numerics.ancilla_dim < 2 {
            return Err(format!(
                "numerics.ancilla_dim: must be >= 2, got {}",
                self.numerics.ancilla_dim
            ));
        }
        if self.numerics.ode_dt <= 0.0 {
            return Err(format!("numerics.ode_dt: must be > 0, got {}", self.numerics.ode_dt));
        }
        if self.numerics.quad_points.len() < self.numerics.s_max {
            return Err(format!(
                "numerics.quad_points: need one entry per count number up to s_max = {}",
                self.numerics.s_max
            ));
        }
        if let Some((i, &p)) = self
            .numerics
            .quad_points
            .iter()
            .enumerate()
            .find(|(_, &p)| p < 2)
        {
            return Err(format!("numerics.quad_points[{i}]: order {p} below 2"));
        }
        if matches!(self.run.route, Route::Collision | Route::Sme) && self.run.seed.is_none() {
            return Err("run.seed: mandatory for stochastic routes".into());
        }
        if self.run.trajectories == 0 {
            return Err("run.trajectories: must be >= 1".into());
        }
        for (i, &t) in self.run.checkpoints.iter().enumerate() {
            if t < self.input.t_start || t > self.input.t_end + 1e-9 {
                return Err(format!(
                    "run.checkpoints[{i}]: {t} outside the horizon [{}, {}]",
                    self.input.t_start, self.input.t_end
                ));
            }
        }
        if self.run.checkpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err("run.checkpoints: must be strictly increasing".into());
        }
        Ok(())
    }

    pub fn build_system(&self) -> sqpulse::Result<System> {
        match self.system {
            SystemConfig::TwoLevel { delta, gamma } => System::two_level(delta, gamma),
            SystemConfig::Cavity { delta, gamma, dim } => System::cavity(delta, gamma, dim),
        }
    }

    pub fn squeeze_params(&self) -> sqpulse::Result<SqueezeParams> {
        SqueezeParams::new(self.input.r, self.input.phi)
    }

    pub fn n_cut(&self) -> usize {
        self.numerics.n_cut.unwrap_or(self.input.n + 10)
    }

    /// FNV-1a hash of the canonical serialized form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let mut h: u64 = 0xcbf29ce484222325;
        for b in json.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
