//! Symmetric Gaussian coalition models.
//!
//! Each agent has a hidden state with a standard normal prior observed under
//! Gaussian noise of precision `β`. The coalition value of any `k` agents is
//!
//! ```text
//! <v>_k = -k/2 ln(2π) + 1/2 ln(1 + kβ) - 1/2 - α β² k / N
//! ```
//!
//! where the last term penalises over-precise private inference. Symmetric
//! agents share the Shapley value `η = (<v>_N - <v>_0) / N`, which rises and
//! then falls in `β` whenever `α > 0`.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lattice::ValueTable;
use crate::math::{ln, ln_1p, sqrt};
use crate::rng::keyed_rng;

/// Seed used by every preset unless overridden.
pub const DEFAULT_SEED: u64 = 42;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianCoalitionModel {
    n_agents: usize,
    alpha_penalty: f64,
    beta: f64,
}

impl GaussianCoalitionModel {
    pub fn new(n_agents: usize, alpha_penalty: f64, beta: f64) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::NoAgents);
        }
        if !(alpha_penalty >= 0.0) || !alpha_penalty.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha_penalty",
                reason: "must be finite and nonnegative",
            });
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be positive and finite",
            });
        }
        Ok(Self {
            n_agents,
            alpha_penalty,
            beta,
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn alpha_penalty(&self) -> f64 {
        self.alpha_penalty
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `<v>_k` for `0 <= k <= N`.
    pub fn coalition_value(&self, k: usize) -> Result<f64> {
        if k > self.n_agents {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "coalition size exceeds the number of agents",
            });
        }
        let k = k as f64;
        let n = self.n_agents as f64;
        Ok(-0.5 * k * LN_2PI + 0.5 * ln_1p(k * self.beta)
            - 0.5
            - self.alpha_penalty * self.beta * self.beta * k / n)
    }

    fn value_unchecked(&self, k: usize) -> f64 {
        self.coalition_value(k).expect("size in range")
    }

    /// Symmetric Shapley value, telescoped: `(<v>_N - <v>_0) / N`.
    pub fn symmetric_shapley(&self) -> f64 {
        (self.value_unchecked(self.n_agents) - self.value_unchecked(0)) / self.n_agents as f64
    }

    /// Symmetric Shapley value as the explicit average of marginal gains
    /// `<v>_{k+1} - <v>_k`.
    pub fn symmetric_shapley_sum(&self) -> f64 {
        let total: f64 = (0..self.n_agents)
            .map(|k| self.value_unchecked(k + 1) - self.value_unchecked(k))
            .sum();
        total / self.n_agents as f64
    }

    /// Full lattice game `v(S) = <v>_{|S|} - <v>_0`, shifted so `v(∅) = 0`.
    pub fn to_value_table(&self) -> Result<ValueTable> {
        let base = self.value_unchecked(0);
        ValueTable::from_sizes(self.n_agents, |k| self.value_unchecked(k) - base)
    }
}

/// `<v>_k` for a model.
pub fn coalition_value(model: &GaussianCoalitionModel, k: usize) -> Result<f64> {
    model.coalition_value(k)
}

/// Symmetric Shapley influence of a model.
pub fn symmetric_shapley(model: &GaussianCoalitionModel) -> f64 {
    model.symmetric_shapley()
}

/// Precision maximising `η(β)` for `N` agents and penalty `α`: the positive
/// root of `N = 4αβ(1 + Nβ)`.
pub fn analytic_peak(n_agents: usize, alpha_penalty: f64) -> Result<f64> {
    if n_agents == 0 {
        return Err(Error::NoAgents);
    }
    if alpha_penalty == 0.0 {
        return Err(Error::NoFinitePeak);
    }
    if !(alpha_penalty > 0.0) || !alpha_penalty.is_finite() {
        return Err(Error::InvalidParameter {
            name: "alpha_penalty",
            reason: "must be positive and finite",
        });
    }
    let n = n_agents as f64;
    let a = alpha_penalty;
    // (-a + sqrt(a² + a N²)) / (2aN), rationalised to avoid cancellation.
    Ok(n / (2.0 * (sqrt(a * a + a * n * n) + a)))
}

/// Application domain of a preset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Domain {
    Neural,
    /// Neural ensemble on the wider 40-step grid up to `β = 5`.
    NeuralS4,
    Fish,
    Marl,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Neural, Domain::NeuralS4, Domain::Fish, Domain::Marl];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Neural => "neural",
            Domain::NeuralS4 => "neural_s4",
            Domain::Fish => "fish",
            Domain::Marl => "marl",
        }
    }

    /// Peak precision reported for the domain's experiment.
    pub fn reported_beta_star(self) -> f64 {
        match self {
            Domain::Neural | Domain::NeuralS4 => 0.71,
            Domain::Fish => 2.70,
            Domain::Marl => 2.59,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Domain::Neural => 1,
            Domain::NeuralS4 => 2,
            Domain::Fish => 3,
            Domain::Marl => 4,
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or(Error::InvalidParameter {
                name: "domain",
                reason: "expected one of neural, neural_s4, fish, marl",
            })
    }
}

/// Replicate noise added to the influence value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseModel {
    Constant {
        sigma: f64,
    },
    /// `σ(β) = scale (1 + slope β)`.
    Affine {
        scale: f64,
        slope: f64,
    },
}

impl NoiseModel {
    pub fn sigma(&self, beta: f64) -> f64 {
        match *self {
            NoiseModel::Constant { sigma } => sigma,
            NoiseModel::Affine { scale, slope } => scale * (1.0 + slope * beta),
        }
    }

    pub fn zero() -> Self {
        NoiseModel::Constant { sigma: 0.0 }
    }
}

/// Linearly spaced precision grid, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl BetaGrid {
    pub fn new(start: f64, stop: f64, steps: usize) -> Result<Self> {
        let grid = Self { start, stop, steps };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.start > 0.0) || !self.stop.is_finite() || !(self.start < self.stop) {
            return Err(Error::InvalidParameter {
                name: "beta_grid",
                reason: "need 0 < start < stop",
            });
        }
        if self.steps < 2 {
            return Err(Error::InvalidParameter {
                name: "beta_grid",
                reason: "need at least 2 steps",
            });
        }
        Ok(())
    }

    pub fn value(&self, index: usize) -> f64 {
        if index + 1 == self.steps {
            return self.stop;
        }
        let h = (self.stop - self.start) / (self.steps - 1) as f64;
        self.start + index as f64 * h
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps).map(|i| self.value(i)).collect()
    }
}

/// Everything needed to regenerate one domain's precision sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainPreset {
    pub domain: Domain,
    pub n_agents: usize,
    pub alpha_penalty: f64,
    pub beta_grid: BetaGrid,
    pub n_runs: usize,
    pub noise: NoiseModel,
    pub seed: u64,
}

impl DomainPreset {
    pub fn neural() -> Self {
        Self {
            domain: Domain::Neural,
            n_agents: 50,
            alpha_penalty: 0.025,
            beta_grid: BetaGrid {
                start: 0.25,
                stop: 2.0,
                steps: 35,
            },
            n_runs: 50,
            noise: NoiseModel::Constant { sigma: 0.001 },
            seed: DEFAULT_SEED,
        }
    }

    pub fn neural_s4() -> Self {
        Self {
            domain: Domain::NeuralS4,
            beta_grid: BetaGrid {
                start: 0.25,
                stop: 5.0,
                steps: 40,
            },
            ..Self::neural()
        }
    }

    pub fn fish() -> Self {
        Self {
            domain: Domain::Fish,
            n_agents: 30,
            alpha_penalty: 0.035,
            beta_grid: BetaGrid {
                start: 0.05,
                stop: 4.0,
                steps: 18,
            },
            n_runs: 80,
            noise: NoiseModel::Affine {
                scale: 0.008,
                slope: 0.5,
            },
            seed: DEFAULT_SEED,
        }
    }

    pub fn marl() -> Self {
        Self {
            domain: Domain::Marl,
            n_agents: 5,
            alpha_penalty: 0.0345,
            beta_grid: BetaGrid {
                start: 0.2,
                stop: 5.0,
                steps: 15,
            },
            n_runs: 100,
            noise: NoiseModel::Constant { sigma: 0.005 },
            seed: DEFAULT_SEED,
        }
    }

    pub fn for_domain(domain: Domain) -> Self {
        match domain {
            Domain::Neural => Self::neural(),
            Domain::NeuralS4 => Self::neural_s4(),
            Domain::Fish => Self::fish(),
            Domain::Marl => Self::marl(),
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::NoAgents);
        }
        if !(self.alpha_penalty >= 0.0) || !self.alpha_penalty.is_finite() {
            return Err(Error::InvalidParameter {
                name: "alpha_penalty",
                reason: "must be finite and nonnegative",
            });
        }
        self.beta_grid.validate()?;
        if self.n_runs == 0 {
            return Err(Error::InvalidParameter {
                name: "n_runs",
                reason: "must be at least 1",
            });
        }
        let sigmas = [
            self.noise.sigma(self.beta_grid.start),
            self.noise.sigma(self.beta_grid.stop),
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "noise",
                reason: "standard deviation must be finite and nonnegative on the grid",
            });
        }
        Ok(())
    }

    pub fn model(&self, beta: f64) -> Result<GaussianCoalitionModel> {
        GaussianCoalitionModel::new(self.n_agents, self.alpha_penalty, beta)
    }

    /// Analytic peak precision, `None` when the penalty is zero.
    pub fn analytic_peak(&self) -> Option<f64> {
        analytic_peak(self.n_agents, self.alpha_penalty).ok()
    }
}

/// One noisy replicate of the symmetric influence at one precision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceSample {
    pub beta: f64,
    pub beta_index: usize,
    pub run: usize,
    pub eta: f64,
}

/// Replicate `run` at grid point `beta_index`. The noise draw is keyed by
/// `(seed, domain, beta_index, run)` and independent of evaluation order.
pub fn influence_sample(
    preset: &DomainPreset,
    beta_index: usize,
    run: usize,
) -> Result<InfluenceSample> {
    let beta = preset.beta_grid.value(beta_index);
    let eta = preset.model(beta)?.symmetric_shapley();
    let sigma = preset.noise.sigma(beta);
    let noise = if sigma == 0.0 {
        0.0
    } else {
        let mut rng = keyed_rng(
            preset.seed,
            &[preset.domain.tag(), beta_index as u64, run as u64],
        );
        let z: f64 = StandardNormal.sample(&mut rng);
        sigma * z
    };
    Ok(InfluenceSample {
        beta,
        beta_index,
        run,
        eta: eta + noise,
    })
}

/// All replicates of a preset, ordered by precision index then run.
pub fn sample_influence(preset: &DomainPreset) -> Result<Vec<InfluenceSample>> {
    preset.validate()?;
    let mut out = Vec::with_capacity(preset.beta_grid.steps * preset.n_runs);
    for bi in 0..preset.beta_grid.steps {
        for run in 0..preset.n_runs {
            out.push(influence_sample(preset, bi, run)?);
        }
    }
    Ok(out)
}

/// Natural log of `2π`, exposed for tests and reports.
pub fn ln_two_pi() -> f64 {
    ln(2.0 * core::f64::consts::PI)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_two_pi_constant() {
        assert!((LN_2PI - ln_two_pi()).abs() < 1e-15);
    }

    #[test]
    fn empty_coalition_value() {
        let m = GaussianCoalitionModel::new(7, 0.3, 2.0).unwrap();
        assert_eq!(m.coalition_value(0).unwrap(), -0.5);
        assert!(m.coalition_value(8).is_err());
    }

    #[test]
    fn marl_grand_coalition_value() {
        let m = GaussianCoalitionModel::new(5, 0.0345, 1.0).unwrap();
        let v = m.coalition_value(5).unwrap();
        assert!((v - -4.233_312_931_409_336).abs() < 1e-12);
        assert!((v - -4.23331).abs() < 1e-5);
    }

    #[test]
    fn uninformative_limit() {
        let m = GaussianCoalitionModel::new(1, 0.0, 1e-300).unwrap();
        assert!((m.coalition_value(1).unwrap() - (-0.5 * LN_2PI - 0.5)).abs() < 1e-15);
        assert!((m.symmetric_shapley() + 0.5 * LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn single_agent_closed_form() {
        for &beta in &[0.1, 1.0, 3.7] {
            let m = GaussianCoalitionModel::new(1, 0.0, beta).unwrap();
            let want = -0.5 * LN_2PI + 0.5 * libm::log(1.0 + beta);
            assert!((m.symmetric_shapley() - want).abs() < 1e-15);
        }
    }

    #[test]
    fn model_validation() {
        assert!(GaussianCoalitionModel::new(0, 0.1, 1.0).is_err());
        assert!(GaussianCoalitionModel::new(3, -0.1, 1.0).is_err());
        assert!(GaussianCoalitionModel::new(3, 0.1, 0.0).is_err());
    }

    #[test]
    fn peak_values() {
        assert!((analytic_peak(5, 0.0345).unwrap() - 2.594).abs() < 5e-4);
        assert!((analytic_peak(30, 0.035).unwrap() - 2.656).abs() < 5e-4);
        assert!((analytic_peak(50, 0.025).unwrap() - 3.152).abs() < 5e-4);
        assert_eq!(analytic_peak(5, 0.0), Err(Error::NoFinitePeak));
        assert!(analytic_peak(5, -1.0).is_err());
        assert!(analytic_peak(5, 1e12).unwrap() < 1e-5);
        // Root of N = 4αβ(1 + Nβ).
        for &(n, a) in &[(5usize, 0.0345), (30, 0.035), (50, 0.025), (3, 7.0)] {
            let b = analytic_peak(n, a).unwrap();
            let nf = n as f64;
            assert!((4.0 * a * b * (1.0 + nf * b) - nf).abs() < 1e-12 * nf);
        }
    }

    #[test]
    fn presets() {
        for d in Domain::ALL {
            let p = DomainPreset::for_domain(d);
            p.validate().unwrap();
            assert_eq!(p.seed, 42);
            assert_eq!(d.name().parse::<Domain>().unwrap(), d);
        }
        assert!("bees".parse::<Domain>().is_err());
        let fish = DomainPreset::fish();
        assert!((fish.noise.sigma(4.0) - 0.024).abs() < 1e-15);
        let g = DomainPreset::marl().beta_grid.values();
        assert_eq!(g.len(), 15);
        assert_eq!(g[0], 0.2);
        assert_eq!(g[14], 5.0);
        assert!((g[7] - 2.6).abs() < 1e-12);
    }

    #[test]
    fn noise_free_samples_equal_model() {
        let preset = DomainPreset {
            noise: NoiseModel::zero(),
            n_runs: 3,
            ..DomainPreset::fish()
        };
        for s in sample_influence(&preset).unwrap() {
            let eta = preset.model(s.beta).unwrap().symmetric_shapley();
            assert_eq!(s.eta, eta);
        }
    }

    #[test]
    fn samples_are_order_independent() {
        let preset = DomainPreset::marl();
        let all = sample_influence(&preset).unwrap();
        let picked = influence_sample(&preset, 9, 77).unwrap();
        assert_eq!(all[9 * preset.n_runs + 77], picked);
    }
}
