//! Gibbs posteriors over coalition structures.
//!
//! For an energy table `E(C)` and inverse temperature `β`, the collective
//! free energy `F(P) = E_P[E] - H(P)/β` (entropy in nats) is minimised by
//! `P*(C) = exp(-β E(C)) / Z`. The partition function is evaluated in the
//! log domain after shifting by the minimum energy.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};
use crate::lattice::{check_table, CoalitionMask, DividendTable, ValueTable, DEFAULT_MAX_AGENTS};
use crate::math::{compensated_sum, exp, ln, xlogx, KahanSum};
use crate::rng::keyed_rng;

/// Tolerance on `Σ P = 1` for distributions.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Slack allowed in `F(P*) <= F(Q)` during optimality checks.
pub const OPTIMALITY_SLACK: f64 = 1e-12;

/// Largest pairwise mass shift used by [`verify_gibbs_optimality`].
pub const MAX_MASS_SHIFT: f64 = 0.1;

/// Coalition energies `E(C)` in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyTable {
    n_agents: usize,
    energies: Vec<f64>,
}

impl EnergyTable {
    pub fn new(n_agents: usize, energies: Vec<f64>) -> Result<Self> {
        check_table(n_agents, &energies, DEFAULT_MAX_AGENTS)?;
        Ok(Self { n_agents, energies })
    }

    pub fn from_fn(n_agents: usize, mut f: impl FnMut(CoalitionMask) -> f64) -> Result<Self> {
        crate::lattice::check_agents(n_agents, DEFAULT_MAX_AGENTS)?;
        let energies = (0..1u64 << n_agents)
            .map(|bits| f(CoalitionMask::new(bits, n_agents).expect("mask in range")))
            .collect();
        Self::new(n_agents, energies)
    }

    pub fn constant(n_agents: usize, value: f64) -> Result<Self> {
        crate::lattice::check_agents(n_agents, DEFAULT_MAX_AGENTS)?;
        Self::new(n_agents, vec![value; 1 << n_agents])
    }

    /// Energy whose Harsanyi dividends are `d`.
    pub fn from_dividends(d: &DividendTable) -> Result<Self> {
        let mut energies = d.dividends().to_vec();
        crate::lattice::zeta_transform(&mut energies);
        Self::new(d.n_agents(), energies)
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn energy(&self, mask: CoalitionMask) -> f64 {
        self.energies[mask.index()]
    }
}

/// Game-to-energy map `E(C) = -v(C)`; the Gibbs posterior of the result is
/// proportional to `exp(β v(C))`.
pub fn energy_from_game(v: &ValueTable) -> EnergyTable {
    EnergyTable {
        n_agents: v.n_agents(),
        energies: v.values().iter().map(|x| -x).collect(),
    }
}

/// Probability law over the `2^N` coalitions.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionDistribution {
    n_agents: usize,
    probs: Vec<f64>,
}

impl CoalitionDistribution {
    pub fn new(n_agents: usize, probs: Vec<f64>) -> Result<Self> {
        check_table(n_agents, &probs, DEFAULT_MAX_AGENTS)?;
        if probs.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidDistribution("negative probability"));
        }
        let total = compensated_sum(probs.iter().copied());
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::InvalidDistribution("probabilities do not sum to 1"));
        }
        Ok(Self { n_agents, probs })
    }

    pub(crate) fn from_raw(n_agents: usize, probs: Vec<f64>) -> Self {
        Self { n_agents, probs }
    }

    pub fn uniform(n_agents: usize) -> Result<Self> {
        crate::lattice::check_agents(n_agents, DEFAULT_MAX_AGENTS)?;
        let len = 1usize << n_agents;
        Ok(Self {
            n_agents,
            probs: vec![1.0 / len as f64; len],
        })
    }

    pub fn point_mass(mask: CoalitionMask) -> Result<Self> {
        let n_agents = mask.n_agents();
        crate::lattice::check_agents(n_agents, DEFAULT_MAX_AGENTS)?;
        let mut probs = vec![0.0; 1 << n_agents];
        probs[mask.index()] = 1.0;
        Ok(Self { n_agents, probs })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, mask: CoalitionMask) -> f64 {
        self.probs[mask.index()]
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -compensated_sum(self.probs.iter().map(|&p| xlogx(p)))
    }

    /// `P(i ∈ C)` for every agent.
    pub fn marginals(&self) -> Vec<f64> {
        let mut acc = vec![KahanSum::default(); self.n_agents];
        for (bits, &p) in self.probs.iter().enumerate() {
            let mut rest = bits;
            while rest != 0 {
                acc[rest.trailing_zeros() as usize].add(p);
                rest &= rest - 1;
            }
        }
        acc.iter().map(|s| s.total().clamp(0.0, 1.0)).collect()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// The Gibbs posterior `P*(C) ∝ exp(-β E(C))` of an energy table.
#[derive(Debug, Clone)]
pub struct GibbsPosterior<'e> {
    beta: f64,
    energy: &'e EnergyTable,
    min_energy: f64,
    log_shifted_partition: f64,
    distribution: CoalitionDistribution,
    marginals: Vec<f64>,
}

impl<'e> GibbsPosterior<'e> {
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn energy(&self) -> &'e EnergyTable {
        self.energy
    }

    /// `ln Z = -β E_min + ln Σ exp(-β (E - E_min))`.
    pub fn log_partition(&self) -> f64 {
        -self.beta * self.min_energy + self.log_shifted_partition
    }

    /// The shifted pieces `(E_min, ln Σ exp(-β (E - E_min)))` of `ln Z`.
    pub fn log_partition_parts(&self) -> (f64, f64) {
        (self.min_energy, self.log_shifted_partition)
    }

    /// Equilibrium free energy `-(1/β) ln Z`.
    pub fn free_energy(&self) -> f64 {
        self.min_energy - self.log_shifted_partition / self.beta
    }

    pub fn distribution(&self) -> &CoalitionDistribution {
        &self.distribution
    }

    pub fn marginals(&self) -> &[f64] {
        &self.marginals
    }
}

pub fn gibbs_posterior(energy: &EnergyTable, beta: f64) -> Result<GibbsPosterior<'_>> {
    check_beta(beta)?;
    let min_energy = energy
        .energies
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = energy
        .energies
        .iter()
        .map(|&e| exp(-beta * (e - min_energy)))
        .collect();
    let total = compensated_sum(weights.iter().copied());
    let probs = weights.into_iter().map(|w| w / total).collect();
    let distribution = CoalitionDistribution::from_raw(energy.n_agents, probs);
    let marginals = distribution.marginals();
    Ok(GibbsPosterior {
        beta,
        energy,
        min_energy,
        log_shifted_partition: ln(total),
        distribution,
        marginals,
    })
}

/// `F(P) = Σ P E + (1/β) Σ P ln P`, with `0 ln 0 = 0`.
pub fn collective_free_energy(
    p: &CoalitionDistribution,
    energy: &EnergyTable,
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    if p.n_agents != energy.n_agents {
        return Err(Error::AgentCountMismatch {
            left: p.n_agents,
            right: energy.n_agents,
        });
    }
    let expected = compensated_sum(p.probs.iter().zip(&energy.energies).map(|(q, e)| q * e));
    let neg_entropy = compensated_sum(p.probs.iter().map(|&q| xlogx(q)));
    Ok(expected + neg_entropy / beta)
}

/// Exact participation marginals `α_i = Σ_{C ∋ i} P*(C)`.
pub fn participation_marginals(g: &GibbsPosterior<'_>) -> Vec<f64> {
    g.distribution.marginals()
}

/// Perturbation family used to probe optimality of the Gibbs posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Perturbation {
    /// Fresh draw from the flat Dirichlet on the simplex.
    Dirichlet,
    /// Random convex blend of `P*` with a flat Dirichlet draw.
    Blend,
    /// Move up to [`MAX_MASS_SHIFT`] of mass between two coalitions.
    MassShift,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityViolation {
    pub trial: usize,
    pub family: Perturbation,
    /// `F(Q) - F(P*)`, negative by more than the slack.
    pub gap: f64,
    pub distribution: CoalitionDistribution,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalityReport {
    pub n_trials: usize,
    /// `F(P*)`.
    pub free_energy: f64,
    /// Smallest `F(Q) - F(P*)` over all trials.
    pub min_gap: f64,
    pub violations: Vec<OptimalityViolation>,
}

impl OptimalityReport {
    pub fn is_optimal(&self) -> bool {
        self.violations.is_empty()
    }
}

fn flat_dirichlet(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let mut draws: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total = compensated_sum(draws.iter().copied());
    for d in &mut draws {
        *d /= total;
    }
    draws
}

/// Compares `F(P*)` against `n_trials` randomly perturbed distributions.
/// Trials cycle through the [`Perturbation`] families; every draw is keyed
/// by `(seed, trial)`.
pub fn verify_gibbs_optimality(
    energy: &EnergyTable,
    beta: f64,
    n_trials: usize,
    seed: u64,
) -> Result<OptimalityReport> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter {
            name: "n_trials",
            reason: "must be at least 1",
        });
    }
    let posterior = gibbs_posterior(energy, beta)?;
    let star = posterior.distribution().probs();
    let f_star = collective_free_energy(posterior.distribution(), energy, beta)?;
    let len = star.len();
    let mut min_gap = f64::INFINITY;
    let mut violations = Vec::new();

    for trial in 0..n_trials {
        let mut rng = keyed_rng(seed, &[trial as u64]);
        let family = match trial % 3 {
            0 => Perturbation::Dirichlet,
            1 => Perturbation::Blend,
            _ => Perturbation::MassShift,
        };
        let probs = match family {
            Perturbation::Dirichlet => flat_dirichlet(&mut rng, len),
            Perturbation::Blend => {
                let lambda: f64 = rng.random();
                flat_dirichlet(&mut rng, len)
                    .into_iter()
                    .zip(star)
                    .map(|(d, &p)| (1.0 - lambda) * p + lambda * d)
                    .collect()
            }
            Perturbation::MassShift => {
                let mut q = star.to_vec();
                let from = rng.random_range(0..len);
                let mut to = rng.random_range(0..len - 1);
                if to >= from {
                    to += 1;
                }
                let amount = (rng.random::<f64>() * MAX_MASS_SHIFT).min(q[from]);
                q[from] -= amount;
                q[to] += amount;
                q
            }
        };
        let candidate = CoalitionDistribution::from_raw(energy.n_agents, probs);
        let gap = collective_free_energy(&candidate, energy, beta)? - f_star;
        min_gap = min_gap.min(gap);
        if gap < -OPTIMALITY_SLACK {
            violations.push(OptimalityViolation {
                trial,
                family,
                gap,
                distribution: candidate,
            });
        }
    }

    Ok(OptimalityReport {
        n_trials,
        free_energy: f_star,
        min_gap,
        violations,
    })
}
