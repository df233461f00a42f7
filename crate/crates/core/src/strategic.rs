//! The induced coalition game.
//!
//! A strategy is an inclusion probability `q_i`; a profile induces the product
//! law over coalitions. Agent `i` pays `c_i(q) = E_q[E] - H(q_i)/β`, so the
//! mean-field free energy is an exact potential and its coordinate-wise
//! stationary points are Nash equilibria of the deviation problem. Deviations
//! are searched on a uniform grid plus the closed-form stationary candidate
//! `σ(-β h_i)`.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gibbs::{CoalitionDistribution, EnergyTable};
use crate::lattice::{check_agents, DEFAULT_MAX_AGENTS};
use crate::math::{binary_entropy, compensated_sum, sigmoid};
use crate::meanfield::{conditional_energies, solve_fixed_point, MeanFieldOptions, Schedule};

/// Default number of grid points for deviation searches.
pub const DEFAULT_GRID: usize = 1001;

/// Relative size below which a cost improvement is treated as rounding noise.
pub const COST_RESOLUTION: f64 = 1e-12;

/// Per-agent inclusion probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyProfile {
    q: Vec<f64>,
}

impl StrategyProfile {
    pub fn new(q: Vec<f64>) -> Result<Self> {
        check_agents(q.len(), 64)?;
        if q.iter().any(|x| !(0.0..=1.0).contains(x)) {
            return Err(Error::InvalidParameter {
                name: "q",
                reason: "inclusion probabilities must lie in [0, 1]",
            });
        }
        Ok(Self { q })
    }

    pub fn n_agents(&self) -> usize {
        self.q.len()
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    /// Profile with agent `i` switched to `qi`.
    pub fn with_agent(&self, i: usize, qi: f64) -> Result<Self> {
        if i >= self.q.len() {
            return Err(Error::AgentOutOfRange {
                index: i,
                n_agents: self.q.len(),
            });
        }
        let mut q = self.q.clone();
        q[i] = qi;
        Self::new(q)
    }
}

/// Product law `Π q_i^{X_i} (1 - q_i)^{1 - X_i}` over all masks.
pub fn profile_distribution(q: &StrategyProfile) -> Result<CoalitionDistribution> {
    let n = q.n_agents();
    check_agents(n, DEFAULT_MAX_AGENTS)?;
    let mut probs = alloc::vec![0.0; 1 << n];
    probs[0] = 1.0;
    for (i, &qi) in q.q.iter().enumerate() {
        let span = 1 << i;
        for mask in 0..span {
            let base = probs[mask];
            probs[mask | span] = base * qi;
            probs[mask] = base * (1.0 - qi);
        }
    }
    Ok(CoalitionDistribution::from_raw(n, probs))
}

fn check_inputs(i: usize, q: &StrategyProfile, energy: &EnergyTable, beta: f64) -> Result<()> {
    if q.n_agents() != energy.n_agents() {
        return Err(Error::AgentCountMismatch {
            left: q.n_agents(),
            right: energy.n_agents(),
        });
    }
    if i >= q.n_agents() {
        return Err(Error::AgentOutOfRange {
            index: i,
            n_agents: q.n_agents(),
        });
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "must be positive and finite",
        });
    }
    Ok(())
}

/// `c_i(q) = E_q[E] - H(q_i)/β`, by full enumeration of the product law.
pub fn agent_cost(i: usize, q: &StrategyProfile, energy: &EnergyTable, beta: f64) -> Result<f64> {
    check_inputs(i, q, energy, beta)?;
    let p = profile_distribution(q)?;
    let expected = compensated_sum(p.probs().iter().zip(energy.energies()).map(|(a, b)| a * b));
    Ok(expected - binary_entropy(q.q[i]) / beta)
}

/// Outcome of a unilateral deviation search for one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BestResponse {
    /// Minimising inclusion probability.
    pub q_star: f64,
    /// `c_i(q) - c_i(q_star)`, clipped at zero and floored at [`COST_RESOLUTION`].
    pub improvement: f64,
    pub current_cost: f64,
    pub best_cost: f64,
}

/// Scans `grid` uniformly spaced values of `q_i` in `[0, 1]` together with the
/// stationary point `σ(-β (E[E|in] - E[E|out]))`.
pub fn best_response(
    i: usize,
    q: &StrategyProfile,
    energy: &EnergyTable,
    beta: f64,
    grid: usize,
) -> Result<BestResponse> {
    check_inputs(i, q, energy, beta)?;
    if grid < 2 {
        return Err(Error::InvalidParameter {
            name: "grid",
            reason: "must have at least 2 points",
        });
    }
    let (out, inside) = conditional_energies(energy, i, q.q());
    let field = inside - out;
    let cost = |x: f64| out + x * field - binary_entropy(x) / beta;

    let current_cost = cost(q.q[i]);
    let stationary = sigmoid(-beta * field);
    let step = 1.0 / (grid - 1) as f64;
    let mut q_star = stationary;
    let mut best_cost = cost(stationary);
    for k in 0..grid {
        let x = if k == grid - 1 { 1.0 } else { k as f64 * step };
        let c = cost(x);
        if c < best_cost {
            best_cost = c;
            q_star = x;
        }
    }
    let raw = current_cost - best_cost;
    let improvement = if raw <= COST_RESOLUTION * (1.0 + current_cost.abs()) {
        0.0
    } else {
        raw
    };
    Ok(BestResponse {
        q_star,
        improvement,
        current_cost,
        best_cost,
    })
}

/// Largest profitable unilateral deviation over all agents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NashCertificate {
    pub epsilon: f64,
    pub worst_agent: usize,
    pub worst_deviation: f64,
    pub beta: f64,
}

/// `ε = max_i improvement_i`; ties go to the lowest agent index.
pub fn nash_certificate(
    q: &StrategyProfile,
    energy: &EnergyTable,
    beta: f64,
    grid: usize,
) -> Result<NashCertificate> {
    let mut cert = NashCertificate {
        epsilon: 0.0,
        worst_agent: 0,
        worst_deviation: f64::NAN,
        beta,
    };
    for i in 0..q.n_agents() {
        let br = best_response(i, q, energy, beta, grid)?;
        if i == 0 || br.improvement > cert.epsilon {
            cert.epsilon = br.improvement;
            cert.worst_agent = i;
            cert.worst_deviation = br.q_star;
        }
    }
    Ok(cert)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonRow {
    pub beta: f64,
    pub epsilon: f64,
    pub worst_agent: usize,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    /// Schedule that produced the certified profile.
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonScan {
    pub rows: Vec<EpsilonRow>,
}

impl EpsilonScan {
    /// `(min, max)` of `ε β` over rows with `ε > 0`.
    pub fn scaled_range(&self) -> Option<(f64, f64)> {
        self.rows
            .iter()
            .filter(|r| r.epsilon > 0.0)
            .map(|r| r.epsilon * r.beta)
            .fold(None, |acc, x| match acc {
                None => Some((x, x)),
                Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
            })
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

/// Residual target for the sequential polish applied before certification.
pub const POLISH_TOL: f64 = 1e-15;

/// Mean-field solve plus certificate at one precision.
///
/// The solver's absolute residual leaves small inclusion probabilities with
/// large relative error, which shows up as spurious first-order cost gains.
/// The solution is therefore polished by exact sequential coordinate updates
/// (`α_i = σ(-β h_i)` in turn), which also rescues a stalled synchronous run.
pub fn certify_meanfield(
    energy: &EnergyTable,
    beta: f64,
    grid: usize,
    opts: &MeanFieldOptions,
) -> Result<EpsilonRow> {
    let first = solve_fixed_point(energy, beta, opts)?;
    let polish_opts = MeanFieldOptions {
        tol: POLISH_TOL.min(opts.tol),
        max_iter: opts.max_iter,
        damping: 1.0,
        init: Some(first.alpha.clone()),
        schedule: Schedule::Sequential,
    };
    let polished = solve_fixed_point(energy, beta, &polish_opts)?;
    let iterations = first.iterations + polished.iterations;
    let (solution, schedule) = if polished.residual <= first.residual {
        (polished, Schedule::Sequential)
    } else {
        (first, opts.schedule)
    };
    let profile = StrategyProfile::new(solution.alpha)?;
    let cert = nash_certificate(&profile, energy, beta, grid)?;
    Ok(EpsilonRow {
        beta,
        epsilon: cert.epsilon,
        worst_agent: cert.worst_agent,
        converged: solution.residual <= opts.tol,
        iterations,
        residual: solution.residual,
        schedule,
    })
}

/// ε at the mean-field stationary profile for each precision in an ascending
/// grid. Non-convergence is recorded per row and the scan continues.
pub fn epsilon_decay_scan(
    energy: &EnergyTable,
    beta_grid: &[f64],
    grid: usize,
    opts: &MeanFieldOptions,
) -> Result<EpsilonScan> {
    if beta_grid.is_empty() || beta_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter {
            name: "beta_grid",
            reason: "must be non-empty and strictly ascending",
        });
    }
    let rows = beta_grid
        .iter()
        .map(|&beta| certify_meanfield(energy, beta, grid, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(EpsilonScan { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meanfield::{meanfield_free_energy_with, MeanFieldModel};

    fn table3() -> EnergyTable {
        EnergyTable::new(3, alloc::vec![0.0, 0.4, -0.7, 0.2, 1.1, -0.3, 0.8, -1.5]).unwrap()
    }

    #[test]
    fn profile_distribution_cases() {
        let p = profile_distribution(&StrategyProfile::new(alloc::vec![1.0; 3]).unwrap()).unwrap();
        assert_eq!(p.probs()[7], 1.0);
        assert_eq!(p.probs().iter().sum::<f64>(), 1.0);
        let p = profile_distribution(&StrategyProfile::new(alloc::vec![0.5; 3]).unwrap()).unwrap();
        assert!(p.probs().iter().all(|&x| x == 0.125));
        let p =
            profile_distribution(&StrategyProfile::new(alloc::vec![0.25, 0.5]).unwrap()).unwrap();
        assert_eq!(p.probs()[3], 0.125);
        assert!(StrategyProfile::new(alloc::vec![1.2]).is_err());
    }

    #[test]
    fn single_agent_cost_minimum() {
        let e1 = 0.9;
        let beta = 2.0;
        let energy = EnergyTable::new(1, alloc::vec![0.0, e1]).unwrap();
        let q_star = sigmoid(-beta * e1);
        let cost = |x: f64| {
            agent_cost(
                0,
                &StrategyProfile::new(alloc::vec![x]).unwrap(),
                &energy,
                beta,
            )
            .unwrap()
        };
        let c_star = cost(q_star);
        for k in 0..=100 {
            assert!(cost(k as f64 / 100.0) >= c_star - 1e-15);
        }
        let br = best_response(
            0,
            &StrategyProfile::new(alloc::vec![0.5]).unwrap(),
            &energy,
            beta,
            11,
        )
        .unwrap();
        assert!((br.q_star - q_star).abs() < 0.1);
        assert!(br.improvement > 0.0);
    }

    #[test]
    fn pure_strategies_have_no_entropy() {
        let energy = table3();
        let q = StrategyProfile::new(alloc::vec![0.0, 1.0, 1.0]).unwrap();
        assert_eq!(
            agent_cost(0, &q, &energy, 3.0).unwrap(),
            energy.energies()[6]
        );
    }

    #[test]
    fn constant_energy_prefers_half() {
        let energy = EnergyTable::constant(2, 0.3).unwrap();
        let q = StrategyProfile::new(alloc::vec![0.9, 0.1]).unwrap();
        let br = best_response(0, &q, &energy, 1.0, DEFAULT_GRID).unwrap();
        assert_eq!(br.q_star, 0.5);
        let cert = nash_certificate(
            &StrategyProfile::new(alloc::vec![0.5; 2]).unwrap(),
            &energy,
            1.0,
            101,
        )
        .unwrap();
        assert_eq!(cert.epsilon, 0.0);
    }

    #[test]
    fn profitable_deviation_detected() {
        let energy = EnergyTable::from_fn(3, |c| -(c.size() as f64)).unwrap();
        let q = StrategyProfile::new(alloc::vec![0.0; 3]).unwrap();
        let cert = nash_certificate(&q, &energy, 4.0, DEFAULT_GRID).unwrap();
        assert!(cert.epsilon > 0.0);
        assert!(cert.worst_deviation > 0.9);
    }

    #[test]
    fn potential_property() {
        let energy = table3();
        let beta = 1.7;
        let q = StrategyProfile::new(alloc::vec![0.3, 0.6, 0.15]).unwrap();
        for i in 0..3 {
            for &x in &[0.0, 0.2, 0.77, 1.0] {
                let moved = q.with_agent(i, x).unwrap();
                let dc = agent_cost(i, &moved, &energy, beta).unwrap()
                    - agent_cost(i, &q, &energy, beta).unwrap();
                let df = meanfield_free_energy_with(&energy, moved.q(), beta).unwrap()
                    - meanfield_free_energy_with(&energy, q.q(), beta).unwrap();
                assert!((dc - df).abs() < 1e-12, "agent {i} x {x}: {dc} vs {df}");
            }
        }
        assert!(energy.n_agents() == MeanFieldModel::n_agents(&energy));
    }

    #[test]
    fn scan_edge_cases() {
        let single = EnergyTable::new(1, alloc::vec![0.0, 0.6]).unwrap();
        let scan = epsilon_decay_scan(&single, &[1.0, 2.0, 4.0], 101, &MeanFieldOptions::default())
            .unwrap();
        assert!(scan.rows.iter().all(|r| r.epsilon == 0.0 && r.converged));
        assert_eq!(scan.scaled_range(), None);

        let flat = EnergyTable::constant(3, -0.4).unwrap();
        let scan =
            epsilon_decay_scan(&flat, &[0.5, 5.0], 101, &MeanFieldOptions::default()).unwrap();
        assert!(scan.rows.iter().all(|r| r.epsilon == 0.0));

        assert!(epsilon_decay_scan(&flat, &[2.0, 1.0], 101, &MeanFieldOptions::default()).is_err());
        assert!(epsilon_decay_scan(&flat, &[], 101, &MeanFieldOptions::default()).is_err());
    }

    #[test]
    fn certificate_is_reproducible() {
        let energy = table3();
        let q = StrategyProfile::new(alloc::vec![0.1, 0.8, 0.4]).unwrap();
        let a = nash_certificate(&q, &energy, 2.0, DEFAULT_GRID).unwrap();
        let b = nash_certificate(&q, &energy, 2.0, DEFAULT_GRID).unwrap();
        assert_eq!(a.epsilon.to_bits(), b.epsilon.to_bits());
        assert_eq!(a.worst_agent, b.worst_agent);
    }

    #[test]
    fn input_checks() {
        let energy = table3();
        let q = StrategyProfile::new(alloc::vec![0.5; 2]).unwrap();
        assert!(agent_cost(0, &q, &energy, 1.0).is_err());
        let q = StrategyProfile::new(alloc::vec![0.5; 3]).unwrap();
        assert!(agent_cost(3, &q, &energy, 1.0).is_err());
        assert!(best_response(0, &q, &energy, 1.0, 1).is_err());
        assert!(best_response(0, &q, &energy, -1.0, 11).is_err());
    }
}
