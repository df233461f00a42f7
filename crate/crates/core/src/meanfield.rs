//! Mean-field participation marginals.
//!
//! Under a factorised law `q(X) = Π q_i^{X_i} (1 - q_i)^{1 - X_i}` the
//! stationarity conditions of `F(q) = E_q[E] - (1/β) Σ_i H(q_i)` read
//! `α_i = σ(-β h_i(α))`, where the local field `h_i` is the change in
//! expected energy when agent `i` joins. For a pairwise energy
//! `E(X) = Σ φ_i X_i + Σ_{i<j} ψ_ij X_i X_j` this is
//! `h_i = φ_i + Σ_{j≠i} ψ_ij α_j`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::gibbs::{gibbs_posterior, EnergyTable};
use crate::lattice::{check_agents, DividendTable, DEFAULT_MAX_AGENTS};
use crate::math::{binary_entropy, compensated_sum, exp, sigmoid};

/// Symmetry tolerance for coupling matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Slack before a rise in mean-field free energy counts as a descent violation.
pub const DESCENT_SLACK: f64 = 1e-12;

/// Singleton fields `φ` and symmetric pairwise couplings `ψ` of an energy.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseEnergy {
    phi: Vec<f64>,
    /// Row-major `N x N`, symmetric with zero diagonal.
    psi: Vec<f64>,
}

impl PairwiseEnergy {
    pub fn new(phi: Vec<f64>, psi: Vec<Vec<f64>>) -> Result<Self> {
        let n = phi.len();
        check_agents(n, 64)?;
        if let Some(index) = phi.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if psi.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: psi.len(),
            });
        }
        let mut flat = vec![0.0; n * n];
        for (i, row) in psi.iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &x) in row.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::NonFinite { index: i * n + j });
                }
                flat[i * n + j] = x;
            }
        }
        for i in 0..n {
            if flat[i * n + i].abs() > SYMMETRY_TOL {
                return Err(Error::NonZeroDiagonal(i));
            }
            flat[i * n + i] = 0.0;
            for j in i + 1..n {
                let (a, b) = (flat[i * n + j], flat[j * n + i]);
                if (a - b).abs() > SYMMETRY_TOL {
                    return Err(Error::AsymmetricCoupling { row: i, col: j });
                }
                let mid = 0.5 * (a + b);
                flat[i * n + j] = mid;
                flat[j * n + i] = mid;
            }
        }
        Ok(Self { phi, psi: flat })
    }

    /// Energy with fields only.
    pub fn decoupled(phi: Vec<f64>) -> Result<Self> {
        let n = phi.len();
        Self::new(phi, vec![vec![0.0; n]; n])
    }

    /// Pairwise truncation of a dividend table: `φ_i = Δ({i})`, `ψ_ij = Δ({i,j})`.
    pub fn from_dividends(d: &DividendTable) -> Result<Self> {
        let n = d.n_agents();
        let phi = (0..n).map(|i| d.singleton(i)).collect();
        let psi = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { 0.0 } else { d.pair(i, j) })
                    .collect()
            })
            .collect();
        Self::new(phi, psi)
    }

    pub fn n_agents(&self) -> usize {
        self.phi.len()
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.psi[i * self.n_agents() + j]
    }

    pub fn coupling_row(&self, i: usize) -> &[f64] {
        let n = self.n_agents();
        &self.psi[i * n..(i + 1) * n]
    }

    /// Same fields, couplings multiplied by `scale`.
    pub fn scaled_couplings(&self, scale: f64) -> Self {
        Self {
            phi: self.phi.clone(),
            psi: self.psi.iter().map(|x| x * scale).collect(),
        }
    }

    /// Dividend table holding `φ` on singletons and `ψ` on pairs.
    pub fn to_dividends(&self) -> Result<DividendTable> {
        let n = self.n_agents();
        check_agents(n, DEFAULT_MAX_AGENTS)?;
        let mut d = vec![0.0; 1 << n];
        for i in 0..n {
            d[1 << i] = self.phi[i];
            for j in i + 1..n {
                d[(1 << i) | (1 << j)] = self.coupling(i, j);
            }
        }
        DividendTable::new(n, d)
    }

    /// Full energy table `E(C)` on the lattice.
    pub fn to_energy_table(&self) -> Result<EnergyTable> {
        EnergyTable::from_dividends(&self.to_dividends()?)
    }

    /// `E(X)` for one coalition mask.
    pub fn energy(&self, bits: u64) -> f64 {
        let n = self.n_agents();
        let mut total = 0.0;
        for i in (0..n).filter(|&i| bits >> i & 1 == 1) {
            total += self.phi[i];
            for j in (i + 1..n).filter(|&j| bits >> j & 1 == 1) {
                total += self.coupling(i, j);
            }
        }
        total
    }
}

/// Energies for which the mean-field map can be evaluated.
pub trait MeanFieldModel {
    fn n_agents(&self) -> usize;

    /// `E_q[E | X_i = 1] - E_q[E | X_i = 0]` under the product law `alpha`.
    fn local_field(&self, i: usize, alpha: &[f64]) -> f64;

    /// `E_q[E]` under the product law `alpha`.
    fn expected_energy(&self, alpha: &[f64]) -> f64;
}

impl MeanFieldModel for PairwiseEnergy {
    fn n_agents(&self) -> usize {
        self.phi.len()
    }

    fn local_field(&self, i: usize, alpha: &[f64]) -> f64 {
        let coupled: f64 = self
            .coupling_row(i)
            .iter()
            .zip(alpha)
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, (p, a))| p * a)
            .sum();
        self.phi[i] + coupled
    }

    fn expected_energy(&self, alpha: &[f64]) -> f64 {
        let n = self.n_agents();
        let mut total = 0.0;
        for i in 0..n {
            total += self.phi[i] * alpha[i];
            for j in i + 1..n {
                total += self.coupling(i, j) * alpha[i] * alpha[j];
            }
        }
        total
    }
}

/// Product-law weights over all masks, with agent `skip` forced out.
fn product_weights(alpha: &[f64], skip: Option<usize>) -> Vec<f64> {
    let n = alpha.len();
    let mut w = vec![0.0; 1 << n];
    w[0] = 1.0;
    for (i, &q) in alpha.iter().enumerate() {
        let q = if Some(i) == skip { 0.0 } else { q };
        let span = 1 << i;
        for mask in 0..span {
            let base = w[mask];
            w[mask | span] = base * q;
            w[mask] = base * (1.0 - q);
        }
    }
    w
}

/// `(E_q[E | X_i = 0], E_q[E | X_i = 1])` with the other agents drawn from
/// the product law `alpha`.
pub fn conditional_energies(energy: &EnergyTable, i: usize, alpha: &[f64]) -> (f64, f64) {
    let w = product_weights(alpha, Some(i));
    let e = energy.energies();
    let bit = 1usize << i;
    let out = compensated_sum(
        w.iter()
            .enumerate()
            .filter(|(m, _)| m & bit == 0)
            .map(|(m, wt)| wt * e[m]),
    );
    let inside = compensated_sum(
        w.iter()
            .enumerate()
            .filter(|(m, _)| m & bit == 0)
            .map(|(m, wt)| wt * e[m | bit]),
    );
    (out, inside)
}

impl MeanFieldModel for EnergyTable {
    fn n_agents(&self) -> usize {
        EnergyTable::n_agents(self)
    }

    fn local_field(&self, i: usize, alpha: &[f64]) -> f64 {
        let (out, inside) = conditional_energies(self, i, alpha);
        inside - out
    }

    fn expected_energy(&self, alpha: &[f64]) -> f64 {
        let w = product_weights(alpha, None);
        compensated_sum(w.iter().zip(self.energies()).map(|(p, e)| p * e))
    }
}

/// Update order of the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schedule {
    /// All agents updated from the previous iterate.
    #[default]
    Synchronous,
    /// Agents updated in index order, each seeing the latest values.
    Sequential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    /// Starting marginals; `None` starts every agent at 1/2.
    pub init: Option<Vec<f64>>,
    pub schedule: Schedule,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            damping: 0.5,
            init: None,
            schedule: Schedule::Synchronous,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldSolution {
    pub alpha: Vec<f64>,
    pub iterations: usize,
    /// `max_i |α_i - σ(-β h_i(α))|` at the returned point.
    pub residual: f64,
    pub converged: bool,
    /// Updates that raised the mean-field free energy by more than
    /// [`DESCENT_SLACK`]. Logged only; no descent guarantee exists for
    /// synchronous updates.
    pub descent_violations: usize,
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

fn check_alpha(alpha: &[f64], n: usize) -> Result<()> {
    if alpha.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: alpha.len(),
        });
    }
    if alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "entries must lie in [0, 1]",
        });
    }
    Ok(())
}

/// Solves `α_i = σ(-β h_i(α))` by damped iteration for any [`MeanFieldModel`].
pub fn solve_fixed_point<M: MeanFieldModel + ?Sized>(
    model: &M,
    beta: f64,
    opts: &MeanFieldOptions,
) -> Result<MeanFieldSolution> {
    check_beta(beta)?;
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: "must be positive",
        });
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "damping",
            reason: "must lie in (0, 1]",
        });
    }
    let n = model.n_agents();
    let mut alpha = match &opts.init {
        Some(init) => {
            check_alpha(init, n)?;
            init.clone()
        }
        None => vec![0.5; n],
    };
    let d = opts.damping;
    let mut targets = vec![0.0; n];
    let mut free_energy = free_energy_of(model, &alpha, beta);
    let mut iterations = 0;
    let mut descent_violations = 0;

    loop {
        let mut residual: f64 = 0.0;
        for i in 0..n {
            targets[i] = sigmoid(-beta * model.local_field(i, &alpha));
            residual = residual.max((alpha[i] - targets[i]).abs());
        }
        if residual <= opts.tol || iterations == opts.max_iter {
            return Ok(MeanFieldSolution {
                alpha,
                iterations,
                residual,
                converged: residual <= opts.tol,
                descent_violations,
            });
        }
        match opts.schedule {
            Schedule::Synchronous => {
                for (a, t) in alpha.iter_mut().zip(&targets) {
                    *a = (1.0 - d) * *a + d * t;
                }
            }
            Schedule::Sequential => {
                for i in 0..n {
                    let t = sigmoid(-beta * model.local_field(i, &alpha));
                    alpha[i] = (1.0 - d) * alpha[i] + d * t;
                }
            }
        }
        iterations += 1;
        let next = free_energy_of(model, &alpha, beta);
        if next > free_energy + DESCENT_SLACK {
            descent_violations += 1;
        }
        free_energy = next;
    }
}

/// Mean-field fixed point of a pairwise energy.
pub fn meanfield_fixed_point(
    e: &PairwiseEnergy,
    beta: f64,
    opts: &MeanFieldOptions,
) -> Result<MeanFieldSolution> {
    solve_fixed_point(e, beta, opts)
}

fn free_energy_of<M: MeanFieldModel + ?Sized>(model: &M, alpha: &[f64], beta: f64) -> f64 {
    let entropy = compensated_sum(alpha.iter().map(|&a| binary_entropy(a)));
    model.expected_energy(alpha) - entropy / beta
}

/// `Σ φ_i α_i + Σ_{i<j} ψ_ij α_i α_j + (1/β) Σ_i [α_i ln α_i + (1-α_i) ln(1-α_i)]`.
pub fn meanfield_free_energy(alpha: &[f64], e: &PairwiseEnergy, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    check_alpha(alpha, e.n_agents())?;
    Ok(free_energy_of(e, alpha, beta))
}

/// Generic form of [`meanfield_free_energy`].
pub fn meanfield_free_energy_with<M: MeanFieldModel + ?Sized>(
    model: &M,
    alpha: &[f64],
    beta: f64,
) -> Result<f64> {
    check_beta(beta)?;
    check_alpha(alpha, model.n_agents())?;
    Ok(free_energy_of(model, alpha, beta))
}

/// Log-sum-exp stabilised softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logits.iter().map(|&l| exp(l - max)).collect();
    let total = compensated_sum(weights.iter().copied());
    weights.into_iter().map(|w| w / total).collect()
}

/// Attention logits `L_j = -β (φ_j + Σ_i ψ_ij α_i)`.
pub fn attention_logits(e: &PairwiseEnergy, alpha: &[f64], beta: f64) -> Result<Vec<f64>> {
    check_beta(beta)?;
    check_alpha(alpha, e.n_agents())?;
    Ok((0..e.n_agents())
        .map(|j| -beta * e.local_field(j, alpha))
        .collect())
}

/// Softmax over [`attention_logits`]: lower local energy attracts more weight.
pub fn attention_weights(e: &PairwiseEnergy, alpha: &[f64], beta: f64) -> Result<Vec<f64>> {
    Ok(softmax(&attention_logits(e, alpha, beta)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldComparison {
    pub alpha_exact: Vec<f64>,
    pub alpha_mf: Vec<f64>,
    /// `|α_exact - α_mf|` per agent.
    pub gaps: Vec<f64>,
    pub max_abs_gap: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Exact Gibbs marginals of the full lattice energy against the mean-field
/// fixed point.
pub fn compare_exact_meanfield(
    e: &PairwiseEnergy,
    beta: f64,
    opts: &MeanFieldOptions,
) -> Result<MeanFieldComparison> {
    let table = e.to_energy_table()?;
    let posterior = gibbs_posterior(&table, beta)?;
    let alpha_exact = posterior.marginals().to_vec();
    let solution = meanfield_fixed_point(e, beta, opts)?;
    let gaps: Vec<f64> = alpha_exact
        .iter()
        .zip(&solution.alpha)
        .map(|(x, m)| (x - m).abs())
        .collect();
    let max_abs_gap = gaps.iter().copied().fold(0.0, f64::max);
    Ok(MeanFieldComparison {
        alpha_exact,
        alpha_mf: solution.alpha,
        gaps,
        max_abs_gap,
        converged: solution.converged,
        iterations: solution.iterations,
    })
}
