//! Coalition value functions on the subset lattice.
//!
//! A coalition of `N` agents is a bit mask; bit `i` is set when agent `i`
//! belongs to it. Tables of length `2^N` are indexed directly by mask.
//! Harsanyi dividends are obtained from values by the in-place fast Möbius
//! transform and values are recovered by the fast zeta transform, both in
//! `O(N 2^N)`.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Default cap on the number of agents for dense tables (`2^24` doubles, 128 MiB).
pub const DEFAULT_MAX_AGENTS: usize = 24;

/// Largest cap accepted by [`ValueTable::with_cap`] and friends.
pub const HARD_MAX_AGENTS: usize = 30;

/// Default absolute tolerance for [`classify_synergy`].
pub const DEFAULT_SYNERGY_TOL: f64 = 1e-9;

/// A subset of agents encoded as a bit mask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionMask {
    bits: u64,
    n_agents: u8,
}

impl CoalitionMask {
    pub fn new(bits: u64, n_agents: usize) -> Result<Self> {
        if n_agents == 0 {
            return Err(Error::NoAgents);
        }
        if n_agents > 64 {
            return Err(Error::TooManyAgents { n_agents, cap: 64 });
        }
        if n_agents < 64 && bits >> n_agents != 0 {
            return Err(Error::MaskOutOfRange { bits, n_agents });
        }
        Ok(Self {
            bits,
            n_agents: n_agents as u8,
        })
    }

    pub fn empty(n_agents: usize) -> Result<Self> {
        Self::new(0, n_agents)
    }

    pub fn full(n_agents: usize) -> Result<Self> {
        let bits = if n_agents >= 64 {
            u64::MAX
        } else {
            (1u64 << n_agents) - 1
        };
        Self::new(bits, n_agents)
    }

    pub fn bits(self) -> u64 {
        self.bits
    }

    /// Mask as a table index.
    pub fn index(self) -> usize {
        self.bits as usize
    }

    pub fn n_agents(self) -> usize {
        self.n_agents as usize
    }

    /// Coalition size `|C|`.
    pub fn size(self) -> usize {
        self.bits.count_ones() as usize
    }

    pub fn contains(self, agent: usize) -> bool {
        agent < self.n_agents() && self.bits >> agent & 1 == 1
    }

    pub fn with(self, agent: usize) -> Self {
        debug_assert!(agent < self.n_agents());
        Self {
            bits: self.bits | 1 << agent,
            ..self
        }
    }

    pub fn without(self, agent: usize) -> Self {
        Self {
            bits: self.bits & !(1 << agent),
            ..self
        }
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.bits & !other.bits == 0
    }

    /// Member agent indices in increasing order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mut rest = self.bits;
        core::iter::from_fn(move || {
            if rest == 0 {
                None
            } else {
                let i = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(i)
            }
        })
    }
}

impl fmt::Debug for CoalitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoalitionMask({:#b}/{})", self.bits, self.n_agents)
    }
}

impl fmt::Display for CoalitionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.members().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

pub(crate) fn check_agents(n_agents: usize, cap: usize) -> Result<()> {
    if n_agents == 0 {
        return Err(Error::NoAgents);
    }
    let cap = cap.min(HARD_MAX_AGENTS);
    if n_agents > cap {
        return Err(Error::TooManyAgents { n_agents, cap });
    }
    Ok(())
}

pub(crate) fn check_table(n_agents: usize, table: &[f64], cap: usize) -> Result<()> {
    check_agents(n_agents, cap)?;
    let expected = 1usize << n_agents;
    if table.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: table.len(),
        });
    }
    if let Some(index) = table.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// In-place fast zeta transform: `a[S] <- sum_{T subset of S} a[T]`.
pub fn zeta_transform(a: &mut [f64]) {
    debug_assert!(a.len().is_power_of_two());
    let mut half = 1;
    while half < a.len() {
        for block in a.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (l, h) in lo.iter().zip(hi) {
                *h += *l;
            }
        }
        half <<= 1;
    }
}

/// In-place fast Möbius transform, the inverse of [`zeta_transform`].
pub fn mobius_transform(a: &mut [f64]) {
    debug_assert!(a.len().is_power_of_two());
    let mut half = 1;
    while half < a.len() {
        for block in a.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (l, h) in lo.iter().zip(hi) {
                *h -= *l;
            }
        }
        half <<= 1;
    }
}

/// Characteristic function `v: 2^N -> R` with `v(empty) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    n_agents: usize,
    values: Vec<f64>,
}

impl ValueTable {
    pub fn new(n_agents: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_cap(n_agents, values, DEFAULT_MAX_AGENTS)
    }

    pub fn with_cap(n_agents: usize, values: Vec<f64>, cap: usize) -> Result<Self> {
        check_table(n_agents, &values, cap)?;
        if values[0] != 0.0 {
            return Err(Error::NonZeroEmpty(values[0]));
        }
        Ok(Self { n_agents, values })
    }

    /// Builds a table by evaluating `f` on every coalition. `f` must return 0
    /// for the empty coalition.
    pub fn from_fn(n_agents: usize, mut f: impl FnMut(CoalitionMask) -> f64) -> Result<Self> {
        check_agents(n_agents, DEFAULT_MAX_AGENTS)?;
        let values = (0..1u64 << n_agents)
            .map(|bits| {
                f(CoalitionMask {
                    bits,
                    n_agents: n_agents as u8,
                })
            })
            .collect();
        Self::new(n_agents, values)
    }

    /// Symmetric game whose value depends only on coalition size.
    pub fn from_sizes(n_agents: usize, by_size: impl Fn(usize) -> f64) -> Result<Self> {
        Self::from_fn(n_agents, |c| by_size(c.size()))
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, mask: CoalitionMask) -> f64 {
        self.values[mask.index()]
    }

    /// `v(N)`, the value of the grand coalition.
    pub fn grand_value(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn mask(&self, bits: u64) -> Result<CoalitionMask> {
        CoalitionMask::new(bits, self.n_agents)
    }
}

/// Harsanyi dividends `Δ(B)` of a value table, indexed by mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DividendTable {
    n_agents: usize,
    dividends: Vec<f64>,
}

impl DividendTable {
    pub fn new(n_agents: usize, dividends: Vec<f64>) -> Result<Self> {
        check_table(n_agents, &dividends, DEFAULT_MAX_AGENTS)?;
        if dividends[0] != 0.0 {
            return Err(Error::NonZeroEmpty(dividends[0]));
        }
        Ok(Self {
            n_agents,
            dividends,
        })
    }

    pub fn zeros(n_agents: usize) -> Result<Self> {
        check_agents(n_agents, DEFAULT_MAX_AGENTS)?;
        Ok(Self {
            n_agents,
            dividends: vec![0.0; 1 << n_agents],
        })
    }

    pub fn n_agents(&self) -> usize {
        self.n_agents
    }

    pub fn dividends(&self) -> &[f64] {
        &self.dividends
    }

    pub fn dividend(&self, mask: CoalitionMask) -> f64 {
        self.dividends[mask.index()]
    }

    /// Singleton dividend `φ_i = Δ({i})`.
    pub fn singleton(&self, i: usize) -> f64 {
        self.dividends[1 << i]
    }

    /// Pairwise dividend `ψ_ij = Δ({i, j})`.
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.dividends[(1 << i) | (1 << j)]
    }

    /// Dividends of the energy `E = -v`: the elementwise negation.
    pub fn negated(&self) -> Self {
        Self {
            n_agents: self.n_agents,
            dividends: self.dividends.iter().map(|d| -d).collect(),
        }
    }
}

/// Möbius inversion `Δ(B) = Σ_{A ⊆ B} (-1)^{|B|-|A|} v(A)`.
pub fn harsanyi_dividends(v: &ValueTable) -> Result<DividendTable> {
    let mut dividends = v.values.clone();
    mobius_transform(&mut dividends);
    if let Some(index) = dividends.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    dividends[0] = 0.0;
    Ok(DividendTable {
        n_agents: v.n_agents,
        dividends,
    })
}

/// Zeta transform `v(C) = Σ_{B ⊆ C} Δ(B)`.
pub fn reconstruct_values(d: &DividendTable) -> Result<ValueTable> {
    let mut values = d.dividends.clone();
    zeta_transform(&mut values);
    if let Some(index) = values.iter().position(|x| !x.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(ValueTable {
        n_agents: d.n_agents,
        values,
    })
}

/// Per-agent Shapley values `η_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyVector {
    eta: Vec<f64>,
}

impl ShapleyVector {
    pub fn new(eta: Vec<f64>) -> Self {
        Self { eta }
    }

    pub fn n_agents(&self) -> usize {
        self.eta.len()
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.eta
    }

    pub fn total(&self) -> f64 {
        crate::math::compensated_sum(self.eta.iter().copied())
    }
}

/// `η_i = Σ_{B ∋ i} Δ(B) / |B|`.
pub fn shapley_from_dividends(d: &DividendTable) -> ShapleyVector {
    let mut eta = vec![0.0; d.n_agents];
    for (bits, &div) in d.dividends.iter().enumerate().skip(1) {
        if div == 0.0 {
            continue;
        }
        let share = div / bits.count_ones() as f64;
        let mut rest = bits;
        while rest != 0 {
            eta[rest.trailing_zeros() as usize] += share;
            rest &= rest - 1;
        }
    }
    ShapleyVector { eta }
}

/// Permutation-sampling Shapley estimate with per-agent standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapleyEstimate {
    pub shapley: ShapleyVector,
    pub std_error: Vec<f64>,
    pub n_permutations: usize,
}

/// Monte Carlo Shapley values from `n_permutations` uniformly random agent
/// orderings. The oracle is queried once for the empty coalition and `N`
/// times per permutation; its errors propagate unchanged.
pub fn shapley_monte_carlo<F, E>(
    mut oracle: F,
    n_agents: usize,
    n_permutations: usize,
    seed: u64,
) -> core::result::Result<ShapleyEstimate, E>
where
    F: FnMut(CoalitionMask) -> core::result::Result<f64, E>,
    E: From<Error>,
{
    if n_permutations == 0 {
        return Err(Error::InvalidParameter {
            name: "n_permutations",
            reason: "must be at least 1",
        }
        .into());
    }
    let empty = CoalitionMask::empty(n_agents)?;
    let base = oracle(empty)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n_agents).collect();
    let mut mean = vec![0.0; n_agents];
    let mut m2 = vec![0.0; n_agents];
    for t in 0..n_permutations {
        order.shuffle(&mut rng);
        let mut coalition = empty;
        let mut prev = base;
        let count = (t + 1) as f64;
        for &agent in &order {
            coalition = coalition.with(agent);
            let value = oracle(coalition)?;
            let marginal = value - prev;
            prev = value;
            let delta = marginal - mean[agent];
            mean[agent] += delta / count;
            m2[agent] += delta * (marginal - mean[agent]);
        }
    }
    let std_error = if n_permutations > 1 {
        let n = n_permutations as f64;
        m2.iter().map(|s| sqrt(s / (n - 1.0) / n)).collect()
    } else {
        vec![0.0; n_agents]
    };
    Ok(ShapleyEstimate {
        shapley: ShapleyVector { eta: mean },
        std_error,
        n_permutations,
    })
}

/// Keeps dividends of coalitions with `|B| <= max_order` and zeroes the rest.
/// With `max_order = 2` the reconstructed table is the Ising-form energy with
/// fields `φ_i` and couplings `ψ_ij`.
pub fn truncate_dividends(d: &DividendTable, max_order: usize) -> Result<DividendTable> {
    if max_order == 0 || max_order > d.n_agents {
        return Err(Error::InvalidParameter {
            name: "max_order",
            reason: "must lie in 1..=n_agents",
        });
    }
    let dividends = d
        .dividends
        .iter()
        .enumerate()
        .map(|(bits, &x)| {
            if bits.count_ones() as usize <= max_order {
                x
            } else {
                0.0
            }
        })
        .collect();
    Ok(DividendTable {
        n_agents: d.n_agents,
        dividends,
    })
}

/// Sign class of a value-function dividend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Synergy {
    /// `Δ > tol`: joint membership lowers free energy beyond the parts.
    Synergistic,
    /// `Δ < -tol`.
    Antagonistic,
    Neutral,
}

impl Synergy {
    pub fn of(dividend: f64, tol: f64) -> Self {
        if dividend > tol {
            Synergy::Synergistic
        } else if dividend < -tol {
            Synergy::Antagonistic
        } else {
            Synergy::Neutral
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Synergy::Synergistic => "synergistic",
            Synergy::Antagonistic => "antagonistic",
            Synergy::Neutral => "neutral",
        }
    }
}

impl fmt::Display for Synergy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Labels every coalition by the sign of its value dividend. Index 0 (the
/// empty coalition) is always neutral.
pub fn classify_synergy(d: &DividendTable, tol: f64) -> Result<Vec<Synergy>> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "tol",
            reason: "must be nonnegative",
        });
    }
    Ok(d.dividends.iter().map(|&x| Synergy::of(x, tol)).collect())
}
