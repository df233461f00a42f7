//! Precision sweeps: replicate aggregation, quadratic regression of mean
//! influence on `β`, a two-tailed t-test on the curvature and peak location.

use alloc::string::String;
use alloc::vec::Vec;

use crate::analytic::{sample_influence, DomainPreset, InfluenceSample};
use crate::error::{Error, Result};
use crate::math::{compensated_sum, sqrt};
use crate::special::student_t_two_tailed;

/// Per-precision summary of replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub beta: f64,
    pub mean: f64,
    /// Sample standard deviation (divisor `n - 1`), 0 for a single replicate.
    pub std: f64,
    pub n: usize,
}

impl SweepRow {
    /// Set when `n = 1` and the standard deviation is undefined.
    pub fn single_replicate(&self) -> bool {
        self.n == 1
    }
}

/// Groups samples by precision and summarises each group; rows come out
/// sorted by `β`.
pub fn aggregate(samples: &[InfluenceSample]) -> Result<Vec<SweepRow>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if let Some(index) = samples
        .iter()
        .position(|s| !s.eta.is_finite() || !s.beta.is_finite())
    {
        return Err(Error::NonFinite { index });
    }
    let mut sorted: Vec<&InfluenceSample> = samples.iter().collect();
    sorted.sort_by(|x, y| x.beta.total_cmp(&y.beta).then(x.run.cmp(&y.run)));

    let mut rows = Vec::new();
    for group in sorted.chunk_by(|x, y| x.beta.to_bits() == y.beta.to_bits()) {
        let n = group.len();
        let mean = compensated_sum(group.iter().map(|s| s.eta)) / n as f64;
        let std = if n > 1 {
            let ss = compensated_sum(group.iter().map(|s| (s.eta - mean) * (s.eta - mean)));
            sqrt(ss / (n - 1) as f64)
        } else {
            0.0
        };
        rows.push(SweepRow {
            beta: group[0].beta,
            mean,
            std,
            n,
        });
    }
    Ok(rows)
}

/// Householder QR of the `n x 3` design `[β², β, 1]`.
struct QuadraticDesign {
    /// Column-major `n x 3`, overwritten by the reflectors below the diagonal.
    r: [[f64; 3]; 3],
    /// `Qᵀ y`.
    qty: Vec<f64>,
}

impl QuadraticDesign {
    fn factor(betas: &[f64], y: &[f64]) -> Result<Self> {
        let n = betas.len();
        let mut cols: [Vec<f64>; 3] = [
            betas.iter().map(|b| b * b).collect(),
            betas.to_vec(),
            alloc::vec![1.0; n],
        ];
        let mut qty = y.to_vec();
        let scale = cols
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let mut r = [[0.0; 3]; 3];
        for k in 0..3 {
            let norm = sqrt(cols[k][k..].iter().map(|x| x * x).sum::<f64>());
            if norm <= f64::EPSILON * scale * n as f64 {
                return Err(Error::DegenerateDesign);
            }
            let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
            let mut v: Vec<f64> = cols[k][k..].to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|x| x * x).sum();
            let reflect = |target: &mut [f64]| {
                let dot: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
                let f = 2.0 * dot / vnorm2;
                for (t, vi) in target.iter_mut().zip(&v) {
                    *t -= f * vi;
                }
            };
            for col in cols.iter_mut().skip(k) {
                reflect(&mut col[k..]);
            }
            reflect(&mut qty[k..]);
            for (j, col) in cols.iter().enumerate().skip(k) {
                r[k][j] = col[k];
            }
        }
        Ok(Self { r, qty })
    }

    fn coefficients(&self) -> [f64; 3] {
        let r = &self.r;
        let mut x = [0.0; 3];
        for k in (0..3).rev() {
            let tail: f64 = (k + 1..3).map(|j| r[k][j] * x[j]).sum();
            x[k] = (self.qty[k] - tail) / r[k][k];
        }
        x
    }

    /// `[(XᵀX)^{-1}]_{00}`, the unscaled variance of the `β²` coefficient.
    fn inverse_gram_aa(&self) -> f64 {
        // (XᵀX)^{-1} = R^{-1} R^{-T}
        let inv = upper_inverse(&self.r);
        inv[0].iter().map(|x| x * x).sum()
    }
}

fn upper_inverse(r: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    for col in 0..3 {
        for row in (0..=col).rev() {
            let rhs = if row == col { 1.0 } else { 0.0 };
            let tail: f64 = (row + 1..=col).map(|j| r[row][j] * inv[j][col]).sum();
            inv[row][col] = (rhs - tail) / r[row][row];
        }
    }
    inv
}

/// Least-squares fit `y = aβ² + bβ + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `1 - SS_res / SS_tot`, defined as 1 when `SS_tot = 0`.
    pub r_squared: f64,
    pub ss_res: f64,
    pub ss_tot: f64,
    pub n_points: usize,
}

impl QuadraticFit {
    pub fn predict(&self, beta: f64) -> f64 {
        (self.a * beta + self.b) * beta + self.c
    }
}

fn distinct_betas(rows: &[SweepRow]) -> usize {
    let mut betas: Vec<u64> = rows.iter().map(|r| r.beta.to_bits()).collect();
    betas.sort_unstable();
    betas.dedup();
    betas.len()
}

fn fit_parts(rows: &[SweepRow]) -> Result<(QuadraticDesign, QuadraticFit)> {
    let found = distinct_betas(rows);
    if found < 3 {
        return Err(Error::TooFewPoints { needed: 3, found });
    }
    let betas: Vec<f64> = rows.iter().map(|r| r.beta).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.mean).collect();
    let design = QuadraticDesign::factor(&betas, &y)?;
    let [a, b, c] = design.coefficients();
    let n = rows.len();
    let mean_y = compensated_sum(y.iter().copied()) / n as f64;
    let ss_tot = compensated_sum(y.iter().map(|v| (v - mean_y) * (v - mean_y)));
    let ss_res = compensated_sum(betas.iter().zip(&y).map(|(&x, &v)| {
        let e = v - ((a * x + b) * x + c);
        e * e
    }));
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok((
        design,
        QuadraticFit {
            a,
            b,
            c,
            r_squared,
            ss_res,
            ss_tot,
            n_points: n,
        },
    ))
}

/// Unweighted OLS of the per-precision means, solved by Householder QR.
pub fn quadratic_fit(rows: &[SweepRow]) -> Result<QuadraticFit> {
    fit_parts(rows).map(|(_, fit)| fit)
}

/// Two-tailed p-value of `H0: a = 0` with `n - 3` residual degrees of freedom.
/// A zero standard error with nonzero `a` gives `p = 0`.
pub fn curvature_significance(rows: &[SweepRow], fit: &QuadraticFit) -> Result<f64> {
    if rows.len() < 4 {
        return Err(Error::NoResidualDof);
    }
    let (design, refit) = fit_parts(rows)?;
    let dof = (rows.len() - 3) as f64;
    let s2 = refit.ss_res / dof;
    let se = sqrt(s2 * design.inverse_gram_aa());
    let t = if se > 0.0 {
        fit.a / se
    } else if fit.a != 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(student_t_two_tailed(t, dof))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BetaStarMethod {
    Vertex,
    Argmax,
}

impl BetaStarMethod {
    pub fn name(self) -> &'static str {
        match self {
            BetaStarMethod::Vertex => "vertex",
            BetaStarMethod::Argmax => "argmax",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaStar {
    pub value: f64,
    pub method: BetaStarMethod,
}

/// Vertex `-b / 2a` when `a < 0` and the vertex lies inside the sampled
/// precision range, otherwise the precision with the largest mean (ties go to
/// the smaller `β`).
pub fn find_beta_star(rows: &[SweepRow], fit: &QuadraticFit) -> Result<BetaStar> {
    if rows.is_empty() {
        return Err(Error::EmptySamples);
    }
    let lo = rows.iter().map(|r| r.beta).fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.beta)
        .fold(f64::NEG_INFINITY, f64::max);
    if fit.a < 0.0 {
        let vertex = -fit.b / (2.0 * fit.a);
        if vertex.is_finite() && vertex >= lo && vertex <= hi {
            return Ok(BetaStar {
                value: vertex,
                method: BetaStarMethod::Vertex,
            });
        }
    }
    let mut best = rows[0];
    for row in &rows[1..] {
        if row.mean > best.mean || (row.mean == best.mean && row.beta < best.beta) {
            best = *row;
        }
    }
    Ok(BetaStar {
        value: best.beta,
        method: BetaStarMethod::Argmax,
    })
}

/// Complete analysis of one domain's sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub domain: String,
    pub rows: Vec<SweepRow>,
    pub fit: QuadraticFit,
    pub r_squared: f64,
    pub p_value_a: f64,
    pub beta_star: f64,
    pub beta_star_method: BetaStarMethod,
}

impl SweepResult {
    /// Aggregates samples, fits, tests and locates the peak.
    pub fn from_samples(domain: &str, samples: &[InfluenceSample]) -> Result<Self> {
        let rows = aggregate(samples)?;
        let fit = quadratic_fit(&rows)?;
        let p_value_a = curvature_significance(&rows, &fit)?;
        let star = find_beta_star(&rows, &fit)?;
        Ok(Self {
            domain: String::from(domain),
            rows,
            fit,
            r_squared: fit.r_squared,
            p_value_a,
            beta_star: star.value,
            beta_star_method: star.method,
        })
    }
}

/// Single-threaded end-to-end sweep of a preset.
pub fn run_sweep(preset: &DomainPreset) -> Result<SweepResult> {
    let samples = sample_influence(preset)?;
    SweepResult::from_samples(preset.domain.name(), &samples)
}

/// Min-max normalisation to `[0, 1]`; a flat curve maps to 1.
pub fn normalize_curve(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    values
        .iter()
        .map(|&v| if range > 0.0 { (v - lo) / range } else { 1.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayRow {
    pub domain: String,
    pub beta: f64,
    pub normalized_eta: f64,
}

/// Long-format overlay with every domain's mean curve normalised on its own.
pub fn normalize_overlay(results: &[SweepResult]) -> Vec<OverlayRow> {
    let mut out = Vec::new();
    for result in results {
        let means: Vec<f64> = result.rows.iter().map(|r| r.mean).collect();
        for (row, norm) in result.rows.iter().zip(normalize_curve(&means)) {
            out.push(OverlayRow {
                domain: result.domain.clone(),
                beta: row.beta,
                normalized_eta: norm,
            });
        }
    }
    out
}
