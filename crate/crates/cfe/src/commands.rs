//! Command bodies. Each one resolves its parameters, computes everything in
//! memory and returns the artifacts; nothing touches the output directory
//! until [`crate::run`] writes the finished set.

use std::path::{Path, PathBuf};

use cfe_core::lattice::DEFAULT_SYNERGY_TOL;
use cfe_core::meanfield::{attention_weights, meanfield_free_energy};
use cfe_core::rng::keyed_rng;
use cfe_core::strategic::{certify_meanfield, EpsilonRow, EpsilonScan, DEFAULT_GRID};
use cfe_core::{
    classify_synergy, collective_free_energy, compare_exact_meanfield, energy_from_game,
    gibbs_posterior, harsanyi_dividends, reconstruct_values, shapley_from_dividends,
    shapley_monte_carlo, truncate_dividends, verify_gibbs_optimality, EnergyTable, Error,
    PairwiseEnergy, ValueTable,
};
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cli::{DividendsArgs, GibbsArgs, MeanfieldArgs, NashArgs, ShapleyArgs, SolverArgs};
use crate::config::{check_beta, meanfield_options, schedule_name, RunConfig};
use crate::error::{CliError, Result};
use crate::format::{
    json_bytes, read_pairwise, read_table, real, table_csv, CsvBuilder, TableKind,
};
use crate::output::{sha256_hex, Outputs};

/// Default precision grid of the `nash` command.
pub const DEFAULT_NASH_BETAS: [f64; 5] = [1.0, 2.0, 4.0, 8.0, 16.0];

/// Stream tag for random games drawn by `nash --random-agents`.
const RANDOM_GAME_STREAM: u64 = 0x6e61_7368;

/// A finished command, ready to be written.
#[derive(Debug, Clone)]
pub struct Run {
    pub command: &'static str,
    pub out: PathBuf,
    pub parameters: Value,
    pub outputs: Outputs,
}

pub(crate) fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| CliError::Config(format!("missing `{what}` (flag or config field)")))
}

fn file_record(path: &Path) -> Result<Value> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(json!({ "path": path.display().to_string(), "sha256": sha256_hex(&bytes) }))
}

/// Reads a value table and checks `v(∅) = 0` against the file's own line.
pub fn load_game(path: &Path) -> Result<ValueTable> {
    let t = read_table(path, TableKind::Value)?;
    if t.values[0] != 0.0 {
        let msg = format!(
            "value of the empty coalition must be 0, found {}",
            t.values[0]
        );
        return Err(match t.lines[0] {
            0 => CliError::file(path, msg),
            line => CliError::parse(path, line, msg),
        });
    }
    ValueTable::new(t.n_agents, t.values).map_err(|e| CliError::file(path, e.to_string()))
}

pub fn load_energy(path: &Path) -> Result<EnergyTable> {
    let t = read_table(path, TableKind::Energy)?;
    EnergyTable::new(t.n_agents, t.values).map_err(|e| CliError::file(path, e.to_string()))
}

pub fn dividends(a: DividendsArgs, cfg: &RunConfig) -> Result<Run> {
    let input = require(a.input.or_else(|| cfg.input.clone()), "input")?;
    let tol = a
        .synergy_tol
        .or(cfg.synergy_tol)
        .unwrap_or(DEFAULT_SYNERGY_TOL);
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(CliError::Config(
            "synergy_tol must be finite and nonnegative".into(),
        ));
    }
    let max_order = a.max_order.or(cfg.max_order);
    let v = load_game(&input)?;
    let n = v.n_agents();
    if let Some(k) = max_order {
        if k == 0 || k > n {
            return Err(CliError::Config(format!("max_order must lie in 1..={n}")));
        }
    }

    let d = harsanyi_dividends(&v)?;
    let eta = shapley_from_dividends(&d);
    let labels = classify_synergy(&d, tol)?;

    let mut out = Outputs::default();
    let mut csv = CsvBuilder::new(&["mask", "size", "dividend"]);
    for (bits, &x) in d.dividends().iter().enumerate() {
        csv.row([bits.to_string(), bits.count_ones().to_string(), real(x)]);
    }
    out.add("dividends.csv", csv.into_bytes());
    out.add("shapley.csv", shapley_csv(eta.eta(), None));
    let mut csv = CsvBuilder::new(&["mask", "size", "dividend", "label"]);
    for (bits, (&x, label)) in d.dividends().iter().zip(&labels).enumerate() {
        if bits.count_ones() >= 2 {
            csv.row([
                bits.to_string(),
                bits.count_ones().to_string(),
                real(x),
                label.label().to_string(),
            ]);
        }
    }
    out.add("synergy.csv", csv.into_bytes());
    if let Some(k) = max_order {
        let truncated = reconstruct_values(&truncate_dividends(&d, k)?)?;
        out.add(
            "truncated_values.csv",
            table_csv(TableKind::Value, truncated.values()),
        );
    }

    let gap = eta.total() - v.grand_value();
    out.say(format!(
        "dividends: {n} agents, sum of Shapley values {} (grand value {}, gap {gap:.3e})",
        eta.total(),
        v.grand_value()
    ));
    Ok(Run {
        command: "dividends",
        out: out_dir(a.common.out, cfg),
        parameters: json!({
            "input": file_record(&input)?,
            "n_agents": n,
            "synergy_tol": tol,
            "max_order": max_order,
        }),
        outputs: out,
    })
}

fn shapley_csv(eta: &[f64], std_error: Option<&[f64]>) -> Vec<u8> {
    let mut csv = match std_error {
        Some(_) => CsvBuilder::new(&["agent", "shapley", "std_error"]),
        None => CsvBuilder::new(&["agent", "shapley"]),
    };
    for (i, &x) in eta.iter().enumerate() {
        match std_error {
            Some(se) => csv.row([i.to_string(), real(x), real(se[i])]),
            None => csv.row([i.to_string(), real(x)]),
        }
    }
    csv.into_bytes()
}

pub fn shapley(a: ShapleyArgs, cfg: &RunConfig) -> Result<Run> {
    let input = require(a.input.or_else(|| cfg.input.clone()), "input")?;
    let seed = cfg.seed_or(a.common.seed);
    let permutations = a.permutations.or(cfg.permutations);
    let v = load_game(&input)?;
    let mut out = Outputs::default();
    match permutations {
        None => {
            let eta = shapley_from_dividends(&harsanyi_dividends(&v)?);
            out.add("shapley.csv", shapley_csv(eta.eta(), None));
            out.say(format!("shapley: exact values for {} agents", v.n_agents()));
        }
        Some(0) => return Err(CliError::Config("permutations must be at least 1".into())),
        Some(m) => {
            let est = shapley_monte_carlo(|c| Ok::<_, Error>(v.value(c)), v.n_agents(), m, seed)?;
            out.add(
                "shapley.csv",
                shapley_csv(est.shapley.eta(), Some(&est.std_error)),
            );
            let worst = est.std_error.iter().copied().fold(0.0, f64::max);
            out.say(format!(
                "shapley: {m} sampled permutations, largest standard error {worst:.3e}"
            ));
        }
    }
    Ok(Run {
        command: "shapley",
        out: out_dir(a.common.out, cfg),
        parameters: json!({
            "input": file_record(&input)?,
            "n_agents": v.n_agents(),
            "method": if permutations.is_some() { "monte_carlo" } else { "exact" },
            "permutations": permutations,
            "seed": seed,
        }),
        outputs: out,
    })
}

pub fn gibbs(a: GibbsArgs, cfg: &RunConfig) -> Result<Run> {
    let input = require(a.input.or_else(|| cfg.input.clone()), "input")?;
    let beta = check_beta(require(a.beta.or(cfg.beta), "beta")?)?;
    let from_game = a.from_game || cfg.from_game.unwrap_or(false);
    let seed = cfg.seed_or(a.common.seed);
    let trials = a.verify_trials.or(cfg.verify_trials);
    let energy = if from_game {
        energy_from_game(&load_game(&input)?)
    } else {
        load_energy(&input)?
    };
    let n = energy.n_agents();

    let posterior = gibbs_posterior(&energy, beta)?;
    let dist = posterior.distribution();
    let mut out = Outputs::default();
    let mut csv = CsvBuilder::new(&["mask", "probability"]);
    for (bits, &p) in dist.probs().iter().enumerate() {
        csv.row([bits.to_string(), real(p)]);
    }
    out.add("posterior.csv", csv.into_bytes());
    let mut csv = CsvBuilder::new(&["agent", "alpha"]);
    for (i, &m) in posterior.marginals().iter().enumerate() {
        csv.row([i.to_string(), real(m)]);
    }
    out.add("marginals.csv", csv.into_bytes());

    let free_energy = collective_free_energy(dist, &energy, beta)?;
    let neg_log_z_over_beta = posterior.free_energy();
    let expected_energy: f64 = dist
        .probs()
        .iter()
        .zip(energy.energies())
        .map(|(p, e)| p * e)
        .sum();
    let mut summary = json!({
        "beta": beta,
        "n_agents": n,
        "from_game": from_game,
        "log_partition": posterior.log_partition(),
        "neg_log_z_over_beta": neg_log_z_over_beta,
        "free_energy": free_energy,
        "expected_energy": expected_energy,
        "entropy": dist.entropy(),
    });
    if let Some(t) = trials {
        if t == 0 {
            return Err(CliError::Config("verify_trials must be at least 1".into()));
        }
        let report = verify_gibbs_optimality(&energy, beta, t, seed)?;
        summary["optimality"] = json!({
            "trials": report.n_trials,
            "seed": seed,
            "min_gap": report.min_gap,
            "violations": report.violations.len(),
        });
        out.say(format!(
            "gibbs: {t} perturbations, min free-energy gap {:.3e}, {} violations",
            report.min_gap,
            report.violations.len()
        ));
        if !report.is_optimal() {
            out.numeric_failure = Some(format!(
                "{} perturbations undercut the Gibbs free energy",
                report.violations.len()
            ));
        }
    }
    out.add("free_energy.json", json_bytes(&summary));
    out.say(format!(
        "gibbs: {n} agents at beta {beta}, F = {free_energy}, -ln Z / beta = {neg_log_z_over_beta}"
    ));
    Ok(Run {
        command: "gibbs",
        out: out_dir(a.common.out, cfg),
        parameters: json!({
            "input": file_record(&input)?,
            "beta": beta,
            "from_game": from_game,
            "verify_trials": trials,
            "seed": seed,
        }),
        outputs: out,
    })
}

fn solver_options(s: &SolverArgs, cfg: &RunConfig) -> Result<cfe_core::MeanFieldOptions> {
    meanfield_options(
        cfg.meanfield.as_ref(),
        s.tol,
        s.max_iter,
        s.damping,
        s.schedule,
    )
}

fn options_json(o: &cfe_core::MeanFieldOptions) -> Value {
    json!({
        "tol": o.tol,
        "max_iter": o.max_iter,
        "damping": o.damping,
        "schedule": schedule_name(o.schedule),
    })
}

pub fn meanfield(a: MeanfieldArgs, cfg: &RunConfig) -> Result<Run> {
    let path = require(a.pairwise.or_else(|| cfg.pairwise.clone()), "pairwise")?;
    let beta = check_beta(require(a.beta.or(cfg.beta), "beta")?)?;
    let opts = solver_options(&a.solver, cfg)?;
    let e = read_pairwise(&path)?;

    let cmp = compare_exact_meanfield(&e, beta, &opts)?;
    let mut out = Outputs::default();
    let mut csv = CsvBuilder::new(&["agent", "alpha_exact", "alpha_mf", "gap"]);
    for i in 0..e.n_agents() {
        csv.row([
            i.to_string(),
            real(cmp.alpha_exact[i]),
            real(cmp.alpha_mf[i]),
            real(cmp.gaps[i]),
        ]);
    }
    out.add("comparison.csv", csv.into_bytes());
    let weights = attention_weights(&e, &cmp.alpha_mf, beta)?;
    let mut csv = CsvBuilder::new(&["agent", "weight"]);
    for (i, &w) in weights.iter().enumerate() {
        csv.row([i.to_string(), real(w)]);
    }
    out.add("attention.csv", csv.into_bytes());
    let f_mf = meanfield_free_energy(&cmp.alpha_mf, &e, beta)?;
    let f_exact = gibbs_posterior(&e.to_energy_table()?, beta)?.free_energy();
    out.add(
        "meanfield.json",
        json_bytes(&json!({
            "beta": beta,
            "n_agents": e.n_agents(),
            "converged": cmp.converged,
            "iterations": cmp.iterations,
            "max_abs_gap": cmp.max_abs_gap,
            "free_energy_meanfield": f_mf,
            "free_energy_exact": f_exact,
            "options": options_json(&opts),
        })),
    );
    out.say(format!(
        "meanfield: {} agents at beta {beta}, max |alpha_exact - alpha_mf| = {:.3e} after {} iterations",
        e.n_agents(),
        cmp.max_abs_gap,
        cmp.iterations
    ));
    if !cmp.converged {
        out.numeric_failure = Some(format!(
            "mean-field iteration did not converge within {} iterations",
            opts.max_iter
        ));
    }
    Ok(Run {
        command: "meanfield",
        out: out_dir(a.common.out, cfg),
        parameters: json!({
            "pairwise": file_record(&path)?,
            "beta": beta,
            "options": options_json(&opts),
        }),
        outputs: out,
    })
}

/// Seeded pairwise game with fields and couplings uniform on `[-1, 1)`.
pub fn random_pairwise(n_agents: usize, seed: u64) -> Result<PairwiseEnergy> {
    let mut rng = keyed_rng(seed, &[RANDOM_GAME_STREAM, n_agents as u64]);
    let phi: Vec<f64> = (0..n_agents).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut psi = vec![vec![0.0; n_agents]; n_agents];
    for i in 0..n_agents {
        for j in i + 1..n_agents {
            let x = rng.random_range(-1.0..1.0);
            psi[i][j] = x;
            psi[j][i] = x;
        }
    }
    Ok(PairwiseEnergy::new(phi, psi)?)
}

pub fn nash(a: NashArgs, cfg: &RunConfig) -> Result<Run> {
    let seed = cfg.seed_or(a.common.seed);
    let betas = a
        .betas
        .or_else(|| cfg.betas.clone())
        .unwrap_or_else(|| DEFAULT_NASH_BETAS.to_vec());
    for &b in &betas {
        check_beta(b)?;
    }
    if betas.is_empty() || betas.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(
            "betas must be non-empty and strictly ascending".into(),
        ));
    }
    let grid = a.grid.or(cfg.grid).unwrap_or(DEFAULT_GRID);
    if grid < 2 {
        return Err(CliError::Config("grid must have at least 2 points".into()));
    }
    let opts = solver_options(&a.solver, cfg)?;

    let pairwise = a.pairwise.or_else(|| cfg.pairwise.clone());
    let input = a.input.or_else(|| cfg.input.clone());
    let random = a.random_agents.or(cfg.random_agents);
    let (energy, source) = match (pairwise, input, random) {
        (Some(p), None, None) => (
            read_pairwise(&p)?.to_energy_table()?,
            json!({ "pairwise": file_record(&p)? }),
        ),
        (None, Some(p), None) => (load_energy(&p)?, json!({ "input": file_record(&p)? })),
        (None, None, Some(n)) => {
            if n == 0 {
                return Err(CliError::Config("random_agents must be at least 1".into()));
            }
            (
                random_pairwise(n, seed)?.to_energy_table()?,
                json!({ "random_agents": n, "seed": seed }),
            )
        }
        (None, None, None) => {
            return Err(CliError::Config(
                "give one of `pairwise`, `input` or `random_agents`".into(),
            ))
        }
        _ => {
            return Err(CliError::Config(
                "`pairwise`, `input` and `random_agents` are mutually exclusive".into(),
            ))
        }
    };

    let rows = betas
        .par_iter()
        .map(|&b| certify_meanfield(&energy, b, grid, &opts))
        .collect::<std::result::Result<Vec<EpsilonRow>, _>>()?;
    let scan = EpsilonScan { rows };

    let mut out = Outputs::default();
    let mut csv = CsvBuilder::new(&[
        "beta",
        "epsilon",
        "worst_agent",
        "converged",
        "iterations",
        "residual",
    ]);
    for r in &scan.rows {
        csv.row([
            real(r.beta),
            real(r.epsilon),
            r.worst_agent.to_string(),
            r.converged.to_string(),
            r.iterations.to_string(),
            real(r.residual),
        ]);
    }
    out.add("epsilon.csv", csv.into_bytes());
    let rows_json: Vec<Value> = scan
        .rows
        .iter()
        .map(|r| {
            json!({
                "beta": r.beta,
                "epsilon": r.epsilon,
                "worst_agent": r.worst_agent,
                "converged": r.converged,
                "iterations": r.iterations,
                "residual": r.residual,
                "schedule": schedule_name(r.schedule),
            })
        })
        .collect();
    let nonincreasing = scan.rows.windows(2).all(|w| w[1].epsilon <= w[0].epsilon);
    out.add(
        "certificate.json",
        json_bytes(&json!({
            "n_agents": energy.n_agents(),
            "grid": grid,
            "rows": rows_json,
            "max_epsilon": scan.rows.iter().map(|r| r.epsilon).fold(0.0, f64::max),
            "epsilon_nonincreasing": nonincreasing,
            "epsilon_times_beta_range": scan.scaled_range().map(|(lo, hi)| [lo, hi]),
            "all_converged": scan.all_converged(),
        })),
    );
    for r in &scan.rows {
        let note = if r.converged {
            ""
        } else {
            " (mean field not converged)"
        };
        out.say(format!(
            "nash: beta {} epsilon {:.3e} worst agent {}{note}",
            r.beta, r.epsilon, r.worst_agent
        ));
    }
    Ok(Run {
        command: "nash",
        out: out_dir(a.common.out, cfg),
        parameters: json!({
            "source": source,
            "betas": betas,
            "grid": grid,
            "options": options_json(&opts),
        }),
        outputs: out,
    })
}
