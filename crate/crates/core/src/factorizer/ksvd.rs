use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factorizer::codes::{Dictionary, DictionarySpace, SparseCodes, SparseColumn};
use crate::factorizer::omp::{encode_columns, OmpEncoder};
use crate::linalg::{dot, norm, rank1_svd_power, thin_svd, DenseMatrix};

pub const DEFAULT_ITERS: usize = 60;
pub const DEFAULT_POWER_ITERS: usize = 8;
pub const DEFAULT_TOL: f64 = 1e-7;

/// Cosine above which two sampled columns count as the same direction.
const PARALLEL_COSINE: f64 = 1.0 - 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// `k` distinct columns of the target, normalized.
    #[default]
    ColumnSample,
    Gaussian,
    /// Leading left singular vectors of the target.
    SvdBased,
}

impl std::str::FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "column_sample" => Ok(Self::ColumnSample),
            "gaussian" => Ok(Self::Gaussian),
            "svd_based" => Ok(Self::SvdBased),
            other => Err(Error::InvalidConfig(format!("unknown init strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsvdConfig {
    pub k: usize,
    pub s: usize,
    pub iters: usize,
    pub power_iters: usize,
    pub init: InitStrategy,
    pub seed: u64,
    /// Stop once the relative objective improvement of an iteration drops below this.
    pub tol: f64,
    /// Record the objective after every coding step and every atom update.
    pub record_steps: bool,
}

impl KsvdConfig {
    pub fn new(k: usize, s: usize) -> Self {
        Self {
            k,
            s,
            iters: DEFAULT_ITERS,
            power_iters: DEFAULT_POWER_ITERS,
            init: InitStrategy::default(),
            seed: 0,
            tol: DEFAULT_TOL,
            record_steps: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactorizeReport {
    /// Objective at initialization, before any coefficients exist: `‖W_L‖_F`.
    pub initial_objective: f64,
    /// `‖W_L − D_L S‖_F` after the first sparse-coding pass on the initial dictionary.
    pub first_coding_objective: f64,
    /// `‖W_L − D_L S‖_F` at the end of every iteration.
    pub objective_per_iter: Vec<f64>,
    /// Objective after each coding pass and each atom update, when requested.
    pub step_objectives: Vec<f64>,
    pub iterations_run: usize,
    pub atoms_replaced: usize,
    pub converged: bool,
}

impl FactorizeReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_per_iter
            .last()
            .copied()
            .unwrap_or(self.initial_objective)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KsvdOutput {
    pub dictionary: Dictionary,
    pub codes: SparseCodes,
    pub report: FactorizeReport,
}

fn unit_gaussian(d1: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d1).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|t| *t /= n);
            return v;
        }
    }
}

fn initial_atoms(w: &DenseMatrix, cfg: &KsvdConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let (d1, d2) = w.shape();
    let mut atoms: Vec<Vec<f64>> = Vec::with_capacity(cfg.k);
    match cfg.init {
        InitStrategy::ColumnSample => {
            // Columns in random order; zero columns and columns parallel to an
            // atom already taken are passed over.
            for j in sample(rng, d2, d2).into_iter() {
                if atoms.len() == cfg.k {
                    break;
                }
                let mut c = w.col(j);
                let n = norm(&c);
                if n == 0.0 {
                    continue;
                }
                c.iter_mut().for_each(|t| *t /= n);
                if atoms.iter().any(|a| dot(a, &c).abs() >= PARALLEL_COSINE) {
                    continue;
                }
                atoms.push(c);
            }
        }
        InitStrategy::Gaussian => {}
        InitStrategy::SvdBased => {
            let svd = thin_svd(w)?;
            for c in 0..cfg.k.min(svd.rank()) {
                atoms.push(svd.u.col(c));
            }
        }
    }
    while atoms.len() < cfg.k {
        atoms.push(unit_gaussian(d1, rng));
    }
    Ok(atoms)
}

fn residual_of(w: &[f64], atoms: &[Vec<f64>], code: &SparseColumn) -> Vec<f64> {
    let mut r = w.to_vec();
    for (&i, &v) in code.support.iter().zip(&code.values) {
        for (t, &a) in r.iter_mut().zip(&atoms[i]) {
            *t -= v * a;
        }
    }
    r
}

fn total_norm(residuals: &[Vec<f64>]) -> f64 {
    residuals.iter().map(|r| dot(r, r)).sum::<f64>().sqrt()
}

fn atoms_matrix(atoms: &[Vec<f64>]) -> DenseMatrix {
    DenseMatrix::from_columns(atoms)
}

/// Sets (or removes, when zero) the coefficient of `atom` in `code`.
fn set_coefficient(code: &mut SparseColumn, atom: usize, value: f64) {
    match code.support.binary_search(&atom) {
        Ok(pos) if value == 0.0 => {
            code.support.remove(pos);
            code.values.remove(pos);
        }
        Ok(pos) => code.values[pos] = value,
        Err(pos) if value != 0.0 => {
            code.support.insert(pos, atom);
            code.values.insert(pos, value);
        }
        Err(_) => {}
    }
}

/// K-SVD on the (whitened) target `w_l`: alternate OMP coding of all columns
/// with sequential rank-1 updates of each atom restricted to its support.
///
/// Two acceptance rules keep the objective non-increasing: a column keeps its
/// previous code when the fresh OMP code fits worse, and an atom keeps its
/// previous direction when the power-iteration estimate captures less energy
/// of the restricted residual.
pub fn ksvd_fit(w_l: &DenseMatrix, cfg: &KsvdConfig) -> Result<KsvdOutput> {
    if cfg.k == 0 || cfg.s == 0 || cfg.s > cfg.k {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= s <= k, got k={} s={}",
            cfg.k, cfg.s
        )));
    }
    if cfg.iters == 0 || cfg.power_iters == 0 {
        return Err(Error::InvalidConfig("iteration counts must be >= 1".into()));
    }
    let (d1, d2) = w_l.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    if w_l.is_zero() {
        let atoms: Vec<Vec<f64>> = (0..cfg.k).map(|_| unit_gaussian(d1, &mut rng)).collect();
        return Ok(KsvdOutput {
            dictionary: Dictionary::new(atoms_matrix(&atoms), DictionarySpace::Whitened),
            codes: SparseCodes::empty(cfg.k, d2, cfg.s),
            report: FactorizeReport {
                converged: true,
                ..FactorizeReport::default()
            },
        });
    }

    let targets: Vec<Vec<f64>> = (0..d2).map(|j| w_l.col(j)).collect();
    let target_norm = w_l.frobenius_norm();
    let mut atoms = initial_atoms(w_l, cfg, &mut rng)?;
    let mut codes: Vec<SparseColumn> = vec![SparseColumn::default(); d2];
    let mut residuals: Vec<Vec<f64>> = targets.clone();
    let mut report = FactorizeReport {
        initial_objective: target_norm,
        ..FactorizeReport::default()
    };

    for iter in 0..cfg.iters {
        // Sparse coding.
        let encoder = OmpEncoder::new(&atoms_matrix(&atoms));
        let fresh = encode_columns(&encoder, w_l, cfg.s);
        for (j, code) in fresh.into_iter().enumerate() {
            let old = residual_of(&targets[j], &atoms, &codes[j]);
            let new = residual_of(&targets[j], &atoms, &code);
            if dot(&new, &new) <= dot(&old, &old) {
                codes[j] = code;
                residuals[j] = new;
            } else {
                residuals[j] = old;
            }
        }
        if iter == 0 {
            report.first_coding_objective = total_norm(&residuals);
        }
        if cfg.record_steps {
            report.step_objectives.push(total_norm(&residuals));
        }

        // Atom users: (column, coefficient) pairs per atom.
        let mut users: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cfg.k];
        for (j, code) in codes.iter().enumerate() {
            for (&i, &v) in code.support.iter().zip(&code.values) {
                users[i].push((j, v));
            }
        }

        let replaced_before = report.atoms_replaced;
        let mut replacement_taken = vec![false; d2];
        for i in 0..cfg.k {
            if users[i].is_empty() {
                // Dead atom: restart from the worst-fit column not yet used this round.
                let candidate = (0..d2)
                    .filter(|&j| !replacement_taken[j])
                    .map(|j| (j, dot(&residuals[j], &residuals[j])))
                    .fold(None::<(usize, f64)>, |best, (j, e)| match best {
                        Some((_, b)) if b >= e => best,
                        _ => Some((j, e)),
                    });
                if let Some((j, e)) = candidate {
                    let n = norm(&targets[j]);
                    if e > 0.0 && n > 0.0 {
                        atoms[i] = targets[j].iter().map(|t| t / n).collect();
                        replacement_taken[j] = true;
                        report.atoms_replaced += 1;
                    }
                }
                if cfg.record_steps {
                    report.step_objectives.push(total_norm(&residuals));
                }
                continue;
            }

            let support = &users[i];
            let mut restricted = DenseMatrix::zeros(d1, support.len());
            for (c, &(j, x)) in support.iter().enumerate() {
                for r in 0..d1 {
                    restricted[(r, c)] = residuals[j][r] + x * atoms[i][r];
                }
            }
            let current_best = restricted.mat_t_vec(&atoms[i]);
            let (atom, coeffs) = match rank1_svd_power(&restricted, cfg.power_iters) {
                Ok((u, sigma, v)) if sigma * sigma >= dot(&current_best, &current_best) => {
                    (u, v.into_iter().map(|t| sigma * t).collect::<Vec<_>>())
                }
                Ok(_) => (atoms[i].clone(), current_best),
                Err(Error::ZeroResidual) => (atoms[i].clone(), vec![0.0; support.len()]),
                Err(e) => return Err(e),
            };
            for (c, &(j, _)) in support.iter().enumerate() {
                let g = coeffs[c];
                for r in 0..d1 {
                    residuals[j][r] = restricted[(r, c)] - g * atom[r];
                }
                set_coefficient(&mut codes[j], i, g);
            }
            atoms[i] = atom;
            if cfg.record_steps {
                report.step_objectives.push(total_norm(&residuals));
            }
        }

        // Refresh residuals from scratch so rounding does not accumulate.
        for j in 0..d2 {
            residuals[j] = residual_of(&targets[j], &atoms, &codes[j]);
        }
        let objective = total_norm(&residuals);
        let previous = report
            .objective_per_iter
            .last()
            .copied()
            .unwrap_or(report.first_coding_objective);
        report.objective_per_iter.push(objective);
        report.iterations_run = iter + 1;
        // A round that restarted dead atoms has not yet used them; keep going.
        let restarted = report.atoms_replaced > replaced_before;
        if objective <= f64::EPSILON * target_norm
            || (!restarted && previous - objective <= cfg.tol * previous)
        {
            report.converged = true;
            break;
        }
    }

    let codes = SparseCodes::from_columns(cfg.k, cfg.s, codes)?;
    Ok(KsvdOutput {
        dictionary: Dictionary::new(atoms_matrix(&atoms), DictionarySpace::Whitened),
        codes,
        report,
    })
}
