//! Budget planning: target compression ratio to `(k, s)` or rank `r`, plus
//! exact 16-bit word accounting.
//!
//! Storage, in 16-bit words, for a `d1 × d2` matrix:
//!
//! | mode      | words                                  |
//! |-----------|----------------------------------------|
//! | with_mask | `d1·k + s·d2 + ceil(k·d2 / 16)`         |
//! | no_mask   | `d1·k + s·d2`                          |
//! | low-rank  | `r·(d1 + d2)`                          |
//!
//! For grouped (cross-layer) plans `d2` is the concatenated width
//! `group_size × d2_per_layer`; the dictionary is counted once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    WithMask,
    #[default]
    NoMask,
}

impl MaskMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MaskMode::WithMask => "with_mask",
            MaskMode::NoMask => "no_mask",
        }
    }
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with_mask" => Ok(Self::WithMask),
            "no_mask" => Ok(Self::NoMask),
            other => Err(Error::InvalidConfig(format!("unknown mask mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Sparse,
    LowRank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingPlan {
    pub kind: PlanKind,
    pub d1: usize,
    /// Total column count the plan is sized against (concatenated for groups).
    pub d2: usize,
    pub group_size: usize,
    pub gamma_target: f64,
    pub rho: Option<f64>,
    pub mask_mode: Option<MaskMode>,
    pub k: Option<usize>,
    pub s: Option<usize>,
    /// Rank of the plan (low-rank) or of its equal-budget low-rank twin (sparse).
    pub r: Option<usize>,
    pub gamma_achieved: f64,
    pub stored_words: u64,
}

impl SizingPlan {
    /// `(k, s)` of a sparse plan.
    pub fn sparse_sizes(&self) -> Option<(usize, usize)> {
        Some((self.k?, self.s?))
    }

    pub fn d2_per_layer(&self) -> usize {
        self.d2 / self.group_size
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("compression ratio must be in (0, 1), got {gamma}")))
    }
}

fn check_dims(d1: usize, d2: usize) -> Result<()> {
    if d1 == 0 || d2 == 0 {
        return Err(Error::InvalidConfig(format!("dimensions must be positive, got {d1}x{d2}")));
    }
    Ok(())
}

/// Real-valued dictionary width solving the storage equation at ratio `gamma`.
pub fn unfloored_dictionary_width(d1: usize, d2: usize, gamma: f64, rho: f64, mode: MaskMode) -> f64 {
    let (d1f, d2f) = (d1 as f64, d2 as f64);
    let denom = match mode {
        MaskMode::WithMask => d1f + d2f / rho + d2f / 16.0,
        MaskMode::NoMask => d1f + d2f / rho,
    };
    (1.0 - gamma) * d1f * d2f / denom
}

/// Real-valued rank at ratio `gamma`.
pub fn unfloored_rank(d1: usize, d2: usize, gamma: f64) -> f64 {
    (1.0 - gamma) * d1 as f64 * d2 as f64 / (d1 + d2) as f64
}

/// Storage ratio of a sparse factorization, evaluated with the real-valued
/// mask term `k·d2/16`.
pub fn sparse_ratio(d1: usize, d2: usize, k: usize, s: usize, mode: MaskMode) -> f64 {
    let (d1f, d2f) = (d1 as f64, d2 as f64);
    let mut words = d1f * k as f64 + s as f64 * d2f;
    if mode == MaskMode::WithMask {
        words += k as f64 * d2f / 16.0;
    }
    1.0 - words / (d1f * d2f)
}

pub fn lowrank_ratio(d1: usize, d2: usize, r: usize) -> f64 {
    1.0 - (r * (d1 + d2)) as f64 / (d1 as f64 * d2 as f64)
}

/// Packed mask size in 16-bit words.
pub fn mask_words(k: usize, d2: usize) -> u64 {
    ((k * d2) as u64).div_ceil(16)
}

/// Exact 16-bit word count for a dictionary, `values` stored coefficients and
/// (optionally) the mask.
pub fn sparse_words(d1: usize, d2: usize, k: usize, values: usize, mode: MaskMode) -> u64 {
    let base = (d1 * k + values) as u64;
    match mode {
        MaskMode::WithMask => base + mask_words(k, d2),
        MaskMode::NoMask => base,
    }
}

pub fn plan_sparse(d1: usize, d2: usize, gamma: f64, rho: f64, mode: MaskMode) -> Result<SizingPlan> {
    plan_sparse_grouped(d1, d2, 1, gamma, rho, mode)
}

/// Sparse plan for `group_size` layers of width `d2_per_layer` sharing one dictionary.
///
/// The sparsity `s = floor(k*/ρ)` is floored first from the real-valued width
/// `k*`, then `k = floor(ρ·s)`; this keeps `k/s = ρ` exactly for integer `ρ`.
pub fn plan_sparse_grouped(
    d1: usize,
    d2_per_layer: usize,
    group_size: usize,
    gamma: f64,
    rho: f64,
    mode: MaskMode,
) -> Result<SizingPlan> {
    check_gamma(gamma)?;
    check_dims(d1, d2_per_layer)?;
    if group_size == 0 {
        return Err(Error::InvalidConfig("group size must be >= 1".into()));
    }
    if !(rho >= 1.0 && rho.is_finite()) {
        return Err(Error::InvalidConfig(format!("k/s ratio must be >= 1, got {rho}")));
    }
    let d2 = d2_per_layer * group_size;
    let k_real = unfloored_dictionary_width(d1, d2, gamma, rho, mode);
    let s = (k_real / rho).floor() as usize;
    let k = (rho * s as f64).floor() as usize;
    if s == 0 || k == 0 {
        return Err(Error::BudgetTooSmall(format!(
            "d1={d1} d2={d2} gamma={gamma} rho={rho} gives k*={k_real:.3}, s={s}"
        )));
    }
    let r = unfloored_rank(d1, d2, gamma).floor() as usize;
    Ok(SizingPlan {
        kind: PlanKind::Sparse,
        d1,
        d2,
        group_size,
        gamma_target: gamma,
        rho: Some(rho),
        mask_mode: Some(mode),
        k: Some(k),
        s: Some(s),
        r: (r > 0).then_some(r),
        gamma_achieved: sparse_ratio(d1, d2, k, s, mode),
        stored_words: sparse_words(d1, d2, k, s * d2, mode),
    })
}

pub fn plan_lowrank(d1: usize, d2: usize, gamma: f64) -> Result<SizingPlan> {
    check_gamma(gamma)?;
    check_dims(d1, d2)?;
    let r = unfloored_rank(d1, d2, gamma).floor() as usize;
    if r == 0 {
        return Err(Error::BudgetTooSmall(format!(
            "d1={d1} d2={d2} gamma={gamma} leaves rank 0"
        )));
    }
    Ok(SizingPlan {
        kind: PlanKind::LowRank,
        d1,
        d2,
        group_size: 1,
        gamma_target: gamma,
        rho: None,
        mask_mode: None,
        k: None,
        s: None,
        r: Some(r),
        gamma_achieved: lowrank_ratio(d1, d2, r),
        stored_words: (r * (d1 + d2)) as u64,
    })
}

/// Payload size in bytes (two per 16-bit word), excluding any container header.
pub fn account_bytes(plan: &SizingPlan) -> u64 {
    2 * plan.stored_words
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_examples() {
        let p = plan_sparse(4096, 8192, 0.2, 2.0, MaskMode::NoMask).unwrap();
        assert_eq!(p.sparse_sizes(), Some((3276, 1638)));
        let p = plan_sparse(11008, 4096, 0.2, 2.0, MaskMode::NoMask).unwrap();
        assert_eq!(p.sparse_sizes(), Some((2762, 1381)));
        let p = plan_sparse(4096, 4096, 0.5, 2.0, MaskMode::NoMask).unwrap();
        assert_eq!(p.sparse_sizes(), Some((1364, 682)));
    }

    #[test]
    fn with_mask_example() {
        // k* = 0.8·4096² / (4096 + 2048 + 256) = 2097.152 → s = 1048, k = 2096.
        let p = plan_sparse(4096, 4096, 0.2, 2.0, MaskMode::WithMask).unwrap();
        assert_eq!(p.sparse_sizes(), Some((2096, 1048)));
        assert!(p.gamma_achieved >= 0.2);
        assert_eq!(p.stored_words, 4096 * 2096 + 1048 * 4096 + 2096 * 4096 / 16);
    }

    #[test]
    fn grouped_plan_sizes_against_concatenation() {
        let p = plan_sparse_grouped(4096, 4096, 2, 0.2, 2.0, MaskMode::NoMask).unwrap();
        assert_eq!(p.sparse_sizes(), Some((3276, 1638)));
        assert_eq!(p.d2, 8192);
        assert_eq!(p.d2_per_layer(), 4096);
    }

    #[test]
    fn lowrank_examples() {
        assert_eq!(plan_lowrank(4096, 4096, 0.5).unwrap().r, Some(1024));
        assert_eq!(plan_lowrank(4096, 4096, 0.2).unwrap().r, Some(1638));
        let (d1, d2) = (4096usize, 11008usize);
        let p = plan_lowrank(d1, d2, 1.0 / (d1 * d2) as f64).unwrap();
        assert_eq!(p.r, Some((d1 * d2 - 1) / (d1 + d2)));
        assert_eq!(p.r, Some(2985));
    }

    #[test]
    fn account_bytes_hand_counts() {
        let mut p = plan_sparse(4, 4, 0.1, 2.0, MaskMode::WithMask).unwrap();
        p.k = Some(2);
        p.s = Some(1);
        p.stored_words = sparse_words(4, 4, 2, 4, MaskMode::WithMask);
        assert_eq!(account_bytes(&p), 26);
        p.stored_words = sparse_words(4, 4, 2, 4, MaskMode::NoMask);
        assert_eq!(account_bytes(&p), 24);
    }

    #[test]
    fn rejects_degenerate_budgets() {
        assert!(matches!(
            plan_sparse(4, 4, 0.99, 2.0, MaskMode::WithMask),
            Err(Error::BudgetTooSmall(_))
        ));
        assert!(matches!(plan_lowrank(2, 2, 0.9), Err(Error::BudgetTooSmall(_))));
        assert!(matches!(
            plan_sparse(8, 8, 1.0, 2.0, MaskMode::NoMask),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            plan_sparse(8, 8, 0.3, 0.5, MaskMode::NoMask),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn coo_storage_matches_dense_codes_at_rho_two() {
        for k in (2..2000).step_by(2) {
            let s = k / 2;
            let d2 = 37;
            assert_eq!(2 * s * d2, k * d2);
        }
    }
}
