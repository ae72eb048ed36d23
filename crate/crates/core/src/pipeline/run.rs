use std::str::FromStr;
use std::time::Instant;

use crate::baselines::{data_aware_lowrank, svd_truncate};
use crate::codec::{pack, to_bf16, unpack, PackedFactorization};
use crate::error::{Error, Result};
use crate::factorizer::{CompressOptions, CompressedFactorization};
use crate::kernels::{apply_compressed, apply_lowrank};
use crate::linalg::DenseMatrix;
use crate::pipeline::group::{compress_group, LayerGroup};
use crate::pipeline::report::RunRecord;
use crate::planner::{plan_lowrank, plan_sparse_grouped, MaskMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Cospadi,
    Svd,
    SvdDataAware,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Cospadi => "cospadi",
            Self::Svd => "svd",
            Self::SvdDataAware => "svd-data-aware",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cospadi" => Ok(Self::Cospadi),
            "svd" => Ok(Self::Svd),
            "svd-data-aware" => Ok(Self::SvdDataAware),
            other => Err(Error::InvalidConfig(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub gamma: f64,
    pub rho: f64,
    pub mask_mode: MaskMode,
    pub truncate_bits: u32,
    pub options: CompressOptions,
}

impl RunConfig {
    pub fn new(method: Method, gamma: f64) -> Self {
        Self {
            method,
            gamma,
            rho: 2.0,
            mask_mode: MaskMode::NoMask,
            truncate_bits: 0,
            options: CompressOptions::default(),
        }
    }
}

/// One compressed layer: name, weights, calibration.
pub type Member<'a> = (&'a str, &'a DenseMatrix, &'a DenseMatrix);

/// Stored form of a compressed unit. Low-rank factors are held at bf16 precision.
#[derive(Debug, Clone, PartialEq)]
pub enum Artifact {
    Sparse(PackedFactorization),
    LowRank { name: String, b: DenseMatrix, c: DenseMatrix },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnitResult {
    pub artifact: Artifact,
    pub records: Vec<RunRecord>,
}

fn round_bf16(m: &DenseMatrix) -> DenseMatrix {
    m.map(|v| to_bf16(v).0.to_f64())
}

fn meta_value<T: FromStr>(p: &PackedFactorization, key: &str) -> Option<T> {
    p.meta.iter().find(|(k, _)| k == key).and_then(|(_, v)| v.parse().ok())
}

/// Compresses a unit (one layer, or a group sharing one dictionary for the
/// sparse method) and reports errors measured on the stored artifact.
pub fn run_unit(members: &[Member<'_>], cfg: &RunConfig) -> Result<UnitResult> {
    if members.is_empty() {
        return Err(Error::InvalidConfig("nothing to compress".into()));
    }
    let start = Instant::now();
    match cfg.method {
        Method::Cospadi => {
            let group = LayerGroup::new(
                members.iter().map(|m| m.0).collect::<Vec<_>>().join("+"),
                members.iter().map(|m| m.0.to_string()).collect(),
                members.iter().map(|m| m.1.clone()).collect(),
                members.iter().map(|m| m.2.clone()).collect(),
            )?;
            let (d1, d2) = members[0].1.shape();
            let plan = plan_sparse_grouped(d1, d2, members.len(), cfg.gamma, cfg.rho, cfg.mask_mode)?;
            let out = compress_group(&group, &plan, &cfg.options)?;
            let (mut packed, _) = pack(&out.factorization, cfg.truncate_bits, cfg.mask_mode)?;
            packed.meta = vec![
                ("gamma_target".into(), cfg.gamma.to_string()),
                ("iterations".into(), out.report.iterations_run.to_string()),
                ("method".into(), cfg.method.as_str().into()),
                ("rho".into(), cfg.rho.to_string()),
                ("seed".into(), cfg.options.seed.to_string()),
            ];
            let elapsed = start.elapsed().as_secs_f64();
            let records = evaluate_sparse(&packed, members, elapsed)?;
            Ok(UnitResult {
                artifact: Artifact::Sparse(packed),
                records,
            })
        }
        Method::Svd | Method::SvdDataAware => {
            if members.len() != 1 {
                return Err(Error::InvalidConfig("layer groups apply to the cospadi method only".into()));
            }
            let (name, w, x) = members[0];
            let plan = plan_lowrank(w.rows(), w.cols(), cfg.gamma)?;
            let r = plan.r.expect("low-rank plans carry a rank");
            let lr = match cfg.method {
                Method::Svd => svd_truncate(w, r)?,
                _ => data_aware_lowrank(w, x, r, cfg.options.damping)?,
            };
            let (b, c) = (round_bf16(&lr.b), round_bf16(&lr.c));
            let elapsed = start.elapsed().as_secs_f64();
            let mut rec = evaluate_lowrank(name, &b, &c, w, x, elapsed)?;
            rec.method = cfg.method.as_str().into();
            rec.gamma_target = Some(cfg.gamma);
            rec.seed = Some(cfg.options.seed);
            Ok(UnitResult {
                artifact: Artifact::LowRank {
                    name: name.to_string(),
                    b,
                    c,
                },
                records: vec![rec],
            })
        }
    }
}

/// Per-layer records for a stored sparse artifact; `members` follow the
/// artifact's layer order.
pub fn evaluate_sparse(packed: &PackedFactorization, members: &[Member<'_>], wall_seconds: f64) -> Result<Vec<RunRecord>> {
    let cf: CompressedFactorization = unpack(packed)?;
    if members.len() != cf.layers.len() {
        return Err(Error::Shape(format!(
            "artifact holds {} layers, {} were supplied",
            cf.layers.len(),
            members.len()
        )));
    }
    let gamma_achieved = 1.0 - packed.accounted_words() as f64 / (cf.d1() * cf.d2()) as f64;
    members
        .iter()
        .enumerate()
        .map(|(i, &(name, w, x))| {
            let codes = cf.layer_codes(i);
            if w.shape() != (cf.d1(), codes.d2()) {
                return Err(Error::Shape(format!(
                    "layer {name:?} is {}x{}, artifact stores {}x{}",
                    w.rows(),
                    w.cols(),
                    cf.d1(),
                    codes.d2()
                )));
            }
            let reference = x.matmul(w)?;
            let (y, count) = apply_compressed(x, &cf.dictionary, &codes)?;
            let act = y.sub(&reference)?.frobenius_norm();
            let approx = codes.reconstruct(&cf.dictionary)?;
            Ok(RunRecord {
                name: name.to_string(),
                method: meta_value(packed, "method").unwrap_or_else(|| "cospadi".into()),
                seed: meta_value(packed, "seed"),
                gamma_target: meta_value(packed, "gamma_target"),
                gamma_achieved,
                rho: meta_value(packed, "rho"),
                k: Some(cf.k()),
                s: Some(cf.s()),
                r: None,
                activation_error_fro: act,
                relative_activation_error: relative(act, reference.frobenius_norm()),
                weight_error_fro: w.sub(&approx)?.frobenius_norm(),
                k_active: count.k_active,
                multiply_count: count.total,
                iterations: meta_value(packed, "iterations"),
                wall_seconds,
            })
        })
        .collect()
}

pub fn evaluate_lowrank(
    name: &str,
    b: &DenseMatrix,
    c: &DenseMatrix,
    w: &DenseMatrix,
    x: &DenseMatrix,
    wall_seconds: f64,
) -> Result<RunRecord> {
    let r = b.cols();
    if b.rows() != w.rows() || c.cols() != w.cols() || c.rows() != r {
        return Err(Error::Shape(format!(
            "factors {}x{} and {}x{} do not match layer {name:?} of {}x{}",
            b.rows(),
            b.cols(),
            c.rows(),
            c.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let reference = x.matmul(w)?;
    let (y, count) = apply_lowrank(x, b, c)?;
    let act = y.sub(&reference)?.frobenius_norm();
    let approx = b.matmul(c)?;
    Ok(RunRecord {
        name: name.to_string(),
        method: "lowrank".into(),
        seed: None,
        gamma_target: None,
        gamma_achieved: crate::planner::lowrank_ratio(w.rows(), w.cols(), r),
        rho: None,
        k: None,
        s: None,
        r: Some(r),
        activation_error_fro: act,
        relative_activation_error: relative(act, reference.frobenius_norm()),
        weight_error_fro: w.sub(&approx)?.frobenius_norm(),
        k_active: 0,
        multiply_count: count.total,
        iterations: None,
        wall_seconds,
    })
}

fn relative(err: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        err / reference
    } else if err == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}
