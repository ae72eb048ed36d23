//! Sparse dictionary factorization: OMP coding, K-SVD, and the end-to-end
//! activation-aware compression of one weight matrix.

mod codes;
mod ksvd;
mod omp;

pub use codes::{Dictionary, DictionarySpace, SparseCodes, SparseColumn};
pub use ksvd::{
    ksvd_fit, FactorizeReport, InitStrategy, KsvdConfig, KsvdOutput, DEFAULT_ITERS,
    DEFAULT_POWER_ITERS, DEFAULT_TOL,
};
pub use omp::{omp_encode, sparse_code_all, OmpEncoder, DEPENDENCE_TOL, RESIDUAL_STOP};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::planner::{MaskMode, PlanKind, SizingPlan};
use crate::whitening::{dewhiten_dictionary, fit_whitener, whiten_weights, WhitenMethod, WhitenTransform};

/// Column range of one layer inside a (possibly grouped) factorization.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlice {
    pub name: String,
    pub cols: usize,
}

/// Activation-space dictionary `D_a` with its sparse codes; the unit that is
/// packed and serialized.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedFactorization {
    pub dictionary: DenseMatrix,
    pub codes: SparseCodes,
    pub mask_mode: MaskMode,
    /// Member layers in column order. A single-layer factorization has one entry.
    pub layers: Vec<LayerSlice>,
}

impl CompressedFactorization {
    pub fn new(dictionary: DenseMatrix, codes: SparseCodes, mask_mode: MaskMode, name: &str) -> Result<Self> {
        let d2 = codes.d2();
        Self::with_layers(
            dictionary,
            codes,
            mask_mode,
            vec![LayerSlice {
                name: name.to_string(),
                cols: d2,
            }],
        )
    }

    pub fn with_layers(
        dictionary: DenseMatrix,
        codes: SparseCodes,
        mask_mode: MaskMode,
        layers: Vec<LayerSlice>,
    ) -> Result<Self> {
        if dictionary.cols() != codes.k() {
            return Err(Error::Shape(format!(
                "dictionary has {} atoms, codes reference {}",
                dictionary.cols(),
                codes.k()
            )));
        }
        if layers.iter().map(|l| l.cols).sum::<usize>() != codes.d2() {
            return Err(Error::Shape("layer slices do not cover the code columns".into()));
        }
        Ok(Self {
            dictionary,
            codes,
            mask_mode,
            layers,
        })
    }

    pub fn d1(&self) -> usize {
        self.dictionary.rows()
    }

    pub fn d2(&self) -> usize {
        self.codes.d2()
    }

    pub fn k(&self) -> usize {
        self.codes.k()
    }

    pub fn s(&self) -> usize {
        self.codes.sparsity()
    }

    /// `W̃ = D_a S`.
    pub fn reconstruct(&self) -> DenseMatrix {
        self.codes
            .reconstruct(&self.dictionary)
            .expect("shapes validated on construction")
    }

    /// Codes of one member layer.
    pub fn layer_codes(&self, index: usize) -> SparseCodes {
        let start: usize = self.layers[..index].iter().map(|l| l.cols).sum();
        self.codes.slice_columns(start, start + self.layers[index].cols)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressOptions {
    pub whiten: WhitenMethod,
    pub damping: f64,
    pub iters: usize,
    pub power_iters: usize,
    pub init: InitStrategy,
    pub seed: u64,
    pub tol: f64,
}

impl Default for CompressOptions {
    fn default() -> Self {
        Self {
            whiten: WhitenMethod::Cholesky,
            damping: 0.0,
            iters: DEFAULT_ITERS,
            power_iters: DEFAULT_POWER_ITERS,
            init: InitStrategy::ColumnSample,
            seed: 0,
            tol: DEFAULT_TOL,
        }
    }
}

impl CompressOptions {
    pub fn ksvd_config(&self, k: usize, s: usize) -> KsvdConfig {
        KsvdConfig {
            k,
            s,
            iters: self.iters,
            power_iters: self.power_iters,
            init: self.init,
            seed: self.seed,
            tol: self.tol,
            record_steps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCompression {
    pub factorization: CompressedFactorization,
    /// Whitened dictionary `D_L`, kept for diagnostics.
    pub whitened_dictionary: Dictionary,
    pub report: FactorizeReport,
}

/// Whitens `w` with calibration `x`, learns `D_L` and `S` by K-SVD, and
/// returns the de-whitened dictionary `D_a = L⁻¹ D_L` with `S`.
pub fn compress_layer(
    w: &DenseMatrix,
    x: &DenseMatrix,
    plan: &SizingPlan,
    options: &CompressOptions,
) -> Result<LayerCompression> {
    if x.cols() != w.rows() {
        return Err(Error::Shape(format!(
            "calibration is {}x{} but weights are {}x{}",
            x.rows(),
            x.cols(),
            w.rows(),
            w.cols()
        )));
    }
    let transform = fit_whitener(x, options.whiten, options.damping)?;
    compress_whitened(&transform, w, plan, options)
}

/// [`compress_layer`] with an already fitted transform.
pub fn compress_whitened(
    transform: &WhitenTransform,
    w: &DenseMatrix,
    plan: &SizingPlan,
    options: &CompressOptions,
) -> Result<LayerCompression> {
    let (k, s) = match (plan.kind, plan.sparse_sizes()) {
        (PlanKind::Sparse, Some(ks)) => ks,
        _ => return Err(Error::InvalidConfig("compress_layer needs a sparse plan".into())),
    };
    if plan.d1 != w.rows() || plan.d2 != w.cols() {
        return Err(Error::Shape(format!(
            "plan sized for {}x{}, weights are {}x{}",
            plan.d1,
            plan.d2,
            w.rows(),
            w.cols()
        )));
    }
    let w_l = whiten_weights(transform, w)?;
    let fit = ksvd_fit(&w_l, &options.ksvd_config(k, s))?;
    let d_a = dewhiten_dictionary(transform, &fit.dictionary.atoms)?;
    let factorization = CompressedFactorization::new(
        d_a,
        fit.codes,
        plan.mask_mode.unwrap_or_default(),
        "layer",
    )?;
    Ok(LayerCompression {
        factorization,
        whitened_dictionary: fit.dictionary,
        report: fit.report,
    })
}

/// `‖XW − X·approx‖_F`.
pub fn activation_error(x: &DenseMatrix, w: &DenseMatrix, approx: &DenseMatrix) -> Result<f64> {
    Ok(x.matmul(&w.sub(approx)?)?.frobenius_norm())
}
