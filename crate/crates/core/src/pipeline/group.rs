use crate::error::{Error, Result};
use crate::factorizer::{
    activation_error, compress_whitened, CompressOptions, CompressedFactorization, FactorizeReport, LayerSlice,
};
use crate::linalg::DenseMatrix;
use crate::planner::SizingPlan;
use crate::whitening::fit_whitener;

/// Layers sharing one dictionary. Weights are concatenated horizontally and
/// calibration batches stacked vertically, both in member order.
#[derive(Debug, Clone)]
pub struct LayerGroup {
    pub group_id: String,
    pub members: Vec<String>,
    pub weights: Vec<DenseMatrix>,
    pub calibration: Vec<DenseMatrix>,
}

impl LayerGroup {
    pub fn new(
        group_id: impl Into<String>,
        members: Vec<String>,
        weights: Vec<DenseMatrix>,
        calibration: Vec<DenseMatrix>,
    ) -> Result<Self> {
        let g = Self {
            group_id: group_id.into(),
            members,
            weights,
            calibration,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn group_size(&self) -> usize {
        self.members.len()
    }

    fn validate(&self) -> Result<()> {
        let n = self.members.len();
        if n == 0 || self.weights.len() != n || self.calibration.len() != n {
            return Err(Error::GroupShape(format!(
                "group {:?} has {} names, {} weights, {} calibration batches",
                self.group_id,
                n,
                self.weights.len(),
                self.calibration.len()
            )));
        }
        let w_shape = self.weights[0].shape();
        let x_shape = self.calibration[0].shape();
        for (name, (w, x)) in self.members.iter().zip(self.weights.iter().zip(&self.calibration)) {
            if w.shape() != w_shape {
                return Err(Error::GroupShape(format!(
                    "layer {name:?} is {}x{}, group expects {}x{}",
                    w.rows(),
                    w.cols(),
                    w_shape.0,
                    w_shape.1
                )));
            }
            if x.shape() != x_shape || x.cols() != w.rows() {
                return Err(Error::GroupShape(format!(
                    "calibration for {name:?} is {}x{}, group expects {}x{}",
                    x.rows(),
                    x.cols(),
                    x_shape.0,
                    w_shape.0
                )));
            }
        }
        Ok(())
    }

    pub fn stacked_weights(&self) -> DenseMatrix {
        DenseMatrix::hstack(&self.weights.iter().collect::<Vec<_>>()).expect("validated shapes")
    }

    pub fn stacked_calibration(&self) -> DenseMatrix {
        DenseMatrix::vstack(&self.calibration.iter().collect::<Vec<_>>()).expect("validated shapes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCompression {
    /// Shared `D_a` and the concatenated codes `S_G`, one layer slice per member.
    pub factorization: CompressedFactorization,
    pub report: FactorizeReport,
    /// `‖X_ℓ W_ℓ − X_ℓ D_a S_ℓ‖_F` per member.
    pub layer_errors: Vec<f64>,
}

pub fn compress_group(g: &LayerGroup, plan: &SizingPlan, options: &CompressOptions) -> Result<GroupCompression> {
    g.validate()?;
    if plan.group_size != g.group_size() {
        return Err(Error::GroupShape(format!(
            "plan sized for {} layers, group has {}",
            plan.group_size,
            g.group_size()
        )));
    }
    let w_g = g.stacked_weights();
    let x_g = g.stacked_calibration();
    let transform = fit_whitener(&x_g, options.whiten, options.damping)?;
    let out = compress_whitened(&transform, &w_g, plan, options)?;
    let layers = g
        .members
        .iter()
        .zip(&g.weights)
        .map(|(name, w)| LayerSlice {
            name: name.clone(),
            cols: w.cols(),
        })
        .collect();
    let cf = out.factorization;
    let factorization = CompressedFactorization::with_layers(cf.dictionary, cf.codes, cf.mask_mode, layers)?;
    let layer_errors = (0..g.group_size())
        .map(|i| {
            let approx = factorization.layer_codes(i).reconstruct(&factorization.dictionary)?;
            activation_error(&g.calibration[i], &g.weights[i], &approx)
        })
        .collect::<Result<_>>()?;
    Ok(GroupCompression {
        factorization,
        report: out.report,
        layer_errors,
    })
}
