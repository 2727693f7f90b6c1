//! Offline meta-initialization.
//!
//! For each block the inner step maps a shared initialization `phi` to
//! `phi - alpha (z_tr z_tr^T phi - z_tr x_tr^T)`, and the outer objective sums
//! the test losses of the adapted parameters. The objective is the quadratic
//! `1/2 ||W_tilde - Z^T phi||_F^2`, so its minimizer has a closed form through
//! the pseudo-inverse of `Z^T`.

use crate::error::{Error, Result};
use crate::model::{BlockTrajectory, SystemParams};
use crate::numerics::{default_rcond, pinv, power_iteration, Mat};

/// Offline blocks with their generating parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaDataset {
    blocks: Vec<BlockTrajectory>,
    params: Vec<SystemParams>,
}

impl MetaDataset {
    /// All blocks must share `n`, `m`, the horizon and the train length.
    pub fn new(blocks: Vec<BlockTrajectory>, params: Vec<SystemParams>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| Error::Contract("dataset needs at least one block".into()))?;
        if params.len() != blocks.len() {
            return Err(Error::Dimension(format!(
                "{} blocks but {} parameter sets",
                blocks.len(),
                params.len()
            )));
        }
        let shape = (first.n(), first.m(), first.horizon(), first.train_len);
        for (b, p) in blocks.iter().zip(&params) {
            if (b.n(), b.m(), b.horizon(), b.train_len) != shape || (p.n(), p.m()) != (shape.0, shape.1) {
                return Err(Error::Dimension(
                    "blocks must share n, m, horizon and train length".into(),
                ));
            }
        }
        Ok(Self { blocks, params })
    }

    pub fn blocks(&self) -> &[BlockTrajectory] {
        &self.blocks
    }

    pub fn params(&self) -> &[SystemParams] {
        &self.params
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n(&self) -> usize {
        self.blocks[0].n()
    }

    pub fn m(&self) -> usize {
        self.blocks[0].m()
    }

    pub fn horizon(&self) -> usize {
        self.blocks[0].horizon()
    }

    pub fn train_len(&self) -> usize {
        self.blocks[0].train_len
    }

    pub fn test_len(&self) -> usize {
        self.horizon() - self.train_len()
    }
}

/// Stacked design matrices of the meta objective.
///
/// Column block `d` of `z` is `(I - alpha z_tr z_tr^T) z_te`; row block `d` of
/// `w_tilde` is the matching target, split as `pi + w` into the part explained
/// by the block's true parameter and the part driven by disturbances.
#[derive(Clone, Debug)]
pub struct DesignMatrices {
    pub alpha: f64,
    pub z: Mat,
    pub w_tilde: Mat,
    pub pi: Mat,
    pub w: Mat,
}

/// `1/2 sum_k ||x_{k+1} - phi^T z_k||^2`.
pub fn loss(z: &Mat, x_next: &Mat, phi: &Mat) -> f64 {
    0.5 * (x_next - phi.transpose() * z).norm_squared()
}

/// One gradient step on the training loss of a block.
pub fn inner_adapt(phi: &Mat, z_tr: &Mat, x_tr: &Mat, alpha: f64) -> Mat {
    phi - (z_tr * (z_tr.transpose() * phi - x_tr.transpose())) * alpha
}

/// [`inner_adapt`] on the training split of `block`.
pub fn inner_adapt_block(phi: &Mat, block: &BlockTrajectory, alpha: f64) -> Mat {
    inner_adapt(phi, &block.train_z(), &block.train_x(), alpha)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::Contract(format!("alpha must be finite and >= 0, got {alpha}")))
    }
}

pub fn assemble_design(ds: &MetaDataset, alpha: f64) -> Result<DesignMatrices> {
    check_alpha(alpha)?;
    let (n, m) = (ds.n(), ds.m());
    let te = ds.test_len();
    let cols = ds.len() * te;
    let mut z = Mat::zeros(n + m, cols);
    let mut w_tilde = Mat::zeros(cols, n);
    let mut pi = Mat::zeros(cols, n);
    let mut w = Mat::zeros(cols, n);
    for (d, (block, params)) in ds.blocks().iter().zip(ds.params()).enumerate() {
        let z_tr = block.train_z();
        let z_te = block.test_z();
        // z_te^T z_tr appears in every row block.
        let cross = z_te.transpose() * &z_tr;
        let zd = &z_te - (&z_tr * (z_tr.transpose() * &z_te)) * alpha;
        z.columns_mut(d * te, te).copy_from(&zd);
        let pid = (z_te.transpose() - &cross * z_tr.transpose() * alpha) * params.phi();
        let wd = block.test_w().transpose() - &cross * block.train_w().transpose() * alpha;
        let wtd = block.test_x().transpose() - &cross * block.train_x().transpose() * alpha;
        pi.rows_mut(d * te, te).copy_from(&pid);
        w.rows_mut(d * te, te).copy_from(&wd);
        w_tilde.rows_mut(d * te, te).copy_from(&wtd);
    }
    Ok(DesignMatrices {
        alpha,
        z,
        w_tilde,
        pi,
        w,
    })
}

/// Minimum-norm minimizer `(Z^T)^+ W_tilde` of the meta objective.
///
/// `rcond = None` uses [`default_rcond`] for the shape of `Z^T`.
pub fn meta_solve_closed_form(ds: &MetaDataset, alpha: f64, rcond: Option<f64>) -> Result<Mat> {
    let design = assemble_design(ds, alpha)?;
    solve_design(&design, rcond)
}

pub fn solve_design(design: &DesignMatrices, rcond: Option<f64>) -> Result<Mat> {
    let zt = design.z.transpose();
    let rcond = rcond.unwrap_or_else(|| default_rcond(zt.nrows(), zt.ncols()));
    Ok(pinv(&zt, rcond)? * &design.w_tilde)
}

/// Sum over blocks of the test loss after inner adaptation.
pub fn meta_objective(ds: &MetaDataset, alpha: f64, phi: &Mat) -> f64 {
    ds.blocks()
        .iter()
        .map(|b| loss(&b.test_z(), &b.test_x(), &inner_adapt_block(phi, b, alpha)))
        .sum()
}

/// Gradient of [`meta_objective`]:
/// `sum_d E_d (z_te z_te^T E_d phi + alpha z_te z_te^T z_tr x_tr^T - z_te x_te^T)`
/// with `E_d = I - alpha z_tr z_tr^T`.
pub fn meta_gradient(ds: &MetaDataset, alpha: f64, phi: &Mat) -> Mat {
    let dim = phi.nrows();
    let mut grad = Mat::zeros(dim, phi.ncols());
    for b in ds.blocks() {
        let z_tr = b.train_z();
        let z_te = b.test_z();
        let e = Mat::identity(dim, dim) - &z_tr * z_tr.transpose() * alpha;
        let cov_te = &z_te * z_te.transpose();
        let inner = &cov_te * &e * phi + &cov_te * &z_tr * b.train_x().transpose() * alpha
            - &z_te * b.test_x().transpose();
        grad += e * inner;
    }
    grad
}

/// Outcome of [`meta_solve_gd`].
#[derive(Clone, Debug)]
pub struct GdResult {
    pub phi: Mat,
    pub grad_norm: f64,
    pub steps: usize,
    pub lr: f64,
}

/// Gradient descent on the meta objective from the zero matrix.
///
/// `lr = None` picks `0.5 / lambda_max(Z Z^T)`, estimated by power iteration.
/// Stops early once the gradient vanishes to rounding level.
pub fn meta_solve_gd(ds: &MetaDataset, alpha: f64, steps: usize, lr: Option<f64>) -> Result<GdResult> {
    check_alpha(alpha)?;
    let lr = match lr {
        Some(lr) if lr > 0.0 && lr.is_finite() => lr,
        Some(lr) => return Err(Error::Contract(format!("lr must be > 0, got {lr}"))),
        None => {
            let design = assemble_design(ds, alpha)?;
            let curvature = power_iteration(&(&design.z * design.z.transpose()), 10_000, 1e-12);
            if curvature <= 0.0 {
                return Err(Error::DegenerateExcitation("Z Z^T is zero".into()));
            }
            0.5 / curvature
        }
    };
    let mut phi = Mat::zeros(ds.n() + ds.m(), ds.n());
    let initial = meta_objective(ds, alpha, &phi);
    let mut grad = meta_gradient(ds, alpha, &phi);
    let scale = 1.0 + grad.norm();
    let mut taken = 0;
    while taken < steps {
        if grad.norm() <= 1e-15 * scale {
            break;
        }
        phi -= &grad * lr;
        taken += 1;
        grad = meta_gradient(ds, alpha, &phi);
        let objective = meta_objective(ds, alpha, &phi);
        if !objective.is_finite() || objective > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Divergence { objective, initial });
        }
    }
    Ok(GdResult {
        grad_norm: grad.norm(),
        phi,
        steps: taken,
        lr,
    })
}

/// Per-block weight `||(I - alpha z_tr z_tr^T) z_te||_F^2`, the trace of the
/// matrix weight each block receives in the noiseless meta solution.
pub fn meta_block_weights(ds: &MetaDataset, alpha: f64) -> Vec<f64> {
    ds.blocks()
        .iter()
        .map(|b| {
            let z_tr = b.train_z();
            let z_te = b.test_z();
            (&z_te - &z_tr * (z_tr.transpose() * &z_te) * alpha).norm_squared()
        })
        .collect()
}

/// Per-block weight `||z||_F^2` over all `L` regressors, the trace of the
/// weight pooled least squares assigns.
pub fn lse_block_weights(ds: &MetaDataset) -> Vec<f64> {
    ds.blocks()
        .iter()
        .map(|b| b.z_columns(0, b.horizon()).norm_squared())
        .collect()
}
