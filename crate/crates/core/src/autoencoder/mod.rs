//! Sparse single-hidden-layer autoencoder.
//!
//! `2M` stacked real inputs are min-max scaled to `[0, 1]`, mapped through a
//! logistic-sigmoid hidden layer of width `2M / n_div` (the latent variable)
//! and a logistic-sigmoid output layer back to `2M`, then unscaled. The
//! encoder half runs at the radio head and the decoder half at the CPU; the
//! scaling parameters travel with both.
//!
//! Training minimizes
//!
//! ```text
//! E = MSE(scaled x, ŷ) + λ (‖W_enc‖² + ‖W_dec‖²) + β Σ_j KL(ρ ‖ ρ̂_j)
//! ```
//!
//! with `ρ̂_j` the mean activation of hidden unit `j` over the batch, using
//! scaled conjugate gradient over the full batch.

pub mod scg;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_model::{stack_grid, unstack_grid, CMatrix, ReceivedGrid, RealStack};
use scg::{Objective, ScgOptions, StopReason};

/// Clamp for mean hidden activations inside the KL term.
pub const KL_EPS: f64 = 1e-12;

/// Numerically stable logistic sigmoid.
pub fn logsig(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// How the reconstruction error is averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseNormalization {
    /// Mean over samples and features.
    PerElement,
    /// Sum over features, mean over samples.
    PerSample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderConfig {
    pub n_div: usize,
    pub l2_coeff: f64,
    pub sparsity_coeff: f64,
    pub sparsity_target: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub loss_tol: f64,
    pub mse: MseNormalization,
    /// Phase rotations applied to each training column; see [`training_set`].
    pub rotations: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        AutoencoderConfig {
            n_div: 8,
            l2_coeff: 0.001,
            sparsity_coeff: 1.0,
            sparsity_target: 0.05,
            max_epochs: 10_000,
            grad_tol: 1e-6,
            loss_tol: 1e-10,
            mse: MseNormalization::PerSample,
            rotations: 8,
        }
    }
}

impl AutoencoderConfig {
    pub fn with_n_div(n_div: usize) -> Self {
        AutoencoderConfig {
            n_div,
            ..AutoencoderConfig::default()
        }
    }

    pub fn violations(&self, input_dim: usize) -> Vec<String> {
        let mut v = Vec::new();
        if self.n_div == 0 || input_dim % self.n_div != 0 {
            v.push(format!("n_div ({}) must divide input dimension {}", self.n_div, input_dim));
        } else if input_dim / self.n_div < 1 {
            v.push("latent dimension must be at least 1".into());
        }
        if !(self.sparsity_target > 0.0 && self.sparsity_target < 1.0) {
            v.push(format!("sparsity target {} outside (0, 1)", self.sparsity_target));
        }
        if self.l2_coeff < 0.0 || self.sparsity_coeff < 0.0 {
            v.push("regularization coefficients must be non-negative".into());
        }
        if self.rotations == 0 {
            v.push("rotations must be at least 1".into());
        }
        v
    }

    pub fn latent_dim(&self, input_dim: usize) -> Result<usize> {
        let v = self.violations(input_dim);
        if v.is_empty() {
            Ok(input_dim / self.n_div)
        } else {
            Err(Error::Config(v))
        }
    }

    fn scg_options(&self) -> ScgOptions {
        ScgOptions {
            max_epochs: self.max_epochs,
            grad_tol: self.grad_tol,
            loss_tol: self.loss_tol,
            ..ScgOptions::default()
        }
    }
}

/// Per-feature min-max scaling to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaling {
    pub min: DVector<f64>,
    pub max: DVector<f64>,
}

impl FeatureScaling {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `(x - min) / (max - min)`, clamped to `[0, 1]`.
    pub fn scale(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter()
                .enumerate()
                .map(|(i, &v)| ((v - self.min[i]) / (self.max[i] - self.min[i])).clamp(0.0, 1.0)),
        )
    }

    pub fn scale_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
            ((x[(i, j)] - self.min[i]) / (self.max[i] - self.min[i])).clamp(0.0, 1.0)
        })
    }

    pub fn unscale(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, &v)| self.min[i] + v * (self.max[i] - self.min[i]))
            .collect()
    }

    pub fn unscale_matrix(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| {
            self.min[i] + y[(i, j)] * (self.max[i] - self.min[i])
        })
    }
}

/// Rowwise min and max over the training columns. A feature whose range is
/// empty gets `max = min + 1`.
pub fn fit_scaling(x: &DMatrix<f64>) -> Result<FeatureScaling> {
    if x.ncols() == 0 {
        return Err(Error::Dimension("cannot fit scaling to zero columns".into()));
    }
    let min = DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.min()));
    let mut max = DVector::from_iterator(x.nrows(), x.row_iter().map(|r| r.max()));
    for (hi, lo) in max.iter_mut().zip(min.iter()) {
        if *hi <= *lo {
            *hi = *lo + 1.0;
        }
    }
    Ok(FeatureScaling { min, max })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    /// latent_dim × input_dim
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    /// input_dim × latent_dim
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
    pub scaling: FeatureScaling,
}

/// Radio-head half.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderPart {
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    pub scaling: FeatureScaling,
}

/// CPU half.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderPart {
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
    pub scaling: FeatureScaling,
}

impl EncoderPart {
    pub fn input_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    /// Latent codes for every column of a stacked `input_dim × n` matrix.
    pub fn encode_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("encoder input", self.input_dim(), x.nrows())?;
        let xs = self.scaling.scale_matrix(x);
        Ok(affine_logsig(&self.w_enc, &self.b_enc, &xs))
    }
}

impl DecoderPart {
    pub fn input_dim(&self) -> usize {
        self.w_dec.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_dec.ncols()
    }

    /// Sigmoid outputs before unscaling.
    pub fn decode_scaled(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_dim("decoder input", self.latent_dim(), z.nrows())?;
        Ok(affine_logsig(&self.w_dec, &self.b_dec, z))
    }

    pub fn decode_matrix(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok(self.scaling.unscale_matrix(&self.decode_scaled(z)?))
    }
}

fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{what}: expected length {expected}, got {got}")))
    }
}

fn affine_logsig(w: &DMatrix<f64>, b: &DVector<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut z = w * x;
    for mut col in z.column_iter_mut() {
        col += b;
    }
    z.apply(|v| *v = logsig(*v));
    z
}

/// `logsig(W_enc · scale(x) + b_enc)`.
pub fn encode(enc: &EncoderPart, x: &RealStack) -> Result<DVector<f64>> {
    check_dim("encoder input", enc.input_dim(), x.len())?;
    let z = enc.encode_matrix(&DMatrix::from_column_slice(x.len(), 1, x.as_slice()))?;
    Ok(z.column(0).into_owned())
}

/// `unscale(logsig(W_dec · z + b_dec))`.
pub fn decode(dec: &DecoderPart, z: &DVector<f64>) -> Result<RealStack> {
    let out = dec.decode_matrix(&DMatrix::from_column_slice(z.len(), 1, z.as_slice()))?;
    Ok(RealStack(out.column(0).iter().copied().collect()))
}

impl AutoencoderModel {
    pub fn input_dim(&self) -> usize {
        self.w_enc.ncols()
    }

    pub fn latent_dim(&self) -> usize {
        self.w_enc.nrows()
    }

    pub fn n_div(&self) -> usize {
        self.input_dim() / self.latent_dim()
    }

    /// Glorot-uniform weights, zero biases, and the given scaling.
    pub fn initialize<R: Rng + ?Sized>(
        input_dim: usize,
        latent_dim: usize,
        scaling: FeatureScaling,
        rng: &mut R,
    ) -> AutoencoderModel {
        let bound = (6.0 / (input_dim + latent_dim) as f64).sqrt();
        let w_enc = DMatrix::from_fn(latent_dim, input_dim, |_, _| rng.random_range(-bound..bound));
        let w_dec = DMatrix::from_fn(input_dim, latent_dim, |_, _| rng.random_range(-bound..bound));
        AutoencoderModel {
            w_enc,
            b_enc: DVector::zeros(latent_dim),
            w_dec,
            b_dec: DVector::zeros(input_dim),
            scaling,
        }
    }

    pub fn encoder(&self) -> EncoderPart {
        EncoderPart {
            w_enc: self.w_enc.clone(),
            b_enc: self.b_enc.clone(),
            scaling: self.scaling.clone(),
        }
    }

    pub fn decoder(&self) -> DecoderPart {
        DecoderPart {
            w_dec: self.w_dec.clone(),
            b_dec: self.b_dec.clone(),
            scaling: self.scaling.clone(),
        }
    }

    pub fn split(self) -> (EncoderPart, DecoderPart) {
        let enc = EncoderPart {
            w_enc: self.w_enc,
            b_enc: self.b_enc,
            scaling: self.scaling.clone(),
        };
        let dec = DecoderPart {
            w_dec: self.w_dec,
            b_dec: self.b_dec,
            scaling: self.scaling,
        };
        (enc, dec)
    }

    pub fn merge(enc: EncoderPart, dec: DecoderPart) -> Result<AutoencoderModel> {
        if enc.scaling != dec.scaling {
            return Err(Error::Other("encoder and decoder carry different input scaling".into()));
        }
        if enc.input_dim() != dec.input_dim() || enc.latent_dim() != dec.latent_dim() {
            return Err(Error::Dimension(format!(
                "encoder {}→{} does not match decoder {}→{}",
                enc.input_dim(),
                enc.latent_dim(),
                dec.latent_dim(),
                dec.input_dim()
            )));
        }
        Ok(AutoencoderModel {
            w_enc: enc.w_enc,
            b_enc: enc.b_enc,
            w_dec: dec.w_dec,
            b_dec: dec.b_dec,
            scaling: enc.scaling,
        })
    }

    /// Reconstruct every column of a stacked matrix.
    pub fn reconstruct_matrix(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let z = self.encoder().encode_matrix(x)?;
        self.decoder().decode_matrix(&z)
    }

    fn to_flat(&self) -> DVector<f64> {
        model_weights(self).to_flat()
    }

    fn with_flat(&self, flat: &DVector<f64>) -> AutoencoderModel {
        let w = Weights::from_flat(self.input_dim(), self.latent_dim(), flat.as_slice());
        AutoencoderModel {
            w_enc: w.w_enc,
            b_enc: w.b_enc,
            w_dec: w.w_dec,
            b_dec: w.b_dec,
            scaling: self.scaling.clone(),
        }
    }
}

/// Same shapes as the model's trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub w_enc: DMatrix<f64>,
    pub b_enc: DVector<f64>,
    pub w_dec: DMatrix<f64>,
    pub b_dec: DVector<f64>,
}

pub type AutoencoderGradient = Weights;

impl Weights {
    fn from_flat(input_dim: usize, latent_dim: usize, flat: &[f64]) -> Weights {
        let (d, l) = (input_dim, latent_dim);
        let (w_enc, rest) = flat.split_at(l * d);
        let (b_enc, rest) = rest.split_at(l);
        let (w_dec, b_dec) = rest.split_at(d * l);
        Weights {
            w_enc: DMatrix::from_column_slice(l, d, w_enc),
            b_enc: DVector::from_column_slice(b_enc),
            w_dec: DMatrix::from_column_slice(d, l, w_dec),
            b_dec: DVector::from_column_slice(b_dec),
        }
    }

    pub fn to_flat(&self) -> DVector<f64> {
        let parts = [
            self.w_enc.as_slice(),
            self.b_enc.as_slice(),
            self.w_dec.as_slice(),
            self.b_dec.as_slice(),
        ];
        DVector::from_iterator(parts.iter().map(|p| p.len()).sum(), parts.into_iter().flatten().copied())
    }
}

/// Regularized loss over a fixed, already-scaled batch.
struct Loss<'a> {
    xs: &'a DMatrix<f64>,
    input_dim: usize,
    latent_dim: usize,
    cfg: &'a AutoencoderConfig,
}

impl Loss<'_> {
    fn mse_scale(&self) -> f64 {
        let n = self.xs.ncols() as f64;
        match self.cfg.mse {
            MseNormalization::PerElement => 1.0 / (n * self.input_dim as f64),
            MseNormalization::PerSample => 1.0 / n,
        }
    }

    fn kl(&self, rho_hat: f64) -> f64 {
        let rho = self.cfg.sparsity_target;
        let q = rho_hat.clamp(KL_EPS, 1.0 - KL_EPS);
        rho * (rho / q).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - q)).ln()
    }

    fn evaluate(&self, w: &Weights, want_grad: bool) -> (f64, Option<Weights>) {
        let n = self.xs.ncols() as f64;
        let hidden = affine_logsig(&w.w_enc, &w.b_enc, self.xs);
        let out = affine_logsig(&w.w_dec, &w.b_dec, &hidden);
        let resid = &out - self.xs;

        let rho_hat: Vec<f64> = hidden.row_iter().map(|r| r.sum() / n).collect();
        let sparsity: f64 = rho_hat.iter().map(|&q| self.kl(q)).sum();
        let l2 = w.w_enc.norm_squared() + w.w_dec.norm_squared();
        let value = self.mse_scale() * resid.norm_squared() + self.cfg.l2_coeff * l2 + self.cfg.sparsity_coeff * sparsity;
        if !want_grad {
            return (value, None);
        }

        let lam2 = 2.0 * self.cfg.l2_coeff;
        // Output-layer delta.
        let mut d_out = resid * (2.0 * self.mse_scale());
        d_out.zip_apply(&out, |d, y| *d *= y * (1.0 - y));
        let g_w_dec = &d_out * hidden.transpose() + &w.w_dec * lam2;
        let g_b_dec = row_sums(&d_out);

        // Hidden-layer delta including the sparsity term.
        let rho = self.cfg.sparsity_target;
        let beta = self.cfg.sparsity_coeff;
        let sparse_grad: Vec<f64> = rho_hat
            .iter()
            .map(|&q| {
                let q = q.clamp(KL_EPS, 1.0 - KL_EPS);
                beta * (-rho / q + (1.0 - rho) / (1.0 - q)) / n
            })
            .collect();
        let mut d_hid = w.w_dec.transpose() * &d_out;
        for (j, mut row) in d_hid.row_iter_mut().enumerate() {
            row.add_scalar_mut(sparse_grad[j]);
        }
        d_hid.zip_apply(&hidden, |d, h| *d *= h * (1.0 - h));
        let g_w_enc = &d_hid * self.xs.transpose() + &w.w_enc * lam2;
        let g_b_enc = row_sums(&d_hid);

        let grad = Weights {
            w_enc: g_w_enc,
            b_enc: g_b_enc,
            w_dec: g_w_dec,
            b_dec: g_b_dec,
        };
        (value, Some(grad))
    }
}

fn row_sums(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(m.nrows(), m.row_iter().map(|r| r.sum()))
}

impl Objective for Loss<'_> {
    fn value(&self, w: &DVector<f64>) -> f64 {
        let weights = Weights::from_flat(self.input_dim, self.latent_dim, w.as_slice());
        self.evaluate(&weights, false).0
    }

    fn value_and_gradient(&self, w: &DVector<f64>) -> (f64, DVector<f64>) {
        let weights = Weights::from_flat(self.input_dim, self.latent_dim, w.as_slice());
        let (v, g) = self.evaluate(&weights, true);
        (v, g.expect("gradient requested").to_flat())
    }
}

fn loss_over<'a>(model: &AutoencoderModel, xs: &'a DMatrix<f64>, cfg: &'a AutoencoderConfig) -> Result<Loss<'a>> {
    check_dim("training data rows", model.input_dim(), xs.nrows())?;
    if xs.ncols() == 0 {
        return Err(Error::Dimension("loss needs at least one column".into()));
    }
    Ok(Loss {
        xs,
        input_dim: model.input_dim(),
        latent_dim: model.latent_dim(),
        cfg,
    })
}

fn model_weights(model: &AutoencoderModel) -> Weights {
    Weights {
        w_enc: model.w_enc.clone(),
        b_enc: model.b_enc.clone(),
        w_dec: model.w_dec.clone(),
        b_dec: model.b_dec.clone(),
    }
}

/// Regularized training loss of `model` on raw (unscaled) columns `x`.
pub fn loss(model: &AutoencoderModel, x: &DMatrix<f64>, cfg: &AutoencoderConfig) -> Result<f64> {
    let xs = model.scaling.scale_matrix(x);
    Ok(loss_over(model, &xs, cfg)?.evaluate(&model_weights(model), false).0)
}

/// Analytic gradient of [`loss`] with respect to weights and biases.
pub fn gradient(model: &AutoencoderModel, x: &DMatrix<f64>, cfg: &AutoencoderConfig) -> Result<AutoencoderGradient> {
    let xs = model.scaling.scale_matrix(x);
    let (_, g) = loss_over(model, &xs, cfg)?.evaluate(&model_weights(model), true);
    Ok(g.expect("gradient requested"))
}

/// Central finite differences of [`loss`] with step `h`, in the flat
/// parameter order of [`Weights::to_flat`].
pub fn numeric_gradient(model: &AutoencoderModel, x: &DMatrix<f64>, cfg: &AutoencoderConfig, h: f64) -> Result<DVector<f64>> {
    let xs = model.scaling.scale_matrix(x);
    let objective = loss_over(model, &xs, cfg)?;
    let mut w = model.to_flat();
    let mut out = DVector::zeros(w.len());
    for i in 0..w.len() {
        let w0 = w[i];
        w[i] = w0 + h;
        let up = objective.value(&w);
        w[i] = w0 - h;
        let down = objective.value(&w);
        w[i] = w0;
        out[i] = (up - down) / (2.0 * h);
    }
    Ok(out)
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.norm().max(b.norm());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm() / scale
    }
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub accepted_losses: Vec<f64>,
    pub stop: StopReason,
}

/// Fit scaling to `x`, initialize from `rng`, and run SCG.
pub fn train<R: Rng + ?Sized>(x: &DMatrix<f64>, cfg: &AutoencoderConfig, rng: &mut R) -> Result<AutoencoderModel> {
    train_with_report(x, cfg, rng).map(|(m, _)| m)
}

pub fn train_with_report<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    cfg: &AutoencoderConfig,
    rng: &mut R,
) -> Result<(AutoencoderModel, TrainReport)> {
    let latent_dim = cfg.latent_dim(x.nrows())?;
    let scaling = fit_scaling(x)?;
    let init = AutoencoderModel::initialize(x.nrows(), latent_dim, scaling, rng);
    train_from(&init, x, cfg)
}

/// Continue training from an explicit starting model; its scaling is kept.
pub fn train_from(
    init: &AutoencoderModel,
    x: &DMatrix<f64>,
    cfg: &AutoencoderConfig,
) -> Result<(AutoencoderModel, TrainReport)> {
    let xs = init.scaling.scale_matrix(x);
    let objective = loss_over(init, &xs, cfg)?;
    let out = scg::minimize(&objective, init.to_flat(), &cfg.scg_options())?;
    let model = init.with_flat(&out.params);
    let report = TrainReport {
        epochs: out.epochs,
        initial_loss: out.initial_value,
        final_loss: out.final_value,
        accepted_losses: out.accepted_values,
        stop: out.stop,
    };
    Ok((model, report))
}

/// Stacked training matrix from the complex training columns, augmented with
/// `rotations` equally spaced phase rotations of each column (`1` keeps the
/// columns as they are). Rotating `y = Hs + n` by `e^{jθ}` gives
/// `H(e^{jθ}s) + e^{jθ}n`: the same signal subspace and, for circular noise,
/// the same noise distribution. Multiples of four keep square-QAM symbols on
/// the constellation.
pub fn training_set(train_cols: &CMatrix, rotations: usize) -> DMatrix<f64> {
    let rotations = rotations.max(1);
    if rotations == 1 {
        return stack_grid(train_cols);
    }
    let n = train_cols.ncols();
    let mut all = CMatrix::zeros(train_cols.nrows(), rotations * n);
    for r in 0..rotations {
        let rot = Complex64::from_polar(1.0, std::f64::consts::TAU * r as f64 / rotations as f64);
        all.columns_mut(r * n, n).copy_from(&train_cols.map(|v| v * rot));
    }
    stack_grid(&all)
}

/// Encoded representation of one coherence block.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGrid {
    pub block_id: u64,
    /// latent_dim × n_re, every entry in (0, 1).
    pub values: DMatrix<f64>,
}

/// Encode every resource element of `rx`, decode it again, and return both the
/// latent grid and the reconstruction.
pub fn autoencode_block(
    model: &AutoencoderModel,
    rx: &ReceivedGrid,
    block_id: u64,
) -> Result<(LatentGrid, ReceivedGrid)> {
    let stacked = stack_grid(&rx.entries);
    let latent = model.encoder().encode_matrix(&stacked)?;
    let recon = model.decoder().decode_matrix(&latent)?;
    Ok((
        LatentGrid {
            block_id,
            values: latent,
        },
        ReceivedGrid {
            entries: unstack_grid(&recon)?,
            noise_var: rx.noise_var,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy(w_enc: f64, b_enc: f64, w_dec: f64, b_dec: f64) -> AutoencoderModel {
        AutoencoderModel {
            w_enc: DMatrix::from_element(1, 1, w_enc),
            b_enc: DVector::from_element(1, b_enc),
            w_dec: DMatrix::from_element(1, 1, w_dec),
            b_dec: DVector::from_element(1, b_dec),
            scaling: FeatureScaling {
                min: DVector::from_element(1, 0.0),
                max: DVector::from_element(1, 1.0),
            },
        }
    }

    #[test]
    fn logsig_values() {
        assert_eq!(logsig(0.0), 0.5);
        assert!((logsig(1.0) - 0.731_058_578_630_004_9).abs() < 1e-15);
        let tiny = logsig(-500.0);
        assert!(tiny.is_finite() && (0.0..=1e-200).contains(&tiny));
        assert_eq!(logsig(800.0), 1.0);
    }

    #[test]
    fn scaling_fit_examples() {
        let single = DMatrix::from_column_slice(3, 1, &[1.0, -2.0, 0.5]);
        let s = fit_scaling(&single).unwrap();
        assert_eq!(s.min.as_slice(), &[1.0, -2.0, 0.5]);
        assert_eq!(s.max.as_slice(), &[2.0, -1.0, 1.5]);

        let x = DMatrix::from_row_slice(2, 3, &[-2.0, 0.0, 2.0, 0.5, -0.5, 0.1]);
        let s = fit_scaling(&x).unwrap();
        assert_eq!(s.min.as_slice(), &[-2.0, -0.5]);
        assert_eq!(s.max.as_slice(), &[2.0, 0.5]);
        assert!(fit_scaling(&DMatrix::zeros(2, 0)).is_err());
    }

    #[test]
    fn zero_weights_encode_to_half_and_decode_to_midpoint() {
        let scaling = FeatureScaling {
            min: DVector::from_vec(vec![-1.0, 0.0, 2.0, 4.0]),
            max: DVector::from_vec(vec![1.0, 2.0, 6.0, 5.0]),
        };
        let model = AutoencoderModel {
            w_enc: DMatrix::zeros(2, 4),
            b_enc: DVector::zeros(2),
            w_dec: DMatrix::zeros(4, 2),
            b_dec: DVector::zeros(4),
            scaling,
        };
        let z = encode(&model.encoder(), &RealStack(vec![0.3, 9.0, -4.0, 4.5])).unwrap();
        assert_eq!(z.as_slice(), &[0.5, 0.5]);
        let x = decode(&model.decoder(), &z).unwrap();
        assert_eq!(x.0, vec![0.0, 1.0, 4.0, 4.5]);
        assert!(encode(&model.encoder(), &RealStack(vec![0.0; 3])).is_err());
        assert!(decode(&model.decoder(), &DVector::zeros(3)).is_err());
    }

    #[test]
    fn scalar_encode_decode() {
        // scaled x = 1 → z = logsig(1); decoder w=2, b=-1 → logsig(2·logsig(1) − 1).
        let m = toy(1.0, 0.0, 2.0, -1.0);
        let z = encode(&m.encoder(), &RealStack(vec![1.0])).unwrap();
        assert!((z[0] - 0.731_058_578_6).abs() < 1e-10);
        let y = decode(&m.decoder(), &z).unwrap();
        let expect = 1.0 / (1.0 + (-(2.0 * 0.731_058_578_630_004_9 - 1.0f64)).exp());
        assert!((y.0[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn scalar_loss_matches_hand_computation() {
        // One sample x = 0.4 on a [0,1] scale, all weights set.
        let (we, be, wd, bd) = (0.7, -0.2, 1.3, 0.1);
        let cfg = AutoencoderConfig {
            n_div: 1,
            l2_coeff: 0.01,
            sparsity_coeff: 0.5,
            sparsity_target: 0.2,
            ..AutoencoderConfig::default()
        };
        let x = 0.4f64;
        let h = 1.0 / (1.0 + (-(we * x + be)).exp());
        let y = 1.0 / (1.0 + (-(wd * h + bd)).exp());
        let rho = 0.2f64;
        let kl = rho * (rho / h).ln() + (1.0 - rho) * ((1.0 - rho) / (1.0 - h)).ln();
        let expect = (x - y).powi(2) + 0.01 * (we * we + wd * wd) + 0.5 * kl;
        let got = loss(&toy(we, be, wd, bd), &DMatrix::from_element(1, 1, x), &cfg).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn sparsity_term_vanishes_at_target() {
        // Zero encoder weights and bias logit(ρ) pin every ρ̂_j to ρ.
        let rho = 0.05f64;
        let mut model = AutoencoderModel::initialize(6, 3, fit_scaling(&DMatrix::from_fn(6, 4, |i, j| (i * j) as f64)).unwrap(), &mut ChaCha8Rng::seed_from_u64(1));
        model.w_enc.fill(0.0);
        model.b_enc.fill((rho / (1.0 - rho)).ln());
        let x = DMatrix::from_fn(6, 4, |i, j| (i * j) as f64);
        let only_sparse = AutoencoderConfig {
            n_div: 2,
            l2_coeff: 0.0,
            sparsity_coeff: 1.0,
            sparsity_target: rho,
            ..AutoencoderConfig::default()
        };
        let no_sparse = AutoencoderConfig {
            sparsity_coeff: 0.0,
            ..only_sparse.clone()
        };
        let a = loss(&model, &x, &only_sparse).unwrap();
        let b = loss(&model, &x, &no_sparse).unwrap();
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn perfect_reconstruction_has_zero_loss() {
        // Target 0.5 everywhere is reproduced by zero decoder weights.
        let scaling = FeatureScaling {
            min: DVector::from_element(2, 0.0),
            max: DVector::from_element(2, 2.0),
        };
        let model = AutoencoderModel {
            w_enc: DMatrix::from_element(1, 2, 0.3),
            b_enc: DVector::zeros(1),
            w_dec: DMatrix::zeros(2, 1),
            b_dec: DVector::zeros(2),
            scaling,
        };
        let cfg = AutoencoderConfig {
            n_div: 2,
            l2_coeff: 0.0,
            sparsity_coeff: 0.0,
            ..AutoencoderConfig::default()
        };
        let x = DMatrix::from_element(2, 3, 1.0);
        assert_eq!(loss(&model, &x, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn l2_gradient_is_two_lambda_w() {
        let scaling = FeatureScaling {
            min: DVector::from_element(2, 0.0),
            max: DVector::from_element(2, 2.0),
        };
        let model = AutoencoderModel {
            w_enc: DMatrix::from_row_slice(1, 2, &[0.3, -0.7]),
            b_enc: DVector::zeros(1),
            w_dec: DMatrix::zeros(2, 1),
            b_dec: DVector::zeros(2),
            scaling,
        };
        let cfg = AutoencoderConfig {
            n_div: 2,
            l2_coeff: 0.25,
            sparsity_coeff: 0.0,
            ..AutoencoderConfig::default()
        };
        let x = DMatrix::from_element(2, 3, 1.0);
        let g = gradient(&model, &x, &cfg).unwrap();
        assert_eq!(g.w_enc, &model.w_enc * 0.5);
        assert_eq!(g.w_dec, DMatrix::zeros(2, 1));
    }

    #[test]
    fn zero_model_gradient_is_finite() {
        let x = DMatrix::from_fn(4, 6, |i, j| if (i + j) % 2 == 0 { 1.0 } else { -1.0 });
        let scaling = fit_scaling(&x).unwrap();
        let model = AutoencoderModel {
            w_enc: DMatrix::zeros(2, 4),
            b_enc: DVector::zeros(2),
            w_dec: DMatrix::zeros(4, 2),
            b_dec: DVector::zeros(4),
            scaling,
        };
        let g = gradient(&model, &x, &AutoencoderConfig::with_n_div(2)).unwrap();
        assert!(g.to_flat().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn split_merge_round_trip() {
        let x = DMatrix::from_fn(8, 5, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let model = AutoencoderModel::initialize(8, 2, fit_scaling(&x).unwrap(), &mut ChaCha8Rng::seed_from_u64(4));
        let (enc, dec) = model.clone().split();
        let col = RealStack(x.column(1).iter().copied().collect());
        assert_eq!(encode(&enc, &col).unwrap(), encode(&model.encoder(), &col).unwrap());
        let z = encode(&enc, &col).unwrap();
        assert_eq!(decode(&dec, &z).unwrap(), decode(&model.decoder(), &z).unwrap());
        assert_eq!(AutoencoderModel::merge(enc.clone(), dec.clone()).unwrap(), model);

        let mut other = dec;
        other.scaling.max[0] += 1.0;
        assert!(AutoencoderModel::merge(enc, other).is_err());
    }

    #[test]
    fn rotated_training_set() {
        let y = CMatrix::from_column_slice(2, 1, &[Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)]);
        let x = training_set(&y, 4);
        assert_eq!(x.shape(), (4, 4));
        // j·(1+2j) = -2+j, j·(-3+0.5j) = -0.5-3j
        let expect = [-2.0, -0.5, 1.0, -3.0];
        for (got, want) in x.column(1).iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        assert_eq!(training_set(&y, 1), stack_grid(&y));
        assert_eq!(training_set(&y, 0), stack_grid(&y));
        assert_eq!(training_set(&y, 16).ncols(), 16);
    }

    fn random_model(d: usize, l: usize, seed: u64) -> (AutoencoderModel, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(d, 10, |_, _| rng.random_range(-2.0..2.0));
        let mut model = AutoencoderModel::initialize(d, l, fit_scaling(&x).unwrap(), &mut rng);
        model.b_enc.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        model.b_dec.iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
        (model, x)
    }

    #[test]
    fn analytic_gradient_matches_finite_differences() {
        for mse in [MseNormalization::PerElement, MseNormalization::PerSample] {
            let cfg = AutoencoderConfig {
                n_div: 2,
                mse,
                ..AutoencoderConfig::default()
            };
            for seed in 0..5 {
                let (model, x) = random_model(8, 4, seed);
                let analytic = gradient(&model, &x, &cfg).unwrap().to_flat();
                let numeric = numeric_gradient(&model, &x, &cfg, 1e-6).unwrap();
                let err = relative_error(&analytic, &numeric);
                assert!(err < 1e-5, "seed {seed} {mse:?}: {err:e}");
            }
        }
    }

    #[test]
    fn training_decreases_loss_monotonically() {
        let (_, x) = random_model(8, 4, 11);
        let cfg = AutoencoderConfig {
            n_div: 2,
            max_epochs: 200,
            ..AutoencoderConfig::default()
        };
        let (model, report) = train_with_report(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(report.accepted_losses.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.final_loss < report.initial_loss);
        assert!((loss(&model, &x, &cfg).unwrap() - report.final_loss).abs() < 1e-12);
    }

    #[test]
    fn training_is_deterministic() {
        let (_, x) = random_model(8, 2, 5);
        let cfg = AutoencoderConfig {
            n_div: 4,
            max_epochs: 50,
            ..AutoencoderConfig::default()
        };
        let a = train(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = train(&x, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unregularized_training_fits_low_rank_data() {
        // Eight features driven by two sources: a 2-unit bottleneck suffices.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mix = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
        let src = DMatrix::from_fn(2, 40, |_, _| rng.random_range(-1.0..1.0));
        let x = &mix * &src;
        let cfg = AutoencoderConfig {
            n_div: 4,
            l2_coeff: 0.0,
            sparsity_coeff: 0.0,
            max_epochs: 1500,
            ..AutoencoderConfig::default()
        };
        let model = train(&x, &cfg, &mut rng).unwrap();
        let err = (model.reconstruct_matrix(&x).unwrap() - &x).norm_squared() / x.norm_squared();
        assert!(err < 0.02, "normalized error {err}");
    }

    #[test]
    fn config_validation() {
        assert_eq!(AutoencoderConfig::with_n_div(8).latent_dim(128).unwrap(), 16);
        assert!(AutoencoderConfig::with_n_div(3).latent_dim(128).is_err());
        let bad = AutoencoderConfig {
            sparsity_target: 1.0,
            ..AutoencoderConfig::default()
        };
        assert!(bad.latent_dim(128).is_err());
        let no_rot = AutoencoderConfig {
            rotations: 0,
            ..AutoencoderConfig::default()
        };
        assert!(no_rot.latent_dim(128).is_err());
    }
}
