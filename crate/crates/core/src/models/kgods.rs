//! Dual formulation on generalized Stiefel manifolds.
//!
//! With X the d×n matrix of sample columns, the multipliers Y, Z ∈ ℝ^{K×n}
//! minimize `½·tr(Y𝕂Yᵀ + Z𝕂Zᵀ) − η·1ᵀ(Y−Z)1` subject to
//! `YℙYᵀ = ZℙZᵀ = I`, where `𝕂 = Xᵀ(XXᵀ)⁻¹X` and `ℙ = Xᵀ(XXᵀ)⁻²X`.
//! The solver works in whitened coordinates (ℙ = LLᵀ, Ỹ = YL), where both
//! blocks become ordinary Stiefel frames; the primal frames are recovered as
//! `W₁ = (XXᵀ)⁻¹XZᵀ` and `W₂ = −(XXᵀ)⁻¹XYᵀ` and scored with zero biases.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::data::{normalize_rows, DataMatrix};
use crate::error::{Error, Result};
use crate::manifold::{
    standard_normal_matrix, GenMetric, GeneralizedStiefelPoint, ManifoldPoint, StiefelPoint,
    Tangent,
};
use crate::rcg::{minimize, RcgConfig, RcgTrace};
use crate::seeded_rng;

use super::gods::gods_point_score;
use super::HyperParams;

/// The cached dual matrices together with any ridge applied to keep them
/// factorable.
#[derive(Debug, Clone)]
pub struct KernelMatrices {
    /// 𝕂 = Xᵀ(XXᵀ)⁻¹X; the orthogonal projector onto the row space of X
    /// when no ridge was needed.
    pub kmat: DMatrix<f64>,
    /// ℙ = Xᵀ(XXᵀ)⁻²X.
    pub pmat: DMatrix<f64>,
    /// δ added to XXᵀ when its condition number exceeded 1e12.
    pub ridge_xxt: Option<f64>,
}

/// Builds 𝕂 and ℙ from the data (rows are samples, so X = dataᵀ).
///
/// When XXᵀ has condition number above 1e12 it is ridge-regularized with
/// `δ = 1e-8·trace(XXᵀ)/d`, and δ is reported for model metadata.
pub fn kernel_matrices(data: &DataMatrix) -> Result<KernelMatrices> {
    let x = data.x().transpose(); // d×n
    let (d, _n) = x.shape();
    let mut gram = &x * x.transpose();
    gram = (&gram + gram.transpose()).scale(0.5);

    let eig = gram.clone().symmetric_eigen();
    let max_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if !(max_eig > 0.0) {
        return Err(Error::degenerate_numeric(
            "data matrix is zero; kernel matrices are undefined",
        ));
    }
    let mut ridge_xxt = None;
    if min_eig <= 0.0 || max_eig / min_eig > 1e12 {
        let delta = 1e-8 * gram.trace() / d as f64;
        for i in 0..d {
            gram[(i, i)] += delta;
        }
        ridge_xxt = Some(delta);
    }

    let chol = nalgebra::Cholesky::new(gram).ok_or_else(|| {
        Error::degenerate_numeric("XXᵀ is not positive definite even after ridging")
    })?;
    let ginv_x = chol.solve(&x); // (XXᵀ)⁻¹X, d×n
    let kmat = {
        let k = x.transpose() * &ginv_x;
        (&k + k.transpose()).scale(0.5)
    };
    // ℙ = (G⁻¹X)ᵀ(G⁻¹X) is symmetric PSD by construction.
    let pmat = ginv_x.transpose() * &ginv_x;
    Ok(KernelMatrices {
        kmat,
        pmat,
        ridge_xxt,
    })
}

/// Dual objective value and Euclidean gradients in the original (Y, Z)
/// coordinates: `∂F/∂Y = Y𝕂 − η·1`, `∂F/∂Z = Z𝕂 + η·1`.
pub fn kgods_objective_grad(
    y: &DMatrix<f64>,
    z: &DMatrix<f64>,
    kmat: &DMatrix<f64>,
    eta: f64,
) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let (k, n) = y.shape();
    if z.shape() != (k, n) {
        return Err(Error::invalid(format!(
            "Y and Z shapes differ: {:?} vs {:?}",
            y.shape(),
            z.shape()
        )));
    }
    if kmat.shape() != (n, n) {
        return Err(Error::invalid(format!(
            "kernel matrix must be {n}x{n}, got {:?}",
            kmat.shape()
        )));
    }
    let yk = y * kmat;
    let zk = z * kmat;
    let value = 0.5 * (yk.dot(y) + zk.dot(z)) - eta * (y.sum() - z.sum());
    let ones = DMatrix::from_element(k, n, eta);
    Ok((value, yk - &ones, zk + &ones))
}

/// Whitened dual pair: both blocks are n×K column-orthonormal frames.
#[derive(Debug, Clone)]
pub struct DualPair {
    pub y: StiefelPoint,
    pub z: StiefelPoint,
}

#[derive(Debug, Clone)]
pub struct DualTangent {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
}

impl Tangent for DualTangent {
    fn inner(&self, other: &Self) -> f64 {
        self.y.dot(&other.y) + self.z.dot(&other.z)
    }

    fn scale(&self, a: f64) -> Self {
        Self {
            y: self.y.scale(a),
            z: self.z.scale(a),
        }
    }

    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        Self {
            y: &self.y + other.y.scale(a),
            z: &self.z + other.z.scale(a),
        }
    }
}

impl ManifoldPoint for DualPair {
    type Tangent = DualTangent;

    fn project(&self, euclidean: &DualTangent) -> DualTangent {
        DualTangent {
            y: crate::manifold::project_tangent(&self.y, &euclidean.y)
                .expect("shape fixed by construction")
                .into_mat(),
            z: crate::manifold::project_tangent(&self.z, &euclidean.z)
                .expect("shape fixed by construction")
                .into_mat(),
        }
    }

    fn retract(&self, dir: &DualTangent, step: f64) -> Result<Self> {
        Ok(Self {
            y: crate::manifold::qr_retract(
                &self.y,
                &crate::manifold::TangentVector::new(dir.y.clone()),
                step,
            )?,
            z: crate::manifold::qr_retract(
                &self.z,
                &crate::manifold::TangentVector::new(dir.z.clone()),
                step,
            )?,
        })
    }

    fn transport(&self, v: &DualTangent) -> DualTangent {
        self.project(v)
    }

    fn random_ambient(&self, rng: &mut dyn RngCore) -> DualTangent {
        DualTangent {
            y: standard_normal_matrix(self.y.ambient_dim(), self.y.num_cols(), rng),
            z: standard_normal_matrix(self.z.ambient_dim(), self.z.num_cols(), rng),
        }
    }

    fn constraint_residual(&self) -> f64 {
        self.y
            .orthonormality_residual()
            .max(self.z.orthonormality_residual())
    }

    fn renormalize(&self) -> Result<Self> {
        Ok(Self {
            y: self.y.renormalize()?,
            z: self.z.renormalize()?,
        })
    }

    fn restart_dim(&self) -> usize {
        self.y.ambient_dim() * self.y.num_cols()
    }
}

/// Precomputed whitened problem: objective, gradients, initialization, and
/// coordinate maps between whitened and original dual variables.
pub struct KgodsProblem {
    x: DMatrix<f64>, // d×n
    kernels: KernelMatrices,
    metric: Arc<GenMetric>,
    /// δ added to ℙ when it was singular (always the case for n > d).
    pub ridge_p: Option<f64>,
    kw: DMatrix<f64>, // 𝕂̃ = L⁻¹𝕂L⁻ᵀ
    u: DVector<f64>,  // L⁻¹·1
    eta: f64,
    k: usize,
}

impl KgodsProblem {
    pub fn new(data: &DataMatrix, hyper: &HyperParams) -> Result<Self> {
        hyper.validate()?;
        let n = data.n();
        if hyper.k > n {
            return Err(Error::invalid(format!(
                "K={} exceeds the sample count {n}",
                hyper.k
            )));
        }
        let kernels = kernel_matrices(data)?;

        // ℙ has rank ≤ d; for n > d it must be ridged to stay factorable.
        let mut pmat = kernels.pmat.clone();
        let mut ridge_p = None;
        let metric = match GenMetric::new(pmat.clone()) {
            Ok(m) => m,
            Err(_) => {
                let delta = (1e-8 * pmat.trace() / n as f64).max(1e-9);
                for i in 0..n {
                    pmat[(i, i)] += delta;
                }
                ridge_p = Some(delta);
                GenMetric::new(pmat)?
            }
        };
        let metric = Arc::new(metric);

        let l = metric.chol_l();
        // 𝕂̃ = L⁻¹𝕂L⁻ᵀ via two triangular solves.
        let tmp = l
            .solve_lower_triangular(&kernels.kmat)
            .ok_or_else(|| Error::degenerate_numeric("singular Cholesky factor"))?;
        let kw = {
            let kw = l
                .solve_lower_triangular(&tmp.transpose())
                .ok_or_else(|| Error::degenerate_numeric("singular Cholesky factor"))?
                .transpose();
            (&kw + kw.transpose()).scale(0.5)
        };
        let ones = DMatrix::from_element(n, 1, 1.0);
        let u = l
            .solve_lower_triangular(&ones)
            .ok_or_else(|| Error::degenerate_numeric("singular Cholesky factor"))?
            .column(0)
            .into_owned();

        Ok(Self {
            x: data.x().transpose(),
            kernels,
            metric,
            ridge_p,
            kw,
            u,
            eta: hyper.eta,
            k: hyper.k,
        })
    }

    pub fn kernels(&self) -> &KernelMatrices {
        &self.kernels
    }

    pub fn metric(&self) -> &Arc<GenMetric> {
        &self.metric
    }

    /// Seeded random pair of whitened frames.
    pub fn init(&self, seed: u64) -> Result<DualPair> {
        let n = self.kw.nrows();
        let mut rng = seeded_rng(seed);
        Ok(DualPair {
            y: StiefelPoint::random(n, self.k, &mut rng)?,
            z: StiefelPoint::random(n, self.k, &mut rng)?,
        })
    }

    /// Whitened objective; equals the original dual objective at
    /// Y = Ỹ·L⁻¹, Z = Z̃·L⁻¹ with matching Euclidean gradients.
    pub fn objective(&self, pair: &DualPair) -> Result<(f64, DualTangent)> {
        let yt = pair.y.mat(); // n×K, whitened Ỹᵀ
        let zt = pair.z.mat();
        let kyt = &self.kw * yt;
        let kzt = &self.kw * zt;
        let value = 0.5 * (kyt.dot(yt) + kzt.dot(zt))
            - self.eta * ((yt.transpose() * &self.u).sum() - (zt.transpose() * &self.u).sum());
        let lin = &self.u * DMatrix::from_element(1, self.k, self.eta);
        Ok((
            value,
            DualTangent {
                y: kyt - &lin,
                z: kzt + &lin,
            },
        ))
    }

    /// Maps a whitened pair back to the original dual variables.
    pub fn to_duals(
        &self,
        pair: &DualPair,
    ) -> Result<(GeneralizedStiefelPoint, GeneralizedStiefelPoint)> {
        let y = GeneralizedStiefelPoint::from_whitened(&pair.y, self.metric.clone())?;
        let z = GeneralizedStiefelPoint::from_whitened(&pair.z, self.metric.clone())?;
        Ok((y, z))
    }

    /// Recovers the primal frames `W₁ = (XXᵀ)⁻¹XZᵀ`, `W₂ = −(XXᵀ)⁻¹XYᵀ`.
    pub fn recover_primal(
        &self,
        y: &GeneralizedStiefelPoint,
        z: &GeneralizedStiefelPoint,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let d = self.x.nrows();
        let mut gram = &self.x * self.x.transpose();
        if let Some(delta) = self.kernels.ridge_xxt {
            for i in 0..d {
                gram[(i, i)] += delta;
            }
        }
        let chol = nalgebra::Cholesky::new(gram)
            .ok_or_else(|| Error::degenerate_numeric("XXᵀ lost positive definiteness"))?;
        let w1 = chol.solve(&(&self.x * z.mat().transpose()));
        let w2 = -chol.solve(&(&self.x * y.mat().transpose()));
        Ok((w1, w2))
    }
}

/// A fitted dual model with recovered primal frames.
#[derive(Debug, Clone)]
pub struct KgodsModel {
    pub y: GeneralizedStiefelPoint,
    pub z: GeneralizedStiefelPoint,
    pub kmat: DMatrix<f64>,
    /// Recovered primal frames, scored with zero biases.
    pub w1: DMatrix<f64>,
    pub w2: DMatrix<f64>,
    pub hyper: HyperParams,
    pub feature_dim: usize,
    pub trained_n: usize,
    pub seed: u64,
    pub ridge_xxt: Option<f64>,
    pub ridge_p: Option<f64>,
    /// ‖YℙYᵀ−I‖_F and ‖ZℙZᵀ−I‖_F at the returned point.
    pub constraint_residuals: (f64, f64),
}

impl KgodsModel {
    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.feature_dim {
            return Err(Error::invalid(format!(
                "point dimension {} does not match model dimension {}",
                x.len(),
                self.feature_dim
            )));
        }
        let zeros = DVector::zeros(self.hyper.k);
        Ok(gods_point_score(
            &self.w1,
            &zeros,
            &self.w2,
            &zeros,
            self.hyper.eta,
            self.hyper.nu,
            x,
        ))
    }

    pub fn score_matrix(&self, dm: &DataMatrix) -> Result<Vec<f64>> {
        if dm.d() != self.feature_dim {
            return Err(Error::invalid(format!(
                "data dimension {} does not match model dimension {}",
                dm.d(),
                self.feature_dim
            )));
        }
        let prepared = if self.hyper.normalize_rows {
            normalize_rows(dm)?
        } else {
            dm.clone()
        };
        (0..prepared.n())
            .map(|i| self.score(&prepared.row(i)))
            .collect()
    }
}

/// Fits the dual by RCG on the whitened product manifold.
pub fn fit_kgods(
    data: &DataMatrix,
    hyper: &HyperParams,
    cfg: &RcgConfig,
    seed: u64,
) -> Result<(KgodsModel, RcgTrace)> {
    let prepared = if hyper.normalize_rows {
        normalize_rows(data)?
    } else {
        data.clone()
    };
    let problem = KgodsProblem::new(&prepared, hyper)?;
    let init = problem.init(seed)?;
    let (pair, trace) = minimize(|p: &DualPair| problem.objective(p), init, cfg)?;
    let (y, z) = problem.to_duals(&pair)?;
    let residuals = (y.constraint_residual_gen(), z.constraint_residual_gen());
    let (w1, w2) = problem.recover_primal(&y, &z)?;
    Ok((
        KgodsModel {
            kmat: problem.kernels().kmat.clone(),
            w1,
            w2,
            y,
            z,
            hyper: hyper.clone(),
            feature_dim: data.d(),
            trained_n: data.n(),
            seed,
            ridge_xxt: problem.kernels().ridge_xxt,
            ridge_p: problem.ridge_p,
            constraint_residuals: residuals,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_data(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = seeded_rng(seed);
        DataMatrix::new(standard_normal_matrix(n, d, &mut rng), None, None).unwrap()
    }

    #[test]
    fn identity_data_gives_identity_kernels() {
        let data = DataMatrix::new(DMatrix::identity(5, 5), None, None).unwrap();
        let km = kernel_matrices(&data).unwrap();
        assert!((km.kmat.clone() - DMatrix::identity(5, 5)).norm() < 1e-12);
        assert!((km.pmat.clone() - DMatrix::identity(5, 5)).norm() < 1e-12);
        assert!(km.ridge_xxt.is_none());
    }

    #[test]
    fn orthonormal_row_data_kernel_is_cross_gram() {
        // Data rows orthonormal means X = dataᵀ has orthonormal columns,
        // so XXᵀ = I (d = n here) and 𝕂 = XᵀX.
        let mut rng = seeded_rng(3);
        let q = StiefelPoint::random(6, 6, &mut rng).unwrap();
        let data = DataMatrix::new(q.mat().clone(), None, None).unwrap();
        let km = kernel_matrices(&data).unwrap();
        let x = data.x().transpose();
        assert!((km.kmat.clone() - x.transpose() * &x).norm() < 1e-10);
    }

    #[test]
    fn kernels_match_dense_inverse_oracle() {
        // 10 samples × 6 features: XXᵀ invertible, explicit-inverse route.
        let data = random_data(10, 6, 7);
        let km = kernel_matrices(&data).unwrap();
        let x = data.x().transpose();
        let ginv = (&x * x.transpose()).try_inverse().unwrap();
        let k_oracle = x.transpose() * &ginv * &x;
        let p_oracle = x.transpose() * &ginv * &ginv * &x;
        assert!((km.kmat.clone() - k_oracle).norm() < 1e-10);
        assert!((km.pmat.clone() - p_oracle).norm() < 1e-10);
        // 𝕂 is idempotent (projector onto the row space of X).
        assert!((&km.kmat * &km.kmat - &km.kmat).norm() < 1e-8);
    }

    #[test]
    fn zero_data_is_degenerate() {
        let data = DataMatrix::new(DMatrix::zeros(4, 3), None, None).unwrap();
        assert!(matches!(
            kernel_matrices(&data),
            Err(Error::NumericalDegeneracy(_))
        ));
    }

    #[test]
    fn ill_conditioned_gram_gets_ridged() {
        // Two nearly identical feature columns blow up the condition number.
        let mut rng = seeded_rng(11);
        let base = standard_normal_matrix(8, 1, &mut rng);
        let mut x = DMatrix::zeros(8, 2);
        x.set_column(0, &base.column(0));
        let mut nearby = base.column(0).into_owned();
        nearby[0] += 1e-9;
        x.set_column(1, &nearby);
        let data = DataMatrix::new(x, None, None).unwrap();
        let km = kernel_matrices(&data).unwrap();
        assert!(km.ridge_xxt.is_some());
    }

    #[test]
    fn dual_objective_hand_values() {
        let mut rng = seeded_rng(13);
        let y = standard_normal_matrix(2, 5, &mut rng);
        let km = {
            let a = standard_normal_matrix(5, 5, &mut rng);
            (&a * a.transpose()).scale(0.2)
        };
        // Y = Z cancels the linear terms.
        let (value, _, _) = kgods_objective_grad(&y, &y, &km, 0.3).unwrap();
        assert_relative_eq!(value, (&y * &km).dot(&y), epsilon = 1e-12);
        // η = 0 leaves the PSD quadratic: nonnegative.
        let z = standard_normal_matrix(2, 5, &mut rng);
        let (v0, _, _) = kgods_objective_grad(&y, &z, &km, 0.0).unwrap();
        assert!(v0 >= 0.0);
    }

    #[test]
    fn dual_gradients_match_flat_finite_differences() {
        let mut rng = seeded_rng(17);
        let y = standard_normal_matrix(2, 8, &mut rng);
        let z = standard_normal_matrix(2, 8, &mut rng);
        let km = {
            let a = standard_normal_matrix(8, 8, &mut rng);
            (&a * a.transpose()).scale(0.1)
        };
        let eta = 0.25;
        let (_, gy, gz) = kgods_objective_grad(&y, &z, &km, eta).unwrap();
        let h = 1e-6;
        for probe in 0..6 {
            let (i, j) = (probe % 2, (probe * 3) % 8);
            let mut yp = y.clone();
            yp[(i, j)] += h;
            let mut ym = y.clone();
            ym[(i, j)] -= h;
            let (fp, _, _) = kgods_objective_grad(&yp, &z, &km, eta).unwrap();
            let (fm, _, _) = kgods_objective_grad(&ym, &z, &km, eta).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - gy[(i, j)]).abs() < 1e-6 * fd.abs().max(1.0));

            let mut zp = z.clone();
            zp[(i, j)] += h;
            let mut zm = z.clone();
            zm[(i, j)] -= h;
            let (fp, _, _) = kgods_objective_grad(&y, &zp, &km, eta).unwrap();
            let (fm, _, _) = kgods_objective_grad(&y, &zm, &km, eta).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            assert!((fd - gz[(i, j)]).abs() < 1e-6 * fd.abs().max(1.0));
        }
    }

    #[test]
    fn whitened_objective_agrees_with_dual_objective() {
        let data = random_data(8, 8, 19);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let problem = KgodsProblem::new(&data, &hyper).unwrap();
        let pair = problem.init(5).unwrap();
        let (vw, _) = problem.objective(&pair).unwrap();
        let (y, z) = problem.to_duals(&pair).unwrap();
        let (vo, _, _) =
            kgods_objective_grad(y.mat(), z.mat(), &problem.kernels().kmat, hyper.eta).unwrap();
        assert_relative_eq!(vw, vo, epsilon = 1e-8, max_relative = 1e-8);
    }

    #[test]
    fn whitened_gradient_passes_manifold_grad_check() {
        let data = random_data(8, 8, 23);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let problem = KgodsProblem::new(&data, &hyper).unwrap();
        let pair = problem.init(9).unwrap();
        let err =
            crate::rcg::grad_check(|p: &DualPair| problem.objective(p), &pair, 10, 31).unwrap();
        assert!(err < 1e-6, "max relative error {err:.3e}");
    }

    #[test]
    fn identity_data_reduces_to_standard_stiefel_run() {
        // X = I: 𝕂 = ℙ = I, so the whitened run IS the plain Stiefel run.
        let data = DataMatrix::new(DMatrix::identity(6, 6), None, None).unwrap();
        let hyper = HyperParams {
            k: 2,
            eta: 0.2,
            normalize_rows: false,
            ..Default::default()
        };
        let problem = KgodsProblem::new(&data, &hyper).unwrap();
        assert!(problem.ridge_p.is_none());
        assert!((problem.metric.p().clone() - DMatrix::identity(6, 6)).norm() < 1e-12);

        let cfg = RcgConfig {
            max_iter: 80,
            ..Default::default()
        };
        let init = problem.init(3).unwrap();
        let (pair, trace) =
            minimize(|p: &DualPair| problem.objective(p), init.clone(), &cfg).unwrap();

        // Oracle: the same objective phrased directly on Stiefel frames with
        // the raw kernel matrices (no whitening).
        let km = problem.kernels().kmat.clone();
        let eta = hyper.eta;
        let direct = |p: &DualPair| {
            let (v, gy, gz) =
                kgods_objective_grad(&p.y.mat().transpose(), &p.z.mat().transpose(), &km, eta)?;
            Ok((
                v,
                DualTangent {
                    y: gy.transpose(),
                    z: gz.transpose(),
                },
            ))
        };
        let (pair2, trace2) = minimize(direct, init, &cfg).unwrap();
        assert!((pair.y.mat() - pair2.y.mat()).norm() < 1e-9);
        assert!((pair.z.mat() - pair2.z.mat()).norm() < 1e-9);
        assert_relative_eq!(
            trace.final_objective(),
            trace2.final_objective(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn zero_eta_run_from_feasible_init_is_non_increasing() {
        // With η = 0 only the PSD quadratic remains; from a
        // constraint-satisfying start the trace never increases.
        let data = random_data(7, 7, 41);
        let km = kernel_matrices(&data).unwrap().kmat;
        let mut rng = seeded_rng(2);
        let init = DualPair {
            y: StiefelPoint::random(7, 2, &mut rng).unwrap(),
            z: StiefelPoint::random(7, 2, &mut rng).unwrap(),
        };
        let objective = |p: &DualPair| {
            let (v, gy, gz) =
                kgods_objective_grad(&p.y.mat().transpose(), &p.z.mat().transpose(), &km, 0.0)?;
            Ok((
                v,
                DualTangent {
                    y: gy.transpose(),
                    z: gz.transpose(),
                },
            ))
        };
        let cfg = RcgConfig {
            max_iter: 60,
            ..Default::default()
        };
        let (_, trace) = minimize(objective, init, &cfg).unwrap();
        for pair in trace.records.windows(2) {
            assert!(pair[1].objective <= pair[0].objective);
        }
        assert!(
            trace.final_objective() >= -1e-12,
            "PSD quadratic stays nonnegative"
        );
    }

    #[test]
    fn fit_produces_feasible_duals_and_finite_primal() {
        let data = random_data(9, 9, 29);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let cfg = RcgConfig {
            max_iter: 150,
            ..Default::default()
        };
        let (model, trace) = fit_kgods(&data, &hyper, &cfg, 7).unwrap();
        for pair in trace.records.windows(2) {
            assert!(pair[1].objective <= pair[0].objective);
        }
        assert!(model.constraint_residuals.0 < 1e-6);
        assert!(model.constraint_residuals.1 < 1e-6);
        assert!(model.w1.iter().all(|v| v.is_finite()));
        assert!(model.w2.iter().all(|v| v.is_finite()));
        // Primal frames inherit near-orthonormality from the dual constraint.
        let gram = model.w1.transpose() * &model.w1;
        assert!((gram - DMatrix::identity(2, 2)).norm() < 1e-6);
        // Scoring is computable.
        let scores = model.score_matrix(&data).unwrap();
        assert!(scores.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn fit_handles_more_samples_than_features_with_ridge() {
        // n > d makes ℙ rank-deficient; the documented ridge restores PD.
        let data = random_data(14, 6, 31);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let cfg = RcgConfig {
            max_iter: 100,
            ..Default::default()
        };
        let (model, _) = fit_kgods(&data, &hyper, &cfg, 3).unwrap();
        assert!(model.ridge_p.is_some());
        assert!(model.w1.iter().all(|v| v.is_finite()));
        let scores = model.score_matrix(&data).unwrap();
        assert!(scores.iter().all(|s| s.is_finite()));
    }
}
