//! Stiefel, generalized-Stiefel, and product-manifold primitives.
//!
//! Points own their geometry (tangent projection, QR retraction, projection
//! transport) so the conjugate-gradient solver in [`crate::rcg`] stays generic
//! over parameter spaces. The metric is the embedded Euclidean (trace) metric
//! throughout.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Frobenius tolerance for the column-orthonormality invariant `WᵀW = I`.
pub const ORTHO_TOL: f64 = 1e-10;
/// Frobenius tolerance for the generalized constraint `YℙYᵀ = I`.
pub const GEN_TOL: f64 = 1e-8;

/// Fills a matrix with standard-normal draws in a fixed (column-major) order.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

fn orthonormality_residual(mat: &DMatrix<f64>) -> f64 {
    let k = mat.ncols();
    let gram = mat.transpose() * mat;
    (gram - DMatrix::<f64>::identity(k, k)).norm()
}

/// Thin QR factor of `mat` with the sign convention that the diagonal of R is
/// nonnegative, which makes the factorization a deterministic function.
///
/// Errors with [`Error::NumericalDegeneracy`] when `mat` has rank below its
/// column count.
pub fn qr_orthonormal_factor(mat: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (d, k) = mat.shape();
    if k > d {
        return Err(Error::invalid(format!(
            "cannot orthonormalize {d}x{k}: more columns than rows"
        )));
    }
    let scale = mat.norm().max(1.0);
    let qr = mat.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        let rjj = r[(j, j)];
        if rjj.abs() < 1e-13 * scale {
            return Err(Error::degenerate_numeric(format!(
                "rank-deficient matrix: |R[{j},{j}]| = {:.3e}",
                rjj.abs()
            )));
        }
        if rjj < 0.0 {
            for i in 0..d {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    Ok(q)
}

// ---------------------------------------------------------------------------
// Stiefel manifold St(d, K)
// ---------------------------------------------------------------------------

/// A d×K matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct StiefelPoint {
    mat: DMatrix<f64>,
}

impl StiefelPoint {
    /// Wraps a matrix after checking `‖WᵀW − I‖_F ≤ 1e-10` and `1 ≤ K ≤ d`.
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        let (d, k) = mat.shape();
        if k < 1 || k > d {
            return Err(Error::invalid(format!(
                "Stiefel point needs 1 <= K <= d, got d={d}, K={k}"
            )));
        }
        let resid = orthonormality_residual(&mat);
        if !resid.is_finite() || resid > ORTHO_TOL {
            return Err(Error::invalid(format!(
                "columns not orthonormal: residual {resid:.3e} exceeds {ORTHO_TOL:.0e}"
            )));
        }
        Ok(Self { mat })
    }

    /// Orthonormalizes an arbitrary full-column-rank matrix via thin QR.
    pub fn from_matrix(mat: &DMatrix<f64>) -> Result<Self> {
        Ok(Self {
            mat: qr_orthonormal_factor(mat)?,
        })
    }

    /// Seeded random point: QR factor of a Gaussian matrix.
    pub fn random(d: usize, k: usize, rng: &mut dyn RngCore) -> Result<Self> {
        if k < 1 || k > d {
            return Err(Error::invalid(format!(
                "Stiefel point needs 1 <= K <= d, got d={d}, K={k}"
            )));
        }
        Self::from_matrix(&standard_normal_matrix(d, k, rng))
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn ambient_dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn num_cols(&self) -> usize {
        self.mat.ncols()
    }

    pub fn orthonormality_residual(&self) -> f64 {
        orthonormality_residual(&self.mat)
    }
}

/// A d×K matrix interpreted in the tangent space at an associated Stiefel point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    mat: DMatrix<f64>,
}

impl TangentVector {
    pub fn new(mat: DMatrix<f64>) -> Self {
        Self { mat }
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn into_mat(self) -> DMatrix<f64> {
        self.mat
    }
}

/// Maps an ambient matrix into the horizontal tangent space at `w`:
/// `(I − WWᵀ)·G`. The result satisfies `Wᵀ·result = 0`.
pub fn project_tangent(w: &StiefelPoint, g: &DMatrix<f64>) -> Result<TangentVector> {
    if g.shape() != w.mat.shape() {
        return Err(Error::invalid(format!(
            "gradient shape {:?} does not match point shape {:?}",
            g.shape(),
            w.mat.shape()
        )));
    }
    // (I − WWᵀ)G computed as G − W(WᵀG) to avoid forming the d×d projector.
    let wtg = w.mat.transpose() * g;
    Ok(TangentVector::new(g - &w.mat * wtg))
}

/// Retraction by thin QR of `W + step·V`, with nonnegative-diagonal sign fix.
///
/// A zero tangent short-circuits to the base point so that retracting nothing
/// is exactly the identity.
pub fn qr_retract(w: &StiefelPoint, v: &TangentVector, step: f64) -> Result<StiefelPoint> {
    if v.mat.shape() != w.mat.shape() {
        return Err(Error::invalid(format!(
            "tangent shape {:?} does not match point shape {:?}",
            v.mat.shape(),
            w.mat.shape()
        )));
    }
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::invalid(format!("step must be positive, got {step}")));
    }
    if v.mat.iter().all(|&x| x == 0.0) {
        return Ok(w.clone());
    }
    let stepped = &w.mat + v.mat.scale(step);
    Ok(StiefelPoint {
        mat: qr_orthonormal_factor(&stepped)?,
    })
}

/// Projection vector transport: re-project `v_old` onto the tangent space at
/// `w_new`.
pub fn transport(w_new: &StiefelPoint, v_old: &TangentVector) -> Result<TangentVector> {
    project_tangent(w_new, &v_old.mat)
}

// ---------------------------------------------------------------------------
// Generic point/tangent interface consumed by the RCG solver
// ---------------------------------------------------------------------------

/// Linear operations on tangent containers. Also used for the Euclidean
/// gradient containers handed back by objective callbacks.
pub trait Tangent: Clone {
    /// Trace (Frobenius) inner product, summed blockwise.
    fn inner(&self, other: &Self) -> f64;
    fn scale(&self, a: f64) -> Self;
    /// `self + a·other`.
    fn add_scaled(&self, a: f64, other: &Self) -> Self;
    fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }
}

/// A point on a Riemannian manifold, together with its local geometry.
pub trait ManifoldPoint: Clone {
    type Tangent: Tangent;

    /// Maps a Euclidean gradient container into the tangent space at `self`.
    fn project(&self, euclidean: &Self::Tangent) -> Self::Tangent;
    /// Steps along `dir` scaled by `step` and maps back onto the manifold.
    fn retract(&self, dir: &Self::Tangent, step: f64) -> Result<Self>;
    /// Carries a tangent vector from another point into the tangent space here.
    fn transport(&self, v: &Self::Tangent) -> Self::Tangent;
    /// Gaussian-filled ambient container, for gradient checks.
    fn random_ambient(&self, rng: &mut dyn RngCore) -> Self::Tangent;
    /// Frobenius distance from the defining constraint set.
    fn constraint_residual(&self) -> f64;
    /// Re-imposes the constraints after numerical drift.
    fn renormalize(&self) -> Result<Self>;
    /// Dimension used for the default conjugacy restart period.
    fn restart_dim(&self) -> usize;
}

impl Tangent for TangentVector {
    fn inner(&self, other: &Self) -> f64 {
        self.mat.dot(&other.mat)
    }

    fn scale(&self, a: f64) -> Self {
        TangentVector::new(self.mat.scale(a))
    }

    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        TangentVector::new(&self.mat + other.mat.scale(a))
    }
}

impl ManifoldPoint for StiefelPoint {
    type Tangent = TangentVector;

    fn project(&self, euclidean: &TangentVector) -> TangentVector {
        project_tangent(self, &euclidean.mat).expect("shape checked at construction")
    }

    fn retract(&self, dir: &TangentVector, step: f64) -> Result<Self> {
        qr_retract(self, dir, step)
    }

    fn transport(&self, v: &TangentVector) -> TangentVector {
        transport(self, v).expect("shape checked at construction")
    }

    fn random_ambient(&self, rng: &mut dyn RngCore) -> TangentVector {
        TangentVector::new(standard_normal_matrix(
            self.mat.nrows(),
            self.mat.ncols(),
            rng,
        ))
    }

    fn constraint_residual(&self) -> f64 {
        self.orthonormality_residual()
    }

    fn renormalize(&self) -> Result<Self> {
        Self::from_matrix(&self.mat)
    }

    fn restart_dim(&self) -> usize {
        self.mat.nrows() * self.mat.ncols()
    }
}

// ---------------------------------------------------------------------------
// Product manifold St(d,K) × ℝᴷ × St(d,K) × ℝᴷ
// ---------------------------------------------------------------------------

/// Bundle (W₁, b₁, W₂, b₂): two Stiefel frames with their bias vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint {
    pub w1: StiefelPoint,
    pub b1: DVector<f64>,
    pub w2: StiefelPoint,
    pub b2: DVector<f64>,
}

impl ProductPoint {
    pub fn new(
        w1: StiefelPoint,
        b1: DVector<f64>,
        w2: StiefelPoint,
        b2: DVector<f64>,
    ) -> Result<Self> {
        let (d, k) = (w1.ambient_dim(), w1.num_cols());
        if w2.ambient_dim() != d || w2.num_cols() != k {
            return Err(Error::invalid(format!(
                "subspace shapes differ: {}x{} vs {}x{}",
                d,
                k,
                w2.ambient_dim(),
                w2.num_cols()
            )));
        }
        if b1.len() != k || b2.len() != k {
            return Err(Error::invalid(format!(
                "bias length must equal K={k}, got {} and {}",
                b1.len(),
                b2.len()
            )));
        }
        Ok(Self { w1, b1, w2, b2 })
    }

    pub fn ambient_dim(&self) -> usize {
        self.w1.ambient_dim()
    }

    pub fn num_cols(&self) -> usize {
        self.w1.num_cols()
    }
}

/// Euclidean-gradient / tangent container matching [`ProductPoint`] blockwise.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTangent {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

impl ProductTangent {
    pub fn zeros(d: usize, k: usize) -> Self {
        Self {
            w1: DMatrix::zeros(d, k),
            b1: DVector::zeros(k),
            w2: DMatrix::zeros(d, k),
            b2: DVector::zeros(k),
        }
    }
}

impl Tangent for ProductTangent {
    fn inner(&self, other: &Self) -> f64 {
        self.w1.dot(&other.w1)
            + self.b1.dot(&other.b1)
            + self.w2.dot(&other.w2)
            + self.b2.dot(&other.b2)
    }

    fn scale(&self, a: f64) -> Self {
        Self {
            w1: self.w1.scale(a),
            b1: self.b1.scale(a),
            w2: self.w2.scale(a),
            b2: self.b2.scale(a),
        }
    }

    fn add_scaled(&self, a: f64, other: &Self) -> Self {
        Self {
            w1: &self.w1 + other.w1.scale(a),
            b1: &self.b1 + other.b1.scale(a),
            w2: &self.w2 + other.w2.scale(a),
            b2: &self.b2 + other.b2.scale(a),
        }
    }
}

impl ManifoldPoint for ProductPoint {
    type Tangent = ProductTangent;

    /// Stiefel blocks get the horizontal projection; bias blocks are Euclidean
    /// and pass through unchanged.
    fn project(&self, euclidean: &ProductTangent) -> ProductTangent {
        ProductTangent {
            w1: project_tangent(&self.w1, &euclidean.w1)
                .expect("shape fixed by construction")
                .into_mat(),
            b1: euclidean.b1.clone(),
            w2: project_tangent(&self.w2, &euclidean.w2)
                .expect("shape fixed by construction")
                .into_mat(),
            b2: euclidean.b2.clone(),
        }
    }

    fn retract(&self, dir: &ProductTangent, step: f64) -> Result<Self> {
        if dir.w1.shape() != self.w1.mat().shape()
            || dir.w2.shape() != self.w2.mat().shape()
            || dir.b1.len() != self.b1.len()
            || dir.b2.len() != self.b2.len()
        {
            return Err(Error::invalid("tangent blocks do not match point shapes"));
        }
        Ok(Self {
            w1: qr_retract(&self.w1, &TangentVector::new(dir.w1.clone()), step)?,
            b1: &self.b1 + dir.b1.scale(step),
            w2: qr_retract(&self.w2, &TangentVector::new(dir.w2.clone()), step)?,
            b2: &self.b2 + dir.b2.scale(step),
        })
    }

    fn transport(&self, v: &ProductTangent) -> ProductTangent {
        self.project(v)
    }

    fn random_ambient(&self, rng: &mut dyn RngCore) -> ProductTangent {
        let (d, k) = (self.ambient_dim(), self.num_cols());
        ProductTangent {
            w1: standard_normal_matrix(d, k, rng),
            b1: standard_normal_matrix(k, 1, rng).column(0).into_owned(),
            w2: standard_normal_matrix(d, k, rng),
            b2: standard_normal_matrix(k, 1, rng).column(0).into_owned(),
        }
    }

    fn constraint_residual(&self) -> f64 {
        self.w1
            .orthonormality_residual()
            .max(self.w2.orthonormality_residual())
    }

    fn renormalize(&self) -> Result<Self> {
        Ok(Self {
            w1: self.w1.renormalize()?,
            b1: self.b1.clone(),
            w2: self.w2.renormalize()?,
            b2: self.b2.clone(),
        })
    }

    fn restart_dim(&self) -> usize {
        self.ambient_dim() * self.num_cols()
    }
}

// ---------------------------------------------------------------------------
// Generalized Stiefel manifold {Y ∈ ℝ^{K×n} : YℙYᵀ = I}
// ---------------------------------------------------------------------------

/// A fixed symmetric positive-definite metric ℙ with its Cholesky factor.
///
/// Points with constraint `YℙYᵀ = I` are handled by whitening: with ℙ = LLᵀ,
/// the matrix Ỹ = YL has orthonormal rows, so tangent projection and
/// retraction reduce to the standard Stiefel operations on Ỹᵀ.
#[derive(Debug, Clone)]
pub struct GenMetric {
    p: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

impl GenMetric {
    /// Validates symmetry and positive-definiteness (smallest eigenvalue above
    /// 1e-10) and factors ℙ once.
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n {
            return Err(Error::invalid(format!(
                "metric must be square, got {}x{}",
                n,
                p.ncols()
            )));
        }
        let sym_resid = (&p - p.transpose()).norm();
        if sym_resid > 1e-10 * p.norm().max(1.0) {
            return Err(Error::invalid(format!(
                "metric not symmetric: residual {sym_resid:.3e}"
            )));
        }
        let eig = p.clone().symmetric_eigen();
        let min_eig = eig
            .eigenvalues
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if !(min_eig > 1e-10) {
            return Err(Error::degenerate_numeric(format!(
                "metric not positive definite: smallest eigenvalue {min_eig:.3e}"
            )));
        }
        let chol = nalgebra::Cholesky::new(p.clone()).ok_or_else(|| {
            Error::degenerate_numeric("Cholesky factorization of the metric failed")
        })?;
        Ok(Self {
            p,
            chol_l: chol.l(),
        })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }

    /// Lower Cholesky factor L with ℙ = LLᵀ.
    pub fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// Solves Lᵀ·X = rhs.
    fn solve_lt(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.chol_l
            .transpose()
            .solve_upper_triangular(rhs)
            .ok_or_else(|| Error::degenerate_numeric("singular Cholesky factor"))
    }
}

/// K×n matrix Y with YℙYᵀ = I for a shared SPD metric ℙ.
#[derive(Debug, Clone)]
pub struct GeneralizedStiefelPoint {
    mat: DMatrix<f64>,
    metric: Arc<GenMetric>,
}

impl GeneralizedStiefelPoint {
    pub fn new(mat: DMatrix<f64>, metric: Arc<GenMetric>) -> Result<Self> {
        let point = Self::new_unchecked(mat, metric);
        let resid = point.constraint_residual_gen();
        if !resid.is_finite() || resid > GEN_TOL {
            return Err(Error::invalid(format!(
                "constraint YPY' = I violated: residual {resid:.3e} exceeds {GEN_TOL:.0e}"
            )));
        }
        Ok(point)
    }

    /// Wraps without the residual check; used when the caller has just
    /// produced the point from a whitened factorization and tracks the
    /// residual itself.
    pub(crate) fn new_unchecked(mat: DMatrix<f64>, metric: Arc<GenMetric>) -> Self {
        Self { mat, metric }
    }

    /// Builds a point from a whitened (orthonormal-column, n×K) factor:
    /// Y = (L⁻ᵀ·Ỹᵀ)ᵀ.
    pub fn from_whitened(whitened: &StiefelPoint, metric: Arc<GenMetric>) -> Result<Self> {
        if whitened.ambient_dim() != metric.dim() {
            return Err(Error::invalid("whitened factor does not match metric size"));
        }
        let yt = metric.solve_lt(whitened.mat())?;
        Ok(Self::new_unchecked(yt.transpose(), metric))
    }

    pub fn mat(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn metric(&self) -> &Arc<GenMetric> {
        &self.metric
    }

    /// Whitened factor Ỹᵀ = Lᵀ·Yᵀ as a standard Stiefel point (n×K).
    pub fn whitened(&self) -> Result<StiefelPoint> {
        let yt_w = self.metric.chol_l().transpose() * self.mat.transpose();
        StiefelPoint::new(yt_w).map_err(|_| {
            Error::degenerate_numeric("whitened factor drifted off the Stiefel manifold")
        })
    }

    pub fn constraint_residual_gen(&self) -> f64 {
        let k = self.mat.nrows();
        let gram = &self.mat * self.metric.p() * self.mat.transpose();
        (gram - DMatrix::<f64>::identity(k, k)).norm()
    }

    /// Tangent projection for the whitened geometry, expressed in Y
    /// coordinates: V = (G̃ − G̃ỸᵀỸ)·L⁻¹ with G̃ = G·L⁻ᵀ.
    pub fn project_tangent_gen(&self, g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if g.shape() != self.mat.shape() {
            return Err(Error::invalid(format!(
                "gradient shape {:?} does not match point shape {:?}",
                g.shape(),
                self.mat.shape()
            )));
        }
        let l = self.metric.chol_l();
        // G̃ᵀ = L⁻¹Gᵀ
        let gt_w = l
            .solve_lower_triangular(&g.transpose())
            .ok_or_else(|| Error::degenerate_numeric("singular Cholesky factor"))?;
        let g_w = gt_w.transpose();
        let y_w = (l.transpose() * self.mat.transpose()).transpose(); // Ỹ, K×n
        let horiz = &g_w - (&g_w * y_w.transpose()) * &y_w;
        // V = horiz·L⁻¹  ⟺  Vᵀ = L⁻ᵀ·horizᵀ
        let vt = self.metric.solve_lt(&horiz.transpose())?;
        Ok(vt.transpose())
    }

    /// Retraction by ℙ-orthonormalization of the stepped point: whiten, take
    /// the QR factor, and map back.
    pub fn retract_gen(&self, v: &DMatrix<f64>, step: f64) -> Result<Self> {
        if v.shape() != self.mat.shape() {
            return Err(Error::invalid(format!(
                "tangent shape {:?} does not match point shape {:?}",
                v.shape(),
                self.mat.shape()
            )));
        }
        if !step.is_finite() || step <= 0.0 {
            return Err(Error::invalid(format!("step must be positive, got {step}")));
        }
        let stepped = &self.mat + v.scale(step);
        let stepped_w_t = self.metric.chol_l().transpose() * stepped.transpose(); // (Ỹ + sṼ)ᵀ
        let q = qr_orthonormal_factor(&stepped_w_t)?;
        let yt = self.metric.solve_lt(&q)?;
        Ok(Self::new_unchecked(yt.transpose(), self.metric.clone()))
    }
}
