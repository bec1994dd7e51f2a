//! The generalized discriminative-subspace model: two K-plane frames on the
//! Stiefel manifold whose positive and negative orthants sandwich the data.

use nalgebra::{DMatrix, DVector};

use crate::data::{normalize_rows, DataMatrix};
use crate::error::{Error, Result};
use crate::manifold::{standard_normal_matrix, ProductPoint, ProductTangent, StiefelPoint};
use crate::rcg::{minimize, RcgConfig, RcgTrace};
use crate::seeded_rng;

use super::{argmax, argmin, squared_hinge, HyperParams};

/// Objective and Euclidean gradients at `point`.
///
/// The value is
/// `½·Σᵢ Σⱼ ‖Wⱼᵀxᵢ + bⱼ‖² + α(b₁,b₂)
///  + (ν/n)·Σᵢ [η − min(W₁ᵀxᵢ+b₁)]₊² + (1/2n)·Σᵢ [η + max(W₂ᵀxᵢ+b₂)]₊²`
/// with `α(b₁,b₂) = ‖b₁−b₂‖² − 1ᵀb₁ − 1ᵀb₂` and the slacks eliminated per
/// `hyper.slack`. Each active hinge contributes a rank-one gradient term on
/// the selected column only (lowest-index tie-break for the arg-extrema).
pub fn gods_objective_grad(
    data: &DataMatrix,
    point: &ProductPoint,
    hyper: &HyperParams,
) -> Result<(f64, ProductTangent)> {
    let (n, d) = (data.n(), data.d());
    let k = point.num_cols();
    if d != point.ambient_dim() {
        return Err(Error::invalid(format!(
            "data dimension {d} does not match model dimension {}",
            point.ambient_dim()
        )));
    }
    if k > d {
        return Err(Error::invalid(format!("K={k} exceeds data dimension {d}")));
    }

    let nf = n as f64;
    let gamma_min = hyper.nu / nf;
    let gamma_max = 1.0 / (2.0 * nf);

    // Margins for all points at once: row i of `p` is (W₁ᵀxᵢ + b₁)ᵀ.
    let mut p = data.x() * point.w1.mat();
    let mut q = data.x() * point.w2.mat();
    for i in 0..n {
        for j in 0..k {
            p[(i, j)] += point.b1[j];
            q[(i, j)] += point.b2[j];
        }
    }

    // Projection term and its gradients: ∂/∂Wⱼ = Σᵢ xᵢ(Wⱼᵀxᵢ+bⱼ)ᵀ = Xᵀ·p.
    let mut value = 0.5 * (p.norm_squared() + q.norm_squared());
    let mut gw1 = data.x().transpose() * &p;
    let mut gw2 = data.x().transpose() * &q;
    let mut gb1 = DVector::from_fn(k, |j, _| p.column(j).sum());
    let mut gb2 = DVector::from_fn(k, |j, _| q.column(j).sum());

    // Bias coupling α(b₁,b₂).
    let diff = &point.b1 - &point.b2;
    value += diff.norm_squared() - point.b1.sum() - point.b2.sum();
    for j in 0..k {
        gb1[j] += 2.0 * diff[j] - 1.0;
        gb2[j] += -2.0 * diff[j] - 1.0;
    }

    // Hinge terms, one selected column per point.
    let mut row = vec![0.0f64; k];
    for i in 0..n {
        for j in 0..k {
            row[j] = p[(i, j)];
        }
        let (k1, m) = argmin(&row);
        let he = squared_hinge(hyper.eta - m, gamma_min, hyper.c, hyper.slack);
        value += he.loss;
        if he.slope != 0.0 {
            for r in 0..d {
                gw1[(r, k1)] -= he.slope * data.x()[(i, r)];
            }
            gb1[k1] -= he.slope;
        }

        for j in 0..k {
            row[j] = q[(i, j)];
        }
        let (k2, mx) = argmax(&row);
        let he = squared_hinge(hyper.eta + mx, gamma_max, hyper.c, hyper.slack);
        value += he.loss;
        if he.slope != 0.0 {
            for r in 0..d {
                gw2[(r, k2)] += he.slope * data.x()[(i, r)];
            }
            gb2[k2] += he.slope;
        }
    }

    Ok((
        value,
        ProductTangent {
            w1: gw1,
            b1: gb1,
            w2: gw2,
            b2: gb2,
        },
    ))
}

/// Per-point anomaly score: the point's own objective contribution with unit
/// sample weight,
/// `½·Σⱼ‖Wⱼᵀx+bⱼ‖² + ν·[η − min(W₁ᵀx+b₁)]₊² + ½·[η + max(W₂ᵀx+b₂)]₊²`.
/// Higher = more anomalous.
pub fn gods_point_score(
    w1: &DMatrix<f64>,
    b1: &DVector<f64>,
    w2: &DMatrix<f64>,
    b2: &DVector<f64>,
    eta: f64,
    nu: f64,
    x: &DVector<f64>,
) -> f64 {
    let p = w1.transpose() * x + b1;
    let q = w2.transpose() * x + b2;
    let min_p = p.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_q = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    0.5 * (p.norm_squared() + q.norm_squared())
        + nu * (eta - min_p).max(0.0).powi(2)
        + 0.5 * (eta + max_q).max(0.0).powi(2)
}

/// Appends seeded random directions orthogonal to the existing columns until
/// the frame has `k` columns.
fn pad_orthonormal(
    mut cols: Vec<DVector<f64>>,
    d: usize,
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<StiefelPoint> {
    while cols.len() < k {
        let mut cand = standard_normal_matrix(d, 1, rng).column(0).into_owned();
        for c in &cols {
            let dot = c.dot(&cand);
            cand -= c.scale(dot);
        }
        let norm = cand.norm();
        if norm < 1e-8 {
            continue;
        }
        cols.push(cand.scale(1.0 / norm));
    }
    let mut mat = DMatrix::zeros(d, k);
    for (j, c) in cols.iter().enumerate() {
        mat.set_column(j, c);
    }
    StiefelPoint::from_matrix(&mat)
}

/// Top-`k` left singular vectors of the d×m matrix whose columns are the
/// selected points, padded with random orthonormal directions when the
/// selection is rank-deficient. Column signs are canonicalized so the
/// largest-magnitude entry is positive.
fn subspace_from_points(
    data: &DataMatrix,
    indices: &[usize],
    k: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<StiefelPoint> {
    let d = data.d();
    let mut pts = DMatrix::zeros(d, indices.len());
    for (j, &i) in indices.iter().enumerate() {
        pts.set_column(j, &data.row(i));
    }
    let svd = pts.svd(true, false);
    let u = svd
        .u
        .ok_or_else(|| Error::degenerate_numeric("SVD failed to produce U"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    let sigma_max = svd.singular_values[order[0]];
    let tol = sigma_max * 1e-10;
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for &j in order.iter().take(k) {
        if svd.singular_values[j] <= tol {
            break;
        }
        let mut col = u.column(j).into_owned();
        // Deterministic sign: largest-|entry| component positive.
        let lead = col
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
            .map(|(i, _)| i)
            .unwrap_or(0);
        if col[lead] < 0.0 {
            col = -col;
        }
        cols.push(col);
    }
    pad_orthonormal(cols, d, k, rng)
}

/// Distance-sorted SVD initialization.
///
/// Points are sorted by Euclidean norm; the `m = min(3K, ⌊n/2⌋)` farthest
/// seed W₁ and the `m` nearest seed W₂ through their left singular vectors.
/// Biases are set so every training point starts feasible:
/// `(b₁)ₖ = η − minᵢ w₁ₖᵀxᵢ` and `(b₂)ₖ = −η − maxᵢ w₂ₖᵀxᵢ`, which zeroes
/// both hinge sums at the initial point. With fewer than 3K points both
/// frames fall back to seeded random orthonormal columns (same bias rule).
pub fn init_params(data: &DataMatrix, hyper: &HyperParams, seed: u64) -> Result<ProductPoint> {
    hyper.validate()?;
    let (n, d) = (data.n(), data.d());
    let k = hyper.k;
    if k > d {
        return Err(Error::invalid(format!("K={k} exceeds data dimension {d}")));
    }
    let mut rng = seeded_rng(seed);

    let (w1, w2) = if n < 3 * k {
        (
            StiefelPoint::random(d, k, &mut rng)?,
            StiefelPoint::random(d, k, &mut rng)?,
        )
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        // Stable sort by norm keeps input order among ties.
        order.sort_by(|&a, &b| {
            data.x()
                .row(a)
                .norm()
                .partial_cmp(&data.x().row(b).norm())
                .unwrap()
        });
        let m = (3 * k).min(n / 2).max(1);
        let near: Vec<usize> = order[..m].to_vec();
        let far: Vec<usize> = order[n - m..].to_vec();
        (
            subspace_from_points(data, &far, k, &mut rng)?,
            subspace_from_points(data, &near, k, &mut rng)?,
        )
    };

    // A tiny pad keeps the arg-extreme points strictly off the hinge
    // boundary at the start; an exact-kink start can leave the linear-hinge
    // objective with no descent direction at all.
    let pad = 1e-9;
    let proj1 = data.x() * w1.mat();
    let proj2 = data.x() * w2.mat();
    let b1 = DVector::from_fn(k, |j, _| {
        hyper.eta + pad
            - proj1
                .column(j)
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min)
    });
    let b2 = DVector::from_fn(k, |j, _| {
        -hyper.eta
            - pad
            - proj2
                .column(j)
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max)
    });
    ProductPoint::new(w1, b1, w2, b2)
}

/// Draws seeded random parameters until every per-point margin is well clear
/// of both the hinge boundary and the arg-extremum ties, so finite
/// differences of either hinge objective are trustworthy there. Used by the
/// gradient-check tooling.
pub fn random_kink_free_point(
    data: &DataMatrix,
    hyper: &HyperParams,
    seed: u64,
) -> Result<ProductPoint> {
    let d = data.d();
    let k = hyper.k;
    if k > d {
        return Err(Error::invalid(format!("K={k} exceeds data dimension {d}")));
    }
    let clear = 1e-3;
    for attempt in 0..200u64 {
        let mut rng = seeded_rng(seed.wrapping_add(attempt.wrapping_mul(7919)));
        let point = ProductPoint::new(
            StiefelPoint::random(d, k, &mut rng)?,
            standard_normal_matrix(k, 1, &mut rng)
                .column(0)
                .into_owned(),
            StiefelPoint::random(d, k, &mut rng)?,
            standard_normal_matrix(k, 1, &mut rng)
                .column(0)
                .into_owned(),
        )?;
        let mut ok = true;
        'points: for i in 0..data.n() {
            let x = data.row(i);
            let p = point.w1.mat().transpose() * &x + &point.b1;
            let q = point.w2.mat().transpose() * &x + &point.b2;
            let mut ps: Vec<f64> = p.iter().cloned().collect();
            let mut qs: Vec<f64> = q.iter().cloned().collect();
            ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
            qs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if (hyper.eta - ps[0]).abs() < clear || (hyper.eta + qs[k - 1]).abs() < clear {
                ok = false;
                break 'points;
            }
            if k > 1 && ((ps[1] - ps[0]).abs() < clear || (qs[k - 1] - qs[k - 2]).abs() < clear) {
                ok = false;
                break 'points;
            }
        }
        if ok {
            return Ok(point);
        }
    }
    Err(Error::degenerate_numeric(
        "could not find a kink-free probe point for this dataset",
    ))
}

/// A fitted subspace-pair model with its hyperparameters and provenance.
#[derive(Debug, Clone)]
pub struct GodsModel {
    pub params: ProductPoint,
    pub hyper: HyperParams,
    pub feature_dim: usize,
    pub trained_n: usize,
    pub seed: u64,
}

impl GodsModel {
    /// Scores one point; the caller supplies `x` in the same normalization
    /// state as the training data.
    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.feature_dim {
            return Err(Error::invalid(format!(
                "point dimension {} does not match model dimension {}",
                x.len(),
                self.feature_dim
            )));
        }
        Ok(gods_point_score(
            self.params.w1.mat(),
            &self.params.b1,
            self.params.w2.mat(),
            &self.params.b2,
            self.hyper.eta,
            self.hyper.nu,
            x,
        ))
    }

    /// Scores every row, applying the stored normalization flag first.
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

    /// Signed margins (min-side, max-side) for each row of already-prepared
    /// data: the sandwich holds where the first is ≥ η and the second ≤ −η.
    pub fn margins(&self, dm: &DataMatrix) -> Result<Vec<(f64, f64)>> {
        if dm.d() != self.feature_dim {
            return Err(Error::invalid("dimension mismatch"));
        }
        let p = dm.x() * self.params.w1.mat();
        let q = dm.x() * self.params.w2.mat();
        Ok((0..dm.n())
            .map(|i| {
                let min_p = (0..self.hyper.k)
                    .map(|j| p[(i, j)] + self.params.b1[j])
                    .fold(f64::INFINITY, f64::min);
                let max_q = (0..self.hyper.k)
                    .map(|j| q[(i, j)] + self.params.b2[j])
                    .fold(f64::NEG_INFINITY, f64::max);
                (min_p, max_q)
            })
            .collect())
    }
}

/// Fits the model by Riemannian conjugate gradient from the distance-sorted
/// SVD initialization.
pub fn fit_gods(
    data: &DataMatrix,
    hyper: &HyperParams,
    cfg: &RcgConfig,
    seed: u64,
) -> Result<(GodsModel, RcgTrace)> {
    hyper.validate()?;
    let prepared = if hyper.normalize_rows {
        normalize_rows(data)?
    } else {
        data.clone()
    };
    let init = init_params(&prepared, hyper, seed)?;
    let objective = |p: &ProductPoint| gods_objective_grad(&prepared, p, hyper);
    let (params, trace) = minimize(objective, init, cfg)?;
    Ok((
        GodsModel {
            params,
            hyper: hyper.clone(),
            feature_dim: data.d(),
            trained_n: data.n(),
            seed,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::ManifoldPoint;
    use crate::rcg::grad_check;
    use approx::assert_relative_eq;

    fn unit_point(d: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[0] = 1.0;
        v
    }

    #[test]
    fn single_origin_point_hand_value() {
        // n=1, x=0, b=0, η=0.1, ν=1: α(0,0) + 1·(0.1)² + ½(0.1)² = 0.015.
        let data = DataMatrix::from_rows(&[&[0.0, 0.0, 0.0]]).unwrap();
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let mut rng = seeded_rng(1);
        let point = ProductPoint::new(
            StiefelPoint::random(3, 2, &mut rng).unwrap(),
            DVector::zeros(2),
            StiefelPoint::random(3, 2, &mut rng).unwrap(),
            DVector::zeros(2),
        )
        .unwrap();
        let (value, _) = gods_objective_grad(&data, &point, &hyper).unwrap();
        assert_relative_eq!(value, 0.015, epsilon = 1e-15);
    }

    #[test]
    fn projection_term_hand_value() {
        // K=1, single unit x with W₁ᵀx = 0.6, b₁ = 0: the j=1 projection
        // contribution is ½·0.36 = 0.18.
        let x = unit_point(2);
        let data = DataMatrix::from_rows(&[&[1.0, 0.0]]).unwrap();
        let w1 = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[0.6, 0.8])).unwrap();
        let w2 = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        assert_relative_eq!(w1.mat().transpose().row(0).transpose().dot(&x), 0.6);
        let point =
            ProductPoint::new(w1.clone(), DVector::zeros(1), w2, DVector::zeros(1)).unwrap();
        let hyper = HyperParams {
            k: 1,
            normalize_rows: false,
            ..Default::default()
        };
        let (value, _) = gods_objective_grad(&data, &point, &hyper).unwrap();
        let p_contrib = 0.5 * 0.36;
        // Remove the terms not under test: the w2 projection, α, and hinges.
        let q = point.w2.mat().transpose() * &x;
        let other = 0.5 * q.norm_squared()
            + squared_hinge(0.1 - 0.6, 1.0, 1.0, SlackMode::Zero).loss
            + squared_hinge(0.1 + q[0], 0.5, 1.0, SlackMode::Zero).loss;
        assert_relative_eq!(value - other, p_contrib, epsilon = 1e-12);
    }

    use super::super::SlackMode;

    #[test]
    fn gradient_matches_finite_differences_away_from_kinks() {
        let data = gen_test_cloud(30, 5, 42);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let point = random_kink_free_point(&data, &hyper, 9).unwrap();
        let err = grad_check(
            |p: &ProductPoint| gods_objective_grad(&data, p, &hyper),
            &point,
            10,
            1234,
        )
        .unwrap();
        assert!(err < 1e-5, "max relative error {err:.3e}");
    }

    #[test]
    fn gradient_matches_finite_differences_closed_form_slack() {
        let data = gen_test_cloud(20, 4, 17);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            slack: SlackMode::ClosedForm,
            c: 0.3,
            nu: 2.0,
            ..Default::default()
        };
        let point = random_kink_free_point(&data, &hyper, 31).unwrap();
        let err = grad_check(
            |p: &ProductPoint| gods_objective_grad(&data, p, &hyper),
            &point,
            10,
            77,
        )
        .unwrap();
        assert!(err < 1e-5, "max relative error {err:.3e}");
    }

    fn gen_test_cloud(n: usize, d: usize, seed: u64) -> DataMatrix {
        let mut rng = seeded_rng(seed);
        let x = standard_normal_matrix(n, d, &mut rng);
        DataMatrix::new(x, None, None).unwrap()
    }

    #[test]
    fn rotation_equivariance() {
        let data = gen_test_cloud(25, 4, 3);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let point = random_kink_free_point(&data, &hyper, 5).unwrap();
        let (value, _) = gods_objective_grad(&data, &point, &hyper).unwrap();

        let mut rng = seeded_rng(8);
        let rot = StiefelPoint::random(4, 4, &mut rng).unwrap();
        let rotated_x = data.x() * rot.mat(); // rows become (Rᵀxᵢ)ᵀ; use R = rotᵀ
        let rotated = DataMatrix::new(rotated_x, None, None).unwrap();
        let rpoint = ProductPoint::new(
            StiefelPoint::new(rot.mat().transpose() * point.w1.mat()).unwrap(),
            point.b1.clone(),
            StiefelPoint::new(rot.mat().transpose() * point.w2.mat()).unwrap(),
            point.b2.clone(),
        )
        .unwrap();
        let (rvalue, _) = gods_objective_grad(&rotated, &rpoint, &hyper).unwrap();
        assert_relative_eq!(value, rvalue, epsilon = 1e-10);

        // Scores are likewise invariant under the joint rotation.
        let x0 = data.row(0);
        let s = gods_point_score(
            point.w1.mat(),
            &point.b1,
            point.w2.mat(),
            &point.b2,
            hyper.eta,
            hyper.nu,
            &x0,
        );
        let s_rot = gods_point_score(
            rpoint.w1.mat(),
            &rpoint.b1,
            rpoint.w2.mat(),
            &rpoint.b2,
            hyper.eta,
            hyper.nu,
            &rotated.row(0),
        );
        assert_relative_eq!(s, s_rot, epsilon = 1e-10);
    }

    #[test]
    fn init_spans_orthogonal_repeats() {
        // K orthogonal unit vectors repeated: the selected points span them.
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let mut r = vec![0.0; 4];
                r[i % 2] = 1.0;
                r
            })
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let data = DataMatrix::from_rows(&refs).unwrap();
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let point = init_params(&data, &hyper, 0).unwrap();
        // Projector onto span(W₁) equals projector onto span(e₁,e₂).
        let p_w = point.w1.mat() * point.w1.mat().transpose();
        let mut p_e = DMatrix::zeros(4, 4);
        p_e[(0, 0)] = 1.0;
        p_e[(1, 1)] = 1.0;
        assert!((p_w - p_e).norm() < 1e-10);
    }

    #[test]
    fn init_is_feasible_with_zero_hinges() {
        let data = gen_test_cloud(60, 4, 21);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let point = init_params(&data, &hyper, 3).unwrap();
        for i in 0..data.n() {
            let x = data.row(i);
            let p = point.w1.mat().transpose() * &x + &point.b1;
            let q = point.w2.mat().transpose() * &x + &point.b2;
            let min_p = p.iter().cloned().fold(f64::INFINITY, f64::min);
            let max_q = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(min_p >= hyper.eta - 1e-12);
            assert!(max_q <= -hyper.eta + 1e-12);
        }
        // Hence the hinge sums vanish: the objective equals projection + α.
        let (value, _) = gods_objective_grad(&data, &point, &hyper).unwrap();
        let p = data.x() * point.w1.mat();
        let q = data.x() * point.w2.mat();
        let mut expected = 0.0;
        for i in 0..data.n() {
            for j in 0..hyper.k {
                expected += 0.5 * (p[(i, j)] + point.b1[j]).powi(2);
                expected += 0.5 * (q[(i, j)] + point.b2[j]).powi(2);
            }
        }
        let diff = &point.b1 - &point.b2;
        expected += diff.norm_squared() - point.b1.sum() - point.b2.sum();
        assert_relative_eq!(value, expected, epsilon = 1e-10);
    }

    #[test]
    fn init_matches_svd_oracle_up_to_sign() {
        let data = gen_test_cloud(60, 4, 33);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let point = init_params(&data, &hyper, 1).unwrap();
        assert!(point.w1.orthonormality_residual() < 1e-10);
        assert!(point.w2.orthonormality_residual() < 1e-10);

        // Oracle: eigenvectors of A·Aᵀ for the same far-point selection.
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| {
            data.x()
                .row(a)
                .norm()
                .partial_cmp(&data.x().row(b).norm())
                .unwrap()
        });
        let m = (3 * hyper.k).min(data.n() / 2);
        let far: Vec<usize> = order[data.n() - m..].to_vec();
        let mut pts = DMatrix::zeros(4, m);
        for (j, &i) in far.iter().enumerate() {
            pts.set_column(j, &data.row(i));
        }
        let gram = &pts * pts.transpose();
        let eig = gram.symmetric_eigen();
        let mut eig_order: Vec<usize> = (0..4).collect();
        eig_order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        let p_oracle = {
            let mut p = DMatrix::zeros(4, 4);
            for &j in eig_order.iter().take(hyper.k) {
                let v = eig.eigenvectors.column(j);
                p += v * v.transpose();
            }
            p
        };
        let p_w = point.w1.mat() * point.w1.mat().transpose();
        assert!((p_w - p_oracle).norm() < 1e-8);
    }

    #[test]
    fn init_small_n_falls_back_to_random_orthonormal() {
        let data = gen_test_cloud(4, 5, 2);
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        // n=4 < 3K=6 triggers the fallback; feasibility still holds.
        let point = init_params(&data, &hyper, 11).unwrap();
        assert!(point.w1.orthonormality_residual() < 1e-10);
        let margins = GodsModel {
            params: point,
            hyper: hyper.clone(),
            feature_dim: 5,
            trained_n: 4,
            seed: 11,
        }
        .margins(&data)
        .unwrap();
        for (lo, hi) in margins {
            assert!(lo >= hyper.eta - 1e-12 && hi <= -hyper.eta + 1e-12);
        }
    }

    #[test]
    fn init_rank_deficient_selection_pads() {
        // All points on one line; K=2 needs a padded second direction.
        let rows: Vec<Vec<f64>> = (1..=12).map(|i| vec![i as f64, 0.0, 0.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let data = DataMatrix::from_rows(&refs).unwrap();
        let hyper = HyperParams {
            k: 2,
            normalize_rows: false,
            ..Default::default()
        };
        let point = init_params(&data, &hyper, 4).unwrap();
        assert!(point.w1.orthonormality_residual() < 1e-10);
        assert!(point.w2.orthonormality_residual() < 1e-10);
    }

    #[test]
    fn fit_decreases_objective_and_flattens_gradient() {
        let data = crate::data::gen_gaussian(100, 7).unwrap();
        let hyper = HyperParams {
            k: 2,
            normalize_rows: true,
            ..Default::default()
        };
        // Stalling disabled so the run grinds the gradient flat.
        let cfg = RcgConfig {
            rel_obj_tol: 0.0,
            ..RcgConfig::default()
        };
        let (model, trace) = fit_gods(&data, &hyper, &cfg, 42).unwrap();
        assert!(trace.final_objective() < trace.initial_objective());
        assert!(
            trace.final_grad_norm() < 1e-4,
            "grad norm {:.3e}",
            trace.final_grad_norm()
        );
        assert!(trace.iterations() <= 500);
        assert!(model.params.constraint_residual() < 1e-8);
        // Finite parameters inside a sane box.
        assert!(model
            .params
            .b1
            .iter()
            .chain(model.params.b2.iter())
            .all(|b| b.abs() < 1e3));
    }

    #[test]
    fn fit_handles_duplicated_data() {
        let data = crate::data::gen_gaussian(40, 3).unwrap();
        let doubled = {
            let mut rows: Vec<Vec<f64>> = Vec::new();
            for i in 0..data.n() {
                rows.push(data.x().row(i).iter().cloned().collect());
            }
            let all: Vec<Vec<f64>> = rows.iter().chain(rows.iter()).cloned().collect();
            let refs: Vec<&[f64]> = all.iter().map(|r| r.as_slice()).collect();
            DataMatrix::from_rows(&refs).unwrap()
        };
        let hyper = HyperParams {
            k: 2,
            ..Default::default()
        };
        let cfg = RcgConfig::default();
        let (_, trace) = fit_gods(&doubled, &hyper, &cfg, 1).unwrap();
        assert!(trace.final_objective() <= trace.initial_objective());
    }

    /// Seeded annulus of radius ~1 around the origin.
    fn ring_data(n: usize, seed: u64) -> DataMatrix {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let radius = 1.0 + rng.gen_range(-0.1..0.1);
            x[(i, 0)] = radius * angle.cos();
            x[(i, 1)] = radius * angle.sin();
        }
        DataMatrix::new(x, None, None).unwrap()
    }

    #[test]
    fn ring_fit_sandwiches_post_slack_and_ranks_outliers() {
        let data = ring_data(100, 77);
        let hyper = HyperParams {
            k: 2,
            eta: 0.1,
            nu: 1.0,
            c: 1e-9,
            normalize_rows: false,
            slack: SlackMode::ClosedForm,
        };
        let (model, trace) = fit_gods(&data, &hyper, &RcgConfig::default(), 5).unwrap();
        assert!(trace.final_objective() < trace.initial_objective());

        // Post-slack containment: residual deficits beyond the closed-form
        // slack stay below 1e-6 for at least 90% of training points.
        let n = data.n() as f64;
        let (gamma_min, gamma_max) = (hyper.nu / n, 1.0 / (2.0 * n));
        let deficit = |t: f64, gamma: f64| t.max(0.0).min(hyper.c / (2.0 * gamma));
        let contained = model
            .margins(&data)
            .unwrap()
            .iter()
            .filter(|&&(lo, hi)| {
                deficit(hyper.eta - lo, gamma_min) <= 1e-6
                    && deficit(hyper.eta + hi, gamma_max) <= 1e-6
            })
            .count();
        assert!(contained >= 90, "contained {contained}/100");

        // A point far outside the margins outscores every training point.
        let train_scores = model.score_matrix(&data).unwrap();
        let train_max = train_scores
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let far = DVector::from_vec(vec![6.0, -5.0]);
        assert!(model.score(&far).unwrap() > train_max);
    }

    #[test]
    fn score_of_interior_point_is_projection_only() {
        let mut rng = seeded_rng(5);
        let w1 = StiefelPoint::random(4, 2, &mut rng).unwrap();
        let w2 = StiefelPoint::random(4, 2, &mut rng).unwrap();
        let x = DVector::from_vec(vec![0.3, -0.1, 0.2, 0.05]);
        // Biases chosen to satisfy both margins for this x by a wide gap.
        let p = w1.mat().transpose() * &x;
        let q = w2.mat().transpose() * &x;
        let b1 = DVector::from_fn(2, |j, _| 1.0 - p[j]);
        let b2 = DVector::from_fn(2, |j, _| -1.0 - q[j]);
        let score = gods_point_score(w1.mat(), &b1, w2.mat(), &b2, 0.1, 1.0, &x);
        let proj = 0.5
            * ((w1.mat().transpose() * &x + &b1).norm_squared()
                + (w2.mat().transpose() * &x + &b2).norm_squared());
        assert_relative_eq!(score, proj, epsilon = 1e-14);
    }

    #[test]
    fn score_at_origin_matches_objective_example() {
        let mut rng = seeded_rng(6);
        let w1 = StiefelPoint::random(3, 2, &mut rng).unwrap();
        let w2 = StiefelPoint::random(3, 2, &mut rng).unwrap();
        let x = DVector::zeros(3);
        let score = gods_point_score(
            w1.mat(),
            &DVector::zeros(2),
            w2.mat(),
            &DVector::zeros(2),
            0.1,
            1.0,
            &x,
        );
        assert_relative_eq!(score, 0.015, epsilon = 1e-15);
    }

    #[test]
    fn score_is_monotone_in_margin_violation() {
        // Along a ray that deepens the min-side deficit the score strictly
        // increases.
        let w1 = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap();
        let w2 = StiefelPoint::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let b1 = DVector::from_vec(vec![0.0]);
        let b2 = DVector::from_vec(vec![-5.0]);
        let mut last = f64::NEG_INFINITY;
        for step in 0..20 {
            let t = step as f64 * 0.1;
            let x = DVector::from_vec(vec![-t, 0.0]);
            let s = gods_point_score(w1.mat(), &b1, w2.mat(), &b2, 0.1, 1.0, &x);
            assert!(s > last, "score not increasing at t={t}");
            last = s;
        }
    }

    #[test]
    fn objective_rejects_mismatched_dimensions() {
        let data = gen_test_cloud(10, 3, 1);
        let hyper = HyperParams {
            k: 2,
            ..Default::default()
        };
        let mut rng = seeded_rng(2);
        let point = ProductPoint::new(
            StiefelPoint::random(4, 2, &mut rng).unwrap(),
            DVector::zeros(2),
            StiefelPoint::random(4, 2, &mut rng).unwrap(),
            DVector::zeros(2),
        )
        .unwrap();
        assert!(gods_objective_grad(&data, &point, &hyper).is_err());
    }
}
