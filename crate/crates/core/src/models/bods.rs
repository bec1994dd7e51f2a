//! The basic hyperplane-pair model: unit-norm normals on the sphere St(d,1),
//! scalar biases, linear hinges, and an explicit coupling that pulls the two
//! hyperplanes together.

use nalgebra::DVector;

use crate::data::{normalize_rows, DataMatrix};
use crate::error::{Error, Result};
use crate::manifold::{ProductPoint, ProductTangent};
use crate::rcg::{minimize, RcgConfig, RcgTrace};

use super::gods::init_params;
use super::{linear_hinge, HyperParams};

fn expect_pair(point: &ProductPoint) -> Result<()> {
    if point.num_cols() != 1 {
        return Err(Error::invalid(format!(
            "the hyperplane-pair objective needs K=1 frames, got K={}",
            point.num_cols()
        )));
    }
    Ok(())
}

/// Objective and Euclidean gradients at a K=1 product point:
/// `(b₁−b₂)² − b₁ − b₂ − 2w₁ᵀw₂
///  + Σᵢ [η − (w₁ᵀxᵢ+b₁)]₊ + [η + (w₂ᵀxᵢ+b₂)]₊`
/// with the slacks eliminated per `hyper.slack` and subgradient 0 taken at
/// hinge kinks.
pub fn bods_objective_grad(
    data: &DataMatrix,
    point: &ProductPoint,
    hyper: &HyperParams,
) -> Result<(f64, ProductTangent)> {
    expect_pair(point)?;
    let (n, d) = (data.n(), data.d());
    if d != point.ambient_dim() {
        return Err(Error::invalid(format!(
            "data dimension {d} does not match model dimension {}",
            point.ambient_dim()
        )));
    }

    let w1 = point.w1.mat().column(0).into_owned();
    let w2 = point.w2.mat().column(0).into_owned();
    let (b1, b2) = (point.b1[0], point.b2[0]);

    let coupling = w1.dot(&w2);
    let mut value = (b1 - b2).powi(2) - b1 - b2 - 2.0 * coupling;
    let mut gw1 = w2.scale(-2.0);
    let mut gw2 = w1.scale(-2.0);
    let mut gb1 = 2.0 * (b1 - b2) - 1.0;
    let mut gb2 = -2.0 * (b1 - b2) - 1.0;

    let proj1 = data.x() * &w1;
    let proj2 = data.x() * &w2;
    for i in 0..n {
        let lo = linear_hinge(hyper.eta - (proj1[i] + b1), hyper.c, hyper.slack);
        value += lo.loss;
        if lo.slope != 0.0 {
            for r in 0..d {
                gw1[r] -= lo.slope * data.x()[(i, r)];
            }
            gb1 -= lo.slope;
        }
        let hi = linear_hinge(hyper.eta + proj2[i] + b2, hyper.c, hyper.slack);
        value += hi.loss;
        if hi.slope != 0.0 {
            for r in 0..d {
                gw2[r] += hi.slope * data.x()[(i, r)];
            }
            gb2 += hi.slope;
        }
    }

    let mut grad = ProductTangent::zeros(d, 1);
    grad.w1.set_column(0, &gw1);
    grad.w2.set_column(0, &gw2);
    grad.b1[0] = gb1;
    grad.b2[0] = gb2;
    Ok((value, grad))
}

/// Per-point score: the point's own hinge contributions,
/// `[η − (w₁ᵀx+b₁)]₊ + [η + (w₂ᵀx+b₂)]₊`. Zero deep inside the slab.
pub fn bods_point_score(
    w1: &DVector<f64>,
    b1: f64,
    w2: &DVector<f64>,
    b2: f64,
    eta: f64,
    x: &DVector<f64>,
) -> f64 {
    (eta - (w1.dot(x) + b1)).max(0.0) + (eta + w2.dot(x) + b2).max(0.0)
}

/// A fitted hyperplane-pair model.
#[derive(Debug, Clone)]
pub struct BodsModel {
    pub w1: DVector<f64>,
    pub b1: f64,
    pub w2: DVector<f64>,
    pub b2: f64,
    pub hyper: HyperParams,
    pub feature_dim: usize,
    pub trained_n: usize,
    pub seed: u64,
}

impl BodsModel {
    pub fn score(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.feature_dim {
            return Err(Error::invalid(format!(
                "point dimension {} does not match model dimension {}",
                x.len(),
                self.feature_dim
            )));
        }
        Ok(bods_point_score(
            &self.w1,
            self.b1,
            &self.w2,
            self.b2,
            self.hyper.eta,
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

/// Fits the hyperplane pair by RCG on St(d,1)×ℝ×St(d,1)×ℝ. The K in
/// `hyper` is ignored; this model always uses a single plane per side.
pub fn fit_bods(
    data: &DataMatrix,
    hyper: &HyperParams,
    cfg: &RcgConfig,
    seed: u64,
) -> Result<(BodsModel, RcgTrace)> {
    let hyper = HyperParams {
        k: 1,
        ..hyper.clone()
    };
    hyper.validate()?;
    let prepared = if hyper.normalize_rows {
        normalize_rows(data)?
    } else {
        data.clone()
    };
    let init = init_params(&prepared, &hyper, seed)?;
    let objective = |p: &ProductPoint| bods_objective_grad(&prepared, p, &hyper);
    let (params, trace) = minimize(objective, init, cfg)?;
    Ok((
        BodsModel {
            w1: params.w1.mat().column(0).into_owned(),
            b1: params.b1[0],
            w2: params.w2.mat().column(0).into_owned(),
            b2: params.b2[0],
            hyper,
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
    use crate::manifold::{standard_normal_matrix, StiefelPoint};
    use crate::rcg::grad_check;
    use crate::seeded_rng;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;

    fn pair_point(w1: &[f64], b1: f64, w2: &[f64], b2: f64) -> ProductPoint {
        let d = w1.len();
        ProductPoint::new(
            StiefelPoint::new(DMatrix::from_column_slice(d, 1, w1)).unwrap(),
            DVector::from_vec(vec![b1]),
            StiefelPoint::new(DMatrix::from_column_slice(d, 1, w2)).unwrap(),
            DVector::from_vec(vec![b2]),
        )
        .unwrap()
    }

    #[test]
    fn origin_point_hand_value() {
        // Single x = 0, b = 0, η = 0.1: hinges give 0.2, so the value is
        // −2w₁ᵀw₂ + 0.2.
        let data = DataMatrix::from_rows(&[&[0.0, 0.0]]).unwrap();
        let s = 1.0 / 2.0f64.sqrt();
        let point = pair_point(&[1.0, 0.0], 0.0, &[s, s], 0.0);
        let hyper = HyperParams {
            k: 1,
            normalize_rows: false,
            ..Default::default()
        };
        let (value, _) = bods_objective_grad(&data, &point, &hyper).unwrap();
        assert_relative_eq!(value, -2.0 * s + 0.2, epsilon = 1e-14);
    }

    #[test]
    fn identical_hyperplanes_collapse_value() {
        // With w₁ = w₂ and b₁ = b₂ = b the coupling is −2 and α collapses to
        // −2b, so on margin-satisfying data (zero hinge sums) the value is
        // −2 − 2b. No point can satisfy both margins of a single shared
        // plane, so subtract the known hinge sums before comparing.
        let data = DataMatrix::from_rows(&[&[5.0, 0.0], &[6.0, 0.0]]).unwrap();
        let b = -3.0;
        let point = pair_point(&[1.0, 0.0], b, &[1.0, 0.0], b);
        let hyper = HyperParams {
            k: 1,
            normalize_rows: false,
            ..Default::default()
        };
        let (value, _) = bods_objective_grad(&data, &point, &hyper).unwrap();
        let hinges: f64 = [5.0, 6.0]
            .iter()
            .map(|&p| (hyper.eta - (p + b)).max(0.0) + (hyper.eta + p + b).max(0.0))
            .sum();
        assert_relative_eq!(value - hinges, -2.0 - 2.0 * b, epsilon = 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded_rng(50);
        let x = standard_normal_matrix(20, 2, &mut rng);
        let data = DataMatrix::new(x, None, None).unwrap();
        let hyper = HyperParams {
            k: 1,
            normalize_rows: false,
            ..Default::default()
        };

        // Seeded search for a point with all margins clear of the kinks.
        let point = (0..200)
            .find_map(|attempt| {
                let mut r = seeded_rng(900 + attempt * 7919);
                let p = ProductPoint::new(
                    StiefelPoint::random(2, 1, &mut r).unwrap(),
                    DVector::from_vec(vec![standard_normal_matrix(1, 1, &mut r)[(0, 0)]]),
                    StiefelPoint::random(2, 1, &mut r).unwrap(),
                    DVector::from_vec(vec![standard_normal_matrix(1, 1, &mut r)[(0, 0)]]),
                )
                .unwrap();
                let clear = data.x().row_iter().all(|row| {
                    let x = row.transpose();
                    let m1 = hyper.eta - (p.w1.mat().column(0).dot(&x) + p.b1[0]);
                    let m2 = hyper.eta + p.w2.mat().column(0).dot(&x) + p.b2[0];
                    m1.abs() > 1e-3 && m2.abs() > 1e-3
                });
                clear.then_some(p)
            })
            .expect("kink-free point");
        let err = grad_check(
            |p: &ProductPoint| bods_objective_grad(&data, p, &hyper),
            &point,
            10,
            11,
        )
        .unwrap();
        assert!(err < 1e-5, "max relative error {err:.3e}");
    }

    #[test]
    fn fit_bounds_gaussian_cloud_from_both_sides() {
        let data = crate::data::gen_gaussian(100, 19).unwrap();
        let hyper = HyperParams {
            k: 1,
            normalize_rows: false,
            ..Default::default()
        };
        let cfg = RcgConfig::default();
        let (model, trace) = fit_bods(&data, &hyper, &cfg, 7).unwrap();
        assert!(trace.final_objective() < trace.initial_objective());
        assert!((model.w1.norm() - 1.0).abs() < 1e-10);
        assert!((model.w2.norm() - 1.0).abs() < 1e-10);

        let tol = 1e-3;
        let mut lo_ok = 0;
        let mut hi_ok = 0;
        for i in 0..data.n() {
            let x = data.row(i);
            if model.w1.dot(&x) + model.b1 >= hyper.eta - tol {
                lo_ok += 1;
            }
            if model.w2.dot(&x) + model.b2 <= -hyper.eta + tol {
                hi_ok += 1;
            }
        }
        assert!(lo_ok >= 90, "positive side holds for {lo_ok}/100");
        assert!(hi_ok >= 90, "negative side holds for {hi_ok}/100");
    }

    #[test]
    fn repeated_point_reaches_zero_hinges() {
        let rows: Vec<Vec<f64>> = (0..5).map(|_| vec![0.4, -0.7, 0.2]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let data = DataMatrix::from_rows(&refs).unwrap();
        let hyper = HyperParams {
            k: 1,
            normalize_rows: false,
            ..Default::default()
        };
        let (model, _) = fit_bods(&data, &hyper, &RcgConfig::default(), 3).unwrap();
        let x = data.row(0);
        let hinge_lo = (hyper.eta - (model.w1.dot(&x) + model.b1)).max(0.0);
        let hinge_hi = (hyper.eta + model.w2.dot(&x) + model.b2).max(0.0);
        assert!(hinge_lo < 1e-8 && hinge_hi < 1e-8);
    }

    #[test]
    fn two_point_dataset_fits() {
        let data = DataMatrix::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
        let hyper = HyperParams::default();
        let out = fit_bods(&data, &hyper, &RcgConfig::default(), 42);
        assert!(out.is_ok());
    }

    #[test]
    fn score_zero_inside_slab_and_dimension_checked() {
        let model = BodsModel {
            w1: DVector::from_vec(vec![1.0, 0.0]),
            b1: 0.5,
            w2: DVector::from_vec(vec![0.0, 1.0]),
            b2: -3.0,
            hyper: HyperParams {
                k: 1,
                normalize_rows: false,
                ..Default::default()
            },
            feature_dim: 2,
            trained_n: 10,
            seed: 0,
        };
        let inside = DVector::from_vec(vec![0.5, 0.5]);
        assert_eq!(model.score(&inside).unwrap(), 0.0);
        let outside = DVector::from_vec(vec![-2.0, 0.0]);
        assert!(model.score(&outside).unwrap() > 0.0);
        assert!(model.score(&DVector::zeros(3)).is_err());
    }
}
