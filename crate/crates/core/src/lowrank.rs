//! Low-rank gradient approximation.
//!
//! A weight matrix `W` (M×N) is treated as `W̃ + U·Vᵀ` with factors `U` (M×R)
//! and `V` (N×R). Only `U` and `V` receive optimizer updates; their gradients
//! follow from the full gradient `G` by the chain rule,
//!
//! ```text
//! ∇U = G·V        ∇V = Gᵀ·U
//! ```
//!
//! and the realised change of `W` is the difference of the low-rank products
//! before and after the factor update. `W̃` is never stored: the update is
//! applied to `W` directly as `W + U'·V'ᵀ − U·Vᵀ`.
//!
//! Factors are drawn fresh for every step, either from calibrated Gaussians
//! (`std 1/√(2M)` for `U`, `1/√(2N)` for `V`, so `UᵀU ≈ ½·I`) or from the top
//! singular vectors of `G` scaled by `1/√2`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{truncated_svd, Matrix, Rng};
use crate::optim::{OptimizerSpec, OptimizerState};

/// How factors are chosen at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMethod {
    /// Full-rank baseline; the optimizer acts on `W` itself.
    None,
    /// Calibrated Gaussian factors.
    Random,
    /// Top-R singular vectors of the gradient, each scaled by `1/√2`.
    Svd,
}

impl ProjectionMethod {
    pub const ALL: [ProjectionMethod; 3] = [Self::None, Self::Random, Self::Svd];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::Random => "random",
            Self::Svd => "svd",
        }
    }
}

/// Factors `U` (M×R) and `V` (N×R) of one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorPair {
    pub u: Matrix,
    pub v: Matrix,
}

impl FactorPair {
    pub fn new(u: Matrix, v: Matrix) -> Result<Self> {
        if u.cols() != v.cols() {
            return Err(invalid(format!(
                "factor ranks differ: u has {} columns, v has {}",
                u.cols(),
                v.cols()
            )));
        }
        if u.cols() > u.rows().min(v.rows()) {
            return Err(invalid(format!(
                "rank {} exceeds min({}, {})",
                u.cols(),
                u.rows(),
                v.rows()
            )));
        }
        Ok(Self { u, v })
    }

    pub fn rank(&self) -> usize {
        self.u.cols()
    }

    /// `(M, N)` of the weight matrix the factors belong to.
    pub fn weight_shape(&self) -> (usize, usize) {
        (self.u.rows(), self.v.rows())
    }

    /// `U·Vᵀ`.
    pub fn product(&self) -> Matrix {
        self.u.matmul_a_bt(&self.v).expect("factor ranks agree")
    }

    fn check_gradient(&self, g: &Matrix) -> Result<()> {
        if g.shape() != self.weight_shape() {
            return Err(Error::DimensionMismatch {
                op: "factor gradient",
                left: self.weight_shape(),
                right: g.shape(),
            });
        }
        Ok(())
    }
}

/// What one low-rank step did.
#[derive(Debug, Clone)]
pub struct LowRankStepReport {
    /// Realised change of `W`.
    pub delta_w: Matrix,
    /// First-order loss change `−λ·(‖GᵀU‖² + ‖GV‖²)`.
    pub predicted_loss_delta: f64,
    /// `UUᵀG + GVVᵀ`.
    pub effective_gradient: Matrix,
}

pub(crate) fn check_rank(m: usize, n: usize, r: usize) -> Result<()> {
    if r == 0 {
        return Err(invalid("rank must be at least 1"));
    }
    if r > m.min(n) {
        return Err(invalid(format!("rank {r} exceeds min({m}, {n})")));
    }
    Ok(())
}

/// Gaussian factors with per-entry standard deviations `1/√(2m)` and `1/√(2n)`.
/// `U` is drawn before `V`.
pub fn sample_random_factors(rng: &mut Rng, m: usize, n: usize, r: usize) -> Result<FactorPair> {
    check_rank(m, n, r)?;
    let u = rng.gaussian_matrix(m, r, (2.0 * m as f64).sqrt().recip())?;
    let v = rng.gaussian_matrix(n, r, (2.0 * n as f64).sqrt().recip())?;
    FactorPair::new(u, v)
}

/// Top-`r` singular vectors of `g`, scaled by `1/√2`.
///
/// With these factors `UUᵀG + GVVᵀ` is exactly the best rank-`r`
/// approximation of `g`: each projector contributes half of it.
pub fn svd_factors(g: &Matrix, r: usize) -> Result<FactorPair> {
    let (m, n) = g.shape();
    check_rank(m, n, r)?;
    let svd = truncated_svd(g, r)?;
    let half = std::f64::consts::FRAC_1_SQRT_2;
    FactorPair::new(svd.left.scale(half), svd.right.scale(half))
}

/// `(∇U, ∇V) = (G·V, Gᵀ·U)`.
pub fn factor_gradients(g: &Matrix, pair: &FactorPair) -> Result<(Matrix, Matrix)> {
    pair.check_gradient(g)?;
    let gu = g.matmul(&pair.v)?;
    let gv = g.matmul_at_b(&pair.u)?;
    Ok((gu, gv))
}

/// `U·Uᵀ·G + G·V·Vᵀ`.
pub fn effective_gradient(g: &Matrix, pair: &FactorPair) -> Result<Matrix> {
    pair.check_gradient(g)?;
    let ut_g = pair.u.matmul_at_b(g)?;
    let mut out = pair.u.matmul(&ut_g)?;
    let g_v = g.matmul(&pair.v)?;
    out.add_assign(&g_v.matmul_a_bt(&pair.v)?)?;
    Ok(out)
}

/// `U·∇Vᵀ + ∇U·Vᵀ`, the effective gradient assembled from factor gradients.
pub fn effective_gradient_from_factor_grads(
    pair: &FactorPair,
    gu: &Matrix,
    gv: &Matrix,
) -> Result<Matrix> {
    let mut out = pair.u.matmul_a_bt(gv)?;
    out.add_assign(&gu.matmul_a_bt(&pair.v)?)?;
    Ok(out)
}

/// First-order loss change of one gradient-descent step on the factors:
/// `−λ·(tr(UᵀGGᵀU) + tr(VᵀGᵀGV))`.
///
/// Both traces are squared Frobenius norms of R-column matrices, so the
/// result is never positive.
pub fn predicted_loss_delta(g: &Matrix, pair: &FactorPair, learning_rate: f64) -> Result<f64> {
    let (gu, gv) = factor_gradients(g, pair)?;
    Ok(predicted_from_factor_grads(&gu, &gv, learning_rate))
}

fn predicted_from_factor_grads(gu: &Matrix, gv: &Matrix, learning_rate: f64) -> f64 {
    -learning_rate * (gv.frobenius_norm_sq() + gu.frobenius_norm_sq())
}

/// Loss change of one full-rank gradient-descent step: `−λ·‖G‖²`.
pub fn full_rank_loss_delta(g: &Matrix, learning_rate: f64) -> f64 {
    -learning_rate * g.frobenius_norm_sq()
}

/// `W + (U+δU)(V+δV)ᵀ − UVᵀ`.
pub fn apply_factor_update(
    w: &Matrix,
    pair: &FactorPair,
    du: &Matrix,
    dv: &Matrix,
) -> Result<Matrix> {
    let u_next = pair.u.add(du)?;
    let v_next = pair.v.add(dv)?;
    let mut delta_w = u_next.matmul_a_bt(&v_next)?;
    delta_w.sub_assign(&pair.product())?;
    w.add(&delta_w)
}

/// `W + U·δVᵀ + δU·Vᵀ + δU·δVᵀ`; algebraically equal to [`apply_factor_update`].
pub fn apply_factor_update_expanded(
    w: &Matrix,
    pair: &FactorPair,
    du: &Matrix,
    dv: &Matrix,
) -> Result<Matrix> {
    let mut out = w.add(&pair.u.matmul_a_bt(dv)?)?;
    out.add_assign(&du.matmul_a_bt(&pair.v)?)?;
    out.add_assign(&du.matmul_a_bt(dv)?)?;
    Ok(out)
}

/// Chooses factors for one step.
pub fn select_factors(
    g: &Matrix,
    method: ProjectionMethod,
    rank: usize,
    rng: &mut Rng,
) -> Result<FactorPair> {
    let (m, n) = g.shape();
    match method {
        ProjectionMethod::None => Err(invalid("low-rank step needs a random or svd projection")),
        ProjectionMethod::Random => sample_random_factors(rng, m, n, rank),
        ProjectionMethod::Svd => svd_factors(g, rank),
    }
}

/// One low-rank update of `w` given its gradient `g`.
///
/// Draws factors, maps `g` onto them, lets `spec` update each factor with its
/// own state and returns the new `w`. The states carry over between calls
/// even though the factors are redrawn; reset them between calls to get
/// stateless behaviour.
#[allow(clippy::too_many_arguments)]
pub fn low_rank_step(
    w: &Matrix,
    g: &Matrix,
    method: ProjectionMethod,
    rank: usize,
    spec: &OptimizerSpec,
    state_u: &mut OptimizerState,
    state_v: &mut OptimizerState,
    rng: &mut Rng,
) -> Result<(Matrix, LowRankStepReport)> {
    if w.shape() != g.shape() {
        return Err(Error::DimensionMismatch {
            op: "low_rank_step",
            left: w.shape(),
            right: g.shape(),
        });
    }
    let (m, n) = w.shape();
    check_rank(m, n, rank)?;
    if state_u.shape() != (m, rank) || state_v.shape() != (n, rank) {
        return Err(invalid(format!(
            "factor states shaped {:?} and {:?}, expected {:?} and {:?}",
            state_u.shape(),
            state_v.shape(),
            (m, rank),
            (n, rank)
        )));
    }

    let pair = select_factors(g, method, rank, rng)?;
    let (gu, gv) = factor_gradients(g, &pair)?;
    let effective = effective_gradient(g, &pair)?;
    let predicted = predicted_from_factor_grads(&gu, &gv, spec.learning_rate);

    let du = spec.apply(state_u, &gu)?.delta;
    let dv = spec.apply(state_v, &gv)?.delta;
    let new_w = apply_factor_update(w, &pair, &du, &dv)?;
    let delta_w = new_w.sub(w)?;

    Ok((
        new_w,
        LowRankStepReport {
            delta_w,
            predicted_loss_delta: predicted,
            effective_gradient: effective,
        },
    ))
}

/// Owns the factor optimizer states for one weight matrix.
#[derive(Debug, Clone)]
pub struct LowRankOptimizer {
    spec: OptimizerSpec,
    method: ProjectionMethod,
    rank: usize,
    state_u: OptimizerState,
    state_v: OptimizerState,
    reset_each_step: bool,
}

impl LowRankOptimizer {
    pub fn new(
        spec: OptimizerSpec,
        method: ProjectionMethod,
        rows: usize,
        cols: usize,
        rank: usize,
        reset_each_step: bool,
    ) -> Result<Self> {
        spec.validate()?;
        check_rank(rows, cols, rank)?;
        if method == ProjectionMethod::None {
            return Err(invalid(
                "low-rank optimizer needs a random or svd projection",
            ));
        }
        Ok(Self {
            spec,
            method,
            rank,
            state_u: spec.init_state(rows, rank),
            state_v: spec.init_state(cols, rank),
            reset_each_step,
        })
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn method(&self) -> ProjectionMethod {
        self.method
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn states(&self) -> (&OptimizerState, &OptimizerState) {
        (&self.state_u, &self.state_v)
    }

    /// Updates `w` in place.
    pub fn step(&mut self, w: &mut Matrix, g: &Matrix, rng: &mut Rng) -> Result<LowRankStepReport> {
        if self.reset_each_step {
            let (m, n) = w.shape();
            self.state_u = self.spec.init_state(m, self.rank);
            self.state_v = self.spec.init_state(n, self.rank);
        }
        let (new_w, report) = low_rank_step(
            w,
            g,
            self.method,
            self.rank,
            &self.spec,
            &mut self.state_u,
            &mut self.state_v,
            rng,
        )?;
        *w = new_w;
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::relative_frobenius_error;

    #[test]
    fn zero_factor_gives_zero_gradient() {
        let mut rng = Rng::new(1);
        let g = rng.gaussian_matrix(4, 3, 1.0).unwrap();
        let u = rng.gaussian_matrix(4, 2, 1.0).unwrap();
        let pair = FactorPair::new(u.clone(), Matrix::zeros(3, 2)).unwrap();
        let (gu, _) = factor_gradients(&g, &pair).unwrap();
        assert_eq!(gu, Matrix::zeros(4, 2));
        let pair =
            FactorPair::new(Matrix::zeros(4, 2), rng.gaussian_matrix(3, 2, 1.0).unwrap()).unwrap();
        let (_, gv) = factor_gradients(&g, &pair).unwrap();
        assert_eq!(gv, Matrix::zeros(3, 2));
    }

    #[test]
    fn factor_gradients_hand_case() {
        let g = Matrix::identity(2);
        let e1 = Matrix::from_rows(&[[1.0], [0.0]]).unwrap();
        let pair = FactorPair::new(e1.clone(), e1.clone()).unwrap();
        let (gu, gv) = factor_gradients(&g, &pair).unwrap();
        assert_eq!(gu, e1);
        assert_eq!(gv, e1);
    }

    #[test]
    fn shape_errors() {
        let pair = FactorPair::new(Matrix::zeros(4, 2), Matrix::zeros(3, 2)).unwrap();
        assert!(factor_gradients(&Matrix::zeros(3, 4), &pair).is_err());
        assert!(effective_gradient(&Matrix::zeros(4, 4), &pair).is_err());
        assert!(FactorPair::new(Matrix::zeros(4, 2), Matrix::zeros(3, 1)).is_err());
        assert!(FactorPair::new(Matrix::zeros(4, 3), Matrix::zeros(2, 3)).is_err());
        assert!(sample_random_factors(&mut Rng::new(0), 4, 3, 0).is_err());
        assert!(sample_random_factors(&mut Rng::new(0), 4, 3, 4).is_err());
    }

    #[test]
    fn zero_factors_zero_effective_gradient() {
        let g = Rng::new(2).gaussian_matrix(3, 3, 1.0).unwrap();
        let pair = FactorPair::new(Matrix::zeros(3, 1), Matrix::zeros(3, 1)).unwrap();
        assert_eq!(effective_gradient(&g, &pair).unwrap(), Matrix::zeros(3, 3));
        assert_eq!(predicted_loss_delta(&g, &pair, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn two_effective_gradient_routes_agree() {
        let mut rng = Rng::new(77);
        let g = rng.gaussian_matrix(5, 4, 1.0).unwrap();
        let pair = sample_random_factors(&mut rng, 5, 4, 2).unwrap();
        let direct = effective_gradient(&g, &pair).unwrap();
        let (gu, gv) = factor_gradients(&g, &pair).unwrap();
        let via = effective_gradient_from_factor_grads(&pair, &gu, &gv).unwrap();
        assert!(relative_frobenius_error(&direct, &via, &direct).unwrap() <= 1e-12);
    }

    #[test]
    fn svd_factors_diag_rank_one() {
        let g = Matrix::diag(&[5.0, 3.0, 1.0]);
        let pair = svd_factors(&g, 1).unwrap();
        let eff = effective_gradient(&g, &pair).unwrap();
        assert!(
            eff.sub(&Matrix::diag(&[5.0, 0.0, 0.0]))
                .unwrap()
                .frobenius_norm()
                <= 1e-8
        );
        let gram = pair.u.matmul_at_b(&pair.u).unwrap().scale(2.0);
        assert!(gram.sub(&Matrix::identity(1)).unwrap().frobenius_norm() <= 1e-8);
    }

    #[test]
    fn svd_factors_full_rank_reproduce_gradient() {
        let g = Rng::new(5).gaussian_matrix(5, 4, 1.0).unwrap();
        let pair = svd_factors(&g, 4).unwrap();
        let eff = effective_gradient(&g, &pair).unwrap();
        assert!(eff.sub(&g).unwrap().frobenius_norm() <= 1e-8);
        for f in [&pair.u, &pair.v] {
            let gram = f.matmul_at_b(f).unwrap().scale(2.0);
            assert!(gram.sub(&Matrix::identity(4)).unwrap().frobenius_norm() <= 1e-8);
        }
    }

    #[test]
    fn predicted_delta_signs() {
        let mut rng = Rng::new(6);
        for _ in 0..100 {
            let g = rng.gaussian_matrix(6, 5, 1.0).unwrap();
            let pair = sample_random_factors(&mut rng, 6, 5, 2).unwrap();
            assert!(predicted_loss_delta(&g, &pair, 0.3).unwrap() <= 0.0);
        }
        let pair = sample_random_factors(&mut rng, 6, 5, 2).unwrap();
        assert_eq!(
            predicted_loss_delta(&Matrix::zeros(6, 5), &pair, 0.3).unwrap(),
            0.0
        );
    }

    #[test]
    fn full_rank_delta_values() {
        assert_eq!(full_rank_loss_delta(&Matrix::zeros(3, 3), 1.0), 0.0);
        assert_eq!(full_rank_loss_delta(&Matrix::identity(3), 1.0), -3.0);
    }

    #[test]
    fn zero_gradient_is_stationary() {
        let mut rng = Rng::new(8);
        let w = rng.gaussian_matrix(5, 4, 1.0).unwrap();
        let g = Matrix::zeros(5, 4);
        for spec in [
            OptimizerSpec::gradient_descent(0.1),
            OptimizerSpec::momentum(0.1, 0.9),
        ] {
            let mut su = spec.init_state(5, 2);
            let mut sv = spec.init_state(4, 2);
            let (new_w, rep) = low_rank_step(
                &w,
                &g,
                ProjectionMethod::Random,
                2,
                &spec,
                &mut su,
                &mut sv,
                &mut rng,
            )
            .unwrap();
            assert_eq!(new_w, w);
            assert_eq!(rep.predicted_loss_delta, 0.0);
        }
    }

    #[test]
    fn step_validates_inputs() {
        let spec = OptimizerSpec::gradient_descent(0.1);
        let w = Matrix::zeros(4, 3);
        let mut su = spec.init_state(4, 2);
        let mut sv = spec.init_state(3, 2);
        let mut rng = Rng::new(0);
        assert!(low_rank_step(
            &w,
            &w,
            ProjectionMethod::None,
            2,
            &spec,
            &mut su,
            &mut sv,
            &mut rng
        )
        .is_err());
        assert!(low_rank_step(
            &w,
            &w,
            ProjectionMethod::Random,
            1,
            &spec,
            &mut su,
            &mut sv,
            &mut rng
        )
        .is_err());
        assert!(low_rank_step(
            &w,
            &Matrix::zeros(3, 4),
            ProjectionMethod::Random,
            2,
            &spec,
            &mut su,
            &mut sv,
            &mut rng
        )
        .is_err());
        assert!(LowRankOptimizer::new(spec, ProjectionMethod::None, 4, 3, 2, false).is_err());
        assert!(LowRankOptimizer::new(spec, ProjectionMethod::Svd, 4, 3, 0, false).is_err());
    }

    #[test]
    fn optimizer_state_persists_or_resets() {
        let spec = OptimizerSpec::momentum(0.1, 0.9);
        let mut rng = Rng::new(3);
        let g = rng.gaussian_matrix(6, 5, 1.0).unwrap();
        let mut w = Matrix::zeros(6, 5);
        let mut keep =
            LowRankOptimizer::new(spec, ProjectionMethod::Random, 6, 5, 2, false).unwrap();
        let mut reset =
            LowRankOptimizer::new(spec, ProjectionMethod::Random, 6, 5, 2, true).unwrap();
        for _ in 0..3 {
            keep.step(&mut w, &g, &mut rng).unwrap();
            reset.step(&mut w, &g, &mut rng).unwrap();
        }
        assert_eq!(keep.states().0.step, 3);
        assert_eq!(reset.states().0.step, 1);
    }
}
