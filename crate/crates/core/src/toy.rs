//! Exp-matching objective `L(W) = (1/D²)·Σ (exp(wᵢⱼ) − exp(ŵᵢⱼ))²`.

use crate::error::{invalid, Error, Result};
use crate::linalg::{Matrix, Rng};

/// Largest allowed target magnitude.
pub const TARGET_BOUND: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ToyProblem {
    target: Matrix,
    exp_target: Matrix,
}

impl ToyProblem {
    pub fn new(target: Matrix) -> Result<Self> {
        if target.rows() != target.cols() {
            return Err(invalid(format!(
                "target must be square, got {:?}",
                target.shape()
            )));
        }
        if target
            .as_slice()
            .iter()
            .any(|x| x.is_nan() || x.abs() > TARGET_BOUND)
        {
            return Err(invalid(format!(
                "target entries must lie in [-{TARGET_BOUND}, {TARGET_BOUND}]"
            )));
        }
        let exp_target = target.map(f64::exp);
        Ok(Self { target, exp_target })
    }

    pub fn dim(&self) -> usize {
        self.target.rows()
    }

    pub fn target(&self) -> &Matrix {
        &self.target
    }

    pub fn loss(&self, w: &Matrix) -> Result<f64> {
        self.check(w)?;
        let mut sum = 0.0;
        for (&x, &e_hat) in w.as_slice().iter().zip(self.exp_target.as_slice()) {
            let e = x.exp();
            if !e.is_finite() {
                return Err(Error::NonFinite("loss: exp overflow"));
            }
            let r = e - e_hat;
            sum += r * r;
        }
        Ok(sum / self.norm())
    }

    /// `∂L/∂wᵢⱼ = (2/D²)·exp(wᵢⱼ)·(exp(wᵢⱼ) − exp(ŵᵢⱼ))`.
    pub fn gradient(&self, w: &Matrix) -> Result<Matrix> {
        self.check(w)?;
        let scale = 2.0 / self.norm();
        let mut data = Vec::with_capacity(w.as_slice().len());
        for (&x, &e_hat) in w.as_slice().iter().zip(self.exp_target.as_slice()) {
            let e = x.exp();
            let d = scale * e * (e - e_hat);
            if !d.is_finite() {
                return Err(Error::NonFinite("gradient: exp overflow"));
            }
            data.push(d);
        }
        Matrix::from_vec(w.rows(), w.cols(), data)
    }

    fn norm(&self) -> f64 {
        let d = self.dim() as f64;
        d * d
    }

    fn check(&self, w: &Matrix) -> Result<()> {
        if w.shape() != self.target.shape() {
            return Err(Error::DimensionMismatch {
                op: "toy objective",
                left: self.target.shape(),
                right: w.shape(),
            });
        }
        Ok(())
    }
}

pub fn loss(problem: &ToyProblem, w: &Matrix) -> Result<f64> {
    problem.loss(w)
}

pub fn loss_gradient(problem: &ToyProblem, w: &Matrix) -> Result<Matrix> {
    problem.gradient(w)
}

/// Target entries uniform on `[-1, 1)`, initial weights zero.
pub fn sample_problem(rng: &mut Rng, d: usize) -> Result<(ToyProblem, Matrix)> {
    if d == 0 {
        return Err(invalid("toy dimension must be at least 1"));
    }
    let data = (0..d * d).map(|_| rng.uniform(-1.0, 1.0)).collect();
    let problem = ToyProblem::new(Matrix::from_vec(d, d, data)?)?;
    Ok((problem, Matrix::zeros(d, d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem(rows: &[&[f64]]) -> ToyProblem {
        ToyProblem::new(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn zero_at_target() {
        let (p, _) = sample_problem(&mut Rng::new(1), 4).unwrap();
        assert_eq!(p.loss(p.target()).unwrap(), 0.0);
        assert_eq!(p.gradient(p.target()).unwrap(), Matrix::zeros(4, 4));
    }

    #[test]
    fn scalar_hand_values() {
        let p = problem(&[&[0.0]]);
        let w = Matrix::from_rows(&[[2f64.ln()]]).unwrap();
        assert!((p.loss(&w).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.gradient(&w).unwrap().get(0, 0) - 4.0).abs() < 1e-14);

        let p = problem(&[&[3f64.ln(), 0.0], &[0.0, 0.0]]);
        assert!((p.loss(&Matrix::zeros(2, 2)).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_targets_and_shapes() {
        assert!(ToyProblem::new(Matrix::zeros(2, 3)).is_err());
        assert!(ToyProblem::new(Matrix::from_rows(&[[2.5]]).unwrap()).is_err());
        assert!(ToyProblem::new(Matrix::from_rows(&[[f64::NAN]]).unwrap()).is_err());
        let p = problem(&[&[0.0]]);
        assert!(p.loss(&Matrix::zeros(2, 2)).is_err());
        let huge = Matrix::from_rows(&[[1000.0]]).unwrap();
        assert!(matches!(p.loss(&huge), Err(Error::NonFinite(_))));
        assert!(matches!(p.gradient(&huge), Err(Error::NonFinite(_))));
        assert!(sample_problem(&mut Rng::new(0), 0).is_err());
    }

    #[test]
    fn sample_problem_deterministic_and_bounded() {
        let (a, wa) = sample_problem(&mut Rng::new(9), 10).unwrap();
        let (b, wb) = sample_problem(&mut Rng::new(9), 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert_eq!(wa, Matrix::zeros(10, 10));
        assert!(a
            .target()
            .as_slice()
            .iter()
            .all(|x| (-1.0..1.0).contains(x)));
        let e = std::f64::consts::E;
        for seed in 0..100 {
            let (p, w) = sample_problem(&mut Rng::new(seed), 1).unwrap();
            let l = p.loss(&w).unwrap();
            assert!((0.0..=(e - 1.0 / e).powi(2)).contains(&l));
        }
        let (p, w) = sample_problem(&mut Rng::new(3), 100).unwrap();
        assert!(p.loss(&w).unwrap() > 0.0);
    }

    #[test]
    fn gradient_nonzero_away_from_target() {
        let mut rng = Rng::new(4);
        let (p, _) = sample_problem(&mut rng, 5).unwrap();
        for _ in 0..1000 {
            let w = Matrix::from_fn(5, 5, |_, _| rng.uniform(-2.0, 2.0));
            assert!(p.gradient(&w).unwrap().frobenius_norm() > 0.0);
            assert!(p.loss(&w).unwrap() > 0.0);
        }
    }
}
