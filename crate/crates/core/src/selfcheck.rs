//! Invariant suites run by `lowrank selfcheck`.
//!
//! Each suite draws its random instances from the given seed; the invariants
//! hold for every seed.

use crate::error::Result;
use crate::linalg::{relative_frobenius_error, truncated_svd, Matrix, Rng};
use crate::lowrank::{
    apply_factor_update, apply_factor_update_expanded, effective_gradient,
    effective_gradient_from_factor_grads, factor_gradients, predicted_loss_delta,
    sample_random_factors, svd_factors,
};
use crate::memory::{crossover_rank, full_rank_memory, low_rank_memory, LayerDims};
use crate::optim::{OptimizerKind, OptimizerSpec};
use crate::toy::{sample_problem, ToyProblem};

#[derive(Debug, Clone, Copy, Default)]
pub struct SelfcheckOptions {
    pub seed: u64,
    /// Corrupts the analytic gradient so the gradient suite must fail.
    pub inject_fault: bool,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Suite = fn(&mut Rng, &SelfcheckOptions) -> Result<(bool, String)>;

const SUITES: [(&str, Suite); 8] = [
    ("toy gradient vs finite differences", gradient_check),
    ("effective gradient, two routes", effective_gradient_routes),
    ("predicted loss change is non-positive", descent_sign),
    ("first-order loss prediction", first_order_prediction),
    ("random factor calibration", calibration),
    ("factor update, two formulations", update_equivalence),
    ("svd orthonormality and reconstruction", svd_check),
    ("memory crossover vs exhaustive search", memory_crossover),
];

pub fn run_selfcheck(opts: &SelfcheckOptions) -> Vec<SuiteOutcome> {
    SUITES
        .iter()
        .enumerate()
        .map(|(i, &(name, suite))| {
            let mut rng = Rng::new(opts.seed.wrapping_mul(1000).wrapping_add(i as u64));
            let (passed, detail) =
                suite(&mut rng, opts).unwrap_or_else(|e| (false, format!("error: {e}")));
            SuiteOutcome {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

/// Central difference of the toy loss in entry `(i, j)`.
pub fn central_difference(
    problem: &ToyProblem,
    w: &Matrix,
    i: usize,
    j: usize,
    h: f64,
) -> Result<f64> {
    let mut plus = w.clone();
    plus.set(i, j, w.get(i, j) + h);
    let mut minus = w.clone();
    minus.set(i, j, w.get(i, j) - h);
    Ok((problem.loss(&plus)? - problem.loss(&minus)?) / (2.0 * h))
}

fn gradient_check(rng: &mut Rng, opts: &SelfcheckOptions) -> Result<(bool, String)> {
    let (problem, _) = sample_problem(rng, 10)?;
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let w = Matrix::from_fn(10, 10, |_, _| rng.uniform(-1.5, 1.5));
        let mut g = problem.gradient(&w)?;
        if opts.inject_fault {
            g = g.scale(1.01);
        }
        for i in 0..10 {
            for j in 0..10 {
                let fd = central_difference(&problem, &w, i, j, 1e-6)?;
                let an = g.get(i, j);
                let err = (fd - an).abs() / an.abs().max(1e-3);
                worst = worst.max(err);
            }
        }
    }
    Ok((worst <= 1e-6, format!("max relative error {worst:.2e}")))
}

fn effective_gradient_routes(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = 1 + (rng.next_u64() % 20) as usize;
        let n = 1 + (rng.next_u64() % 20) as usize;
        let r = 1 + (rng.next_u64() % m.min(n).min(5) as u64) as usize;
        let g = rng.gaussian_matrix(m, n, 1.0)?;
        let pair = sample_random_factors(rng, m, n, r)?;
        let direct = effective_gradient(&g, &pair)?;
        let (gu, gv) = factor_gradients(&g, &pair)?;
        let via = effective_gradient_from_factor_grads(&pair, &gu, &gv)?;
        worst = worst.max(relative_frobenius_error(&direct, &via, &direct)?);
    }
    Ok((
        worst <= 1e-12,
        format!("max relative difference {worst:.2e}"),
    ))
}

fn descent_sign(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let mut positive = 0;
    for _ in 0..1000 {
        let g = rng.gaussian_matrix(8, 6, 1.0)?;
        let pair = sample_random_factors(rng, 8, 6, 3)?;
        if predicted_loss_delta(&g, &pair, 0.5)? > 0.0 {
            positive += 1;
        }
    }
    Ok((
        positive == 0,
        format!("{positive} positive predictions in 1000"),
    ))
}

fn first_order_prediction(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let lr = 1e-5;
    let (problem, w) = sample_problem(rng, 10)?;
    let spec = OptimizerSpec::gradient_descent(lr);
    let mut opt = crate::lowrank::LowRankOptimizer::new(
        spec,
        crate::lowrank::ProjectionMethod::Random,
        10,
        10,
        3,
        false,
    )?;
    let mut w = w;
    let mut inside = 0;
    let steps = 200;
    for _ in 0..steps {
        let before = problem.loss(&w)?;
        let g = problem.gradient(&w)?;
        let report = opt.step(&mut w, &g, rng)?;
        let ratio = (problem.loss(&w)? - before) / report.predicted_loss_delta;
        if (0.9..=1.1).contains(&ratio) {
            inside += 1;
        }
    }
    Ok((
        inside * 100 >= 95 * steps,
        format!("{inside}/{steps} ratios in [0.9, 1.1]"),
    ))
}

fn calibration(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let (m, r, seeds) = (500, 5, 100);
    let (mut diag, mut off) = (0.0, 0.0);
    for _ in 0..seeds {
        let pair = sample_random_factors(rng, m, m, r)?;
        for f in [&pair.u, &pair.v] {
            let gram = f.matmul_at_b(f)?;
            for i in 0..r {
                for j in 0..r {
                    if i == j {
                        diag += gram.get(i, j);
                    } else {
                        off += gram.get(i, j);
                    }
                }
            }
        }
    }
    let diag = diag / (2 * seeds * r) as f64;
    let off = off / (2 * seeds * r * (r - 1)) as f64;
    let ok = (0.45..=0.55).contains(&diag) && (-0.05..=0.05).contains(&off);
    Ok((
        ok,
        format!("mean diagonal {diag:.4}, mean off-diagonal {off:.4}"),
    ))
}

fn update_equivalence(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let m = 2 + (rng.next_u64() % 8) as usize;
        let n = 2 + (rng.next_u64() % 8) as usize;
        let r = 1 + (rng.next_u64() % m.min(n) as u64) as usize;
        let w = rng.gaussian_matrix(m, n, 1.0)?;
        let pair = sample_random_factors(rng, m, n, r)?;
        let du = rng.gaussian_matrix(m, r, 0.1)?;
        let dv = rng.gaussian_matrix(n, r, 0.1)?;
        let a = apply_factor_update(&w, &pair, &du, &dv)?;
        let b = apply_factor_update_expanded(&w, &pair, &du, &dv)?;
        worst = worst.max(relative_frobenius_error(&a, &b, &a)?);
    }
    Ok((
        worst <= 1e-14,
        format!("max relative difference {worst:.2e}"),
    ))
}

fn svd_check(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let g = rng.gaussian_matrix(9, 7, 1.0)?;
        let svd = truncated_svd(&g, 7)?;
        for q in [&svd.left, &svd.right] {
            let err = q
                .matmul_at_b(q)?
                .sub(&Matrix::identity(q.cols()))?
                .frobenius_norm();
            worst = worst.max(err);
        }
        worst = worst.max(relative_frobenius_error(&svd.reconstruct(), &g, &g)?);
        let pair = svd_factors(&g, 7)?;
        worst = worst.max(relative_frobenius_error(
            &effective_gradient(&g, &pair)?,
            &g,
            &g,
        )?);
    }
    Ok((worst <= 1e-8, format!("max error {worst:.2e}")))
}

fn memory_crossover(rng: &mut Rng, _: &SelfcheckOptions) -> Result<(bool, String)> {
    let mut mismatches = 0;
    for _ in 0..50 {
        let layers = 1 + (rng.next_u64() % 3) as usize;
        let shapes = (0..layers)
            .map(|_| {
                (
                    8 + (rng.next_u64() % 200) as usize,
                    8 + (rng.next_u64() % 200) as usize,
                )
            })
            .collect();
        let dims = LayerDims::new(shapes)?;
        for kind in [OptimizerKind::Momentum, OptimizerKind::Adam] {
            let full = full_rank_memory(&dims, kind).total_slots;
            let mut searched = 0;
            for r in 1..=dims.max_rank() {
                if low_rank_memory(&dims, kind, r)?.total_slots <= full {
                    searched = r;
                }
            }
            let closed = crossover_rank(&dims, kind)?.min(dims.max_rank());
            if closed != searched {
                mismatches += 1;
            }
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches} mismatches in 100 cases"),
    ))
}
