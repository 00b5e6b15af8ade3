//! Closed-form projection updates.
//!
//! Both solvers take a pretrained projection `W_o` (`m × d`), target features
//! `X` and anchor features `Y` (both `d × N`, column `i` of one paired with
//! column `i` of the other) and return an edited `W*`:
//!
//! * [`uce_solve`] minimizes `‖WX − W_oY‖²_F + ‖W − W_o‖²_F`, which leaves a
//!   non-zero alignment residual for almost every `X ≠ Y`.
//! * [`erasepro_solve`] minimizes `‖W − W_o‖²_F` subject to `WX = W_oY`
//!   exactly, falling back to the pseudoinverse of `X` when `X` loses column
//!   rank.

use serde::{Deserialize, Serialize};

use crate::error::{LinalgError, SolveError};
use crate::linalg::{
    fro_norm, inverse, matmul, matmul_chain, pseudoinverse, rank, Matrix, DEFAULT_CONDITION_CAP, DEFAULT_PINV_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Relative singular-value cutoff for rank decisions and the pseudoinverse.
    pub pinv_tol: f64,
    /// Tikhonov term added to `XᵀX` in the constrained solver. Zero disables it.
    pub ridge_eps: f64,
    /// Relative tolerance for post-hoc constraint verification.
    pub constraint_tol: f64,
    pub condition_cap: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { pinv_tol: DEFAULT_PINV_TOL, ridge_eps: 0.0, constraint_tol: 1e-9, condition_cap: DEFAULT_CONDITION_CAP }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = [("pinv_tol", self.pinv_tol), ("constraint_tol", self.constraint_tol), ("condition_cap", self.condition_cap)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SolveError::Config(format!("{name} must be positive and finite (got {v})")));
            }
        }
        if !(self.ridge_eps.is_finite() && self.ridge_eps >= 0.0) {
            return Err(SolveError::Config(format!("ridge_eps must be non-negative (got {})", self.ridge_eps)));
        }
        Ok(())
    }

    /// Largest residual `‖W*X − W_oY‖_F` the constrained solver accepts.
    pub fn constraint_bound(&self, anchor_norm: f64) -> f64 {
        self.constraint_tol * (1.0 + anchor_norm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub w_star: Matrix,
    /// `w_star − W_o`, entrywise.
    pub delta: Matrix,
    pub delta_fro: f64,
    /// `‖W*X − W_oY‖_F`
    pub residual_fro: f64,
    pub rank_of_x: usize,
    pub used_pseudoinverse: bool,
}

impl EditResult {
    fn build(w_o: &Matrix, w_star: Matrix, residual_fro: f64, rank_of_x: usize, used_pseudoinverse: bool) -> Result<Self, SolveError> {
        let delta = w_star.sub(w_o)?;
        Ok(Self { delta_fro: fro_norm(&delta), w_star, delta, residual_fro, rank_of_x, used_pseudoinverse })
    }
}

fn check_dims(w_o: &Matrix, x: &Matrix, y: &Matrix) -> Result<(), LinalgError> {
    if x.shape() != y.shape() {
        return Err(LinalgError::Shape { op: "target/anchor features", left: x.shape(), right: y.shape() });
    }
    if w_o.cols() != x.rows() {
        return Err(LinalgError::Shape { op: "projection vs features", left: w_o.shape(), right: x.shape() });
    }
    Ok(())
}

/// `‖WX − W_oY‖_F`
pub fn alignment_residual(w: &Matrix, w_o: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64, LinalgError> {
    Ok(fro_norm(&matmul(w, x)?.sub(&matmul(w_o, y)?)?))
}

/// `‖WX − W_oY‖²_F + ‖W − W_o‖²_F`
pub fn uce_objective(w: &Matrix, w_o: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64, SolveError> {
    check_dims(w_o, x, y)?;
    if w.shape() != w_o.shape() {
        return Err(LinalgError::Shape { op: "uce_objective", left: w.shape(), right: w_o.shape() }.into());
    }
    let align = alignment_residual(w, w_o, x, y)?;
    let reg = fro_norm(&w.sub(w_o)?);
    Ok(align * align + reg * reg)
}

/// `XXᵀ + I`
fn regularized_gram(x: &Matrix) -> Result<Matrix, LinalgError> {
    matmul(x, &x.transpose())?.add(&Matrix::identity(x.rows()))
}

/// `W* = (W_oYXᵀ + W_o)(XXᵀ + I)⁻¹`
pub fn uce_solve(w_o: &Matrix, x: &Matrix, y: &Matrix, cfg: &SolverConfig) -> Result<EditResult, SolveError> {
    check_dims(w_o, x, y)?;
    cfg.validate()?;
    let rank_of_x = if x.cols() == 0 { 0 } else { rank(x, cfg.pinv_tol) };
    if x == y {
        // both objective terms vanish at W_o, so it is the exact minimizer
        return EditResult::build(w_o, w_o.clone(), 0.0, rank_of_x, false);
    }
    let xt = x.transpose();
    let rhs = matmul_chain(&[w_o, y, &xt])?.add(w_o)?;
    let w_star = matmul(&rhs, &inverse(&regularized_gram(x)?, cfg.condition_cap)?)?;
    let residual = alignment_residual(&w_star, w_o, x, y)?;
    EditResult::build(w_o, w_star, residual, rank_of_x, false)
}

/// Squared alignment residual left by [`uce_solve`], evaluated in closed form:
/// `‖W_o[(YXᵀ + I)(XXᵀ + I)⁻¹X − Y]‖²_F`.
pub fn uce_residual_formula(w_o: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64, SolveError> {
    check_dims(w_o, x, y)?;
    let xt = x.transpose();
    let left = matmul(y, &xt)?.add(&Matrix::identity(x.rows()))?;
    let inv = inverse(&regularized_gram(x)?, DEFAULT_CONDITION_CAP)?;
    let inner = matmul_chain(&[&left, &inv, x])?.sub(y)?;
    Ok(fro_norm(&matmul(w_o, &inner)?).powi(2))
}

/// Deviation of the unconstrained solution from `W_o`:
/// `W_o(Y − X)Xᵀ(XXᵀ + I)⁻¹`.
pub fn uce_deviation_formula(w_o: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix, SolveError> {
    check_dims(w_o, x, y)?;
    let gap = y.sub(x)?;
    let inv = inverse(&regularized_gram(x)?, DEFAULT_CONDITION_CAP)?;
    Ok(matmul_chain(&[w_o, &gap, &x.transpose(), &inv])?)
}

/// Minimal-norm update satisfying `W*X = W_oY` column by column:
/// `W* = W_o + (W_oY − W_oX)(XᵀX)⁻¹Xᵀ`, or `W_o + (W_oY − W_oX)X⁺` when `X`
/// is column-rank-deficient.
///
/// With `ridge_eps > 0` the Gram matrix becomes `XᵀX + εI` and the
/// constraint is only approximately met, so it is not verified.
pub fn erasepro_solve(w_o: &Matrix, x: &Matrix, y: &Matrix, cfg: &SolverConfig) -> Result<EditResult, SolveError> {
    check_dims(w_o, x, y)?;
    cfg.validate()?;
    let n = x.cols();
    if n == 0 {
        return EditResult::build(w_o, w_o.clone(), 0.0, 0, false);
    }

    let anchor = matmul(w_o, y)?;
    let gap = anchor.sub(&matmul(w_o, x)?)?;
    let bound = cfg.constraint_bound(fro_norm(&anchor));
    let rank_of_x = rank(x, cfg.pinv_tol);
    let xt = x.transpose();

    if cfg.ridge_eps > 0.0 {
        let gram = matmul(&xt, x)?.add(&Matrix::identity(n).scale(cfg.ridge_eps)?)?;
        let w_star = w_o.add(&matmul_chain(&[&gap, &inverse(&gram, cfg.condition_cap)?, &xt])?)?;
        let residual = fro_norm(&matmul(&w_star, x)?.sub(&anchor)?);
        return EditResult::build(w_o, w_star, residual, rank_of_x, false);
    }

    if rank_of_x == n {
        if let Ok(gram_inv) = inverse(&matmul(&xt, x)?, cfg.condition_cap) {
            let w_star = w_o.add(&matmul_chain(&[&gap, &gram_inv, &xt])?)?;
            let residual = fro_norm(&matmul(&w_star, x)?.sub(&anchor)?);
            if residual <= bound {
                return EditResult::build(w_o, w_star, residual, rank_of_x, false);
            }
        }
        // an ill-conditioned Gram matrix loses accuracy; the SVD route does not square the condition number
    }

    let w_star = w_o.add(&matmul(&gap, &pseudoinverse(x, cfg.pinv_tol))?)?;
    let residual_cols = matmul(&w_star, x)?.sub(&anchor)?;
    let residual = fro_norm(&residual_cols);
    if residual <= bound {
        return EditResult::build(w_o, w_star, residual, rank_of_x, true);
    }

    let pairs = inconsistent_duplicates(x, &anchor, cfg.constraint_tol);
    let columns: Vec<usize> = (0..n)
        .filter(|&j| fro_norm(&residual_cols.col_range(j, j + 1)) > bound / (n as f64).sqrt())
        .collect();
    if pairs.is_empty() && rank_of_x == n {
        return Err(SolveError::ConstraintViolated { residual, bound });
    }
    Err(SolveError::Infeasible { pairs, columns, residual })
}

/// Pairs `(i, j)` of numerically equal target columns whose constraint
/// targets `W_o y_i`, `W_o y_j` disagree.
fn inconsistent_duplicates(x: &Matrix, anchor: &Matrix, tol: f64) -> Vec<(usize, usize)> {
    let n = x.cols();
    let xs: Vec<Vec<f64>> = (0..n).map(|j| x.col(j)).collect();
    let ts: Vec<Vec<f64>> = (0..n).map(|j| anchor.col(j)).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    let norm = |a: &[f64]| a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let same_x = dist(&xs[i], &xs[j]) <= tol * (1.0 + norm(&xs[i]));
            let same_t = dist(&ts[i], &ts[j]) <= tol * (1.0 + norm(&ts[i]));
            if same_x && !same_t {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// A closed-form projection update, selectable by name.
pub trait ProjectionSolver: Send + Sync {
    fn name(&self) -> &'static str;

    /// Whether successful solves guarantee `W*X = W_oY` up to `constraint_tol`.
    fn enforces_constraint(&self) -> bool;

    fn solve(&self, w_o: &Matrix, x: &Matrix, y: &Matrix, cfg: &SolverConfig) -> Result<EditResult, SolveError>;
}

/// Unconstrained ridge-style alignment.
#[derive(Debug, Clone, Copy, Default)]
pub struct UceSolver;

impl ProjectionSolver for UceSolver {
    fn name(&self) -> &'static str {
        "uce"
    }

    fn enforces_constraint(&self) -> bool {
        false
    }

    fn solve(&self, w_o: &Matrix, x: &Matrix, y: &Matrix, cfg: &SolverConfig) -> Result<EditResult, SolveError> {
        uce_solve(w_o, x, y, cfg)
    }
}

/// Zero-residual minimal-norm update.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstrainedSolver;

impl ProjectionSolver for ConstrainedSolver {
    fn name(&self) -> &'static str {
        "constrained"
    }

    fn enforces_constraint(&self) -> bool {
        true
    }

    fn solve(&self, w_o: &Matrix, x: &Matrix, y: &Matrix, cfg: &SolverConfig) -> Result<EditResult, SolveError> {
        erasepro_solve(w_o, x, y, cfg)
    }
}

/// Looks up a solver by name (`uce` or `constrained`).
pub fn solver_by_name(name: &str) -> Option<Box<dyn ProjectionSolver>> {
    match name {
        "uce" => Some(Box::new(UceSolver)),
        "constrained" | "erasepro" => Some(Box::new(ConstrainedSolver)),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    fn hand() -> (Matrix, Matrix, Matrix) {
        (Matrix::identity(2), m(&[&[1.0], &[0.0]]), m(&[&[0.0], &[1.0]]))
    }

    fn random_instance(seed: u64, m_: usize, d: usize, n: usize) -> (Matrix, Matrix, Matrix) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (
            Matrix::random_normal(m_, d, 1.0, &mut r),
            Matrix::random_normal(d, n, 1.0, &mut r),
            Matrix::random_normal(d, n, 1.0, &mut r),
        )
    }

    #[test]
    fn objective_examples() {
        let (w_o, x, y) = hand();
        assert_eq!(uce_objective(&w_o, &w_o, &x, &x).unwrap(), 0.0);
        assert!((uce_objective(&w_o, &w_o, &x, &y).unwrap() - 2.0).abs() < 1e-15);

        let (w_o, x, y) = random_instance(2, 3, 4, 2);
        let w = w_o.add(&Matrix::random_normal(3, 4, 0.1, &mut ChaCha8Rng::seed_from_u64(9))).unwrap();
        let mut direct = 0.0;
        for i in 0..3 {
            for j in 0..2 {
                let mut s = 0.0;
                for k in 0..4 {
                    s += w.get(i, k) * x.get(k, j) - w_o.get(i, k) * y.get(k, j);
                }
                direct += s * s;
            }
            for k in 0..4 {
                direct += (w.get(i, k) - w_o.get(i, k)).powi(2);
            }
        }
        assert!((uce_objective(&w, &w_o, &x, &y).unwrap() - direct).abs() <= 1e-12 * (1.0 + direct));
    }

    #[test]
    fn uce_hand_instance() {
        let (w_o, x, y) = hand();
        let r = uce_solve(&w_o, &x, &y, &SolverConfig::default()).unwrap();
        assert!(r.w_star.max_abs_diff(&m(&[&[0.5, 0.0], &[0.5, 1.0]])) <= 1e-12);
        assert!((r.residual_fro - 0.5f64.sqrt()).abs() <= 1e-12);
        assert!((uce_residual_formula(&w_o, &x, &y).unwrap() - 0.5).abs() <= 1e-12);
        let dev = uce_deviation_formula(&w_o, &x, &y).unwrap();
        assert!(dev.max_abs_diff(&m(&[&[-0.5, 0.0], &[0.5, 0.0]])) <= 1e-12);
    }

    #[test]
    fn uce_trivial_cases() {
        let (w_o, x, y) = random_instance(4, 3, 4, 2);
        let same = uce_solve(&w_o, &x, &x, &SolverConfig::default()).unwrap();
        assert_eq!(same.w_star, w_o);
        assert!(same.delta.is_zero());
        assert!(uce_residual_formula(&w_o, &x, &x).unwrap() <= 1e-24);
        assert!(uce_deviation_formula(&w_o, &x, &x).unwrap().is_zero());

        let empty = Matrix::zeros(4, 0);
        assert_eq!(uce_solve(&w_o, &empty, &empty, &SolverConfig::default()).unwrap().w_star, w_o);
        assert!(uce_solve(&w_o, &x, &y.col_range(0, 1), &SolverConfig::default()).is_err());
    }

    #[test]
    fn uce_stationarity() {
        for seed in 0..10 {
            let (w_o, x, y) = random_instance(seed, 5, 4, 3);
            let r = uce_solve(&w_o, &x, &y, &SolverConfig::default()).unwrap();
            let gram = regularized_gram(&x).unwrap();
            let rhs = matmul(&w_o, &matmul(&y, &x.transpose()).unwrap().add(&Matrix::identity(4)).unwrap()).unwrap();
            let lhs = matmul(&r.w_star, &gram).unwrap();
            assert!(fro_norm(&lhs.sub(&rhs).unwrap()) <= 1e-9 * (1.0 + fro_norm(&w_o)));
        }
    }

    #[test]
    fn deviation_is_linear_in_the_gap() {
        let (w_o, x, y) = random_instance(8, 4, 4, 2);
        let base = uce_deviation_formula(&w_o, &x, &y).unwrap();
        let y2 = x.add(&y.sub(&x).unwrap().scale(2.0).unwrap()).unwrap();
        let doubled = uce_deviation_formula(&w_o, &x, &y2).unwrap();
        assert!(doubled.max_abs_diff(&base.scale(2.0).unwrap()) <= 1e-12);
    }

    #[test]
    fn constrained_hand_instance() {
        let (w_o, x, y) = hand();
        let r = erasepro_solve(&w_o, &x, &y, &SolverConfig::default()).unwrap();
        assert!(r.w_star.max_abs_diff(&m(&[&[0.0, 0.0], &[1.0, 1.0]])) <= 1e-12);
        assert_eq!(matmul(&r.w_star, &x).unwrap(), y);
        assert_eq!(r.residual_fro, 0.0);
        assert!(!r.used_pseudoinverse);
        assert_eq!(r.rank_of_x, 1);
    }

    #[test]
    fn constrained_identity_when_aligned() {
        let (w_o, x, _) = random_instance(12, 4, 5, 3);
        let r = erasepro_solve(&w_o, &x, &x, &SolverConfig::default()).unwrap();
        assert_eq!(r.w_star, w_o);
        assert_eq!(r.delta_fro, 0.0);
    }

    #[test]
    fn constrained_rank_deficient_consistent() {
        let w_o = Matrix::identity(2);
        let x = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let y = m(&[&[0.0, 0.0], &[1.0, 1.0]]);
        let r = erasepro_solve(&w_o, &x, &y, &SolverConfig::default()).unwrap();
        assert!(r.used_pseudoinverse);
        assert_eq!(r.rank_of_x, 1);
        assert!(r.w_star.max_abs_diff(&m(&[&[0.0, 0.0], &[1.0, 1.0]])) <= 1e-12);
        assert!(r.residual_fro <= 1e-9);
    }

    #[test]
    fn constrained_rank_deficient_inconsistent() {
        let w_o = Matrix::identity(2);
        let x = m(&[&[1.0, 1.0], &[0.0, 0.0]]);
        let y = m(&[&[0.0, 1.0], &[1.0, 0.0]]);
        match erasepro_solve(&w_o, &x, &y, &SolverConfig::default()) {
            Err(SolveError::Infeasible { pairs, columns, residual }) => {
                assert_eq!(pairs, vec![(0, 1)]);
                assert_eq!(columns, vec![0, 1]);
                assert!(residual > 0.5);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn ridge_relaxes_the_constraint() {
        let (w_o, x, y) = random_instance(5, 3, 4, 2);
        let cfg = SolverConfig { ridge_eps: 0.5, ..Default::default() };
        let r = erasepro_solve(&w_o, &x, &y, &cfg).unwrap();
        assert!(r.residual_fro > 1e-6);
        assert!(!r.used_pseudoinverse);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { pinv_tol: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { ridge_eps: -1.0, ..Default::default() }.validate().is_err());
        let (w_o, x, y) = hand();
        let bad = SolverConfig { constraint_tol: f64::NAN, ..Default::default() };
        assert!(matches!(erasepro_solve(&w_o, &x, &y, &bad), Err(SolveError::Config(_))));
    }

    #[test]
    fn registry_names() {
        assert_eq!(solver_by_name("uce").unwrap().name(), "uce");
        assert!(solver_by_name("constrained").unwrap().enforces_constraint());
        assert!(solver_by_name("gradient").is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn constrained_solution_has_zero_residual_and_minimal_norm(
                seed in any::<u64>(), m_ in 1usize..7, d in 2usize..8, frac in 0.1f64..1.0
            ) {
                let n = ((d as f64 * frac) as usize).max(1);
                let (w_o, x, y) = random_instance(seed, m_, d, n);
                let r = erasepro_solve(&w_o, &x, &y, &SolverConfig::default()).unwrap();
                let anchor = matmul(&w_o, &y).unwrap();
                prop_assert!(r.residual_fro <= 1e-9 * (1.0 + fro_norm(&anchor)));

                // feasible directions Z = C(I − XX⁺) are orthogonal to Δ
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5a5a);
                let c = Matrix::random_normal(m_, d, 1.0, &mut rng);
                let proj = Matrix::identity(d).sub(&matmul(&x, &pseudoinverse(&x, DEFAULT_PINV_TOL)).unwrap()).unwrap();
                let z = matmul(&c, &proj).unwrap();
                let dot = r.delta.frobenius_dot(&z).unwrap();
                prop_assert!(dot.abs() <= 1e-8 * r.delta_fro * fro_norm(&z) + 1e-300);
                prop_assert!(fro_norm(&r.delta.add(&z).unwrap()) >= r.delta_fro - 1e-9);
            }

            #[test]
            fn uce_residual_is_generically_positive(seed in any::<u64>(), d in 2usize..7, n in 1usize..5) {
                let (w_o, x, y) = random_instance(seed, d, d, n);
                let r = uce_solve(&w_o, &x, &y, &SolverConfig::default()).unwrap();
                let formula = uce_residual_formula(&w_o, &x, &y).unwrap();
                prop_assert!(formula > 0.0);
                let direct = r.residual_fro * r.residual_fro;
                prop_assert!((formula - direct).abs() <= 1e-9 * direct);
                let dev = uce_deviation_formula(&w_o, &x, &y).unwrap();
                prop_assert!(dev.max_abs_diff(&r.delta) <= 1e-10 * (1.0 + fro_norm(&w_o)));
            }
        }
    }
}
