//! Bernstein-basis sieve regression.
//!
//! Least-squares fitting of a function on a closed interval in the span of
//! Bernstein polynomials, either unconstrained (raw sieve estimation) or
//! subject to linear coefficient inequalities that force the fitted function
//! to be monotone, convex, concave, or both (shape-preserving sieve
//! estimation). Also provides the data-driven selection criteria for the
//! basis order.

mod qp;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Feasibility/KKT tolerance for constrained fits.
pub const KKT_TOLERANCE: f64 = 1e-8;
/// Inline evaluation buffer; orders above this fall back to the heap.
const MAX_STACK_BASIS: usize = 64;

/// Bernstein polynomial basis of a given order on `[lo, hi]`.
///
/// Evaluation rescales the argument to the unit interval; the basis values
/// are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct BernsteinBasis {
    order: usize,
    lo: f64,
    hi: f64,
    binomials: Vec<f64>,
}

impl BernsteinBasis {
    pub fn new(order: usize, lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInput(format!(
                "basis domain [{lo}, {hi}] must be finite with lo < hi"
            )));
        }
        // C(order, j) by the multiplicative recurrence; exact in f64 for the
        // orders used here (every intermediate is an integer below 2^53).
        let mut binomials = Vec::with_capacity(order + 1);
        let mut c = 1.0f64;
        binomials.push(c);
        for j in 1..=order {
            c = c * (order - j + 1) as f64 / j as f64;
            binomials.push(c);
        }
        Ok(Self { order, lo, hi, binomials })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of basis functions, `order + 1`.
    pub fn len(&self) -> usize {
        self.order + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    fn rescale(&self, z: f64) -> Result<f64> {
        if z < self.lo || z > self.hi || !z.is_finite() {
            return Err(Error::OutOfDomain { value: z, lo: self.lo, hi: self.hi });
        }
        Ok((z - self.lo) / (self.hi - self.lo))
    }

    /// Evaluate all basis functions at `z` into `out` (length `order + 1`).
    pub fn eval_into(&self, z: f64, out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.len());
        let u = self.rescale(z)?;
        let v = 1.0 - u;
        // out[j] = v^(order - j), filled backwards, then scaled by C(J, j) u^j.
        out[self.order] = 1.0;
        for j in (0..self.order).rev() {
            out[j] = out[j + 1] * v;
        }
        let mut p = 1.0;
        for (j, slot) in out.iter_mut().enumerate() {
            *slot *= self.binomials[j] * p;
            p *= u;
        }
        Ok(())
    }

    /// All basis values at `z`.
    pub fn eval(&self, z: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.len()];
        self.eval_into(z, &mut out)?;
        Ok(out)
    }
}

/// Evaluate every Bernstein basis function of `basis` at `z`.
pub fn bernstein_basis_eval(basis: &BernsteinBasis, z: f64) -> Result<Vec<f64>> {
    basis.eval(z)
}

/// Linear shape restriction imposed on the fitted coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ShapeConstraint {
    None,
    Monotone,
    Convex,
    Concave,
    ConvexMonotone,
}

impl ShapeConstraint {
    /// Smallest basis order for which the constraint rows are defined.
    pub fn min_order(self) -> usize {
        match self {
            ShapeConstraint::None => 0,
            ShapeConstraint::Monotone | ShapeConstraint::ConvexMonotone => 1,
            ShapeConstraint::Convex | ShapeConstraint::Concave => 2,
        }
    }
}

/// The difference-stencil constraint matrix `A` such that the shape holds
/// exactly when `A beta >= 0`.
///
/// Monotone: `J x (J+1)` first differences. Convex: `(J-1) x (J+1)` second
/// differences; Concave is its negation. ConvexMonotone stacks the first
/// monotone row on top of the second differences, `J x (J+1)` in total.
pub fn shape_constraint_matrix(kind: ShapeConstraint, order: usize) -> Result<DMatrix<f64>> {
    let n = order + 1;
    if order < kind.min_order() {
        return Err(Error::InvalidInput(format!(
            "order {order} too small for {kind:?} (needs at least {})",
            kind.min_order()
        )));
    }
    let mat = match kind {
        ShapeConstraint::None => DMatrix::zeros(0, n),
        ShapeConstraint::Monotone => {
            let mut a = DMatrix::zeros(order, n);
            for i in 0..order {
                a[(i, i)] = -1.0;
                a[(i, i + 1)] = 1.0;
            }
            a
        }
        ShapeConstraint::Convex | ShapeConstraint::Concave => {
            let sign = if kind == ShapeConstraint::Convex { 1.0 } else { -1.0 };
            let mut a = DMatrix::zeros(order - 1, n);
            for i in 0..order - 1 {
                a[(i, i)] = sign;
                a[(i, i + 1)] = -2.0 * sign;
                a[(i, i + 2)] = sign;
            }
            a
        }
        ShapeConstraint::ConvexMonotone => {
            let mut a = DMatrix::zeros(order, n);
            a[(0, 0)] = -1.0;
            a[(0, 1)] = 1.0;
            for i in 0..order - 1 {
                a[(i + 1, i)] = 1.0;
                a[(i + 1, i + 1)] = -2.0;
                a[(i + 1, i + 2)] = 1.0;
            }
            a
        }
    };
    Ok(mat)
}

/// Paired regression data.
#[derive(Clone, Debug)]
pub struct RegressionSample {
    pub responses: Vec<f64>,
    pub regressors: Vec<f64>,
}

impl RegressionSample {
    pub fn new(regressors: Vec<f64>, responses: Vec<f64>) -> Self {
        Self { responses, regressors }
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    fn validate(&self, basis: &BernsteinBasis) -> Result<()> {
        if self.responses.len() != self.regressors.len() {
            return Err(Error::InvalidInput(format!(
                "{} responses vs {} regressors",
                self.responses.len(),
                self.regressors.len()
            )));
        }
        if self.responses.is_empty() {
            return Err(Error::InvalidInput("empty regression sample".into()));
        }
        let (lo, hi) = basis.domain();
        for (&z, &u) in self.regressors.iter().zip(&self.responses) {
            if !u.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite response {u}")));
            }
            if !z.is_finite() || z < lo || z > hi {
                return Err(Error::OutOfDomain { value: z, lo, hi });
            }
        }
        Ok(())
    }
}

/// Fit quality and solver health indicators.
#[derive(Clone, Copy, Debug)]
pub struct FitDiagnostics {
    pub sample_size: usize,
    /// Sum of squared residuals.
    pub ssr: f64,
    pub kkt_residual: f64,
    /// Design matrix was rank deficient; least-norm solution returned.
    pub rank_deficient: bool,
    /// All regressors identical; fit collapsed to the response mean.
    pub degenerate: bool,
}

/// A fitted sieve: coefficients over a Bernstein basis plus the constraint
/// they satisfy.
#[derive(Clone, Debug)]
pub struct FittedSieve {
    basis: BernsteinBasis,
    coefficients: Vec<f64>,
    constraint: ShapeConstraint,
    diagnostics: FitDiagnostics,
}

impl FittedSieve {
    /// Build a sieve directly from coefficients, validating the declared
    /// constraint within the feasibility tolerance.
    pub fn with_coefficients(
        basis: BernsteinBasis,
        coefficients: Vec<f64>,
        constraint: ShapeConstraint,
    ) -> Result<Self> {
        if coefficients.len() != basis.len() {
            return Err(Error::InvalidInput(format!(
                "{} coefficients for a basis of {} functions",
                coefficients.len(),
                basis.len()
            )));
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient".into()));
        }
        if constraint != ShapeConstraint::None {
            let a = shape_constraint_matrix(constraint, basis.order())?;
            let beta = DVector::from_column_slice(&coefficients);
            let slack = &a * &beta;
            if slack.iter().any(|&s| s < -KKT_TOLERANCE) {
                return Err(Error::InvalidInput(format!(
                    "coefficients violate {constraint:?} by more than {KKT_TOLERANCE:e}"
                )));
            }
        }
        let diagnostics = FitDiagnostics {
            sample_size: 0,
            ssr: 0.0,
            kkt_residual: 0.0,
            rank_deficient: false,
            degenerate: false,
        };
        Ok(Self { basis, coefficients, constraint, diagnostics })
    }

    pub fn basis(&self) -> &BernsteinBasis {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn constraint(&self) -> ShapeConstraint {
        self.constraint
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// Evaluate the fitted function; arguments outside the basis domain are
    /// rejected rather than extrapolated.
    pub fn predict(&self, z: f64) -> Result<f64> {
        let n = self.basis.len();
        let mut stack = [0.0f64; MAX_STACK_BASIS];
        if n <= MAX_STACK_BASIS {
            let buf = &mut stack[..n];
            self.basis.eval_into(z, buf)?;
            Ok(buf.iter().zip(&self.coefficients).map(|(b, c)| b * c).sum())
        } else {
            let buf = self.basis.eval(z)?;
            Ok(buf.iter().zip(&self.coefficients).map(|(b, c)| b * c).sum())
        }
    }
}

/// Evaluate a fitted sieve at `z`.
pub fn sieve_predict(fit: &FittedSieve, z: f64) -> Result<f64> {
    fit.predict(z)
}

struct NormalEquations {
    gram: DMatrix<f64>,
    rhs: DVector<f64>,
}

fn accumulate_normal_equations(
    sample: &RegressionSample,
    basis: &BernsteinBasis,
) -> Result<NormalEquations> {
    let n = basis.len();
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    let mut stack = [0.0f64; MAX_STACK_BASIS];
    let mut heap;
    let buf: &mut [f64] = if n <= MAX_STACK_BASIS {
        &mut stack[..n]
    } else {
        heap = vec![0.0; n];
        &mut heap
    };
    for (&z, &u) in sample.regressors.iter().zip(&sample.responses) {
        basis.eval_into(z, buf)?;
        for i in 0..n {
            let bi = buf[i];
            rhs[i] += bi * u;
            for j in i..n {
                gram[(i, j)] += bi * buf[j];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
    }
    Ok(NormalEquations { gram, rhs })
}

/// Residual pass; avoids the cancellation of the normal-equations identity.
fn direct_ssr(sample: &RegressionSample, basis: &BernsteinBasis, beta: &[f64]) -> Result<f64> {
    let n = basis.len();
    let mut stack = [0.0f64; MAX_STACK_BASIS];
    let mut heap;
    let buf: &mut [f64] = if n <= MAX_STACK_BASIS {
        &mut stack[..n]
    } else {
        heap = vec![0.0; n];
        &mut heap
    };
    let mut total = 0.0;
    for (&z, &u) in sample.regressors.iter().zip(&sample.responses) {
        basis.eval_into(z, buf)?;
        let fitted: f64 = buf.iter().zip(beta).map(|(b, c)| b * c).sum();
        total += (u - fitted) * (u - fitted);
    }
    Ok(total)
}

/// Least-norm solve of `G beta = b` via eigenvalue pseudo-inversion; reports
/// whether any direction was dropped.
fn least_norm_solve(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> (DVector<f64>, bool) {
    let eig = gram.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a: f64, &l: &f64| a.max(l.abs()));
    let cutoff = 1e-12 * lambda_max.max(1e-300);
    let mut beta = DVector::zeros(rhs.len());
    let mut dropped = false;
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > cutoff {
            let v = eig.eigenvectors.column(i);
            beta += v.dot(rhs) / l * v;
        } else {
            dropped = true;
        }
    }
    (beta, dropped)
}

/// Least-squares sieve fit, optionally restricted to a shape-preserving
/// coefficient cone.
///
/// The constrained problem is solved by a primal active-set method started
/// from the (always feasible) constant coefficient vector, with an iteration
/// cap of `100 * (order + 1)`.
pub fn fit_sieve(
    sample: &RegressionSample,
    basis: &BernsteinBasis,
    constraint: ShapeConstraint,
) -> Result<FittedSieve> {
    sample.validate(basis)?;
    let m = sample.len();
    let n = basis.len();
    if basis.order() < constraint.min_order() {
        return Err(Error::InvalidInput(format!(
            "basis order {} too small for {constraint:?}",
            basis.order()
        )));
    }
    if m < n {
        log::warn!("sieve fit with {m} points for {n} coefficients; design is underdetermined");
    }

    let mean = sample.responses.iter().sum::<f64>() / m as f64;

    // Degenerate sample: a single distinct regressor value cannot identify
    // more than a constant.
    let first_z = sample.regressors[0];
    if sample.regressors.iter().all(|&z| z == first_z) {
        let ssr = sample.responses.iter().map(|u| (u - mean).powi(2)).sum();
        let diagnostics = FitDiagnostics {
            sample_size: m,
            ssr,
            kkt_residual: 0.0,
            rank_deficient: false,
            degenerate: true,
        };
        return Ok(FittedSieve {
            basis: basis.clone(),
            coefficients: vec![mean; n],
            constraint,
            diagnostics,
        });
    }

    let eqs = accumulate_normal_equations(sample, basis)?;

    if constraint == ShapeConstraint::None {
        // Full-rank designs get the exact least-squares solution; only a
        // Cholesky breakdown (numerical rank deficiency) falls back to the
        // least-norm pseudo-inverse.
        let (beta, rank_deficient) = match eqs.gram.clone().cholesky() {
            Some(chol) => (chol.solve(&eqs.rhs), false),
            None => {
                let (beta, _) = least_norm_solve(&eqs.gram, &eqs.rhs);
                (beta, true)
            }
        };
        let kkt = (2.0 / m as f64) * (&eqs.gram * &beta - &eqs.rhs).amax();
        let coeffs: Vec<f64> = beta.iter().copied().collect();
        let ssr = direct_ssr(sample, basis, &coeffs)?;
        if rank_deficient {
            log::warn!("rank-deficient design; least-norm coefficients returned");
        }
        let diagnostics = FitDiagnostics {
            sample_size: m,
            ssr,
            kkt_residual: kkt,
            rank_deficient,
            degenerate: false,
        };
        return Ok(FittedSieve { basis: basis.clone(), coefficients: coeffs, constraint, diagnostics });
    }

    let a = shape_constraint_matrix(constraint, basis.order())?;
    let start = DVector::from_element(n, mean);
    let cap = 100 * n;
    let sol = qp::solve_constrained_ls(&eqs.gram, &eqs.rhs, m, &a, start, cap)?;
    if sol.kkt_residual > KKT_TOLERANCE {
        return Err(Error::SolverFailure {
            iterations: sol.iterations,
            kkt_residual: sol.kkt_residual,
            detail: "KKT residual above tolerance at convergence".into(),
        });
    }
    let coeffs: Vec<f64> = sol.beta.iter().copied().collect();
    let ssr = direct_ssr(sample, basis, &coeffs)?;
    let diagnostics = FitDiagnostics {
        sample_size: m,
        ssr,
        kkt_residual: sol.kkt_residual,
        rank_deficient: false,
        degenerate: false,
    };
    Ok(FittedSieve { basis: basis.clone(), coefficients: coeffs, constraint, diagnostics })
}

/// Data-driven selection rule for the basis order.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SelectionCriterion {
    MallowsCp,
    GeneralizedCrossValidation,
    LeaveOneOut,
}

/// Value of a selection criterion for one candidate order.
pub fn criterion_value(
    sample: &RegressionSample,
    basis: &BernsteinBasis,
    constraint: ShapeConstraint,
    criterion: SelectionCriterion,
) -> Result<f64> {
    let m = sample.len() as f64;
    let order = basis.order() as f64;
    match criterion {
        SelectionCriterion::MallowsCp => {
            let fit = fit_sieve(sample, basis, constraint)?;
            let mean_ssr = fit.diagnostics().ssr / m;
            // The residual-variance estimate is the mean SSR of the same fit.
            Ok(mean_ssr + 2.0 * mean_ssr * (order / m))
        }
        SelectionCriterion::GeneralizedCrossValidation => {
            if order / m >= 1.0 {
                return Err(Error::InvalidInput(format!(
                    "GCV undefined for order {order} with {m} samples"
                )));
            }
            let fit = fit_sieve(sample, basis, constraint)?;
            let mean_ssr = fit.diagnostics().ssr / m;
            Ok(mean_ssr / (1.0 - order / m).powi(2))
        }
        SelectionCriterion::LeaveOneOut => leave_one_out_score(sample, basis, constraint),
    }
}

/// Leave-one-out cross-validation score.
///
/// Unconstrained full-rank fits use the exact leverage identity; all other
/// cases recompute the fit with each point removed.
fn leave_one_out_score(
    sample: &RegressionSample,
    basis: &BernsteinBasis,
    constraint: ShapeConstraint,
) -> Result<f64> {
    let m = sample.len();
    if m < 2 {
        return Err(Error::InvalidInput("LOOCV needs at least two points".into()));
    }
    if constraint == ShapeConstraint::None {
        if let Some(score) = loocv_by_leverage(sample, basis)? {
            return Ok(score);
        }
    }
    // Literal refits.
    let mut total = 0.0;
    for drop in 0..m {
        let mut regressors = Vec::with_capacity(m - 1);
        let mut responses = Vec::with_capacity(m - 1);
        for i in 0..m {
            if i != drop {
                regressors.push(sample.regressors[i]);
                responses.push(sample.responses[i]);
            }
        }
        let reduced = RegressionSample::new(regressors, responses);
        let fit = fit_sieve(&reduced, basis, constraint)?;
        let predicted = fit.predict(sample.regressors[drop])?;
        total += (sample.responses[drop] - predicted).powi(2);
    }
    Ok(total / m as f64)
}

/// Exact LOOCV via the hat-matrix diagonal; `None` when the design is rank
/// deficient or a leverage reaches one.
fn loocv_by_leverage(sample: &RegressionSample, basis: &BernsteinBasis) -> Result<Option<f64>> {
    let eqs = accumulate_normal_equations(sample, basis)?;
    let chol = match eqs.gram.clone().cholesky() {
        Some(c) => c,
        None => return Ok(None),
    };
    let beta = chol.solve(&eqs.rhs);
    let n = basis.len();
    let mut buf = vec![0.0; n];
    let mut total = 0.0;
    for (&z, &u) in sample.regressors.iter().zip(&sample.responses) {
        basis.eval_into(z, &mut buf)?;
        let phi = DVector::from_column_slice(&buf);
        let solved = chol.solve(&phi);
        let leverage = phi.dot(&solved);
        if leverage >= 1.0 - 1e-12 {
            return Ok(None);
        }
        let fitted = phi.dot(&beta);
        total += ((u - fitted) / (1.0 - leverage)).powi(2);
    }
    Ok(Some(total / sample.len() as f64))
}

/// Pick the basis order minimizing the criterion over the candidates; ties
/// break toward the smallest order. Candidates on which the criterion is
/// undefined are skipped with a warning.
///
/// The basis domain defaults to the observed regressor range; solvers that
/// fit on a fixed domain use [`select_basis_count_on_domain`].
pub fn select_basis_count(
    sample: &RegressionSample,
    candidates: &[usize],
    criterion: SelectionCriterion,
    constraint: ShapeConstraint,
) -> Result<usize> {
    let lo = sample.regressors.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sample.regressors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo < hi { (lo, hi) } else { (lo, lo + 1.0) };
    select_basis_count_on_domain(sample, candidates, criterion, constraint, lo, hi)
}

/// Same selection rule on an explicit basis domain.
pub fn select_basis_count_on_domain(
    sample: &RegressionSample,
    candidates: &[usize],
    criterion: SelectionCriterion,
    constraint: ShapeConstraint,
    lo: f64,
    hi: f64,
) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no candidate orders".into()));
    }
    let mut sorted: Vec<usize> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(usize, f64)> = None;
    for &order in &sorted {
        if order < constraint.min_order() {
            log::warn!("candidate order {order} too small for {constraint:?}; skipped");
            continue;
        }
        let basis = BernsteinBasis::new(order, lo, hi)?;
        match criterion_value(sample, &basis, constraint, criterion) {
            Ok(value) if value.is_finite() => {
                if best.map_or(true, |(_, b)| value < b) {
                    best = Some((order, value));
                }
            }
            Ok(value) => log::warn!("criterion value {value} for order {order}; skipped"),
            Err(err) => log::warn!("criterion undefined for order {order}: {err}"),
        }
    }
    best.map(|(order, _)| order)
        .ok_or_else(|| Error::InvalidInput("every candidate order was skipped".into()))
}
