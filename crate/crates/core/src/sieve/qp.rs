//! Primal active-set solver for inequality-constrained least squares.
//!
//! Solves `min (1/m) ||U - Phi beta||^2  s.t.  A beta >= 0` given the normal
//! matrices `G = Phi' Phi` and `b = Phi' U`. The constraint rows are the
//! first/second difference stencils of the shape-preserving sieve, which are
//! linearly independent for every kind, so any working set stays independent.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue cutoff for pseudo-inversion of reduced Hessians.
const EIGEN_CUTOFF: f64 = 1e-12;
/// Step is treated as zero below this (relative to the iterate scale).
const STEP_TOL: f64 = 1e-11;
/// Multipliers above this negative floor count as non-negative. A multiplier
/// less negative than this cannot improve the objective beyond the KKT
/// tolerance, and chasing it makes the active set cycle on ill-conditioned
/// slices.
const MULTIPLIER_TOL: f64 = 1e-9;
/// Directional derivative floor for the ratio test.
const RATIO_TOL: f64 = 1e-14;

pub(crate) struct QpSolution {
    pub beta: DVector<f64>,
    /// One multiplier per constraint row; zero off the final working set.
    #[allow(dead_code)]
    pub multipliers: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Symmetric positive semi-definite solve via eigenvalue pseudo-inversion.
fn sym_pinv_solve(h: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = h.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a: f64, &l: &f64| a.max(l.abs()));
    let cutoff = EIGEN_CUTOFF * lambda_max.max(1e-300);
    let mut coeffs = DVector::zeros(rhs.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l.abs() > cutoff {
            let v = eig.eigenvectors.column(i);
            coeffs += v.dot(rhs) / l * v;
        }
    }
    coeffs
}

/// Orthonormal basis of the null space of the working-set rows.
fn nullspace_basis(a: &DMatrix<f64>, working: &[usize], n: usize) -> DMatrix<f64> {
    if working.is_empty() {
        return DMatrix::identity(n, n);
    }
    let mut ata: DMatrix<f64> = DMatrix::zeros(n, n);
    for &i in working {
        let row = a.row(i);
        for p in 0..n {
            for q in 0..n {
                ata[(p, q)] += row[p] * row[q];
            }
        }
    }
    let eig = ata.symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().fold(0.0f64, |a: f64, &l: &f64| a.max(l.abs()));
    let cutoff = 1e-10 * lambda_max.max(1.0);
    let null_cols: Vec<usize> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() <= cutoff)
        .collect();
    let mut z = DMatrix::zeros(n, null_cols.len());
    for (j, &i) in null_cols.iter().enumerate() {
        z.set_column(j, &eig.eigenvectors.column(i));
    }
    z
}

/// Least-squares multipliers for `A_W' lambda = g`.
fn working_multipliers(a: &DMatrix<f64>, working: &[usize], g: &DVector<f64>) -> DVector<f64> {
    let w = working.len();
    let n = g.len();
    let mut aw = DMatrix::zeros(w, n);
    for (r, &i) in working.iter().enumerate() {
        aw.row_mut(r).copy_from(&a.row(i));
    }
    let gram = &aw * aw.transpose();
    let rhs = &aw * g;
    match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => sym_pinv_solve(&gram, &rhs),
    }
}

fn kkt_residual(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    beta: &DVector<f64>,
    multipliers: &DVector<f64>,
) -> f64 {
    let mut stationarity = q * beta - c;
    for i in 0..a.nrows() {
        let li = multipliers[i];
        for j in 0..a.ncols() {
            stationarity[j] -= li * a[(i, j)];
        }
    }
    let r_stat = stationarity.amax();
    let slacks = a * beta;
    let r_feas = slacks.iter().fold(0.0f64, |acc, &s| acc.max(-s));
    let r_dual = multipliers.iter().fold(0.0f64, |acc, &l| acc.max(-l));
    let r_comp = slacks
        .iter()
        .zip(multipliers.iter())
        .fold(0.0f64, |acc, (&s, &l)| acc.max((s * l).abs()));
    r_stat.max(r_feas).max(r_dual).max(r_comp)
}

/// Minimize `(1/m) ||U - Phi beta||^2` subject to `A beta >= 0` starting from
/// a feasible point.
pub(crate) fn solve_constrained_ls(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    m: usize,
    a: &DMatrix<f64>,
    start: DVector<f64>,
    max_iterations: usize,
) -> Result<QpSolution> {
    let n = gram.nrows();
    debug_assert_eq!(a.ncols(), n);
    let scale = 2.0 / m as f64;
    let q = gram * scale;
    let c = rhs * scale;

    let mut beta = start;
    // Start from the empty working set: the first step is the full Newton
    // step, and only genuinely blocking constraints get added.
    let mut working: Vec<usize> = Vec::new();

    for iter in 1..=max_iterations {
        let g = &q * &beta - &c;
        let z = nullspace_basis(a, &working, n);
        let p = if z.ncols() == 0 {
            DVector::zeros(n)
        } else {
            let hr = z.transpose() * &q * &z;
            let gr = z.transpose() * &g;
            let pr = sym_pinv_solve(&hr, &(-gr));
            &z * pr
        };

        if p.amax() <= STEP_TOL * (1.0 + beta.amax()) {
            if working.is_empty() {
                let multipliers = DVector::zeros(a.nrows());
                let kkt = kkt_residual(&q, &c, a, &beta, &multipliers);
                return Ok(QpSolution { beta, multipliers, kkt_residual: kkt, iterations: iter });
            }
            let lambda_w = working_multipliers(a, &working, &g);
            let (worst_pos, worst_val) = lambda_w
                .iter()
                .enumerate()
                .fold((0usize, f64::INFINITY), |(bi, bv), (i, &v)| {
                    if v < bv {
                        (i, v)
                    } else {
                        (bi, bv)
                    }
                });
            if worst_val >= -MULTIPLIER_TOL {
                let mut multipliers = DVector::zeros(a.nrows());
                for (r, &i) in working.iter().enumerate() {
                    multipliers[i] = lambda_w[r].max(0.0);
                }
                let kkt = kkt_residual(&q, &c, a, &beta, &multipliers);
                return Ok(QpSolution { beta, multipliers, kkt_residual: kkt, iterations: iter });
            }
            working.remove(worst_pos);
            continue;
        }

        // Ratio test against constraints outside the working set.
        let mut alpha = 1.0f64;
        let mut blocker = None;
        for i in 0..a.nrows() {
            if working.contains(&i) {
                continue;
            }
            let d = a.row(i).transpose().dot(&p);
            if d < -RATIO_TOL {
                let slack = a.row(i).transpose().dot(&beta).max(0.0);
                let ratio = slack / (-d);
                if ratio < alpha {
                    alpha = ratio;
                    blocker = Some(i);
                }
            }
        }
        beta += alpha * &p;
        if alpha < 1.0 {
            if let Some(i) = blocker {
                working.push(i);
                working.sort_unstable();
            }
        }
    }

    // Iteration cap exhausted. The cap can be hit by active-set cycling on a
    // point that already satisfies the optimality conditions, so check them
    // before declaring failure.
    let g = &q * &beta - &c;
    let lambda_w = if working.is_empty() {
        DVector::zeros(0)
    } else {
        working_multipliers(a, &working, &g)
    };
    let mut multipliers = DVector::zeros(a.nrows());
    for (r, &i) in working.iter().enumerate() {
        multipliers[i] = lambda_w[r].max(0.0);
    }
    let kkt = kkt_residual(&q, &c, a, &beta, &multipliers);
    if kkt <= 1e-8 {
        return Ok(QpSolution { beta, multipliers, kkt_residual: kkt, iterations: max_iterations });
    }
    Err(Error::SolverFailure {
        iterations: max_iterations,
        kkt_residual: kkt,
        detail: "active-set iteration cap exhausted".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Minimize (x0-1)^2 + (x1-0)^2 over x1 >= x0: optimum at (0.5, 0.5).
    #[test]
    fn two_point_monotone_reduction() {
        // Design: Phi = I (two points hitting each basis function), U = (1, 0).
        let gram = DMatrix::identity(2, 2);
        let rhs = DVector::from_vec(vec![1.0, 0.0]);
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let start = DVector::from_element(2, 0.5);
        let sol = solve_constrained_ls(&gram, &rhs, 2, &a, start, 200).unwrap();
        assert!((sol.beta[0] - 0.5).abs() < 1e-12);
        assert!((sol.beta[1] - 0.5).abs() < 1e-12);
        assert!(sol.kkt_residual <= 1e-10);
    }

    /// Unconstrained optimum already feasible: solver must land on it.
    #[test]
    fn inactive_constraints_reproduce_least_squares() {
        let gram = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let rhs = DVector::from_vec(vec![0.5, 0.9]);
        // Unconstrained solution of G beta = b.
        let expect = gram.clone().lu().solve(&rhs).unwrap();
        assert!(expect[1] >= expect[0]);
        let a = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        let start = DVector::from_element(2, 0.1);
        let sol = solve_constrained_ls(&gram, &rhs, 4, &a, start, 200).unwrap();
        assert!((sol.beta[0] - expect[0]).abs() < 1e-9);
        assert!((sol.beta[1] - expect[1]).abs() < 1e-9);
    }
}
