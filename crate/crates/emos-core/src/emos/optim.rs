//! Small dense BFGS with backtracking line search, used to minimize the mean
//! score over coefficient space. Parameter vectors here are already in the
//! unconstrained transform space, so the objective callback is free to return
//! `None` for points it cannot evaluate (e.g. a degenerate truncation); the
//! line search treats those as uphill.

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

const ARMIJO_C1: f64 = 1e-4;
const MAX_BACKTRACKS: u32 = 30;
/// Relative step for central finite differences.
const FD_STEP: f64 = 1e-6;

/// Minimizes `f` from `x0`. `f` returns `None` where it is undefined; `x0`
/// itself must evaluate to a finite value (checked by the caller). The best
/// point seen is always retained, so the result never scores worse than the
/// start.
pub(crate) fn minimize<F>(
    mut f: F,
    x0: &[f64],
    max_iterations: usize,
    grad_tol: f64,
    step_tol: f64,
) -> Minimum
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| -> f64 {
        *evals += 1;
        f(x).filter(|v| v.is_finite()).unwrap_or(f64::INFINITY)
    };

    let mut x = x0.to_vec();
    let mut fx = eval(&x, &mut evals);
    let mut best_x = x.clone();
    let mut best_f = fx;

    // inverse Hessian approximation, reset to identity on bad curvature
    let mut h = identity(n);
    let mut grad = gradient(&mut eval, &mut evals, &x, fx);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iterations {
        if inf_norm(&grad) < grad_tol {
            converged = true;
            break;
        }
        iterations += 1;

        // d = -H g; fall back to steepest descent if it fails to descend
        let mut dir = neg_mat_vec(&h, &grad);
        if dot(&dir, &grad) >= 0.0 {
            h = identity(n);
            dir = grad.iter().map(|g| -g).collect();
        }

        // backtracking Armijo search
        let slope = dot(&dir, &grad);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_BACKTRACKS {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let ft = eval(&trial, &mut evals);
            if ft <= fx + ARMIJO_C1 * alpha * slope {
                accepted = Some((trial, ft));
                break;
            }
            alpha *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            // fully stalled: no acceptable step in this direction
            break;
        };

        let step: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        if inf_norm(&step) < step_tol {
            x = x_new;
            fx = f_new;
            if fx < best_f {
                best_f = fx;
                best_x = x.clone();
            }
            converged = true;
            break;
        }

        let grad_new = gradient(&mut eval, &mut evals, &x_new, f_new);
        let y: Vec<f64> = grad_new.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&step, &y);
        if sy > 1e-10 * inf_norm(&step) * inf_norm(&y) {
            bfgs_update(&mut h, &step, &y, sy);
        } else {
            h = identity(n);
        }

        x = x_new;
        fx = f_new;
        grad = grad_new;
        if fx < best_f {
            best_f = fx;
            best_x = x.clone();
        }
    }

    Minimum {
        x: best_x,
        value: best_f,
        iterations,
        evaluations: evals,
        converged,
    }
}

/// Central differences, falling back to a one-sided difference when a probe
/// point is infeasible, and to zero when both sides are.
fn gradient<E>(eval: &mut E, evals: &mut usize, x: &[f64], fx: f64) -> Vec<f64>
where
    E: FnMut(&[f64], &mut usize) -> f64,
{
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = FD_STEP * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = eval(&probe, evals);
        probe[i] = x[i] - h;
        let fm = eval(&probe, evals);
        probe[i] = x[i];
        g[i] = match (fp.is_finite(), fm.is_finite()) {
            (true, true) => (fp - fm) / (2.0 * h),
            (true, false) => (fp - fx) / h,
            (false, true) => (fx - fm) / h,
            (false, false) => 0.0,
        };
    }
    g
}

/// H <- (I - r s y^T) H (I - r y s^T) + r s s^T with r = 1/(s^T y).
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += r * r * (sy + yhy) * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn neg_mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| -dot(row, v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Solves the normal equations A x = b by Gaussian elimination with partial
/// pivoting; `None` when the system is (numerically) singular.
pub(crate) fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}
