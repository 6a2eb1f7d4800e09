//! Numerical checking helpers used by tests and the acceptance suite.
//!
//! These are oracles, not implementation: central finite differences probe a
//! forward evaluation only and never touch the reverse-mode path they verify.

/// Central finite-difference step used throughout the test suites.
pub const FD_STEP: f64 = 1e-5;

/// Relative error with a floor on the denominator. The floor keeps the
/// comparison meaningful where both values are tiny: below it, the check
/// degrades to an absolute tolerance of `tol · floor`, which sits well above
/// the ~1e-8 noise floor of central differences on f64 losses.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Central finite-difference gradient of `f` with respect to `params`,
/// evaluated entry by entry at step [`FD_STEP`].
pub fn finite_diff_grad<F>(params: &mut Vec<f64>, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; params.len()];
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + FD_STEP;
        let plus = f(params);
        params[i] = orig - FD_STEP;
        let minus = f(params);
        params[i] = orig;
        grad[i] = (plus - minus) / (2.0 * FD_STEP);
    }
    grad
}

/// Largest relative error between an analytic gradient and its
/// finite-difference estimate.
pub fn max_grad_rel_err(analytic: &[f64], fd: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(fd)
        .map(|(&a, &b)| rel_err(a, b, floor))
        .fold(0.0, f64::max)
}

/// Leading singular values of an `rows × cols` matrix via power iteration
/// with deflation on the Gram matrix. Good enough to certify that trailing
/// singular values vanish (numerical rank checks).
pub fn singular_values(matrix: &[f64], rows: usize, cols: usize, count: usize) -> Vec<f64> {
    // Gram = MᵀM (cols × cols); eigenvalues are squared singular values.
    let mut gram = vec![0.0; cols * cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut s = 0.0;
            for r in 0..rows {
                s += matrix[r * cols + i] * matrix[r * cols + j];
            }
            gram[i * cols + j] = s;
        }
    }
    let mut values = Vec::with_capacity(count);
    let mut deflated = gram;
    for k in 0..count.min(cols) {
        let mut v: Vec<f64> = (0..cols)
            .map(|i| if i == k { 1.0 } else { 0.5 / (i + 1) as f64 })
            .collect();
        normalize(&mut v);
        let mut lambda = 0.0;
        for _ in 0..500 {
            let mut w = vec![0.0; cols];
            for i in 0..cols {
                let mut s = 0.0;
                for j in 0..cols {
                    s += deflated[i * cols + j] * v[j];
                }
                w[i] = s;
            }
            lambda = norm(&w);
            if lambda < 1e-300 {
                break;
            }
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / lambda;
            }
        }
        values.push(lambda.max(0.0).sqrt());
        // Deflate: G ← G − λ vvᵀ
        for i in 0..cols {
            for j in 0..cols {
                deflated[i * cols + j] -= lambda * v[i] * v[j];
            }
        }
    }
    values
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn normalize(v: &mut [f64]) {
    let n = norm(v);
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}
