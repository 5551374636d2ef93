use crate::error::{Error, Result};

/// Solve a symmetric tridiagonal system with partial pivoting.
///
/// `diag` has n entries, `off` the n-1 couplings between neighbors. Partial
/// pivoting keeps shifted (indefinite) systems stable; the fill-in stays in
/// one extra superdiagonal.
pub fn solve_tridiag(diag: &[f64], off: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if off.len() + 1 != n || rhs.len() != n {
        return Err(Error::LinearSolve("tridiagonal size mismatch".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // rows carry (main, upper1, upper2); lower entries are eliminated in place
    let mut d = diag.to_vec();
    let mut u1 = off.to_vec();
    let mut u2 = vec![0.0; n.saturating_sub(2)];
    let mut b = rhs.to_vec();

    for i in 0..n - 1 {
        // rows below the front are untouched, so the subdiagonal is off[i]
        let sub = off[i];
        if d[i].abs() >= sub.abs() {
            if d[i] == 0.0 {
                return Err(Error::LinearSolve("singular tridiagonal matrix".into()));
            }
            let m = sub / d[i];
            d[i + 1] -= m * u1[i];
            if i + 1 < n - 1 {
                // u2[i] is zero before elimination for unswapped rows
                u1[i + 1] -= m * u2.get(i).copied().unwrap_or(0.0);
            }
            b[i + 1] -= m * b[i];
        } else {
            // swap row i with row i+1
            let (ri_d, ri_u1, ri_u2, ri_b) =
                (d[i], u1[i], u2.get(i).copied().unwrap_or(0.0), b[i]);
            let next_u1 = if i + 1 < n - 1 { u1[i + 1] } else { 0.0 };
            d[i] = sub;
            u1[i] = d[i + 1];
            if i < u2.len() {
                u2[i] = next_u1;
            }
            b[i] = b[i + 1];
            let m = ri_d / d[i];
            d[i + 1] = ri_u1 - m * u1[i];
            if i + 1 < n - 1 {
                u1[i + 1] = ri_u2 - m * u2[i];
            }
            b[i + 1] = ri_b - m * b[i];
        }
    }
    if d[n - 1] == 0.0 {
        return Err(Error::LinearSolve("singular tridiagonal matrix".into()));
    }
    // back substitution with two superdiagonals
    let mut x = vec![0.0; n];
    x[n - 1] = b[n - 1] / d[n - 1];
    if n >= 2 {
        x[n - 2] = (b[n - 2] - u1[n - 2] * x[n - 1]) / d[n - 2];
    }
    for i in (0..n.saturating_sub(2)).rev() {
        x[i] = (b[i] - u1[i] * x[i + 1] - u2[i] * x[i + 2]) / d[i];
    }
    for v in &x {
        if !v.is_finite() {
            return Err(Error::LinearSolve("non-finite solution".into()));
        }
    }
    Ok(x)
}

/// y = T x for symmetric tridiagonal T.
pub fn apply_tridiag(diag: &[f64], off: &[f64], x: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = diag[i] * x[i];
        if i > 0 {
            s += off[i - 1] * x[i - 1];
        }
        if i + 1 < n {
            s += off[i] * x[i + 1];
        }
        y[i] = s;
    }
    y
}
