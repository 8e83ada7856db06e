use std::io::Write;

use nalgebra::DMatrix;

use crate::error::Result;

/// `W_ij = [i - j + 1]_+` (1-based), lower triangular with unit diagonal.
pub fn build_w(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i >= j { (i - j + 1) as f64 } else { 0.0 })
}

/// Second-difference matrix: 1 on the diagonal, -2 below it, 1 two below.
pub fn build_u(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| match i.checked_sub(j) {
        Some(0) | Some(2) => 1.0,
        Some(1) => -2.0,
        _ => 0.0,
    })
}

pub fn build_w_exact(n: usize) -> Vec<Vec<i64>> {
    (0..n)
        .map(|i| (0..n).map(|j| (i as i64 - j as i64 + 1).max(0)).collect())
        .collect()
}

pub fn build_u_exact(n: usize) -> Vec<Vec<i64>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| match i as i64 - j as i64 {
                    0 | 2 => 1,
                    1 => -2,
                    _ => 0,
                })
                .collect()
        })
        .collect()
}

/// Largest `|(U W - I)_ij|` in integer arithmetic.
pub fn uw_identity_deviation(n: usize) -> i64 {
    let w = build_w_exact(n);
    let u = build_u_exact(n);
    let mut worst = 0;
    for i in 0..n {
        for j in 0..n {
            let s: i64 = (0..n).map(|m| u[i][m] * w[m][j]).sum();
            let dev = (s - i64::from(i == j)).abs();
            worst = worst.max(dev);
        }
    }
    worst
}

pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record((0..m.ncols()).map(|j| format!("c{j}")))?;
    for i in 0..m.nrows() {
        out.write_record((0..m.ncols()).map(|j| m[(i, j)].to_string()))?;
    }
    out.flush()?;
    Ok(())
}
