//! Thin helpers over `rustfft` for zero-padded real transforms.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::domain::Matrix;

/// Forward transform of `data` zero-padded to `len` samples.
pub fn fft_padded(data: &[f64], len: usize) -> Vec<Complex64> {
    assert!(len >= data.len(), "pad length shorter than input");
    let mut buf: Vec<Complex64> = data.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    let fft = FftPlanner::new().plan_fft_forward(len);
    fft.process(&mut buf);
    buf
}

/// 2D forward transform of a real matrix zero-padded to `rows × cols`.
/// Returned row-major.
pub fn fft2_padded(m: &Matrix, rows: usize, cols: usize) -> Vec<Complex64> {
    assert!(rows >= m.rows() && cols >= m.cols());
    let mut planner = FftPlanner::new();
    let row_fft = planner.plan_fft_forward(cols);
    let col_fft = planner.plan_fft_forward(rows);

    let mut data = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..m.rows() {
        for (c, v) in m.row(r).iter().enumerate() {
            data[r * cols + c] = Complex64::new(*v, 0.0);
        }
    }
    data.par_chunks_mut(cols).take(m.rows()).for_each(|row| row_fft.process(row));

    let mut transposed = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            transposed[c * rows + r] = data[r * cols + c];
        }
    }
    transposed.par_chunks_mut(rows).for_each(|col| col_fft.process(col));
    for c in 0..cols {
        for r in 0..rows {
            data[r * cols + c] = transposed[c * rows + r];
        }
    }
    data
}

pub fn next_pow2(n: usize) -> usize {
    n.max(1).next_power_of_two()
}
