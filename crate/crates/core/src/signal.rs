//! Small 1D signal helpers shared by the estimators.

/// Smooth baseline `a + A·g(x)` under a fringe signal, with `g` a Gaussian
/// whose centre and width match the first two moments of the signal above
/// its minimum, and `(a, A)` fitted by least squares.
///
/// The residual `line − baseline` sums to zero, so this removes the DC term
/// like a mean subtraction does, but without the hard edges of a constant
/// offset over the whole axis.
pub fn envelope_baseline(line: &[f64]) -> Vec<f64> {
    let n = line.len();
    if n == 0 {
        return Vec::new();
    }
    let mean = line.iter().sum::<f64>() / n as f64;
    let min = line.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = line.iter().map(|v| v - min).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 1e-300) {
        return vec![mean; n];
    }
    let mu = weights.iter().enumerate().map(|(i, w)| i as f64 * w).sum::<f64>() / total;
    let var = weights
        .iter()
        .enumerate()
        .map(|(i, w)| (i as f64 - mu).powi(2) * w)
        .sum::<f64>()
        / total;
    if !(var > 0.0) {
        return vec![mean; n];
    }
    let g: Vec<f64> = (0..n).map(|i| (-(i as f64 - mu).powi(2) / (2.0 * var)).exp()).collect();

    // Normal equations for line ≈ a + A·g.
    let (sg, sgg) = (g.iter().sum::<f64>(), g.iter().map(|v| v * v).sum::<f64>());
    let (sy, syg) = (
        line.iter().sum::<f64>(),
        line.iter().zip(&g).map(|(y, v)| y * v).sum::<f64>(),
    );
    let nf = n as f64;
    let det = nf * sgg - sg * sg;
    if det.abs() <= 1e-12 * nf * sgg {
        return vec![mean; n];
    }
    let amp = (nf * syg - sg * sy) / det;
    let offset = (sy - amp * sg) / nf;
    g.iter().map(|v| offset + amp * v).collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_line_is_its_own_baseline() {
        let b = envelope_baseline(&[2.5; 16]);
        assert!(b.iter().all(|v| (*v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn gaussian_envelope_is_recovered_under_fringes() {
        let n = 400;
        let env: Vec<f64> = (0..n).map(|i| (-((i as f64 - 200.0) / 40.0).powi(2) / 2.0).exp()).collect();
        let line: Vec<f64> = env
            .iter()
            .enumerate()
            .map(|(i, e)| e * (1.0 - (0.6 * i as f64).cos()))
            .collect();
        let b = envelope_baseline(&line);
        for (x, y) in b.iter().zip(&env) {
            assert!((x - y).abs() < 0.01);
        }
        let residual: f64 = line.iter().zip(&b).map(|(l, b)| l - b).sum();
        assert!(residual.abs() < 1e-9);
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
