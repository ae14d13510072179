//! Independent f64 reference implementations used as gradcheck oracles.
//!
//! Everything here is written directly from the defining formulas and shares
//! no code with the f32 engine it checks.

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    out
}

pub fn softmax_axis(x: &[f64], shape: &[usize], axis: usize) -> Vec<f64> {
    let outer: usize = shape[..axis].iter().product();
    let alen = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * alen + j) * inner + i;
            let max = (0..alen).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..alen {
                let e = (x[at(j)] - max).exp();
                out[at(j)] = e;
                sum += e;
            }
            for j in 0..alen {
                out[at(j)] /= sum;
            }
        }
    }
    out
}

pub fn softmax_row(x: &[f64]) -> Vec<f64> {
    softmax_axis(x, &[x.len()], 0)
}

pub fn gumbel_softmax(logits: &[f64], noise: &[f64], tau: f64, classes: usize) -> Vec<f64> {
    let shifted: Vec<f64> = logits
        .iter()
        .zip(noise)
        .map(|(&l, &n)| (l + n) / tau)
        .collect();
    let rows = shifted.len() / classes;
    softmax_axis(&shifted, &[rows, classes], 1)
}

/// Valid 1D convolution: input [l,e], kernel [k,e,f], bias [f] -> [l-k+1, f].
pub fn conv1d(
    input: &[f64],
    kernel: &[f64],
    bias: &[f64],
    l: usize,
    e: usize,
    k: usize,
    f: usize,
) -> Vec<f64> {
    let lo = l - k + 1;
    let mut out = vec![0.0; lo * f];
    for t in 0..lo {
        for fi in 0..f {
            let mut acc = bias[fi];
            for dt in 0..k {
                for ei in 0..e {
                    acc += input[(t + dt) * e + ei] * kernel[(dt * e + ei) * f + fi];
                }
            }
            out[t * f + fi] = acc;
        }
    }
    out
}

pub fn max_pool_over_time(x: &[f64], b: usize, l: usize, f: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; b * f];
    for bi in 0..b {
        for t in 0..l {
            for fi in 0..f {
                let v = x[(bi * l + t) * f + fi];
                if v > out[bi * f + fi] {
                    out[bi * f + fi] = v;
                }
            }
        }
    }
    out
}

pub fn layer_norm(
    x: &[f64],
    gamma: &[f64],
    beta: &[f64],
    rows: usize,
    d: usize,
    eps: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; rows * d];
    for r in 0..rows {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for i in 0..d {
            out[r * d + i] = (row[i] - mean) * inv * gamma[i] + beta[i];
        }
    }
    out
}

/// Mean over mask > 0 of -log softmax(logits_row)[target].
pub fn cross_entropy_rows(logits: &[f64], targets: &[u32], mask: &[f64], classes: usize) -> f64 {
    let mut total = 0.0;
    let mut denom = 0.0;
    for (r, (&t, &m)) in targets.iter().zip(mask).enumerate() {
        if m <= 0.0 {
            continue;
        }
        let row = &logits[r * classes..(r + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        total += m * (lse - row[t as usize]);
        denom += m;
    }
    total / denom
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_softmax_rows_sum_to_one() {
        let y = softmax_axis(&[1.0, 2.0, 3.0, -1.0, 0.0, 1.0], &[2, 3], 1);
        for row in y.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oracle_conv_shape_case() {
        let out = conv1d(&[1.0; 10], &[0.0; 12], &[0.5, 0.5], 5, 2, 3, 2);
        assert_eq!(out.len(), 3 * 2);
        assert!(out.iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }
}
