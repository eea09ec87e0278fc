//! Dense numeric kernels on flat row-major `f64` buffers.

use rayon::prelude::*;

use crate::error::{Error, Result};

pub(crate) const LN_EPS: f64 = 1e-5;

/// Borrowed affine map `y = W x + b` with `W` stored `out x in`.
#[derive(Clone, Copy, Debug)]
pub struct Linear<'a> {
    pub weight: &'a [f64],
    pub bias: &'a [f64],
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear<'_> {
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.out_dim];
        self.apply_into(x, &mut out);
        out
    }

    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_dim);
        for (o, y) in out.iter_mut().enumerate() {
            let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            *y = self.bias[o] + dot(w, x);
        }
    }

    /// Applies the map to each of `rows` consecutive input vectors.
    pub fn apply_rows(&self, input: &[f64]) -> Vec<f64> {
        let rows = input.len() / self.in_dim;
        let mut out = vec![0.0; rows * self.out_dim];
        out.par_chunks_mut(self.out_dim)
            .zip(input.par_chunks(self.in_dim))
            .for_each(|(y, x)| self.apply_into(x, y));
        out
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

pub fn gelu(x: f64) -> f64 {
    const K: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
    0.5 * x * (1.0 + (K * (x + 0.044715 * x * x * x)).tanh())
}

pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        let u = 1.0 / xs.len() as f64;
        xs.iter_mut().for_each(|x| *x = u);
        return;
    }
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    xs.iter_mut().for_each(|x| *x /= sum);
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let mut out = xs.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Layer norm without an affine part.
pub fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let inv = 1.0 / (var + LN_EPS).sqrt();
    x.iter().map(|v| (v - mean) * inv).collect()
}

/// Two-layer perceptron with a SiLU hidden activation.
pub fn mlp(first: &Linear<'_>, second: &Linear<'_>, x: &[f64]) -> Vec<f64> {
    let hidden: Vec<f64> = first.apply(x).into_iter().map(silu).collect();
    second.apply(&hidden)
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

pub fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Params(format!("non-finite values in {what}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_matches_hand_product() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b = [0.5, -1.0];
        let lin = Linear {
            weight: &w,
            bias: &b,
            in_dim: 3,
            out_dim: 2,
        };
        assert_eq!(lin.apply(&[1.0, 0.0, -1.0]), vec![-1.5, -3.0]);
        assert_eq!(lin.apply_rows(&[1.0, 0.0, -1.0, 0.0, 1.0, 0.0]), vec![-1.5, -3.0, 2.5, 4.0]);
    }

    #[test]
    fn softmax_and_norm() {
        let p = softmax(&[1.0, 2.0, 3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p[2] > p[1] && p[1] > p[0]);
        assert_eq!(softmax(&[f64::NEG_INFINITY; 2]), vec![0.5, 0.5]);
        let n = layer_norm(&[1.0, 2.0, 3.0, 4.0]);
        assert!(n.iter().sum::<f64>().abs() < 1e-12);
        assert!((silu(0.0)).abs() < 1e-15 && (gelu(0.0)).abs() < 1e-15);
    }
}
