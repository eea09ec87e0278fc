//! Multi-scale map features and trajectory-centred deformable sampling.

use rayon::prelude::*;

use super::condition::Condition;
use super::ops::{gelu, softmax, Linear};
use super::params::DenoiserParams;
use crate::error::Result;

/// Pixel-major feature map: entry `(y * width + x) * channels + c`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f64] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Bilinear sample at normalized `[row, col]` in `[-1, 1]^2`, corners
    /// aligned with the outer pixel centres and clamped at the border.
    pub fn bilinear(&self, at: [f64; 2]) -> Vec<f64> {
        let axis = |u: f64, n: usize| {
            let p = ((u + 1.0) * 0.5 * (n - 1) as f64).clamp(0.0, (n - 1) as f64);
            let lo = p.floor() as usize;
            (lo, (lo + 1).min(n - 1), p - lo as f64)
        };
        let (y0, y1, fy) = axis(at[0], self.height);
        let (x0, x1, fx) = axis(at[1], self.width);
        let mut out = vec![0.0; self.channels];
        let corners = [
            (y0, x0, (1.0 - fy) * (1.0 - fx)),
            (y0, x1, (1.0 - fy) * fx),
            (y1, x0, fy * (1.0 - fx)),
            (y1, x1, fy * fx),
        ];
        for (y, x, w) in corners {
            if w == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.pixel(y, x)) {
                *o += w * v;
            }
        }
        out
    }
}

/// 3x3 convolution with zero padding; weight inputs are ordered
/// `(channel, dy, dx)`.
fn conv3x3(input: &FeatureMap, kernel: &Linear<'_>, stride: usize) -> FeatureMap {
    let (h, w) = (input.height.div_ceil(stride), input.width.div_ceil(stride));
    let mut out = FeatureMap::new(kernel.out_dim, h, w);
    let cin = input.channels;
    out.data
        .par_chunks_mut(kernel.out_dim)
        .enumerate()
        .for_each(|(pix, dst)| {
            let (y, x) = (pix / w * stride, pix % w * stride);
            let mut patch = vec![0.0; cin * 9];
            for dy in 0..3 {
                for dx in 0..3 {
                    let (sy, sx) = (y as isize + dy as isize - 1, x as isize + dx as isize - 1);
                    if sy < 0 || sx < 0 || sy >= input.height as isize || sx >= input.width as isize {
                        continue;
                    }
                    let src = input.pixel(sy as usize, sx as usize);
                    for c in 0..cin {
                        patch[c * 9 + dy * 3 + dx] = src[c];
                    }
                }
            }
            kernel.apply_into(&patch, dst);
        });
    out
}

fn film_gelu(map: &mut FeatureMap, film: &[f64]) {
    let c = map.channels;
    let (gamma, beta) = film.split_at(c);
    for px in map.data.chunks_mut(c) {
        for ((v, g), b) in px.iter_mut().zip(gamma).zip(beta) {
            *v = gelu((1.0 + g) * *v + b);
        }
    }
}

fn resample(map: &FeatureMap, height: usize, width: usize) -> FeatureMap {
    let mut out = FeatureMap::new(map.channels, height, width);
    let norm = |v: usize, n: usize| if n > 1 { 2.0 * v as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
    for y in 0..height {
        for x in 0..width {
            let v = map.bilinear([norm(y, height), norm(x, width)]);
            out.pixel_mut(y, x).copy_from_slice(&v);
        }
    }
    out
}

fn project(map: &FeatureMap, proj: &Linear<'_>) -> FeatureMap {
    FeatureMap {
        channels: proj.out_dim,
        height: map.height,
        width: map.width,
        data: proj.apply_rows(&map.data),
    }
}

/// Three-scale pyramid: a full-resolution stage and two stride-2 stages,
/// each FiLM-modulated by the global condition, with the middle scale
/// upsampled back into the finest one. Every scale is projected to the
/// hidden width.
pub fn build_pyramid(cond: &Condition, global: &[f64], params: &DenoiserParams) -> Result<Vec<FeatureMap>> {
    let (h, w) = (cond.height, cond.width);
    let plane = h * w;
    let mut raster = FeatureMap::new(3, h, w);
    for i in 0..plane {
        for c in 0..3 {
            raster.data[i * 3 + c] = cond.raster[c * plane + i];
        }
    }
    let mut stages = Vec::with_capacity(3);
    let mut input = raster;
    for (s, stride) in [(0, 1), (1, 2), (2, 2)] {
        let mut f = conv3x3(&input, &params.linear(&format!("pyramid.conv{s}"))?, stride);
        film_gelu(&mut f, &params.linear(&format!("pyramid.film{s}"))?.apply(global));
        stages.push(f.clone());
        input = f;
    }
    let up = resample(&stages[1], h, w);
    for (a, b) in stages[0].data.iter_mut().zip(&up.data) {
        *a += b;
    }
    stages
        .iter()
        .enumerate()
        .map(|(s, f)| Ok(project(f, &params.linear(&format!("pyramid.proj{s}"))?)))
        .collect()
}

/// Sampling points `p + r0 (1 + 0.2 e) tanh(W_delta x)` for one token.
pub fn sampling_locations(
    token: &[f64],
    position: [f64; 2],
    entropy: f64,
    radius: f64,
    offsets: &Linear<'_>,
) -> Vec<[f64; 2]> {
    let reach = radius * (1.0 + 0.2 * entropy);
    offsets
        .apply(token)
        .chunks(2)
        .map(|d| [position[0] + reach * d[0].tanh(), position[1] + reach * d[1].tanh()])
        .collect()
}

/// Gated, weighted sum of features sampled around each token's inferred
/// position, projected back to the hidden width.
pub fn env_sense(
    tokens: &[f64],
    trajectory: &[[f64; 2]],
    entropy: &[f64],
    pyramid: &[FeatureMap],
    scale_gate: &[f64],
    params: &DenoiserParams,
    prefix: &str,
) -> Result<Vec<f64>> {
    let dims = *params.dims();
    let d = dims.hidden;
    let offsets = params.linear(&format!("{prefix}.offset"))?;
    let weights = params.linear(&format!("{prefix}.weight"))?;
    let out = params.linear(&format!("{prefix}.out"))?;
    let radius = params.scalar("env.radius")?;
    let mut context = vec![0.0; tokens.len()];
    context.par_chunks_mut(d).enumerate().for_each(|(row, z)| {
        let token = &tokens[row * d..(row + 1) * d];
        let points = sampling_locations(token, trajectory[row], entropy[row], radius, &offsets);
        let omega = softmax(&weights.apply(token));
        for (s, map) in pyramid.iter().enumerate() {
            for (p, &u) in points.iter().enumerate() {
                let w = omega[s * dims.points + p] * scale_gate[s];
                for (zi, f) in z.iter_mut().zip(map.bilinear(u)) {
                    *zi += w * f;
                }
            }
        }
    });
    Ok(out.apply_rows(&context))
}
