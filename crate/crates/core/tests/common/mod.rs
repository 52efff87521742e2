//! Independent direct-summation oracles for the forward constructions.
//!
//! These are deliberately written as plain nested loops over the defining
//! summations, sharing no code with the library's forward paths.
// Shared across test targets; not every target uses every oracle.
#![allow(dead_code)]

use convfactor::{Activation, FeatureMap, LayerSpec, Matrix, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::None => v,
        Activation::Relu => v.max(0.0),
    }
}

fn pick(x: &FeatureMap, h: isize, w: isize, c: usize) -> f64 {
    if h < 0 || w < 0 || h as usize >= x.height() || w as usize >= x.width() {
        0.0
    } else {
        x.get(h as usize, w as usize, c) as f64
    }
}

pub fn out_extent(n: usize, k: usize, s: usize, p: usize) -> usize {
    (n + 2 * p - k) / s + 1
}

/// Standard convolution by direct summation.
pub fn conv_oracle(
    x: &FeatureMap,
    kernel: &Tensor,
    stride: usize,
    padding: usize,
    activation: Activation,
) -> FeatureMap {
    let k = kernel.dims()[0];
    let c = kernel.dims()[2];
    let n = kernel.dims()[3];
    let oh = out_extent(x.height(), k, stride, padding);
    let ow = out_extent(x.width(), k, stride, padding);
    let mut out = FeatureMap::zeros(oh, ow, n).unwrap();
    for h in 0..oh {
        for w in 0..ow {
            for on in 0..n {
                let mut acc = 0.0f64;
                for kh in 0..k {
                    for kw in 0..k {
                        for i in 0..c {
                            let ih = (h * stride + kh) as isize - padding as isize;
                            let iw = (w * stride + kw) as isize - padding as isize;
                            acc += pick(x, ih, iw, i) * kernel.get(&[kh, kw, i, on]) as f64;
                        }
                    }
                }
                out.set(h, w, on, act(activation, acc) as f32);
            }
        }
    }
    out
}

/// Depthwise-separable layer by direct summation; `activation` sits between
/// the stages.
pub fn depthsep_oracle(
    x: &FeatureMap,
    depthwise: &Tensor,
    pointwise: &Tensor,
    t: usize,
    stride: usize,
    padding: usize,
    activation: Activation,
) -> FeatureMap {
    let k = depthwise.dims()[0];
    let maps = depthwise.dims()[2];
    let n = pointwise.dims()[1];
    let oh = out_extent(x.height(), k, stride, padding);
    let ow = out_extent(x.width(), k, stride, padding);
    let mut out = FeatureMap::zeros(oh, ow, n).unwrap();
    for h in 0..oh {
        for w in 0..ow {
            for on in 0..n {
                let mut acc = 0.0f64;
                for m in 0..maps {
                    let mut inner = 0.0f64;
                    for kh in 0..k {
                        for kw in 0..k {
                            let ih = (h * stride + kh) as isize - padding as isize;
                            let iw = (w * stride + kw) as isize - padding as isize;
                            inner += pick(x, ih, iw, m / t) * depthwise.get(&[kh, kw, m]) as f64;
                        }
                    }
                    acc += act(activation, inner) * pointwise.get(&[m, on]) as f64;
                }
                out.set(h, w, on, acc as f32);
            }
        }
    }
    out
}

/// CDP layer by direct summation of the split construction.
pub fn cdp_oracle(
    x: &FeatureMap,
    spec: &LayerSpec,
    conv: Option<&Tensor>,
    depthwise: Option<&Tensor>,
    pointwise: &Tensor,
    activation: Activation,
) -> FeatureMap {
    let k = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let (alpha, c, n) = (spec.alpha, spec.in_channels, spec.out_channels);
    let oh = out_extent(x.height(), k, s, p);
    let ow = out_extent(x.width(), k, s, p);
    let concat_c = spec.cdp_concat_channels();
    let mut concat = vec![0.0f64; oh * ow * concat_c];
    let at = |h: usize, w: usize, m: usize| h * ow * concat_c + w * concat_c + m;
    for h in 0..oh {
        for w in 0..ow {
            if alpha > 0 {
                let conv = conv.unwrap();
                for on in 0..n {
                    let mut acc = 0.0f64;
                    for i in 0..alpha {
                        for kh in 0..k {
                            for kw in 0..k {
                                let ih = (h * s + kh) as isize - p as isize;
                                let iw = (w * s + kw) as isize - p as isize;
                                acc += pick(x, ih, iw, i) * conv.get(&[kh, kw, i, on]) as f64;
                            }
                        }
                    }
                    concat[at(h, w, on)] = act(activation, acc);
                }
            }
            let base = if alpha > 0 { n } else { 0 };
            for j in 0..c - alpha {
                let depthwise = depthwise.unwrap();
                let mut acc = 0.0f64;
                for kh in 0..k {
                    for kw in 0..k {
                        let ih = (h * s + kh) as isize - p as isize;
                        let iw = (w * s + kw) as isize - p as isize;
                        acc += pick(x, ih, iw, alpha + j) * depthwise.get(&[kh, kw, j]) as f64;
                    }
                }
                concat[at(h, w, base + j)] = act(activation, acc);
            }
        }
    }
    let mut out = FeatureMap::zeros(oh, ow, n).unwrap();
    for h in 0..oh {
        for w in 0..ow {
            for on in 0..n {
                let mut acc = 0.0f64;
                for m in 0..concat_c {
                    acc += concat[at(h, w, m)] * pointwise.get(&[m, on]) as f64;
                }
                out.set(h, w, on, acc as f32);
            }
        }
    }
    out
}

/// Tucker-2 layer by direct summation of the three stages.
pub fn tucker2_oracle(
    x: &FeatureMap,
    spec: &LayerSpec,
    proj_in: &Tensor,
    core: &Tensor,
    proj_out: &Tensor,
) -> FeatureMap {
    let (r1, r2) = (spec.rank_in, spec.rank_out);
    let k = spec.kernel;
    let (s, p) = (spec.stride, spec.padding);
    let n = spec.out_channels;
    let c = spec.in_channels;

    let mut stage1 = FeatureMap::zeros(x.height(), x.width(), r1).unwrap();
    for h in 0..x.height() {
        for w in 0..x.width() {
            for r in 0..r1 {
                let mut acc = 0.0f64;
                for i in 0..c {
                    acc += x.get(h, w, i) as f64 * proj_in.get(&[i, r]) as f64;
                }
                stage1.set(h, w, r, acc as f32);
            }
        }
    }
    let oh = out_extent(x.height(), k, s, p);
    let ow = out_extent(x.width(), k, s, p);
    let mut stage2 = FeatureMap::zeros(oh, ow, r2).unwrap();
    for h in 0..oh {
        for w in 0..ow {
            for r in 0..r2 {
                let mut acc = 0.0f64;
                for kh in 0..k {
                    for kw in 0..k {
                        for q in 0..r1 {
                            let ih = (h * s + kh) as isize - p as isize;
                            let iw = (w * s + kw) as isize - p as isize;
                            acc += pick(&stage1, ih, iw, q) * core.get(&[kh, kw, q, r]) as f64;
                        }
                    }
                }
                stage2.set(h, w, r, acc as f32);
            }
        }
    }
    let mut out = FeatureMap::zeros(oh, ow, n).unwrap();
    for h in 0..oh {
        for w in 0..ow {
            for on in 0..n {
                let mut acc = 0.0f64;
                for r in 0..r2 {
                    acc += stage2.get(h, w, r) as f64 * proj_out.get(&[r, on]) as f64;
                }
                out.set(h, w, on, acc as f32);
            }
        }
    }
    out
}

/// TDW layer by direct summation: depthwise stage then both bottleneck maps.
pub fn tdw_oracle(
    x: &FeatureMap,
    spec: &LayerSpec,
    depthwise: &Tensor,
    b_in: &Tensor,
    b_out: &Tensor,
    activation: Activation,
) -> FeatureMap {
    let t = spec.width_multiplier;
    let composed = {
        // Collapse the two bottleneck maps into one pointwise matrix.
        let maps = b_in.dims()[0];
        let r = b_in.dims()[1];
        let n = b_out.dims()[1];
        Tensor::from_fn(vec![maps, n], |idx| {
            let mut acc = 0.0f64;
            for q in 0..r {
                acc += b_in.get(&[idx[0], q]) as f64 * b_out.get(&[q, idx[1]]) as f64;
            }
            acc as f32
        })
        .unwrap()
    };
    depthsep_oracle(
        x,
        depthwise,
        &composed,
        t,
        spec.stride,
        spec.padding,
        activation,
    )
}

/// Random matrix with standard-normal entries.
pub fn randn_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::random(rows, cols, &mut rng(seed)).unwrap()
}
