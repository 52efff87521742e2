//! Numeric verification battery for a weight container.
//!
//! Each layer gets a finiteness check plus an algebraic equivalence probe on
//! a small seeded input, chosen per kind: merged-kernel equivalence for
//! depthwise-separable layers, merged-full-kernel equivalence for Tucker-2,
//! composed-bottleneck equivalence for TDW, branch-slice equivalences for
//! CDP, and a homogeneity probe for standard layers. Every stored tensor
//! participates in at least one check.

use convfactor::factorize::merge_depthsep_layer;
use convfactor::layers::{
    cdp_forward, conv2d_forward, depthsep_forward, tdw_forward, tucker2_forward, Activation,
    FeatureMap, LayerKind, LayerSpec, LayerWeights, WeightRole,
};
use convfactor::tensor::{mode_multiply, Matrix, Tensor};
use convfactor::ArchSpec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::report::CheckRow;

fn rng_for(seed: u64, layer: usize, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (layer as u64) << 8 ^ salt)
}

fn probe_input(spec: &LayerSpec, channels: usize, seed: u64, layer: usize) -> FeatureMap {
    let ext = spec.kernel + 4;
    FeatureMap::random(ext, ext, channels, &mut rng_for(seed, layer, 1)).unwrap()
}

fn pointwise_apply(x: &FeatureMap, weights: &Matrix) -> FeatureMap {
    let mut out = FeatureMap::zeros(x.height(), x.width(), weights.cols()).unwrap();
    for h in 0..x.height() {
        for w in 0..x.width() {
            for n in 0..weights.cols() {
                let mut acc = 0.0f64;
                for m in 0..weights.rows() {
                    acc += x.get(h, w, m) as f64 * weights.get(m, n) as f64;
                }
                out.set(h, w, n, acc as f32);
            }
        }
    }
    out
}

fn check(layer: usize, name: &str, err: f64, tolerance: f64) -> CheckRow {
    CheckRow {
        layer,
        check: name.to_string(),
        passed: err.is_finite() && err <= tolerance,
        max_relative_error: Some(err),
        detail: None,
    }
}

fn skipped(layer: usize, name: &str, why: String) -> CheckRow {
    CheckRow {
        layer,
        check: name.to_string(),
        passed: true,
        max_relative_error: None,
        detail: Some(why),
    }
}

fn matrix_rows(t: &Tensor, from: usize, to: usize) -> Matrix {
    let cols = t.dims()[1];
    Matrix::from_fn(to - from, cols, |r, c| t.get(&[from + r, c])).unwrap()
}

fn verify_layer(
    layer: usize,
    spec: &LayerSpec,
    weights: &LayerWeights,
    seed: u64,
    tolerance: f64,
    rows: &mut Vec<CheckRow>,
) {
    // Equivalence probes concern the linear structure, so activations are
    // disabled on the probe specs.
    let spec = spec.clone().with_activation(Activation::None);

    for (role, tensor) in weights.iter() {
        if !tensor.is_finite() {
            rows.push(CheckRow {
                layer,
                check: "finite weights".into(),
                passed: false,
                max_relative_error: None,
                detail: Some(format!("{role} contains NaN or infinite values")),
            });
            return;
        }
    }
    rows.push(CheckRow {
        layer,
        check: "finite weights".into(),
        passed: true,
        max_relative_error: None,
        detail: None,
    });

    match spec.kind {
        LayerKind::Standard => {
            // Homogeneity of the linear map: F(2x) = 2 F(x).
            let x = probe_input(&spec, spec.in_channels, seed, layer);
            let mut doubled = x.clone();
            for h in 0..x.height() {
                for w in 0..x.width() {
                    for c in 0..x.channels() {
                        doubled.set(h, w, c, 2.0 * x.get(h, w, c));
                    }
                }
            }
            let y = conv2d_forward(&x, &spec, weights).unwrap();
            let y2 = conv2d_forward(&doubled, &spec, weights).unwrap();
            let mut scaled = y.clone();
            for h in 0..y.height() {
                for w in 0..y.width() {
                    for c in 0..y.channels() {
                        scaled.set(h, w, c, 2.0 * y.get(h, w, c));
                    }
                }
            }
            rows.push(check(
                layer,
                "forward homogeneity",
                y2.relative_error(&scaled),
                tolerance,
            ));
        }
        LayerKind::DepthSep => {
            if spec.width_multiplier != 1 {
                rows.push(skipped(
                    layer,
                    "merged-kernel equivalence",
                    format!(
                        "width multiplier {} does not contract",
                        spec.width_multiplier
                    ),
                ));
                return;
            }
            let x = probe_input(&spec, spec.in_channels, seed, layer);
            let got = depthsep_forward(&x, &spec, weights).unwrap();
            let merged = merge_depthsep_layer(&spec, weights).unwrap();
            let std_spec = LayerSpec::standard(
                spec.kernel,
                spec.in_channels,
                spec.out_channels,
                spec.stride,
                spec.padding,
            )
            .unwrap();
            let std_w =
                LayerWeights::from_pairs(&std_spec, vec![(WeightRole::Kernel, merged)]).unwrap();
            let expect = conv2d_forward(&x, &std_spec, &std_w).unwrap();
            rows.push(check(
                layer,
                "merged-kernel equivalence",
                got.relative_error(&expect),
                tolerance,
            ));
        }
        LayerKind::Tucker2 => {
            let x = probe_input(&spec, spec.in_channels, seed, layer);
            let got = tucker2_forward(&x, &spec, weights).unwrap();
            let proj_in = Matrix::from_tensor(weights.get(WeightRole::ProjIn).unwrap()).unwrap();
            let proj_out = Matrix::from_tensor(weights.get(WeightRole::ProjOut).unwrap()).unwrap();
            let core = weights.get(WeightRole::Core).unwrap();
            let merged = mode_multiply(
                &mode_multiply(core, &proj_in, 2).unwrap(),
                &proj_out.transpose(),
                3,
            )
            .unwrap();
            let std_spec = LayerSpec::standard(
                spec.kernel,
                spec.in_channels,
                spec.out_channels,
                spec.stride,
                spec.padding,
            )
            .unwrap();
            let std_w =
                LayerWeights::from_pairs(&std_spec, vec![(WeightRole::Kernel, merged)]).unwrap();
            let expect = conv2d_forward(&x, &std_spec, &std_w).unwrap();
            rows.push(check(
                layer,
                "merged full-kernel equivalence",
                got.relative_error(&expect),
                tolerance,
            ));
        }
        LayerKind::Tdw => {
            let x = probe_input(&spec, spec.in_channels, seed, layer);
            let got = tdw_forward(&x, &spec, weights).unwrap();
            let b_in = Matrix::from_tensor(weights.get(WeightRole::BottleneckIn).unwrap()).unwrap();
            let b_out =
                Matrix::from_tensor(weights.get(WeightRole::BottleneckOut).unwrap()).unwrap();
            let composed = b_in.matmul(&b_out).unwrap();
            let ds_spec = LayerSpec::depthsep(
                spec.kernel,
                spec.in_channels,
                spec.out_channels,
                spec.stride,
                spec.padding,
                spec.width_multiplier,
            )
            .unwrap();
            let ds_w = LayerWeights::from_pairs(
                &ds_spec,
                vec![
                    (
                        WeightRole::Depthwise,
                        weights.get(WeightRole::Depthwise).unwrap().clone(),
                    ),
                    (WeightRole::Pointwise, composed.to_tensor()),
                ],
            )
            .unwrap();
            let expect = depthsep_forward(&x, &ds_spec, &ds_w).unwrap();
            rows.push(check(
                layer,
                "composed-bottleneck equivalence",
                got.relative_error(&expect),
                tolerance,
            ));
        }
        LayerKind::Cdp => {
            let (k, c, n) = (spec.kernel, spec.in_channels, spec.out_channels);
            let (alpha, s, p) = (spec.alpha, spec.stride, spec.padding);
            let pointwise = weights.get(WeightRole::Pointwise).unwrap();
            if alpha > 0 {
                // The convolution branch plus the top pointwise block form a
                // full-offset layer over alpha input channels.
                let conv = weights.get(WeightRole::Conv).unwrap().clone();
                let top = matrix_rows(pointwise, 0, n);
                let probe_spec = LayerSpec::cdp(k, alpha, n, s, p, alpha).unwrap();
                let probe_w = LayerWeights::from_pairs(
                    &probe_spec,
                    vec![
                        (WeightRole::Conv, conv.clone()),
                        (WeightRole::Pointwise, top.to_tensor()),
                    ],
                )
                .unwrap();
                let x = probe_input(&spec, alpha, seed, layer);
                let got = cdp_forward(&x, &probe_spec, &probe_w).unwrap();
                let std_spec = LayerSpec::standard(k, alpha, n, s, p).unwrap();
                let std_w =
                    LayerWeights::from_pairs(&std_spec, vec![(WeightRole::Kernel, conv)]).unwrap();
                let expect = pointwise_apply(&conv2d_forward(&x, &std_spec, &std_w).unwrap(), &top);
                rows.push(check(
                    layer,
                    "conv-branch slice equivalence",
                    got.relative_error(&expect),
                    tolerance,
                ));
            }
            if alpha < c {
                // The depthwise branch plus the bottom pointwise block form a
                // zero-offset layer over the remaining channels.
                let depthwise = weights.get(WeightRole::Depthwise).unwrap().clone();
                let base = if alpha > 0 { n } else { 0 };
                let bottom = matrix_rows(pointwise, base, base + (c - alpha));
                let probe_spec = LayerSpec::cdp(k, c - alpha, n, s, p, 0).unwrap();
                let probe_w = LayerWeights::from_pairs(
                    &probe_spec,
                    vec![
                        (WeightRole::Depthwise, depthwise.clone()),
                        (WeightRole::Pointwise, bottom.to_tensor()),
                    ],
                )
                .unwrap();
                let x = probe_input(&spec, c - alpha, seed, layer);
                let got = cdp_forward(&x, &probe_spec, &probe_w).unwrap();
                let ds_spec = LayerSpec::depthsep(k, c - alpha, n, s, p, 1).unwrap();
                let ds_w = LayerWeights::from_pairs(
                    &ds_spec,
                    vec![
                        (WeightRole::Depthwise, depthwise),
                        (WeightRole::Pointwise, bottom.to_tensor()),
                    ],
                )
                .unwrap();
                let expect = depthsep_forward(&x, &ds_spec, &ds_w).unwrap();
                rows.push(check(
                    layer,
                    "depthwise-branch slice equivalence",
                    got.relative_error(&expect),
                    tolerance,
                ));
            }
        }
    }
}

/// Runs the battery over every layer. All probes are deterministic in the
/// seed.
pub fn run_battery(
    arch: &ArchSpec,
    weights: &[LayerWeights],
    seed: u64,
    tolerance: f64,
) -> Vec<CheckRow> {
    let mut rows = Vec::new();
    for (i, (spec, w)) in arch.layers.iter().zip(weights).enumerate() {
        verify_layer(i + 1, spec, w, seed, tolerance, &mut rows);
    }
    rows
}
