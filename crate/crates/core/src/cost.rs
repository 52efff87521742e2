//! Exact parameter and FLOP counting.
//!
//! FLOPs count floating-point multiplications at output spatial resolution,
//! so strides reduce cost. Additions and element-wise non-linearities are
//! excluded; the ReLU element count of a CDP layer's intermediate maps is
//! reported separately and folded into totals only under an
//! include-activations policy. Pooling contributes neither parameters nor
//! counted FLOPs.

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::factorize::bottleneck_compresses;
use crate::layers::{LayerKind, LayerSpec};

/// Parameter and multiplication counts for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerCost {
    pub params: u64,
    /// Floating-point multiplications at output resolution.
    pub flops: u64,
    /// Element count of activated intermediate maps (CDP layers only).
    pub activation_flops: u64,
}

impl LayerCost {
    /// FLOPs under a counting policy.
    pub fn flops_with(&self, policy: CostPolicy) -> u64 {
        if policy.include_activation_flops {
            self.flops + self.activation_flops
        } else {
            self.flops
        }
    }
}

/// Counting policy: whether activation element-ops join the FLOP totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CostPolicy {
    pub include_activation_flops: bool,
}

fn out_area(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<u64> {
    let (ow, oh) = spec.out_dims(in_w, in_h)?;
    Ok(ow as u64 * oh as u64)
}

/// Cost of a standard convolution: params `K²CN`, flops `WH·K²CN`.
pub fn conv_cost(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<LayerCost> {
    let k2 = (spec.kernel * spec.kernel) as u64;
    let (c, n) = (spec.in_channels as u64, spec.out_channels as u64);
    let area = out_area(spec, in_w, in_h)?;
    Ok(LayerCost {
        params: k2 * c * n,
        flops: area * k2 * c * n,
        activation_flops: 0,
    })
}

/// Cost of a depthwise-separable layer: params `K²Ct + CtN`, both stages
/// evaluated at output resolution.
pub fn depthsep_cost(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<LayerCost> {
    let k2 = (spec.kernel * spec.kernel) as u64;
    let ct = (spec.in_channels * spec.width_multiplier) as u64;
    let n = spec.out_channels as u64;
    let area = out_area(spec, in_w, in_h)?;
    Ok(LayerCost {
        params: k2 * ct + ct * n,
        flops: area * (k2 * ct + ct * n),
        activation_flops: 0,
    })
}

/// Cost of a Tucker-2 layer. The input projection runs at input resolution;
/// the core convolution carries the stride, so it and the output projection
/// run at output resolution.
pub fn tucker2_cost(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<LayerCost> {
    let k2 = (spec.kernel * spec.kernel) as u64;
    let (c, n) = (spec.in_channels as u64, spec.out_channels as u64);
    let (r1, r2) = (spec.rank_in as u64, spec.rank_out as u64);
    let in_area = in_w as u64 * in_h as u64;
    let area = out_area(spec, in_w, in_h)?;
    Ok(LayerCost {
        params: c * r1 + k2 * r1 * r2 + r2 * n,
        flops: in_area * c * r1 + area * k2 * r1 * r2 + area * r2 * n,
        activation_flops: 0,
    })
}

/// Cost of a TDW layer: params `K²Ct + CtR + RN` at output resolution.
pub fn tdw_cost(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<LayerCost> {
    let k2 = (spec.kernel * spec.kernel) as u64;
    let ct = (spec.in_channels * spec.width_multiplier) as u64;
    let n = spec.out_channels as u64;
    let r = spec.bottleneck_rank as u64;
    let area = out_area(spec, in_w, in_h)?;
    Ok(LayerCost {
        params: k2 * ct + ct * r + r * n,
        flops: area * (k2 * ct + ct * r + r * n),
        activation_flops: 0,
    })
}

/// Whether a TDW spec's bottleneck reduces parameters: `CtN > CtR + RN`.
pub fn tdw_compresses(spec: &LayerSpec) -> bool {
    bottleneck_compresses(
        spec.in_channels * spec.width_multiplier,
        spec.out_channels,
        spec.bottleneck_rank,
    )
}

/// Cost of a CDP layer: `K²αN + K²(C−α) + (N+(C−α))·N` parameters, FLOPs at
/// output resolution, and the per-branch ReLU element count reported in
/// `activation_flops`. At α = 0 the standard branch vanishes and the layer
/// costs exactly a unit-multiplier depthwise-separable layer.
pub fn cdp_cost(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<LayerCost> {
    if spec.alpha > spec.in_channels {
        return Err(Error::invalid(format!(
            "alpha {} exceeds input channels {}",
            spec.alpha, spec.in_channels
        )));
    }
    let k2 = (spec.kernel * spec.kernel) as u64;
    let (c, n) = (spec.in_channels as u64, spec.out_channels as u64);
    let a = spec.alpha as u64;
    let concat = spec.cdp_concat_channels() as u64;
    let area = out_area(spec, in_w, in_h)?;
    let params = k2 * a * n + k2 * (c - a) + concat * n;
    Ok(LayerCost {
        params,
        flops: area * params,
        activation_flops: area * concat,
    })
}

/// Cost of one layer, dispatched on kind.
pub fn layer_cost(spec: &LayerSpec, in_w: usize, in_h: usize) -> Result<LayerCost> {
    match spec.kind {
        LayerKind::Standard => conv_cost(spec, in_w, in_h),
        LayerKind::DepthSep => depthsep_cost(spec, in_w, in_h),
        LayerKind::Tucker2 => tucker2_cost(spec, in_w, in_h),
        LayerKind::Tdw => tdw_cost(spec, in_w, in_h),
        LayerKind::Cdp => cdp_cost(spec, in_w, in_h),
    }
}

/// Feasibility bounds on the CDP offset for parameter compression.
///
/// `exact` is `C − N²/(K²(N−1) − N)`: an integer offset strictly below it
/// compresses against the standard layer. `simplified` is the large-N form
/// `C − N/(K² − 1)`. Either is `None` when its denominator is non-positive,
/// in which case no offset achieves compression through this construction
/// (for example K = 1, where the depthwise branch is per-channel scaling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaBound {
    pub exact: Option<f64>,
    pub simplified: Option<f64>,
}

pub fn alpha_bound(k: usize, c: usize, n: usize) -> AlphaBound {
    let k2 = (k * k) as f64;
    let (c, n) = (c as f64, n as f64);
    let exact_denom = k2 * (n - 1.0) - n;
    let exact = if exact_denom > 0.0 {
        Some(c - n * n / exact_denom)
    } else {
        None
    };
    let simplified = if k >= 2 {
        Some(c - n / (k2 - 1.0))
    } else {
        None
    };
    AlphaBound { exact, simplified }
}

/// Per-layer and total costs of an architecture.
#[derive(Debug, Clone)]
pub struct CostReport {
    /// (1-based layer index, cost) in network order.
    pub per_layer: Vec<(usize, LayerCost)>,
    pub total_params: u64,
    pub total_flops: u64,
    /// baseline params / these params, when a baseline was supplied.
    pub compression_ratio: Option<f64>,
    /// baseline flops / these flops, when a baseline was supplied.
    pub speedup: Option<f64>,
    pub policy: CostPolicy,
}

type PerLayerCosts = Vec<(usize, LayerCost)>;

fn totals(arch: &ArchSpec, policy: CostPolicy) -> Result<(PerLayerCosts, u64, u64)> {
    arch.validate()?;
    let trace = arch.spatial_trace()?;
    let mut per_layer = Vec::with_capacity(arch.layers.len());
    let mut params = 0u64;
    let mut flops = 0u64;
    for (i, spec) in arch.layers.iter().enumerate() {
        let index = i + 1;
        let (w, h) = trace[i];
        let cost = layer_cost(spec, w, h).map_err(|e| e.at_layer(index))?;
        params += cost.params;
        flops += cost.flops_with(policy);
        per_layer.push((index, cost));
    }
    Ok((per_layer, params, flops))
}

/// Costs an architecture, propagating spatial extents through strides and
/// pooling markers. With a baseline, the compression ratio and speedup are
/// baseline totals over these totals.
///
/// ```
/// use convfactor::{l2net, model_cost, CostPolicy};
///
/// let report = model_cost(&l2net(), None, CostPolicy::default()).unwrap();
/// assert_eq!(report.total_params, 1_334_560);
/// ```
pub fn model_cost(
    arch: &ArchSpec,
    baseline: Option<&ArchSpec>,
    policy: CostPolicy,
) -> Result<CostReport> {
    let (per_layer, total_params, total_flops) = totals(arch, policy)?;
    let (compression_ratio, speedup) = match baseline {
        Some(base) => {
            let (_, base_params, base_flops) = totals(base, policy)?;
            (
                Some(base_params as f64 / total_params as f64),
                Some(base_flops as f64 / total_flops as f64),
            )
        }
        None => (None, None),
    };
    Ok(CostReport {
        per_layer,
        total_params,
        total_flops,
        compression_ratio,
        speedup,
        policy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch;
    use crate::layers::LayerWeights;

    #[test]
    fn conv_cost_l2net_layer2() {
        let spec = LayerSpec::standard(3, 32, 32, 1, 1).unwrap();
        let cost = conv_cost(&spec, 32, 32).unwrap();
        assert_eq!(cost.params, 9216);
        assert_eq!(cost.flops, 9_437_184);
    }

    #[test]
    fn conv_cost_l2net_layer7() {
        let spec = LayerSpec::standard(8, 128, 128, 1, 0).unwrap();
        let cost = conv_cost(&spec, 8, 8).unwrap();
        assert_eq!(cost.params, 1_048_576);
        assert_eq!(cost.flops, 1_048_576);
    }

    #[test]
    fn conv_cost_unit() {
        let spec = LayerSpec::standard(1, 1, 1, 1, 0).unwrap();
        let cost = conv_cost(&spec, 1, 1).unwrap();
        assert_eq!(cost.params, 1);
        assert_eq!(cost.flops, 1);
    }

    #[test]
    fn depthsep_cost_l2net_layers() {
        let l2 = LayerSpec::depthsep(3, 32, 32, 1, 1, 1).unwrap();
        let cost = depthsep_cost(&l2, 32, 32).unwrap();
        assert_eq!(cost.params, 1312);
        assert_eq!(cost.flops, 1_343_488);

        let l7 = LayerSpec::depthsep(8, 128, 128, 1, 0, 1).unwrap();
        assert_eq!(depthsep_cost(&l7, 8, 8).unwrap().params, 24_576);

        let l1 = LayerSpec::depthsep(3, 1, 32, 1, 1, 1).unwrap();
        assert_eq!(depthsep_cost(&l1, 32, 32).unwrap().params, 41);
    }

    #[test]
    fn tucker2_cost_formula() {
        // Degenerate full-rank form C² + K²CN + N².
        let spec = LayerSpec::tucker2(3, 16, 24, 1, 1, 16, 24).unwrap();
        let cost = tucker2_cost(&spec, 8, 8).unwrap();
        assert_eq!(cost.params, 16 * 16 + 9 * 16 * 24 + 24 * 24);

        let l7 = LayerSpec::tucker2(8, 128, 128, 1, 0, 64, 64).unwrap();
        assert_eq!(tucker2_cost(&l7, 8, 8).unwrap().params, 278_528);
    }

    #[test]
    fn tucker2_cost_projection_at_input_resolution() {
        // Stride-2 layer: input projection at 16², the rest at 8².
        let spec = LayerSpec::tucker2(3, 8, 8, 2, 1, 4, 4).unwrap();
        let cost = tucker2_cost(&spec, 16, 16).unwrap();
        let expect = 256 * 8 * 4 + 64 * 9 * 4 * 4 + 64 * 4 * 8;
        assert_eq!(cost.flops, expect as u64);
    }

    #[test]
    fn tdw_cost_reference_embeddings() {
        // Layer 6: 128 -> 43 -> 128 at t=1.
        let l6 = LayerSpec::tdw(3, 128, 128, 1, 1, 1, 43).unwrap();
        assert_eq!(tdw_cost(&l6, 8, 8).unwrap().params, 12_160);
        assert!(tdw_compresses(&l6));

        // Layer 5: depthwise expands 64 -> 128, bottleneck 128 -> 33 -> 128.
        let l5 = LayerSpec::tdw(3, 64, 128, 2, 1, 2, 33).unwrap();
        assert_eq!(tdw_cost(&l5, 16, 16).unwrap().params, 9_600);
        assert!(tdw_compresses(&l5));
    }

    #[test]
    fn tdw_no_compression_at_full_width() {
        let spec = LayerSpec::tdw(3, 16, 16, 1, 1, 1, 16).unwrap();
        assert!(!tdw_compresses(&spec));
    }

    #[test]
    fn cdp_cost_l2net_layer7_alpha2() {
        let spec = LayerSpec::cdp(8, 128, 128, 1, 0, 2).unwrap();
        assert_eq!(cdp_cost(&spec, 8, 8).unwrap().params, 56_960);
    }

    #[test]
    fn cdp_cost_alpha_full_is_conv_plus_pointwise() {
        let spec = LayerSpec::cdp(3, 16, 24, 1, 1, 16).unwrap();
        let cost = cdp_cost(&spec, 8, 8).unwrap();
        assert_eq!(cost.params, 9 * 16 * 24 + 24 * 24);
    }

    #[test]
    fn cdp_cost_alpha_zero_equals_depthsep() {
        for (k, c, n) in [(3usize, 16usize, 24usize), (8, 128, 128), (1, 8, 4)] {
            let cdp = LayerSpec::cdp(k, c, n, 1, if k > 1 { 1 } else { 0 }, 0).unwrap();
            let ds = LayerSpec::depthsep(k, c, n, 1, if k > 1 { 1 } else { 0 }, 1).unwrap();
            let a = cdp_cost(&cdp, 32, 32).unwrap();
            let b = depthsep_cost(&ds, 32, 32).unwrap();
            assert_eq!(a.params, b.params);
            assert_eq!(a.flops, b.flops);
        }
    }

    #[test]
    fn cdp_params_strictly_increase_with_alpha() {
        for (k, c, n) in [(3usize, 32usize, 32usize), (8, 16, 16), (2, 12, 8)] {
            let mut prev = None;
            for alpha in 0..=c {
                let spec = LayerSpec::cdp(k, c, n, 1, 1, alpha).unwrap();
                let params = cdp_cost(&spec, 16, 16).unwrap().params;
                if let Some(p) = prev {
                    assert!(params > p, "k={k} c={c} n={n} alpha={alpha}");
                }
                prev = Some(params);
            }
        }
    }

    #[test]
    fn cdp_activation_term_counted_under_policy() {
        let spec = LayerSpec::cdp(3, 8, 8, 1, 1, 2).unwrap();
        let cost = cdp_cost(&spec, 6, 6).unwrap();
        assert_eq!(cost.activation_flops, 36 * (8 + 6));
        let off = CostPolicy::default();
        let on = CostPolicy {
            include_activation_flops: true,
        };
        assert_eq!(
            cost.flops_with(on) - cost.flops_with(off),
            cost.activation_flops
        );
    }

    #[test]
    fn alpha_bound_values() {
        let b = alpha_bound(3, 128, 128);
        assert!((b.simplified.unwrap() - 112.0).abs() < 1e-9);

        let b = alpha_bound(8, 128, 128);
        assert!((b.simplified.unwrap() - (128.0 - 128.0 / 63.0)).abs() < 1e-9);
        assert!((b.exact.unwrap() - (128.0 - 16384.0 / 8000.0)).abs() < 1e-9);

        assert_eq!(alpha_bound(1, 64, 64).exact, None);
        assert_eq!(alpha_bound(1, 64, 64).simplified, None);
    }

    #[test]
    fn alpha_enumeration_matches_exact_bound() {
        // Exhaustive check over the documented example grid: the integer
        // inequality alpha·D < C·D − N² with D = K²(N−1) − N is the exact
        // compression test for every alpha, including 0.
        let (k, c, n) = (3usize, 32usize, 32usize);
        let conv = conv_cost(&LayerSpec::standard(k, c, n, 1, 1).unwrap(), 16, 16)
            .unwrap()
            .params;
        let d = (k * k * (n - 1)) as i64 - n as i64;
        for alpha in 0..=c {
            let spec = LayerSpec::cdp(k, c, n, 1, 1, alpha).unwrap();
            let params = cdp_cost(&spec, 16, 16).unwrap().params;
            let predicted = (alpha as i64) * d < (c as i64) * d - (n as i64 * n as i64);
            assert_eq!(params < conv, predicted, "alpha={alpha}");
        }
    }

    #[test]
    fn params_equal_weight_elements_for_all_kinds() {
        let specs = vec![
            LayerSpec::standard(3, 6, 10, 1, 1).unwrap(),
            LayerSpec::depthsep(3, 6, 10, 2, 1, 2).unwrap(),
            LayerSpec::tucker2(3, 6, 10, 1, 1, 4, 7).unwrap(),
            LayerSpec::tdw(5, 6, 10, 1, 2, 2, 8).unwrap(),
            LayerSpec::cdp(3, 6, 10, 1, 1, 0).unwrap(),
            LayerSpec::cdp(3, 6, 10, 1, 1, 3).unwrap(),
            LayerSpec::cdp(3, 6, 10, 1, 1, 6).unwrap(),
        ];
        for spec in specs {
            let cost = layer_cost(&spec, 12, 12).unwrap();
            let weights = LayerWeights::zeros(&spec).unwrap();
            assert_eq!(cost.params, weights.element_count(), "{spec:?}");
        }
    }

    #[test]
    fn model_cost_l2net_total() {
        let arch = arch::l2net();
        let report = model_cost(&arch, None, CostPolicy::default()).unwrap();
        assert_eq!(report.total_params, 1_334_560);
    }

    #[test]
    fn flops_feasibility_matches_params_feasibility() {
        // With activations excluded, CDP flops factor as area × params, so
        // the two brute-force feasibility sets coincide.
        for k in [2usize, 3, 8] {
            for c in [8usize, 16, 32] {
                for n in [8usize, 16, 64] {
                    let conv_spec = LayerSpec::standard(k, c, n, 1, 1).unwrap();
                    let conv = layer_cost(&conv_spec, 16, 16).unwrap();
                    for alpha in 0..=c {
                        let spec = LayerSpec::cdp(k, c, n, 1, 1, alpha).unwrap();
                        let cost = layer_cost(&spec, 16, 16).unwrap();
                        assert_eq!(
                            cost.params < conv.params,
                            cost.flops < conv.flops,
                            "k={k} c={c} n={n} alpha={alpha}"
                        );
                    }
                }
            }
        }
    }
}
