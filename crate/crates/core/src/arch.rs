//! Canonical architectures and the replacement-plan engine.
//!
//! [`l2net`] is the seven-layer patch descriptor (32×32 grayscale in, 128-d
//! descriptor out, spatial reduction through strided convolutions).
//! [`superpoint`] is the VGG-style shared encoder plus the two detector-head
//! layers, with 2×2 max pooling after backbone layers 2, 4 and 6; the
//! descriptor head is not modeled.
//!
//! [`apply_plan`] rewrites standard layers into factorized variants and,
//! when a weight store is supplied, produces the corresponding weights:
//! Tucker-2 targets are factorized from the stored kernel, TDW targets split
//! an existing pointwise stage through a bottleneck, and DepthSep/CDP
//! targets get freshly initialized weights (no transform from a standard
//! kernel exists; those variants are retrained in practice).

use crate::error::{Error, Result};
use crate::factorize::{decompose_layer, select_bottleneck_rank, split_pointwise};
use crate::layers::{LayerKind, LayerSpec, LayerWeights, WeightRole};
use crate::store::{seeded_layer_weights, WeightStore};
use crate::tensor::Matrix;

/// An ordered stack of layers with pooling markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchSpec {
    pub name: String,
    pub input_width: usize,
    pub input_height: usize,
    pub input_channels: usize,
    pub layers: Vec<LayerSpec>,
    /// 1-based layer indices after which a 2×2 stride-2 max pool runs.
    pub pools: Vec<usize>,
}

impl ArchSpec {
    /// Checks channel chaining, pool indices, and spatial propagation.
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::invalid("architecture has no layers"));
        }
        let mut channels = self.input_channels;
        for (i, spec) in self.layers.iter().enumerate() {
            spec.validate().map_err(|e| e.at_layer(i + 1))?;
            if spec.in_channels != channels {
                return Err(Error::shape(format!(
                    "expects {} input channels, previous layer provides {channels}",
                    spec.in_channels
                ))
                .at_layer(i + 1));
            }
            channels = spec.out_channels;
        }
        for &p in &self.pools {
            if p == 0 || p > self.layers.len() {
                return Err(Error::invalid(format!(
                    "pool marker after layer {p} out of range"
                )));
            }
        }
        self.output_shape()?;
        Ok(())
    }

    /// Spatial extent (width, height) seen by each layer, plus the final
    /// output extent as the last entry, accounting for strides and pooling
    /// markers.
    pub fn spatial_trace(&self) -> Result<Vec<(usize, usize)>> {
        let mut trace = Vec::with_capacity(self.layers.len() + 1);
        let (mut w, mut h) = (self.input_width, self.input_height);
        for (i, spec) in self.layers.iter().enumerate() {
            trace.push((w, h));
            let (ow, oh) = spec.out_dims(w, h).map_err(|e| e.at_layer(i + 1))?;
            w = ow;
            h = oh;
            if self.pools.contains(&(i + 1)) {
                w /= 2;
                h /= 2;
                if w == 0 || h == 0 {
                    return Err(Error::invalid("pooled extent vanished").at_layer(i + 1));
                }
            }
        }
        trace.push((w, h));
        Ok(trace)
    }

    /// Final (width, height, channels) after all layers and pools.
    pub fn output_shape(&self) -> Result<(usize, usize, usize)> {
        let trace = self.spatial_trace()?;
        let (w, h) = *trace.last().expect("trace has the final extent");
        let c = self
            .layers
            .last()
            .map_or(self.input_channels, |l| l.out_channels);
        Ok((w, h, c))
    }
}

/// Seven-layer patch descriptor: 32×32×1 input, 1×1×128 output.
pub fn l2net() -> ArchSpec {
    let layer = |k, c, n, s, p| LayerSpec::standard(k, c, n, s, p).expect("static spec");
    ArchSpec {
        name: "l2net".into(),
        input_width: 32,
        input_height: 32,
        input_channels: 1,
        layers: vec![
            layer(3, 1, 32, 1, 1),
            layer(3, 32, 32, 1, 1),
            layer(3, 32, 64, 2, 1),
            layer(3, 64, 64, 1, 1),
            layer(3, 64, 128, 2, 1),
            layer(3, 128, 128, 1, 1),
            layer(8, 128, 128, 1, 0),
        ],
        pools: vec![],
    }
}

/// VGG-style shared encoder (8 layers, pooling after 2, 4, 6) plus the
/// two-layer detector head, at a 320×240×3 input.
pub fn superpoint() -> ArchSpec {
    let layer = |k, c, n, s, p| LayerSpec::standard(k, c, n, s, p).expect("static spec");
    ArchSpec {
        name: "superpoint".into(),
        input_width: 320,
        input_height: 240,
        input_channels: 3,
        layers: vec![
            layer(3, 3, 64, 1, 1),
            layer(3, 64, 64, 1, 1),
            layer(3, 64, 64, 1, 1),
            layer(3, 64, 64, 1, 1),
            layer(3, 64, 128, 1, 1),
            layer(3, 128, 128, 1, 1),
            layer(3, 128, 128, 1, 1),
            layer(3, 128, 128, 1, 1),
            // Detector head.
            layer(3, 128, 256, 1, 1),
            layer(1, 256, 65, 1, 0),
        ],
        pools: vec![2, 4, 6],
    }
}

/// Reference per-layer parameter counts for the rank-selected Tucker-2
/// variant of the trained seven-layer descriptor (layers 2–7). The ranks
/// behind these counts come from the trained weights and are not recoverable
/// analytically, so the counts are kept as data.
pub fn l2net_tucker_reference_params() -> [(usize, u64); 6] {
    [
        (2, 3396),
        (3, 3288),
        (4, 5446),
        (5, 13587),
        (6, 25589),
        (7, 143_168),
    ]
}

/// Reference per-layer MFLOPs for the same Tucker-2 variant, layers 2–7.
pub fn l2net_tucker_reference_mflops() -> [(usize, f64); 6] {
    [
        (2, 3.48),
        (3, 1.87),
        (4, 1.39),
        (5, 0.49),
        (6, 1.64),
        (7, 0.14),
    ]
}

/// How ranks are chosen for a Tucker-2 rewrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuckerRanks {
    Explicit(usize, usize),
    Vbmf,
}

/// How the bottleneck depth is chosen for a TDW rewrite.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BottleneckRank {
    Explicit(usize),
    Vbmf,
}

/// Offsets for a CDP rewrite: one value for every targeted layer, or one
/// per layer in range order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AlphaAssignment {
    Uniform(usize),
    PerLayer(Vec<usize>),
}

/// Parameters of one rewrite directive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectiveParams {
    DepthSep {
        /// Default width multiplier for the targeted layers.
        t: usize,
        /// Per-layer overrides (1-based layer index, multiplier).
        t_overrides: Vec<(usize, usize)>,
    },
    Tucker2 {
        ranks: TuckerRanks,
    },
    Tdw {
        /// Width multiplier; `None` inherits the source layer's multiplier.
        t: Option<usize>,
        rank: BottleneckRank,
    },
    Cdp {
        alpha: AlphaAssignment,
    },
}

/// A rewrite of one inclusive 1-based layer range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Directive {
    pub start: usize,
    pub end: usize,
    pub params: DirectiveParams,
}

impl Directive {
    pub fn kind(&self) -> LayerKind {
        match self.params {
            DirectiveParams::DepthSep { .. } => LayerKind::DepthSep,
            DirectiveParams::Tucker2 { .. } => LayerKind::Tucker2,
            DirectiveParams::Tdw { .. } => LayerKind::Tdw,
            DirectiveParams::Cdp { .. } => LayerKind::Cdp,
        }
    }
}

/// An ordered set of directives; at most one may target any layer.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplacementPlan {
    pub directives: Vec<Directive>,
}

impl ReplacementPlan {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty()
    }
}

/// Provenance record for one rewritten layer.
#[derive(Debug, Clone)]
pub struct LayerRewrite {
    /// 1-based layer index.
    pub layer: usize,
    /// Index of the directive in the plan.
    pub directive: usize,
    pub from: LayerKind,
    pub to: LayerKind,
    /// Tucker-2 ranks actually used.
    pub tucker_ranks: Option<(usize, usize)>,
    /// TDW bottleneck depth actually used.
    pub bottleneck_rank: Option<usize>,
    /// Relative reconstruction error of a Tucker-2 factorization.
    pub reconstruction_error: Option<f64>,
}

/// Result of applying a plan.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub arch: ArchSpec,
    pub weights: Option<WeightStore>,
    pub rewrites: Vec<LayerRewrite>,
}

/// Applies a replacement plan to an architecture.
///
/// Directives may only target standard layers, with one exception: a TDW
/// directive may target a depthwise-separable layer, splitting its pointwise
/// stage through a bottleneck. Any directive on layer 1 is refused (the
/// first layer is never factorized; its input depth is too small to gain
/// anything). Re-targeting an already-rewritten layer is refused rather than
/// stacked. `seed` drives the fresh initialization of DepthSep and CDP
/// weights when a store is supplied.
pub fn apply_plan(
    arch: &ArchSpec,
    plan: &ReplacementPlan,
    weights: Option<&WeightStore>,
    seed: u64,
) -> Result<PlanOutcome> {
    arch.validate()?;
    if let Some(store) = weights {
        store.check_matches(arch)?;
    }

    // Expand directives to per-layer assignments, refusing overlaps.
    let mut assignment: Vec<Option<usize>> = vec![None; arch.layers.len()];
    for (d_idx, d) in plan.directives.iter().enumerate() {
        if d.start == 0 || d.end > arch.layers.len() || d.start > d.end {
            return Err(Error::invalid(format!(
                "directive range {}-{} out of bounds for {} layers",
                d.start,
                d.end,
                arch.layers.len()
            )));
        }
        if let DirectiveParams::Cdp {
            alpha: AlphaAssignment::PerLayer(list),
        } = &d.params
        {
            if list.len() != d.end - d.start + 1 {
                return Err(Error::invalid(format!(
                    "{} offsets for {} layers in range {}-{}",
                    list.len(),
                    d.end - d.start + 1,
                    d.start,
                    d.end
                )));
            }
        }
        if let DirectiveParams::DepthSep { t_overrides, .. } = &d.params {
            for &(layer, _) in t_overrides {
                if layer < d.start || layer > d.end {
                    return Err(Error::invalid(format!(
                        "multiplier override for layer {layer} outside range {}-{}",
                        d.start, d.end
                    )));
                }
            }
        }
        for layer in d.start..=d.end {
            if layer == 1 {
                return Err(Error::RejectedDirective(
                    "layer 1 is never factorized (single-channel input carries nothing to split)"
                        .into(),
                ));
            }
            if assignment[layer - 1].is_some() {
                return Err(Error::invalid(format!(
                    "layer {layer} targeted by more than one directive"
                )));
            }
            assignment[layer - 1] = Some(d_idx);
        }
    }

    let mut out_layers = arch.layers.clone();
    let mut out_store = weights.map(|w| w.clone_metadata());
    let mut rewrites = Vec::new();

    for (i, directive_idx) in assignment.iter().enumerate() {
        let layer = i + 1;
        let source = &arch.layers[i];
        let Some(d_idx) = directive_idx else {
            // Untouched layer: carry weights through unchanged.
            if let (Some(store), Some(src)) = (out_store.as_mut(), weights) {
                for (role, tensor) in src.layer_tensors(layer) {
                    store.insert(WeightStore::tensor_name(layer, role), tensor.clone())?;
                }
            }
            continue;
        };
        let d = &plan.directives[*d_idx];

        let already_target = source.kind == d.kind();
        let tdw_on_depthsep =
            matches!(d.params, DirectiveParams::Tdw { .. }) && source.kind == LayerKind::DepthSep;
        if source.kind != LayerKind::Standard && !tdw_on_depthsep {
            let what = if already_target {
                "already rewritten"
            } else {
                "not a standard layer"
            };
            return Err(Error::RejectedDirective(format!(
                "layer {layer} is {what} ({})",
                source.kind
            )));
        }

        let (k, c, n) = (source.kernel, source.in_channels, source.out_channels);
        let (s, p) = (source.stride, source.padding);
        let mut rewrite = LayerRewrite {
            layer,
            directive: *d_idx,
            from: source.kind,
            to: d.kind(),
            tucker_ranks: None,
            bottleneck_rank: None,
            reconstruction_error: None,
        };

        match &d.params {
            DirectiveParams::DepthSep { t, t_overrides } => {
                let t = t_overrides
                    .iter()
                    .find(|(l, _)| *l == layer)
                    .map(|&(_, t)| t)
                    .unwrap_or(*t);
                let spec = LayerSpec::depthsep(k, c, n, s, p, t).map_err(|e| e.at_layer(layer))?;
                if let Some(store) = out_store.as_mut() {
                    let fresh = seeded_layer_weights(&spec, seed, layer)?;
                    store.insert_layer(layer, &fresh)?;
                }
                out_layers[i] = spec;
            }
            DirectiveParams::Tucker2 { ranks } => {
                let (r1, r2, err) = match (ranks, weights) {
                    (TuckerRanks::Explicit(r1, r2), None) => (*r1, *r2, None),
                    (TuckerRanks::Vbmf, None) => {
                        return Err(Error::invalid(format!(
                            "layer {layer}: automatic rank selection needs weights"
                        )));
                    }
                    (ranks, Some(src)) => {
                        let kernel = src.layer_tensor(layer, WeightRole::Kernel)?;
                        let explicit = match ranks {
                            TuckerRanks::Explicit(r1, r2) => Some((*r1, *r2)),
                            TuckerRanks::Vbmf => None,
                        };
                        let dec =
                            decompose_layer(kernel, explicit).map_err(|e| e.at_layer(layer))?;
                        let (r1, r2) = dec.factors.ranks();
                        let err = dec.factors.reconstruction_error;
                        if let Some(store) = out_store.as_mut() {
                            let spec = LayerSpec::tucker2(k, c, n, s, p, r1, r2)
                                .map_err(|e| e.at_layer(layer))?;
                            let w = LayerWeights::from_pairs(
                                &spec,
                                vec![
                                    (WeightRole::ProjIn, dec.factors.proj_in.to_tensor()),
                                    (WeightRole::Core, dec.factors.core.clone()),
                                    (WeightRole::ProjOut, dec.factors.proj_out.to_tensor()),
                                ],
                            )?;
                            store.insert_layer(layer, &w)?;
                        }
                        (r1, r2, Some(err))
                    }
                };
                let spec =
                    LayerSpec::tucker2(k, c, n, s, p, r1, r2).map_err(|e| e.at_layer(layer))?;
                rewrite.tucker_ranks = Some((r1, r2));
                rewrite.reconstruction_error = err;
                out_layers[i] = spec;
            }
            DirectiveParams::Tdw { t, rank } => {
                let t = t.unwrap_or(if tdw_on_depthsep {
                    source.width_multiplier
                } else {
                    1
                });
                if tdw_on_depthsep && t != source.width_multiplier {
                    return Err(Error::RejectedDirective(format!(
                        "layer {layer}: multiplier {t} conflicts with the source layer's {}",
                        source.width_multiplier
                    )));
                }
                let (r, split) = match (rank, weights) {
                    (BottleneckRank::Explicit(r), None) => (*r, None),
                    (BottleneckRank::Vbmf, None) => {
                        return Err(Error::invalid(format!(
                            "layer {layer}: automatic rank selection needs weights"
                        )));
                    }
                    (rank, Some(src)) if tdw_on_depthsep => {
                        let pointwise =
                            Matrix::from_tensor(src.layer_tensor(layer, WeightRole::Pointwise)?)?;
                        let r = match rank {
                            BottleneckRank::Explicit(r) => *r,
                            BottleneckRank::Vbmf => select_bottleneck_rank(&pointwise)?.rank,
                        };
                        let (b_in, b_out) =
                            split_pointwise(&pointwise, r).map_err(|e| e.at_layer(layer))?;
                        let depthwise = src.layer_tensor(layer, WeightRole::Depthwise)?.clone();
                        (r, Some((depthwise, b_in, b_out)))
                    }
                    (BottleneckRank::Explicit(r), Some(_)) => (*r, None),
                    (BottleneckRank::Vbmf, Some(_)) => {
                        return Err(Error::invalid(format!(
                            "layer {layer}: automatic bottleneck selection needs a \
                             depthwise-separable source layer"
                        )));
                    }
                };
                let spec = LayerSpec::tdw(k, c, n, s, p, t, r).map_err(|e| e.at_layer(layer))?;
                if let Some(store) = out_store.as_mut() {
                    let w = match split {
                        Some((depthwise, b_in, b_out)) => LayerWeights::from_pairs(
                            &spec,
                            vec![
                                (WeightRole::Depthwise, depthwise),
                                (WeightRole::BottleneckIn, b_in.to_tensor()),
                                (WeightRole::BottleneckOut, b_out.to_tensor()),
                            ],
                        )?,
                        None => seeded_layer_weights(&spec, seed, layer)?,
                    };
                    store.insert_layer(layer, &w)?;
                }
                rewrite.bottleneck_rank = Some(r);
                out_layers[i] = spec;
            }
            DirectiveParams::Cdp { alpha } => {
                let a = match alpha {
                    AlphaAssignment::Uniform(a) => *a,
                    AlphaAssignment::PerLayer(list) => list[layer - d.start],
                };
                let spec = LayerSpec::cdp(k, c, n, s, p, a).map_err(|e| e.at_layer(layer))?;
                if let Some(store) = out_store.as_mut() {
                    let fresh = seeded_layer_weights(&spec, seed, layer)?;
                    store.insert_layer(layer, &fresh)?;
                }
                out_layers[i] = spec;
            }
        }
        rewrites.push(rewrite);
    }

    let out_arch = ArchSpec {
        name: arch.name.clone(),
        layers: out_layers,
        ..arch.clone()
    };
    out_arch.validate()?;
    Ok(PlanOutcome {
        arch: out_arch,
        weights: out_store,
        rewrites,
    })
}
