//! Forward-executable layer constructions.
//!
//! Five layer kinds are supported: standard convolution, depthwise-separable,
//! Tucker-2 factorized, depthwise with a pointwise linear bottleneck (TDW),
//! and the convolution-depthwise-pointwise split (CDP). Declared specs and
//! allocated weights correspond exactly: the element count of a layer's
//! weights always equals the cost model's parameter count for the same spec.
//!
//! The `activation` field of a spec denotes the construction's intermediate
//! non-linearity: after the convolution for a standard layer, after the
//! depthwise stage for depthwise-separable and TDW layers, and per branch
//! (before concatenation) for CDP layers. Tucker-2 layers place no
//! non-linearity between their stages. No layer has bias terms.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;

use crate::arch::ArchSpec;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Structural kind of a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Standard,
    DepthSep,
    Tucker2,
    Tdw,
    Cdp,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            LayerKind::Standard => "standard",
            LayerKind::DepthSep => "depthsep",
            LayerKind::Tucker2 => "tucker2",
            LayerKind::Tdw => "tdw",
            LayerKind::Cdp => "cdp",
        };
        write!(f, "{s}")
    }
}

/// Element-wise non-linearity applied at a layer's intermediate stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    None,
    Relu,
}

impl Activation {
    fn apply(self, v: f32) -> f32 {
        match self {
            Activation::None => v,
            Activation::Relu => v.max(0.0),
        }
    }
}

/// Structural description of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    /// Square kernel extent K.
    pub kernel: usize,
    /// Input channels C.
    pub in_channels: usize,
    /// Output channels N.
    pub out_channels: usize,
    pub stride: usize,
    pub padding: usize,
    /// CDP offset: input channels routed to the standard-convolution branch.
    pub alpha: usize,
    /// Depthwise width multiplier t (DepthSep and TDW).
    pub width_multiplier: usize,
    /// Tucker-2 input-side rank R1.
    pub rank_in: usize,
    /// Tucker-2 output-side rank R2.
    pub rank_out: usize,
    /// TDW bottleneck rank R.
    pub bottleneck_rank: usize,
    pub activation: Activation,
}

impl LayerSpec {
    fn base(kind: LayerKind, k: usize, c: usize, n: usize, stride: usize, padding: usize) -> Self {
        LayerSpec {
            kind,
            kernel: k,
            in_channels: c,
            out_channels: n,
            stride,
            padding,
            alpha: 0,
            width_multiplier: 1,
            rank_in: 0,
            rank_out: 0,
            bottleneck_rank: 0,
            activation: Activation::None,
        }
    }

    pub fn standard(k: usize, c: usize, n: usize, stride: usize, padding: usize) -> Result<Self> {
        let spec = Self::base(LayerKind::Standard, k, c, n, stride, padding);
        spec.validate()?;
        Ok(spec)
    }

    pub fn depthsep(
        k: usize,
        c: usize,
        n: usize,
        stride: usize,
        padding: usize,
        t: usize,
    ) -> Result<Self> {
        let mut spec = Self::base(LayerKind::DepthSep, k, c, n, stride, padding);
        spec.width_multiplier = t;
        spec.validate()?;
        Ok(spec)
    }

    pub fn tucker2(
        k: usize,
        c: usize,
        n: usize,
        stride: usize,
        padding: usize,
        r1: usize,
        r2: usize,
    ) -> Result<Self> {
        let mut spec = Self::base(LayerKind::Tucker2, k, c, n, stride, padding);
        spec.rank_in = r1;
        spec.rank_out = r2;
        spec.validate()?;
        Ok(spec)
    }

    pub fn tdw(
        k: usize,
        c: usize,
        n: usize,
        stride: usize,
        padding: usize,
        t: usize,
        r: usize,
    ) -> Result<Self> {
        let mut spec = Self::base(LayerKind::Tdw, k, c, n, stride, padding);
        spec.width_multiplier = t;
        spec.bottleneck_rank = r;
        spec.validate()?;
        Ok(spec)
    }

    pub fn cdp(
        k: usize,
        c: usize,
        n: usize,
        stride: usize,
        padding: usize,
        alpha: usize,
    ) -> Result<Self> {
        let mut spec = Self::base(LayerKind::Cdp, k, c, n, stride, padding);
        spec.alpha = alpha;
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel == 0 || self.in_channels == 0 || self.out_channels == 0 || self.stride == 0 {
            return Err(Error::invalid(format!(
                "kernel, channels and stride must be positive ({self:?})"
            )));
        }
        match self.kind {
            LayerKind::Standard => {}
            LayerKind::DepthSep => {
                if self.width_multiplier == 0 {
                    return Err(Error::invalid("width multiplier must be positive"));
                }
            }
            LayerKind::Tucker2 => {
                if self.rank_in == 0 || self.rank_in > self.in_channels {
                    return Err(Error::invalid(format!(
                        "rank R1={} outside 1..={}",
                        self.rank_in, self.in_channels
                    )));
                }
                if self.rank_out == 0 || self.rank_out > self.out_channels {
                    return Err(Error::invalid(format!(
                        "rank R2={} outside 1..={}",
                        self.rank_out, self.out_channels
                    )));
                }
            }
            LayerKind::Tdw => {
                if self.width_multiplier == 0 {
                    return Err(Error::invalid("width multiplier must be positive"));
                }
                let cap = (self.in_channels * self.width_multiplier).max(self.out_channels);
                if self.bottleneck_rank == 0 || self.bottleneck_rank > cap {
                    return Err(Error::invalid(format!(
                        "bottleneck rank R={} outside 1..={cap}",
                        self.bottleneck_rank
                    )));
                }
            }
            LayerKind::Cdp => {
                if self.alpha > self.in_channels {
                    return Err(Error::invalid(format!(
                        "offset alpha={} exceeds input channels {}",
                        self.alpha, self.in_channels
                    )));
                }
            }
        }
        Ok(())
    }

    /// Output spatial extent: `(in + 2p - K) / s + 1` per axis.
    pub fn out_dims(&self, in_w: usize, in_h: usize) -> Result<(usize, usize)> {
        let out = |n: usize| -> Result<usize> {
            let padded = n + 2 * self.padding;
            if padded < self.kernel {
                return Err(Error::invalid(format!(
                    "input extent {n} with padding {} is smaller than kernel {}",
                    self.padding, self.kernel
                )));
            }
            Ok((padded - self.kernel) / self.stride + 1)
        };
        Ok((out(in_w)?, out(in_h)?))
    }

    /// Channel count of the CDP concatenated intermediate map. The standard
    /// branch vanishes entirely at alpha = 0 (no redundant zero maps).
    pub fn cdp_concat_channels(&self) -> usize {
        debug_assert_eq!(self.kind, LayerKind::Cdp);
        let conv = if self.alpha > 0 { self.out_channels } else { 0 };
        conv + (self.in_channels - self.alpha)
    }

    /// Number of weight elements this spec allocates.
    pub fn weight_count(&self) -> u64 {
        let k2 = (self.kernel * self.kernel) as u64;
        let c = self.in_channels as u64;
        let n = self.out_channels as u64;
        match self.kind {
            LayerKind::Standard => k2 * c * n,
            LayerKind::DepthSep => {
                let ct = c * self.width_multiplier as u64;
                k2 * ct + ct * n
            }
            LayerKind::Tucker2 => {
                let (r1, r2) = (self.rank_in as u64, self.rank_out as u64);
                c * r1 + k2 * r1 * r2 + r2 * n
            }
            LayerKind::Tdw => {
                let ct = c * self.width_multiplier as u64;
                let r = self.bottleneck_rank as u64;
                k2 * ct + ct * r + r * n
            }
            LayerKind::Cdp => {
                let a = self.alpha as u64;
                k2 * a * n + k2 * (c - a) + self.cdp_concat_channels() as u64 * n
            }
        }
    }
}

/// Role of a named weight tensor inside a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum WeightRole {
    /// Full K×K×C×N kernel of a standard layer.
    Kernel,
    /// Standard-convolution branch kernel of a CDP layer (K×K×alpha×N).
    Conv,
    /// Per-channel spatial filters (K×K×(C·t) or K×K×(C−alpha)).
    Depthwise,
    /// Channel-mixing 1×1 stage (rows×N).
    Pointwise,
    /// Tucker-2 input projection (C×R1).
    ProjIn,
    /// Tucker-2 core kernel (K×K×R1×R2).
    Core,
    /// Tucker-2 output projection (R2×N).
    ProjOut,
    /// TDW bottleneck entry (C·t×R).
    BottleneckIn,
    /// TDW bottleneck exit (R×N).
    BottleneckOut,
}

impl WeightRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            WeightRole::Kernel => "kernel",
            WeightRole::Conv => "conv",
            WeightRole::Depthwise => "depthwise",
            WeightRole::Pointwise => "pointwise",
            WeightRole::ProjIn => "proj_in",
            WeightRole::Core => "core",
            WeightRole::ProjOut => "proj_out",
            WeightRole::BottleneckIn => "bottleneck_in",
            WeightRole::BottleneckOut => "bottleneck_out",
        }
    }

    pub fn parse(s: &str) -> Option<WeightRole> {
        Some(match s {
            "kernel" => WeightRole::Kernel,
            "conv" => WeightRole::Conv,
            "depthwise" => WeightRole::Depthwise,
            "pointwise" => WeightRole::Pointwise,
            "proj_in" => WeightRole::ProjIn,
            "core" => WeightRole::Core,
            "proj_out" => WeightRole::ProjOut,
            "bottleneck_in" => WeightRole::BottleneckIn,
            "bottleneck_out" => WeightRole::BottleneckOut,
            _ => return None,
        })
    }
}

impl fmt::Display for WeightRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_str())
    }
}

/// The weight tensors of one layer, keyed by role and validated against the
/// owning spec's shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    tensors: BTreeMap<WeightRole, Tensor>,
}

impl LayerWeights {
    /// Exact tensor shapes a spec requires, in role order.
    pub fn expected_shapes(spec: &LayerSpec) -> Vec<(WeightRole, Vec<usize>)> {
        let k = spec.kernel;
        let c = spec.in_channels;
        let n = spec.out_channels;
        match spec.kind {
            LayerKind::Standard => vec![(WeightRole::Kernel, vec![k, k, c, n])],
            LayerKind::DepthSep => {
                let ct = c * spec.width_multiplier;
                vec![
                    (WeightRole::Depthwise, vec![k, k, ct]),
                    (WeightRole::Pointwise, vec![ct, n]),
                ]
            }
            LayerKind::Tucker2 => vec![
                (WeightRole::ProjIn, vec![c, spec.rank_in]),
                (WeightRole::Core, vec![k, k, spec.rank_in, spec.rank_out]),
                (WeightRole::ProjOut, vec![spec.rank_out, n]),
            ],
            LayerKind::Tdw => {
                let ct = c * spec.width_multiplier;
                let r = spec.bottleneck_rank;
                vec![
                    (WeightRole::Depthwise, vec![k, k, ct]),
                    (WeightRole::BottleneckIn, vec![ct, r]),
                    (WeightRole::BottleneckOut, vec![r, n]),
                ]
            }
            LayerKind::Cdp => {
                let mut roles = Vec::new();
                if spec.alpha > 0 {
                    roles.push((WeightRole::Conv, vec![k, k, spec.alpha, n]));
                }
                if spec.alpha < c {
                    roles.push((WeightRole::Depthwise, vec![k, k, c - spec.alpha]));
                }
                roles.push((WeightRole::Pointwise, vec![spec.cdp_concat_channels(), n]));
                roles
            }
        }
    }

    /// Validates that the provided tensors carry exactly the roles and dims
    /// the spec requires.
    pub fn new(spec: &LayerSpec, tensors: BTreeMap<WeightRole, Tensor>) -> Result<Self> {
        let expected = Self::expected_shapes(spec);
        if tensors.len() != expected.len() {
            return Err(Error::shape(format!(
                "{} weights provided, {} expected for a {} layer",
                tensors.len(),
                expected.len(),
                spec.kind
            )));
        }
        for (role, dims) in &expected {
            match tensors.get(role) {
                Some(t) if t.dims() == dims.as_slice() => {}
                Some(t) => {
                    return Err(Error::shape(format!(
                        "{role} has dims {:?}, expected {dims:?}",
                        t.dims()
                    )))
                }
                None => return Err(Error::shape(format!("missing weight role {role}"))),
            }
        }
        Ok(LayerWeights { tensors })
    }

    pub fn from_pairs(spec: &LayerSpec, pairs: Vec<(WeightRole, Tensor)>) -> Result<Self> {
        Self::new(spec, pairs.into_iter().collect())
    }

    pub fn zeros(spec: &LayerSpec) -> Result<Self> {
        let tensors = Self::expected_shapes(spec)
            .into_iter()
            .map(|(role, dims)| Ok((role, Tensor::zeros(dims)?)))
            .collect::<Result<_>>()?;
        Ok(LayerWeights { tensors })
    }

    /// Fresh weights with normal entries scaled by 1/sqrt(fan-in).
    pub fn random(spec: &LayerSpec, rng: &mut impl Rng) -> Result<Self> {
        let tensors = Self::expected_shapes(spec)
            .into_iter()
            .map(|(role, dims)| {
                let fan_in: usize = dims[..dims.len() - 1].iter().product();
                let scale = 1.0 / (fan_in as f32).sqrt();
                let mut t = Tensor::random(dims, rng)?;
                for v in t.data_mut() {
                    *v *= scale;
                }
                Ok((role, t))
            })
            .collect::<Result<_>>()?;
        Ok(LayerWeights { tensors })
    }

    pub fn get(&self, role: WeightRole) -> Option<&Tensor> {
        self.tensors.get(&role)
    }

    fn require(&self, role: WeightRole) -> Result<&Tensor> {
        self.tensors
            .get(&role)
            .ok_or_else(|| Error::shape(format!("missing weight role {role}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&WeightRole, &Tensor)> {
        self.tensors.iter()
    }

    pub fn element_count(&self) -> u64 {
        self.tensors.values().map(|t| t.len() as u64).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.values().all(|t| t.is_finite())
    }
}

/// A feature map: height × width × channels, row-major with channels fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Tensor,
}

impl FeatureMap {
    pub fn new(data: Tensor) -> Result<Self> {
        if data.rank() != 3 {
            return Err(Error::shape(format!(
                "feature maps are 3-way (H, W, C), got {} modes",
                data.rank()
            )));
        }
        Ok(FeatureMap { data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Result<Self> {
        Self::new(Tensor::zeros(vec![height, width, channels])?)
    }

    pub fn random(
        height: usize,
        width: usize,
        channels: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Self::new(Tensor::random(vec![height, width, channels], rng)?)
    }

    pub fn height(&self) -> usize {
        self.data.dims()[0]
    }

    pub fn width(&self) -> usize {
        self.data.dims()[1]
    }

    pub fn channels(&self) -> usize {
        self.data.dims()[2]
    }

    pub fn get(&self, h: usize, w: usize, c: usize) -> f32 {
        self.data.get(&[h, w, c])
    }

    pub fn set(&mut self, h: usize, w: usize, c: usize, v: f32) {
        self.data.set(&[h, w, c], v);
    }

    /// Zero-padded read: channels `c`, spatial coordinates possibly outside
    /// the map return 0.
    pub fn get_padded(&self, h: isize, w: isize, c: usize) -> f32 {
        if h < 0 || w < 0 || h as usize >= self.height() || w as usize >= self.width() {
            0.0
        } else {
            self.get(h as usize, w as usize, c)
        }
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn into_tensor(self) -> Tensor {
        self.data
    }

    pub fn relative_error(&self, other: &FeatureMap) -> f64 {
        self.data.relative_error(&other.data)
    }
}

fn check_input_channels(x: &FeatureMap, spec: &LayerSpec) -> Result<()> {
    if x.channels() != spec.in_channels {
        return Err(Error::shape(format!(
            "input has {} channels, spec declares {}",
            x.channels(),
            spec.in_channels
        )));
    }
    Ok(())
}

/// Spatial convolution of selected input channels against a K×K×M×N kernel,
/// reading input channels starting at `channel_base`. Accumulates in `f64`.
fn conv_block(
    x: &FeatureMap,
    kernel: &Tensor,
    channel_base: usize,
    stride: usize,
    padding: usize,
    activation: Activation,
) -> Result<FeatureMap> {
    let k = kernel.dims()[0];
    let m = kernel.dims()[2];
    let n = kernel.dims()[3];
    let (out_w, out_h) = {
        let padded_w = x.width() + 2 * padding;
        let padded_h = x.height() + 2 * padding;
        if padded_w < k || padded_h < k {
            return Err(Error::invalid("output extent would be non-positive"));
        }
        ((padded_w - k) / stride + 1, (padded_h - k) / stride + 1)
    };
    let mut out = FeatureMap::zeros(out_h, out_w, n)?;
    for oh in 0..out_h {
        for ow in 0..out_w {
            for on in 0..n {
                let mut acc = 0.0f64;
                for kh in 0..k {
                    let ih = (oh * stride + kh) as isize - padding as isize;
                    for kw in 0..k {
                        let iw = (ow * stride + kw) as isize - padding as isize;
                        for i in 0..m {
                            let xv = x.get_padded(ih, iw, channel_base + i) as f64;
                            acc += xv * kernel.get(&[kh, kw, i, on]) as f64;
                        }
                    }
                }
                out.set(oh, ow, on, activation.apply(acc as f32));
            }
        }
    }
    Ok(out)
}

/// Depthwise stage: input channel `channel_base + j/t` filtered by the j-th
/// K×K slice, producing one map per filter. With a width multiplier t, each
/// input channel yields t contiguous maps.
fn depthwise_block(
    x: &FeatureMap,
    filters: &Tensor,
    channel_base: usize,
    t: usize,
    stride: usize,
    padding: usize,
    activation: Activation,
) -> Result<FeatureMap> {
    let k = filters.dims()[0];
    let maps = filters.dims()[2];
    let (out_w, out_h) = {
        let padded_w = x.width() + 2 * padding;
        let padded_h = x.height() + 2 * padding;
        if padded_w < k || padded_h < k {
            return Err(Error::invalid("output extent would be non-positive"));
        }
        ((padded_w - k) / stride + 1, (padded_h - k) / stride + 1)
    };
    let mut out = FeatureMap::zeros(out_h, out_w, maps)?;
    for m in 0..maps {
        let src = channel_base + m / t;
        for oh in 0..out_h {
            for ow in 0..out_w {
                let mut acc = 0.0f64;
                for kh in 0..k {
                    let ih = (oh * stride + kh) as isize - padding as isize;
                    for kw in 0..k {
                        let iw = (ow * stride + kw) as isize - padding as isize;
                        acc += x.get_padded(ih, iw, src) as f64 * filters.get(&[kh, kw, m]) as f64;
                    }
                }
                out.set(oh, ow, m, activation.apply(acc as f32));
            }
        }
    }
    Ok(out)
}

/// 1×1 channel mixing: `out[h,w,n] = Σ_m in[h,w,m] · w[m,n]`.
fn pointwise_block(x: &FeatureMap, weights: &Tensor, activation: Activation) -> Result<FeatureMap> {
    let m = weights.dims()[0];
    let n = weights.dims()[1];
    if x.channels() != m {
        return Err(Error::shape(format!(
            "pointwise expects {m} input maps, got {}",
            x.channels()
        )));
    }
    let mut out = FeatureMap::zeros(x.height(), x.width(), n)?;
    for h in 0..x.height() {
        for w in 0..x.width() {
            for on in 0..n {
                let mut acc = 0.0f64;
                for im in 0..m {
                    acc += x.get(h, w, im) as f64 * weights.get(&[im, on]) as f64;
                }
                out.set(h, w, on, activation.apply(acc as f32));
            }
        }
    }
    Ok(out)
}

/// Standard convolution forward pass.
pub fn conv2d_forward(x: &FeatureMap, spec: &LayerSpec, w: &LayerWeights) -> Result<FeatureMap> {
    if spec.kind != LayerKind::Standard {
        return Err(Error::invalid(format!(
            "expected standard spec, got {}",
            spec.kind
        )));
    }
    check_input_channels(x, spec)?;
    let kernel = w.require(WeightRole::Kernel)?;
    conv_block(x, kernel, 0, spec.stride, spec.padding, spec.activation)
}

/// Depthwise-separable forward pass: depthwise stage (with optional
/// intermediate activation) followed by pointwise aggregation.
pub fn depthsep_forward(x: &FeatureMap, spec: &LayerSpec, w: &LayerWeights) -> Result<FeatureMap> {
    if spec.kind != LayerKind::DepthSep {
        return Err(Error::invalid(format!(
            "expected depthsep spec, got {}",
            spec.kind
        )));
    }
    check_input_channels(x, spec)?;
    let inter = depthwise_block(
        x,
        w.require(WeightRole::Depthwise)?,
        0,
        spec.width_multiplier,
        spec.stride,
        spec.padding,
        spec.activation,
    )?;
    pointwise_block(&inter, w.require(WeightRole::Pointwise)?, Activation::None)
}

/// CDP forward pass: standard convolution over channels `[0, alpha)`,
/// depthwise over `[alpha, C)`, per-branch activation, concatenation
/// (convolution branch first), then pointwise projection to N channels.
pub fn cdp_forward(x: &FeatureMap, spec: &LayerSpec, w: &LayerWeights) -> Result<FeatureMap> {
    if spec.kind != LayerKind::Cdp {
        return Err(Error::invalid(format!(
            "expected cdp spec, got {}",
            spec.kind
        )));
    }
    check_input_channels(x, spec)?;
    let c = spec.in_channels;
    let alpha = spec.alpha;
    if alpha > c {
        return Err(Error::invalid(format!(
            "alpha {alpha} exceeds input channels {c}"
        )));
    }

    let conv_out = if alpha > 0 {
        Some(conv_block(
            x,
            w.require(WeightRole::Conv)?,
            0,
            spec.stride,
            spec.padding,
            spec.activation,
        )?)
    } else {
        None
    };
    let dw_out = if alpha < c {
        Some(depthwise_block(
            x,
            w.require(WeightRole::Depthwise)?,
            alpha,
            1,
            spec.stride,
            spec.padding,
            spec.activation,
        )?)
    } else {
        None
    };

    let concat = match (conv_out, dw_out) {
        (Some(a), Some(b)) => {
            if a.height() != b.height() || a.width() != b.width() {
                return Err(Error::invalid(
                    "cdp branches disagree on output extent".to_string(),
                ));
            }
            let mut out = FeatureMap::zeros(a.height(), a.width(), a.channels() + b.channels())?;
            for h in 0..a.height() {
                for wx in 0..a.width() {
                    for ch in 0..a.channels() {
                        out.set(h, wx, ch, a.get(h, wx, ch));
                    }
                    for ch in 0..b.channels() {
                        out.set(h, wx, a.channels() + ch, b.get(h, wx, ch));
                    }
                }
            }
            out
        }
        (Some(a), None) => a,
        (None, Some(b)) => b,
        (None, None) => unreachable!("alpha <= c guarantees at least one branch"),
    };
    pointwise_block(&concat, w.require(WeightRole::Pointwise)?, Activation::None)
}

/// Tucker-2 forward pass: pointwise C→R1 projection, K×K core convolution
/// carrying the layer's stride and padding, then pointwise R2→N projection.
/// No non-linearities between the stages.
pub fn tucker2_forward(x: &FeatureMap, spec: &LayerSpec, w: &LayerWeights) -> Result<FeatureMap> {
    if spec.kind != LayerKind::Tucker2 {
        return Err(Error::invalid(format!(
            "expected tucker2 spec, got {}",
            spec.kind
        )));
    }
    check_input_channels(x, spec)?;
    let projected = pointwise_block(x, w.require(WeightRole::ProjIn)?, Activation::None)?;
    let core_out = conv_block(
        &projected,
        w.require(WeightRole::Core)?,
        0,
        spec.stride,
        spec.padding,
        Activation::None,
    )?;
    pointwise_block(&core_out, w.require(WeightRole::ProjOut)?, Activation::None)
}

/// TDW forward pass: depthwise stage, then two pointwise maps through a
/// rank-R bottleneck with no non-linearity between them.
pub fn tdw_forward(x: &FeatureMap, spec: &LayerSpec, w: &LayerWeights) -> Result<FeatureMap> {
    if spec.kind != LayerKind::Tdw {
        return Err(Error::invalid(format!(
            "expected tdw spec, got {}",
            spec.kind
        )));
    }
    check_input_channels(x, spec)?;
    let inter = depthwise_block(
        x,
        w.require(WeightRole::Depthwise)?,
        0,
        spec.width_multiplier,
        spec.stride,
        spec.padding,
        spec.activation,
    )?;
    let squeezed = pointwise_block(
        &inter,
        w.require(WeightRole::BottleneckIn)?,
        Activation::None,
    )?;
    pointwise_block(
        &squeezed,
        w.require(WeightRole::BottleneckOut)?,
        Activation::None,
    )
}

/// Forward pass of a single layer, dispatched on its kind.
pub fn layer_forward(x: &FeatureMap, spec: &LayerSpec, w: &LayerWeights) -> Result<FeatureMap> {
    match spec.kind {
        LayerKind::Standard => conv2d_forward(x, spec, w),
        LayerKind::DepthSep => depthsep_forward(x, spec, w),
        LayerKind::Tucker2 => tucker2_forward(x, spec, w),
        LayerKind::Tdw => tdw_forward(x, spec, w),
        LayerKind::Cdp => cdp_forward(x, spec, w),
    }
}

/// 2×2 stride-2 max pooling (used by pooling markers in an architecture).
pub fn max_pool_2x2(x: &FeatureMap) -> Result<FeatureMap> {
    let (oh, ow) = (x.height() / 2, x.width() / 2);
    if oh == 0 || ow == 0 {
        return Err(Error::invalid("pooling a map smaller than 2x2"));
    }
    let mut out = FeatureMap::zeros(oh, ow, x.channels())?;
    for h in 0..oh {
        for w in 0..ow {
            for c in 0..x.channels() {
                let m = x
                    .get(2 * h, 2 * w, c)
                    .max(x.get(2 * h, 2 * w + 1, c))
                    .max(x.get(2 * h + 1, 2 * w, c))
                    .max(x.get(2 * h + 1, 2 * w + 1, c));
                out.set(h, w, c, m);
            }
        }
    }
    Ok(out)
}

/// Per-channel normalization with caller-supplied statistics. Kept separate
/// from the layer forwards (fused in cost terms) and identity when mean is 0
/// and variance is 1.
pub fn batch_normalize(
    x: &FeatureMap,
    mean: &[f32],
    variance: &[f32],
    eps: f32,
) -> Result<FeatureMap> {
    if mean.len() != x.channels() || variance.len() != x.channels() {
        return Err(Error::shape(format!(
            "normalization statistics must match {} channels",
            x.channels()
        )));
    }
    let mut out = x.clone();
    for h in 0..x.height() {
        for w in 0..x.width() {
            for c in 0..x.channels() {
                let v = (x.get(h, w, c) - mean[c]) / (variance[c] + eps).sqrt();
                out.set(h, w, c, v);
            }
        }
    }
    Ok(out)
}

/// Sequential forward pass through an architecture, applying pooling markers
/// after the layers they follow. Per-layer failures carry the 1-based index.
pub fn model_forward(
    x: &FeatureMap,
    arch: &ArchSpec,
    weights: &[LayerWeights],
) -> Result<FeatureMap> {
    if weights.len() != arch.layers.len() {
        return Err(Error::invalid(format!(
            "{} weight sets for {} layers",
            weights.len(),
            arch.layers.len()
        )));
    }
    let mut cur = x.clone();
    for (i, (spec, w)) in arch.layers.iter().zip(weights).enumerate() {
        let index = i + 1;
        cur = layer_forward(&cur, spec, w).map_err(|e| e.at_layer(index))?;
        if arch.pools.contains(&index) {
            cur = max_pool_2x2(&cur).map_err(|e| e.at_layer(index))?;
        }
    }
    Ok(cur)
}
