//! Analytic cost modeling and numeric factorization of convolutional layers.
//!
//! The crate provides:
//!
//! - dense tensors with matricization and mode products ([`tensor`])
//! - one-sided Jacobi SVD ([`svd`])
//! - forward-executable layer constructions: standard, depthwise-separable,
//!   Tucker-2 factorized, pointwise linear bottleneck, and the
//!   convolution-depthwise-pointwise split ([`layers`])
//! - factorization algorithms: Tucker-2 by higher-order orthogonal
//!   iteration, analytic rank estimation, kernel contraction ([`factorize`])
//! - exact parameter and FLOP counting with compression ratios ([`cost`])
//! - canonical architectures and the replacement-plan engine ([`arch`])
//! - a binary weight container with CRC validation ([`store`])

pub mod arch;
pub mod cost;
pub mod error;
pub mod factorize;
pub mod layers;
pub mod store;
pub mod svd;
pub mod tensor;

pub use arch::{apply_plan, l2net, superpoint, ArchSpec, Directive, ReplacementPlan};
pub use cost::{alpha_bound, model_cost, CostPolicy, CostReport, LayerCost};
pub use error::{Error, Result};
pub use factorize::{
    decompose_layer, evbmf_rank, hooi_tucker2, merge_depthsep, select_bottleneck_rank,
    RankEstimate, TuckerFactors,
};
pub use layers::{
    cdp_forward, conv2d_forward, depthsep_forward, model_forward, tdw_forward, tucker2_forward,
    Activation, FeatureMap, LayerKind, LayerSpec, LayerWeights, WeightRole,
};
pub use store::WeightStore;
pub use svd::Svd;
pub use tensor::{fold, mode_multiply, unfold, Matrix, Tensor};
