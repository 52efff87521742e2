//! Command implementations. Each returns a [`Report`]; callers render it as
//! text or JSON and translate failures into exit codes.

use std::path::Path;

use convfactor::arch::l2net_tucker_reference_params;
use convfactor::cost::{model_cost, CostPolicy};
use convfactor::factorize::evbmf_rank;
use convfactor::layers::{LayerKind, LayerSpec};
use convfactor::tensor::Matrix;
use convfactor::{ArchSpec, WeightStore};

use crate::archfile::{load_arch, parse_variant};
use crate::plan::parse_plan;
use crate::report::{LayerRow, RankRow, Report, RewriteRow, Totals};
use crate::{verify, CliError};

#[derive(Debug, Clone, Copy)]
pub struct CommonOpts {
    pub seed: u64,
    pub include_activations: bool,
}

impl CommonOpts {
    fn policy(&self) -> CostPolicy {
        CostPolicy {
            include_activation_flops: self.include_activations,
        }
    }
}

fn layer_rows(arch: &ArchSpec, policy: CostPolicy) -> Result<Vec<LayerRow>, CliError> {
    let report = model_cost(arch, None, policy).map_err(|e| CliError::validation(e.to_string()))?;
    Ok(report
        .per_layer
        .iter()
        .zip(&arch.layers)
        .map(|(&(layer, cost), spec)| LayerRow {
            layer,
            kind: spec.kind.to_string(),
            params: cost.params,
            flops: cost.flops_with(policy),
            delta_params: None,
            delta_flops: None,
        })
        .collect())
}

fn totals_of(arch: &ArchSpec, policy: CostPolicy) -> Result<Totals, CliError> {
    let report = model_cost(arch, None, policy).map_err(|e| CliError::validation(e.to_string()))?;
    Ok(Totals {
        params: report.total_params,
        flops: report.total_flops,
    })
}

/// `analyze`: per-layer parameters and FLOPs of an architecture, optionally
/// for a uniformly converted variant.
pub fn cmd_analyze(
    arch_arg: &str,
    variant: Option<&str>,
    t: usize,
    opts: CommonOpts,
) -> Result<Report, CliError> {
    let arch = load_arch(arch_arg)?;
    let policy = opts.policy();
    let mut report = Report::new("analyze");
    report.arch = Some(arch.name.clone());
    report.seed = Some(opts.seed);

    match variant.map(parse_variant).transpose()? {
        None => {
            report.layers = layer_rows(&arch, policy)?;
            report.totals = Some(totals_of(&arch, policy)?);
        }
        Some(LayerKind::DepthSep) => {
            let mut converted = arch.clone();
            converted.layers = arch
                .layers
                .iter()
                .map(|s| {
                    LayerSpec::depthsep(
                        s.kernel,
                        s.in_channels,
                        s.out_channels,
                        s.stride,
                        s.padding,
                        t,
                    )
                    .map_err(|e| CliError::validation(e.to_string()))
                })
                .collect::<Result<_, _>>()?;
            report.layers = layer_rows(&converted, policy)?;
            report.totals = Some(totals_of(&converted, policy)?);
            report.notes.push(format!(
                "all layers converted to depthsep with width multiplier {t}"
            ));
        }
        Some(LayerKind::Tucker2) => {
            if arch.name != "l2net" {
                return Err(CliError::validation(
                    "the tucker variant table is only recorded for l2net \
                     (rank selection needs trained weights; see `decompose`)",
                ));
            }
            let params = l2net_tucker_reference_params();
            let mflops = convfactor::arch::l2net_tucker_reference_mflops();
            let base = layer_rows(&arch, policy)?;
            report.layers = base
                .into_iter()
                .map(
                    |row| match params.iter().position(|&(l, _)| l == row.layer) {
                        Some(i) => LayerRow {
                            layer: row.layer,
                            kind: "tucker2".into(),
                            params: params[i].1,
                            flops: (mflops[i].1 * 1e6) as u64,
                            delta_params: None,
                            delta_flops: None,
                        },
                        None => row,
                    },
                )
                .collect();
            let total_params: u64 = report.layers.iter().map(|r| r.params).sum();
            let total_flops: u64 = report.layers.iter().map(|r| r.flops).sum();
            report.totals = Some(Totals {
                params: total_params,
                flops: total_flops,
            });
            report.notes.push(
                "tucker sizes are reference values from rank selection on the trained network; \
                 layer 1 stays standard"
                    .into(),
            );
        }
        Some(other) => {
            return Err(CliError::validation(format!(
                "variant {other} is not a table"
            )));
        }
    }
    Ok(report)
}

/// `plan`: compression totals and per-layer deltas of a rewrite plan.
pub fn cmd_plan(arch_arg: &str, plan_str: &str, opts: CommonOpts) -> Result<Report, CliError> {
    let arch = load_arch(arch_arg)?;
    let plan = parse_plan(plan_str)?;
    let policy = opts.policy();

    let outcome =
        convfactor::apply_plan(&arch, &plan, None, opts.seed).map_err(CliError::from_plan_error)?;
    let compressed = model_cost(&outcome.arch, Some(&arch), policy)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let baseline =
        model_cost(&arch, None, policy).map_err(|e| CliError::validation(e.to_string()))?;

    let mut report = Report::new("plan");
    report.arch = Some(arch.name.clone());
    report.seed = Some(opts.seed);
    report.layers = compressed
        .per_layer
        .iter()
        .zip(&outcome.arch.layers)
        .zip(&baseline.per_layer)
        .map(|((&(layer, cost), spec), &(_, base))| LayerRow {
            layer,
            kind: spec.kind.to_string(),
            params: cost.params,
            flops: cost.flops_with(policy),
            delta_params: Some(cost.params as i64 - base.params as i64),
            delta_flops: Some(cost.flops_with(policy) as i64 - base.flops_with(policy) as i64),
        })
        .collect();
    report.totals = Some(Totals {
        params: compressed.total_params,
        flops: compressed.total_flops,
    });
    report.baseline = Some(Totals {
        params: baseline.total_params,
        flops: baseline.total_flops,
    });
    report.compression_ratio = compressed.compression_ratio;
    report.flop_ratio = compressed.speedup;
    report.rewrites = outcome
        .rewrites
        .iter()
        .map(|r| RewriteRow {
            layer: r.layer,
            from: r.from.to_string(),
            to: r.to.to_string(),
            ranks: r.tucker_ranks,
            bottleneck_rank: r.bottleneck_rank,
            reconstruction_error: r.reconstruction_error,
        })
        .collect();
    Ok(report)
}

fn read_store(path: &str) -> Result<WeightStore, CliError> {
    let bytes = std::fs::read(Path::new(path))
        .map_err(|e| CliError::weights(format!("cannot read weights {path}: {e}")))?;
    WeightStore::from_bytes(&bytes).map_err(|e| CliError::weights(format!("{path}: {e}")))
}

/// `decompose`: apply a plan to stored weights and write the factorized
/// container, optionally alongside the rewritten architecture file.
pub fn cmd_decompose(
    arch_arg: &str,
    weights_path: &str,
    plan_str: &str,
    out_path: &str,
    arch_out: Option<&str>,
    opts: CommonOpts,
) -> Result<Report, CliError> {
    let arch = load_arch(arch_arg)?;
    let plan = parse_plan(plan_str)?;
    let store = read_store(weights_path)?;

    let outcome = convfactor::apply_plan(&arch, &plan, Some(&store), opts.seed)
        .map_err(CliError::from_plan_error)?;
    let new_store = outcome.weights.expect("weights were supplied");
    std::fs::write(Path::new(out_path), new_store.to_bytes())
        .map_err(|e| CliError::weights(format!("cannot write {out_path}: {e}")))?;
    if let Some(path) = arch_out {
        std::fs::write(
            Path::new(path),
            crate::archfile::arch_to_json(&outcome.arch),
        )
        .map_err(|e| CliError::validation(format!("cannot write {path}: {e}")))?;
    }

    let policy = opts.policy();
    let compressed = model_cost(&outcome.arch, Some(&arch), policy)
        .map_err(|e| CliError::validation(e.to_string()))?;

    let mut report = Report::new("decompose");
    report.arch = Some(arch.name.clone());
    report.seed = Some(opts.seed);
    report.totals = Some(Totals {
        params: compressed.total_params,
        flops: compressed.total_flops,
    });
    report.compression_ratio = compressed.compression_ratio;
    report.flop_ratio = compressed.speedup;
    report.rewrites = outcome
        .rewrites
        .iter()
        .map(|r| RewriteRow {
            layer: r.layer,
            from: r.from.to_string(),
            to: r.to.to_string(),
            ranks: r.tucker_ranks,
            bottleneck_rank: r.bottleneck_rank,
            reconstruction_error: r.reconstruction_error,
        })
        .collect();
    report
        .notes
        .push(format!("wrote {} tensors to {out_path}", new_store.len()));
    Ok(report)
}

/// `verify`: equivalence battery on stored weights. Returns the report and
/// whether every check passed.
pub fn cmd_verify(
    arch_arg: &str,
    weights_path: &str,
    tolerance: f64,
    opts: CommonOpts,
) -> Result<(Report, bool), CliError> {
    let arch = load_arch(arch_arg)?;
    let store = read_store(weights_path)?;
    let weights = store
        .collect_layer_weights(&arch)
        .map_err(|e| CliError::weights(e.to_string()))?;

    let checks = verify::run_battery(&arch, &weights, opts.seed, tolerance);
    let all_passed = checks.iter().all(|c| c.passed);

    let mut report = Report::new("verify");
    report.arch = Some(arch.name.clone());
    report.seed = Some(opts.seed);
    report.checks = checks;
    report.notes.push(format!("tolerance {tolerance:e}"));
    Ok((report, all_passed))
}

/// `rank`: analytic rank estimate of a single stored 2-D tensor.
pub fn cmd_rank(matrix_path: &str, opts: CommonOpts) -> Result<Report, CliError> {
    let store = read_store(matrix_path)?;
    if store.len() != 1 {
        return Err(CliError::validation(format!(
            "{matrix_path} holds {} tensors, expected exactly one",
            store.len()
        )));
    }
    let (name, tensor) = store.iter().next().expect("one tensor");
    if tensor.rank() != 2 {
        return Err(CliError::validation(format!(
            "tensor {name} has {} modes, expected a matrix",
            tensor.rank()
        )));
    }
    let matrix = Matrix::from_tensor(tensor).map_err(|e| CliError::validation(e.to_string()))?;
    let est = evbmf_rank(&matrix).map_err(|e| CliError::validation(e.to_string()))?;

    let mut report = Report::new("rank");
    report.seed = Some(opts.seed);
    report.rank_estimate = Some(RankRow {
        rows: matrix.rows(),
        cols: matrix.cols(),
        rank: est.rank,
        noise_variance: est.noise_variance,
        retained_singular_values: est.retained_singular_values,
    });
    Ok(report)
}
