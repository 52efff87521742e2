//! Report data model. The JSON rendering serializes the struct as-is; the
//! text rendering walks the same fields, so both views always agree.

use serde::Serialize;

#[derive(Debug, Serialize, Default)]
pub struct Report {
    pub command: String,
    pub arch: Option<String>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub totals: Option<Totals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<Totals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flop_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub rewrites: Vec<RewriteRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<CheckRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_estimate: Option<RankRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct LayerRow {
    pub layer: usize,
    pub kind: String,
    pub params: u64,
    pub flops: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_params: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_flops: Option<i64>,
}

#[derive(Debug, Serialize, Clone, Copy)]
pub struct Totals {
    pub params: u64,
    pub flops: u64,
}

#[derive(Debug, Serialize)]
pub struct RewriteRow {
    pub layer: usize,
    pub from: String,
    pub to: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ranks: Option<(usize, usize)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bottleneck_rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reconstruction_error: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct CheckRow {
    pub layer: usize,
    pub check: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_relative_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct RankRow {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub noise_variance: f64,
    pub retained_singular_values: Vec<f64>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let push = |out: &mut String, line: String| {
            out.push_str(&line);
            out.push('\n');
        };
        push(&mut out, format!("command: {}", self.command));
        if let Some(arch) = &self.arch {
            push(&mut out, format!("arch:    {arch}"));
        }
        if let Some(seed) = self.seed {
            push(&mut out, format!("seed:    {seed}"));
        }

        if !self.layers.is_empty() {
            let deltas = self.layers.iter().any(|r| r.delta_params.is_some());
            push(&mut out, String::new());
            if deltas {
                push(
                    &mut out,
                    format!(
                        "{:>5}  {:<9} {:>12} {:>14} {:>12} {:>14}",
                        "layer", "kind", "params", "flops", "d-params", "d-flops"
                    ),
                );
            } else {
                push(
                    &mut out,
                    format!(
                        "{:>5}  {:<9} {:>12} {:>14}",
                        "layer", "kind", "params", "flops"
                    ),
                );
            }
            for row in &self.layers {
                if deltas {
                    push(
                        &mut out,
                        format!(
                            "{:>5}  {:<9} {:>12} {:>14} {:>12} {:>14}",
                            row.layer,
                            row.kind,
                            row.params,
                            row.flops,
                            row.delta_params.unwrap_or(0),
                            row.delta_flops.unwrap_or(0)
                        ),
                    );
                } else {
                    push(
                        &mut out,
                        format!(
                            "{:>5}  {:<9} {:>12} {:>14}",
                            row.layer, row.kind, row.params, row.flops
                        ),
                    );
                }
            }
        }

        if let Some(t) = self.totals {
            push(&mut out, String::new());
            push(&mut out, format!("total params: {}", t.params));
            push(&mut out, format!("total flops:  {}", t.flops));
        }
        if let Some(b) = self.baseline {
            push(&mut out, format!("baseline params: {}", b.params));
            push(&mut out, format!("baseline flops:  {}", b.flops));
        }
        if let Some(r) = self.compression_ratio {
            push(&mut out, format!("compression ratio: {r:.2}x"));
        }
        if let Some(r) = self.flop_ratio {
            push(&mut out, format!("flop ratio:        {r:.2}x"));
        }

        if !self.rewrites.is_empty() {
            push(&mut out, String::new());
            for r in &self.rewrites {
                let mut line = format!("layer {:>2}: {} -> {}", r.layer, r.from, r.to);
                if let Some((r1, r2)) = r.ranks {
                    line.push_str(&format!(", ranks ({r1}, {r2})"));
                }
                if let Some(b) = r.bottleneck_rank {
                    line.push_str(&format!(", bottleneck {b}"));
                }
                if let Some(e) = r.reconstruction_error {
                    line.push_str(&format!(", reconstruction error {e:.3e}"));
                }
                push(&mut out, line);
            }
        }

        if !self.checks.is_empty() {
            push(&mut out, String::new());
            for c in &self.checks {
                let status = if c.passed { "pass" } else { "FAIL" };
                let mut line = format!("{status}  layer {:>2}  {}", c.layer, c.check);
                if let Some(e) = c.max_relative_error {
                    line.push_str(&format!("  (max rel err {e:.3e})"));
                }
                if let Some(d) = &c.detail {
                    line.push_str(&format!("  [{d}]"));
                }
                push(&mut out, line);
            }
        }

        if let Some(r) = &self.rank_estimate {
            push(&mut out, format!("matrix:          {}x{}", r.rows, r.cols));
            push(&mut out, format!("estimated rank:  {}", r.rank));
            push(
                &mut out,
                format!("noise variance:  {:.6e}", r.noise_variance),
            );
            let retained: Vec<String> = r
                .retained_singular_values
                .iter()
                .map(|v| format!("{v:.4}"))
                .collect();
            push(
                &mut out,
                format!("retained values: [{}]", retained.join(", ")),
            );
        }

        for note in &self.notes {
            push(&mut out, format!("note: {note}"));
        }
        out
    }
}
