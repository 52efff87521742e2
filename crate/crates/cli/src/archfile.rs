//! Architecture files: JSON descriptions of a layer stack, plus the
//! built-in architectures addressable by bare name.
//!
//! ```json
//! {
//!   "name": "example",
//!   "input": [32, 32, 1],
//!   "layers": [
//!     {"kind": "standard", "k": 3, "c": 1, "n": 32, "stride": 1, "pad": 1}
//!   ],
//!   "pools": []
//! }
//! ```
//!
//! `input` is `[width, height, channels]`. Layer fields beyond the common
//! ones are per-kind: `t` (depthsep/tdw), `alpha` (cdp), `r1`/`r2`
//! (tucker2), `r` (tdw). `activation` is `"none"` or `"relu"`.

use std::path::Path;

use convfactor::layers::{Activation, LayerKind};
use convfactor::{ArchSpec, LayerSpec};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArchFile {
    name: String,
    input: [usize; 3],
    layers: Vec<LayerFile>,
    #[serde(default)]
    pools: Vec<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    kind: String,
    k: usize,
    c: usize,
    n: usize,
    #[serde(default = "one")]
    stride: usize,
    #[serde(default)]
    pad: usize,
    #[serde(default = "one")]
    t: usize,
    #[serde(default)]
    alpha: Option<usize>,
    #[serde(default)]
    r1: Option<usize>,
    #[serde(default)]
    r2: Option<usize>,
    #[serde(default)]
    r: Option<usize>,
    #[serde(default)]
    activation: Option<String>,
}

fn one() -> usize {
    1
}

fn build_layer(file: &LayerFile, index: usize) -> Result<LayerSpec, CliError> {
    let invalid = |msg: String| CliError::validation(format!("layer {index}: {msg}"));
    let need = |field: &str, v: Option<usize>| {
        v.ok_or_else(|| invalid(format!("{} layers need `{field}`", file.kind)))
    };
    let spec = match file.kind.as_str() {
        "standard" => LayerSpec::standard(file.k, file.c, file.n, file.stride, file.pad),
        "depthsep" => LayerSpec::depthsep(file.k, file.c, file.n, file.stride, file.pad, file.t),
        "tucker2" | "tucker" => LayerSpec::tucker2(
            file.k,
            file.c,
            file.n,
            file.stride,
            file.pad,
            need("r1", file.r1)?,
            need("r2", file.r2)?,
        ),
        "tdw" => LayerSpec::tdw(
            file.k,
            file.c,
            file.n,
            file.stride,
            file.pad,
            file.t,
            need("r", file.r)?,
        ),
        "cdp" => LayerSpec::cdp(
            file.k,
            file.c,
            file.n,
            file.stride,
            file.pad,
            need("alpha", file.alpha)?,
        ),
        other => return Err(invalid(format!("unknown layer kind `{other}`"))),
    };
    let mut spec = spec.map_err(|e| invalid(e.to_string()))?;
    match file.activation.as_deref() {
        None | Some("none") => {}
        Some("relu") => spec = spec.with_activation(Activation::Relu),
        Some(other) => return Err(invalid(format!("unknown activation `{other}`"))),
    }
    Ok(spec)
}

/// Loads an architecture: bare built-in names first (`l2net`,
/// `superpoint`), then a JSON file path.
pub fn load_arch(arg: &str) -> Result<ArchSpec, CliError> {
    match arg {
        "l2net" => return Ok(convfactor::l2net()),
        "superpoint" => return Ok(convfactor::superpoint()),
        _ => {}
    }
    let path = Path::new(arg);
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read architecture {arg}: {e}")))?;
    let file: ArchFile = serde_json::from_str(&text).map_err(|e| {
        CliError::validation(format!(
            "{arg}: parse error at line {}, column {}: {e}",
            e.line(),
            e.column()
        ))
    })?;
    let layers = file
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| build_layer(l, i + 1))
        .collect::<Result<Vec<_>, _>>()?;
    let arch = ArchSpec {
        name: file.name,
        input_width: file.input[0],
        input_height: file.input[1],
        input_channels: file.input[2],
        layers,
        pools: file.pools,
    };
    arch.validate()
        .map_err(|e| CliError::validation(format!("{arg}: {e}")))?;
    Ok(arch)
}

/// Serializes an architecture to the JSON file format.
pub fn arch_to_json(arch: &ArchSpec) -> String {
    use serde_json::{json, Value};
    let layers: Vec<Value> = arch
        .layers
        .iter()
        .map(|l| {
            let mut obj = serde_json::Map::new();
            obj.insert("kind".into(), json!(l.kind.to_string()));
            obj.insert("k".into(), json!(l.kernel));
            obj.insert("c".into(), json!(l.in_channels));
            obj.insert("n".into(), json!(l.out_channels));
            obj.insert("stride".into(), json!(l.stride));
            obj.insert("pad".into(), json!(l.padding));
            match l.kind {
                LayerKind::DepthSep => {
                    obj.insert("t".into(), json!(l.width_multiplier));
                }
                LayerKind::Tucker2 => {
                    obj.insert("r1".into(), json!(l.rank_in));
                    obj.insert("r2".into(), json!(l.rank_out));
                }
                LayerKind::Tdw => {
                    obj.insert("t".into(), json!(l.width_multiplier));
                    obj.insert("r".into(), json!(l.bottleneck_rank));
                }
                LayerKind::Cdp => {
                    obj.insert("alpha".into(), json!(l.alpha));
                }
                LayerKind::Standard => {}
            }
            if l.activation == Activation::Relu {
                obj.insert("activation".into(), json!("relu"));
            }
            Value::Object(obj)
        })
        .collect();
    let doc = json!({
        "name": arch.name,
        "input": [arch.input_width, arch.input_height, arch.input_channels],
        "layers": layers,
        "pools": arch.pools,
    });
    serde_json::to_string_pretty(&doc).expect("arch serializes")
}

/// Parses a `--variant` flag value.
pub fn parse_variant(s: &str) -> Result<LayerKind, CliError> {
    Ok(match s {
        "depthsep" => LayerKind::DepthSep,
        "tucker" | "tucker2" => LayerKind::Tucker2,
        other => {
            return Err(CliError::validation(format!(
                "unknown variant `{other}` (expected depthsep or tucker)"
            )))
        }
    })
}
