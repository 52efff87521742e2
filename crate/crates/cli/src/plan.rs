//! Plan-string grammar.
//!
//! A plan is a comma-separated list of directives:
//!
//! ```text
//! kind:range [key=value ...]
//! ```
//!
//! `range` is `i` or `i-j`, inclusive and 1-based. Keys per kind:
//! `depthsep` takes `t=INT` (default multiplier) and `t=INT@i,j` (scoped to
//! the listed layers); `tucker` takes `ranks=R1,R2` or `ranks=vbmf`; `tdw`
//! takes optional `t=INT` and `r=INT` or `r=vbmf`; `cdp` takes `alpha=INT`
//! (uniform) or `alpha=a1,a2,...` (one per layer in range order). Commas
//! inside value lists bind to the directive, so
//! `depthsep:2-7 t=2@3,5, cdp:8 alpha=4` parses as two directives. An empty
//! string is the empty plan.

use convfactor::arch::{
    AlphaAssignment, BottleneckRank, Directive, DirectiveParams, ReplacementPlan, TuckerRanks,
};

use crate::CliError;

fn bad(msg: impl Into<String>) -> CliError {
    CliError::validation(format!("plan: {}", msg.into()))
}

/// Splits on commas, regluing fragments that belong to a value list (any
/// fragment without a `kind:range` head continues the previous directive).
fn directive_chunks(plan: &str) -> Vec<String> {
    let mut chunks: Vec<String> = Vec::new();
    for piece in plan.split(',') {
        let starts_directive = piece
            .split_whitespace()
            .next()
            .is_some_and(|head| head.contains(':'));
        match chunks.last_mut() {
            Some(last) if !starts_directive => {
                last.push(',');
                last.push_str(piece);
            }
            _ => chunks.push(piece.to_string()),
        }
    }
    chunks
        .into_iter()
        .filter(|c| !c.trim().is_empty())
        .collect()
}

fn parse_range(s: &str) -> Result<(usize, usize), CliError> {
    let parse_one = |v: &str| {
        v.parse::<usize>()
            .map_err(|_| bad(format!("bad layer index `{v}`")))
    };
    match s.split_once('-') {
        Some((a, b)) => {
            let (start, end) = (parse_one(a)?, parse_one(b)?);
            if start == 0 || start > end {
                return Err(bad(format!("bad range `{s}`")));
            }
            Ok((start, end))
        }
        None => {
            let i = parse_one(s)?;
            if i == 0 {
                return Err(bad("layer indices are 1-based"));
            }
            Ok((i, i))
        }
    }
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("bad integer `{v}`")))
        })
        .collect()
}

fn parse_directive(chunk: &str) -> Result<Directive, CliError> {
    let mut tokens = chunk.split_whitespace();
    let head = tokens.next().ok_or_else(|| bad("empty directive"))?;
    let (kind, range) = head
        .split_once(':')
        .ok_or_else(|| bad(format!("directive `{head}` is missing `kind:range`")))?;
    let (start, end) = parse_range(range)?;

    let mut t_default: Option<usize> = None;
    let mut t_overrides: Vec<(usize, usize)> = Vec::new();
    let mut alpha: Option<AlphaAssignment> = None;
    let mut ranks: Option<TuckerRanks> = None;
    let mut bottleneck: Option<BottleneckRank> = None;

    for token in tokens {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| bad(format!("expected key=value, got `{token}`")))?;
        match key {
            "t" => match value.split_once('@') {
                Some((tv, layers)) => {
                    let t: usize = tv
                        .parse()
                        .map_err(|_| bad(format!("bad multiplier `{tv}`")))?;
                    for layer in parse_usize_list(layers)? {
                        t_overrides.push((layer, t));
                    }
                }
                None => {
                    t_default = Some(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad multiplier `{value}`")))?,
                    )
                }
            },
            "alpha" => {
                let list = parse_usize_list(value)?;
                alpha = Some(if list.len() == 1 {
                    AlphaAssignment::Uniform(list[0])
                } else {
                    AlphaAssignment::PerLayer(list)
                });
            }
            "ranks" => {
                ranks = Some(if value == "vbmf" {
                    TuckerRanks::Vbmf
                } else {
                    let list = parse_usize_list(value)?;
                    if list.len() != 2 {
                        return Err(bad(format!("ranks takes two values, got `{value}`")));
                    }
                    TuckerRanks::Explicit(list[0], list[1])
                });
            }
            "r" => {
                bottleneck = Some(if value == "vbmf" {
                    BottleneckRank::Vbmf
                } else {
                    BottleneckRank::Explicit(
                        value
                            .parse()
                            .map_err(|_| bad(format!("bad rank `{value}`")))?,
                    )
                });
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }

    let reject_keys = |used: &[(&str, bool)]| -> Result<(), CliError> {
        for (name, present) in used {
            if *present {
                return Err(bad(format!("`{name}` does not apply to `{kind}`")));
            }
        }
        Ok(())
    };

    let params = match kind {
        "depthsep" => {
            reject_keys(&[
                ("alpha", alpha.is_some()),
                ("ranks", ranks.is_some()),
                ("r", bottleneck.is_some()),
            ])?;
            DirectiveParams::DepthSep {
                t: t_default.unwrap_or(1),
                t_overrides,
            }
        }
        "tucker" | "tucker2" => {
            reject_keys(&[
                ("alpha", alpha.is_some()),
                ("r", bottleneck.is_some()),
                ("t", t_default.is_some() || !t_overrides.is_empty()),
            ])?;
            DirectiveParams::Tucker2 {
                ranks: ranks.ok_or_else(|| bad("tucker needs ranks=R1,R2 or ranks=vbmf"))?,
            }
        }
        "tdw" => {
            reject_keys(&[("alpha", alpha.is_some()), ("ranks", ranks.is_some())])?;
            if !t_overrides.is_empty() {
                return Err(bad("tdw takes a plain t=INT, not t=INT@layers"));
            }
            DirectiveParams::Tdw {
                t: t_default,
                rank: bottleneck.ok_or_else(|| bad("tdw needs r=INT or r=vbmf"))?,
            }
        }
        "cdp" => {
            reject_keys(&[
                ("ranks", ranks.is_some()),
                ("r", bottleneck.is_some()),
                ("t", t_default.is_some() || !t_overrides.is_empty()),
            ])?;
            DirectiveParams::Cdp {
                alpha: alpha.ok_or_else(|| bad("cdp needs alpha=INT or alpha=a1,a2,..."))?,
            }
        }
        other => return Err(bad(format!("unknown directive kind `{other}`"))),
    };
    Ok(Directive { start, end, params })
}

/// Parses a plan string; empty or blank input is the empty plan.
pub fn parse_plan(plan: &str) -> Result<ReplacementPlan, CliError> {
    let directives = directive_chunks(plan)
        .iter()
        .map(|chunk| parse_directive(chunk))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ReplacementPlan { directives })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plan() {
        assert!(parse_plan("").unwrap().is_empty());
        assert!(parse_plan("  ").unwrap().is_empty());
    }

    #[test]
    fn depthsep_with_scoped_multiplier() {
        let plan = parse_plan("depthsep:2-7 t=2@3,5").unwrap();
        assert_eq!(plan.directives.len(), 1);
        let d = &plan.directives[0];
        assert_eq!((d.start, d.end), (2, 7));
        match &d.params {
            DirectiveParams::DepthSep { t, t_overrides } => {
                assert_eq!(*t, 1);
                assert_eq!(t_overrides, &vec![(3, 2), (5, 2)]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cdp_uniform_and_per_layer() {
        let plan = parse_plan("cdp:2-7 alpha=2").unwrap();
        match &plan.directives[0].params {
            DirectiveParams::Cdp {
                alpha: AlphaAssignment::Uniform(2),
            } => {}
            other => panic!("unexpected {other:?}"),
        }
        let plan = parse_plan("cdp:2-7 alpha=2,4,4,8,8,16").unwrap();
        match &plan.directives[0].params {
            DirectiveParams::Cdp {
                alpha: AlphaAssignment::PerLayer(v),
            } => {
                assert_eq!(v, &vec![2, 4, 4, 8, 8, 16]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn multiple_directives_with_value_commas() {
        let plan = parse_plan("depthsep:7, tdw:5 t=2 r=33, tdw:6 r=43").unwrap();
        assert_eq!(plan.directives.len(), 3);
        match &plan.directives[1].params {
            DirectiveParams::Tdw {
                t: Some(2),
                rank: BottleneckRank::Explicit(33),
            } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tucker_ranks() {
        let plan = parse_plan("tucker:6 ranks=16,16").unwrap();
        match &plan.directives[0].params {
            DirectiveParams::Tucker2 {
                ranks: TuckerRanks::Explicit(16, 16),
            } => {}
            other => panic!("unexpected {other:?}"),
        }
        let plan = parse_plan("tucker:6 ranks=vbmf").unwrap();
        match &plan.directives[0].params {
            DirectiveParams::Tucker2 {
                ranks: TuckerRanks::Vbmf,
            } => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_malformed_input() {
        assert!(parse_plan("depthsep").is_err());
        assert!(parse_plan("depthsep:0").is_err());
        assert!(parse_plan("depthsep:5-2").is_err());
        assert!(parse_plan("nope:2").is_err());
        assert!(parse_plan("tucker:3").is_err());
        assert!(parse_plan("cdp:3").is_err());
        assert!(parse_plan("cdp:3 alpha=x").is_err());
        assert!(parse_plan("depthsep:3 alpha=2").is_err());
    }
}
