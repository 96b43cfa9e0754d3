//! Plain-text `key = value` training configuration.
//!
//! Lines starting with `#` are comments. Recognized keys:
//!
//! | key | value |
//! |-----|-------|
//! | `mode` | `sig` or `gis` |
//! | `k` | axes per iteration |
//! | `max_layers` | iteration cap |
//! | `stiefel_max_iter` | `auto` or an integer |
//! | `alpha` | `a1,a2` |
//! | `knots` | `auto` or an integer |
//! | `kde_b` | kernel width factor |
//! | `kde_bandwidth` | fixed kernel width |
//! | `validation_fraction` | in `[0, 1)` |
//! | `patience` | integer or `none` |
//! | `axes` | `optimized` or `random` |
//! | `seed` | integer |
//! | `image_shape` | `S,c` |
//! | `patch_stage` | `q,full|single,K,iterations` (repeatable, in order) |

use crate::error::{Result, SinfError};
use crate::patch::{ChannelMode, PatchSchedule, PatchStage};
use crate::train::{AxisSelection, KnotCount, StiefelIters, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sig,
    Gis,
}

impl std::str::FromStr for Mode {
    type Err = SinfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sig" => Ok(Mode::Sig),
            "gis" => Ok(Mode::Gis),
            other => Err(SinfError::InvalidArgument(format!(
                "unknown mode {other:?}"
            ))),
        }
    }
}

/// A parsed config: the mode and the trainer settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn defaults(mode: Mode, k: usize) -> Self {
        let train = match mode {
            Mode::Sig => TrainConfig::sig(k),
            Mode::Gis => TrainConfig::gis(k),
        };
        Self { mode, train }
    }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| SinfError::Parse {
        line,
        message: format!("invalid value {v:?} for {key}"),
    })
}

/// Parses a config; `mode` (default `gis`) must come before other keys that
/// depend on mode defaults, so it is read in a first pass.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let entries: Vec<(usize, String, String)> = text
        .lines()
        .enumerate()
        .filter_map(|(i, raw)| {
            let line = raw.split('#').next().unwrap_or("").trim();
            (!line.is_empty()).then(|| (i + 1, line.to_string()))
        })
        .map(|(i, line)| match line.split_once('=') {
            Some((k, v)) => Ok((i, k.trim().to_ascii_lowercase(), v.trim().to_string())),
            None => Err(SinfError::Parse {
                line: i,
                message: format!("expected key = value, got {line:?}"),
            }),
        })
        .collect::<Result<_>>()?;

    let mode = entries
        .iter()
        .rev()
        .find(|e| e.1 == "mode")
        .map(|e| e.2.parse::<Mode>())
        .transpose()?
        .unwrap_or(Mode::Gis);
    let mut cfg = RunConfig::defaults(mode, 1);
    let t = &mut cfg.train;
    let mut stages = Vec::new();
    for (line, key, value) in &entries {
        let line = *line;
        match key.as_str() {
            "mode" => {}
            "k" => t.k = num(line, key, value)?,
            "max_layers" => t.max_layers = num(line, key, value)?,
            "stiefel_max_iter" => {
                t.stiefel_max_iter = if value.eq_ignore_ascii_case("auto") {
                    StiefelIters::Auto
                } else {
                    StiefelIters::Fixed(num(line, key, value)?)
                }
            }
            "knots" => {
                t.knots = if value.eq_ignore_ascii_case("auto") {
                    KnotCount::Auto
                } else {
                    KnotCount::Fixed(num(line, key, value)?)
                }
            }
            "alpha" => {
                let parts: Vec<&str> = value.split(',').collect();
                t.alpha = match parts.as_slice() {
                    [a] => {
                        let a = num(line, key, a)?;
                        (a, a)
                    }
                    [a, b] => (num(line, key, a)?, num(line, key, b)?),
                    _ => {
                        return Err(SinfError::Parse {
                            line,
                            message: "alpha takes one or two values".into(),
                        })
                    }
                };
            }
            "kde_b" => t.kde.width_factor = num(line, key, value)?,
            "kde_bandwidth" => t.kde.bandwidth = Some(num(line, key, value)?),
            "validation_fraction" => t.validation_fraction = num(line, key, value)?,
            "patience" => {
                t.patience = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(num(line, key, value)?)
                }
            }
            "axes" => {
                t.axes = match value.to_ascii_lowercase().as_str() {
                    "optimized" => AxisSelection::Optimized,
                    "random" => AxisSelection::Random,
                    other => {
                        return Err(SinfError::Parse {
                            line,
                            message: format!("unknown axis selection {other:?}"),
                        })
                    }
                }
            }
            "seed" => t.seed = num(line, key, value)?,
            "image_shape" => {
                let parts: Vec<&str> = value.split(',').collect();
                let [s, c] = parts.as_slice() else {
                    return Err(SinfError::Parse {
                        line,
                        message: "image_shape takes S,c".into(),
                    });
                };
                t.image_shape = Some((num(line, key, s)?, num(line, key, c)?));
            }
            "patch_stage" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                let [q, m, k, it] = parts.as_slice() else {
                    return Err(SinfError::Parse {
                        line,
                        message: "patch_stage takes q,full|single,K,iterations".into(),
                    });
                };
                let mode = match m.to_ascii_lowercase().as_str() {
                    "full" => ChannelMode::FullDepth,
                    "single" => ChannelMode::SingleChannel,
                    other => {
                        return Err(SinfError::Parse {
                            line,
                            message: format!("unknown channel mode {other:?}"),
                        })
                    }
                };
                stages.push(PatchStage {
                    patch: num(line, key, q)?,
                    mode,
                    k: num(line, key, k)?,
                    iterations: num(line, key, it)?,
                });
            }
            other => {
                return Err(SinfError::Parse {
                    line,
                    message: format!("unknown key {other:?}"),
                })
            }
        }
    }
    if !stages.is_empty() {
        t.patch_schedule = Some(PatchSchedule::new(stages)?);
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_keys() {
        let cfg = parse_config(
            "# toy\nmode = sig\nk = 2\nmax_layers=50\nalpha = 0.1, 0.2\nknots = auto\n\
             image_shape = 4,1\npatch_stage = 4,full,8,10\npatch_stage = 2,full,4,10\npatience = none\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Sig);
        assert_eq!(cfg.train.k, 2);
        assert_eq!(cfg.train.max_layers, 50);
        assert_eq!(cfg.train.alpha, (0.1, 0.2));
        assert_eq!(cfg.train.patch_schedule.as_ref().unwrap().stages.len(), 2);
        assert_eq!(cfg.train.patience, None);
    }

    #[test]
    fn reports_bad_lines() {
        assert!(matches!(
            parse_config("k = 2\nbogus\n"),
            Err(SinfError::Parse { line: 2, .. })
        ));
        assert!(matches!(
            parse_config("k = two\n"),
            Err(SinfError::Parse { line: 1, .. })
        ));
        assert!(parse_config("colour = red\n").is_err());
    }
}
