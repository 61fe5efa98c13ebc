//! Text checkpoints.
//!
//! ```text
//! OUTBREAKNET v1 sizes=<s0,s1,...>
//! <one line per weight row, then one bias line, for each layer>
//! scaler fields=<n>
//! <n field minima>
//! <n field maxima>
//! <target min> <target max>
//! ```
//!
//! Values are written with 17 significant digits so a load reproduces the
//! exact bits.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::{init_network, Network, NnError};
use crate::features::ScalerParams;
use crate::tsv::{atomic_write, join_exact};

const MAGIC: &str = "OUTBREAKNET v1 sizes=";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error(transparent)]
    Network(#[from] NnError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A network together with the scaler its inputs and outputs were fitted with.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub network: Network,
    pub scaler: ScalerParams,
}

pub fn write_checkpoint(model: &TrainedModel, w: &mut dyn Write) -> io::Result<()> {
    let sizes: Vec<String> = model.network.layer_sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "{MAGIC}{}", sizes.join(","))?;
    for layer in &model.network.layers {
        for i in 0..layer.outputs {
            writeln!(w, "{}", join_exact(layer.weight_row(i)))?;
        }
        writeln!(w, "{}", join_exact(&layer.bias))?;
    }
    let s = &model.scaler;
    writeln!(w, "scaler fields={}", s.field_count())?;
    writeln!(w, "{}", join_exact(&s.mins))?;
    writeln!(w, "{}", join_exact(&s.maxs))?;
    writeln!(w, "{}", join_exact(&[s.target_min, s.target_max]))?;
    Ok(())
}

pub fn save_checkpoint(model: &TrainedModel, path: &Path) -> io::Result<()> {
    atomic_write(path, |w| write_checkpoint(model, w))
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<(usize, &'a str), CheckpointError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.trim_end_matches('\r')))
            }
            None => Err(CheckpointError::Malformed {
                line: self.last + 1,
                reason: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    fn floats(&mut self, count: usize, what: &str) -> Result<Vec<f64>, CheckpointError> {
        let (line, text) = self.next(what)?;
        let malformed = |reason: String| CheckpointError::Malformed { line, reason };
        let values = text
            .split_ascii_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| malformed(format!("bad number {t:?}"))))
            .collect::<Result<Vec<f64>, _>>()?;
        if values.len() != count {
            return Err(malformed(format!("{what}: expected {count} values, found {}", values.len())));
        }
        Ok(values)
    }
}

pub fn parse_checkpoint(content: &str) -> Result<TrainedModel, CheckpointError> {
    let mut lines = Lines {
        inner: content.lines().enumerate(),
        last: 0,
    };
    let (_, header) = lines.next("header")?;
    let sizes = header
        .strip_prefix(MAGIC)
        .and_then(|s| s.split(',').map(|p| p.trim().parse::<usize>().ok()).collect::<Option<Vec<_>>>())
        .ok_or_else(|| CheckpointError::Malformed {
            line: 1,
            reason: format!("expected `{MAGIC}<sizes>`"),
        })?;
    let mut network = init_network(&sizes, 0)?;
    for (k, layer) in network.layers.iter_mut().enumerate() {
        for i in 0..layer.outputs {
            let row = lines.floats(layer.inputs, &format!("layer {k} weight row {i}"))?;
            layer.weights[i * layer.inputs..(i + 1) * layer.inputs].copy_from_slice(&row);
        }
        layer.bias = lines.floats(layer.outputs, &format!("layer {k} bias"))?;
    }
    let (line, scaler_header) = lines.next("scaler header")?;
    let fields = scaler_header
        .strip_prefix("scaler fields=")
        .and_then(|n| n.parse::<usize>().ok())
        .ok_or_else(|| CheckpointError::Malformed {
            line,
            reason: "expected `scaler fields=<n>`".into(),
        })?;
    let mins = lines.floats(fields, "scaler minima")?;
    let maxs = lines.floats(fields, "scaler maxima")?;
    let target = lines.floats(2, "target range")?;
    Ok(TrainedModel {
        network,
        scaler: ScalerParams {
            mins,
            maxs,
            target_min: target[0],
            target_max: target[1],
        },
    })
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel, CheckpointError> {
    parse_checkpoint(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> TrainedModel {
        TrainedModel {
            network: init_network(&[3, 4, 2, 1], 17).unwrap(),
            scaler: ScalerParams {
                mins: vec![0.1, -2.0, 1.0 / 3.0],
                maxs: vec![0.9, 2.0, 7.0],
                target_min: 12.0,
                target_max: 29177.5,
            },
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut first = Vec::new();
        write_checkpoint(&m, &mut first).unwrap();
        let text = String::from_utf8(first.clone()).unwrap();
        assert!(text.starts_with("OUTBREAKNET v1 sizes=3,4,2,1\n"));
        let back = parse_checkpoint(&text).unwrap();
        assert_eq!(back, m);
        let mut second = Vec::new();
        write_checkpoint(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn malformed_inputs() {
        let mut buf = Vec::new();
        write_checkpoint(&model(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let cases = [
            String::new(),
            "OUTBREAKNET v2 sizes=3,1\n".to_string(),
            "OUTBREAKNET v1 sizes=3\n".to_string(),
            "OUTBREAKNET v1 sizes=3,x,1\n".to_string(),
            text.lines().take(3).collect::<Vec<_>>().join("\n"),
            text.replacen("e-1", "e-1 junk", 1),
            text.replace("scaler fields=3", "scaler fields=4"),
        ];
        for c in cases {
            assert!(parse_checkpoint(&c).is_err(), "accepted {c:?}");
        }
    }
}
