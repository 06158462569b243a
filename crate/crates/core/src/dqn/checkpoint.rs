//! Versioned plain-text checkpoint.
//!
//! ```text
//! wirebeam-checkpoint 1
//! dims 9 128 128 128 9
//! step 20000
//! adam_step 120000
//! config <n>
//! <n lines of config echo>
//! params
//! <per layer: weight rows (row-major), then one bias line>
//! adam_m
//! ...
//! adam_v
//! ...
//! end
//! ```
//!
//! Floats use Rust's shortest round-trip formatting, so a read-back is exact.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{AdamState, MlpParams};
use crate::error::{Error, Result};

pub const MAGIC: &str = "wirebeam-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: MlpParams,
    pub adam: AdamState,
    /// Environment steps trained.
    pub step: usize,
    /// Config echo, one `key = value` per line.
    pub config_echo: String,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let dims = self.params.dims();
        writeln!(out, "{MAGIC} {VERSION}").unwrap();
        writeln!(out, "dims {}", join(dims.iter())).unwrap();
        writeln!(out, "step {}", self.step).unwrap();
        writeln!(out, "adam_step {}", self.adam.step).unwrap();
        let echo: Vec<&str> = self.config_echo.lines().collect();
        writeln!(out, "config {}", echo.len()).unwrap();
        for line in echo {
            writeln!(out, "{line}").unwrap();
        }
        for (tag, net) in [
            ("params", &self.params),
            ("adam_m", &self.adam.m),
            ("adam_v", &self.adam.v),
        ] {
            writeln!(out, "{tag}").unwrap();
            write_net(&mut out, net);
        }
        writeln!(out, "end").unwrap();
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let mut next = |what: &str| -> Result<(usize, &str)> {
            lines.next().map(|(i, l)| (i + 1, l)).ok_or_else(|| {
                Error::Checkpoint(format!("unexpected end of file, expected {what}"))
            })
        };

        let (ln, header) = next("header")?;
        let version = header
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| Error::Checkpoint(format!("line {ln}: not a wirebeam checkpoint")))?;
        if version != VERSION.to_string() {
            return Err(Error::Checkpoint(format!(
                "line {ln}: unsupported version {version}"
            )));
        }
        let dims: Vec<usize> = keyed(next("dims")?, "dims")?;
        if dims.len() < 2 {
            return Err(Error::Checkpoint("dims needs at least two entries".into()));
        }
        let step: usize = single(keyed(next("step")?, "step")?)?;
        let adam_step: u64 = single(keyed(next("adam_step")?, "adam_step")?)?;
        let n_echo: usize = single(keyed(next("config")?, "config")?)?;
        let mut echo = String::new();
        for _ in 0..n_echo {
            echo.push_str(next("config line")?.1);
            echo.push('\n');
        }
        let mut nets = Vec::new();
        for tag in ["params", "adam_m", "adam_v"] {
            let (ln, l) = next(tag)?;
            if l.trim() != tag {
                return Err(Error::Checkpoint(format!(
                    "line {ln}: expected {tag:?}, found {l:?}"
                )));
            }
            let mut net = MlpParams::zeros(&dims);
            for layer in &mut net.layers {
                let (rows, cols) = layer.weights.dim();
                let mut w = Vec::with_capacity(rows * cols);
                for _ in 0..rows {
                    let (ln, l) = next("weight row")?;
                    let row = floats(ln, l)?;
                    if row.len() != cols {
                        return Err(Error::Checkpoint(format!(
                            "line {ln}: expected {cols} weights, found {}",
                            row.len()
                        )));
                    }
                    w.extend(row);
                }
                layer.weights = Array2::from_shape_vec((rows, cols), w).expect("shape checked");
                let (ln, l) = next("bias")?;
                let b = floats(ln, l)?;
                if b.len() != rows {
                    return Err(Error::Checkpoint(format!(
                        "line {ln}: expected {rows} biases, found {}",
                        b.len()
                    )));
                }
                layer.bias = Array1::from(b);
            }
            nets.push(net);
        }
        let (ln, l) = next("end")?;
        if l.trim() != "end" {
            return Err(Error::Checkpoint(format!("line {ln}: expected end marker")));
        }
        let v = nets.pop().unwrap();
        let m = nets.pop().unwrap();
        let params = nets.pop().unwrap();
        Ok(Checkpoint {
            params,
            adam: AdamState {
                m,
                v,
                step: adam_step,
            },
            step,
            config_echo: echo,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::parse(&text)
    }
}

fn join<T: std::fmt::Display>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn write_net(out: &mut String, net: &MlpParams) {
    for layer in &net.layers {
        for row in layer.weights.rows() {
            writeln!(out, "{}", join(row.iter())).unwrap();
        }
        writeln!(out, "{}", join(layer.bias.iter())).unwrap();
    }
}

fn keyed<T: std::str::FromStr>((ln, line): (usize, &str), key: &str) -> Result<Vec<T>> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(Error::Checkpoint(format!("line {ln}: expected {key:?}")));
    }
    parts
        .map(|p| {
            p.parse::<T>()
                .map_err(|_| Error::Checkpoint(format!("line {ln}: bad value {p:?} for {key}")))
        })
        .collect()
}

fn single<T>(mut v: Vec<T>) -> Result<T> {
    if v.len() != 1 {
        return Err(Error::Checkpoint("expected exactly one value".into()));
    }
    Ok(v.pop().unwrap())
}

fn floats(ln: usize, line: &str) -> Result<Vec<f64>> {
    line.split_whitespace()
        .map(|p| {
            p.parse::<f64>()
                .map_err(|_| Error::Checkpoint(format!("line {ln}: bad number {p:?}")))
        })
        .collect()
}
