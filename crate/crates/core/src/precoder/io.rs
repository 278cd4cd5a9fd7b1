//! Plain-text persistence of [`PrecoderSolution`].
//!
//! ```text
//! qml-precoder 1
//! structure sl
//! quantized true
//! beta 1.25e0
//! users 4
//! streams 2
//! iterations 212
//! converged true
//! matrix precoder 256 16
//! <one line per row, space separated>
//! vector power_alloc 256
//! <one value per line>
//! vector mse 40
//! ...
//! vector steps 39
//! ...
//! ```
//!
//! Numbers are written in shortest round-trip form, so reading a file back
//! reproduces the solution bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::{make_superposition, AlgoTrace, PrecoderSolution, Structure};
use crate::error::{Error, Result};

const MAGIC: &str = "qml-precoder 1";

impl PrecoderSolution {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let sp = &self.superposition;
        let _ = writeln!(out, "{MAGIC}");
        let _ = writeln!(out, "structure {}", self.structure.name());
        let _ = writeln!(out, "quantized {}", self.quantized);
        let _ = writeln!(out, "beta {:e}", self.beta);
        let _ = writeln!(out, "users {}", sp.users());
        let _ = writeln!(out, "streams {}", sp.streams_per_user());
        let _ = writeln!(out, "iterations {}", self.trace.iterations);
        let _ = writeln!(out, "converged {}", self.trace.converged);
        let _ = writeln!(out, "initial_grad_norm {:e}", self.trace.initial_grad_norm);
        let _ = writeln!(out, "final_grad_norm {:e}", self.trace.final_grad_norm);
        let p = &self.precoder;
        let _ = writeln!(out, "matrix precoder {} {}", p.nrows(), p.ncols());
        for row in p.row_iter() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        write_vector(&mut out, "power_alloc", self.power_alloc.iter());
        write_vector(&mut out, "mse", self.trace.mse.iter());
        write_vector(&mut out, "steps", self.trace.steps.iter());
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        if lines.next() != Some(MAGIC) {
            return Err(Error::Parse(format!("missing `{MAGIC}` header")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| Error::Parse(format!("missing `{key}`")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.trim().to_string()),
                _ => Err(Error::Parse(format!("expected `{key}`, found `{line}`"))),
            }
        };
        let structure = match field("structure")?.as_str() {
            "wl" => Structure::Wl,
            "sl" => Structure::Sl,
            other => return Err(Error::Parse(format!("unknown structure `{other}`"))),
        };
        let quantized = parse::<bool>(&field("quantized")?)?;
        let beta = parse::<f64>(&field("beta")?)?;
        let users = parse::<usize>(&field("users")?)?;
        let streams = parse::<usize>(&field("streams")?)?;
        let iterations = parse::<usize>(&field("iterations")?)?;
        let converged = parse::<bool>(&field("converged")?)?;
        let initial_grad_norm = parse::<f64>(&field("initial_grad_norm")?)?;
        let final_grad_norm = parse::<f64>(&field("final_grad_norm")?)?;

        let dims = field("matrix")?;
        let mut parts = dims.split_whitespace();
        if parts.next() != Some("precoder") {
            return Err(Error::Parse("expected the precoder matrix".into()));
        }
        let rows = parse::<usize>(parts.next().unwrap_or(""))?;
        let cols = parse::<usize>(parts.next().unwrap_or(""))?;
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| Error::Parse("precoder matrix is truncated".into()))?;
            let row: Vec<f64> = line.split_whitespace().map(parse::<f64>).collect::<Result<_>>()?;
            if row.len() != cols {
                return Err(Error::Parse(format!("row has {} values, expected {cols}", row.len())));
            }
            values.extend(row);
        }
        let precoder = DMatrix::from_row_slice(rows, cols, &values);
        let mut vector = |name: &str| -> Result<Vec<f64>> {
            let header = lines.next().ok_or_else(|| Error::Parse(format!("missing `{name}`")))?;
            let mut parts = header.split_whitespace();
            if parts.next() != Some("vector") || parts.next() != Some(name) {
                return Err(Error::Parse(format!("expected vector `{name}`, found `{header}`")));
            }
            let len = parse::<usize>(parts.next().unwrap_or(""))?;
            (0..len)
                .map(|_| {
                    let line = lines.next().ok_or_else(|| Error::Parse(format!("vector `{name}` is truncated")))?;
                    parse::<f64>(line)
                })
                .collect()
        };
        let power_alloc = DVector::from_vec(vector("power_alloc")?);
        let mse = vector("mse")?;
        let steps = vector("steps")?;

        let superposition = make_superposition(users, streams)?;
        if cols != superposition.num_streams() || power_alloc.len() != rows || rows % 2 != 0 {
            return Err(Error::Parse("dimensions are inconsistent".into()));
        }
        Ok(PrecoderSolution {
            precoder,
            power_alloc,
            beta,
            superposition,
            structure,
            quantized,
            trace: AlgoTrace {
                mse,
                steps,
                iterations,
                converged,
                initial_grad_norm,
                final_grad_norm,
                iterates: Vec::new(),
            },
        })
    }

    /// Writes the text form through a temporary file in the same directory.
    pub fn save(&self, path: &Path) -> Result<()> {
        crate::sim::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn write_vector<'a>(out: &mut String, name: &str, values: impl ExactSizeIterator<Item = &'a f64>) {
    let _ = writeln!(out, "vector {name} {}", values.len());
    for v in values {
        let _ = writeln!(out, "{v:e}");
    }
}

fn parse<T: std::str::FromStr>(s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Parse(format!("cannot parse `{s}`")))
}
