//! Diffusion-time sweeps of the three-qubit quantities and their CSV layout.

use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimize::OptimizerConfig;
use crate::three_qubit::{average_fidelity, maximize_coherent_info, maximize_holevo, orthogonal_benchmark};

/// Version tag of the sweep CSV layout.
pub const SWEEP_SCHEMA_VERSION: u32 = 1;

/// Checked-in copy of the column layout, one `quantity: columns` line each.
pub const SWEEP_SCHEMA_FIXTURE: &str = include_str!("../fixtures/sweep_schema_v1.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepQuantity {
    AvgFidelity,
    CoherentInfo,
    Capacity,
    Orthogonal,
}

impl SweepQuantity {
    pub const ALL: [SweepQuantity; 4] = [
        SweepQuantity::AvgFidelity,
        SweepQuantity::CoherentInfo,
        SweepQuantity::Capacity,
        SweepQuantity::Orthogonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepQuantity::AvgFidelity => "avg-fidelity",
            SweepQuantity::CoherentInfo => "coherent-info",
            SweepQuantity::Capacity => "capacity",
            SweepQuantity::Orthogonal => "orthogonal",
        }
    }

    /// CSV header. `value` is the best orthogonal pair for `Orthogonal`.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            SweepQuantity::AvgFidelity => &["t", "value", "flag"],
            SweepQuantity::CoherentInfo => &["t", "value", "epsilon", "flag"],
            SweepQuantity::Capacity => &["t", "value", "q", "theta", "flag"],
            SweepQuantity::Orthogonal => &["t", "value", "worst", "flag"],
        }
    }
}

impl FromStr for SweepQuantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepQuantity::ALL
            .into_iter()
            .find(|q| q.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown sweep quantity {s:?}")))
    }
}

/// Current layout rendered in the fixture format.
pub fn sweep_schema() -> String {
    let mut s = format!("version {SWEEP_SCHEMA_VERSION}\n");
    for q in SweepQuantity::ALL {
        s.push_str(&format!("{}: {}\n", q.name(), q.columns().join(",")));
    }
    s
}

/// One sweep row. `aux` follows the header after `value`; missing entries
/// (e.g. `q` when the two-state fit does not match) are NaN.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub t: f64,
    pub value: f64,
    pub aux: Vec<f64>,
    /// Empty when the optimizer converged, otherwise the reason.
    pub flag: String,
}

impl SweepRow {
    pub fn flagged(&self) -> bool {
        !self.flag.is_empty()
    }
}

pub fn sweep_row(quantity: SweepQuantity, t: f64, config: &OptimizerConfig<f64>) -> Result<SweepRow> {
    let row = |value, aux, converged: bool| SweepRow {
        t,
        value,
        aux,
        flag: if converged { String::new() } else { "not-converged".into() },
    };
    Ok(match quantity {
        SweepQuantity::AvgFidelity => row(average_fidelity(t), vec![], true),
        SweepQuantity::CoherentInfo => {
            let o = maximize_coherent_info(t, config)?;
            row(o.value, vec![o.epsilon], o.converged)
        }
        SweepQuantity::Capacity => {
            let o = maximize_holevo(t, 5, config)?;
            row(
                o.capacity,
                vec![o.q.unwrap_or(f64::NAN), o.theta.unwrap_or(f64::NAN)],
                o.converged,
            )
        }
        SweepQuantity::Orthogonal => {
            let b = orthogonal_benchmark(t, config)?;
            row(b.best, vec![b.worst], true)
        }
    })
}

/// `steps` equally spaced points from `from` to `to` inclusive.
pub fn time_grid(from: f64, to: f64, steps: usize) -> Result<Vec<f64>> {
    if steps == 0 || !(from >= 0.0) || !(to >= from) {
        return Err(Error::InvalidArgument(format!(
            "invalid grid: from {from}, to {to}, {steps} steps"
        )));
    }
    if steps == 1 {
        return Ok(vec![from]);
    }
    Ok((0..steps)
        .map(|i| from + (to - from) * i as f64 / (steps - 1) as f64)
        .collect())
}

/// Writes header and rows with 17 significant digits.
pub fn write_sweep_csv<W: Write>(out: W, quantity: SweepQuantity, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("CSV write failed: {e}"));
    w.write_record(quantity.columns()).map_err(io)?;
    for r in rows {
        let mut rec = vec![format!("{:.16e}", r.t), format!("{:.16e}", r.value)];
        rec.extend(r.aux.iter().map(|v| format!("{v:.16e}")));
        rec.push(r.flag.clone());
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("CSV flush failed: {e}")))?;
    Ok(())
}
