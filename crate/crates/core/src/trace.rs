//! Per-epoch convergence records and their CSV form.

use std::io::{self, Write};

use crate::matrix::DenseVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub epoch: u32,
    /// Absent when no reference solution was supplied.
    pub mse: Option<f64>,
    /// Time spent in the iteration loop up to and including this epoch.
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub final_x: DenseVector,
    /// Worker initialization (factorization and initial solve), timed apart
    /// from the epochs.
    pub init_seconds: f64,
    /// `max |P_j|` per worker, in partition order. Empty for gradient descent.
    pub projection_norms: Vec<f64>,
}

pub const CSV_HEADER: &str = "epoch,mse,elapsed_seconds";

impl ConvergenceTrace {
    pub fn final_mse(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.mse)
    }

    pub fn total_seconds(&self) -> f64 {
        self.init_seconds + self.records.last().map_or(0.0, |r| r.elapsed_seconds)
    }

    pub fn mse_series(&self) -> Vec<Option<f64>> {
        self.records.iter().map(|r| r.mse).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.records {
            let mse = r.mse.map(|m| format!("{m:.16e}")).unwrap_or_default();
            writeln!(w, "{},{},{:.16e}", r.epoch, mse, r.elapsed_seconds)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("in-memory write");
        String::from_utf8(out).expect("ascii output")
    }
}
