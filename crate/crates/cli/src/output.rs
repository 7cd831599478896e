//! CSV artifacts. Reals are written with Rust's shortest round-trip formatting, so
//! reading a file back reproduces every value bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use ridgeiv::montecarlo::{Quantiles, SweepCell};
use ridgeiv::{Estimate, SweepResult};

pub const SWEEP_HEADER: [&str; 11] = [
    "grid_value",
    "lambda",
    "mse",
    "bias",
    "variance",
    "q05",
    "q25",
    "q50",
    "q75",
    "q95",
    "n_degenerate",
];

pub fn write_sweep<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for c in &result.cells {
        let q = &c.quantiles;
        w.write_record([
            c.grid_value.to_string(),
            c.lambda.to_string(),
            c.mse.to_string(),
            c.bias.to_string(),
            c.variance.to_string(),
            q.q05.to_string(),
            q.q25.to_string(),
            q.q50.to_string(),
            q.q75.to_string(),
            q.q95.to_string(),
            c.n_degenerate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_file(result: &SweepResult, path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_sweep(result, std::io::BufWriter::new(file))
}

/// Parses a sweep table back into cells (without per-repetition estimates).
pub fn read_sweep<R: Read>(input: R) -> Result<Vec<SweepCell>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    anyhow::ensure!(header == SWEEP_HEADER, "unexpected header {header:?}");
    let mut cells = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .with_context(|| format!("row {}: column `{}`", line + 1, SWEEP_HEADER[i]))
        };
        cells.push(SweepCell {
            grid_value: f(0)?,
            lambda: f(1)?,
            mse: f(2)?,
            bias: f(3)?,
            variance: f(4)?,
            quantiles: Quantiles {
                q05: f(5)?,
                q25: f(6)?,
                q50: f(7)?,
                q75: f(8)?,
                q95: f(9)?,
            },
            n_degenerate: rec[10]
                .parse()
                .with_context(|| format!("row {}: column `n_degenerate`", line + 1))?,
            estimates: None,
        });
    }
    Ok(cells)
}

/// One row per kept repetition: `grid_value, lambda, beta1_hat`.
pub fn write_raw_estimates(result: &SweepResult, path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["grid_value", "lambda", "beta1_hat"])?;
    for c in &result.cells {
        for b in c.estimates.iter().flatten() {
            w.write_record([
                c.grid_value.to_string(),
                c.lambda.to_string(),
                b.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_estimates(rows: &[(f64, Estimate)], path: &Path) -> Result<()> {
    let file =
        std::fs::File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record([
        "lambda",
        "beta1_hat",
        "numerator",
        "denominator",
        "lambda_n",
        "pi1_hat",
        "sigma_eta_hat",
        "sigma_red_hat",
        "sigma_eps_hat",
    ])?;
    for (lambda, e) in rows {
        w.write_record([
            lambda.to_string(),
            e.beta1_hat.to_string(),
            e.numerator.to_string(),
            e.denominator.to_string(),
            e.lambda_n.to_string(),
            e.pi1_hat.to_string(),
            e.sigma_eta_hat.to_string(),
            e.sigma_red_hat.to_string(),
            e.sigma_eps_hat.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
