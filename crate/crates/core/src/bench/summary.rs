//! Per-group statistics of a result table.

use std::io::Read;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub architecture: String,
    pub sweep_var: String,
    pub sweep_value: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single trial.
    pub std: f64,
    pub count: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub rows: Vec<SummaryRow>,
    /// Groups dropped because no trial succeeded.
    pub omitted_groups: usize,
    pub failed_rows: usize,
}

/// One parsed result line: group key, sum-rate when the row succeeded.
pub type Sample = (String, String, f64, Option<f64>);

pub fn read_samples<R: Read>(input: R) -> Result<Vec<Sample>> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Config {
            key: name.to_string(),
            msg: "missing column".into(),
        })
    };
    let (ia, iv, ix, ir, is) = (
        col("architecture")?,
        col("sweep_var")?,
        col("sweep_value")?,
        col("sum_rate_bps_hz")?,
        col("status")?,
    );
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let value: f64 = rec[ix].parse().map_err(|_| Error::Config {
            key: "sweep_value".into(),
            msg: format!("not a number: `{}`", &rec[ix]),
        })?;
        let rate = if &rec[is] == "ok" {
            Some(rec[ir].parse::<f64>().map_err(|_| Error::Config {
                key: "sum_rate_bps_hz".into(),
                msg: format!("not a number: `{}`", &rec[ir]),
            })?)
        } else {
            None
        };
        out.push((rec[ia].to_string(), rec[iv].to_string(), value, rate));
    }
    Ok(out)
}

/// Mean, standard deviation and count per (architecture, sweep value), in
/// order of first appearance.
pub fn summarize(samples: &[Sample]) -> Result<Summary> {
    if samples.is_empty() {
        return Err(Error::Empty("result table has no rows".into()));
    }
    let mut groups: Vec<((String, String, f64), Vec<f64>, usize)> = Vec::new();
    for (a, v, x, r) in samples {
        let key = (a.clone(), v.clone(), *x);
        let idx = match groups.iter().position(|g| g.0 == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new(), 0));
                groups.len() - 1
            }
        };
        match r {
            Some(r) => groups[idx].1.push(*r),
            None => groups[idx].2 += 1,
        }
    }
    let mut rows = Vec::new();
    let mut omitted = 0;
    let mut failed_rows = 0;
    for ((architecture, sweep_var, sweep_value), xs, failed) in groups {
        failed_rows += failed;
        if xs.is_empty() {
            omitted += 1;
            continue;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        rows.push(SummaryRow {
            architecture,
            sweep_var,
            sweep_value,
            mean,
            std,
            count: xs.len(),
            failed,
        });
    }
    Ok(Summary {
        rows,
        omitted_groups: omitted,
        failed_rows,
    })
}
