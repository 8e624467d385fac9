//! Bias and RMSE of reconstructions against reference fields, as maps
//! (over time) and series (over space), with median summaries.

use crate::error::{Error, Result};
use crate::grid::{Field, FieldSeries};

fn check_aligned(recon: &FieldSeries, reference: &FieldSeries) -> Result<()> {
    if recon.land() != reference.land() {
        return Err(Error::invalid("reconstruction and reference have different grids or land masks"));
    }
    if recon.stamps() != reference.stamps() {
        return Err(Error::invalid("reconstruction and reference stamps are not aligned"));
    }
    if recon.is_empty() {
        return Err(Error::invalid("no snapshots to evaluate"));
    }
    Ok(())
}

/// Per-cell time means of `f(error)`.
fn time_mean(recon: &FieldSeries, reference: &FieldSeries, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    check_aligned(recon, reference)?;
    let n = recon.shape().len();
    let mut acc = vec![0.0; n];
    for (a, b) in recon.fields().iter().zip(reference.fields()) {
        for ((s, x), y) in acc.iter_mut().zip(a.values()).zip(b.values()) {
            *s += f(x - y);
        }
    }
    let t = recon.len() as f64;
    Ok(acc.into_iter().map(|s| s / t).collect())
}

/// Per-time means of `f(error)` over sea cells.
fn space_mean(recon: &FieldSeries, reference: &FieldSeries, f: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    check_aligned(recon, reference)?;
    let sea = recon.land().sea_cells();
    if sea.is_empty() {
        return Err(Error::invalid("grid has no sea cell"));
    }
    Ok(recon
        .fields()
        .iter()
        .zip(reference.fields())
        .map(|(a, b)| {
            let (x, y) = (a.values(), b.values());
            sea.iter().map(|&i| f(x[i] - y[i])).sum::<f64>() / sea.len() as f64
        })
        .collect())
}

/// Time-mean error per cell.
pub fn bias_field(recon: &FieldSeries, reference: &FieldSeries) -> Result<Field> {
    Field::new(recon.land().clone(), time_mean(recon, reference, |e| e)?)
}

/// Sea-mean error per time.
pub fn bias_series(recon: &FieldSeries, reference: &FieldSeries) -> Result<Vec<f64>> {
    space_mean(recon, reference, |e| e)
}

/// Root of the time-mean squared error per cell.
pub fn rmse_field(recon: &FieldSeries, reference: &FieldSeries) -> Result<Field> {
    let ms = time_mean(recon, reference, |e| e * e)?;
    Field::new(recon.land().clone(), ms.into_iter().map(f64::sqrt).collect())
}

/// Root of the sea-mean squared error per time.
pub fn rmse_series(recon: &FieldSeries, reference: &FieldSeries) -> Result<Vec<f64>> {
    Ok(space_mean(recon, reference, |e| e * e)?.into_iter().map(f64::sqrt).collect())
}

/// Median, taking the lower middle element for even lengths.
pub fn lower_median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty series"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v[(v.len() - 1) / 2])
}

/// Verification of one method on the test period.
#[derive(Debug, Clone)]
pub struct MethodEval {
    pub method: String,
    pub sensors: usize,
    pub bias_field: Field,
    pub rmse_field: Field,
    pub bias_series: Vec<f64>,
    pub rmse_series: Vec<f64>,
    /// Signed median of the bias series.
    pub med_bias: f64,
    pub med_rmse: f64,
}

pub fn summarize(method: &str, sensors: usize, recon: &FieldSeries, reference: &FieldSeries) -> Result<MethodEval> {
    let bias_series = bias_series(recon, reference)?;
    let rmse_series = rmse_series(recon, reference)?;
    Ok(MethodEval {
        method: method.to_string(),
        sensors,
        bias_field: bias_field(recon, reference)?,
        rmse_field: rmse_field(recon, reference)?,
        med_bias: lower_median(&bias_series)?,
        med_rmse: lower_median(&rmse_series)?,
        bias_series,
        rmse_series,
    })
}

impl MethodEval {
    pub fn row(&self) -> ReportRow {
        ReportRow {
            method: self.method.clone(),
            sensors: self.sensors,
            med_bias: self.med_bias,
            med_rmse: self.med_rmse,
        }
    }
}

/// Summary line of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub sensors: usize,
    pub med_bias: f64,
    pub med_rmse: f64,
}

/// One table line: method, sensor count, MED(Bias), MED(RMSE).
pub fn table_row(method: &str, sensors: usize, med_bias: f64, med_rmse: f64) -> [String; 4] {
    [
        method.to_string(),
        sensors.to_string(),
        format!("{med_bias:.2}"),
        format!("{med_rmse:.2}"),
    ]
}

const CSV_HEADER: &str = "method,sensors,med_bias,med_rmse";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn get(&self, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|m| m.method == method)
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let header = ["method", "sensors", "MED(Bias)", "MED(RMSE)"].map(String::from);
        let rows: Vec<[String; 4]> = std::iter::once(header)
            .chain(self.rows.iter().map(|m| table_row(&m.method, m.sensors, m.med_bias, m.med_rmse)))
            .collect();
        let mut widths = [0usize; 4];
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        for r in &rows {
            let line = format!(
                "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}",
                r[0],
                r[1],
                r[2],
                r[3],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3]
            );
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        for m in &self.rows {
            s.push_str(&format!("{},{},{:.6},{:.6}\n", m.method, m.sensors, m.med_bias, m.med_rmse));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |detail: String| Error::Format { what: "report CSV", detail };
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(CSV_HEADER) {
            return Err(bad(format!("expected header '{CSV_HEADER}'")));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let parts: Vec<&str> = line.split(',').collect();
            let parsed = match parts.as_slice() {
                [m, k, b, r] => k.parse().ok().zip(b.parse().ok()).zip(r.parse().ok()).map(|((k, b), r)| ReportRow {
                    method: m.to_string(),
                    sensors: k,
                    med_bias: b,
                    med_rmse: r,
                }),
                _ => None,
            };
            rows.push(parsed.ok_or_else(|| bad(format!("line {}: '{line}'", n + 2)))?);
        }
        Ok(Self { rows })
    }
}
