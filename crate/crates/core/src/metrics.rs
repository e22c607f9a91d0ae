//! Per-frame error metrics and their Monte Carlo aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::StateVector;

/// Per-frame mean squared error in mm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseSeries {
    pub values: Vec<f64>,
    pub filter_label: String,
    pub user_label: String,
}

impl MseSeries {
    pub fn new(
        values: Vec<f64>,
        filter_label: impl Into<String>,
        user_label: impl Into<String>,
    ) -> Result<Self> {
        if let Some((k, v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::Numeric(format!("MSE at frame {k} is {v}")));
        }
        Ok(MseSeries {
            values,
            filter_label: filter_label.into(),
            user_label: user_label.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn check_pair(estimate: &StateVector, truth: &StateVector) -> Result<()> {
    if estimate.len() != truth.len() {
        return Err(Error::Dimension(format!(
            "estimate has {} components, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    if estimate.is_empty() {
        return Err(Error::Dimension("cannot score an empty state".into()));
    }
    Ok(())
}

/// `(1/N) Σ (x̂ᵢ − xᵢ)²` over all `N = 3 × landmarks` components.
pub fn mse_at_step(estimate: &StateVector, truth: &StateVector) -> Result<f64> {
    check_pair(estimate, truth)?;
    Ok((estimate - truth).norm_squared() / estimate.len() as f64)
}

/// `(1/N) Σ |x̂ᵢ − xᵢ|`.
pub fn mae_at_step(estimate: &StateVector, truth: &StateVector) -> Result<f64> {
    check_pair(estimate, truth)?;
    Ok((estimate - truth).lp_norm(1) / estimate.len() as f64)
}

/// Pointwise mean of equally long series, in input order.
///
/// Labels are taken from the first series; all inputs must agree on them.
pub fn average_series(series: &[MseSeries]) -> Result<MseSeries> {
    let first = series
        .first()
        .ok_or_else(|| Error::Aggregation("no series to average".into()))?;
    for s in &series[1..] {
        if s.len() != first.len() {
            return Err(Error::Aggregation(format!(
                "ragged series: lengths {} and {}",
                first.len(),
                s.len()
            )));
        }
        if s.filter_label != first.filter_label || s.user_label != first.user_label {
            return Err(Error::Aggregation(format!(
                "label mismatch: {}/{} vs {}/{}",
                first.user_label, first.filter_label, s.user_label, s.filter_label
            )));
        }
    }
    let values = average_columns(series.iter().map(|s| s.values.as_slice()), first.len());
    Ok(MseSeries {
        values,
        filter_label: first.filter_label.clone(),
        user_label: first.user_label.clone(),
    })
}

/// Pointwise mean of equally long slices. A single slice is returned as-is,
/// and identical slices average to themselves exactly (summing `k` copies and
/// dividing by `k` can be off by an ulp).
pub(crate) fn average_columns<'a>(rows: impl Iterator<Item = &'a [f64]>, len: usize) -> Vec<f64> {
    let mut sum = vec![0.0; len];
    let mut count = 0usize;
    let mut all_same: Option<Vec<f64>> = None;
    let mut same = true;
    for row in rows {
        match &all_same {
            None => all_same = Some(row.to_vec()),
            Some(first) => same &= first.as_slice() == row,
        }
        for (acc, v) in sum.iter_mut().zip(row) {
            *acc += v;
        }
        count += 1;
    }
    if same {
        if let Some(first) = all_same {
            return first;
        }
    }
    sum.into_iter().map(|s| s / count as f64).collect()
}
