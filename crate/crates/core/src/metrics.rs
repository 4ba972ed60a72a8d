//! Scale-invariant signal-to-distortion ratio.

use alloc::vec::Vec;

use crate::{Error, Result};

/// Reported SI-SDR values are clamped to `±SI_SDR_CAP` dB.
pub const SI_SDR_CAP: f64 = 60.0;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// SI-SDR of a single channel: the estimate is projected onto the reference,
/// and the energy of the projection is compared to that of the residual.
pub fn si_sdr_channel(reference: &[f64], estimate: &[f64]) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::Dimension(alloc::format!(
            "reference has {} samples, estimate has {}",
            reference.len(),
            estimate.len()
        )));
    }
    let ref_energy = dot(reference, reference);
    if !(ref_energy > 0.0) {
        return Err(Error::Input("reference signal is silent".into()));
    }
    let alpha = dot(estimate, reference) / ref_energy;
    let mut target = 0.0;
    let mut residual = 0.0;
    for (&r, &e) in reference.iter().zip(estimate) {
        let t = alpha * r;
        target += t * t;
        residual += (e - t) * (e - t);
    }
    let db = if residual <= target * 1e-12 {
        SI_SDR_CAP
    } else if target == 0.0 {
        -SI_SDR_CAP
    } else {
        10.0 * libm::log10(target / residual)
    };
    Ok(db.clamp(-SI_SDR_CAP, SI_SDR_CAP))
}

/// Per-channel SI-SDR.
pub fn si_sdr_per_channel(reference: &[Vec<f64>], estimate: &[Vec<f64>]) -> Result<Vec<f64>> {
    if reference.is_empty() || reference.len() != estimate.len() {
        return Err(Error::Dimension(
            "reference and estimate channel counts differ".into(),
        ));
    }
    reference
        .iter()
        .zip(estimate)
        .map(|(r, e)| si_sdr_channel(r, e))
        .collect()
}

/// Multichannel SI-SDR: mean of the per-channel values.
pub fn si_sdr(reference: &[Vec<f64>], estimate: &[Vec<f64>]) -> Result<f64> {
    let per = si_sdr_per_channel(reference, estimate)?;
    Ok(per.iter().sum::<f64>() / per.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelScore {
    pub si_sdr_in: f64,
    pub si_sdr_out: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub si_sdr_in: f64,
    pub si_sdr_out: f64,
    pub improvement: f64,
    pub per_channel: Vec<ChannelScore>,
}

/// Scores the unprocessed `mixture` and the `estimate` against `reference`.
pub fn evaluate(
    reference: &[Vec<f64>],
    mixture: &[Vec<f64>],
    estimate: &[Vec<f64>],
) -> Result<EvalReport> {
    let input = si_sdr_per_channel(reference, mixture)?;
    let output = si_sdr_per_channel(reference, estimate)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let si_sdr_in = mean(&input);
    let si_sdr_out = mean(&output);
    Ok(EvalReport {
        si_sdr_in,
        si_sdr_out,
        improvement: si_sdr_out - si_sdr_in,
        per_channel: input
            .into_iter()
            .zip(output)
            .map(|(si_sdr_in, si_sdr_out)| ChannelScore {
                si_sdr_in,
                si_sdr_out,
            })
            .collect(),
    })
}

/// Median of a non-empty slice (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    })
}
