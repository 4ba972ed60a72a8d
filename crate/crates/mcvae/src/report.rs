//! Evaluation reports in JSON and CSV.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mcvae_core::metrics::{self, EvalReport};
use serde::{Deserialize, Serialize};

use crate::error::{AppError, AppResult};
use crate::wav;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub channel: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub si_sdr_in: Option<f64>,
    pub si_sdr_out: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemReport {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub si_sdr_in: Option<f64>,
    pub si_sdr_out: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub improvement: Option<f64>,
    pub per_channel: Vec<ChannelEntry>,
}

impl ItemReport {
    pub fn from_eval(name: &str, r: &EvalReport) -> Self {
        Self {
            name: name.into(),
            si_sdr_in: Some(r.si_sdr_in),
            si_sdr_out: r.si_sdr_out,
            improvement: Some(r.improvement),
            per_channel: r
                .per_channel
                .iter()
                .enumerate()
                .map(|(i, c)| ChannelEntry {
                    channel: i,
                    si_sdr_in: Some(c.si_sdr_in),
                    si_sdr_out: c.si_sdr_out,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub median: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            median: metrics::median(values)?,
            mean: values.iter().sum::<f64>() / values.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub items: Vec<ItemReport>,
    pub si_sdr_out: Option<Summary>,
    pub improvement: Option<Summary>,
}

impl Report {
    pub fn new(items: Vec<ItemReport>) -> Self {
        let out: Vec<f64> = items.iter().map(|i| i.si_sdr_out).collect();
        let imp: Vec<f64> = items.iter().filter_map(|i| i.improvement).collect();
        Self {
            si_sdr_out: Summary::of(&out),
            improvement: if imp.len() == items.len() {
                Summary::of(&imp)
            } else {
                None
            },
            items,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,channel,si_sdr_in,si_sdr_out,improvement\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for it in &self.items {
            let _ = writeln!(
                s,
                "{},all,{},{},{}",
                it.name,
                opt(it.si_sdr_in),
                it.si_sdr_out,
                opt(it.improvement)
            );
            for c in &it.per_channel {
                let imp = c.si_sdr_in.map(|i| c.si_sdr_out - i);
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    it.name,
                    c.channel,
                    opt(c.si_sdr_in),
                    c.si_sdr_out,
                    opt(imp)
                );
            }
        }
        s
    }

    pub fn write_json(&self, path: &Path) -> AppResult<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text).map_err(|e| AppError::io(path, e))
    }

    pub fn write_csv(&self, path: &Path) -> AppResult<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| AppError::io(path, e))
    }
}

/// Entry of an evaluation list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub reference: PathBuf,
    pub estimate: PathBuf,
    #[serde(default)]
    pub mixture: Option<PathBuf>,
}

fn trim(mut channels: Vec<Vec<f64>>, len: usize) -> Vec<Vec<f64>> {
    channels.iter_mut().for_each(|c| c.truncate(len));
    channels
}

/// Scores one estimate file against its reference (and the unprocessed
/// mixture, when given). Signals are compared over their common length.
pub fn evaluate_files(item: &EvalItem) -> AppResult<ItemReport> {
    let reference = wav::read(&item.reference)?;
    let estimate = wav::read(&item.estimate)?;
    let mixture = item.mixture.as_deref().map(wav::read).transpose()?;
    let mut len = reference.len().min(estimate.len());
    if let Some(m) = &mixture {
        len = len.min(m.len());
    }
    let r = trim(reference.channels, len);
    let e = trim(estimate.channels, len);
    let name = item.estimate.display().to_string();
    match mixture {
        Some(m) => {
            let m = trim(m.channels, len);
            Ok(ItemReport::from_eval(
                &name,
                &metrics::evaluate(&r, &m, &e)?,
            ))
        }
        None => {
            let per = metrics::si_sdr_per_channel(&r, &e)?;
            Ok(ItemReport {
                name,
                si_sdr_in: None,
                si_sdr_out: per.iter().sum::<f64>() / per.len() as f64,
                improvement: None,
                per_channel: per
                    .into_iter()
                    .enumerate()
                    .map(|(channel, si_sdr_out)| ChannelEntry {
                        channel,
                        si_sdr_in: None,
                        si_sdr_out,
                    })
                    .collect(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_and_csv() {
        let items = vec![
            ItemReport {
                name: "a".into(),
                si_sdr_in: Some(0.0),
                si_sdr_out: 5.0,
                improvement: Some(5.0),
                per_channel: vec![],
            },
            ItemReport {
                name: "b".into(),
                si_sdr_in: Some(1.0),
                si_sdr_out: 2.0,
                improvement: Some(1.0),
                per_channel: vec![ChannelEntry {
                    channel: 0,
                    si_sdr_in: Some(1.0),
                    si_sdr_out: 2.0,
                }],
            },
        ];
        let r = Report::new(items);
        assert_eq!(r.improvement.unwrap().median, 3.0);
        assert_eq!(r.si_sdr_out.unwrap().mean, 3.5);
        let csv = r.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.contains("b,0,1,2,1"));
    }
}
