//! Tracking error as a function of one tracker parameter.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;

use super::{track_source, FrameSource, SequenceReport, Stats};
use crate::tracker::TrackerConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Beta,
    Wt,
    /// Values written `PARTICLESxGENERATIONS`.
    Budget,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "beta" => Ok(SweepParam::Beta),
            "wt" => Ok(SweepParam::Wt),
            "budget" => Ok(SweepParam::Budget),
            other => Err(Error::Parse(format!("unknown sweep parameter {other:?}"))),
        }
    }
}

impl SweepParam {
    /// `base` with this parameter set to `value`.
    pub fn apply(self, base: &TrackerConfig, value: &str) -> Result<TrackerConfig> {
        let bad = || Error::Parse(format!("bad value {value:?} for {self:?}"));
        let mut c = *base;
        match self {
            SweepParam::Beta => c.beta = value.trim().parse().map_err(|_| bad())?,
            SweepParam::Wt => c.wt = value.trim().parse().map_err(|_| bad())?,
            SweepParam::Budget => {
                let (p, g) = value.trim().split_once('x').ok_or_else(bad)?;
                c.particles = p.parse().map_err(|_| bad())?;
                c.generations = g.parse().map_err(|_| bad())?;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: String,
    /// Per-run sequence means, run `k` seeded with `base.seed + k`.
    pub run_means: Vec<f64>,
    pub stats: Stats,
    pub reports: Vec<SequenceReport>,
    /// Runs in which tracking lost the scene.
    pub lost: usize,
}

/// Tracks `source` `runs` times for every value; all runs are independent.
pub fn sweep(
    source: &dyn FrameSource,
    param: SweepParam,
    values: &[String],
    base: &TrackerConfig,
    runs: usize,
) -> Result<Vec<SweepRow>> {
    let configs = values
        .iter()
        .map(|v| param.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..values.len())
        .flat_map(|i| (0..runs as u64).map(move |k| (i, k)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(i, k)| {
            let mut config = configs[i];
            config.seed = base.seed.wrapping_add(k);
            let outcome = track_source(source, &config)?;
            let report = outcome
                .report(source)?
                .ok_or_else(|| Error::Validation("sweeps need ground truth".into()))?;
            Ok((report, outcome.lost_at.is_some()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(values.len());
    let mut it = results.into_iter();
    for v in values {
        let (reports, lost): (Vec<_>, Vec<_>) = it.by_ref().take(runs).unzip();
        let run_means: Vec<f64> = reports.iter().map(|r| r.mean).collect();
        rows.push(SweepRow {
            value: v.clone(),
            stats: Stats::of(&run_means),
            run_means,
            reports,
            lost: lost.into_iter().filter(|&l| l).count(),
        });
    }
    Ok(rows)
}

pub fn sweep_csv(param: SweepParam, rows: &[SweepRow]) -> String {
    let name = match param {
        SweepParam::Beta => "beta",
        SweepParam::Wt => "wt",
        SweepParam::Budget => "budget",
    };
    let mut out = format!("{name},runs,mean_mm,std_mm,lost\n");
    for r in rows {
        writeln!(out, "{},{},{},{},{}", r.value, r.stats.n, r.stats.mean, r.stats.std, r.lost).unwrap();
    }
    out
}
