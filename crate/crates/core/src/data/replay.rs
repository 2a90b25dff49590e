//! Operational replay: weekly updates on delayed data, frozen weights within
//! each forecast horizon.

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveTime, TimeZone, Timelike, Weekday};
use serde::{Deserialize, Serialize};

use super::{grouped, metrics, DataView, Metrics};
use crate::adapt::KalmanState;
use crate::fit::FittedGam;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplaySpec {
    pub update_weekday: Weekday,
    pub update_time: NaiveTime,
    /// Observations strictly before `update − delay` are available at an
    /// update. The default (2 days 8 hours) releases Saturday 00:00 to
    /// Friday 23:00 of the week before a Monday 08:00 update.
    #[serde(with = "seconds")]
    pub delay: Duration,
    #[serde(with = "seconds")]
    pub horizon: Duration,
    /// First update no earlier than this instant.
    pub start: Option<DateTime<FixedOffset>>,
}

impl Default for ReplaySpec {
    fn default() -> Self {
        ReplaySpec {
            update_weekday: Weekday::Mon,
            update_time: NaiveTime::from_hms_opt(8, 0, 0).expect("valid time"),
            delay: Duration::hours(56),
            horizon: Duration::days(7),
            start: None,
        }
    }
}

mod seconds {
    use chrono::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i64(d.num_seconds())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::seconds(i64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayRow {
    pub timestamp: DateTime<FixedOffset>,
    pub actual: f64,
    pub forecast: f64,
    /// Weights frozen at the update that produced this forecast.
    pub theta: Vec<f64>,
    /// Index of the forecast block.
    pub block: usize,
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub rows: Vec<ReplayRow>,
    /// Update instant of each forecast block.
    pub updates: Vec<DateTime<FixedOffset>>,
    pub overall: Metrics,
    pub per_block: Vec<(usize, Metrics)>,
    pub per_hour: Vec<(u32, Metrics)>,
    /// Rows left out because their block runs past the end of the data.
    pub dropped: usize,
}

/// First instant at or after `t` falling on the update weekday and time.
pub fn first_update(t: DateTime<FixedOffset>, spec: &ReplaySpec) -> Result<DateTime<FixedOffset>> {
    let offset = *t.offset();
    let local = t.naive_local();
    let ahead = (7 + spec.update_weekday.num_days_from_monday() as i64
        - local.weekday().num_days_from_monday() as i64)
        % 7;
    let date = local.date() + Duration::days(ahead);
    let mut u = offset
        .from_local_datetime(&date.and_time(spec.update_time))
        .single()
        .ok_or_else(|| Error::Data("ambiguous update instant".into()))?;
    if u < t {
        u += Duration::days(7);
    }
    Ok(u)
}

/// Replays `data` week by week. `observe(row, update)` hands the filter the
/// target of view row `row` at update instant `update`.
pub fn replay_with(
    fitted: &FittedGam,
    q_diag: Option<&[f64]>,
    data: &DataView,
    spec: &ReplaySpec,
    mut observe: impl FnMut(usize, DateTime<FixedOffset>) -> Result<f64>,
) -> Result<ReplayOutput> {
    if spec.horizon <= Duration::zero() {
        return Err(Error::InvalidParameter(
            "replay horizon must be positive".into(),
        ));
    }
    if spec.delay < Duration::zero() {
        return Err(Error::InvalidParameter(
            "data delay cannot be negative".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Data("nothing to replay".into()));
    }
    let ts = data.timestamps();
    let y = data.target();
    let pred = fitted.predict_fixed(data)?;
    let k = fitted.formula.len();
    let mut state = KalmanState::new(q_diag.unwrap_or(&vec![0.0; k]))?;
    let source = data.source();
    let coverage_end = *source.timestamps().last().expect("non-empty")
        + Duration::seconds(source.step_seconds().max(1));
    let from = match spec.start {
        Some(s) if s > ts[0] => s,
        _ => ts[0],
    };
    let mut update = first_update(from, spec)?;
    if update + spec.horizon > coverage_end {
        return Err(Error::Data(
            "data does not cover one full replay cycle".into(),
        ));
    }
    let mut f = vec![0.0; k];
    let load = |f: &mut Vec<f64>, i: usize| {
        for (j, v) in f.iter_mut().enumerate() {
            *v = pred.contributions[(i, j)];
        }
    };
    let mut consumed = 0;
    let mut next = 0;
    let mut rows = Vec::new();
    let mut updates = Vec::new();
    while update + spec.horizon <= coverage_end {
        if q_diag.is_some() {
            let cutoff = update - spec.delay;
            while consumed < ts.len() && ts[consumed] < cutoff {
                load(&mut f, consumed);
                let row = consumed;
                state.step(pred.intercept, &f, |_| observe(row, update))?;
                consumed += 1;
            }
        }
        let end = update + spec.horizon;
        while next < ts.len() && ts[next] < update {
            next += 1;
        }
        let block = updates.len();
        let theta: Vec<f64> = state.theta.iter().copied().collect();
        while next < ts.len() && ts[next] < end {
            let forecast = if q_diag.is_some() {
                load(&mut f, next);
                state.forecast(pred.intercept, &f)
            } else {
                pred.values[next]
            };
            rows.push(ReplayRow {
                timestamp: ts[next],
                actual: y[next],
                forecast,
                theta: theta.clone(),
                block,
            });
            next += 1;
        }
        updates.push(update);
        update += Duration::days(7);
    }
    let dropped = ts.len() - next;
    if dropped > 0 {
        log::warn!(
            "{dropped} rows after {} dropped: incomplete final horizon",
            update.to_rfc3339()
        );
    }
    if rows.is_empty() {
        return Err(Error::Data("no rows fall inside a forecast horizon".into()));
    }
    let actual: Vec<f64> = rows.iter().map(|r| r.actual).collect();
    let forecast: Vec<f64> = rows.iter().map(|r| r.forecast).collect();
    let blocks: Vec<usize> = rows.iter().map(|r| r.block).collect();
    let hours: Vec<u32> = rows.iter().map(|r| r.timestamp.hour()).collect();
    Ok(ReplayOutput {
        overall: metrics(&actual, &forecast)?,
        per_block: grouped(&blocks, &actual, &forecast)?,
        per_hour: grouped(&hours, &actual, &forecast)?,
        rows,
        updates,
        dropped,
    })
}

pub fn weekly_replay(
    fitted: &FittedGam,
    q_diag: Option<&[f64]>,
    data: &DataView,
    spec: &ReplaySpec,
) -> Result<ReplayOutput> {
    let y = data.target();
    replay_with(fitted, q_diag, data, spec, |i, _| Ok(y[i]))
}

/// Writes `timestamp,actual,forecast,theta_1..theta_K`.
pub fn write_forecast_csv<W: std::io::Write>(rows: &[ReplayRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let k = rows.first().map_or(0, |r| r.theta.len());
    let mut header = vec!["timestamp".to_string(), "actual".into(), "forecast".into()];
    header.extend((1..=k).map(|j| format!("theta_{j}")));
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![
            r.timestamp.to_rfc3339(),
            r.actual.to_string(),
            r.forecast.to_string(),
        ];
        rec.extend(r.theta.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
