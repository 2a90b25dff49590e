//! Feature engineering applied to covariate columns, and calendar covariates.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Datelike, FixedOffset, NaiveDate, TimeZone, Timelike};
use serde::{Deserialize, Serialize};

use crate::formula::{Covariate, CovariateKind, FeatureEngineering};
use crate::{Error, Result};

/// Values of one column, aligned to dataset rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "values", rename_all = "kebab-case")]
pub enum Column {
    Numeric(Vec<f64>),
    /// Modality codes; 0 is the default modality.
    Categorical(Vec<u32>),
}

impl Column {
    pub fn len(&self) -> usize {
        match self {
            Column::Numeric(v) => v.len(),
            Column::Categorical(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match self {
            Column::Numeric(v) => Some(v),
            Column::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&[u32]> {
        match self {
            Column::Categorical(v) => Some(v),
            Column::Numeric(_) => None,
        }
    }

    /// Values at the given row positions.
    pub fn gather(&self, rows: &[usize]) -> Column {
        match self {
            Column::Numeric(v) => Column::Numeric(rows.iter().map(|&i| v[i]).collect()),
            Column::Categorical(v) => Column::Categorical(rows.iter().map(|&i| v[i]).collect()),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "smoothing factor {alpha} outside [0, 1]"
        )))
    }
}

/// `out[0] = x[0]`, `out[t] = alpha * out[t-1] + (1 - alpha) * x[t]`.
pub fn exp_smooth(series: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let Some(&first) = series.first() else {
        return Err(Error::InvalidParameter(
            "cannot smooth an empty series".into(),
        ));
    };
    let mut out = Vec::with_capacity(series.len());
    let mut s = first;
    out.push(s);
    for &x in &series[1..] {
        s = alpha * s + (1.0 - alpha) * x;
        out.push(s);
    }
    Ok(out)
}

/// Continues a smoothing recursion whose last state was `carry`.
pub fn exp_smooth_from(carry: f64, series: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let mut s = carry;
    Ok(series
        .iter()
        .map(|&x| {
            s = alpha * s + (1.0 - alpha) * x;
            s
        })
        .collect())
}

fn check_codes(series: &[u32], levels: usize) -> Result<()> {
    match series.iter().find(|&&c| c as usize > levels) {
        Some(c) => Err(Error::Data(format!(
            "modality code {c} outside 0..={levels}"
        ))),
        None => Ok(()),
    }
}

/// Keeps modality `c` where `select[c - 1]` is set and maps it to 0 otherwise.
pub fn select_categories(series: &[u32], select: &[bool]) -> Result<Vec<u32>> {
    check_codes(series, select.len())?;
    Ok(series
        .iter()
        .map(|&c| {
            if c > 0 && select[c as usize - 1] {
                c
            } else {
                0
            }
        })
        .collect())
}

/// Keeps the listed codes; every other code becomes 0.
pub fn day_set(series: &[u32], days: &[u32]) -> Vec<u32> {
    series
        .iter()
        .map(|&c| if days.contains(&c) { c } else { 0 })
        .collect()
}

/// Shifts the series by `offset` steps; positions before the offset take the
/// first value.
pub fn lag(series: &[f64], offset: usize) -> Vec<f64> {
    (0..series.len())
        .map(|t| series[t.saturating_sub(offset)])
        .collect()
}

/// Applies one engineering function to a full source column. Lag sets yield
/// one column per offset, everything else exactly one column.
pub fn engineer(column: &Column, engineering: &FeatureEngineering) -> Result<Vec<Column>> {
    let wrong = |what: &str| {
        Err(Error::Data(format!(
            "{what} applied to an incompatible column"
        )))
    };
    match (engineering, column) {
        (FeatureEngineering::Identity, c) => Ok(vec![c.clone()]),
        (FeatureEngineering::ExpSmooth { alpha }, Column::Numeric(v)) => {
            Ok(vec![Column::Numeric(exp_smooth(v, *alpha)?)])
        }
        (FeatureEngineering::LagSet { offsets }, Column::Numeric(v)) => Ok(offsets
            .iter()
            .map(|&o| Column::Numeric(lag(v, o)))
            .collect()),
        (FeatureEngineering::CategorySelect { select }, Column::Categorical(v)) => {
            Ok(vec![Column::Categorical(select_categories(v, select)?)])
        }
        (FeatureEngineering::DaySet { days }, Column::Categorical(v)) => {
            Ok(vec![Column::Categorical(day_set(v, days))])
        }
        (FeatureEngineering::ExpSmooth { .. }, _) => wrong("exponential smoothing"),
        (FeatureEngineering::LagSet { .. }, _) => wrong("lag set"),
        (FeatureEngineering::CategorySelect { .. } | FeatureEngineering::DaySet { .. }, _) => {
            wrong("category selection")
        }
    }
}

/// Dated break periods (school holidays, clock-change weeks, ...). Labels map
/// to codes `1..=labels.len()`; undated days get the default code 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakCalendar {
    pub labels: Vec<String>,
    pub days: BTreeMap<NaiveDate, u32>,
}

pub const DEFAULT_BREAK_LABELS: [&str; 5] = [
    "winter-time",
    "summer-time",
    "august",
    "christmas",
    "other-school-holiday",
];

impl Default for BreakCalendar {
    fn default() -> Self {
        BreakCalendar {
            labels: DEFAULT_BREAK_LABELS.iter().map(|s| s.to_string()).collect(),
            days: BTreeMap::new(),
        }
    }
}

impl BreakCalendar {
    /// Reads a `date,label` CSV. Labels beyond the default list are appended
    /// in order of first appearance.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        Self::from_reader(&mut reader)
    }

    pub fn from_reader<R: std::io::Read>(reader: &mut csv::Reader<R>) -> Result<Self> {
        let mut cal = BreakCalendar::default();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            let (Some(date), Some(label)) = (record.get(0), record.get(1)) else {
                return Err(Error::Data(format!(
                    "break calendar row {}: expected `date,label`",
                    i + 2
                )));
            };
            let date = NaiveDate::parse_from_str(date.trim(), "%Y-%m-%d").map_err(|e| {
                Error::Data(format!(
                    "break calendar row {}: bad date `{date}`: {e}",
                    i + 2
                ))
            })?;
            let code = cal.code_for(label.trim());
            cal.days.insert(date, code);
        }
        Ok(cal)
    }

    fn code_for(&mut self, label: &str) -> u32 {
        match self.labels.iter().position(|l| l == label) {
            Some(p) => p as u32 + 1,
            None => {
                self.labels.push(label.to_string());
                self.labels.len() as u32
            }
        }
    }

    pub fn code(&self, date: NaiveDate) -> u32 {
        self.days.get(&date).copied().unwrap_or(0)
    }
}

/// Which calendar covariates to derive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalendarOptions {
    pub hour: bool,
    pub day: bool,
    pub pos_year: bool,
    pub month: bool,
    pub weekend: bool,
    pub breaks: Option<BreakCalendar>,
    /// Numeric columns for which `{name}Max` / `{name}Min` daily extremes are added.
    pub daily_extremes: Vec<String>,
}

impl CalendarOptions {
    pub fn all(breaks: Option<BreakCalendar>) -> Self {
        CalendarOptions {
            hour: true,
            day: true,
            pos_year: true,
            month: true,
            weekend: true,
            breaks,
            daily_extremes: Vec::new(),
        }
    }
}

/// Position in the civil year: 0 at Jan 1 00:00, 1 at Dec 31 23:59 (and
/// clamped to 1 for the last minute).
pub fn position_in_year(t: &DateTime<FixedOffset>) -> f64 {
    let local = t.naive_local();
    let year = local.year();
    let start = NaiveDate::from_ymd_opt(year, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let end = NaiveDate::from_ymd_opt(year + 1, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let elapsed = (local - start).num_milliseconds() as f64 / 1000.0;
    let span = (end - start).num_seconds() as f64 - 60.0;
    (elapsed / span).clamp(0.0, 1.0)
}

/// Checks that timestamps are strictly increasing with a constant step and
/// returns the step in seconds.
pub fn uniform_step(timestamps: &[DateTime<FixedOffset>]) -> Result<i64> {
    if timestamps.len() < 2 {
        return Ok(0);
    }
    let step = (timestamps[1] - timestamps[0]).num_seconds();
    for w in timestamps.windows(2) {
        let d = (w[1] - w[0]).num_seconds();
        if d <= 0 {
            return Err(Error::Data(format!(
                "timestamps not strictly increasing at {}",
                w[1].to_rfc3339()
            )));
        }
        if d != step {
            return Err(Error::Data(format!(
                "non-uniform time step at {} ({d}s instead of {step}s)",
                w[1].to_rfc3339()
            )));
        }
    }
    Ok(step)
}

/// Derives calendar covariates from local (fixed-offset) timestamps.
/// `numeric` supplies the source columns named in `daily_extremes`.
pub fn derive_calendar(
    timestamps: &[DateTime<FixedOffset>],
    options: &CalendarOptions,
    numeric: &dyn Fn(&str) -> Option<Vec<f64>>,
) -> Result<Vec<(Covariate, Column)>> {
    uniform_step(timestamps)?;
    let local: Vec<_> = timestamps.iter().map(|t| t.naive_local()).collect();
    let mut out = Vec::new();
    let mut push = |name: &str, kind: CovariateKind, column: Column| {
        out.push((
            Covariate {
                name: name.to_string(),
                kind,
            },
            column,
        ));
    };
    if options.hour {
        let v = local
            .iter()
            .map(|t| t.hour() as f64 + t.minute() as f64 / 60.0)
            .collect();
        push(
            "Hour",
            CovariateKind::Cyclic { period: 24.0 },
            Column::Numeric(v),
        );
    }
    if options.day {
        let v = local
            .iter()
            .map(|t| t.weekday().number_from_monday())
            .collect();
        push(
            "Day",
            CovariateKind::Categorical { levels: 7 },
            Column::Categorical(v),
        );
    }
    if options.pos_year {
        let v = timestamps.iter().map(position_in_year).collect();
        push(
            "PosYear",
            CovariateKind::Cyclic { period: 1.0 },
            Column::Numeric(v),
        );
    }
    if options.month {
        let v = local.iter().map(|t| t.month()).collect();
        push(
            "Month",
            CovariateKind::Categorical { levels: 12 },
            Column::Categorical(v),
        );
    }
    if options.weekend {
        let v = local
            .iter()
            .map(|t| {
                if t.weekday().number_from_monday() >= 6 {
                    2
                } else {
                    1
                }
            })
            .collect();
        push(
            "Weekend",
            CovariateKind::Categorical { levels: 2 },
            Column::Categorical(v),
        );
    }
    if let Some(cal) = &options.breaks {
        let v = local.iter().map(|t| cal.code(t.date())).collect();
        push(
            "Break",
            CovariateKind::Categorical {
                levels: cal.labels.len().max(2),
            },
            Column::Categorical(v),
        );
    }
    for name in &options.daily_extremes {
        let values = numeric(name).ok_or_else(|| Error::MissingCovariate(name.clone()))?;
        let mut per_day: BTreeMap<NaiveDate, (f64, f64)> = BTreeMap::new();
        for (t, &x) in local.iter().zip(&values) {
            let e = per_day
                .entry(t.date())
                .or_insert((f64::NEG_INFINITY, f64::INFINITY));
            e.0 = e.0.max(x);
            e.1 = e.1.min(x);
        }
        let max = local.iter().map(|t| per_day[&t.date()].0).collect();
        let min = local.iter().map(|t| per_day[&t.date()].1).collect();
        push(
            &format!("{name}Max"),
            CovariateKind::Numeric,
            Column::Numeric(max),
        );
        push(
            &format!("{name}Min"),
            CovariateKind::Numeric,
            Column::Numeric(min),
        );
    }
    Ok(out)
}

/// Parses an RFC 3339 timestamp, keeping its UTC offset.
pub fn parse_timestamp(s: &str) -> Result<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(s.trim())
        .or_else(|_| DateTime::parse_from_str(s.trim(), "%Y-%m-%d %H:%M:%S%:z"))
        .map_err(|e| Error::Data(format!("bad timestamp `{s}`: {e}")))
}

/// Builds a timestamp from local civil time at a fixed offset.
pub fn local_time(
    offset: FixedOffset,
    y: i32,
    m: u32,
    d: u32,
    h: u32,
    min: u32,
) -> Option<DateTime<FixedOffset>> {
    offset.with_ymd_and_hms(y, m, d, h, min, 0).single()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn utc() -> FixedOffset {
        FixedOffset::east_opt(0).unwrap()
    }

    /// Closed form: sum_{s<t} (1-a) a^s x[t-s] + a^t x[0].
    fn closed_form(x: &[f64], a: f64) -> Vec<f64> {
        (0..x.len())
            .map(|t| {
                let mut acc = a.powi(t as i32) * x[0];
                for s in 0..t {
                    acc += (1.0 - a) * a.powi(s as i32) * x[t - s];
                }
                acc
            })
            .collect()
    }

    #[test]
    fn smoothing_examples() {
        let x = [10.0, 20.0, 30.0];
        assert_eq!(exp_smooth(&x, 0.0).unwrap(), x.to_vec());
        assert_eq!(exp_smooth(&x, 1.0).unwrap(), vec![10.0; 3]);
        let half = exp_smooth(&x, 0.5).unwrap();
        assert_eq!(half, closed_form(&x, 0.5));
        assert_eq!(half, vec![10.0, 15.0, 22.5]);
        assert!(exp_smooth(&[], 0.5).is_err());
        assert!(exp_smooth(&x, 1.5).is_err());
    }

    #[test]
    fn carry_continues_the_recursion() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let full = exp_smooth(&x, 0.8).unwrap();
        let tail = exp_smooth_from(full[19], &x[20..], 0.8).unwrap();
        assert_eq!(&full[20..], &tail[..]);
    }

    #[test]
    fn selection_examples() {
        let v = [true, false, true];
        assert_eq!(
            select_categories(&[1, 2, 3, 1], &v).unwrap(),
            vec![1, 0, 3, 1]
        );
        assert_eq!(
            select_categories(&[0, 1, 2], &[true; 3]).unwrap(),
            vec![0, 1, 2]
        );
        assert!(select_categories(&[4], &v).is_err());
        assert_eq!(day_set(&[1, 6, 7, 3, 0], &[6, 7]), vec![0, 6, 7, 0, 0]);
    }

    #[test]
    fn lag_pads_with_first_value() {
        assert_eq!(lag(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.0, 1.0, 1.0, 2.0]);
        assert_eq!(lag(&[1.0, 2.0], 0), vec![1.0, 2.0]);
        assert_eq!(lag(&[1.0, 2.0], 5), vec![1.0, 1.0]);
    }

    #[test]
    fn position_in_year_anchors() {
        let t0 = local_time(utc(), 2023, 1, 1, 0, 0).unwrap();
        assert_eq!(position_in_year(&t0), 0.0);
        let t1 = local_time(utc(), 2023, 12, 31, 23, 59).unwrap();
        assert_eq!(position_in_year(&t1), 1.0);
        let leap = local_time(utc(), 2024, 12, 31, 23, 59).unwrap();
        assert_eq!(position_in_year(&leap), 1.0);
        // Elapsed-seconds oracle: Jul 2 12:00 is day 182.5 of 365.
        let mid = local_time(utc(), 2023, 7, 2, 12, 0).unwrap();
        let oracle = 182.5 * 86400.0 / (365.0 * 86400.0 - 60.0);
        assert!((position_in_year(&mid) - oracle).abs() < 1e-12);
        assert!((position_in_year(&mid) - 0.5).abs() < 1e-4);
        // Local civil time, not UTC.
        let paris = FixedOffset::east_opt(3600).unwrap();
        let t = local_time(paris, 2023, 1, 1, 0, 0).unwrap();
        assert_eq!(position_in_year(&t), 0.0);
    }

    #[test]
    fn calendar_columns() {
        // 2024-01-05 is a Friday.
        let ts: Vec<_> = (0..72)
            .map(|h| local_time(utc(), 2024, 1, 5, 0, 0).unwrap() + chrono::Duration::hours(h))
            .collect();
        let mut cal = BreakCalendar::default();
        let code = cal.code_for("christmas");
        cal.days
            .insert(NaiveDate::from_ymd_opt(2024, 1, 6).unwrap(), code);
        let mut opts = CalendarOptions::all(Some(cal));
        opts.daily_extremes = vec!["Temp".into()];
        let temp: Vec<f64> = (0..72).map(|h| h as f64).collect();
        let cols = derive_calendar(&ts, &opts, &|n| (n == "Temp").then(|| temp.clone())).unwrap();
        let get = |n: &str| cols.iter().find(|(c, _)| c.name == n).unwrap().1.clone();
        let day = get("Day");
        let day = day.as_categorical().unwrap();
        assert_eq!((day[0], day[24], day[48]), (5, 6, 7));
        let weekend = get("Weekend");
        assert_eq!(weekend.as_categorical().unwrap()[30], 2);
        assert_eq!(weekend.as_categorical().unwrap()[3], 1);
        let brk = get("Break");
        assert_eq!(brk.as_categorical().unwrap()[23], 0);
        assert_eq!(brk.as_categorical().unwrap()[24], 4);
        let hour = get("Hour");
        assert_eq!(hour.as_numeric().unwrap()[29], 5.0);
        assert_eq!(get("TempMax").as_numeric().unwrap()[0], 23.0);
        assert_eq!(get("TempMin").as_numeric().unwrap()[30], 24.0);
    }

    #[test]
    fn calendar_rejects_irregular_timestamps() {
        let t = local_time(utc(), 2024, 1, 1, 0, 0).unwrap();
        let h = chrono::Duration::hours(1);
        let opts = CalendarOptions::all(None);
        assert!(derive_calendar(&[t, t + h, t + h * 3], &opts, &|_| None).is_err());
        assert!(derive_calendar(&[t, t], &opts, &|_| None).is_err());
    }

    #[test]
    fn break_calendar_appends_new_labels() {
        let text = "date,label\n2024-02-10,winter-holiday\n2024-08-01,august\n";
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let cal = BreakCalendar::from_reader(&mut r).unwrap();
        assert_eq!(cal.labels.len(), 6);
        assert_eq!(cal.code(NaiveDate::from_ymd_opt(2024, 2, 10).unwrap()), 6);
        assert_eq!(cal.code(NaiveDate::from_ymd_opt(2024, 8, 1).unwrap()), 3);
        assert_eq!(cal.code(NaiveDate::from_ymd_opt(2024, 8, 2).unwrap()), 0);
    }

    proptest! {
        #[test]
        fn smoothing_matches_closed_form(
            x in prop::collection::vec(-1e3..1e3f64, 1..200),
            a in prop::sample::select(vec![0.0, 0.25, 0.5, 0.9, 0.99, 1.0]),
        ) {
            let s = exp_smooth(&x, a).unwrap();
            let c = closed_form(&x, a);
            let scale = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for (u, v) in s.iter().zip(&c) {
                prop_assert!((u - v).abs() <= 1e-10 * scale);
            }
        }

        #[test]
        fn smoothing_stays_within_range(
            x in prop::collection::vec(-1e3..1e3f64, 1..200),
            a in 0.0..=1.0f64,
        ) {
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in exp_smooth(&x, a).unwrap() {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }

        #[test]
        fn selection_is_idempotent(
            (select, series) in (2usize..8).prop_flat_map(|m| (
                prop::collection::vec(any::<bool>(), m),
                prop::collection::vec(0..=m as u32, 0..50),
            ))
        ) {
            let once = select_categories(&series, &select).unwrap();
            let twice = select_categories(&once, &select).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
