use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, FixedOffset, Timelike};
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::features::{self, BreakCalendar, CalendarOptions, Column};
use crate::formula::{Covariate, CovariateKind, CovariateRegistry, EngineeredCovariate};
use crate::{Error, Result};

/// A uniformly sampled series of the target and its covariates. Immutable
/// once built; subsets are expressed as [`DataView`]s so that engineered
/// features always see the full history.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDataset {
    timestamps: Vec<DateTime<FixedOffset>>,
    target: Vec<f64>,
    registry: CovariateRegistry,
    columns: IndexMap<String, Column>,
    step: i64,
}

impl TimeDataset {
    pub fn new(
        timestamps: Vec<DateTime<FixedOffset>>,
        target: Vec<f64>,
        covariates: Vec<(Covariate, Column)>,
    ) -> Result<Self> {
        if timestamps.is_empty() {
            return Err(Error::Data("dataset has no rows".into()));
        }
        if target.len() != timestamps.len() {
            return Err(Error::Dimension(format!(
                "{} timestamps but {} target values",
                timestamps.len(),
                target.len()
            )));
        }
        if let Some(i) = target.iter().position(|y| !y.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite target at {}",
                timestamps[i].to_rfc3339()
            )));
        }
        let step = features::uniform_step(&timestamps)?;
        let mut ds = TimeDataset {
            timestamps,
            target,
            registry: CovariateRegistry::default(),
            columns: IndexMap::new(),
            step,
        };
        for (c, col) in covariates {
            ds.insert(c, col)?;
        }
        Ok(ds)
    }

    /// Adds one covariate column after checking its length and values.
    pub fn insert(&mut self, covariate: Covariate, column: Column) -> Result<()> {
        if column.len() != self.len() {
            return Err(Error::Dimension(format!(
                "column `{}` has {} rows, dataset has {}",
                covariate.name,
                column.len(),
                self.len()
            )));
        }
        match (&covariate.kind, &column) {
            (CovariateKind::Categorical { levels }, Column::Categorical(v)) => {
                if let Some(i) = v.iter().position(|&c| c as usize > *levels) {
                    return Err(Error::Data(format!(
                        "column `{}` at {}: modality {} outside 0..={levels}",
                        covariate.name,
                        self.timestamps[i].to_rfc3339(),
                        v[i]
                    )));
                }
            }
            (CovariateKind::Categorical { .. }, _) | (_, Column::Categorical(_)) => {
                return Err(Error::Data(format!(
                    "column `{}` does not match its declared kind",
                    covariate.name
                )))
            }
            (_, Column::Numeric(v)) => {
                if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Data(format!(
                        "column `{}` at {}: non-finite value",
                        covariate.name,
                        self.timestamps[i].to_rfc3339()
                    )));
                }
            }
        }
        let name = covariate.name.clone();
        self.registry.insert(covariate)?;
        self.columns.insert(name, column);
        Ok(())
    }

    /// Appends derived calendar covariates.
    pub fn add_calendar(&mut self, options: &CalendarOptions) -> Result<()> {
        let derived = features::derive_calendar(&self.timestamps, options, &|name| {
            self.columns
                .get(name)
                .and_then(|c| c.as_numeric())
                .map(<[f64]>::to_vec)
        })?;
        for (c, col) in derived {
            self.insert(c, col)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn timestamps(&self) -> &[DateTime<FixedOffset>] {
        &self.timestamps
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn registry(&self) -> &CovariateRegistry {
        &self.registry
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.get(name)
    }

    /// Sampling step in seconds (0 for a single row).
    pub fn step_seconds(&self) -> i64 {
        self.step
    }

    /// Engineered columns over the whole series.
    pub fn engineer(&self, covariate: &EngineeredCovariate) -> Result<Vec<Column>> {
        let col = self
            .columns
            .get(&covariate.name)
            .ok_or_else(|| Error::MissingCovariate(covariate.name.clone()))?;
        features::engineer(col, &covariate.engineering)
    }

    pub fn into_view(self) -> DataView {
        DataView::full(Arc::new(self))
    }

    /// Writes `timestamp,<target>,<covariates...>`.
    pub fn write_csv<W: std::io::Write>(&self, target_name: &str, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["timestamp".to_string(), target_name.to_string()];
        header.extend(self.columns.keys().cloned());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec = vec![self.timestamps[i].to_rfc3339(), self.target[i].to_string()];
            for c in self.columns.values() {
                rec.push(match c {
                    Column::Numeric(v) => v[i].to_string(),
                    Column::Categorical(v) => v[i].to_string(),
                });
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// A subset of the rows of a shared [`TimeDataset`], in increasing order.
#[derive(Debug, Clone)]
pub struct DataView {
    source: Arc<TimeDataset>,
    rows: Arc<Vec<usize>>,
}

impl PartialEq for DataView {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.source, &other.source) && self.rows == other.rows
    }
}

impl DataView {
    pub fn full(source: Arc<TimeDataset>) -> Self {
        let rows = (0..source.len()).collect();
        DataView {
            source,
            rows: Arc::new(rows),
        }
    }

    pub fn with_rows(source: Arc<TimeDataset>, rows: Vec<usize>) -> Self {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        DataView {
            source,
            rows: Arc::new(rows),
        }
    }

    pub fn source(&self) -> &Arc<TimeDataset> {
        &self.source
    }

    /// Row positions in the source dataset.
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn registry(&self) -> &CovariateRegistry {
        self.source.registry()
    }

    pub fn timestamps(&self) -> Vec<DateTime<FixedOffset>> {
        self.rows
            .iter()
            .map(|&i| self.source.timestamps[i])
            .collect()
    }

    pub fn target(&self) -> Vec<f64> {
        self.rows.iter().map(|&i| self.source.target[i]).collect()
    }

    pub fn column(&self, name: &str) -> Result<Column> {
        self.source
            .column(name)
            .map(|c| c.gather(&self.rows))
            .ok_or_else(|| Error::MissingCovariate(name.to_string()))
    }

    /// Engineered columns computed over the full source history, then
    /// restricted to this view's rows.
    pub fn engineered(&self, covariate: &EngineeredCovariate) -> Result<Vec<Column>> {
        Ok(self
            .source
            .engineer(covariate)?
            .iter()
            .map(|c| c.gather(&self.rows))
            .collect())
    }

    /// Keeps the rows whose source index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(usize) -> bool) -> DataView {
        let rows = self.rows.iter().copied().filter(|&i| keep(i)).collect();
        DataView::with_rows(self.source.clone(), rows)
    }

    /// Rows whose local time falls in hour `h`.
    pub fn hour(&self, h: u32) -> DataView {
        let ts = &self.source.timestamps;
        self.filter(|i| ts[i].naive_local().hour() == h)
    }

    /// Rows with `from <= t < to`.
    pub fn between(&self, from: DateTime<FixedOffset>, to: DateTime<FixedOffset>) -> DataView {
        let ts = &self.source.timestamps;
        self.filter(|i| ts[i] >= from && ts[i] < to)
    }

    /// Rows present in either view (same source).
    pub fn union(&self, other: &DataView) -> Result<DataView> {
        if !Arc::ptr_eq(&self.source, &other.source) {
            return Err(Error::Data(
                "cannot join views of different datasets".into(),
            ));
        }
        let mut rows: Vec<usize> = self.rows.iter().chain(other.rows.iter()).copied().collect();
        rows.sort_unstable();
        rows.dedup();
        Ok(DataView::with_rows(self.source.clone(), rows))
    }
}

/// Which derived calendar covariates a schema asks for.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalendarSpec {
    pub hour: bool,
    pub day: bool,
    pub pos_year: bool,
    pub month: bool,
    pub weekend: bool,
    /// Adds `Break`; dates come from `break_calendar` when given.
    pub breaks: bool,
    pub break_calendar: Option<PathBuf>,
    pub daily_extremes: Vec<String>,
}

/// Column layout of an input CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default = "default_timestamp")]
    pub timestamp: String,
    #[serde(default = "default_target")]
    pub target: String,
    pub covariates: Vec<Covariate>,
    #[serde(default)]
    pub calendar: CalendarSpec,
}

fn default_timestamp() -> String {
    "timestamp".into()
}

fn default_target() -> String {
    "load".into()
}

impl Schema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut schema: Schema = serde_json::from_str(&text)?;
        if let (Some(cal), Some(dir)) = (&schema.calendar.break_calendar, path.parent()) {
            if cal.is_relative() {
                schema.calendar.break_calendar = Some(dir.join(cal));
            }
        }
        Ok(schema)
    }

    pub fn calendar_options(&self) -> Result<CalendarOptions> {
        let c = &self.calendar;
        let breaks = match (&c.break_calendar, c.breaks) {
            (Some(p), _) => Some(BreakCalendar::from_csv(p)?),
            (None, true) => Some(BreakCalendar::default()),
            (None, false) => None,
        };
        Ok(CalendarOptions {
            hour: c.hour,
            day: c.day,
            pos_year: c.pos_year,
            month: c.month,
            weekend: c.weekend,
            breaks,
            daily_extremes: c.daily_extremes.clone(),
        })
    }
}

/// Reads a CSV with a header row according to `schema`, then appends the
/// requested calendar covariates.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<TimeDataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file, schema)
}

pub fn read_csv<R: std::io::Read>(input: R, schema: &Schema) -> Result<TimeDataset> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Data(format!("missing column `{name}`")))
    };
    let ts_col = find(&schema.timestamp)?;
    let y_col = find(&schema.target)?;
    let cov_cols = schema
        .covariates
        .iter()
        .map(|c| find(&c.name))
        .collect::<Result<Vec<_>>>()?;

    let mut timestamps = Vec::new();
    let mut target = Vec::new();
    let mut values: Vec<Column> = schema
        .covariates
        .iter()
        .map(|c| match c.kind {
            CovariateKind::Categorical { .. } => Column::Categorical(Vec::new()),
            _ => Column::Numeric(Vec::new()),
        })
        .collect();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let line = r + 2;
        let cell = |c: usize| record.get(c).map(str::trim).unwrap_or("");
        let bad = |c: usize, what: &str| {
            Error::Data(format!(
                "row {line}, column `{}`: cannot parse `{}` as {what}",
                &headers[c],
                cell(c)
            ))
        };
        let t = features::parse_timestamp(cell(ts_col)).map_err(|_| bad(ts_col, "a timestamp"))?;
        if let Some(prev) = timestamps.last() {
            if t == *prev {
                return Err(Error::Data(format!(
                    "duplicated timestamp {}",
                    cell(ts_col)
                )));
            }
        }
        timestamps.push(t);
        target.push(
            cell(y_col)
                .parse::<f64>()
                .map_err(|_| bad(y_col, "a number"))?,
        );
        for (k, &c) in cov_cols.iter().enumerate() {
            match &mut values[k] {
                Column::Numeric(v) => v.push(cell(c).parse().map_err(|_| bad(c, "a number"))?),
                Column::Categorical(v) => {
                    v.push(cell(c).parse().map_err(|_| bad(c, "a modality code"))?)
                }
            }
        }
    }
    let covariates = schema.covariates.iter().cloned().zip(values).collect();
    let mut ds = TimeDataset::new(timestamps, target, covariates)?;
    ds.add_calendar(&schema.calendar_options()?)?;
    Ok(ds)
}
