//! Multi-station daily panels: CSV ingestion, seasonal splitting and
//! storm declustering.
//!
//! A [`PanelSample`] is an `n × m` matrix of daily amounts, rows are calendar
//! days in strictly increasing order and columns are stations. Missing cells
//! are flagged in a mask and never take part in exceedance counts.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PanelSample {
    n: usize,
    m: usize,
    /// Row-major; missing cells hold NaN.
    values: Vec<f64>,
    missing: Vec<bool>,
    days: Vec<NaiveDate>,
    stations: Vec<String>,
}

impl PanelSample {
    /// Builds a panel from rows of optional values. `None` marks a missing cell.
    pub fn new(days: Vec<NaiveDate>, stations: Vec<String>, rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let n = rows.len();
        let m = stations.len();
        if n == 0 {
            return Err(Error::Domain("panel needs at least one day".into()));
        }
        if m == 0 {
            return Err(Error::Domain("panel needs at least one station".into()));
        }
        if days.len() != n {
            return Err(Error::Domain(format!("{} day labels for {} rows", days.len(), n)));
        }
        for w in 1..n {
            if days[w] <= days[w - 1] {
                return Err(Error::Ordering {
                    row: w + 1,
                    date: days[w].to_string(),
                    previous: days[w - 1].to_string(),
                });
            }
        }
        let mut values = Vec::with_capacity(n * m);
        let mut missing = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Domain(format!(
                    "row {} has {} cells, expected {}",
                    i + 1,
                    row.len(),
                    m
                )));
            }
            for (j, cell) in row.iter().enumerate() {
                match *cell {
                    Some(x) => {
                        check_amount(x, i + 1, &stations[j])?;
                        values.push(x);
                        missing.push(false);
                    }
                    None => {
                        values.push(f64::NAN);
                        missing.push(true);
                    }
                }
            }
        }
        Ok(Self {
            n,
            m,
            values,
            missing,
            days,
            stations,
        })
    }

    /// Complete panel from a dense matrix, with consecutive synthetic dates
    /// starting 1900-01-01 and stations named `S1..Sm`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        let stations = (1..=m).map(|j| format!("S{j}")).collect();
        let days = consecutive_days(rows.len());
        let rows = rows.iter().map(|r| r.iter().copied().map(Some).collect()).collect();
        Self::new(days, stations, rows)
    }

    /// Dense row-major constructor used by the simulator; values must be
    /// complete and valid.
    pub(crate) fn from_dense_unchecked(n: usize, m: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n * m);
        Self {
            n,
            m,
            missing: vec![false; n * m],
            values,
            days: consecutive_days(n),
            stations: (1..=m).map(|j| format!("S{j}")).collect(),
        }
    }

    pub fn n_days(&self) -> usize {
        self.n
    }

    pub fn n_stations(&self) -> usize {
        self.m
    }

    pub fn days(&self) -> &[NaiveDate] {
        &self.days
    }

    pub fn station_ids(&self) -> &[String] {
        &self.stations
    }

    /// Value at day `i`, station `j` (both 0-based), or `None` if missing.
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let idx = i * self.m + j;
        if self.missing[idx] {
            None
        } else {
            Some(self.values[idx])
        }
    }

    #[inline]
    pub fn is_missing(&self, i: usize, j: usize) -> bool {
        self.missing[i * self.m + j]
    }

    /// Raw row; missing cells are NaN.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.m..(i + 1) * self.m]
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&b| b).count()
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    /// Number of non-missing cells.
    pub fn n_effective(&self) -> usize {
        self.n * self.m - self.missing_count()
    }

    pub(crate) fn check_station(&self, j: usize) -> Result<()> {
        if j >= self.m {
            Err(Error::StationIndex {
                index: j,
                stations: self.m,
            })
        } else {
            Ok(())
        }
    }

    /// Panel restricted to the given rows (which must be increasing).
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.m);
        let mut missing = Vec::with_capacity(rows.len() * self.m);
        let mut days = Vec::with_capacity(rows.len());
        for &i in rows {
            values.extend_from_slice(self.row(i));
            missing.extend_from_slice(&self.missing[i * self.m..(i + 1) * self.m]);
            days.push(self.days[i]);
        }
        Self {
            n: rows.len(),
            m: self.m,
            values,
            missing,
            days,
            stations: self.stations.clone(),
        }
    }

    /// Applies `f` to every non-missing value. `f` must map non-negative
    /// amounts to non-negative finite amounts.
    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = self.clone();
        for (idx, v) in out.values.iter_mut().enumerate() {
            if !out.missing[idx] {
                *v = f(*v);
                check_amount(*v, idx / self.m + 1, &self.stations[idx % self.m])?;
            }
        }
        Ok(out)
    }

    /// Reorders station columns: column `j` of the output is column `order[j]`
    /// of `self`.
    pub fn permute_stations(&self, order: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.m];
        if order.len() != self.m {
            return Err(Error::Domain("permutation length differs from station count".into()));
        }
        for &j in order {
            self.check_station(j)?;
            if std::mem::replace(&mut seen[j], true) {
                return Err(Error::Domain(format!("station {j} repeated in permutation")));
            }
        }
        let mut out = self.clone();
        for i in 0..self.n {
            for (dst, &src) in order.iter().enumerate() {
                out.values[i * self.m + dst] = self.values[i * self.m + src];
                out.missing[i * self.m + dst] = self.missing[i * self.m + src];
            }
        }
        out.stations = order.iter().map(|&j| self.stations[j].clone()).collect();
        Ok(out)
    }
}

fn check_amount(x: f64, row: usize, station: &str) -> Result<()> {
    if !x.is_finite() {
        return Err(Error::Domain(format!(
            "non-finite value at row {row}, station {station}"
        )));
    }
    if x < 0.0 {
        return Err(Error::Domain(format!(
            "negative rainfall {x} at row {row}, station {station}"
        )));
    }
    Ok(())
}

fn consecutive_days(n: usize) -> Vec<NaiveDate> {
    let start = NaiveDate::from_ymd_opt(1900, 1, 1).expect("valid date");
    start.iter_days().take(n).collect()
}

/// Column mapping for CSV ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanelSchema {
    pub date_column: String,
    /// Station columns to read; `None` reads every non-date column.
    pub stations: Option<Vec<String>>,
}

impl Default for PanelSchema {
    fn default() -> Self {
        Self {
            date_column: "date".into(),
            stations: None,
        }
    }
}

/// Reads a panel from a CSV file with a header row, an ISO-8601 date column
/// and one column per station. Empty cells are missing.
pub fn load_panel(path: impl AsRef<Path>, schema: &PanelSchema) -> Result<PanelSample> {
    let file = std::fs::File::open(path)?;
    read_panel(file, schema)
}

/// Same as [`load_panel`] but from any reader.
pub fn read_panel<R: std::io::Read>(reader: R, schema: &PanelSchema) -> Result<PanelSample> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let date_idx = headers
        .iter()
        .position(|h| h == schema.date_column)
        .ok_or_else(|| Error::Parse {
            row: 1,
            message: format!("no date column named {:?}", schema.date_column),
        })?;
    let station_cols: Vec<(usize, String)> = match &schema.stations {
        Some(names) => names
            .iter()
            .map(|name| {
                headers
                    .iter()
                    .position(|h| h == name)
                    .map(|c| (c, name.clone()))
                    .ok_or_else(|| Error::Parse {
                        row: 1,
                        message: format!("no station column named {name:?}"),
                    })
            })
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != date_idx)
            .map(|(c, h)| (c, h.to_string()))
            .collect(),
    };
    if station_cols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            message: "no station columns".into(),
        });
    }

    let mut days = Vec::new();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(days.len() + 2, |p| p.line() as usize);
        let raw_date = record.get(date_idx).unwrap_or("");
        let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d").map_err(|e| Error::Parse {
            row: line,
            message: format!("bad date {raw_date:?}: {e}"),
        })?;
        if let Some(prev) = days.last() {
            if date <= *prev {
                return Err(Error::Ordering {
                    row: line,
                    date: date.to_string(),
                    previous: prev.to_string(),
                });
            }
        }
        let mut row = Vec::with_capacity(station_cols.len());
        for (c, name) in &station_cols {
            let cell = record.get(*c).unwrap_or("");
            if cell.is_empty() {
                row.push(None);
                continue;
            }
            let x: f64 = cell.parse().map_err(|_| Error::Parse {
                row: line,
                message: format!("cannot parse {cell:?} in column {name:?}"),
            })?;
            if x < 0.0 {
                return Err(Error::Domain(format!(
                    "negative rainfall {x} at line {line}, station {name}"
                )));
            }
            row.push(Some(x));
        }
        days.push(date);
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 2,
            message: "no data rows".into(),
        });
    }
    PanelSample::new(days, station_cols.into_iter().map(|(_, name)| name).collect(), rows)
}

/// Months (1–12) making up a season.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeasonDefinition {
    included_months: BTreeSet<u32>,
    min_days_per_year: u32,
}

impl SeasonDefinition {
    pub const DEFAULT_MIN_DAYS: u32 = 150;

    pub fn new(months: impl IntoIterator<Item = u32>, min_days_per_year: u32) -> Result<Self> {
        let included_months: BTreeSet<u32> = months.into_iter().collect();
        if included_months.is_empty() {
            return Err(Error::Domain("season needs at least one month".into()));
        }
        if let Some(bad) = included_months.iter().find(|&&mo| !(1..=12).contains(&mo)) {
            return Err(Error::Domain(format!("month {bad} outside 1..=12")));
        }
        if min_days_per_year < 1 {
            return Err(Error::Domain("min_days_per_year must be at least 1".into()));
        }
        Ok(Self {
            included_months,
            min_days_per_year,
        })
    }

    /// November through March.
    pub fn winter() -> Self {
        Self::new([11, 12, 1, 2, 3], Self::DEFAULT_MIN_DAYS).expect("valid months")
    }

    /// May through September.
    pub fn summer() -> Self {
        Self::new(5..=9, Self::DEFAULT_MIN_DAYS).expect("valid months")
    }

    pub fn months(&self) -> impl Iterator<Item = u32> + '_ {
        self.included_months.iter().copied()
    }

    pub fn min_days_per_year(&self) -> u32 {
        self.min_days_per_year
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.included_months.contains(&date.month())
    }

    /// Year a date's season instance is attributed to. A season running
    /// across December (e.g. Nov–Mar) belongs to the year it ends in.
    pub fn season_year(&self, date: NaiveDate) -> i32 {
        let wraps =
            self.included_months.len() < 12 && self.included_months.contains(&12) && self.included_months.contains(&1);
        if !wraps {
            return date.year();
        }
        // First month of the run that ends in December.
        let mut start = 12;
        while start > 1 && self.included_months.contains(&(start - 1)) {
            start -= 1;
        }
        if date.month() >= start {
            date.year() + 1
        } else {
            date.year()
        }
    }

    /// Season instances with fewer retained days than `min_days_per_year`,
    /// as `(season_year, days)`. Diagnostic only, nothing is dropped.
    pub fn short_years(&self, panel: &PanelSample) -> Vec<(i32, usize)> {
        let mut counts: std::collections::BTreeMap<i32, usize> = Default::default();
        for &d in panel.days() {
            if self.contains(d) {
                *counts.entry(self.season_year(d)).or_default() += 1;
            }
        }
        counts
            .into_iter()
            .filter(|&(_, c)| c < self.min_days_per_year as usize)
            .collect()
    }
}

/// Keeps only the rows whose month belongs to the season.
pub fn split_season(panel: &PanelSample, season: &SeasonDefinition) -> Result<PanelSample> {
    let rows: Vec<usize> = (0..panel.n_days())
        .filter(|&i| season.contains(panel.days[i]))
        .collect();
    if rows.is_empty() {
        return Err(Error::EmptySeason {
            months: season.months().collect(),
        });
    }
    Ok(panel.select_rows(&rows))
}

#[derive(Debug, Clone)]
pub struct Declustered {
    pub panel: PanelSample,
    /// Days removed because they fell within the gap of a larger kept day.
    pub removed: usize,
    /// Days dropped because every station was missing.
    pub dropped_all_missing: usize,
}

/// Greedy storm declustering on station-wise daily maxima.
///
/// Days are visited by decreasing maximum over non-missing stations (equal
/// maxima: earlier date first). A day is removed when its calendar distance
/// to an already kept day is at most `gap_days`; all of its observations go.
pub fn decluster(panel: &PanelSample, gap_days: u32) -> Result<Declustered> {
    let mut order: Vec<(usize, f64)> = Vec::with_capacity(panel.n_days());
    let mut dropped_all_missing = 0;
    for i in 0..panel.n_days() {
        let max = panel
            .row(i)
            .iter()
            .zip(&panel.missing[i * panel.m..(i + 1) * panel.m])
            .filter(|(_, &miss)| !miss)
            .map(|(&x, _)| x)
            .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
        match max {
            Some(v) => order.push((i, v)),
            None => dropped_all_missing += 1,
        }
    }
    if dropped_all_missing > 0 {
        log::warn!("decluster: dropped {dropped_all_missing} day(s) with every station missing");
    }
    if order.is_empty() {
        return Err(Error::EmptyPool);
    }
    // Stable sort keeps calendar order among equal maxima.
    order.sort_by(|a, b| b.1.total_cmp(&a.1));

    let gap = i64::from(gap_days);
    let day_number = |i: usize| i64::from(panel.days[i].num_days_from_ce());
    let mut kept_days = BTreeSet::new();
    let mut kept_rows = Vec::with_capacity(order.len());
    for &(i, _) in &order {
        let d = day_number(i);
        if gap > 0 && kept_days.range(d - gap..=d + gap).next().is_some() {
            continue;
        }
        kept_days.insert(d);
        kept_rows.push(i);
    }
    let removed = order.len() - kept_rows.len();
    kept_rows.sort_unstable();
    Ok(Declustered {
        panel: panel.select_rows(&kept_rows),
        removed,
        dropped_all_missing,
    })
}
