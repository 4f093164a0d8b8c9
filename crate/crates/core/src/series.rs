//! Monthly time series with explicit missing values.
//!
//! A [`Series`] always has a contiguous monthly index; gaps in the data are
//! stored as `None` rather than as holes in the index. All operations here
//! return new values and never mutate their input.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A calendar month encoded as `year * 12 + (month - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MonthIndex(i64);

impl MonthIndex {
    pub fn new(year: i64, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::InvalidParameter(format!("month {month} outside 1..=12")));
        }
        Ok(MonthIndex(year * 12 + i64::from(month) - 1))
    }

    pub fn from_encoded(encoded: i64) -> Self {
        MonthIndex(encoded)
    }

    pub fn encoded(self) -> i64 {
        self.0
    }

    pub fn year(self) -> i64 {
        self.0.div_euclid(12)
    }

    pub fn month(self) -> u32 {
        (self.0.rem_euclid(12) + 1) as u32
    }

    pub fn offset(self, months: i64) -> Self {
        MonthIndex(self.0 + months)
    }
}

impl fmt::Display for MonthIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year(), self.month())
    }
}

impl FromStr for MonthIndex {
    type Err = Error;

    /// Parses `YYYY-MM`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::BadDate {
            value: s.to_string(),
            line: 0,
        };
        let (y, m) = s.trim().split_once('-').ok_or_else(bad)?;
        if y.is_empty() || m.is_empty() || m.len() > 2 {
            return Err(bad());
        }
        let year: i64 = y.parse().map_err(|_| bad())?;
        let month: u32 = m.parse().map_err(|_| bad())?;
        MonthIndex::new(year, month).map_err(|_| bad())
    }
}

impl From<MonthIndex> for String {
    fn from(m: MonthIndex) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for MonthIndex {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A named monthly series. The index is `start, start+1, ..., start+len-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    name: String,
    start: MonthIndex,
    values: Vec<Option<f64>>,
}

impl Series {
    pub fn new(name: impl Into<String>, start: MonthIndex, values: Vec<Option<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySelection("series must have at least one element".into()));
        }
        Ok(Series {
            name: name.into(),
            start,
            values,
        })
    }

    /// Fully observed series starting at an arbitrary fixed month.
    pub fn from_values(name: impl Into<String>, values: &[f64]) -> Result<Self> {
        Series::new(
            name,
            MonthIndex::from_encoded(0),
            values.iter().map(|&v| Some(v)).collect(),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn start(&self) -> MonthIndex {
        self.start
    }

    pub fn end(&self) -> MonthIndex {
        self.start.offset(self.values.len() as i64 - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values.get(i).copied().flatten()
    }

    pub fn month_at(&self, i: usize) -> MonthIndex {
        self.start.offset(i as i64)
    }

    pub fn index(&self) -> impl Iterator<Item = MonthIndex> + '_ {
        (0..self.values.len()).map(|i| self.month_at(i))
    }

    pub fn count_observed(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }

    pub fn same_index(&self, other: &Series) -> bool {
        self.start == other.start && self.len() == other.len()
    }

    /// The observed stretch between the first and last non-missing value.
    ///
    /// Returns the position of the first observation and the values, or an
    /// error if a missing value sits strictly inside that stretch.
    pub fn observed_support(&self) -> Result<(usize, Vec<f64>)> {
        let first = self
            .values
            .iter()
            .position(|v| v.is_some())
            .ok_or_else(|| Error::InsufficientData(format!("{} has no observations", self.name)))?;
        let last = self.values.iter().rposition(|v| v.is_some()).unwrap_or(first);
        let mut out = Vec::with_capacity(last - first + 1);
        for (i, v) in self.values[first..=last].iter().enumerate() {
            match v {
                Some(x) => out.push(*x),
                None => {
                    return Err(Error::InsufficientData(format!(
                        "{} has an interior missing value at {}",
                        self.name,
                        self.month_at(first + i)
                    )))
                }
            }
        }
        Ok((first, out))
    }

    /// Fills interior gaps on the straight line between the bracketing
    /// observations. Leading and trailing gaps stay missing.
    pub fn interpolate_linear(&self) -> Result<Series> {
        if self.count_observed() < 2 {
            return Err(Error::InsufficientData(format!(
                "interpolation of {} needs at least 2 observed values",
                self.name
            )));
        }
        let mut values = self.values.clone();
        let mut prev: Option<(usize, f64)> = None;
        for i in 0..values.len() {
            if let Some(v) = self.values[i] {
                if let Some((j, pv)) = prev {
                    let span = (i - j) as f64;
                    for (k, slot) in values.iter_mut().enumerate().take(i).skip(j + 1) {
                        let w = (k - j) as f64 / span;
                        *slot = Some(pv + w * (v - pv));
                    }
                }
                prev = Some((i, v));
            }
        }
        Ok(Series {
            name: self.name.clone(),
            start: self.start,
            values,
        })
    }

    /// `order`-th difference; the first `order` values become missing.
    pub fn diff(&self, order: usize) -> Result<Series> {
        if order == 0 {
            return Err(Error::InvalidParameter("difference order must be >= 1".into()));
        }
        if self.len() <= order {
            return Err(Error::InsufficientData(format!(
                "{} has length {} <= difference order {order}",
                self.name,
                self.len()
            )));
        }
        let mut cur = self.values.clone();
        for _ in 0..order {
            let next: Vec<Option<f64>> = (0..cur.len())
                .map(|t| match (t.checked_sub(1).and_then(|p| cur[p]), cur[t]) {
                    (Some(prev), Some(now)) => Some(now - prev),
                    _ => None,
                })
                .collect();
            cur = next;
        }
        Ok(Series {
            name: format!("D{}.{}", if order == 1 { String::new() } else { order.to_string() }, self.name),
            start: self.start,
            values: cur,
        })
    }

    /// `result[t] = self[t - k]`; the index is unchanged.
    pub fn lag(&self, k: usize) -> Result<Series> {
        if k == 0 {
            return Err(Error::InvalidParameter("lag must be >= 1".into()));
        }
        let values = (0..self.len())
            .map(|t| t.checked_sub(k).and_then(|s| self.values[s]))
            .collect();
        Ok(Series {
            name: format!("L{}.{}", if k == 1 { String::new() } else { k.to_string() }, self.name),
            start: self.start,
            values,
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Series {
        Series {
            name: self.name.clone(),
            start: self.start,
            values: self.values.iter().map(|v| v.map(&f)).collect(),
        }
    }
}

/// Checks that every series shares the first one's index.
pub fn check_aligned(series: &[&Series]) -> Result<()> {
    if let Some((first, rest)) = series.split_first() {
        for s in rest {
            if !first.same_index(s) {
                return Err(Error::IndexMismatch(format!(
                    "{} spans {}..{} but {} spans {}..{}",
                    first.name(),
                    first.start(),
                    first.end(),
                    s.name(),
                    s.start(),
                    s.end()
                )));
            }
        }
    }
    Ok(())
}

/// How the month of each CSV row is encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DateSpec {
    /// One column holding `YYYY-MM`.
    YearMonth { column: String },
    /// Separate numeric year and month columns.
    TwoColumn { year: String, month: String },
}

impl DateSpec {
    pub fn iso(column: impl Into<String>) -> Self {
        DateSpec::YearMonth { column: column.into() }
    }

    pub fn two_column(year: impl Into<String>, month: impl Into<String>) -> Self {
        DateSpec::TwoColumn {
            year: year.into(),
            month: month.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: PathBuf,
    pub date: DateSpec,
    pub value_cols: Vec<String>,
    /// Data rows in the file, including rows dropped for an empty date.
    pub raw_rows: usize,
}

/// Named series sharing one monthly index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    columns: Vec<Series>,
    provenance: Provenance,
}

impl Dataset {
    /// Bundles aligned series built in memory.
    pub fn from_series(columns: Vec<Series>, provenance: Provenance) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::EmptySelection("dataset needs at least one column".into()));
        }
        check_aligned(&columns.iter().collect::<Vec<_>>())?;
        Ok(Dataset { columns, provenance })
    }

    pub fn columns(&self) -> &[Series] {
        &self.columns
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn column(&self, name: &str) -> Result<&Series> {
        self.columns
            .iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn start(&self) -> MonthIndex {
        self.columns[0].start()
    }

    pub fn len(&self) -> usize {
        self.columns[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns[0].is_empty()
    }

    /// Writes the dataset as CSV with a `date` column in `YYYY-MM` form.
    /// Missing values are empty cells; numbers use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let to_err = |e: csv::Error| Error::Csv {
            path: PathBuf::from("<output>"),
            source: e,
        };
        let mut header = vec!["date".to_string()];
        header.extend(self.columns.iter().map(|s| s.name().to_string()));
        w.write_record(&header).map_err(to_err)?;
        for i in 0..self.len() {
            let mut rec = vec![self.start().offset(i as i64).to_string()];
            for s in &self.columns {
                rec.push(s.get(i).map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&rec).map_err(to_err)?;
        }
        w.flush().map_err(|e| Error::io("<output>", e))?;
        Ok(())
    }
}

fn parse_cell(cell: &str) -> Option<f64> {
    let c = cell.trim();
    if c.is_empty() || c.eq_ignore_ascii_case("na") {
        return None;
    }
    c.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_integral(cell: &str) -> Option<i64> {
    let v: f64 = cell.trim().parse().ok()?;
    (v.fract() == 0.0 && v.abs() < 1e9).then_some(v as i64)
}

/// Reads a monthly CSV file into a [`Dataset`] with a contiguous index.
///
/// Rows whose date cell(s) are empty are skipped. Months absent from the
/// file and non-numeric cells become missing values.
pub fn load_csv(path: impl AsRef<Path>, date: &DateSpec, value_cols: &[&str]) -> Result<Dataset> {
    let path = path.as_ref();
    if value_cols.is_empty() {
        return Err(Error::EmptySelection("no value columns requested".into()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    };
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let date_cols = match date {
        DateSpec::YearMonth { column } => vec![col(column)?],
        DateSpec::TwoColumn { year, month } => vec![col(year)?, col(month)?],
    };
    let value_idx = value_cols.iter().map(|c| col(c)).collect::<Result<Vec<_>>>()?;

    let mut rows: BTreeMap<MonthIndex, Vec<Option<f64>>> = BTreeMap::new();
    let mut raw_rows = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        raw_rows += 1;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let cells: Vec<&str> = date_cols.iter().map(|&i| rec.get(i).unwrap_or("").trim()).collect();
        if cells.iter().all(|c| c.is_empty()) {
            continue;
        }
        let bad = || Error::BadDate {
            value: cells.join(","),
            line,
        };
        let month = match date {
            DateSpec::YearMonth { .. } => cells[0].parse::<MonthIndex>().map_err(|_| bad())?,
            DateSpec::TwoColumn { .. } => {
                let y = parse_integral(cells[0]).ok_or_else(bad)?;
                let m = parse_integral(cells[1])
                    .filter(|m| (1..=12).contains(m))
                    .ok_or_else(bad)?;
                MonthIndex::new(y, m as u32)?
            }
        };
        let vals = value_idx.iter().map(|&i| rec.get(i).and_then(parse_cell)).collect();
        if rows.insert(month, vals).is_some() {
            return Err(Error::DuplicateMonth {
                month: month.to_string(),
                line,
            });
        }
    }
    let (&first, _) = rows
        .first_key_value()
        .ok_or_else(|| Error::EmptySelection(format!("{} has no dated rows", path.display())))?;
    let (&last, _) = rows.last_key_value().expect("non-empty");
    let len = (last.encoded() - first.encoded() + 1) as usize;

    let mut columns: Vec<Vec<Option<f64>>> = vec![vec![None; len]; value_cols.len()];
    for (month, vals) in rows {
        let t = (month.encoded() - first.encoded()) as usize;
        for (c, v) in vals.into_iter().enumerate() {
            columns[c][t] = v;
        }
    }
    let columns = columns
        .into_iter()
        .zip(value_cols)
        .map(|(vals, name)| Series::new(*name, first, vals))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        columns,
        provenance: Provenance {
            source: path.to_path_buf(),
            date: date.clone(),
            value_cols: value_cols.iter().map(|s| s.to_string()).collect(),
            raw_rows,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(vals: &[Option<f64>]) -> Series {
        Series::new("s", MonthIndex::new(1996, 1).unwrap(), vals.to_vec()).unwrap()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn month_index_encoding() {
        let m = MonthIndex::new(1996, 3).unwrap();
        assert_eq!(m.encoded(), 1996 * 12 + 2);
        assert_eq!((m.year(), m.month()), (1996, 3));
        assert_eq!(m.to_string(), "1996-03");
        assert_eq!("1996-03".parse::<MonthIndex>().unwrap(), m);
        assert!(MonthIndex::new(1996, 13).is_err());
        assert!("1996/03".parse::<MonthIndex>().is_err());
        assert!("1996-3x".parse::<MonthIndex>().is_err());
    }

    #[test]
    fn interpolation_examples() {
        let a = s(&[Some(1.0), None, Some(3.0)]).interpolate_linear().unwrap();
        assert_eq!(a.values(), &[Some(1.0), Some(2.0), Some(3.0)]);
        let b = s(&[None, Some(1.0), Some(2.0)]).interpolate_linear().unwrap();
        assert_eq!(b.values(), &[None, Some(1.0), Some(2.0)]);
        // v(t) = 2t through (0,0) and (3,6)
        let c = s(&[Some(0.0), None, None, Some(6.0)]).interpolate_linear().unwrap();
        assert_eq!(c.values(), &[Some(0.0), Some(2.0), Some(4.0), Some(6.0)]);
        assert!(s(&[Some(1.0), None, None]).interpolate_linear().is_err());
    }

    #[test]
    fn diff_examples() {
        let d = Series::from_values("s", &[1.0, 2.0, 4.0, 7.0]).unwrap().diff(1).unwrap();
        assert_eq!(d.values(), &[None, Some(1.0), Some(2.0), Some(3.0)]);
        let c = Series::from_values("c", &[5.0, 5.0, 5.0]).unwrap().diff(1).unwrap();
        assert_eq!(c.values(), &[None, Some(0.0), Some(0.0)]);
        let m = s(&[Some(1.0), None, Some(4.0)]).diff(1).unwrap();
        assert_eq!(m.values(), &[None, None, None]);
        let d2 = Series::from_values("s", &[1.0, 2.0, 4.0, 7.0]).unwrap().diff(2).unwrap();
        assert_eq!(d2.values(), &[None, None, Some(1.0), Some(1.0)]);
        assert!(Series::from_values("s", &[1.0]).unwrap().diff(1).is_err());
        assert!(Series::from_values("s", &[1.0, 2.0]).unwrap().diff(0).is_err());
    }

    #[test]
    fn lag_examples() {
        let x = Series::from_values("x", &[5.0, 6.0, 7.0]).unwrap();
        assert_eq!(x.lag(1).unwrap().values(), &[None, Some(5.0), Some(6.0)]);
        assert_eq!(x.lag(1).unwrap().lag(1).unwrap().values(), x.lag(2).unwrap().values());
        assert_eq!(x.lag(5).unwrap().values(), &[None, None, None]);
        let d = x.diff(1).unwrap();
        let l = x.lag(1).unwrap();
        for t in 0..x.len() {
            assert_eq!(d.get(t), x.get(t).zip(l.get(t)).map(|(a, b)| a - b));
        }
    }

    #[test]
    fn csv_gap_materialization() {
        let f = write_tmp("date,v\n1996-01,30.0\n1996-03,32.0\n");
        let ds = load_csv(f.path(), &DateSpec::iso("date"), &["v"]).unwrap();
        let v = ds.column("v").unwrap();
        assert_eq!(v.values(), &[Some(30.0), None, Some(32.0)]);
        assert_eq!(v.month_at(1).to_string(), "1996-02");
    }

    #[test]
    fn csv_duplicate_month() {
        let f = write_tmp("date,v\n1996-01,30.0\n1996-01,31.0\n");
        let err = load_csv(f.path(), &DateSpec::iso("date"), &["v"]).unwrap_err();
        assert!(matches!(err, Error::DuplicateMonth { .. }), "{err}");
    }

    #[test]
    fn csv_two_column_dates_and_missing_cells() {
        let f = write_tmp("A,B,H,O\n2001,2,NA,3\n2001,1,1.5,abc\n,,9,9\n2001,4,,4\n");
        let ds = load_csv(f.path(), &DateSpec::two_column("A", "B"), &["H", "O"]).unwrap();
        assert_eq!(ds.provenance().raw_rows, 4);
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.column("H").unwrap().values(), &[Some(1.5), None, None, None]);
        assert_eq!(ds.column("O").unwrap().values(), &[None, Some(3.0), None, Some(4.0)]);
    }

    #[test]
    fn csv_errors() {
        let f = write_tmp("date,v\n96-xx,1\n");
        assert!(matches!(
            load_csv(f.path(), &DateSpec::iso("date"), &["v"]),
            Err(Error::BadDate { .. })
        ));
        let f = write_tmp("date,v\n");
        assert!(matches!(
            load_csv(f.path(), &DateSpec::iso("date"), &["v"]),
            Err(Error::EmptySelection(_))
        ));
        assert!(matches!(
            load_csv(f.path(), &DateSpec::iso("date"), &[]),
            Err(Error::EmptySelection(_))
        ));
        assert!(matches!(
            load_csv(f.path(), &DateSpec::iso("date"), &["w"]),
            Err(Error::MissingColumn(_))
        ));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", &DateSpec::iso("date"), &["v"]),
            Err(Error::Io { .. })
        ));
    }

    fn gappy() -> impl Strategy<Value = Vec<Option<f64>>> {
        prop::collection::vec(prop::option::weighted(0.7, -1e3f64..1e3), 2..60)
    }

    proptest! {
        #[test]
        fn month_round_trip(y in -3000i64..3000, m in 1u32..=12) {
            let idx = MonthIndex::new(y, m).unwrap();
            prop_assert_eq!((idx.year(), idx.month()), (y, m));
            prop_assert!(idx < idx.offset(1));
        }

        #[test]
        fn cumsum_of_diff_recovers_series(v in prop::collection::vec(-1e3f64..1e3, 2..80)) {
            let x = Series::from_values("x", &v).unwrap();
            let d = x.diff(1).unwrap();
            let mut acc = v[0];
            for t in 1..v.len() {
                acc += d.get(t).unwrap();
                prop_assert!((acc - v[t]).abs() <= 1e-12 * (1.0 + v.iter().map(|a| a.abs()).sum::<f64>()));
            }
        }

        #[test]
        fn interpolation_idempotent_and_bracketed(v in gappy()) {
            let x = s(&v);
            prop_assume!(x.count_observed() >= 2);
            let once = x.interpolate_linear().unwrap();
            let twice = once.interpolate_linear().unwrap();
            prop_assert_eq!(&once, &twice);
            for (i, orig) in v.iter().enumerate() {
                if orig.is_some() {
                    prop_assert_eq!(once.get(i), *orig);
                    continue;
                }
                let left = v[..i].iter().rev().find_map(|x| *x);
                let right = v[i + 1..].iter().find_map(|x| *x);
                match (left, right) {
                    (Some(a), Some(b)) => {
                        let y = once.get(i).unwrap();
                        prop_assert!(y >= a.min(b) - 1e-9 && y <= a.max(b) + 1e-9);
                    }
                    _ => prop_assert_eq!(once.get(i), None),
                }
            }
        }

        #[test]
        fn csv_round_trip_is_fixed_point(v in gappy(), w in gappy()) {
            let n = v.len().min(w.len());
            let start = MonthIndex::new(1990, 1).unwrap();
            let a = v[..n].to_vec();
            let b = w[..n].to_vec();
            let ds = Dataset {
                columns: vec![Series::new("a", start, a).unwrap(), Series::new("b", start, b).unwrap()],
                provenance: Provenance {
                    source: PathBuf::from("mem"),
                    date: DateSpec::iso("date"),
                    value_cols: vec!["a".into(), "b".into()],
                    raw_rows: n,
                },
            };
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let f = write_tmp(std::str::from_utf8(&buf).unwrap());
            let back = load_csv(f.path(), &DateSpec::iso("date"), &["a", "b"]).unwrap();
            prop_assert_eq!(back.columns(), ds.columns());
            let mut buf2 = Vec::new();
            back.write_csv(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }
    }
}
