//! Long-format panel storage keyed by `(security, date)`.
//!
//! A [`Panel`] is an immutable table whose rows are sorted by security id and
//! then by date. Numeric columns hold `f64` with `NaN` standing for a missing
//! observation; label columns hold optional strings (sector names and the like).
//! All shifts in the crate run on each security's own trading calendar, so a
//! security that has no row on a date simply does not exist on that date.

mod io;
mod ops;

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use chrono::{Datelike, NaiveDate};
use thiserror::Error;

pub use io::{load_panel, load_scores, read_header, write_panel, write_scores, FormatSpec};
pub use ops::{
    apply_universe_filter, compute_log_returns, forward_fill_to_daily, forward_return,
    forward_return_column, UniverseSpec, RETURN_COLUMN,
};

/// Opaque security identifier.
pub type SecurityId = Arc<str>;

/// A feature or prediction column aligned with the rows of a panel.
pub type FeatureColumn = Vec<f64>;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("duplicate row for security {id} on {date}")]
    DuplicateKey { id: String, date: Date },
    #[error("line {line}: cannot parse {column} value {value:?}")]
    Parse {
        line: usize,
        column: String,
        value: String,
    },
    #[error("column {0:?} not found")]
    MissingColumn(String),
    #[error("column {column:?} has {found} values, panel has {expected} rows")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Calendar day stored as a day ordinal (days since 0001-01-01, which is day 1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Date(i32);

impl Date {
    pub fn from_ymd(year: i32, month: u32, day: u32) -> Option<Date> {
        NaiveDate::from_ymd_opt(year, month, day).map(Date::from_naive)
    }

    pub fn from_naive(date: NaiveDate) -> Date {
        Date(date.num_days_from_ce())
    }

    pub const fn from_ordinal(ordinal: i32) -> Date {
        Date(ordinal)
    }

    pub const fn ordinal(self) -> i32 {
        self.0
    }

    pub fn naive(self) -> NaiveDate {
        NaiveDate::from_num_days_from_ce_opt(self.0).expect("date ordinal out of range")
    }

    /// Accepts `YYYY-MM-DD`, `YYYY/MM/DD` and `YYYYMMDD`.
    pub fn parse(text: &str) -> Option<Date> {
        let text = text.trim();
        ["%Y-%m-%d", "%Y/%m/%d", "%Y%m%d"]
            .iter()
            .find_map(|fmt| NaiveDate::parse_from_str(text, fmt).ok())
            .map(Date::from_naive)
    }

    pub fn year(self) -> i32 {
        self.naive().year()
    }

    pub fn month(self) -> u32 {
        self.naive().month()
    }

    pub fn iso_week(self) -> (i32, u32) {
        let week = self.naive().iso_week();
        (week.year(), week.week())
    }

    pub fn is_weekend(self) -> bool {
        matches!(
            self.naive().weekday(),
            chrono::Weekday::Sat | chrono::Weekday::Sun
        )
    }

    pub const fn add_days(self, days: i32) -> Date {
        Date(self.0 + days)
    }
}

impl fmt::Display for Date {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.naive().format("%Y-%m-%d"))
    }
}

/// Contiguous rows of one security.
#[derive(Debug, Clone)]
pub struct Block {
    pub id: SecurityId,
    pub rows: Range<usize>,
}

/// Rows observed on one date, in security-id order.
#[derive(Debug, Clone)]
pub struct DateGroup {
    pub date: Date,
    pub rows: Vec<usize>,
}

/// Row keys of a panel plus the two groupings every operator needs.
#[derive(Debug)]
pub struct RowIndex {
    ids: Vec<SecurityId>,
    dates: Vec<Date>,
    blocks: Vec<Block>,
    by_date: Vec<DateGroup>,
}

impl RowIndex {
    /// Sorts keys by `(id, date)`. Returns the index and, for each sorted row,
    /// the position of that key in the input.
    pub fn build(keys: Vec<(SecurityId, Date)>) -> Result<(RowIndex, Vec<usize>), PanelError> {
        let mut order: Vec<usize> = (0..keys.len()).collect();
        order.sort_by(|&a, &b| keys[a].0.cmp(&keys[b].0).then(keys[a].1.cmp(&keys[b].1)));
        for pair in order.windows(2) {
            let (a, b) = (&keys[pair[0]], &keys[pair[1]]);
            if a.0 == b.0 && a.1 == b.1 {
                return Err(PanelError::DuplicateKey {
                    id: a.0.to_string(),
                    date: a.1,
                });
            }
        }
        let ids = order.iter().map(|&i| keys[i].0.clone()).collect();
        let dates = order.iter().map(|&i| keys[i].1).collect();
        Ok((RowIndex::from_parts(ids, dates), order))
    }

    /// Builds an index from keys that are already sorted and unique.
    pub fn from_sorted(ids: Vec<SecurityId>, dates: Vec<Date>) -> Result<RowIndex, PanelError> {
        if ids.len() != dates.len() {
            return Err(PanelError::LengthMismatch {
                column: "date".into(),
                expected: ids.len(),
                found: dates.len(),
            });
        }
        for i in 1..ids.len() {
            let ord = ids[i - 1].cmp(&ids[i]).then(dates[i - 1].cmp(&dates[i]));
            match ord {
                std::cmp::Ordering::Less => {}
                std::cmp::Ordering::Equal => {
                    return Err(PanelError::DuplicateKey {
                        id: ids[i].to_string(),
                        date: dates[i],
                    })
                }
                std::cmp::Ordering::Greater => {
                    return Err(PanelError::InvalidSpec(format!(
                        "rows not sorted at position {i}"
                    )))
                }
            }
        }
        Ok(RowIndex::from_parts(ids, dates))
    }

    fn from_parts(ids: Vec<SecurityId>, dates: Vec<Date>) -> RowIndex {
        let mut blocks: Vec<Block> = Vec::new();
        for (row, id) in ids.iter().enumerate() {
            match blocks.last_mut() {
                Some(block) if block.id == *id => block.rows.end = row + 1,
                _ => blocks.push(Block {
                    id: id.clone(),
                    rows: row..row + 1,
                }),
            }
        }
        let mut grouped: BTreeMap<Date, Vec<usize>> = BTreeMap::new();
        for (row, date) in dates.iter().enumerate() {
            grouped.entry(*date).or_default().push(row);
        }
        let by_date = grouped
            .into_iter()
            .map(|(date, rows)| DateGroup { date, rows })
            .collect();
        RowIndex {
            ids,
            dates,
            blocks,
            by_date,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, row: usize) -> &SecurityId {
        &self.ids[row]
    }

    pub fn date(&self, row: usize) -> Date {
        self.dates[row]
    }

    pub fn ids(&self) -> &[SecurityId] {
        &self.ids
    }

    pub fn dates(&self) -> &[Date] {
        &self.dates
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn date_groups(&self) -> &[DateGroup] {
        &self.by_date
    }

    /// Sorted union of all dates.
    pub fn calendar(&self) -> Vec<Date> {
        self.by_date.iter().map(|g| g.date).collect()
    }

    pub fn block_of(&self, id: &str) -> Option<&Block> {
        self.blocks
            .binary_search_by(|b| (*b.id).cmp(id))
            .ok()
            .map(|i| &self.blocks[i])
    }

    pub fn find(&self, id: &str, date: Date) -> Option<usize> {
        let block = self.block_of(id)?;
        let dates = &self.dates[block.rows.clone()];
        dates
            .binary_search(&date)
            .ok()
            .map(|offset| block.rows.start + offset)
    }

    /// Keeps the rows flagged in `keep`; returns the new index and the source
    /// row of every retained row.
    pub fn select(&self, keep: &[bool]) -> (RowIndex, Vec<usize>) {
        let source: Vec<usize> = (0..self.len()).filter(|&r| keep[r]).collect();
        let ids = source.iter().map(|&r| self.ids[r].clone()).collect();
        let dates = source.iter().map(|&r| self.dates[r]).collect();
        (RowIndex::from_parts(ids, dates), source)
    }
}

/// Label column: one optional string per row.
pub type LabelColumn = Vec<Option<Arc<str>>>;

#[derive(Debug, Clone)]
pub struct Panel {
    index: Arc<RowIndex>,
    columns: BTreeMap<String, Arc<Vec<f64>>>,
    labels: BTreeMap<String, Arc<LabelColumn>>,
}

impl Panel {
    pub fn new(index: Arc<RowIndex>) -> Panel {
        Panel {
            index,
            columns: BTreeMap::new(),
            labels: BTreeMap::new(),
        }
    }

    /// Builds a panel from unsorted rows; rows are re-sorted by `(id, date)`.
    pub fn from_rows<S: AsRef<str>>(
        ids: &[S],
        dates: &[Date],
        columns: Vec<(String, Vec<f64>)>,
    ) -> Result<Panel, PanelError> {
        let keys: Vec<(SecurityId, Date)> = ids
            .iter()
            .zip(dates)
            .map(|(id, d)| (Arc::from(id.as_ref()), *d))
            .collect();
        if keys.len() != ids.len() || keys.len() != dates.len() {
            return Err(PanelError::LengthMismatch {
                column: "date".into(),
                expected: ids.len(),
                found: dates.len(),
            });
        }
        let (index, order) = RowIndex::build(keys)?;
        let mut panel = Panel::new(Arc::new(index));
        for (name, values) in columns {
            if values.len() != order.len() {
                return Err(PanelError::LengthMismatch {
                    column: name,
                    expected: order.len(),
                    found: values.len(),
                });
            }
            let sorted = order.iter().map(|&i| values[i]).collect();
            panel.columns.insert(name, Arc::new(sorted));
        }
        Ok(panel)
    }

    pub fn index(&self) -> &Arc<RowIndex> {
        &self.index
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.contains_key(name)
    }

    pub fn column(&self, name: &str) -> Result<&[f64], PanelError> {
        self.columns
            .get(name)
            .map(|c| c.as_slice())
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    pub fn label_names(&self) -> impl Iterator<Item = &str> {
        self.labels.keys().map(String::as_str)
    }

    pub fn require_columns<S: AsRef<str>>(&self, names: &[S]) -> Result<(), PanelError> {
        for name in names {
            self.column(name.as_ref())?;
        }
        Ok(())
    }

    /// Returns a copy with `name` set to `values` (replacing any existing column).
    pub fn with_column(&self, name: &str, values: Vec<f64>) -> Result<Panel, PanelError> {
        if values.len() != self.len() {
            return Err(PanelError::LengthMismatch {
                column: name.to_string(),
                expected: self.len(),
                found: values.len(),
            });
        }
        let mut out = self.clone();
        out.columns.insert(name.to_string(), Arc::new(values));
        Ok(out)
    }

    pub fn with_labels(&self, name: &str, values: LabelColumn) -> Result<Panel, PanelError> {
        if values.len() != self.len() {
            return Err(PanelError::LengthMismatch {
                column: name.to_string(),
                expected: self.len(),
                found: values.len(),
            });
        }
        let mut out = self.clone();
        out.labels.insert(name.to_string(), Arc::new(values));
        Ok(out)
    }

    pub fn labels(&self, name: &str) -> Result<&[Option<Arc<str>>], PanelError> {
        self.labels
            .get(name)
            .map(|c| c.as_slice())
            .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
    }

    /// Keeps rows where `keep` is true.
    pub fn select_rows(&self, keep: &[bool]) -> Panel {
        assert_eq!(keep.len(), self.len(), "row mask length");
        let (index, source) = self.index.select(keep);
        let columns = self
            .columns
            .iter()
            .map(|(k, v)| (k.clone(), Arc::new(source.iter().map(|&r| v[r]).collect())))
            .collect();
        let labels = self
            .labels
            .iter()
            .map(|(k, v)| {
                (
                    k.clone(),
                    Arc::new(source.iter().map(|&r| v[r].clone()).collect()),
                )
            })
            .collect();
        Panel {
            index: Arc::new(index),
            columns,
            labels,
        }
    }
}

/// One value per `(security, date)`; `NaN` marks a missing score.
#[derive(Debug, Clone)]
pub struct ScorePanel {
    index: Arc<RowIndex>,
    values: Vec<f64>,
}

impl ScorePanel {
    pub fn new(index: Arc<RowIndex>, values: Vec<f64>) -> ScorePanel {
        assert_eq!(index.len(), values.len(), "score length must match index");
        ScorePanel { index, values }
    }

    pub fn empty() -> ScorePanel {
        let index = RowIndex::from_parts(Vec::new(), Vec::new());
        ScorePanel::new(Arc::new(index), Vec::new())
    }

    /// Builds scores from unsorted `(id, date, value)` triples.
    pub fn from_triples<S: AsRef<str>>(
        triples: &[(S, Date, f64)],
    ) -> Result<ScorePanel, PanelError> {
        let keys = triples
            .iter()
            .map(|(id, d, _)| (Arc::from(id.as_ref()), *d))
            .collect();
        let (index, order) = RowIndex::build(keys)?;
        let values = order.iter().map(|&i| triples[i].2).collect();
        Ok(ScorePanel::new(Arc::new(index), values))
    }

    pub fn index(&self) -> &Arc<RowIndex> {
        &self.index
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: &str, date: Date) -> Option<f64> {
        self.index.find(id, date).map(|r| self.values[r])
    }

    pub fn with_values(&self, values: Vec<f64>) -> ScorePanel {
        ScorePanel::new(self.index.clone(), values)
    }

    /// Keeps rows where `keep` is true.
    pub fn select_rows(&self, keep: &[bool]) -> ScorePanel {
        let (index, source) = self.index.select(keep);
        let values = source.iter().map(|&r| self.values[r]).collect();
        ScorePanel::new(Arc::new(index), values)
    }

    /// Drops rows whose score is missing.
    pub fn dropna(&self) -> ScorePanel {
        let keep: Vec<bool> = self.values.iter().map(|v| !v.is_nan()).collect();
        self.select_rows(&keep)
    }

    /// Aligns these scores onto another index; rows absent here become missing.
    pub fn reindex(&self, target: &Arc<RowIndex>) -> ScorePanel {
        let values = (0..target.len())
            .map(|r| {
                self.index
                    .find(target.id(r), target.date(r))
                    .map_or(f64::NAN, |src| self.values[src])
            })
            .collect();
        ScorePanel::new(target.clone(), values)
    }
}
