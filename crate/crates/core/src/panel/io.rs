use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use super::{Date, Panel, PanelError, RowIndex, ScorePanel, SecurityId};

/// Column mapping for delimited-text ingestion.
#[derive(Debug, Clone)]
pub struct FormatSpec {
    pub id_column: String,
    pub date_column: String,
    /// Numeric columns to load; `None` loads every column that is not the id,
    /// the date or a label column.
    pub value_columns: Option<Vec<String>>,
    /// Text columns (sector names and the like).
    pub label_columns: Vec<String>,
    /// Field delimiter; sniffed from the header when `None`.
    pub delimiter: Option<u8>,
}

impl FormatSpec {
    pub fn new(id_column: &str, date_column: &str) -> FormatSpec {
        FormatSpec {
            id_column: id_column.to_string(),
            date_column: date_column.to_string(),
            value_columns: None,
            label_columns: Vec::new(),
            delimiter: None,
        }
    }
}

fn sniff_delimiter(path: &Path) -> Result<u8, PanelError> {
    let mut first = String::new();
    BufReader::new(File::open(path)?).read_line(&mut first)?;
    Ok(if first.contains('\t') { b'\t' } else { b',' })
}

pub(crate) fn parse_number(text: &str) -> Option<f64> {
    let text = text.trim();
    match text {
        "" | "NA" | "NaN" | "nan" | "null" | "NULL" | "N/A" => Some(f64::NAN),
        _ => text.parse().ok(),
    }
}

fn column_position(headers: &csv::StringRecord, name: &str) -> Result<usize, PanelError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| PanelError::MissingColumn(name.to_string()))
}

/// Trimmed header names of a delimited file.
pub fn read_header(path: impl AsRef<Path>, delimiter: Option<u8>) -> Result<Vec<String>, PanelError> {
    let path = path.as_ref();
    let delimiter = match delimiter {
        Some(d) => d,
        None => sniff_delimiter(path)?,
    };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).has_headers(true).from_path(path)?;
    Ok(reader.headers()?.iter().map(|h| h.trim().to_string()).collect())
}

/// Loads a long-format delimited file (header row required).
///
/// Missing cells stay missing; a repeated `(id, date)` or an unparseable
/// date/number rejects the whole file.
pub fn load_panel(path: impl AsRef<Path>, spec: &FormatSpec) -> Result<Panel, PanelError> {
    let path = path.as_ref();
    let delimiter = match spec.delimiter {
        Some(d) => d,
        None => sniff_delimiter(path)?,
    };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let id_pos = column_position(&headers, &spec.id_column)?;
    let date_pos = column_position(&headers, &spec.date_column)?;
    let value_names: Vec<String> = match &spec.value_columns {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .map(|h| h.trim().to_string())
            .filter(|h| {
                *h != spec.id_column && *h != spec.date_column && !spec.label_columns.contains(h)
            })
            .collect(),
    };
    let value_pos = value_names
        .iter()
        .map(|n| column_position(&headers, n))
        .collect::<Result<Vec<_>, _>>()?;
    let label_pos = spec
        .label_columns
        .iter()
        .map(|n| column_position(&headers, n))
        .collect::<Result<Vec<_>, _>>()?;

    let mut keys: Vec<(SecurityId, Date)> = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); value_pos.len()];
    let mut labels: Vec<Vec<Option<Arc<str>>>> = vec![Vec::new(); label_pos.len()];
    let mut seen: HashSet<(SecurityId, Date)> = HashSet::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |pos: usize| record.get(pos).unwrap_or("");
        let id: SecurityId = Arc::from(field(id_pos).trim());
        let date_text = field(date_pos);
        let date = Date::parse(date_text).ok_or_else(|| PanelError::Parse {
            line,
            column: spec.date_column.clone(),
            value: date_text.to_string(),
        })?;
        if !seen.insert((id.clone(), date)) {
            return Err(PanelError::DuplicateKey {
                id: id.to_string(),
                date,
            });
        }
        for (slot, (&pos, name)) in value_pos.iter().zip(&value_names).enumerate() {
            let text = field(pos);
            let v = parse_number(text).ok_or_else(|| PanelError::Parse {
                line,
                column: name.clone(),
                value: text.to_string(),
            })?;
            values[slot].push(v);
        }
        for (slot, &pos) in label_pos.iter().enumerate() {
            let text = field(pos).trim();
            labels[slot].push(if text.is_empty() {
                None
            } else {
                Some(Arc::from(text))
            });
        }
        keys.push((id, date));
    }

    let (index, order) = RowIndex::build(keys)?;
    let mut panel = Panel::new(Arc::new(index));
    for (name, column) in value_names.iter().zip(values) {
        let sorted = order.iter().map(|&r| column[r]).collect();
        panel = panel.with_column(name, sorted)?;
    }
    for (name, column) in spec.label_columns.iter().zip(labels) {
        let sorted = order.iter().map(|&r| column[r].clone()).collect();
        panel = panel.with_labels(name, sorted)?;
    }
    Ok(panel)
}

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

/// Writes a panel as delimited text with columns `id, date, <numeric...>, <labels...>`.
///
/// Numbers use the shortest representation that parses back to the same bits.
pub fn write_panel(panel: &Panel, path: impl AsRef<Path>, delimiter: u8) -> Result<(), PanelError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path)?;
    let numeric: Vec<&str> = panel.column_names().collect();
    let text: Vec<&str> = panel.label_names().collect();
    let mut header = vec!["id", "date"];
    header.extend(&numeric);
    header.extend(&text);
    writer.write_record(&header)?;
    let columns: Vec<&[f64]> = numeric.iter().map(|n| panel.column(n)).collect::<Result<_, _>>()?;
    let label_columns: Vec<_> = text.iter().map(|n| panel.labels(n)).collect::<Result<_, _>>()?;
    let index = panel.index();
    for row in 0..panel.len() {
        let mut record = vec![index.id(row).to_string(), index.date(row).to_string()];
        record.extend(columns.iter().map(|c| format_value(c[row])));
        record.extend(
            label_columns
                .iter()
                .map(|c| c[row].as_deref().unwrap_or("").to_string()),
        );
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads externally produced scores from a delimited file with `id`, `date`
/// and score columns.
pub fn load_scores(
    path: impl AsRef<Path>,
    spec: &FormatSpec,
    score_column: &str,
) -> Result<ScorePanel, PanelError> {
    let mut spec = spec.clone();
    spec.value_columns = Some(vec![score_column.to_string()]);
    spec.label_columns.clear();
    let panel = load_panel(path, &spec)?;
    let values = panel.column(score_column)?.to_vec();
    Ok(ScorePanel::new(panel.index().clone(), values))
}

/// Writes scores as `id,date,score`.
pub fn write_scores(scores: &ScorePanel, mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "id,date,score")?;
    let index = scores.index();
    for (row, v) in scores.values().iter().enumerate() {
        writeln!(out, "{},{},{}", index.id(row), index.date(row), format_value(*v))?;
    }
    Ok(())
}
