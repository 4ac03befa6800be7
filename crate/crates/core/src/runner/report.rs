//! Table rendering. Markdown cells carry units and two or three decimals;
//! delimited cells carry the raw value at six decimals.

use std::io::Write;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Fixed(usize),
    /// Fraction shown as a percentage.
    Pct(usize),
    /// Multiple, e.g. annual turnover `45x`.
    Times(usize),
    Bps(usize),
    Int,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Text(String),
    Num(Option<f64>, Format),
    /// Number followed by significance stars in markdown.
    Starred(Option<f64>, &'static str),
}

impl Cell {
    pub fn text(s: impl Into<String>) -> Cell {
        Cell::Text(s.into())
    }

    pub fn num(v: f64, f: Format) -> Cell {
        Cell::Num(v.is_finite().then_some(v), f)
    }

    pub fn opt(v: Option<f64>, f: Format) -> Cell {
        Cell::Num(v.filter(|x| x.is_finite()), f)
    }

    fn markdown(&self) -> String {
        match self {
            Cell::Text(s) => s.replace('|', "\\|"),
            Cell::Num(None, _) | Cell::Starred(None, _) => "n/a".into(),
            Cell::Num(Some(v), f) => match f {
                Format::Fixed(d) => format!("{v:.d$}"),
                Format::Pct(d) => format!("{:.d$}%", v * 100.0),
                Format::Times(d) => format!("{v:.d$}x"),
                Format::Bps(d) => format!("{v:.d$} bps"),
                Format::Int => format!("{v:.0}"),
            },
            Cell::Starred(Some(v), stars) => format!("{v:.3}{stars}"),
        }
    }

    fn delimited(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(None, _) | Cell::Starred(None, _) => String::new(),
            Cell::Num(Some(v), Format::Int) => format!("{v:.0}"),
            Cell::Num(Some(v), _) | Cell::Starred(Some(v), _) => format!("{v:.6}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub title: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn new(name: &str, title: &str, headers: &[&str]) -> Table {
        Table {
            name: name.into(),
            title: title.into(),
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    pub fn write_markdown(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "### {}\n", self.title)?;
        writeln!(out, "| {} |", self.headers.join(" | "))?;
        let rule: Vec<&str> = (0..self.headers.len()).map(|i| if i == 0 { ":--" } else { "--:" }).collect();
        writeln!(out, "|{}|", rule.join("|"))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::markdown).collect();
            writeln!(out, "| {} |", cells.join(" | "))?;
        }
        for n in &self.notes {
            writeln!(out, "\n{n}")?;
        }
        writeln!(out)
    }

    pub fn write_delimited(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::delimited))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Writes `<name>.csv` per table and one combined `report.md`.
pub fn emit_report(tables: &[Table], dir: &Path) -> Result<(), std::io::Error> {
    std::fs::create_dir_all(dir)?;
    let mut md = Vec::new();
    for t in tables {
        t.write_markdown(&mut md)?;
        let mut buf = Vec::new();
        t.write_delimited(&mut buf).map_err(std::io::Error::other)?;
        std::fs::write(dir.join(format!("{}.csv", t.name)), buf)?;
    }
    std::fs::write(dir.join("report.md"), md)
}

/// Stars for two-sided p-values at the given thresholds, tightest first.
pub fn stars(p: Option<f64>, thresholds: [f64; 3]) -> &'static str {
    match p {
        Some(p) if p < thresholds[0] => "***",
        Some(p) if p < thresholds[1] => "**",
        Some(p) if p < thresholds[2] => "*",
        _ => "",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headers_only() {
        let t = Table::new("empty", "Empty", &["Strategy", "SR"]);
        let mut buf = Vec::new();
        t.write_delimited(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "Strategy,SR\n");
    }

    #[test]
    fn cell_rendering() {
        assert_eq!(Cell::num(0.1234, Format::Pct(1)).markdown(), "12.3%");
        assert_eq!(Cell::num(0.1234, Format::Pct(1)).delimited(), "0.123400");
        assert_eq!(Cell::num(f64::NAN, Format::Fixed(2)).markdown(), "n/a");
        assert_eq!(Cell::num(f64::NAN, Format::Fixed(2)).delimited(), "");
        assert_eq!(Cell::Starred(Some(1.5), "**").markdown(), "1.500**");
        assert_eq!(Cell::text("a|b").markdown(), "a\\|b");
    }

    #[test]
    fn star_thresholds() {
        let t = [0.001, 0.01, 0.05];
        assert_eq!(stars(Some(0.0005), t), "***");
        assert_eq!(stars(Some(0.03), t), "*");
        assert_eq!(stars(Some(0.2), t), "");
        assert_eq!(stars(None, t), "");
    }
}
