use std::path::Path;

use thiserror::Error;

use super::ast::Expr;
use super::parser::{parse_feature, ParseError};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest line {line}: expected `name = expression`")]
    Malformed { line: usize },
    #[error("manifest line {line}: duplicate feature name {name:?}")]
    Duplicate { line: usize, name: String },
    #[error("manifest line {line} ({name}): {source}")]
    Parse {
        line: usize,
        name: String,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedFeature {
    pub name: String,
    pub expr: Expr,
}

/// Parses a manifest: one `name = expression` per line, `#` comments and
/// blank lines ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<NamedFeature>, ManifestError> {
    let mut out: Vec<NamedFeature> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (name, body) = trimmed
            .split_once('=')
            .ok_or(ManifestError::Malformed { line })?;
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
            return Err(ManifestError::Malformed { line });
        }
        if out.iter().any(|f| f.name == name) {
            return Err(ManifestError::Duplicate {
                line,
                name: name.to_string(),
            });
        }
        let expr = parse_feature(body).map_err(|source| ManifestError::Parse {
            line,
            name: name.to_string(),
            source,
        })?;
        out.push(NamedFeature {
            name: name.to_string(),
            expr,
        });
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<NamedFeature>, ManifestError> {
    parse_manifest(&std::fs::read_to_string(path)?)
}

/// Manifest text of the five bundled reference features.
pub const REFERENCE_MANIFEST: &str = include_str!("../../data/reference_features.txt");

/// The five bundled reference features.
pub fn reference_corpus() -> Vec<NamedFeature> {
    parse_manifest(REFERENCE_MANIFEST).expect("bundled manifest parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{analyze_patterns, check_point_in_time};

    #[test]
    fn bundled_corpus() {
        let corpus = reference_corpus();
        assert_eq!(corpus.len(), 5);
        assert!(corpus.iter().all(|f| check_point_in_time(&f.expr).passed()));
        let exprs: Vec<Expr> = corpus.into_iter().map(|f| f.expr).collect();
        let stats = analyze_patterns(&exprs).unwrap();
        assert_eq!(stats.ranking, 1.0);
    }

    #[test]
    fn manifest_errors() {
        assert!(matches!(parse_manifest("oops"), Err(ManifestError::Malformed { line: 1 })));
        assert!(matches!(
            parse_manifest("a = x\na = y"),
            Err(ManifestError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            parse_manifest("# c\n\na = cs_rank("),
            Err(ManifestError::Parse { line: 3, .. })
        ));
    }
}
