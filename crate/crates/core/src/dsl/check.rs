use std::collections::BTreeSet;
use std::fmt;

use super::ast::Expr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path from the root, e.g. `$.arg.lhs`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.passed() {
            return write!(f, "PASS");
        }
        write!(f, "FAIL")?;
        for v in &self.violations {
            write!(f, "\n  {v}")?;
        }
        Ok(())
    }
}

fn walk(expr: &Expr, path: &str, declared: Option<&BTreeSet<String>>, out: &mut Vec<Violation>) {
    let mut fail = |message: String| {
        out.push(Violation {
            path: path.to_string(),
            message,
        })
    };
    match expr {
        Expr::Column(name) => {
            if let Some(cols) = declared {
                if !cols.contains(name) {
                    fail(format!("undeclared column {name:?}"));
                }
            }
        }
        Expr::Lag { periods, .. } => {
            if *periods < 0 {
                fail(format!("negative lag ({periods})"));
            }
        }
        Expr::Rolling {
            window, min_periods, ..
        } => {
            if *window < 1 {
                fail(format!("window must be at least 1 ({window})"));
            }
            if *min_periods < 1 {
                fail(format!("min_periods must be at least 1 ({min_periods})"));
            }
            if *min_periods > *window {
                fail(format!("min_periods exceeds window ({min_periods} > {window})"));
            }
        }
        Expr::EwmMean { span, .. } => {
            if *span < 1 {
                fail(format!("span must be at least 1 ({span})"));
            }
        }
        Expr::GroupZScore { window, .. } => {
            if *window < 1 {
                fail(format!("window must be at least 1 ({window})"));
            }
        }
        _ => {}
    }
    match expr {
        Expr::Binary { lhs, rhs, .. } => {
            walk(lhs, &format!("{path}.lhs"), declared, out);
            walk(rhs, &format!("{path}.rhs"), declared, out);
        }
        other => {
            for child in other.children() {
                walk(child, &format!("{path}.arg"), declared, out);
            }
        }
    }
}

/// Structural point-in-time check: non-negative lags and bounded windows.
pub fn check_point_in_time(expr: &Expr) -> ValidationReport {
    let mut violations = Vec::new();
    walk(expr, "$", None, &mut violations);
    ValidationReport { violations }
}

/// Structural check plus: every referenced column is in `declared`.
pub fn check_with_columns<S: AsRef<str>>(expr: &Expr, declared: &[S]) -> ValidationReport {
    let cols: BTreeSet<String> = declared.iter().map(|s| s.as_ref().to_string()).collect();
    let mut violations = Vec::new();
    walk(expr, "$", Some(&cols), &mut violations);
    ValidationReport { violations }
}
