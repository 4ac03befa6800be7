use std::collections::BTreeSet;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Log,
    Sqrt,
}

impl UnaryOp {
    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "neg",
            UnaryOp::Abs => "abs",
            UnaryOp::Log => "log",
            UnaryOp::Sqrt => "sqrt",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RollingStat {
    Mean,
    /// `sample = false` divides by N, `true` by N - 1.
    Std { sample: bool },
    Min,
    Max,
}

impl RollingStat {
    pub fn name(self) -> &'static str {
        match self {
            RollingStat::Mean => "rolling_mean",
            RollingStat::Std { .. } => "rolling_std",
            RollingStat::Min => "rolling_min",
            RollingStat::Max => "rolling_max",
        }
    }
}

/// Feature expression tree.
///
/// Integer parameters are kept signed so that a malformed expression (a
/// negative lag, say) survives parsing and is reported by the point-in-time
/// checker rather than silently rejected by the type system.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(String),
    Const(f64),
    Unary {
        op: UnaryOp,
        arg: Box<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    /// Value `periods` rows earlier on the security's calendar.
    Lag {
        arg: Box<Expr>,
        periods: i64,
    },
    /// Trailing window over the security's last `window` rows.
    Rolling {
        stat: RollingStat,
        arg: Box<Expr>,
        window: i64,
        min_periods: i64,
    },
    /// Recursive exponential mean with smoothing factor `2 / (span + 1)`.
    EwmMean {
        arg: Box<Expr>,
        span: i64,
    },
    /// `(x - rolling_mean) / (rolling_sample_std + 1e-8)` over `window` rows.
    GroupZScore {
        arg: Box<Expr>,
        window: i64,
    },
    /// Per-date percentile rank in `(0, 1]`, average ties.
    CsRank(Box<Expr>),
    /// Per-date z-score with population standard deviation.
    CsZScore(Box<Expr>),
    FillMissing {
        arg: Box<Expr>,
        value: f64,
    },
}

/// Guard added to the rolling dispersion of [`Expr::GroupZScore`].
pub const ZSCORE_EPSILON: f64 = 1e-8;

impl Expr {
    pub fn col(name: &str) -> Expr {
        Expr::Column(name.to_string())
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Column(_) | Expr::Const(_) => vec![],
            Expr::Binary { lhs, rhs, .. } => vec![lhs, rhs],
            Expr::Unary { arg, .. }
            | Expr::Lag { arg, .. }
            | Expr::Rolling { arg, .. }
            | Expr::EwmMean { arg, .. }
            | Expr::GroupZScore { arg, .. }
            | Expr::FillMissing { arg, .. }
            | Expr::CsRank(arg)
            | Expr::CsZScore(arg) => vec![arg],
        }
    }

    /// Number of operator nodes (everything except column references and constants).
    pub fn operation_count(&self) -> usize {
        let own = usize::from(!matches!(self, Expr::Column(_) | Expr::Const(_)));
        own + self.children().iter().map(|c| c.operation_count()).sum::<usize>()
    }

    pub fn depth(&self) -> usize {
        1 + self.children().iter().map(|c| c.depth()).max().unwrap_or(0)
    }

    pub fn columns(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.visit(&mut |e| {
            if let Expr::Column(name) = e {
                out.insert(name.clone());
            }
        });
        out
    }

    /// Window lengths of every rolling, EWM and z-score node (spans count as windows).
    pub fn windows(&self) -> Vec<i64> {
        let mut out = Vec::new();
        self.visit(&mut |e| match e {
            Expr::Rolling { window, .. } | Expr::GroupZScore { window, .. } => out.push(*window),
            Expr::EwmMean { span, .. } => out.push(*span),
            _ => {}
        });
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut dyn FnMut(&'a Expr)) {
        f(self);
        for child in self.children() {
            child.visit(f);
        }
    }

    pub fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        pred(self) || self.children().iter().any(|c| c.any(pred))
    }
}

fn is_identifier(name: &str) -> bool {
    if name == "inf" || name == "NaN" {
        return false;
    }
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(name) if is_identifier(name) => write!(f, "col({name})"),
            Expr::Column(name) => write!(f, "col({name:?})"),
            Expr::Const(v) => write!(f, "{v}"),
            Expr::Unary { op, arg } => write!(f, "{}({arg})", op.name()),
            Expr::Binary { op, lhs, rhs } => write!(f, "({lhs} {} {rhs})", op.symbol()),
            Expr::Lag { arg, periods } => write!(f, "lag({arg}, {periods})"),
            Expr::Rolling {
                stat,
                arg,
                window,
                min_periods,
            } => {
                write!(f, "{}({arg}, {window}, min_periods={min_periods}", stat.name())?;
                if let RollingStat::Std { sample } = stat {
                    write!(f, ", ddof={}", u8::from(*sample))?;
                }
                write!(f, ")")
            }
            Expr::EwmMean { arg, span } => write!(f, "ewm_mean({arg}, {span})"),
            Expr::GroupZScore { arg, window } => write!(f, "group_zscore({arg}, {window})"),
            Expr::CsRank(arg) => write!(f, "cs_rank({arg})"),
            Expr::CsZScore(arg) => write!(f, "cs_zscore({arg})"),
            Expr::FillMissing { arg, value } => write!(f, "fillna({arg}, {value})"),
        }
    }
}
