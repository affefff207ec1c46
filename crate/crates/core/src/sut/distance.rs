//! Branch distances for relational predicates.
//!
//! Raw distances follow Korel's rules with `K = 1`; [`normalize`] maps them to `[0, 1)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

/// Raw distance used when an operand is missing or the operand types cannot be compared.
pub const MISMATCH_DISTANCE: f64 = 1000.0;

const K: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CmpOp {
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }
}

/// Runtime value inside the simulated service.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Num(f64),
    Str(String),
}

impl Value {
    fn as_number(&self) -> Option<f64> {
        match self {
            Value::Num(x) => Some(*x),
            Value::Bool(b) => Some(if *b { 1.0 } else { 0.0 }),
            Value::Str(s) => s.trim().parse().ok(),
            Value::Null => None,
        }
    }

    /// Canonical text form, used for store keys and tokens.
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Num(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{}", *x as i64),
            Value::Num(x) => x.to_string(),
            Value::Str(s) => s.clone(),
        }
    }
}

/// `d / (d + 1)`.
pub fn normalize(d: f64) -> f64 {
    if d.is_nan() || d.is_infinite() {
        return 1.0;
    }
    d / (d + 1.0)
}

/// Raw distance to making `a op b` true for numbers.
pub fn numeric_distance(a: f64, op: CmpOp, b: f64) -> f64 {
    match op {
        CmpOp::Eq => (a - b).abs(),
        CmpOp::Ne => {
            if a != b {
                0.0
            } else {
                K
            }
        }
        CmpOp::Lt => {
            if a < b {
                0.0
            } else {
                a - b + K
            }
        }
        CmpOp::Le => {
            if a <= b {
                0.0
            } else {
                a - b
            }
        }
        CmpOp::Gt => {
            if a > b {
                0.0
            } else {
                b - a + K
            }
        }
        CmpOp::Ge => {
            if a >= b {
                0.0
            } else {
                b - a
            }
        }
    }
}

/// Sum of absolute character-code differences, the shorter string padded with code 0.
pub fn string_equality_distance(a: &str, b: &str) -> f64 {
    let a: Vec<u32> = a.chars().map(u32::from).collect();
    let b: Vec<u32> = b.chars().map(u32::from).collect();
    let n = a.len().max(b.len());
    let d: f64 = (0..n)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0) as f64;
            let y = b.get(i).copied().unwrap_or(0) as f64;
            (x - y).abs()
        })
        .sum();
    if d == 0.0 && a != b {
        K
    } else {
        d
    }
}

fn string_distance(a: &str, op: CmpOp, b: &str) -> f64 {
    let holds = match op {
        CmpOp::Eq => a == b,
        CmpOp::Ne => a != b,
        CmpOp::Lt => a.cmp(b) == Ordering::Less,
        CmpOp::Le => a.cmp(b) != Ordering::Greater,
        CmpOp::Gt => a.cmp(b) == Ordering::Greater,
        CmpOp::Ge => a.cmp(b) != Ordering::Less,
    };
    match (holds, op) {
        (true, _) => 0.0,
        (false, CmpOp::Eq) => string_equality_distance(a, b),
        (false, _) => K,
    }
}

/// Raw distance to making `lhs op rhs` true.
pub fn raw_distance(lhs: &Value, op: CmpOp, rhs: &Value) -> f64 {
    match (lhs, rhs) {
        (Value::Str(a), Value::Str(b)) => string_distance(a, op, b),
        (Value::Null, Value::Null) => match op {
            CmpOp::Eq | CmpOp::Le | CmpOp::Ge => 0.0,
            _ => MISMATCH_DISTANCE,
        },
        (Value::Null, _) | (_, Value::Null) => match op {
            CmpOp::Ne => 0.0,
            _ => MISMATCH_DISTANCE,
        },
        _ => match (lhs.as_number(), rhs.as_number()) {
            (Some(a), Some(b)) => numeric_distance(a, op, b),
            _ => match op {
                CmpOp::Ne => 0.0,
                _ => MISMATCH_DISTANCE,
            },
        },
    }
}

/// Outcome of evaluating a predicate together with its two normalized branch distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchOutcome {
    pub taken: bool,
    pub true_distance: f64,
    pub false_distance: f64,
}

pub fn evaluate(lhs: &Value, op: CmpOp, rhs: &Value) -> BranchOutcome {
    let d_true = raw_distance(lhs, op, rhs);
    let d_false = raw_distance(lhs, op.negate(), rhs);
    let taken = d_true == 0.0;
    // exactly one side is zero
    let (d_true, d_false) = if taken {
        (0.0, if d_false == 0.0 { K } else { d_false })
    } else {
        (d_true, 0.0)
    };
    BranchOutcome {
        taken,
        true_distance: normalize(d_true),
        false_distance: normalize(d_false),
    }
}
