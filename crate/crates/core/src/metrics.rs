//! Accuracy metrics between an inferred OD series and a reference series,
//! aligned window by window.

use crate::od::{ODMatrix, OdError};
use alloc::collections::BTreeMap;
use core::fmt;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompareMetrics {
    pub total_inferred: f64,
    pub total_reference: f64,
    /// |total_inferred - total_reference| / total_reference, or 0 when both
    /// totals are zero.
    pub total_relative_error: f64,
    /// Sum of |cell - cell| over aligned windows; unmatched windows count in
    /// full.
    pub cellwise_l1: f64,
    pub max_abs_cell_error: f64,
    pub windows_inferred_only: u32,
    pub windows_reference_only: u32,
}

/// Inferred/reference matrices sharing one window, either side optional.
type WindowPair<'a> = (Option<&'a ODMatrix>, Option<&'a ODMatrix>);

/// Window-aligned comparison. Windows present on only one side are compared
/// against zeros, so stray or missing windows show up as error mass instead
/// of being ignored.
pub fn compare(inferred: &[ODMatrix], reference: &[ODMatrix]) -> Result<CompareMetrics, MetricsError> {
    let d = match (inferred.first(), reference.first()) {
        (Some(m), _) | (_, Some(m)) => m.d(),
        (None, None) => return Ok(CompareMetrics::default()),
    };

    let mut by_window: BTreeMap<(i64, i64), WindowPair> = BTreeMap::new();
    for m in inferred {
        check_d(m, d)?;
        let slot = by_window.entry(m.window()).or_default();
        if slot.0.is_some() {
            return Err(MetricsError::DuplicateWindow { window: m.window() });
        }
        slot.0 = Some(m);
    }
    for m in reference {
        check_d(m, d)?;
        let slot = by_window.entry(m.window()).or_default();
        if slot.1.is_some() {
            return Err(MetricsError::DuplicateWindow { window: m.window() });
        }
        slot.1 = Some(m);
    }

    let mut out = CompareMetrics::default();
    for (_, (inf, refm)) in by_window {
        match (inf, refm) {
            (Some(a), Some(b)) => {
                out.total_inferred += a.total();
                out.total_reference += b.total();
                for (o, dd, v) in a.iter() {
                    let e = (v - b.get(o, dd)).abs();
                    out.cellwise_l1 += e;
                    out.max_abs_cell_error = out.max_abs_cell_error.max(e);
                }
            }
            (Some(a), None) => {
                out.windows_inferred_only += 1;
                out.total_inferred += a.total();
                for (_, _, v) in a.iter() {
                    out.cellwise_l1 += v.abs();
                    out.max_abs_cell_error = out.max_abs_cell_error.max(v.abs());
                }
            }
            (None, Some(b)) => {
                out.windows_reference_only += 1;
                out.total_reference += b.total();
                for (_, _, v) in b.iter() {
                    out.cellwise_l1 += v.abs();
                    out.max_abs_cell_error = out.max_abs_cell_error.max(v.abs());
                }
            }
            (None, None) => unreachable!("window key without any matrix"),
        }
    }

    out.total_relative_error = if out.total_reference > 0.0 {
        (out.total_inferred - out.total_reference).abs() / out.total_reference
    } else if out.total_inferred > 0.0 {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(out)
}

fn check_d(m: &ODMatrix, d: usize) -> Result<(), MetricsError> {
    if m.d() != d {
        return Err(MetricsError::Od(OdError::DimensionMismatch { left: d, right: m.d() }));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MetricsError {
    DuplicateWindow { window: (i64, i64) },
    Od(OdError),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::DuplicateWindow { window } => {
                write!(f, "two matrices share the window [{}, {})", window.0, window.1)
            }
            MetricsError::Od(e) => write!(f, "{e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for MetricsError {}
