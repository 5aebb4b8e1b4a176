use std::fmt;

use serde::Serialize;

use super::TrajectorySet;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ViolationKind {
    LengthMismatch {
        expected: usize,
        positions: usize,
        visible: usize,
    },
    NonFinite,
    OutOfBounds {
        row: f64,
        col: f64,
    },
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub track_id: u32,
    pub frame: Option<usize>,
    #[serde(flatten)]
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "track {}", self.track_id)?;
        if let Some(n) = self.frame {
            write!(f, " frame {n}")?;
        }
        match &self.kind {
            ViolationKind::LengthMismatch {
                expected,
                positions,
                visible,
            } => write!(
                f,
                ": expected {expected} frames, got {positions} positions and {visible} flags"
            ),
            ViolationKind::NonFinite => write!(f, ": non-finite coordinate"),
            ViolationKind::OutOfBounds { row, col } => {
                write!(f, ": ({row}, {col}) outside the frame")
            }
            ViolationKind::DuplicateId => write!(f, ": duplicate id"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    /// True when some violation cannot be repaired by clamping.
    pub fn has_structural(&self) -> bool {
        self.violations
            .iter()
            .any(|v| !matches!(v.kind, ViolationKind::OutOfBounds { .. }))
    }
}

/// Lists every problem with a set without modifying it.
pub fn validate_set(set: &TrajectorySet) -> ValidationReport {
    let mut violations = Vec::new();
    for id in set.duplicate_ids() {
        violations.push(Violation {
            track_id: id,
            frame: None,
            kind: ViolationKind::DuplicateId,
        });
    }
    let (max_r, max_c) = (set.height as f64 - 1.0, set.width as f64 - 1.0);
    for t in &set.tracks {
        if t.positions.len() != set.frames || t.visible.len() != set.frames {
            violations.push(Violation {
                track_id: t.id,
                frame: None,
                kind: ViolationKind::LengthMismatch {
                    expected: set.frames,
                    positions: t.positions.len(),
                    visible: t.visible.len(),
                },
            });
        }
        for (n, p) in t.positions.iter().enumerate() {
            let kind = if !p.is_finite() {
                ViolationKind::NonFinite
            } else if p.row < 0.0 || p.row > max_r || p.col < 0.0 || p.col > max_c {
                ViolationKind::OutOfBounds {
                    row: p.row,
                    col: p.col,
                }
            } else {
                continue;
            };
            violations.push(Violation {
                track_id: t.id,
                frame: Some(n),
                kind,
            });
        }
    }
    ValidationReport { violations }
}
