//! Per-performance control score: the median of the panel's marks.

use crate::score::Score;

/// Median of a panel's marks, computed over exact rationals.
///
/// For an odd panel this is the middle order statistic; for an even panel
/// the midpoint of the two central values (which may land off the scale
/// grid — control scores are not required to be grid-aligned).
///
/// Panics if fewer than two marks are supplied; panels of size one are
/// filtered out during dataset construction.
pub fn median_control_score(marks: &[Score]) -> Score {
    assert!(
        marks.len() >= 2,
        "control score requires a panel of at least 2 marks"
    );
    let mut sorted = marks.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        Score::midpoint(sorted[n / 2 - 1], sorted[n / 2])
    }
}
