//! Label handling for the packaging-line recordings: the raw ten-operation
//! annotation scheme collapses onto four coarse activities before windowing.

use crate::error::{Error, Result};

/// The four merged activity classes, by id.
pub fn openpack_class_names() -> Vec<String> {
    vec![
        "Pick".to_string(),
        "Label".to_string(),
        "Assemble".to_string(),
        "Scan".to_string(),
    ]
}

/// Maps a raw operation id (1..=10) onto the merged class id.
pub fn merge_openpack_label(raw: usize) -> Result<usize> {
    match raw {
        1 | 9 | 10 => Ok(0), // Pick
        2 | 6 | 8 => Ok(1),  // Label
        3 | 4 | 5 => Ok(2),  // Assemble
        7 => Ok(3),          // Scan
        other => Err(Error::InvalidLabel(format!(
            "raw operation id {other} is outside 1..=10"
        ))),
    }
}

/// Merges a whole label track in place semantics (returns a new vector).
pub fn merge_openpack_labels(raw: &[usize]) -> Result<Vec<usize>> {
    raw.iter().map(|&r| merge_openpack_label(r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_raw_operation_maps_into_four_classes() {
        let expect = [
            (1, 0),
            (2, 1),
            (3, 2),
            (4, 2),
            (5, 2),
            (6, 1),
            (7, 3),
            (8, 1),
            (9, 0),
            (10, 0),
        ];
        for (raw, merged) in expect {
            assert_eq!(merge_openpack_label(raw).unwrap(), merged, "raw id {raw}");
        }
    }

    #[test]
    fn out_of_range_ids_are_rejected() {
        assert!(matches!(
            merge_openpack_label(0),
            Err(Error::InvalidLabel(_))
        ));
        assert!(matches!(
            merge_openpack_label(11),
            Err(Error::InvalidLabel(_))
        ));
    }

    #[test]
    fn track_merge_preserves_length() {
        let raw = vec![1, 7, 3, 10, 8];
        assert_eq!(merge_openpack_labels(&raw).unwrap(), vec![0, 3, 2, 0, 1]);
    }
}
