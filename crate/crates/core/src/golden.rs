//! The fixed worked-example instance: `p = m = n = 4`, `b' = 2`, `d = 3`,
//! recovery threshold 75.
//!
//! The six hash/sign pairs are shipped as explicit tables rather than derived
//! from seeds, matching the sketch polynomials of the worked example:
//!
//! ```text
//! F1 = (-A0 + A1 + A3) - A2*a        G1 = (-B1 - B3) + (B0 + B2)*a
//! F2 = ( A1 + A2) + (A0 - A3)*a      G2 = ( B0 - B1) + (-B2 + B3)*a
//! F3 = A2 + (-A0 + A1 + A3)*a        G3 = (-B1 - B2 + B3) + B0*a
//! ```

use crate::engine::{SchemeParams, SketchFamily};
use crate::error::Result;

pub const GOLDEN_P: usize = 4;
pub const GOLDEN_M: usize = 4;
pub const GOLDEN_N: usize = 4;
pub const GOLDEN_BPRIME: usize = 2;
pub const GOLDEN_D: usize = 3;
/// `threshold_cs(4, 2, 3)`.
pub const GOLDEN_THRESHOLD: usize = 75;

/// The fixed hash/sign tables of the worked example.
pub fn golden_family() -> SketchFamily {
    let row = [
        (vec![0, 0, 1, 0], vec![-1i8, 1, -1, 1]),
        (vec![1, 0, 0, 1], vec![1, 1, 1, -1]),
        (vec![1, 1, 0, 1], vec![-1, 1, 1, 1]),
    ];
    let col = [
        (vec![1, 0, 1, 0], vec![1i8, -1, 1, -1]),
        (vec![0, 0, 1, 1], vec![1, -1, -1, 1]),
        (vec![1, 0, 0, 0], vec![1, -1, -1, 1]),
    ];
    SketchFamily::from_tables(&row, &col, GOLDEN_BPRIME).expect("fixture tables are well formed")
}

/// Scheme parameters of the worked example with a chosen worker count
/// (`workers = 0` means exactly the 75-worker threshold).
pub fn golden_params(workers: usize) -> Result<SchemeParams> {
    SchemeParams::new(GOLDEN_P, GOLDEN_M, GOLDEN_N, GOLDEN_BPRIME, GOLDEN_D, workers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixture_reproduces_the_sketch_structure() {
        let fam = golden_family();
        assert_eq!(fam.d(), 3);
        assert_eq!(fam.bprime(), 2);
        // F1 = (-A0 + A1 + A3) - A2*alpha
        assert_eq!(
            (0..4).map(|i| fam.row_hash(0, i)).collect::<Vec<_>>(),
            vec![0, 0, 1, 0]
        );
        assert_eq!(
            (0..4).map(|i| fam.row_sign(0, i)).collect::<Vec<_>>(),
            vec![-1.0, 1.0, -1.0, 1.0]
        );
        // G3 = (-B1 - B2 + B3) + B0*alpha
        assert_eq!(
            (0..4).map(|j| fam.col_hash(2, j)).collect::<Vec<_>>(),
            vec![1, 0, 0, 0]
        );
        assert_eq!(
            (0..4).map(|j| fam.col_sign(2, j)).collect::<Vec<_>>(),
            vec![1.0, -1.0, -1.0, 1.0]
        );
    }

    #[test]
    fn golden_threshold() {
        let params = golden_params(80).unwrap();
        assert_eq!(params.threshold(), GOLDEN_THRESHOLD);
        assert!(golden_params(74).is_err());
    }
}
