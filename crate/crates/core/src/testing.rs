//! Small fixed matrices shared by unit tests, integration tests and examples.

use crate::matrix::DenseMatrix;

/// The 5×12 example matrix with alphabet {0, 4, 3, 2} used throughout the
/// golden tests.
pub fn matrix_m() -> DenseMatrix {
    DenseMatrix::from_rows(&[
        [0., 3., 0., 2., 4., 0., 0., 2., 3., 4., 0., 4.],
        [4., 4., 0., 0., 0., 4., 0., 0., 4., 4., 0., 4.],
        [4., 0., 3., 4., 0., 0., 0., 4., 0., 2., 0., 0.],
        [0., 0., 0., 4., 4., 4., 0., 3., 4., 4., 0., 0.],
        [0., 4., 4., 0., 0., 4., 0., 4., 0., 0., 0., 0.],
    ])
    .expect("static shape")
}

/// Index of the row whose scalar product is walked through operation by
/// operation in the golden traces (the second row).
pub const TRACED_ROW: usize = 1;
