//! Thomas algorithm for tridiagonal systems.

/// Smallest pivot magnitude accepted during elimination.
pub const PIVOT_FLOOR: f64 = 1e-300;

/// Tridiagonal matrix stored by diagonals. Row `i` reads
/// `lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, Default)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

/// Row index and value of a pivot that fell below [`PIVOT_FLOOR`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotBreakdown {
    pub row: usize,
    pub pivot: f64,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                if i > 0 {
                    acc += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    acc += self.upper[i] * x[i + 1];
                }
                acc
            })
            .collect()
    }

    /// Solves `A x = rhs` without pivoting, using `scratch` for the
    /// modified upper diagonal.
    pub fn solve_into(
        &self,
        rhs: &[f64],
        x: &mut [f64],
        scratch: &mut Vec<f64>,
    ) -> Result<(), PivotBreakdown> {
        let n = self.len();
        debug_assert_eq!(rhs.len(), n);
        debug_assert_eq!(x.len(), n);
        if n == 0 {
            return Ok(());
        }
        scratch.clear();
        scratch.resize(n, 0.0);

        let mut pivot = self.diag[0];
        if !(pivot.abs() >= PIVOT_FLOOR) {
            return Err(PivotBreakdown { row: 0, pivot });
        }
        scratch[0] = self.upper[0] / pivot;
        x[0] = rhs[0] / pivot;
        for i in 1..n {
            pivot = self.diag[i] - self.lower[i] * scratch[i - 1];
            if !(pivot.abs() >= PIVOT_FLOOR) {
                return Err(PivotBreakdown { row: i, pivot });
            }
            scratch[i] = if i + 1 < n { self.upper[i] / pivot } else { 0.0 };
            x[i] = (rhs[i] - self.lower[i] * x[i - 1]) / pivot;
        }
        for i in (0..n - 1).rev() {
            x[i] -= scratch[i] * x[i + 1];
        }
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, PivotBreakdown> {
        let mut x = vec![0.0; self.len()];
        let mut scratch = Vec::new();
        self.solve_into(rhs, &mut x, &mut scratch)?;
        Ok(x)
    }
}
