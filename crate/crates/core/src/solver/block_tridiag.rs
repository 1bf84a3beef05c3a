//! Symmetric positive-definite block-tridiagonal systems with 4x4 blocks.

use nalgebra::{Matrix4, Vector4};

/// Lower half of a symmetric block-tridiagonal matrix. `sub[t]` is the block
/// at (t + 1, t).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTridiagonal {
    pub diag: Vec<Matrix4<f64>>,
    pub sub: Vec<Matrix4<f64>>,
}

impl BlockTridiagonal {
    pub fn zeros(blocks: usize) -> Self {
        Self {
            diag: vec![Matrix4::zeros(); blocks],
            sub: vec![Matrix4::zeros(); blocks.saturating_sub(1)],
        }
    }

    pub fn blocks(&self) -> usize {
        self.diag.len()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.blocks();
        let mut m = nalgebra::DMatrix::zeros(4 * n, 4 * n);
        for (t, d) in self.diag.iter().enumerate() {
            m.fixed_view_mut::<4, 4>(4 * t, 4 * t).copy_from(d);
        }
        for (t, s) in self.sub.iter().enumerate() {
            m.fixed_view_mut::<4, 4>(4 * (t + 1), 4 * t).copy_from(s);
            m.fixed_view_mut::<4, 4>(4 * t, 4 * (t + 1)).copy_from(&s.transpose());
        }
        m
    }

    /// Solves `A x = rhs` by block Cholesky in O(blocks). Returns `None` when
    /// a pivot block is not positive definite.
    pub fn solve(&self, rhs: &[Vector4<f64>]) -> Option<Vec<Vector4<f64>>> {
        let n = self.blocks();
        assert_eq!(rhs.len(), n, "rhs block count");
        if n == 0 {
            return Some(Vec::new());
        }
        // A = L L^T with L block lower-bidiagonal: diagonal factors `ld`,
        // off-diagonal `lo[t]` at (t + 1, t).
        let mut ld: Vec<Matrix4<f64>> = Vec::with_capacity(n);
        let mut lo: Vec<Matrix4<f64>> = Vec::with_capacity(n - 1);
        ld.push(self.diag[0].cholesky()?.l());
        for t in 0..n - 1 {
            // lo = A_sub * L_t^{-T}  <=>  L_t lo^T = A_sub^T
            let lot = ld[t].solve_lower_triangular(&self.sub[t].transpose())?;
            let off = lot.transpose();
            let schur = self.diag[t + 1] - off * lot;
            lo.push(off);
            ld.push(schur.cholesky()?.l());
        }

        let mut y = Vec::with_capacity(n);
        y.push(ld[0].solve_lower_triangular(&rhs[0])?);
        for t in 1..n {
            let b = rhs[t] - lo[t - 1] * y[t - 1];
            y.push(ld[t].solve_lower_triangular(&b)?);
        }

        let mut x = vec![Vector4::zeros(); n];
        x[n - 1] = ld[n - 1].tr_solve_lower_triangular(&y[n - 1])?;
        for t in (0..n - 1).rev() {
            let b = y[t] - lo[t].transpose() * x[t + 1];
            x[t] = ld[t].tr_solve_lower_triangular(&b)?;
        }
        Some(x)
    }
}
