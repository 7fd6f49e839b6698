//! Partitioned dense linear algebra for symmetric system matrices.
//!
//! A symmetric `M` is split at row/column `p` into
//!
//! ```text
//!     M = [ M11  M12 ]        M11: p x p
//!         [ M12' M22 ]        M22: (n-p) x (n-p)
//! ```
//!
//! From the blocks we form the Schur complement `F11 = M11 - M12 M22^-1 M12'`,
//! the four-block closed-form inverse, and the null-space basis
//! `X = [M12 M22^-1; I]` of the transposed input map `G' = [F11^-1,
//! -F11^-1 M12 M22^-1]` (the first `p` rows of `M^-1`). The identity
//! `G' X = 0` is what removes the input from the internal dynamics, so it is
//! cross-checked relentlessly by the test and verification suites.
//!
//! Everything here is dense; intended problem sizes are n <= ~100.

use nalgebra::DMatrix;

use crate::error::{Error, Result, SINGULARITY_LIMIT};

/// Absolute tolerance on `max|M - M^T|` accepted by [`decompose`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Relative singular-value threshold used for numerical rank decisions.
pub const RANK_REL_TOL: f64 = 1e-6;

/// 2-norm condition estimate via singular values. Returns `f64::INFINITY`
/// for exactly singular input.
pub fn condition_estimate(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Numerical rank with singular values measured against `RANK_REL_TOL * s_max`.
pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s >= RANK_REL_TOL * smax).count()
}

/// Max-magnitude entry, the elementwise infinity norm used by the invariants.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Solve `A Y = B` for symmetric `A` with a singularity gate.
///
/// Uses Cholesky when `A` is positive definite and falls back to pivoted LU
/// otherwise (the system class requires symmetry, not definiteness).
pub fn solve_symmetric(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    block: &'static str,
) -> Result<DMatrix<f64>> {
    let cond = condition_estimate(a);
    if !cond.is_finite() || cond > SINGULARITY_LIMIT {
        return Err(Error::SingularBlock { block, cond });
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(b));
    }
    a.clone()
        .lu()
        .solve(b)
        .ok_or(Error::SingularBlock { block, cond })
}

/// The four blocks of a symmetric matrix at one evaluation point. `M21` is
/// kept implicitly as `M12^T`.
#[derive(Debug, Clone)]
pub struct BlockDecomposition {
    m11: DMatrix<f64>,
    m12: DMatrix<f64>,
    m22: DMatrix<f64>,
}

impl BlockDecomposition {
    pub fn m11(&self) -> &DMatrix<f64> {
        &self.m11
    }

    pub fn m12(&self) -> &DMatrix<f64> {
        &self.m12
    }

    pub fn m22(&self) -> &DMatrix<f64> {
        &self.m22
    }

    /// Upper partition size p.
    pub fn p(&self) -> usize {
        self.m11.nrows()
    }

    /// Full dimension n.
    pub fn n(&self) -> usize {
        self.m11.nrows() + self.m22.nrows()
    }
}

/// Null-space basis of the transposed input map: `X = [N; I]` with
/// `N = M12 M22^-1`.
#[derive(Debug, Clone)]
pub struct NullBasis {
    /// Coupling block `N = M12 M22^-1`, p x (n-p).
    pub n: DMatrix<f64>,
    /// Full basis `X = [N; I]`, n x (n-p); its columns span null(G^T).
    pub x: DMatrix<f64>,
}

/// Split a symmetric matrix into blocks at partition index `p`.
pub fn decompose(m: &DMatrix<f64>, p: usize) -> Result<BlockDecomposition> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: m.ncols(),
        });
    }
    if p == 0 || p >= n {
        return Err(Error::InvalidDimensions(format!(
            "partition index p = {p} must satisfy 1 <= p < n = {n}"
        )));
    }
    let residual = max_abs(&(m - m.transpose()));
    if residual > SYMMETRY_TOL {
        return Err(Error::AsymmetricMatrix {
            residual,
            tol: SYMMETRY_TOL,
        });
    }
    Ok(BlockDecomposition {
        m11: m.view((0, 0), (p, p)).into(),
        m12: m.view((0, p), (p, n - p)).into(),
        m22: m.view((p, p), (n - p, n - p)).into(),
    })
}

/// Schur complement `F11 = M11 - M12 M22^-1 M12^T`. The result is
/// symmetrized; it is symmetric in exact arithmetic.
pub fn schur_f11(d: &BlockDecomposition) -> Result<DMatrix<f64>> {
    let y = solve_symmetric(&d.m22, &d.m12.transpose(), "M22")?;
    let f11 = &d.m11 - &d.m12 * y;
    Ok(0.5 * (&f11 + f11.transpose()))
}

/// Closed-form block inverse
///
/// ```text
/// M^-1 = [ F11^-1                -F11^-1 N          ]
///        [ -N^T F11^-1            M22^-1 + N^T F11^-1 N ]
/// ```
///
/// with `N = M12 M22^-1`. This explicit form is itself an object under test;
/// general-purpose code should prefer linear solves.
pub fn block_inverse(d: &BlockDecomposition) -> Result<DMatrix<f64>> {
    let p = d.p();
    let n = d.n();
    let f11 = schur_f11(d)?;
    let f11_inv = solve_symmetric(&f11, &DMatrix::identity(p, p), "F11")?;
    let m22_inv = solve_symmetric(&d.m22, &DMatrix::identity(n - p, n - p), "M22")?;
    // N^T = M22^-1 M12^T by symmetry of M22.
    let nt = solve_symmetric(&d.m22, &d.m12.transpose(), "M22")?;

    let top_right = -&f11_inv * nt.transpose();
    let bottom_left = -&nt * &f11_inv;
    let bottom_right = &m22_inv + &nt * &f11_inv * nt.transpose();

    let mut inv = DMatrix::zeros(n, n);
    inv.view_mut((0, 0), (p, p)).copy_from(&f11_inv);
    inv.view_mut((0, p), (p, n - p)).copy_from(&top_right);
    inv.view_mut((p, 0), (n - p, p)).copy_from(&bottom_left);
    inv.view_mut((p, p), (n - p, n - p)).copy_from(&bottom_right);
    Ok(inv)
}

/// Null-space basis of `G^T`: `N` solves `N M22 = M12`, then `X = [N; I]`.
pub fn null_basis(d: &BlockDecomposition) -> Result<NullBasis> {
    let p = d.p();
    let q = d.n() - p;
    let nt = solve_symmetric(&d.m22, &d.m12.transpose(), "M22")?;
    let n_block = nt.transpose();
    let mut x = DMatrix::zeros(p + q, q);
    x.view_mut((0, 0), (p, q)).copy_from(&n_block);
    x.view_mut((p, 0), (q, q))
        .copy_from(&DMatrix::identity(q, q));
    Ok(NullBasis { n: n_block, x })
}
