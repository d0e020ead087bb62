//! Sparse direct linear algebra shared by the solver modules.
//!
//! Compressed-row matrices assembled from triplets, LU / Cholesky
//! factorizations with reusable handles (backed by faer), Schur
//! complements onto interface blocks, and a dense active-set box QP
//! used by the exact-projection certificate.

use std::cell::Cell;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Mat, Side};

use crate::error::{Error, Result};

/// Sparse matrix in compressed-row storage.
///
/// Built from an unordered triplet stream; `finalize` sorts column
/// indices per row and sums duplicates.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

/// Triplet accumulator for assembly.
#[derive(Debug, Clone)]
pub struct TripletList {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletList {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.nrows && j < self.ncols);
        if v != 0.0 {
            self.entries.push((i, j, v));
        }
    }

    pub fn finalize(self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.nrows, self.ncols, self.entries)
    }

    pub fn finalize_symmetric(self) -> SparseMatrix {
        let mut m = self.finalize();
        m.symmetric = true;
        m
    }
}

impl SparseMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for &(i, j, v) in &entries {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { nrows, ncols, row_ptr, col_idx, values, symmetric: false }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric_flagged(&self) -> bool {
        self.symmetric
    }

    pub fn set_symmetric(&mut self, s: bool) {
        self.symmetric = s;
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        let mut y = vec![0.0; self.nrows];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                acc += v * x[j];
            }
            y[i] = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.nrows);
        let mut y = vec![0.0; self.ncols];
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                y[j] += v * x[i];
            }
        }
        y
    }

    /// Largest absolute deviation from symmetry, `max |a_ij - a_ji|`.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                m[(i, j)] += v;
            }
        }
        m
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let mut trips = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                trips.push(Triplet::new(i, j, v));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &trips)
            .map_err(|e| Error::LinearSolve(format!("sparse conversion failed: {e:?}")))
    }
}

enum FactorKind {
    Llt(Llt<usize, f64>),
    Lu(Lu<usize, f64>),
}

/// Reusable factorization handle over a square sparse matrix.
///
/// Symmetric-flagged matrices go through sparse Cholesky (with LU as
/// fallback for indefinite saddle systems); everything else through LU
/// with partial pivoting. Every solve records its relative residual so
/// callers can monitor round-trip accuracy.
pub struct Factorization {
    matrix: SparseMatrix,
    kind: FactorKind,
    last_residual: Cell<f64>,
    worst_residual: Cell<f64>,
}

pub fn factorize(a: &SparseMatrix) -> Result<Factorization> {
    if a.nrows() != a.ncols() {
        return Err(Error::LinearSolve(format!("matrix not square: {}x{}", a.nrows(), a.ncols())));
    }
    // structural singularity: an empty row or column can never be pivoted
    let mut col_seen = vec![false; a.ncols()];
    for i in 0..a.nrows() {
        let (cols, vals) = a.row(i);
        if vals.iter().all(|v| *v == 0.0) {
            return Err(Error::SingularPivot(i));
        }
        for &j in cols {
            col_seen[j] = true;
        }
    }
    if let Some(j) = col_seen.iter().position(|s| !s) {
        return Err(Error::SingularPivot(j));
    }

    let fa = a.to_faer()?;
    let kind = if a.is_symmetric_flagged() {
        let sym = SymbolicLlt::try_new(fa.symbolic(), Side::Lower)
            .map_err(|e| Error::LinearSolve(format!("symbolic cholesky failed: {e:?}")))?;
        match Llt::try_new_with_symbolic(sym, fa.as_ref(), Side::Lower) {
            Ok(f) => FactorKind::Llt(f),
            Err(_) => FactorKind::Lu(lu_factor(&fa)?),
        }
    } else {
        FactorKind::Lu(lu_factor(&fa)?)
    };
    Ok(Factorization {
        matrix: a.clone(),
        kind,
        last_residual: Cell::new(0.0),
        worst_residual: Cell::new(0.0),
    })
}

fn lu_factor(fa: &SparseColMat<usize, f64>) -> Result<Lu<usize, f64>> {
    let sym = SymbolicLu::try_new(fa.symbolic())
        .map_err(|e| Error::LinearSolve(format!("symbolic LU failed: {e:?}")))?;
    let fa_ref = fa.as_ref();
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        Lu::try_new_with_symbolic(sym, fa_ref)
    }))
    .map_err(|_| Error::LinearSolve("LU factorization hit an exactly singular pivot".into()))?
    .map_err(|e| Error::LinearSolve(format!("LU factorization failed: {e:?}")))
}

impl Factorization {
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.matrix.nrows();
        assert_eq!(rhs.len(), n);
        let mut b = Mat::zeros(n, 1);
        for i in 0..n {
            b[(i, 0)] = rhs[i];
        }
        let x = match &self.kind {
            FactorKind::Llt(f) => f.solve(&b),
            FactorKind::Lu(f) => f.solve(&b),
        };
        let xv: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if xv.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolve("non-finite solution (singular or ill-conditioned matrix)".into()));
        }
        let ax = self.matrix.matvec(&xv);
        let bnorm = rhs.iter().map(|v| v * v).sum::<f64>().sqrt();
        let rnorm = ax.iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        let rel = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
        self.last_residual.set(rel);
        if rel > self.worst_residual.get() {
            self.worst_residual.set(rel);
        }
        Ok(xv)
    }

    /// Solve for several right-hand sides given as columns.
    pub fn solve_many(&self, rhs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rhs.iter().map(|b| self.solve(b)).collect()
    }

    pub fn last_residual(&self) -> f64 {
        self.last_residual.get()
    }

    pub fn worst_residual(&self) -> f64 {
        self.worst_residual.get()
    }
}

/// Schur complement `S = A_gg - A_gi A_ii^{-1} A_ig` onto `interface_dofs`.
///
/// The eliminated block must be positive definite.
pub fn schur_complement(a: &SparseMatrix, interface_dofs: &[usize]) -> Result<Mat<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let ng = interface_dofs.len();
    let mut is_iface = vec![false; n];
    for &d in interface_dofs {
        is_iface[d] = true;
    }
    let interior: Vec<usize> = (0..n).filter(|&i| !is_iface[i]).collect();
    let mut interior_pos = vec![usize::MAX; n];
    for (k, &d) in interior.iter().enumerate() {
        interior_pos[d] = k;
    }
    let mut iface_pos = vec![usize::MAX; n];
    for (k, &d) in interface_dofs.iter().enumerate() {
        iface_pos[d] = k;
    }

    let ni = interior.len();
    let mut aii = TripletList::new(ni, ni);
    let mut aig = Mat::<f64>::zeros(ni, ng);
    let mut agg = Mat::<f64>::zeros(ng, ng);
    let mut agi = Mat::<f64>::zeros(ng, ni);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            match (is_iface[i], is_iface[j]) {
                (false, false) => aii.push(interior_pos[i], interior_pos[j], v),
                (false, true) => aig[(interior_pos[i], iface_pos[j])] += v,
                (true, false) => agi[(iface_pos[i], interior_pos[j])] += v,
                (true, true) => agg[(iface_pos[i], iface_pos[j])] += v,
            }
        }
    }

    if ni == 0 {
        return Ok(agg);
    }
    let mut aii = aii.finalize();
    aii.set_symmetric(a.is_symmetric_flagged());
    let f = factorize(&aii)?;
    let mut s = agg;
    for c in 0..ng {
        let col: Vec<f64> = (0..ni).map(|r| aig[(r, c)]).collect();
        let x = f.solve(&col)?;
        for r in 0..ng {
            let mut acc = 0.0;
            for k in 0..ni {
                acc += agi[(r, k)] * x[k];
            }
            s[(r, c)] -= acc;
        }
    }
    Ok(s)
}

/// Minimizes `0.5 x'Hx + c'x` subject to `lo <= x <= hi` by a primal
/// active-set method. `H` must be symmetric positive definite.
pub fn box_qp(h: &Mat<f64>, c: &[f64], lo: &[f64], hi: &[f64]) -> Result<Vec<f64>> {
    let n = c.len();
    assert_eq!(h.nrows(), n);
    assert_eq!(h.ncols(), n);
    assert_eq!(lo.len(), n);
    assert_eq!(hi.len(), n);
    for i in 0..n {
        if lo[i] > hi[i] {
            return Err(Error::Precondition(format!("box_qp: empty box at index {i}")));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Act {
        Free,
        Lo,
        Hi,
    }

    let clamp = |x: &mut [f64]| {
        for i in 0..x.len() {
            x[i] = x[i].max(lo[i]).min(hi[i]);
        }
    };

    let mut x: Vec<f64> = (0..n).map(|i| 0.5 * (lo[i].max(-1e100) + hi[i].min(1e100))).collect();
    clamp(&mut x);
    let mut act: Vec<Act> = (0..n)
        .map(|i| {
            if x[i] <= lo[i] {
                Act::Lo
            } else if x[i] >= hi[i] {
                Act::Hi
            } else {
                Act::Free
            }
        })
        .collect();

    let grad = |x: &[f64]| -> Vec<f64> {
        let mut g = c.to_vec();
        for i in 0..n {
            for j in 0..n {
                g[i] += h[(i, j)] * x[j];
            }
        }
        g
    };

    let max_iter = 30 * (n + 2);
    for _ in 0..max_iter {
        // solve the equality-constrained subproblem on the free set
        let free: Vec<usize> = (0..n).filter(|&i| act[i] == Act::Free).collect();
        let nf = free.len();
        let mut xs = x.clone();
        if nf > 0 {
            let mut hf = Mat::<f64>::zeros(nf, nf);
            let mut rf = vec![0.0; nf];
            for (a, &i) in free.iter().enumerate() {
                let mut r = -c[i];
                for j in 0..n {
                    if act[j] != Act::Free {
                        r -= h[(i, j)] * x[j];
                    }
                }
                rf[a] = r;
                for (b, &j) in free.iter().enumerate() {
                    hf[(a, b)] = h[(i, j)];
                }
            }
            let llt = faer::linalg::solvers::Llt::new(hf.as_ref(), Side::Lower)
                .map_err(|_| Error::LinearSolve("box_qp: free block not positive definite".into()))?;
            let mut bm = Mat::<f64>::zeros(nf, 1);
            for a in 0..nf {
                bm[(a, 0)] = rf[a];
            }
            let sol = llt.solve(&bm);
            for (a, &i) in free.iter().enumerate() {
                xs[i] = sol[(a, 0)];
            }
        }

        // ratio test toward the subproblem solution
        let mut alpha = 1.0f64;
        let mut hit: Option<(usize, Act)> = None;
        for &i in &free {
            let d = xs[i] - x[i];
            if d > 0.0 && xs[i] > hi[i] {
                let a = (hi[i] - x[i]) / d;
                if a < alpha {
                    alpha = a;
                    hit = Some((i, Act::Hi));
                }
            } else if d < 0.0 && xs[i] < lo[i] {
                let a = (lo[i] - x[i]) / d;
                if a < alpha {
                    alpha = a;
                    hit = Some((i, Act::Lo));
                }
            }
        }
        for &i in &free {
            x[i] += alpha * (xs[i] - x[i]);
        }
        clamp(&mut x);
        if let Some((i, side)) = hit {
            act[i] = side;
            x[i] = if side == Act::Lo { lo[i] } else { hi[i] };
            continue;
        }

        // full step accepted: check bound multipliers for optimality
        let g = grad(&x);
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..n {
            let viol = match act[i] {
                Act::Free => 0.0,
                Act::Lo => (-g[i]).max(0.0),
                Act::Hi => g[i].max(0.0),
            };
            if viol > 1e-12 && worst.map_or(true, |(_, w)| viol > w) {
                worst = Some((i, viol));
            }
        }
        match worst {
            Some((i, _)) => act[i] = Act::Free,
            None => {
                // KKT residual: projected gradient
                let mut kkt: f64 = 0.0;
                for i in 0..n {
                    let pg = if x[i] <= lo[i] + 1e-14 {
                        g[i].min(0.0)
                    } else if x[i] >= hi[i] - 1e-14 {
                        g[i].max(0.0)
                    } else {
                        g[i]
                    };
                    kkt = kkt.max(pg.abs());
                }
                let scale = 1.0 + c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if kkt <= 1e-9 * scale {
                    return Ok(x);
                }
                return Err(Error::Numerical(format!("box_qp: KKT residual {kkt:.3e} above tolerance")));
            }
        }
    }
    Err(Error::Numerical("box_qp: active-set iteration cap exceeded".into()))
}
