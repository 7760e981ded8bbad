//! Sparse matrices with a fixed pattern built from element DoF lists, and
//! thin wrappers over faer's sparse Cholesky and LU factorizations.

use faer::linalg::solvers::SolveCore;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::perm::PermRef;
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LdltRef, LltRef, SymbolicCholesky, SymmetricOrdering};
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, Mat, Par, Side};
use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Marks a local DoF that does not enter the global matrix.
pub const SKIP: usize = usize::MAX;

/// Compressed sparse column pattern, optionally storing the lower triangle
/// only.
#[derive(Debug, Clone)]
pub struct CscPattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub lower_only: bool,
}

impl CscPattern {
    /// Pattern of `Σ_e P_eᵀ A_e P_e` for dense element blocks on the given
    /// global index lists (entries equal to [`SKIP`] are ignored).
    pub fn from_elements(n: usize, elements: &[Vec<usize>], lower_only: bool) -> Self {
        let mut count = vec![0usize; n + 1];
        for e in elements {
            for &i in e.iter().filter(|&&i| i != SKIP) {
                count[i + 1] += 1;
            }
        }
        for i in 0..n {
            count[i + 1] += count[i];
        }
        let mut elems_of = vec![0usize; count[n]];
        let mut fill = count.clone();
        for (k, e) in elements.iter().enumerate() {
            for &i in e.iter().filter(|&&i| i != SKIP) {
                elems_of[fill[i]] = k;
                fill[i] += 1;
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        let mut scratch = Vec::new();
        for j in 0..n {
            scratch.clear();
            for &k in &elems_of[count[j]..count[j + 1]] {
                scratch.extend(
                    elements[k]
                        .iter()
                        .copied()
                        .filter(|&i| i != SKIP && (!lower_only || i >= j)),
                );
            }
            scratch.sort_unstable();
            scratch.dedup();
            // Keep the diagonal structurally present.
            if let Err(pos) = scratch.binary_search(&j) {
                scratch.insert(pos, j);
            }
            row_idx.extend_from_slice(&scratch);
            col_ptr.push(row_idx.len());
        }
        Self {
            n,
            col_ptr,
            row_idx,
            lower_only,
        }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    pub fn find(&self, row: usize, col: usize) -> Option<usize> {
        let r = &self.row_idx[self.col_ptr[col]..self.col_ptr[col + 1]];
        r.binary_search(&row).ok().map(|k| self.col_ptr[col] + k)
    }
}

#[derive(Debug, Clone)]
pub struct CscMatrix {
    pub pattern: CscPattern,
    pub values: Vec<f64>,
}

impl CscMatrix {
    pub fn zeros(pattern: CscPattern) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n
    }

    /// Adds a dense element block. Rows and columns marked [`SKIP`] are
    /// dropped; with a lower-only pattern the upper part is ignored.
    pub fn add_local(&mut self, dofs: &[usize], local: &DMatrix<f64>) {
        for (b, &j) in dofs.iter().enumerate() {
            if j == SKIP {
                continue;
            }
            for (a, &i) in dofs.iter().enumerate() {
                if i == SKIP || (self.pattern.lower_only && i < j) {
                    continue;
                }
                let v = local[(a, b)];
                if v != 0.0 {
                    let k = self.pattern.find(i, j).expect("entry outside the pattern");
                    self.values[k] += v;
                }
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if self.pattern.lower_only && i < j { (j, i) } else { (i, j) };
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// `y = A x`, expanding a lower-only pattern symmetrically.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        let mut y = vec![0.0; p.n];
        for j in 0..p.n {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[k];
                y[i] += self.values[k] * x[j];
                if p.lower_only && i != j {
                    y[j] += self.values[k] * x[i];
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let p = &self.pattern;
        let mut d = DMatrix::zeros(p.n, p.n);
        for j in 0..p.n {
            for k in p.col_ptr[j]..p.col_ptr[j + 1] {
                let i = p.row_idx[k];
                d[(i, j)] += self.values[k];
                if p.lower_only && i != j {
                    d[(j, i)] += self.values[k];
                }
            }
        }
        d
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        let p = &self.pattern;
        let sym = SymbolicSparseColMatRef::new_checked(p.n, p.n, &p.col_ptr, None, &p.row_idx);
        SparseColMatRef::new(sym, &self.values)
    }
}

fn solve_with(solver: &dyn SolveCore<f64>, rhs: &[f64]) -> Vec<f64> {
    let mut b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
    solver.solve_in_place_with_conj(Conj::No, b.as_mut());
    (0..rhs.len()).map(|i| b[(i, 0)]).collect()
}

/// Sparse Cholesky factorization of an SPD matrix stored lower-only.
pub struct Cholesky {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
}

impl Cholesky {
    /// Factorization with faer's default (AMD) fill-reducing ordering.
    pub fn new(a: &CscMatrix) -> Result<Self> {
        Self::with_ordering(a, None)
    }

    /// Factorization with an optional user permutation; `perm[i]` is the
    /// original index placed at position `i`.
    pub fn with_ordering(a: &CscMatrix, perm: Option<&[usize]>) -> Result<Self> {
        if !a.pattern.lower_only {
            return Err(Error::LinearSolver("Cholesky expects a lower-triangular pattern".into()));
        }
        let m = a.as_faer();
        let symbolic = match perm {
            Some(fwd) => {
                if fwd.len() != a.pattern.n {
                    return Err(Error::LinearSolver("ordering length does not match the matrix".into()));
                }
                let inv = inverse_permutation(fwd)?;
                let perm = PermRef::new_checked(fwd, &inv, fwd.len());
                factorize_symbolic_cholesky(
                    m.symbolic(),
                    Side::Lower,
                    SymmetricOrdering::Custom(perm),
                    Default::default(),
                )
            }
            None => factorize_symbolic_cholesky(m.symbolic(), Side::Lower, SymmetricOrdering::Amd, Default::default()),
        }
        .map_err(|e| Error::LinearSolver(format!("symbolic Cholesky: {e:?}")))?;
        let mut values = vec![0.0; symbolic.len_val()];
        let par = Par::Seq;
        let mut mem = MemBuffer::try_new(symbolic.factorize_numeric_llt_scratch::<f64>(par, Default::default()))
            .map_err(|e| Error::LinearSolver(format!("Cholesky workspace: {e:?}")))?;
        symbolic
            .factorize_numeric_llt::<f64>(
                &mut values,
                m,
                Side::Lower,
                Default::default(),
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::LinearSolver(format!("Cholesky: {e:?}")))?;
        Ok(Self { symbolic, values })
    }

    /// Stored entries of the factor.
    pub fn factor_len(&self) -> usize {
        self.values.len()
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let par = Par::Seq;
        let mut b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        LltRef::<usize, f64>::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            b.as_mut(),
            par,
            MemStack::new(&mut mem),
        );
        (0..rhs.len()).map(|i| b[(i, 0)]).collect()
    }
}

/// `LDLᵀ` factorization of a symmetric quasi-definite matrix (positive
/// block, then negative block) stored lower-only, with a caller ordering.
///
/// Pivots that come out too small or with the wrong sign are replaced by a
/// small value of the expected sign; [`QuasiDefiniteLdlt::solve`] corrects
/// for this with iterative refinement against the assembled matrix.
pub struct QuasiDefiniteLdlt {
    symbolic: SymbolicCholesky<usize>,
    values: Vec<f64>,
    signs: Vec<i8>,
    factored: bool,
}

impl QuasiDefiniteLdlt {
    /// Symbolic analysis. `signs[i]` is `+1` or `-1`, the expected sign of
    /// the pivot of row `i`.
    pub fn analyze(pattern: &CscPattern, perm: &[usize], signs: Vec<i8>) -> Result<Self> {
        if !pattern.lower_only {
            return Err(Error::LinearSolver("LDLT expects a lower-triangular pattern".into()));
        }
        let n = pattern.n;
        if perm.len() != n || signs.len() != n {
            return Err(Error::LinearSolver("ordering or sign length does not match the matrix".into()));
        }
        let inverse = inverse_permutation(perm)?;
        let sym = SymbolicSparseColMatRef::new_checked(n, n, &pattern.col_ptr, None, &pattern.row_idx);
        let symbolic = factorize_symbolic_cholesky(
            sym,
            Side::Lower,
            SymmetricOrdering::Custom(PermRef::new_checked(perm, &inverse, n)),
            Default::default(),
        )
        .map_err(|e| Error::LinearSolver(format!("symbolic LDLT: {e:?}")))?;
        Ok(Self {
            values: vec![0.0; symbolic.len_val()],
            symbolic,
            signs,
            factored: false,
        })
    }

    pub fn factor_len(&self) -> usize {
        self.values.len()
    }

    /// Numeric factorization of a matrix with the analyzed pattern.
    pub fn factorize(&mut self, a: &CscMatrix) -> Result<()> {
        let scale = (0..a.n()).map(|i| a.get(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let par = Par::Seq;
        let mut mem = MemBuffer::try_new(self.symbolic.factorize_numeric_ldlt_scratch::<f64>(par, Default::default()))
            .map_err(|e| Error::LinearSolver(format!("LDLT workspace: {e:?}")))?;
        self.symbolic
            .factorize_numeric_ldlt::<f64>(
                &mut self.values,
                a.as_faer(),
                Side::Lower,
                LdltRegularization {
                    dynamic_regularization_signs: Some(&self.signs),
                    dynamic_regularization_delta: 1e-10 * scale,
                    dynamic_regularization_epsilon: 1e-14 * scale,
                },
                par,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::LinearSolver(format!("LDLT: {e:?}")))?;
        self.factored = true;
        Ok(())
    }

    fn apply(&self, rhs: &[f64]) -> Vec<f64> {
        let par = Par::Seq;
        let mut b = Mat::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(1, par));
        LdltRef::<usize, f64>::new(&self.symbolic, &self.values).solve_in_place_with_conj(
            Conj::No,
            b.as_mut(),
            par,
            MemStack::new(&mut mem),
        );
        (0..rhs.len()).map(|i| b[(i, 0)]).collect()
    }

    /// Solves `a x = rhs` with up to `max_refine` refinement steps. Returns
    /// the solution and its relative residual.
    pub fn solve(&self, a: &CscMatrix, rhs: &[f64], max_refine: usize) -> Result<(Vec<f64>, f64)> {
        if !self.factored {
            return Err(Error::LinearSolver("LDLT used before factorization".into()));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rn = norm(rhs).max(f64::MIN_POSITIVE);
        let mut x = self.apply(rhs);
        let mut r: Vec<f64> = a.matvec(&x).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
        let mut resid = norm(&r) / rn;
        for _ in 0..max_refine {
            if resid < 1e-14 {
                break;
            }
            let dx = self.apply(&r);
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            let tr: Vec<f64> = a.matvec(&trial).iter().zip(rhs).map(|(ax, b)| b - ax).collect();
            let t = norm(&tr) / rn;
            if !(t < resid) {
                break;
            }
            x = trial;
            r = tr;
            resid = t;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolver("LDLT solve produced non-finite values".into()));
        }
        Ok((x, resid))
    }
}

fn inverse_permutation(fwd: &[usize]) -> Result<Vec<usize>> {
    let mut inv = vec![SKIP; fwd.len()];
    for (i, &p) in fwd.iter().enumerate() {
        if p >= fwd.len() || inv[p] != SKIP {
            return Err(Error::LinearSolver("ordering is not a permutation".into()));
        }
        inv[p] = i;
    }
    Ok(inv)
}

/// Sparse LU with the symbolic analysis kept for refactorization.
pub struct SparseLu {
    symbolic: SymbolicLu<usize>,
    lu: Option<Lu<usize, f64>>,
}

impl SparseLu {
    pub fn analyze(a: &CscMatrix) -> Result<Self> {
        if a.pattern.lower_only {
            return Err(Error::LinearSolver("LU expects a full pattern".into()));
        }
        let symbolic = SymbolicLu::try_new(a.as_faer().symbolic())
            .map_err(|e| Error::LinearSolver(format!("symbolic LU: {e:?}")))?;
        Ok(Self { symbolic, lu: None })
    }

    /// Numeric factorization of a matrix sharing the analyzed pattern.
    pub fn factorize(&mut self, a: &CscMatrix) -> Result<()> {
        let lu = Lu::try_new_with_symbolic(self.symbolic.clone(), a.as_faer())
            .map_err(|e| Error::LinearSolver(format!("LU: {e:?}")))?;
        self.lu = Some(lu);
        Ok(())
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = self
            .lu
            .as_ref()
            .ok_or_else(|| Error::LinearSolver("LU used before factorization".into()))?;
        let x = solve_with(lu, rhs);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolver("LU solve produced non-finite values".into()));
        }
        Ok(x)
    }
}

/// Geometric nested-dissection ordering of a symmetric pattern.
///
/// The node set is split at the median coordinate along its widest axis;
/// the nodes of the smaller side touching the other side form the
/// separator, ordered after both halves. Returns `perm` with `perm[i]` the
/// original node placed at position `i`.
pub fn nested_dissection(pattern: &CscPattern, coords: &[[f64; 3]], leaf: usize) -> Vec<usize> {
    let n = pattern.n;
    assert_eq!(coords.len(), n);
    let mut deg = vec![0usize; n + 1];
    for j in 0..n {
        for &i in &pattern.row_idx[pattern.col_ptr[j]..pattern.col_ptr[j + 1]] {
            if i != j {
                deg[i + 1] += 1;
                if pattern.lower_only {
                    deg[j + 1] += 1;
                }
            }
        }
    }
    for i in 0..n {
        deg[i + 1] += deg[i];
    }
    let mut adj = vec![0usize; deg[n]];
    let mut fill = deg.clone();
    for j in 0..n {
        for &i in &pattern.row_idx[pattern.col_ptr[j]..pattern.col_ptr[j + 1]] {
            if i != j {
                adj[fill[i]] = j;
                fill[i] += 1;
                if pattern.lower_only {
                    adj[fill[j]] = i;
                    fill[j] += 1;
                }
            }
        }
    }
    let neighbours = |i: usize| &adj[deg[i]..deg[i + 1]];

    // side[i]: 0 outside the current set, 1 left, 2 right.
    let mut side = vec![0u8; n];
    let mut order = Vec::with_capacity(n);
    // Stack of sets still to order; separators are pushed first so that
    // they come out last.
    enum Task {
        Split(Vec<usize>),
        Emit(Vec<usize>),
    }
    let mut stack = vec![Task::Split((0..n).collect())];
    let mut emitted = Vec::new();
    while let Some(task) = stack.pop() {
        let set = match task {
            Task::Emit(set) => {
                emitted.push(set);
                continue;
            }
            Task::Split(set) => set,
        };
        if set.len() <= leaf {
            emitted.push(set);
            continue;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &set {
            for d in 0..3 {
                lo[d] = lo[d].min(coords[i][d]);
                hi[d] = hi[d].max(coords[i][d]);
            }
        }
        let axis = (0..3).max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b]))).unwrap();
        let mut vals: Vec<f64> = set.iter().map(|&i| coords[i][axis]).collect();
        let mid = vals.len() / 2;
        let t = *vals.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1;
        let mut left: Vec<usize> = set.iter().copied().filter(|&i| coords[i][axis] < t).collect();
        if left.is_empty() {
            left = set.iter().copied().filter(|&i| coords[i][axis] <= t).collect();
        }
        if left.is_empty() || left.len() == set.len() {
            emitted.push(set);
            continue;
        }
        for &i in &set {
            side[i] = 2;
        }
        for &i in &left {
            side[i] = 1;
        }
        let touching = |s: u8, side: &[u8]| -> Vec<bool> {
            set.iter()
                .map(|&i| side[i] == s && neighbours(i).iter().any(|&j| side[j] != 0 && side[j] != s))
                .collect()
        };
        let tl = touching(1, &side);
        let tr = touching(2, &side);
        let sep_side = if tl.iter().filter(|&&b| b).count() <= tr.iter().filter(|&&b| b).count() { 1 } else { 2 };
        let marks = if sep_side == 1 { tl } else { tr };
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut sep = Vec::new();
        for (k, &i) in set.iter().enumerate() {
            if marks[k] {
                sep.push(i);
            } else if side[i] == 1 {
                a.push(i);
            } else {
                b.push(i);
            }
        }
        for &i in &set {
            side[i] = 0;
        }
        stack.push(Task::Emit(sep));
        stack.push(Task::Split(b));
        stack.push(Task::Split(a));
    }
    for set in emitted {
        order.extend(set);
    }
    order
}
