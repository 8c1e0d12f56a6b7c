//! Dense complex linear algebra used everywhere else.
//!
//! Matrices are `nalgebra::DMatrix<Complex64>` (column-major). Decompositions
//! come from nalgebra; the hot loops (products, inner products, incremental
//! orthogonalization) are written against the raw column-major storage.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn zeros(r: usize, k: usize) -> CMat {
    CMat::zeros(r, k)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn adj(a: &CMat) -> CMat {
    a.adjoint()
}

/// Product that skips zero entries of the right factor. Fiber matrices of
/// action bundles are mostly zeros, so this is much faster than a plain gemm
/// for them; large dense products go to the blocked kernel instead.
pub fn mm(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "shape mismatch in product");
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    if n * k * m >= DENSE_WORK {
        let nnz = b.iter().filter(|z| z.re != 0.0 || z.im != 0.0).count();
        if nnz * 4 >= k * m {
            return gemm(a, b);
        }
    }
    let mut out = CMat::zeros(n, m);
    let asl = a.as_slice();
    let bsl = b.as_slice();
    let osl = out.as_mut_slice();
    for j in 0..m {
        let ocol = &mut osl[j * n..(j + 1) * n];
        for l in 0..k {
            let blj = bsl[j * k + l];
            if blj.re == 0.0 && blj.im == 0.0 {
                continue;
            }
            let acol = &asl[l * n..(l + 1) * n];
            for i in 0..n {
                ocol[i] += acol[i] * blj;
            }
        }
    }
    out
}

/// Below this many multiply-adds the zero-skipping loop wins.
const DENSE_WORK: usize = 48 * 48 * 48;

fn gemm(a: &CMat, b: &CMat) -> CMat {
    let (n, k, m) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = CMat::zeros(n, m);
    if n == 0 || m == 0 {
        return out;
    }
    // Complex<f64> is #[repr(C)] { re, im }, the layout of [f64; 2];
    // all three buffers are column-major with the given strides.
    unsafe {
        matrixmultiply::zgemm(
            matrixmultiply::CGemmOption::Standard,
            matrixmultiply::CGemmOption::Standard,
            n,
            k,
            m,
            [1.0, 0.0],
            a.as_ptr() as *const [f64; 2],
            1,
            n as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [0.0, 0.0],
            out.as_mut_ptr() as *mut [f64; 2],
            1,
            n as isize,
        );
    }
    out
}

pub fn mm3(a: &CMat, b: &CMat, d: &CMat) -> CMat {
    mm(&mm(a, b), d)
}

/// `a* b` without materializing the adjoint.
pub fn mm_ad(a: &CMat, b: &CMat) -> CMat {
    mm(&a.adjoint(), b)
}

pub fn matvec(a: &CMat, v: &[C64]) -> Vec<C64> {
    let (n, k) = (a.nrows(), a.ncols());
    assert_eq!(k, v.len());
    let mut out = vec![ZERO; n];
    let asl = a.as_slice();
    for (l, &vl) in v.iter().enumerate() {
        if vl.re == 0.0 && vl.im == 0.0 {
            continue;
        }
        let col = &asl[l * n..(l + 1) * n];
        for i in 0..n {
            out[i] += col[i] * vl;
        }
    }
    out
}

/// Conjugate-linear in the first argument.
#[inline]
pub fn dotc(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    c(re, im)
}

#[inline]
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn fro(a: &CMat) -> f64 {
    vnorm(a.as_slice())
}

pub fn trace(a: &CMat) -> C64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

/// Frobenius pairing tr(a* b).
pub fn fro_inner(a: &CMat, b: &CMat) -> C64 {
    dotc(a.as_slice(), b.as_slice())
}

pub fn flatten(a: &CMat) -> Vec<C64> {
    a.as_slice().to_vec()
}

pub fn unflatten(v: &[C64], n: usize) -> CMat {
    CMat::from_column_slice(n, v.len() / n.max(1), v)
}

pub fn is_zero(a: &CMat) -> bool {
    a.iter().all(|z| z.re == 0.0 && z.im == 0.0)
}

pub fn lin_comb(coeffs: &[C64], mats: &[CMat], n: usize, m: usize) -> CMat {
    let mut out = CMat::zeros(n, m);
    for (cf, a) in coeffs.iter().zip(mats) {
        if cf.re == 0.0 && cf.im == 0.0 {
            continue;
        }
        axpy(*cf, a.as_slice(), out.as_mut_slice());
    }
    out
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn herm_eig(a: &CMat) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (vec![], CMat::zeros(0, 0));
    }
    let h = hermitize(a);
    let se = nalgebra::SymmetricEigen::new(h);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let vals = idx.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vecs = CMat::zeros(n, n);
    for (k, &i) in idx.iter().enumerate() {
        vecs.set_column(k, &se.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn herm_eigvals(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 {
        return vec![];
    }
    let mut v: Vec<f64> = hermitize(a).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

pub fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

/// Spectral norm.
pub fn opnorm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    let g = if a.nrows() <= a.ncols() {
        mm(a, &a.adjoint())
    } else {
        mm(&a.adjoint(), a)
    };
    herm_eigvals(&g).last().copied().unwrap_or(0.0).max(0.0).sqrt()
}

/// Eigenvalues of a general square matrix via the complex Schur form.
/// The matrix is shifted by its norm first so the deflation test, which is
/// relative to the diagonal, cannot stall on eigenvalues near zero.
/// `None` if the QR iteration does not converge.
pub fn eigenvalues(a: &CMat) -> Option<Vec<C64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(vec![]);
    }
    let shift = C64::new(fro(a).max(1.0), 0.0);
    let mut m = a.clone();
    for i in 0..n {
        m[(i, i)] += shift;
    }
    let schur = nalgebra::Schur::try_new(m, f64::EPSILON, 200 * n + 1000)?;
    let (_, t) = schur.unpack();
    Some((0..n).map(|i| t[(i, i)] - shift).collect())
}

/// Distinct eigenvalues of a diagonalizable matrix with few of them, from
/// the Krylov space of a random vector: once the space is invariant the
/// Hessenberg matrix carries exactly the minimal polynomial.
pub fn krylov_eigenvalues<R: Rng>(a: &CMat, max_distinct: usize, rng: &mut R) -> Option<Vec<C64>> {
    let n = a.nrows();
    if n == 0 {
        return Some(vec![]);
    }
    let scale = fro(a).max(f64::MIN_POSITIVE);
    let mut q: Vec<Vec<C64>> = Vec::new();
    let v: Vec<C64> = (0..n).map(|_| random_c64(rng)).collect();
    let nv = vnorm(&v);
    q.push(v.iter().map(|z| z / nv).collect());
    let kmax = max_distinct.min(n);
    let mut h = CMat::zeros(kmax + 1, kmax);
    for k in 0..kmax {
        let mut w = matvec(a, &q[k]);
        for _ in 0..2 {
            for (j, qj) in q.iter().enumerate() {
                let c = dotc(qj, &w);
                h[(j, k)] += c;
                axpy(-c, qj, &mut w);
            }
        }
        let nw = vnorm(&w);
        if nw <= 1e-10 * scale {
            let hk = h.view((0, 0), (k + 1, k + 1)).into_owned();
            return eigenvalues(&hk);
        }
        h[(k + 1, k)] = C64::new(nw, 0.0);
        q.push(w.iter().map(|z| z / nw).collect());
    }
    None
}

/// Solve a square system; `None` if singular.
pub fn solve(a: &CMat, b: &CMat) -> Option<CMat> {
    a.clone().lu().solve(b)
}

pub fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// Hermitian square root and inverse square root of a positive definite matrix.
pub fn psd_sqrt_pair(a: &CMat) -> (CMat, CMat) {
    let (vals, vecs) = herm_eig(a);
    let n = vals.len();
    let mut s = CMat::zeros(n, n);
    let mut si = CMat::zeros(n, n);
    for i in 0..n {
        let l = vals[i].max(0.0).sqrt();
        s[(i, i)] = c(l, 0.0);
        si[(i, i)] = if l > 0.0 { c(1.0 / l, 0.0) } else { ZERO };
    }
    let va = vecs.adjoint();
    (mm3(&vecs, &s, &va), mm3(&vecs, &si, &va))
}

/// Orthonormal basis of a growing subspace of C^len, maintained by classical
/// Gram-Schmidt with one reorthogonalization pass.
#[derive(Clone, Debug)]
pub struct SpanBasis {
    len: usize,
    rel_tol: f64,
    basis: Vec<Vec<C64>>,
    /// residual ratios that landed between the two tolerance tiers
    pub borderline: usize,
}

/// Outer tier used to re-verify rank decisions.
pub const TIER2: f64 = 1e-7;

impl SpanBasis {
    pub fn new(len: usize, rel_tol: f64) -> Self {
        SpanBasis { len, rel_tol, basis: Vec::new(), borderline: 0 }
    }

    pub fn rank(&self) -> usize {
        self.basis.len()
    }

    pub fn vectors(&self) -> &[Vec<C64>] {
        &self.basis
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    /// Coefficients of the orthogonal projection.
    pub fn coords(&self, v: &[C64]) -> Vec<C64> {
        self.basis.iter().map(|q| dotc(q, v)).collect()
    }

    /// Residual of `v` after projecting out the span.
    pub fn residual(&self, v: &[C64]) -> Vec<C64> {
        let mut r = v.to_vec();
        for _ in 0..2 {
            for q in &self.basis {
                let cf = dotc(q, &r);
                axpy(-cf, q, &mut r);
            }
        }
        r
    }

    pub fn residual_norm(&self, v: &[C64]) -> f64 {
        vnorm(&self.residual(v))
    }

    /// Whether `v` lies in the span, relative to `scale`.
    pub fn contains(&self, v: &[C64], scale: f64) -> bool {
        self.residual_norm(v) <= self.rel_tol * scale.max(f64::MIN_POSITIVE)
    }

    /// Add `v` if it is independent relative to `scale`; returns whether it was added.
    pub fn push_scaled(&mut self, v: &[C64], scale: f64) -> bool {
        assert_eq!(v.len(), self.len);
        if scale == 0.0 || self.basis.len() == self.len {
            return false;
        }
        let r = self.residual(v);
        let rn = vnorm(&r);
        let ratio = rn / scale;
        if ratio > self.rel_tol && ratio < TIER2 {
            self.borderline += 1;
        }
        if ratio <= self.rel_tol {
            return false;
        }
        let inv = 1.0 / rn;
        self.basis.push(r.into_iter().map(|z| z * inv).collect());
        true
    }

    pub fn push(&mut self, v: &[C64]) -> bool {
        let s = vnorm(v);
        self.push_scaled(v, s)
    }

    /// Basis vectors as the columns of a matrix.
    pub fn to_matrix(&self) -> CMat {
        let mut m = CMat::zeros(self.len, self.basis.len());
        for (j, q) in self.basis.iter().enumerate() {
            m.column_mut(j).copy_from_slice(q);
        }
        m
    }
}

/// Rank of a family of vectors, with every vector measured against the
/// largest norm in the family.
pub fn rank_of(vectors: &[Vec<C64>], rel_tol: f64) -> usize {
    let Some(first) = vectors.first() else { return 0 };
    let scale = vectors.iter().map(|v| vnorm(v)).fold(0.0, f64::max);
    let mut sb = SpanBasis::new(first.len(), rel_tol);
    for v in vectors {
        sb.push_scaled(v, scale);
    }
    sb.rank()
}

/// Result of a pivoted Cholesky factorization `G ≈ L L*` of a PSD matrix.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    /// pivot indices in order of selection
    pub pivots: Vec<usize>,
    /// n × r factor
    pub l: CMat,
    pub max_diag: f64,
    /// largest remaining diagonal at termination, relative to `max_diag`
    pub residual: f64,
}

/// Pivoted Cholesky of a PSD matrix given through its diagonal and a column
/// oracle. Stops once every remaining diagonal is below `rel_tol * max_diag`.
pub fn pivoted_cholesky<F>(diag: &[f64], mut column: F, rel_tol: f64) -> PivotedCholesky
where
    F: FnMut(usize) -> Vec<C64>,
{
    let n = diag.len();
    let max_diag = diag.iter().copied().fold(0.0, f64::max);
    let mut d: Vec<f64> = diag.to_vec();
    let mut cols: Vec<Vec<C64>> = Vec::new();
    let mut pivots = Vec::new();
    let mut residual = 0.0;
    if max_diag <= 0.0 {
        return PivotedCholesky { pivots, l: CMat::zeros(n, 0), max_diag, residual };
    }
    let mut used = vec![false; n];
    loop {
        let mut best = None;
        let mut bv = -1.0;
        for i in 0..n {
            if !used[i] && d[i] > bv {
                bv = d[i];
                best = Some(i);
            }
        }
        let Some(p) = best else { break };
        if bv <= rel_tol * max_diag {
            residual = bv.max(0.0) / max_diag;
            break;
        }
        let g = column(p);
        let piv = bv.sqrt();
        let mut newcol = g;
        for lc in &cols {
            let lpc = lc[p].conj();
            axpy(-lpc, lc, &mut newcol);
        }
        for z in newcol.iter_mut() {
            *z /= piv;
        }
        newcol[p] = c(piv, 0.0);
        for &q in &pivots {
            newcol[q] = ZERO;
        }
        used[p] = true;
        d[p] = 0.0;
        for i in 0..n {
            if !used[i] {
                d[i] -= newcol[i].norm_sqr();
            }
        }
        pivots.push(p);
        cols.push(newcol);
    }
    let mut l = CMat::zeros(n, cols.len());
    for (j, col) in cols.iter().enumerate() {
        l.column_mut(j).copy_from_slice(col);
    }
    PivotedCholesky { pivots, l, max_diag, residual }
}

/// Null space of a Hermitian PSD matrix: eigenvectors whose eigenvalue is at
/// most `rel_tol * λ_max`. Returns (null basis as columns, range basis as
/// columns, eigenvalues of the range part, borderline count).
pub fn psd_split(g: &CMat, rel_tol: f64) -> (CMat, CMat, Vec<f64>, usize) {
    let n = g.nrows();
    let (vals, vecs) = herm_eig(g);
    let lmax = vals.iter().copied().fold(0.0, f64::max);
    let thr = rel_tol * lmax;
    let mut null = Vec::new();
    let mut range = Vec::new();
    let mut rvals = Vec::new();
    let mut borderline = 0;
    for (i, &v) in vals.iter().enumerate() {
        if lmax > 0.0 && v > thr && v < TIER2 * lmax {
            borderline += 1;
        }
        if lmax <= 0.0 || v <= thr {
            null.push(i);
        } else {
            range.push(i);
            rvals.push(v);
        }
    }
    let pick = |ix: &[usize]| {
        let mut m = CMat::zeros(n, ix.len());
        for (k, &i) in ix.iter().enumerate() {
            m.set_column(k, &vecs.column(i));
        }
        m
    };
    (pick(&null), pick(&range), rvals, borderline)
}

/// Support projection of a PSD matrix: the spectral projection onto its
/// nonzero eigenvalues, followed by one Newton polish. This is the value of the
/// interpolation polynomial q with q(0) = 0 and q(λ) = 1 on the nonzero
/// spectrum, evaluated through the spectral calculus.
pub fn support_projection(x: &CMat, rel_tol: f64) -> CMat {
    let n = x.nrows();
    let (vals, vecs) = herm_eig(x);
    let lmax = vals.iter().copied().fold(0.0, f64::max);
    let mut p = CMat::zeros(n, n);
    if lmax <= 0.0 {
        return p;
    }
    let thr = (n as f64) * rel_tol * lmax;
    for (i, &v) in vals.iter().enumerate() {
        if v > thr {
            let col = vecs.column(i);
            p += &col * col.adjoint();
        }
    }
    newton_polish(&hermitize(&p))
}

/// One step of p ↦ 3p² − 2p³, then hermitize.
pub fn newton_polish(p: &CMat) -> CMat {
    let p2 = mm(p, p);
    let p3 = mm(&p2, p);
    hermitize(&(p2.scale(3.0) - p3.scale(2.0)))
}

pub fn random_c64<R: Rng>(rng: &mut R) -> C64 {
    c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
}

pub fn random_matrix<R: Rng>(r: usize, k: usize, rng: &mut R) -> CMat {
    CMat::from_fn(r, k, |_, _| random_c64(rng))
}

/// Haar-ish random unitary: Q factor of a random complex matrix.
pub fn random_unitary<R: Rng>(n: usize, rng: &mut R) -> CMat {
    if n == 0 {
        return CMat::zeros(0, 0);
    }
    let a = random_matrix(n, n, rng);
    let mut sb = SpanBasis::new(n, 1e-12);
    for j in 0..n {
        let col: Vec<C64> = a.column(j).iter().copied().collect();
        sb.push(&col);
    }
    // a random complex square matrix is invertible with probability one
    let mut k = 0;
    while sb.rank() < n {
        let mut e = vec![ZERO; n];
        e[k] = ONE;
        sb.push(&e);
        k += 1;
    }
    sb.to_matrix()
}

/// Block-diagonal embedding of square matrices.
pub fn block_diag(blocks: &[CMat]) -> CMat {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let k = b.nrows();
        out.view_mut((off, off), (k, k)).copy_from(b);
        off += k;
    }
    out
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Relative comparison helper: ‖a − b‖ / (1 + ‖a‖ + ‖b‖) in Frobenius norm.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    fro(&(a - b)) / (1.0 + fro(a) + fro(b))
}

/// Null space of `a` as orthonormal columns, through the complement of the
/// row space. Returns (null basis, rank, borderline count).
pub fn null_space(a: &CMat, rel_tol: f64) -> (CMat, usize, usize) {
    let (m, n) = (a.nrows(), a.ncols());
    let mut sb = SpanBasis::new(n, rel_tol);
    let rows: Vec<Vec<C64>> = (0..m).map(|i| (0..n).map(|j| a[(i, j)].conj()).collect()).collect();
    let scale = rows.iter().map(|r| vnorm(r)).fold(0.0, f64::max);
    for r in &rows {
        sb.push_scaled(r, scale);
    }
    let rank = sb.rank();
    let borderline = sb.borderline;
    let mut full = sb.clone();
    let mut null = Vec::new();
    for j in 0..n {
        let mut e = vec![ZERO; n];
        e[j] = ONE;
        if full.push_scaled(&e, 1.0) {
            null.push(full.vectors().last().unwrap().clone());
        }
        if full.rank() == n {
            break;
        }
    }
    let mut out = CMat::zeros(n, null.len());
    for (k, v) in null.iter().enumerate() {
        out.column_mut(k).copy_from_slice(v);
    }
    (out, rank, borderline)
}

/// Group complex values whose distance is below `tight * scale` (single
/// linkage). `None` when two groups come closer than `loose * scale`, which
/// means the split is not trustworthy.
pub fn cluster_values(values: &[C64], tight: f64, loose: f64) -> Option<Vec<Vec<usize>>> {
    let n = values.len();
    let scale = values.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in i + 1..n {
            if (values[i] - values[j]).norm() <= tight * scale {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: std::collections::HashMap<usize, usize> = std::collections::HashMap::new();
    for i in 0..n {
        let r = find(&mut parent, i);
        let g = *root_of.entry(r).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
    }
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) != find(&mut parent, j) && (values[i] - values[j]).norm() <= loose * scale {
                return None;
            }
        }
    }
    Some(groups)
}

/// Mean of selected values.
pub fn mean_of(values: &[C64], idx: &[usize]) -> C64 {
    idx.iter().map(|&i| values[i]).sum::<C64>() / idx.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blocked_product_matches_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_matrix(61, 53, &mut rng);
        let b = random_matrix(53, 70, &mut rng);
        assert!(fro(&(mm(&a, &b) - &a * &b)) < 1e-10 * fro(&a) * fro(&b));
        let sub = a.view((0, 0), (61, 10)).into_owned();
        assert_eq!(mm(&sub, &b.rows(0, 10).into_owned()).shape(), (61, 70));
    }

    #[test]
    fn complex_hermitian_eigen() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(6, 6, &mut rng);
        let h = hermitize(&a);
        let (vals, vecs) = herm_eig(&h);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_iterator(
            6,
            vals.iter().map(|&v| c(v, 0.0)),
        ));
        let back = mm3(&vecs, &d, &vecs.adjoint());
        assert!(fro(&(back - &h)) < 1e-10);
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn mm_matches_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_matrix(4, 5, &mut rng);
        let mut b = random_matrix(5, 3, &mut rng);
        b[(2, 1)] = ZERO;
        assert!(fro(&(mm(&a, &b) - &a * &b)) < 1e-12);
    }

    #[test]
    fn schur_eigenvalues_of_diagonalizable() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random_unitary(4, &mut rng);
        let d = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
            c(1.0, 0.0),
            c(-2.0, 1.0),
            c(0.5, 0.5),
            c(3.0, 0.0),
        ]));
        let a = mm3(&u, &d, &u.adjoint());
        let mut ev = eigenvalues(&a).unwrap();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re));
        let want = [c(-2.0, 1.0), c(0.5, 0.5), c(1.0, 0.0), c(3.0, 0.0)];
        for (x, y) in ev.iter().zip(want.iter()) {
            assert!((x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn pivoted_cholesky_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let b = random_matrix(7, 3, &mut rng);
        let g = mm(&b, &b.adjoint());
        let diag: Vec<f64> = (0..7).map(|i| g[(i, i)].re).collect();
        let pc = pivoted_cholesky(&diag, |j| g.column(j).iter().copied().collect(), 1e-12);
        assert_eq!(pc.pivots.len(), 3);
        let back = mm(&pc.l, &pc.l.adjoint());
        assert!(fro(&(back - g)) < 1e-10);
    }

    #[test]
    fn support_projection_of_rank_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = random_matrix(5, 2, &mut rng);
        let x = mm(&b, &b.adjoint());
        let p = support_projection(&x, 1e-12);
        assert!(fro(&(mm(&p, &p) - &p)) < 1e-12);
        assert!((trace(&p).re - 2.0).abs() < 1e-10);
        assert!(fro(&(mm(&p, &b) - &b)) < 1e-10);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = random_unitary(5, &mut rng);
        assert!(fro(&(mm(&u.adjoint(), &u) - eye(5))) < 1e-12);
    }
}
