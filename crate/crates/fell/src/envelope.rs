//! Finite-dimensional *-algebras given by structure constants, and their
//! enveloping C*-algebras.
//!
//! The route is: Jacobson radical from the trace form, semisimple quotient,
//! central idempotents from a random central element, a matrix model of each
//! simple block from a minimal left ideal, then classification of the
//! involution on each block. Blocks on which the involution is not conjugate
//! to the adjoint by a definite h are annihilated by every *-representation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FellError, Result};
use crate::linalg::{
    adj, c, cluster_values, fro, herm_eig, hermitize, kron, mean_of, mm, mm3, null_space, psd_sqrt_pair,
    random_c64, solve, unflatten, vnorm, CMat, SpanBasis, C64, ONE, TIER2, ZERO,
};
use crate::report::{CheckReport, Worst};

/// Sparse coordinate vector.
pub type SVec = Vec<(usize, C64)>;

/// Relative threshold below which structure constants are dropped.
pub const DROP_TOL: f64 = 1e-13;
/// Rank threshold for the trace form and kernels.
pub const RANK_TOL: f64 = 1e-9;

pub fn sparsify(v: &[C64]) -> SVec {
    let m = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    v.iter().enumerate().filter(|(_, z)| z.norm() > DROP_TOL * m).map(|(i, z)| (i, *z)).collect()
}

pub fn densify(v: &SVec, d: usize) -> Vec<C64> {
    let mut out = vec![ZERO; d];
    for &(i, z) in v {
        out[i] += z;
    }
    out
}

/// A *-algebra with basis b_0..b_{d-1}: b_i b_j = Σ_k c_ij^k b_k and
/// b_i* = Σ_k s_ik b_k (the involution is conjugate-linear on coordinates).
#[derive(Clone, Debug)]
pub struct StarAlgebra {
    dim: usize,
    prod: Vec<SVec>,
    star: Vec<SVec>,
}

impl StarAlgebra {
    pub fn new(dim: usize, prod: Vec<SVec>, star: Vec<SVec>) -> Result<Self> {
        if prod.len() != dim * dim || star.len() != dim {
            return Err(FellError::Shape(format!("structure tables do not match dimension {dim}")));
        }
        if prod.iter().chain(star.iter()).any(|v| v.iter().any(|&(k, _)| k >= dim)) {
            return Err(FellError::Shape("structure constant index out of range".into()));
        }
        Ok(StarAlgebra { dim, prod, star })
    }

    /// From a dense tensor c[(i*d + j)*d + k] and the matrix whose column j
    /// holds the coordinates of b_j*.
    pub fn from_dense(dim: usize, structure: &[C64], involution: &CMat) -> Result<Self> {
        if structure.len() != dim * dim * dim || involution.nrows() != dim || involution.ncols() != dim {
            return Err(FellError::Shape("dense structure has the wrong size".into()));
        }
        let prod = (0..dim * dim).map(|ij| sparsify(&structure[ij * dim..(ij + 1) * dim])).collect();
        let star = (0..dim).map(|j| sparsify(involution.column(j).as_slice())).collect();
        StarAlgebra::new(dim, prod, star)
    }

    /// The *-algebra spanned by a basis of matrices closed under products and adjoints.
    pub fn from_matrices(basis: &[CMat]) -> Result<Self> {
        let n = basis.first().map(|b| b.nrows()).unwrap_or(0);
        let f = crate::bundle::Fiber::new(n, basis.to_vec())
            .map_err(|_| FellError::Shape("matrix basis is linearly dependent".into()))?;
        let d = basis.len();
        let scale = basis.iter().map(fro).fold(0.0, f64::max).max(1.0);
        let mut prod = Vec::with_capacity(d * d);
        for a in basis {
            for b in basis {
                let p = mm(a, b);
                if f.distance(&p) > 1e-9 * scale * scale {
                    return Err(FellError::Shape("matrix span is not closed under products".into()));
                }
                prod.push(sparsify(&f.coords(&p)));
            }
        }
        let mut star = Vec::with_capacity(d);
        for a in basis {
            let s = adj(a);
            if f.distance(&s) > 1e-9 * scale {
                return Err(FellError::Shape("matrix span is not closed under adjoints".into()));
            }
            star.push(sparsify(&f.coords(&s)));
        }
        StarAlgebra::new(d, prod, star)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn basis_product(&self, i: usize, j: usize) -> &SVec {
        &self.prod[i * self.dim + j]
    }

    pub fn basis_star(&self, i: usize) -> &SVec {
        &self.star[i]
    }

    /// Number of stored nonzero structure constants.
    pub fn nnz(&self) -> usize {
        self.prod.iter().map(Vec::len).sum()
    }

    pub fn mul(&self, x: &[C64], y: &[C64]) -> Vec<C64> {
        let d = self.dim;
        let mut out = vec![ZERO; d];
        for (i, &xi) in x.iter().enumerate() {
            if xi == ZERO {
                continue;
            }
            for (j, &yj) in y.iter().enumerate() {
                if yj == ZERO {
                    continue;
                }
                let w = xi * yj;
                for &(k, cf) in &self.prod[i * d + j] {
                    out[k] += w * cf;
                }
            }
        }
        out
    }

    pub fn star_of(&self, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim];
        for (i, &xi) in x.iter().enumerate() {
            if xi == ZERO {
                continue;
            }
            let w = xi.conj();
            for &(k, cf) in &self.star[i] {
                out[k] += w * cf;
            }
        }
        out
    }

    /// Matrix of y ↦ x y.
    pub fn left_matrix(&self, x: &[C64]) -> CMat {
        let d = self.dim;
        let mut m = CMat::zeros(d, d);
        for (i, &xi) in x.iter().enumerate() {
            if xi == ZERO {
                continue;
            }
            for j in 0..d {
                let mut col = m.column_mut(j);
                for &(k, cf) in &self.prod[i * d + j] {
                    col[k] += xi * cf;
                }
            }
        }
        m
    }

    /// Matrix of y ↦ y x.
    pub fn right_matrix(&self, x: &[C64]) -> CMat {
        let d = self.dim;
        let mut m = CMat::zeros(d, d);
        for i in 0..d {
            let mut col = m.column_mut(i);
            for (j, &xj) in x.iter().enumerate() {
                if xj == ZERO {
                    continue;
                }
                for &(k, cf) in &self.prod[i * d + j] {
                    col[k] += xj * cf;
                }
            }
        }
        m
    }

    /// Dense structure tensor in the layout accepted by `from_dense`.
    pub fn dense_structure(&self) -> (Vec<C64>, CMat) {
        let d = self.dim;
        let mut t = vec![ZERO; d * d * d];
        for ij in 0..d * d {
            for &(k, cf) in &self.prod[ij] {
                t[ij * d + k] += cf;
            }
        }
        let mut inv = CMat::zeros(d, d);
        for j in 0..d {
            for &(k, cf) in &self.star[j] {
                inv[(k, j)] += cf;
            }
        }
        (t, inv)
    }

    /// Associativity, involution of order two and anti-multiplicativity,
    /// on all basis triples when small and on random triples otherwise.
    pub fn check_axioms(&self, tol: f64, seed: u64) -> CheckReport {
        let d = self.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = |i: usize| {
            let mut v = vec![ZERO; d];
            v[i] = ONE;
            v
        };
        let mut report = CheckReport::new(tol);
        let mut assoc = Worst::default();
        let mut anti = Worst::default();
        let mut order = Worst::default();
        let triples: Vec<(Vec<C64>, Vec<C64>, Vec<C64>, (usize, usize))> = if d <= 10 {
            let mut v = Vec::new();
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        v.push((e(i), e(j), e(k), (i, j)));
                    }
                }
            }
            v
        } else {
            (0..64)
                .map(|t| {
                    let r = |rng: &mut ChaCha8Rng| (0..d).map(|_| random_c64(rng)).collect::<Vec<_>>();
                    (r(&mut rng), r(&mut rng), r(&mut rng), (t, t))
                })
                .collect()
        };
        for (x, y, z, at) in &triples {
            let l = self.mul(&self.mul(x, y), z);
            let r = self.mul(x, &self.mul(y, z));
            let scale = 1.0 + vnorm(x) * vnorm(y) * vnorm(z);
            assoc.see(diff(&l, &r) / scale, *at);
            let xy_star = self.star_of(&self.mul(x, y));
            let ys_xs = self.mul(&self.star_of(y), &self.star_of(x));
            anti.see(diff(&xy_star, &ys_xs) / (1.0 + vnorm(x) * vnorm(y)), *at);
            order.see(diff(&self.star_of(&self.star_of(x)), x) / (1.0 + vnorm(x)), *at);
        }
        report.push("associative", assoc);
        report.push("(xy)* = y* x*", anti);
        report.push("x** = x", order);
        report
    }
}

fn diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

fn unit_vec(d: usize, i: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d];
    v[i] = ONE;
    v
}

/// Trace form T_ij = tr(L_{b_i} L_{b_j}) = tr(L_{b_i b_j}).
pub fn trace_form(b: &StarAlgebra) -> CMat {
    let d = b.dim();
    let tau: Vec<C64> = (0..d)
        .map(|k| (0..d).map(|l| b.basis_product(k, l).iter().filter(|(i, _)| *i == l).map(|(_, z)| *z).sum::<C64>()).sum())
        .collect();
    CMat::from_fn(d, d, |i, j| b.basis_product(i, j).iter().map(|&(k, z)| z * tau[k]).sum())
}

/// Basis of the Jacobson radical: the null space of the trace form.
pub fn radical(b: &StarAlgebra) -> Result<Vec<Vec<C64>>> {
    let t = trace_form(b);
    if t.iter().all(|z| *z == ZERO) {
        return Ok((0..b.dim()).map(|i| unit_vec(b.dim(), i)).collect());
    }
    let (null, _, border) = null_space(&t, RANK_TOL);
    if border > 0 {
        return Err(FellError::IllConditioned(format!("trace form rank ({border} borderline directions)")));
    }
    Ok((0..null.ncols()).map(|j| null.column(j).iter().copied().collect()).collect())
}

/// B / rad(B) with the coordinate map K: B → B/rad(B).
pub fn semisimple_quotient(b: &StarAlgebra, rad: &[Vec<C64>]) -> Result<(StarAlgebra, CMat)> {
    let d = b.dim();
    if rad.is_empty() {
        return Ok((b.clone(), CMat::identity(d, d)));
    }
    let mut sb = SpanBasis::new(d, 1e-9);
    for r in rad {
        sb.push(r);
    }
    let mut pivots = Vec::new();
    let mut cols: Vec<Vec<C64>> = Vec::new();
    for j in 0..d {
        let e = unit_vec(d, j);
        let res = sb.residual(&e);
        if sb.push_scaled(&e, 1.0) {
            pivots.push(j);
            cols.push(res);
        }
    }
    let dq = pivots.len();
    let mut ep = CMat::zeros(d, dq);
    for (k, col) in cols.iter().enumerate() {
        ep.column_mut(k).copy_from_slice(col);
    }
    let epa = adj(&ep);
    let k = solve(&mm(&epa, &ep), &epa).ok_or_else(|| FellError::IllConditioned("radical complement".into()))?;
    let reduce = |v: &SVec| -> SVec {
        let mut out = vec![ZERO; dq];
        for &(i, z) in v {
            for r in 0..dq {
                out[r] += k[(r, i)] * z;
            }
        }
        sparsify(&out)
    };
    let mut prod = Vec::with_capacity(dq * dq);
    for &p in &pivots {
        for &q in &pivots {
            prod.push(reduce(b.basis_product(p, q)));
        }
    }
    let star = pivots.iter().map(|&p| reduce(b.basis_star(p))).collect();
    Ok((StarAlgebra::new(dq, prod, star)?, k))
}

/// How the involution acts on a simple block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BlockKind {
    /// x* = h x† h⁻¹ with the given inertia of h (positive, negative).
    Fixed { positive: usize, negative: usize },
    /// the involution exchanges this block with another one
    Swapped { partner: usize },
}

/// One simple summand of the semisimple quotient with its matrix model.
#[derive(Clone, Debug)]
pub struct SimpleBlock {
    pub size: usize,
    pub kind: BlockKind,
    /// central idempotent, in quotient coordinates
    pub central: Vec<C64>,
    /// images of the quotient basis in M_size (already conjugated to make
    /// the involution the adjoint when the block is kept)
    pub images: Vec<CMat>,
}

impl SimpleBlock {
    pub fn kept(&self) -> bool {
        matches!(self.kind, BlockKind::Fixed { negative: 0, .. })
    }
}

/// The enveloping C*-algebra of a finite-dimensional *-algebra.
#[derive(Clone, Debug)]
pub struct Envelope {
    pub source_dim: usize,
    pub radical_dim: usize,
    pub blocks: Vec<SimpleBlock>,
    /// sizes of the kept blocks, in block order
    pub block_sizes: Vec<usize>,
    /// rows: flattened kept blocks; columns: source basis
    map: CMat,
}

/// Seed for randomized steps, from FB_SEED (default 0).
pub fn env_seed() -> u64 {
    std::env::var("FB_SEED").ok().and_then(|s| s.trim().parse().ok()).unwrap_or(0)
}

impl Envelope {
    pub fn dim(&self) -> usize {
        self.block_sizes.iter().map(|n| n * n).sum()
    }

    /// Sorted block sizes.
    pub fn block_multiset(&self) -> Vec<usize> {
        let mut v = self.block_sizes.clone();
        v.sort_unstable();
        v
    }

    /// Quotient map as a matrix (Σ n_p² × source dim).
    pub fn map_matrix(&self) -> &CMat {
        &self.map
    }

    pub fn apply_flat(&self, x: &[C64]) -> Vec<C64> {
        crate::linalg::matvec(&self.map, x)
    }

    /// Quotient map, one matrix per kept block.
    pub fn apply(&self, x: &[C64]) -> Vec<CMat> {
        let flat = self.apply_flat(x);
        let mut out = Vec::new();
        let mut off = 0;
        for &n in &self.block_sizes {
            out.push(unflatten(&flat[off..off + n * n], n));
            off += n * n;
        }
        out
    }

    /// The quotient map as one block-diagonal matrix.
    pub fn apply_block_diag(&self, x: &[C64]) -> CMat {
        crate::linalg::block_diag(&self.apply(x))
    }

    pub fn kernel_basis(&self) -> Vec<Vec<C64>> {
        let (null, _, _) = null_space(&self.map, RANK_TOL);
        (0..null.ncols()).map(|j| null.column(j).iter().copied().collect()).collect()
    }

    /// ⊕ M_{n_p} as a StarAlgebra in its matrix-unit basis.
    pub fn image_algebra(&self) -> Result<StarAlgebra> {
        StarAlgebra::from_matrices(&crate::bundle::block_matrix_units(&self.block_sizes))
    }

    /// Multiplicativity and *-compatibility of the quotient map on basis pairs
    /// (random pairs when the source is large).
    pub fn check_homomorphism(&self, b: &StarAlgebra, tol: f64) -> CheckReport {
        let d = b.dim();
        let mut report = CheckReport::new(tol);
        let mut mult = Worst::default();
        let mut star = Worst::default();
        let imgs: Vec<CMat> = (0..d).map(|i| self.apply_block_diag(&unit_vec(d, i))).collect();
        let pairs: Vec<(usize, usize)> = if d <= 40 {
            (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            (0..1600).map(|_| (rand::Rng::gen_range(&mut rng, 0..d), rand::Rng::gen_range(&mut rng, 0..d))).collect()
        };
        let scale = imgs.iter().map(fro).fold(1.0, f64::max);
        for (i, j) in pairs {
            let prod = densify(b.basis_product(i, j), d);
            let lhs = self.apply_block_diag(&prod);
            let rhs = mm(&imgs[i], &imgs[j]);
            mult.see(fro(&(lhs - rhs)) / (scale * scale), (i, j));
        }
        for i in 0..d {
            let s = densify(b.basis_star(i), d);
            star.see(fro(&(self.apply_block_diag(&s) - adj(&imgs[i]))) / scale, (i, i));
        }
        report.push("multiplicative", mult);
        report.push("star-compatible", star);
        report
    }
}

struct Part {
    /// central idempotent (quotient coordinates)
    f: Vec<C64>,
    /// orthonormal coordinate basis of f·B
    q: CMat,
}

/// Unit of a semisimple algebra and the dual-basis matrix W = T⁻¹ of its trace form.
fn unit_and_dual(b: &StarAlgebra) -> Result<(Vec<C64>, CMat)> {
    let d = b.dim();
    let t = trace_form(b);
    let w = solve(&t, &CMat::identity(d, d)).ok_or_else(|| FellError::IllConditioned("trace form of semisimple quotient".into()))?;
    // Σ_i b_i b^i with b^i = Σ_j W_ji b_j
    let mut u = vec![ZERO; d];
    for i in 0..d {
        for j in 0..d {
            let cf = w[(j, i)];
            if cf == ZERO {
                continue;
            }
            for &(k, z) in b.basis_product(i, j) {
                u[k] += cf * z;
            }
        }
    }
    Ok((u, w))
}

/// Central element Σ_i b_i x b^i.
fn higman(b: &StarAlgebra, w: &CMat, x: &[C64]) -> Vec<C64> {
    let d = b.dim();
    let rx = b.left_matrix(x); // column j = x b_j
    let v = mm(&rx, &w.transpose()); // column i = Σ_j W_ji x b_j
    let mut out = vec![ZERO; d];
    for i in 0..d {
        for j in 0..d {
            let vj = v[(j, i)];
            if vj == ZERO {
                continue;
            }
            for &(k, z) in b.basis_product(i, j) {
                out[k] += vj * z;
            }
        }
    }
    out
}

fn polish_idempotent(b: &StarAlgebra, e: &[C64]) -> Vec<C64> {
    let mut e = e.to_vec();
    for _ in 0..2 {
        let e2 = b.mul(&e, &e);
        let e3 = b.mul(&e2, &e);
        e = e2.iter().zip(&e3).map(|(a, c3)| a * 3.0 - c3 * 2.0).collect();
    }
    e
}

fn range_basis(m: &CMat) -> CMat {
    let scale = (0..m.ncols()).map(|j| m.column(j).norm()).fold(0.0, f64::max);
    let mut sb = SpanBasis::new(m.nrows(), 1e-8);
    for j in 0..m.ncols() {
        let col: Vec<C64> = m.column(j).iter().copied().collect();
        sb.push_scaled(&col, scale);
    }
    sb.to_matrix()
}

/// Split a central idempotent by the eigenvalues of a central element.
fn split_part(b: &StarAlgebra, part: &Part, z: &[C64], rng: &mut ChaCha8Rng) -> Option<Vec<Part>> {
    let lz = b.left_matrix(z);
    let restricted = mm3(&adj(&part.q), &lz, &part.q);
    let vals = crate::linalg::krylov_eigenvalues(&restricted, restricted.nrows(), rng)?;
    let groups = cluster_values(&vals, 1e-6, 1e-4)?;
    if groups.len() == 1 {
        return Some(vec![Part { f: part.f.clone(), q: part.q.clone() }]);
    }
    let centers: Vec<C64> = groups.iter().map(|g| mean_of(&vals, g)).collect();
    let mut out = Vec::new();
    let mut total = 0;
    for (p, &lp) in centers.iter().enumerate() {
        let mut v = part.f.clone();
        for (q, &lq) in centers.iter().enumerate() {
            if q == p {
                continue;
            }
            let lv = crate::linalg::matvec(&lz, &v);
            v = lv.iter().zip(&v).map(|(a, x)| (a - lq * x) / (lp - lq)).collect();
        }
        let f = polish_idempotent(b, &v);
        let lf = b.left_matrix(&f);
        let q = range_basis(&mm(&lf, &part.q));
        total += q.ncols();
        out.push(Part { f, q });
    }
    (total == part.q.ncols()).then_some(out)
}

/// Whether f·B is simple: Higman images of random elements of f·B are multiples of f.
fn is_simple(b: &StarAlgebra, w: &CMat, part: &Part, rng: &mut ChaCha8Rng) -> bool {
    let m = part.q.ncols();
    let n = (m as f64).sqrt().round() as usize;
    if n * n != m {
        return false;
    }
    let fnorm = vnorm(&part.f);
    for _ in 0..2 {
        let r: Vec<C64> = (0..m).map(|_| random_c64(rng)).collect();
        let x = crate::linalg::matvec(&part.q, &r);
        let h = higman(b, w, &x);
        // least-squares multiple of f
        let lam: C64 = crate::linalg::dotc(&part.f, &h) / (fnorm * fnorm);
        let res: f64 = h.iter().zip(&part.f).map(|(a, f)| (a - lam * f).norm_sqr()).sum::<f64>().sqrt();
        if res > 1e-7 * vnorm(&h).max(f64::MIN_POSITIVE) {
            return false;
        }
    }
    true
}

fn central_partition(b: &StarAlgebra, u: &[C64], w: &CMat, seed: u64) -> Result<Vec<Part>> {
    let d = b.dim();
    let whole = Part { f: u.to_vec(), q: CMat::identity(d, d) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xce47);
    for _attempt in 0..4 {
        let x: Vec<C64> = (0..d).map(|_| random_c64(&mut rng)).collect();
        let z = higman(b, w, &x);
        if let Some(parts) = split_part(b, &whole, &z, &mut rng) {
            if parts.iter().all(|p| is_simple(b, w, p, &mut rng)) {
                return Ok(parts);
            }
        }
    }
    // deterministic fallback: refine by the central images of basis elements
    let mut parts = vec![whole];
    for k in 0..d {
        if parts.iter().all(|p| is_simple(b, w, p, &mut rng)) {
            return Ok(parts);
        }
        let z = higman(b, w, &unit_vec(d, k));
        let mut next = Vec::new();
        for p in &parts {
            match split_part(b, p, &z, &mut rng) {
                Some(sub) => next.extend(sub),
                None => next.push(Part { f: p.f.clone(), q: p.q.clone() }),
            }
        }
        parts = next;
    }
    if parts.iter().all(|p| is_simple(b, w, p, &mut rng)) {
        Ok(parts)
    } else {
        Err(FellError::GenericityFailure(format!("could not separate {} central summands", parts.len())))
    }
}

/// Matrix model of a simple block: (n, orthonormal basis W of a minimal left ideal).
fn block_model(b: &StarAlgebra, part: &Part, rng: &mut ChaCha8Rng) -> Result<(usize, CMat)> {
    let m = part.q.ncols();
    let n = (m as f64).sqrt().round() as usize;
    if n == 1 {
        return Ok((1, range_basis(&mm(&b.right_matrix(&part.f), &part.q))));
    }
    for _ in 0..8 {
        let r: Vec<C64> = (0..m).map(|_| random_c64(rng)).collect();
        let y = crate::linalg::matvec(&part.q, &r);
        let ly = b.left_matrix(&y);
        let Some(vals) = crate::linalg::krylov_eigenvalues(&mm3(&adj(&part.q), &ly, &part.q), m, rng) else { continue };
        let Some(groups) = cluster_values(&vals, 1e-6, 1e-4) else { continue };
        if groups.len() != n {
            continue;
        }
        let centers: Vec<C64> = groups.iter().map(|g| mean_of(&vals, g)).collect();
        let mut g = part.f.clone();
        for q in 1..n {
            let lg = crate::linalg::matvec(&ly, &g);
            g = lg.iter().zip(&g).map(|(a, x)| (a - centers[q] * x) / (centers[0] - centers[q])).collect();
        }
        let g = polish_idempotent(b, &g);
        let wmat = range_basis(&mm(&b.right_matrix(&g), &part.q));
        if wmat.ncols() == n {
            return Ok((n, wmat));
        }
    }
    Err(FellError::GenericityFailure(format!("no rank-one idempotent found in a block of size {n}")))
}

/// ρ(x) = W* L_x W for every basis element.
fn block_images(b: &StarAlgebra, wmat: &CMat) -> Vec<CMat> {
    let d = b.dim();
    let n = wmat.ncols();
    let wa = adj(wmat);
    (0..d)
        .map(|i| {
            let mut lw = CMat::zeros(d, n);
            for col in 0..n {
                for j in 0..d {
                    let wj = wmat[(j, col)];
                    if wj == ZERO {
                        continue;
                    }
                    for &(k, z) in b.basis_product(i, j) {
                        lw[(k, col)] += wj * z;
                    }
                }
            }
            mm(&wa, &lw)
        })
        .collect()
}

fn rho(images: &[CMat], x: &[C64], n: usize) -> CMat {
    let mut out = CMat::zeros(n, n);
    for (i, &xi) in x.iter().enumerate() {
        if xi != ZERO {
            out += &images[i] * xi;
        }
    }
    out
}

/// Solve ρ(x*) h = h ρ(x)† on random elements of the block; returns a
/// Hermitian h normalized so its largest-magnitude eigenvalue is +1.
fn involution_form(b: &StarAlgebra, part: &Part, images: &[CMat], n: usize, rng: &mut ChaCha8Rng) -> Result<CMat> {
    if n == 1 {
        // x ↦ conj ρ(x*) is a character with the same support, hence ρ itself
        return Ok(CMat::identity(1, 1));
    }
    let m = part.q.ncols();
    let mut rows: Vec<CMat> = Vec::new();
    for _ in 0..4 {
        let r: Vec<C64> = (0..m).map(|_| random_c64(rng)).collect();
        let x = crate::linalg::matvec(&part.q, &r);
        let a = rho(images, &b.star_of(&x), n);
        let bt = rho(images, &x, n).map(|z| z.conj()); // (ρ(x)†)^T
        let id = CMat::identity(n, n);
        rows.push(kron(&id, &a) - kron(&bt, &id));
    }
    let total: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut stacked = CMat::zeros(total, n * n);
    let mut off = 0;
    for r in &rows {
        stacked.view_mut((off, 0), (r.nrows(), n * n)).copy_from(r);
        off += r.nrows();
    }
    let (null, _, _) = null_space(&stacked, 1e-8);
    if null.ncols() != 1 {
        return Err(FellError::IllConditioned(format!("involution form has {} solutions", null.ncols())));
    }
    let h = unflatten(null.column(0).as_slice(), n);
    let ha = adj(&h);
    let cst = crate::linalg::fro_inner(&h, &ha) / crate::linalg::fro_inner(&h, &h);
    let omega = cst.sqrt();
    let h1 = hermitize(&(h * omega));
    let (vals, _) = herm_eig(&h1);
    let big = vals.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
    Ok(h1.unscale(big))
}

/// Decompose a finite-dimensional *-algebra and build its enveloping C*-algebra.
pub fn envelope(b: &StarAlgebra) -> Result<Envelope> {
    envelope_seeded(b, env_seed())
}

pub fn envelope_seeded(b: &StarAlgebra, seed: u64) -> Result<Envelope> {
    let d = b.dim();
    let rad = radical(b)?;
    let radical_dim = rad.len();
    if radical_dim == d {
        return Ok(Envelope { source_dim: d, radical_dim, blocks: vec![], block_sizes: vec![], map: CMat::zeros(0, d) });
    }
    let (bs, k) = semisimple_quotient(b, &rad)?;
    let (u, w) = unit_and_dual(&bs)?;
    let parts = central_partition(&bs, &u, &w, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb10c);
    let mut blocks = Vec::with_capacity(parts.len());
    for (p, part) in parts.iter().enumerate() {
        let (n, wmat) = block_model(&bs, part, &mut rng)?;
        let images = block_images(&bs, &wmat);
        // which central idempotent does f* equal
        let fs = bs.star_of(&part.f);
        let partner = parts
            .iter()
            .position(|o| diff(&o.f, &fs) <= 1e-6 * (1.0 + vnorm(&fs)))
            .ok_or_else(|| FellError::IllConditioned("involution does not permute central idempotents".into()))?;
        if partner != p {
            blocks.push(SimpleBlock { size: n, kind: BlockKind::Swapped { partner }, central: part.f.clone(), images });
            continue;
        }
        let h = involution_form(&bs, part, &images, n, &mut rng)?;
        let (vals, _) = herm_eig(&h);
        if vals.iter().any(|v| v.abs() < TIER2) {
            return Err(FellError::IllConditioned("involution form is nearly singular".into()));
        }
        let positive = vals.iter().filter(|&&v| v > 0.0).count();
        let negative = n - positive;
        let images = if negative == 0 {
            let (s, si) = psd_sqrt_pair(&h);
            images.iter().map(|r| mm3(&si, r, &s)).collect()
        } else {
            images
        };
        blocks.push(SimpleBlock { size: n, kind: BlockKind::Fixed { positive, negative }, central: part.f.clone(), images });
    }
    let block_sizes: Vec<usize> = blocks.iter().filter(|b| b.kept()).map(|b| b.size).collect();
    let rows: usize = block_sizes.iter().map(|n| n * n).sum();
    // map on quotient coordinates, then compose with K
    let dq = bs.dim();
    let mut mq = CMat::zeros(rows, dq);
    let mut off = 0;
    for blk in blocks.iter().filter(|b| b.kept()) {
        let nn = blk.size * blk.size;
        for (i, img) in blk.images.iter().enumerate() {
            mq.view_mut((off, i), (nn, 1)).copy_from_slice(img.as_slice());
        }
        off += nn;
    }
    let map = if radical_dim == 0 { mq } else { mm(&mq, &k) };
    Ok(Envelope { source_dim: d, radical_dim, blocks, block_sizes, map })
}

/// Small named test algebras.
pub mod samples {
    use super::*;

    /// C[x]/(x²) with x* = x.
    pub fn dual_numbers() -> StarAlgebra {
        // basis 1, x
        let prod = vec![vec![(0, ONE)], vec![(1, ONE)], vec![(1, ONE)], vec![]];
        let star = vec![vec![(0, ONE)], vec![(1, ONE)]];
        StarAlgebra::new(2, prod, star).unwrap()
    }

    /// Matrix units of ⊕ M_{n_j} with the adjoint.
    pub fn matrix_blocks(sizes: &[usize]) -> StarAlgebra {
        StarAlgebra::from_matrices(&crate::bundle::block_matrix_units(sizes)).unwrap()
    }

    /// M_n ⊕ M_n with (a, b)* = (b†, a†).
    pub fn swapped_pair(n: usize) -> StarAlgebra {
        let units = crate::bundle::block_matrix_units(&[n, n]);
        let m = n * n;
        let base = StarAlgebra::from_matrices(&units).unwrap();
        // adjoint of E_ab in the first copy is E_ba in the second, and back
        let star = (0..2 * m)
            .map(|i| {
                let (copy, r) = (i / m, i % m);
                let (a, bb) = (r / n, r % n);
                vec![((1 - copy) * m + bb * n + a, ONE)]
            })
            .collect();
        let prod = (0..4 * m * m).map(|ij| base.basis_product(ij / (2 * m), ij % (2 * m)).clone()).collect();
        StarAlgebra::new(2 * m, prod, star).unwrap()
    }

    /// M_n with x* = h x† h⁻¹ for a Hermitian invertible h.
    pub fn twisted_matrix(h: &CMat) -> StarAlgebra {
        let n = h.nrows();
        let units = crate::bundle::block_matrix_units(&[n]);
        let base = StarAlgebra::from_matrices(&units).unwrap();
        let hi = crate::linalg::inverse(h).unwrap();
        let f = crate::bundle::Fiber::new(n, units.clone()).unwrap();
        let star = units.iter().map(|e| sparsify(&f.coords(&mm3(h, &adj(e), &hi)))).collect();
        let prod = (0..n.pow(4)).map(|ij| base.basis_product(ij / (n * n), ij % (n * n)).clone()).collect();
        StarAlgebra::new(n * n, prod, star).unwrap()
    }

    /// Upper-triangular 2×2 matrices with (a)* = J a† J (flip-transpose-conjugate).
    pub fn upper_triangular() -> StarAlgebra {
        let mut units = Vec::new();
        for (i, j) in [(0, 0), (0, 1), (1, 1)] {
            let mut e = CMat::zeros(2, 2);
            e[(i, j)] = ONE;
            units.push(e);
        }
        let f = crate::bundle::Fiber::new(2, units.clone()).unwrap();
        let mut jm = CMat::zeros(2, 2);
        jm[(0, 1)] = ONE;
        jm[(1, 0)] = ONE;
        let mut prod = Vec::new();
        for a in &units {
            for bb in &units {
                prod.push(sparsify(&f.coords(&mm(a, bb))));
            }
        }
        let star = units.iter().map(|e| sparsify(&f.coords(&mm3(&jm, &adj(e), &jm)))).collect();
        StarAlgebra::new(3, prod, star).unwrap()
    }

    pub fn diag(vals: &[f64]) -> CMat {
        CMat::from_fn(vals.len(), vals.len(), |i, j| if i == j { c(vals[i], 0.0) } else { ZERO })
    }
}

#[cfg(test)]
mod tests {
    use super::samples::*;
    use super::*;

    #[test]
    fn matrix_algebra_has_no_radical() {
        let b = matrix_blocks(&[2]);
        assert!(radical(&b).unwrap().is_empty());
    }

    #[test]
    fn dual_numbers_radical_and_envelope() {
        let b = dual_numbers();
        let r = radical(&b).unwrap();
        assert_eq!(r.len(), 1);
        // spanned by x
        assert!(r[0][0].norm() < 1e-12 && r[0][1].norm() > 0.5);
        let e = envelope(&b).unwrap();
        assert_eq!(e.block_sizes, vec![1]);
    }

    #[test]
    fn upper_triangular_radical_is_corner() {
        let b = upper_triangular();
        let r = radical(&b).unwrap();
        assert_eq!(r.len(), 1);
        assert!(r[0][1].norm() > 0.99);
    }

    #[test]
    fn two_blocks_with_adjoint() {
        let b = matrix_blocks(&[2, 3]);
        let e = envelope(&b).unwrap();
        assert_eq!(e.block_multiset(), vec![2, 3]);
        assert!(e.check_homomorphism(&b, 1e-9).passed());
        assert!(e.kernel_basis().is_empty());
    }

    #[test]
    fn swapped_pair_is_killed() {
        let b = swapped_pair(2);
        assert!(b.check_axioms(1e-12, 0).passed());
        let e = envelope(&b).unwrap();
        assert_eq!(e.dim(), 0);
        assert!(e.blocks.iter().all(|blk| matches!(blk.kind, BlockKind::Swapped { .. })));
    }

    #[test]
    fn indefinite_twist_is_killed() {
        let b = twisted_matrix(&diag(&[1.0, -1.0]));
        assert!(b.check_axioms(1e-12, 0).passed());
        let e = envelope(&b).unwrap();
        assert_eq!(e.dim(), 0);
        assert_eq!(e.blocks[0].kind, BlockKind::Fixed { positive: 1, negative: 1 });
    }

    #[test]
    fn definite_twist_is_kept() {
        let b = twisted_matrix(&diag(&[1.0, 3.0, 0.5]));
        let e = envelope(&b).unwrap();
        assert_eq!(e.block_sizes, vec![3]);
        assert!(e.check_homomorphism(&b, 1e-9).passed());
    }

    #[test]
    fn envelope_is_idempotent() {
        let b = matrix_blocks(&[1, 2, 2, 3]);
        let e = envelope(&b).unwrap();
        let again = envelope(&e.image_algebra().unwrap()).unwrap();
        assert_eq!(e.block_multiset(), again.block_multiset());
    }

    #[test]
    fn seeds_do_not_change_blocks() {
        let b = matrix_blocks(&[1, 1, 2]);
        for s in 0..5 {
            assert_eq!(envelope_seeded(&b, s).unwrap().block_multiset(), vec![1, 1, 2]);
        }
    }

    #[test]
    fn dense_round_trip() {
        let b = matrix_blocks(&[2]);
        let (t, inv) = b.dense_structure();
        let b2 = StarAlgebra::from_dense(4, &t, &inv).unwrap();
        assert_eq!(envelope(&b2).unwrap().block_sizes, vec![2]);
    }
}
