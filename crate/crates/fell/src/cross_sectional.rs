//! Sections C_c(𝒜), the expectation P, the null ideal N_P, the algebraic
//! crossed product C_alg, the regular representation (hence C*_red) and the
//! quotient Q_c = C_c / ℐ whose envelope is C*_max.
//!
//! Basis convention: C_c has the labeled basis b_{s,i} δ_s, ordered by s and
//! then by the index in the fiber basis.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bundle::FellBundle;
use crate::concrete::MatrixAlgebra;
use crate::envelope::{sparsify, SVec, StarAlgebra, DROP_TOL};
use crate::error::{FellError, Result};
use crate::linalg::{
    adj, dotc, fro, fro_inner, herm_eig, herm_eigvals, matvec, mm, opnorm, pivoted_cholesky, random_c64, solve, vnorm,
    CMat, SpanBasis, C64, ZERO,
};
use crate::par;
use crate::report::{CheckReport, Worst};

/// Diagonal threshold for pivoted Cholesky of Gram matrices (squared scale).
pub const GRAM_TOL: f64 = 1e-12;
/// Largest C_c dimension handled with a dense Gram matrix.
pub const MAX_GRAM_DIM: usize = 4000;

/// A finitely supported section Σ a_s δ_s.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CcElement {
    pub terms: BTreeMap<usize, CMat>,
}

impl CcElement {
    pub fn zero() -> Self {
        CcElement::default()
    }

    pub fn single(s: usize, a: CMat) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(s, a);
        CcElement { terms }
    }

    pub fn add_term(&mut self, s: usize, a: &CMat) {
        match self.terms.get_mut(&s) {
            Some(x) => *x += a,
            None => {
                self.terms.insert(s, a.clone());
            }
        }
    }

    pub fn add(&mut self, other: &CcElement) {
        for (&s, a) in &other.terms {
            self.add_term(s, a);
        }
    }

    pub fn scaled(&self, z: C64) -> CcElement {
        CcElement { terms: self.terms.iter().map(|(&s, a)| (s, a * z)).collect() }
    }

    /// Element with the given coordinates in the labeled basis.
    pub fn from_coords(b: &FellBundle, cf: &[C64]) -> CcElement {
        let mut out = CcElement::zero();
        let mut off = 0;
        for s in 0..b.semigroup().size() {
            let k = b.fiber(s).dim();
            let part = &cf[off..off + k];
            if part.iter().any(|z| *z != ZERO) {
                out.add_term(s, &b.fiber(s).from_coords(part));
            }
            off += k;
        }
        out
    }

    /// Coordinates in the labeled basis (each term projected onto its fiber).
    pub fn coords(&self, b: &FellBundle) -> Vec<C64> {
        let offs = offsets(b);
        let mut out = vec![ZERO; b.total_dim()];
        for (&s, a) in &self.terms {
            for (i, z) in b.fiber(s).coords(a).into_iter().enumerate() {
                out[offs[s] + i] += z;
            }
        }
        out
    }
}

/// Start of each fiber in the labeled basis.
pub fn offsets(b: &FellBundle) -> Vec<usize> {
    let mut off = Vec::with_capacity(b.semigroup().size() + 1);
    let mut acc = 0;
    for f in b.fibers() {
        off.push(acc);
        acc += f.dim();
    }
    off.push(acc);
    off
}

/// Build an element from raw terms, checking that each value lies in its fiber.
pub fn ingest(b: &FellBundle, terms: Vec<(usize, CMat)>, tol: f64) -> Result<CcElement> {
    let mut out = CcElement::zero();
    for (s, a) in terms {
        if s >= b.semigroup().size() || a.nrows() != b.carrier_dim() || a.ncols() != b.carrier_dim() {
            return Err(FellError::Shape(format!("term at {s} has the wrong label or size")));
        }
        if b.fiber(s).distance(&a) > tol * (1.0 + fro(&a)) {
            return Err(FellError::Shape(format!("term at {s} is not in its fiber")));
        }
        out.add_term(s, &a);
    }
    Ok(out)
}

/// (a δ_s)(b δ_t) = ab δ_st, extended bilinearly.
pub fn cc_mul(b: &FellBundle, x: &CcElement, y: &CcElement) -> CcElement {
    let sg = b.semigroup();
    let mut out = CcElement::zero();
    for (&s, a) in &x.terms {
        for (&t, c) in &y.terms {
            out.add_term(sg.mul(s, t), &mm(a, c));
        }
    }
    out
}

/// (a δ_s)* = a* δ_{s*}.
pub fn cc_star(b: &FellBundle, x: &CcElement) -> CcElement {
    let sg = b.semigroup();
    let mut out = CcElement::zero();
    for (&s, a) in &x.terms {
        out.add_term(sg.star(s), &adj(a));
    }
    out
}

/// P(Σ a_s δ_s) = Σ a_s 1_s.
pub fn expectation_p(b: &FellBundle, x: &CcElement) -> CMat {
    let n = b.carrier_dim();
    let mut out = CMat::zeros(n, n);
    for (&s, a) in &x.terms {
        out += mm(a, b.unit_of(s));
    }
    out
}

/// The scalar Gram form tr P(ξ_i* ξ_j) on the labeled basis, with its
/// kernel (= N_P) and a pivot basis of the quotient C_alg.
#[derive(Clone, Debug)]
pub struct GramPresentation {
    pub labels: Vec<(usize, usize)>,
    pub gram: CMat,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// labeled-basis indices whose classes form a basis of C_alg
    pub pivots: Vec<usize>,
    pub kernel_basis: Vec<Vec<C64>>,
    /// λ_min / λ_max of the Gram restricted to the pivots
    pub quotient_ratio: f64,
}

pub fn gram_presentation(b: &FellBundle) -> Result<GramPresentation> {
    let sg = b.semigroup();
    let d = b.total_dim();
    if d > MAX_GRAM_DIM {
        return Err(FellError::TooLarge(format!("C_c has dimension {d}")));
    }
    let labels = b.labeled_basis();
    let offs = offsets(b);
    let n_el = sg.size();
    // rows for each s: entries (s,i) × (t,j) = tr(b_i* b_j 1_{s*t})
    let blocks: Vec<CMat> = par::map_range(n_el, |s| {
        let fs = b.fiber(s);
        let mut rows = CMat::zeros(fs.dim(), d);
        if fs.dim() == 0 {
            return rows;
        }
        for t in 0..n_el {
            let ft = b.fiber(t);
            if ft.dim() == 0 {
                continue;
            }
            let unit = b.unit_st(s, t);
            if unit.iter().all(|z| z.norm() < 1e-14) {
                continue;
            }
            for (j, bj) in ft.basis().iter().enumerate() {
                let bu = mm(bj, unit);
                for (i, bi) in fs.basis().iter().enumerate() {
                    rows[(i, offs[t] + j)] = fro_inner(bi, &bu);
                }
            }
        }
        rows
    });
    let mut gram = CMat::zeros(d, d);
    for s in 0..n_el {
        let k = b.fiber(s).dim();
        if k > 0 {
            gram.view_mut((offs[s], 0), (k, d)).copy_from(&blocks[s]);
        }
    }
    let gram = crate::linalg::hermitize(&gram);
    let eig = herm_eigvals(&gram);
    let max_eigenvalue = eig.last().copied().unwrap_or(0.0);
    let min_eigenvalue = eig.first().copied().unwrap_or(0.0);
    if min_eigenvalue < -1e-9 * max_eigenvalue.max(1.0) {
        return Err(FellError::GramNotPSD(min_eigenvalue));
    }
    let diag: Vec<f64> = (0..d).map(|i| gram[(i, i)].re).collect();
    let chol = pivoted_cholesky(&diag, |j| gram.column(j).iter().copied().collect(), GRAM_TOL);
    let mut pivots = chol.pivots.clone();
    pivots.sort_unstable();
    let r = pivots.len();
    let gpp = CMat::from_fn(r, r, |a, c| gram[(pivots[a], pivots[c])]);
    let qe = herm_eigvals(&gpp);
    let quotient_ratio = match (qe.first(), qe.last()) {
        (Some(&lo), Some(&hi)) if hi > 0.0 => lo / hi,
        _ => 1.0,
    };
    let mut kernel_basis = Vec::new();
    if r < d {
        let is_piv: Vec<bool> = (0..d).map(|i| pivots.binary_search(&i).is_ok()).collect();
        let gpn = CMat::from_fn(r, d, |a, j| gram[(pivots[a], j)]);
        let y = solve(&gpp, &gpn).ok_or_else(|| FellError::IllConditioned("quotient Gram is singular".into()))?;
        for j in (0..d).filter(|&j| !is_piv[j]) {
            let mut v = vec![ZERO; d];
            v[j] = C64::new(1.0, 0.0);
            for (a, &p) in pivots.iter().enumerate() {
                v[p] -= y[(a, j)];
            }
            kernel_basis.push(v);
        }
    }
    Ok(GramPresentation { labels, gram, min_eigenvalue, max_eigenvalue, pivots, kernel_basis, quotient_ratio })
}

/// C_alg = C_c / N_P on the pivot basis.
#[derive(Clone, Debug)]
pub struct CrossedProduct {
    pub gram: GramPresentation,
    /// r × D matrix sending labeled coordinates to pivot coordinates
    reduce: CMat,
    pub ideal_defect: f64,
}

impl CrossedProduct {
    pub fn dim(&self) -> usize {
        self.gram.pivots.len()
    }

    /// Coordinates of the class of ξ in the pivot basis.
    pub fn reduce(&self, cf: &[C64]) -> Vec<C64> {
        matvec(&self.reduce, cf)
    }

    /// ‖G c‖ / (λ_max ‖c‖): zero exactly on N_P.
    pub fn null_defect(&self, cf: &[C64]) -> f64 {
        let g = matvec(&self.gram.gram, cf);
        vnorm(&g) / (self.gram.max_eigenvalue.max(f64::MIN_POSITIVE) * vnorm(cf).max(f64::MIN_POSITIVE))
    }
}

pub fn crossed_product(b: &FellBundle) -> Result<CrossedProduct> {
    let gram = gram_presentation(b)?;
    let d = gram.labels.len();
    let r = gram.pivots.len();
    let gpp = CMat::from_fn(r, r, |a, c| gram.gram[(gram.pivots[a], gram.pivots[c])]);
    let gpn = CMat::from_fn(r, d, |a, j| gram.gram[(gram.pivots[a], j)]);
    let reduce = if r == 0 {
        CMat::zeros(0, d)
    } else {
        solve(&gpp, &gpn).ok_or_else(|| FellError::IllConditioned("quotient Gram is singular".into()))?
    };
    let mut cp = CrossedProduct { gram, reduce, ideal_defect: 0.0 };
    cp.ideal_defect = ideal_defect(b, &cp, 6, 11);
    if cp.ideal_defect > 1e-7 {
        return Err(FellError::IdealNotTwoSided(cp.ideal_defect));
    }
    Ok(cp)
}

/// Largest null defect of β k, k β and k* for random k ∈ N_P and basis β.
pub fn ideal_defect(b: &FellBundle, cp: &CrossedProduct, samples: usize, seed: u64) -> f64 {
    let kb = &cp.gram.kernel_basis;
    if kb.is_empty() {
        return 0.0;
    }
    let d = cp.gram.labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let mut kc = vec![ZERO; d];
        for v in kb {
            let z = random_c64(&mut rng);
            for (o, x) in kc.iter_mut().zip(v) {
                *o += z * x;
            }
        }
        let k = CcElement::from_coords(b, &kc);
        let j = rng.gen_range(0..d);
        let mut e = vec![ZERO; d];
        e[j] = C64::new(1.0, 0.0);
        let beta = CcElement::from_coords(b, &e);
        for x in [cc_mul(b, &beta, &k), cc_mul(b, &k, &beta), cc_star(b, &k)] {
            let c = x.coords(b);
            if vnorm(&c) > 1e-13 * vnorm(&kc) {
                worst = worst.max(cp.null_defect(&c));
            }
        }
    }
    worst
}

#[derive(Clone)]
struct FiberSpace {
    /// orthonormal basis of R_s = span F_s C^N (N × k)
    u: CMat,
    /// u = Σ_j b_j pre[j]
    pre: Vec<CMat>,
    offset: usize,
}

/// ℓ²(𝒜) ⊗_{A₁} C^N as C^dim with Λ acting by left multiplication.
#[derive(Clone)]
pub struct RegularRep {
    n: usize,
    spaces: Vec<FiberSpace>,
    /// column g: coordinates of generator g in an orthonormal basis of H
    coords: CMat,
    pivots: Vec<usize>,
    cp_inv: CMat,
}

impl std::fmt::Debug for RegularRep {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RegularRep(dim {})", self.dim_h())
    }
}

fn fiber_space(b: &FellBundle, s: usize, offset: usize) -> FiberSpace {
    let n = b.carrier_dim();
    let basis = b.fiber(s).basis();
    if basis.is_empty() {
        return FiberSpace { u: CMat::zeros(n, 0), pre: vec![], offset };
    }
    // Σ b_j b_j* has range R_s
    let mut x = CMat::zeros(n, n);
    for bj in basis {
        x += mm(bj, &adj(bj));
    }
    let (vals, vecs) = herm_eig(&x);
    let top = vals.last().copied().unwrap_or(0.0);
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > 1e-11 * top).collect();
    let mut u = CMat::zeros(n, keep.len());
    let mut yinv = CMat::zeros(n, keep.len());
    for (k, &i) in keep.iter().enumerate() {
        u.set_column(k, &vecs.column(i));
        yinv.set_column(k, &(vecs.column(i) / C64::new(vals[i], 0.0)));
    }
    // u = X X⁺ u and X = Σ b_j b_j*, so u = Σ_j b_j (b_j* X⁺ u)
    let pre = basis.iter().map(|bj| mm(&adj(bj), &yinv)).collect();
    FiberSpace { u, pre, offset }
}

impl RegularRep {
    pub fn new(b: &FellBundle) -> Result<Self> {
        let sg = b.semigroup();
        let n = b.carrier_dim();
        let n_el = sg.size();
        let mut spaces = Vec::with_capacity(n_el);
        let mut total = 0;
        let raw: Vec<FiberSpace> = par::map_range(n_el, |s| fiber_space(b, s, 0));
        for mut fsp in raw {
            fsp.offset = total;
            total += fsp.u.ncols();
            spaces.push(fsp);
        }
        let owner: Vec<(usize, usize)> =
            (0..n_el).flat_map(|s| (0..spaces[s].u.ncols()).map(move |a| (s, a))).collect();
        let diag = vec![1.0; total];
        // column (t, β): G[(s,α),(t,β)] = u_{s,α}* Σ_j b_j 1_{s*t} pre_j[:, β]
        let column = |g: usize| -> Vec<C64> {
            let (t, beta) = owner[g];
            let sp = &spaces[t];
            let basis = b.fiber(t).basis();
            let mut cache: HashMap<*const CMat, Vec<C64>> = HashMap::new();
            let mut out = vec![ZERO; total];
            for s in 0..n_el {
                let us = &spaces[s].u;
                if us.ncols() == 0 {
                    continue;
                }
                let unit = b.unit_st(s, t);
                let v = cache.entry(unit as *const CMat).or_insert_with(|| {
                    let mut acc = vec![ZERO; n];
                    for (j, bj) in basis.iter().enumerate() {
                        let w: Vec<C64> = sp.pre[j].column(beta).iter().copied().collect();
                        let pw = matvec(unit, &w);
                        for (o, z) in acc.iter_mut().zip(matvec(bj, &pw)) {
                            *o += z;
                        }
                    }
                    acc
                });
                for a in 0..us.ncols() {
                    out[spaces[s].offset + a] = dotc(us.column(a).as_slice(), v);
                }
            }
            out
        };
        let chol = pivoted_cholesky(&diag, column, GRAM_TOL);
        let r = chol.pivots.len();
        let coords = chol.l.adjoint();
        let mut cp = CMat::zeros(r, r);
        for (k, &p) in chol.pivots.iter().enumerate() {
            cp.set_column(k, &coords.column(p));
        }
        let cp_inv = crate::linalg::inverse(&cp).ok_or_else(|| FellError::IllConditioned("regular representation pivots".into()))?;
        Ok(RegularRep { n, spaces, coords, pivots: chol.pivots, cp_inv })
    }

    pub fn dim_h(&self) -> usize {
        self.coords.nrows()
    }

    /// H-coordinates of a vector y ∈ R_s.
    fn embed(&self, s: usize, y: &[C64]) -> Vec<C64> {
        let sp = &self.spaces[s];
        let r = self.dim_h();
        let mut out = vec![ZERO; r];
        for a in 0..sp.u.ncols() {
            let z = dotc(sp.u.column(a).as_slice(), y);
            if z == ZERO {
                continue;
            }
            let col = self.coords.column(sp.offset + a);
            for (o, x) in out.iter_mut().zip(col.iter()) {
                *o += z * x;
            }
        }
        out
    }

    fn owner(&self, g: usize) -> (usize, usize) {
        let s = self.spaces.iter().rposition(|sp| sp.offset <= g && sp.u.ncols() > 0 && g < sp.offset + sp.u.ncols()).unwrap();
        (s, g - self.spaces[s].offset)
    }

    /// Λ(a δ_r) as a matrix on H, for a ∈ F_r.
    pub fn lambda(&self, b: &FellBundle, r: usize, a: &CMat) -> CMat {
        let sg = b.semigroup();
        let dim = self.dim_h();
        let mut img = CMat::zeros(dim, dim);
        for (k, &p) in self.pivots.iter().enumerate() {
            let (t, beta) = self.owner(p);
            let y = matvec(a, self.spaces[t].u.column(beta).as_slice());
            let col = self.embed(sg.mul(r, t), &y);
            img.column_mut(k).copy_from_slice(&col);
        }
        mm(&img, &self.cp_inv)
    }

    pub fn lambda_basis(&self, b: &FellBundle, s: usize, i: usize) -> CMat {
        self.lambda(b, s, &b.fiber(s).basis()[i])
    }

    pub fn lambda_cc(&self, b: &FellBundle, x: &CcElement) -> CMat {
        let dim = self.dim_h();
        let mut out = CMat::zeros(dim, dim);
        for (&s, a) in &x.terms {
            out += self.lambda(b, s, &b.fiber(s).project(a));
        }
        out
    }

    /// Columns (b_i δ_s) ⊗ e_k pushed into H and stacked over k; the Gram of
    /// these columns is the scalar Gram of C_c.
    pub fn stacked_column(&self, b: &FellBundle, s: usize, i: usize) -> Vec<C64> {
        let bi = &b.fiber(s).basis()[i];
        let mut out = Vec::with_capacity(self.n * self.dim_h());
        for k in 0..self.n {
            let y: Vec<C64> = bi.column(k).iter().copied().collect();
            out.extend(self.embed(s, &y));
        }
        out
    }
}

/// C*_red realized as Λ(C_c) ⊆ B(H).
#[derive(Clone, Debug)]
pub struct ReducedAlgebra {
    pub rep: RegularRep,
    pub algebra: MatrixAlgebra,
    pub generators_used: usize,
    /// max ‖Λ(a δ_s) − Λ(a δ_μ(s))‖ over sampled non-maximal generators
    pub lift_defect: f64,
    pub closure_defect: f64,
}

/// Generators of C*_red: every labeled basis element, or for tensored
/// bundles only the maximal fibers (a δ_s − a δ_μ(s) lies in the null ideal).
pub fn reduced_algebra(b: &FellBundle) -> Result<ReducedAlgebra> {
    let rep = RegularRep::new(b)?;
    let gens = red_generators(b);
    let dim_h = rep.dim_h();
    let mut span = SpanBasis::new(dim_h * dim_h, 1e-9);
    let mut scale: f64 = 0.0;
    for chunk in gens.chunks(64) {
        let mats = par::map_slice(chunk, |&(s, i)| rep.lambda_basis(b, s, i));
        if scale == 0.0 {
            scale = mats.iter().map(fro).fold(0.0, f64::max);
        }
        for m in &mats {
            span.push_scaled(m.as_slice(), scale.max(fro(m)));
        }
    }
    let algebra = MatrixAlgebra::from_span(dim_h, span);
    let lift_defect = if b.tensor_origin().is_some() { lift_defect(b, &rep) } else { 0.0 };
    let closure_defect = algebra.closure_defect(3, 17);
    Ok(ReducedAlgebra { rep, algebra, generators_used: gens.len(), lift_defect, closure_defect })
}

/// Largest ‖Λ(a δ_s) − Λ(a δ_m)‖ over a fixed sample of non-maximal s with
/// maximal lift m: zero when the maximal fibers generate C*_red.
pub fn lift_defect(b: &FellBundle, rep: &RegularRep) -> f64 {
    let sg = b.semigroup();
    let lift = sg.maximal_lift();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let non_max: Vec<usize> = (0..sg.size()).filter(|&s| lift[s] != s && b.fiber(s).dim() > 0).collect();
    let mut worst: f64 = 0.0;
    for _ in 0..non_max.len().min(8) {
        let s = non_max[rng.gen_range(0..non_max.len())];
        let i = rng.gen_range(0..b.fiber(s).dim());
        let a = &b.fiber(s).basis()[i];
        let d = fro(&(rep.lambda(b, s, a) - rep.lambda(b, lift[s], a))) / (1.0 + fro(a));
        worst = worst.max(d);
    }
    worst
}

/// dim Λ(span of the generators), read off the cyclic columns Λ(x)(1 ⊗ e_k).
/// Those columns all vanish exactly when P(x*x) = 0, i.e. when Λ(x) = 0, so
/// their rank is the dimension without forming dim_h × dim_h images.
pub fn cyclic_rank(b: &FellBundle, rep: &RegularRep, gens: &[(usize, usize)]) -> usize {
    if gens.is_empty() {
        return 0;
    }
    let cols = par::map_slice(gens, |&(s, i)| rep.stacked_column(b, s, i));
    let len = cols[0].len();
    let mut c = CMat::zeros(len, cols.len());
    for (j, col) in cols.iter().enumerate() {
        c.column_mut(j).copy_from_slice(col);
    }
    let g = mm(&adj(&c), &c);
    let diag: Vec<f64> = (0..g.nrows()).map(|i| g[(i, i)].re).collect();
    pivoted_cholesky(&diag, |j| g.column(j).iter().copied().collect(), GRAM_TOL).pivots.len()
}

/// Maximal-fiber generators for tensored bundles, every basis element otherwise.
pub fn red_generators(b: &FellBundle) -> Vec<(usize, usize)> {
    if b.tensor_origin().is_some() {
        let maxs = b.semigroup().maximal_elements();
        maxs.iter().flat_map(|&m| (0..b.fiber(m).dim()).map(move |i| (m, i))).collect()
    } else {
        b.labeled_basis()
    }
}

/// *-homomorphism defects of Λ on basis pairs (sampled when large), and the
/// fiber isometry ‖Λ(a δ_s)‖ = ‖a‖ on random fiber elements.
pub fn lambda_report(b: &FellBundle, rep: &RegularRep, tol: f64, seed: u64) -> CheckReport {
    let sg = b.semigroup();
    let labels = b.labeled_basis();
    let d = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(usize, usize)> = if d <= 24 {
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect()
    } else {
        (0..300).map(|_| (rng.gen_range(0..d), rng.gen_range(0..d))).collect()
    };
    let mut report = CheckReport::new(tol);
    let results = par::map_slice(&pairs, |&(i, j)| {
        let (s, a) = labels[i];
        let (t, c) = labels[j];
        let (x, y) = (&b.fiber(s).basis()[a], &b.fiber(t).basis()[c]);
        let lx = rep.lambda(b, s, x);
        let ly = rep.lambda(b, t, y);
        let lxy = rep.lambda(b, sg.mul(s, t), &mm(x, y));
        let scale = 1.0 + fro(x) * fro(y);
        let m = fro(&(lxy - mm(&lx, &ly))) / scale;
        let st = fro(&(rep.lambda(b, sg.star(s), &adj(x)) - adj(&lx))) / (1.0 + fro(x));
        (m, st, (i, j))
    });
    let mut mult = Worst::default();
    let mut star = Worst::default();
    for (m, st, at) in results {
        mult.see(m, at);
        star.see(st, at);
    }
    report.push("Λ(xy) = Λ(x)Λ(y)", mult);
    report.push("Λ(x*) = Λ(x)*", star);
    let mut iso = Worst::default();
    for s in 0..sg.size() {
        let f = b.fiber(s);
        if f.dim() == 0 {
            continue;
        }
        let cf: Vec<C64> = (0..f.dim()).map(|_| random_c64(&mut rng)).collect();
        let a = f.from_coords(&cf);
        let na = opnorm(&a);
        let nl = opnorm(&rep.lambda(b, s, &a));
        iso.see((na - nl).abs() / (1.0 + na), (s, s));
    }
    report.push("fiber isometry", iso);
    report
}

/// Q_c = C_c / ℐ realized on the maximal fibers.
#[derive(Clone, Debug)]
pub struct UniversalQuotient {
    pub algebra: StarAlgebra,
    /// (maximal element, fiber index) of each quotient basis vector
    pub basis_labels: Vec<(usize, usize)>,
    lift: Vec<usize>,
    offset: HashMap<usize, usize>,
    /// columns of the dim Q × (Σ dim of maximal fibers) reduction map, sparsified
    k_cols: Vec<SVec>,
    inclusions: Vec<Vec<SVec>>,
}

impl UniversalQuotient {
    pub fn dim(&self) -> usize {
        self.algebra.dim()
    }

    /// Q_c coordinates of the class of (Σ_i cf_i b_i) δ_s.
    pub fn coords_of(&self, s: usize, cf: &[C64]) -> Vec<C64> {
        let m = self.lift[s];
        let off = self.offset[&m];
        let mut out = vec![ZERO; self.dim()];
        for (i, &z) in cf.iter().enumerate() {
            if z == ZERO {
                continue;
            }
            for &(k, w) in &self.inclusions[s][i] {
                for &(r, x) in &self.k_cols[off + k] {
                    out[r] += z * w * x;
                }
            }
        }
        out
    }

    pub fn coords_of_basis(&self, s: usize, i: usize, fiber_dim: usize) -> Vec<C64> {
        let mut cf = vec![ZERO; fiber_dim];
        cf[i] = C64::new(1.0, 0.0);
        self.coords_of(s, &cf)
    }
}

/// Sum repeated indices of a sparse vector, then drop entries as `sparsify` does.
fn merge_terms(mut terms: SVec) -> SVec {
    terms.sort_unstable_by_key(|&(r, _)| r);
    let mut out: SVec = Vec::with_capacity(terms.len());
    for (r, z) in terms {
        match out.last_mut() {
            Some((last, acc)) if *last == r => *acc += z,
            _ => out.push((r, z)),
        }
    }
    let m = out.iter().map(|(_, z)| z.norm()).fold(0.0, f64::max);
    out.retain(|(_, z)| z.norm() > DROP_TOL * m);
    out
}

fn sparse_columns(m: &CMat) -> Vec<SVec> {
    (0..m.ncols()).map(|j| sparsify(m.column(j).as_slice())).collect()
}

pub fn universal_quotient(b: &FellBundle) -> Result<UniversalQuotient> {
    let sg = b.semigroup();
    let n_el = sg.size();
    let maxs = sg.maximal_elements();
    let lift = sg.maximal_lift();
    let mut offset = HashMap::new();
    let mut dmax = 0;
    for &m in &maxs {
        offset.insert(m, dmax);
        dmax += b.fiber(m).dim();
    }
    let inclusions: Vec<Vec<SVec>> = par::map_range(n_el, |v| sparse_columns(&b.inclusion_matrix(v, lift[v])));
    // relations a δ_m0 − a δ_mk for a ∈ F_v and maximal m0, mk ≥ v
    let mut rel = SpanBasis::new(dmax, 1e-9);
    for v in 0..n_el {
        let kv = b.fiber(v).dim();
        if kv == 0 {
            continue;
        }
        let ups: Vec<usize> = maxs.iter().copied().filter(|&m| sg.leq(v, m)).collect();
        if ups.len() < 2 {
            continue;
        }
        let i0 = b.inclusion_matrix(v, ups[0]);
        for &mk in &ups[1..] {
            let ik = b.inclusion_matrix(v, mk);
            for j in 0..kv {
                let mut vec = vec![ZERO; dmax];
                for i in 0..i0.nrows() {
                    vec[offset[&ups[0]] + i] += i0[(i, j)];
                }
                for i in 0..ik.nrows() {
                    vec[offset[&mk] + i] -= ik[(i, j)];
                }
                rel.push(&vec);
            }
        }
    }
    let (pivots, k) = if rel.rank() == 0 {
        // no relations: the maximal fibers are the quotient
        ((0..dmax).collect::<Vec<usize>>(), CMat::identity(dmax, dmax))
    } else {
        // G = 1 − RR* projects onto the complement of the relations; pivots
        // are independent columns of G and K = G[piv, piv]⁻¹ G[piv, :]
        let r = rel.to_matrix();
        let g = CMat::identity(dmax, dmax) - mm(&r, &adj(&r));
        let diag: Vec<f64> = (0..dmax).map(|i| g[(i, i)].re).collect();
        let mut pivots = pivoted_cholesky(&diag, |j| g.column(j).iter().copied().collect(), 1e-10).pivots;
        pivots.sort_unstable();
        if pivots.len() + rel.rank() != dmax {
            return Err(FellError::IllConditioned(format!("quotient by ℐ: {} pivots for corank {}", pivots.len(), dmax - rel.rank())));
        }
        let dq = pivots.len();
        let gpp = CMat::from_fn(dq, dq, |a, c| g[(pivots[a], pivots[c])]);
        let gpn = CMat::from_fn(dq, dmax, |a, j| g[(pivots[a], j)]);
        let k = if dq == 0 {
            CMat::zeros(0, dmax)
        } else {
            solve(&gpp, &gpn).ok_or_else(|| FellError::IllConditioned("quotient by ℐ".into()))?
        };
        (pivots, k)
    };
    let dq = pivots.len();
    let mut owner = Vec::with_capacity(dmax);
    for &m in &maxs {
        for i in 0..b.fiber(m).dim() {
            owner.push((m, i));
        }
    }
    let basis_labels: Vec<(usize, usize)> = pivots.iter().map(|&p| owner[p]).collect();
    let k_cols = sparse_columns(&k);
    let mut q = UniversalQuotient { algebra: StarAlgebra::new(0, vec![], vec![])?, basis_labels, lift, offset, k_cols, inclusions };
    let reduce = |q: &UniversalQuotient, s: usize, sc: &SVec| -> SVec {
        let m = q.lift[s];
        let off = q.offset[&m];
        let mut terms: SVec = Vec::new();
        for &(i, z) in sc {
            for &(kk, w) in &q.inclusions[s][i] {
                terms.extend(q.k_cols[off + kk].iter().map(|&(r, x)| (r, z * w * x)));
            }
        }
        merge_terms(terms)
    };
    let table = b.basis_product_table(&q.basis_labels);
    let prod: Vec<SVec> = par::map_range(dq * dq, |pq| {
        let (m1, _) = q.basis_labels[pq / dq];
        let (m2, _) = q.basis_labels[pq % dq];
        if table[pq].is_empty() {
            return Vec::new();
        }
        reduce(&q, sg.mul(m1, m2), &table[pq])
    });
    let star: Vec<SVec> = (0..dq)
        .map(|p| {
            let (m, i) = q.basis_labels[p];
            reduce(&q, sg.star(m), &b.basis_star_coords(m, i))
        })
        .collect();
    q.algebra = StarAlgebra::new(dq, prod, star)?;
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::Action;
    use crate::bundle::{from_isg_action, tensor_with, trivial_bundle};
    use crate::semigroup::InverseSemigroup;

    fn i2_trivial() -> FellBundle {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        trivial_bundle("I2", &s).unwrap()
    }

    #[test]
    fn expectation_on_unit_fiber_is_identity() {
        let b = i2_trivial();
        let u = b.semigroup().unit();
        for a in b.fiber(u).basis() {
            let p = expectation_p(&b, &CcElement::single(u, a.clone()));
            assert!(fro(&(p - a)) < 1e-12);
        }
    }

    #[test]
    fn group_bundle_has_no_null_ideal() {
        let s = InverseSemigroup::cyclic_group(3).unwrap();
        let b = trivial_bundle("Z3", &s).unwrap();
        let cp = crossed_product(&b).unwrap();
        assert_eq!(cp.dim(), 3);
        assert!(cp.gram.kernel_basis.is_empty());
        let red = reduced_algebra(&b).unwrap();
        assert_eq!(red.algebra.dim(), 3);
    }

    #[test]
    fn semilattice_kernel_is_label_difference() {
        let s = InverseSemigroup::chain(2).unwrap();
        let b = trivial_bundle("chain2", &s).unwrap();
        let cp = crossed_product(&b).unwrap();
        assert_eq!(b.total_dim() - cp.dim(), 1);
        let k = CcElement::from_coords(&b, &cp.gram.kernel_basis[0]);
        // the two terms are the same matrix with opposite signs
        let terms: Vec<&CMat> = k.terms.values().collect();
        assert_eq!(terms.len(), 2);
        assert!(fro(&(terms[0] + terms[1])) < 1e-10);
        let q = universal_quotient(&b).unwrap();
        assert_eq!(q.dim(), 2);
    }

    #[test]
    fn i2_trivial_dimensions() {
        let b = i2_trivial();
        let cp = crossed_product(&b).unwrap();
        assert_eq!(cp.dim(), 7);
        let red = reduced_algebra(&b).unwrap();
        assert_eq!(red.algebra.dim(), 7);
        let blocks = red.algebra.decompose(0).unwrap();
        assert_eq!(crate::concrete::block_multiset(&blocks), vec![1, 1, 1, 2]);
        let q = universal_quotient(&b).unwrap();
        assert!(q.dim() >= cp.dim());
        let env = crate::envelope::envelope(&q.algebra).unwrap();
        assert_eq!(env.block_multiset(), vec![1, 1, 1, 2]);
        assert!(lambda_report(&b, &red.rep, 1e-9, 1).passed());
    }

    #[test]
    fn dual_rank_matches_gram_rank() {
        let b = i2_trivial();
        let cp = crossed_product(&b).unwrap();
        let rep = RegularRep::new(&b).unwrap();
        let cols: Vec<Vec<C64>> = b.labeled_basis().iter().map(|&(s, i)| rep.stacked_column(&b, s, i)).collect();
        assert_eq!(crate::linalg::rank_of(&cols, 1e-9), cp.dim());
    }

    #[test]
    fn i2_action_expectation_example() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let b = from_isg_action("I2", &s, &Action::new(2, maps.clone())).unwrap();
        // identity on one point
        let e = (0..s.size()).find(|&x| s.is_idempotent(x) && maps[x].rank() == 1 && maps[x].get(0) == Some(0)).unwrap();
        let a = b.fiber(e).basis()[0].clone();
        let p = expectation_p(&b, &CcElement::single(e, a.clone()));
        assert!(fro(&(p - &a)) < 1e-12);
        assert!((a[(0, 0)] - C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn tensor_scales_reduced_dimension() {
        let b = i2_trivial();
        let t = tensor_with(&b, &[2]).unwrap();
        let red = reduced_algebra(&t).unwrap();
        assert_eq!(red.algebra.dim(), 28);
        assert!(red.lift_defect < 1e-9);
        let q = universal_quotient(&t).unwrap();
        let env = crate::envelope::envelope(&q.algebra).unwrap();
        assert_eq!(env.block_multiset(), vec![2, 2, 2, 4]);
    }

    #[test]
    fn tensor_fast_paths_match_generic() {
        let b = i2_trivial().remixed(3).unwrap();
        let t = tensor_with(&b, &[1, 2]).unwrap();
        let plain = FellBundle::new("plain", t.semigroup().clone(), t.carrier_dim(), t.bases()).unwrap();
        let sg = t.semigroup();
        for s in 0..sg.size() {
            for u in 0..sg.size() {
                let (ds, du) = (t.fiber(s).dim(), t.fiber(u).dim());
                for i in (0..ds).step_by(3) {
                    for j in (0..du).step_by(5) {
                        let a = densify(&t.basis_product_coords(s, i, u, j), t.fiber(sg.mul(s, u)).dim());
                        let c = densify(&plain.basis_product_coords(s, i, u, j), t.fiber(sg.mul(s, u)).dim());
                        assert!(a.iter().zip(&c).all(|(x, y)| (x - y).norm() < 1e-9));
                    }
                }
            }
            for i in 0..t.fiber(s).dim() {
                let a = densify(&t.basis_star_coords(s, i), t.fiber(sg.star(s)).dim());
                let c = densify(&plain.basis_star_coords(s, i), t.fiber(sg.star(s)).dim());
                assert!(a.iter().zip(&c).all(|(x, y)| (x - y).norm() < 1e-9));
            }
        }
    }

    fn densify(v: &SVec, d: usize) -> Vec<C64> {
        crate::envelope::densify(v, d)
    }
}
