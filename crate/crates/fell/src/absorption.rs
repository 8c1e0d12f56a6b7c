//! Representations of a bundle on C^d, the space ℓ²_π(S,H) with the
//! representation π^Λ, the induced space ℓ²(𝒜) ⊗_{π₁} H with Λ ⊗ id, and the
//! unitary U_π between them.
//!
//! Both Hilbert spaces are handled the same way: each fiber contributes an
//! orthonormal family (H_s on the π side, the fiber quotient of A_s ⊗ H on
//! the induced side), the cross Gram is factored by pivoted Cholesky, and
//! operators are read off their action on the pivot vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bundle::FellBundle;
use crate::concrete::{ConcreteBlock, MatrixAlgebra};
use crate::cross_sectional::{ReducedAlgebra, GRAM_TOL};
use crate::error::{FellError, Result};
use crate::linalg::{
    adj, block_diag, dotc, fro, herm_eig, inverse, matvec, mm, mm3, opnorm, pivoted_cholesky, random_unitary, rank_of,
    SpanBasis, CMat, C64, ONE, ZERO,
};
use crate::par;
use crate::report::{CheckReport, Worst};

/// π_s(b_{s,i}) for every labeled basis element.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    pub dim_h: usize,
    pub maps: Vec<Vec<CMat>>,
}

impl Representation {
    /// π_s = the inclusion F_s ⊆ M_N acting on C^N.
    pub fn carrier(b: &FellBundle) -> Self {
        Representation { dim_h: b.carrier_dim(), maps: b.bases() }
    }

    pub fn zero(b: &FellBundle, d: usize) -> Self {
        let maps = b.fibers().iter().map(|f| vec![CMat::zeros(d, d); f.dim()]).collect();
        Representation { dim_h: d, maps }
    }

    pub fn direct_sum(&self, other: &Representation) -> Self {
        let maps = self
            .maps
            .iter()
            .zip(&other.maps)
            .map(|(x, y)| x.iter().zip(y).map(|(a, c)| block_diag(&[a.clone(), c.clone()])).collect())
            .collect();
        Representation { dim_h: self.dim_h + other.dim_h, maps }
    }

    pub fn conjugated(&self, u: &CMat) -> Self {
        let ua = adj(u);
        let maps = self.maps.iter().map(|v| v.iter().map(|m| mm3(u, m, &ua)).collect()).collect();
        Representation { dim_h: self.dim_h, maps }
    }

    /// π_s of the element with fiber coordinates `cf`.
    pub fn image_coords(&self, s: usize, cf: &[C64]) -> CMat {
        let mut out = CMat::zeros(self.dim_h, self.dim_h);
        for (i, &z) in cf.iter().enumerate() {
            if z != ZERO {
                out += &self.maps[s][i] * z;
            }
        }
        out
    }

    fn image_sparse(&self, s: usize, cf: &[(usize, C64)]) -> CMat {
        let mut out = CMat::zeros(self.dim_h, self.dim_h);
        for &(i, z) in cf {
            out += &self.maps[s][i] * z;
        }
        out
    }

    /// π_s(a) for a matrix a ∈ F_s.
    pub fn image(&self, b: &FellBundle, s: usize, a: &CMat) -> CMat {
        self.image_coords(s, &b.fiber(s).coords(a))
    }

    pub fn check_shape(&self, b: &FellBundle) -> Result<()> {
        if self.maps.len() != b.semigroup().size() {
            return Err(FellError::Shape(format!("{} fibers given for {} elements", self.maps.len(), b.semigroup().size())));
        }
        for (s, v) in self.maps.iter().enumerate() {
            if v.len() != b.fiber(s).dim() {
                return Err(FellError::Shape(format!("fiber {s} needs {} images, got {}", b.fiber(s).dim(), v.len())));
            }
            if v.iter().any(|m| m.nrows() != self.dim_h || m.ncols() != self.dim_h) {
                return Err(FellError::Shape(format!("image at {s} is not {0}×{0}", self.dim_h)));
            }
        }
        Ok(())
    }
}

/// Outcome of validate_representation.
#[derive(Clone, Debug, Serialize)]
pub struct RepValidation {
    pub report: CheckReport,
    pub nondegenerate: bool,
    pub unit_faithful: bool,
    #[serde(skip)]
    pub error: Option<FellError>,
}

impl RepValidation {
    pub fn passed(&self) -> bool {
        self.error.is_none()
    }
}

/// Pairs of basis elements beyond which products are sampled.
pub const EXHAUSTIVE_REP_PAIRS: usize = 40_000;

fn fail(which: &str, w: &Worst) -> FellError {
    let (s, t) = w.at.unwrap_or((0, 0));
    FellError::RepAxiomFails { which: which.to_string(), s, t, defect: w.defect }
}

/// Check π_s(a)π_t(b) = π_st(ab), π_s(a)* = π_s*(a*) and π_s(a) = π_u(a) for
/// s ≤ u on basis elements; report nondegeneracy and faithfulness of π₁.
pub fn validate_representation(b: &FellBundle, rep: &Representation, tol: f64) -> RepValidation {
    let mut report = CheckReport::new(tol);
    if let Err(e) = rep.check_shape(b) {
        return RepValidation { report, nondegenerate: false, unit_faithful: false, error: Some(e) };
    }
    let sg = b.semigroup();
    let labels = b.labeled_basis();
    let d = labels.len();
    let pairs: Vec<(usize, usize)> = if d * d <= EXHAUSTIVE_REP_PAIRS {
        (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0x7e9);
        (0..EXHAUSTIVE_REP_PAIRS).map(|_| (rng.gen_range(0..d), rng.gen_range(0..d))).collect()
    };
    let scale = |m: &CMat| 1.0 + fro(m);
    let mult = Worst::merge_all(par::map_slice(&pairs, |&(x, y)| {
        let (s, i) = labels[x];
        let (t, j) = labels[y];
        let (pa, pb) = (&rep.maps[s][i], &rep.maps[t][j]);
        let rhs = rep.image_sparse(sg.mul(s, t), &b.basis_product_coords(s, i, t, j));
        let mut w = Worst::default();
        w.see(fro(&(mm(pa, pb) - rhs)) / (scale(pa) * scale(pb)), (s, t));
        w
    }));
    let mut star = Worst::default();
    let mut order = Worst::default();
    for &(s, i) in &labels {
        let pa = &rep.maps[s][i];
        let rhs = rep.image_sparse(sg.star(s), &b.basis_star_coords(s, i));
        star.see(fro(&(adj(pa) - rhs)) / scale(pa), (s, sg.star(s)));
    }
    for s in 0..sg.size() {
        if b.fiber(s).dim() == 0 {
            continue;
        }
        for u in 0..sg.size() {
            if u == s || !sg.leq(s, u) {
                continue;
            }
            let inc = b.inclusion_matrix(s, u);
            for i in 0..b.fiber(s).dim() {
                let cf: Vec<C64> = inc.column(i).iter().copied().collect();
                let pa = &rep.maps[s][i];
                order.see(fro(&(pa - rep.image_coords(u, &cf))) / scale(pa), (s, u));
            }
        }
    }
    let mut error = None;
    for (name, w) in [("multiplicative", mult), ("adjoint", star), ("order", order)] {
        if !report.push(name, w) && error.is_none() {
            error = Some(fail(name, &w));
        }
    }
    let unit = sg.unit();
    let dh = rep.dim_h;
    let mut cols: Vec<Vec<C64>> = Vec::new();
    for m in &rep.maps[unit] {
        for k in 0..dh {
            cols.push(m.column(k).iter().copied().collect());
        }
    }
    let nondegenerate = rank_of(&cols, 1e-9) == dh;
    let flat: Vec<Vec<C64>> = rep.maps[unit].iter().map(|m| m.as_slice().to_vec()).collect();
    let unit_faithful = rank_of(&flat, 1e-9) == b.fiber(unit).dim();
    RepValidation { report, nondegenerate, unit_faithful, error }
}

/// A Hilbert space given by per-fiber orthonormal families and their cross
/// Gram, in the coordinates of a pivoted Cholesky factor.
#[derive(Clone, Debug)]
struct GramSpace {
    offsets: Vec<usize>,
    owner: Vec<(usize, usize)>,
    coords: CMat,
    pivots: Vec<usize>,
    cp_inv: CMat,
}

impl GramSpace {
    fn new(sizes: &[usize], gram: &CMat) -> Result<Self> {
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut owner = Vec::new();
        let mut acc = 0;
        for (s, &k) in sizes.iter().enumerate() {
            offsets.push(acc);
            owner.extend((0..k).map(|a| (s, a)));
            acc += k;
        }
        let diag: Vec<f64> = (0..acc).map(|i| gram[(i, i)].re).collect();
        let chol = pivoted_cholesky(&diag, |j| gram.column(j).iter().copied().collect(), GRAM_TOL);
        let coords = chol.l.adjoint();
        let r = chol.pivots.len();
        let mut cp = CMat::zeros(r, r);
        for (k, &p) in chol.pivots.iter().enumerate() {
            cp.set_column(k, &coords.column(p));
        }
        let cp_inv = inverse(&cp).ok_or_else(|| FellError::IllConditioned("Gram pivots".into()))?;
        Ok(GramSpace { offsets, owner, coords, pivots: chol.pivots, cp_inv })
    }

    fn dim(&self) -> usize {
        self.coords.nrows()
    }

    /// Coordinates of Σ_α x_α g_{s,α}.
    fn embed(&self, s: usize, x: &[C64]) -> Vec<C64> {
        let mut out = vec![ZERO; self.dim()];
        for (a, &z) in x.iter().enumerate() {
            if z == ZERO {
                continue;
            }
            for (o, c) in out.iter_mut().zip(self.coords.column(self.offsets[s] + a).iter()) {
                *o += z * c;
            }
        }
        out
    }

    /// The operator sending each pivot generator g_{s,α} to image(s, α)
    /// (given in the coordinates of `target`).
    fn operator<F: Fn(usize, usize) -> Vec<C64>>(&self, target_dim: usize, image: F) -> CMat {
        let r = self.dim();
        let mut img = CMat::zeros(target_dim, r);
        for (k, &p) in self.pivots.iter().enumerate() {
            let (s, a) = self.owner[p];
            img.column_mut(k).copy_from_slice(&image(s, a));
        }
        mm(&img, &self.cp_inv)
    }
}

/// Eigenvectors of each Hermitian matrix whose eigenvalue exceeds `rel`
/// times the largest eigenvalue over all of them, scaled by λ^{-1/2} when
/// `normalize` is set. A fiber that π kills must come out empty, so the cut
/// is global rather than per fiber.
fn supports(mats: Vec<CMat>, rel: f64, normalize: bool) -> Vec<CMat> {
    let eigs: Vec<(Vec<f64>, CMat)> = mats.iter().map(|m| herm_eig(&crate::linalg::hermitize(m))).collect();
    let top = eigs.iter().filter_map(|(v, _)| v.last().copied()).fold(0.0, f64::max);
    eigs.into_iter()
        .map(|(vals, vecs)| {
            let keep: Vec<usize> = (0..vals.len()).filter(|&i| top > 0.0 && vals[i] > rel * top).collect();
            let mut u = CMat::zeros(vecs.nrows(), keep.len());
            for (k, &i) in keep.iter().enumerate() {
                let c = if normalize { 1.0 / vals[i].sqrt() } else { 1.0 };
                u.set_column(k, &(vecs.column(i) * C64::new(c, 0.0)));
            }
            u
        })
        .collect()
}

/// π side: orthonormal basis of H_s = span π_s(F_s) H for every s.
fn pi_fibers(rep: &Representation) -> Vec<CMat> {
    let d = rep.dim_h;
    let mats = rep
        .maps
        .iter()
        .map(|imgs| {
            let mut x = CMat::zeros(d, d);
            for m in imgs {
                x += mm(m, &adj(m));
            }
            x
        })
        .collect();
    supports(mats, 1e-11, false)
}

/// Induced side, fiber s: raw generators (b_i δ_s) ⊗ e_k with the form
/// ⟨e_k, π₁(b_i* b_j 1_{s*t}) e_l⟩.
fn induced_block(b: &FellBundle, rep: &Representation, s: usize, t: usize) -> (CMat, f64) {
    let d = rep.dim_h;
    let unit = b.semigroup().unit();
    let (fs, ft) = (b.fiber(s), b.fiber(t));
    let p = b.unit_st(s, t);
    let mut out = CMat::zeros(fs.dim() * d, ft.dim() * d);
    let mut escape: f64 = 0.0;
    let f1 = b.fiber(unit);
    for (i, bi) in fs.basis().iter().enumerate() {
        let bia = adj(bi);
        for (j, bj) in ft.basis().iter().enumerate() {
            let x = mm3(&bia, bj, p);
            if x.iter().all(|z| z.norm() < 1e-15) {
                continue;
            }
            escape = escape.max(f1.distance(&x) / (1.0 + fro(&x)));
            let px = rep.image(b, unit, &x);
            for k in 0..d {
                for l in 0..d {
                    out[(i * d + k, j * d + l)] = px[(k, l)];
                }
            }
        }
    }
    (out, escape)
}

/// The Fell absorption data for one representation.
#[derive(Clone, Debug)]
pub struct Absorption {
    pi_fibers: Vec<CMat>,
    pi: GramSpace,
    /// Y_s: orthonormal basis of the fiber quotient, as columns over (i, k)
    ind_fibers: Vec<CMat>,
    /// fiber Grams G^(s) on raw generators
    ind_fiber_gram: Vec<CMat>,
    ind: GramSpace,
    /// U_π in (π coordinates) × (induced coordinates)
    pub u: CMat,
    /// max distance of P(ξ*η) from the unit fiber
    pub expectation_escape: f64,
    /// max |dim H_s − dim of the induced fiber quotient|
    pub fiber_dim_mismatch: usize,
}

impl Absorption {
    pub fn pi_dim(&self) -> usize {
        self.pi.dim()
    }

    pub fn induced_dim(&self) -> usize {
        self.ind.dim()
    }

    /// (dim H_s, dim of the induced fiber) for every s.
    pub fn fiber_dims(&self) -> Vec<(usize, usize)> {
        self.pi_fibers.iter().zip(&self.ind_fibers).map(|(u, y)| (u.ncols(), y.ncols())).collect()
    }

    /// ℓ²_π coordinates of v δ_s for v ∈ H_s.
    pub fn pi_vector(&self, s: usize, v: &[C64]) -> Vec<C64> {
        let u = &self.pi_fibers[s];
        let x: Vec<C64> = (0..u.ncols()).map(|a| dotc(u.column(a).as_slice(), v)).collect();
        self.pi.embed(s, &x)
    }

    /// π^Λ(a δ_r) on ℓ²_π: v δ_t ↦ π_r(a) v δ_rt.
    pub fn pi_lambda(&self, b: &FellBundle, rep: &Representation, r: usize, cf: &[C64]) -> CMat {
        let sg = b.semigroup();
        let pa = rep.image_coords(r, cf);
        self.pi.operator(self.pi.dim(), |t, beta| {
            let y = matvec(&pa, self.pi_fibers[t].column(beta).as_slice());
            self.pi_vector(sg.mul(r, t), &y)
        })
    }

    /// (Λ ⊗ id)(a δ_r) on the induced space: (c δ_t) ⊗ v ↦ (ac δ_rt) ⊗ v.
    pub fn induced_lambda(&self, b: &FellBundle, d: usize, r: usize, cf: &[C64]) -> CMat {
        let sg = b.semigroup();
        self.ind.operator(self.ind.dim(), |t, beta| {
            let rt = sg.mul(r, t);
            let y = &self.ind_fibers[t];
            let mut z = vec![ZERO; b.fiber(rt).dim() * d];
            for (i, &ci) in cf.iter().enumerate() {
                if ci == ZERO {
                    continue;
                }
                for j in 0..b.fiber(t).dim() {
                    let prod = b.basis_product_coords(r, i, t, j);
                    for l in 0..d {
                        let yv = y[(j * d + l, beta)];
                        if yv == ZERO {
                            continue;
                        }
                        for &(m, c) in &prod {
                            z[m * d + l] += ci * c * yv;
                        }
                    }
                }
            }
            let g = &self.ind_fiber_gram[rt];
            let x = matvec(&adj(&self.ind_fibers[rt]), &matvec(g, &z));
            self.ind.embed(rt, &x)
        })
    }

    /// The algebra generated by π^Λ(b δ_s) over all basis elements.
    pub fn pi_lambda_algebra(&self, b: &FellBundle, rep: &Representation) -> MatrixAlgebra {
        let labels = b.labeled_basis();
        let mats = par::map_slice(&labels, |&(s, i)| {
            let mut cf = vec![ZERO; b.fiber(s).dim()];
            cf[i] = ONE;
            self.pi_lambda(b, rep, s, &cf)
        });
        MatrixAlgebra::spanned_by(self.pi_dim(), mats.iter(), 1e-9)
    }
}

/// Build ℓ²_π(S,H), the induced space and U_π.
pub fn build_pi_lambda(b: &FellBundle, rep: &Representation) -> Result<Absorption> {
    rep.check_shape(b)?;
    let sg = b.semigroup();
    let n_el = sg.size();
    let d = rep.dim_h;
    let unit = sg.unit();

    // π side
    let pi_fibers = pi_fibers(rep);
    let pi_sizes: Vec<usize> = pi_fibers.iter().map(|u| u.ncols()).collect();
    let unit_images: Vec<CMat> = (0..n_el).map(|w| rep.image(b, unit, b.unit_of(w))).collect();
    let pi_blocks: Vec<Vec<CMat>> = par::map_range(n_el, |s| {
        (0..n_el)
            .map(|t| {
                let w = sg.mul(s, sg.star(t));
                mm3(&adj(&pi_fibers[s]), &unit_images[w], &pi_fibers[t])
            })
            .collect()
    });
    let pi_gram = assemble(&pi_sizes, &pi_blocks);
    let pi = GramSpace::new(&pi_sizes, &pi_gram)?;

    // induced side: per-fiber quotients first
    let raw: Vec<(CMat, f64)> = par::map_range(n_el, |s| induced_block(b, rep, s, s));
    let mut escape: f64 = 0.0;
    let mut ind_fiber_gram = Vec::with_capacity(n_el);
    for (g, e) in raw {
        escape = escape.max(e);
        ind_fiber_gram.push(crate::linalg::hermitize(&g));
    }
    let ind_fibers = supports(ind_fiber_gram.clone(), 1e-10, true);
    let ind_sizes: Vec<usize> = ind_fibers.iter().map(|y| y.ncols()).collect();
    let cross: Vec<(Vec<CMat>, f64)> = par::map_range(n_el, |s| {
        let mut e: f64 = 0.0;
        let row = (0..n_el)
            .map(|t| {
                if ind_sizes[s] == 0 || ind_sizes[t] == 0 {
                    return CMat::zeros(ind_sizes[s], ind_sizes[t]);
                }
                let (k, esc) = induced_block(b, rep, s, t);
                e = e.max(esc);
                mm3(&adj(&ind_fibers[s]), &k, &ind_fibers[t])
            })
            .collect();
        (row, e)
    });
    let mut ind_blocks = Vec::with_capacity(n_el);
    for (row, e) in cross {
        escape = escape.max(e);
        ind_blocks.push(row);
    }
    let ind_gram = assemble(&ind_sizes, &ind_blocks);
    let ind = GramSpace::new(&ind_sizes, &ind_gram)?;

    let fiber_dim_mismatch = pi_sizes.iter().zip(&ind_sizes).map(|(a, c)| a.abs_diff(*c)).max().unwrap_or(0);
    let mut out = Absorption {
        pi_fibers,
        pi,
        ind_fibers,
        ind_fiber_gram,
        ind,
        u: CMat::zeros(0, 0),
        expectation_escape: escape,
        fiber_dim_mismatch,
    };
    // U_π: (b_i δ_s) ⊗ e_k ↦ π_s(b_i) e_k δ_s
    let u = out.ind.operator(out.pi.dim(), |s, alpha| {
        let y = &out.ind_fibers[s];
        let mut v = vec![ZERO; d];
        for i in 0..b.fiber(s).dim() {
            let m = &rep.maps[s][i];
            for k in 0..d {
                let c = y[(i * d + k, alpha)];
                if c == ZERO {
                    continue;
                }
                for (o, x) in v.iter_mut().zip(m.column(k).iter()) {
                    *o += c * x;
                }
            }
        }
        out.pi_vector(s, &v)
    });
    out.u = u;
    Ok(out)
}

fn assemble(sizes: &[usize], blocks: &[Vec<CMat>]) -> CMat {
    let total: usize = sizes.iter().sum();
    let mut g = CMat::zeros(total, total);
    let mut ro = 0;
    for (s, row) in blocks.iter().enumerate() {
        let mut co = 0;
        for (t, blk) in row.iter().enumerate() {
            if sizes[s] > 0 && sizes[t] > 0 {
                g.view_mut((ro, co), (sizes[s], sizes[t])).copy_from(blk);
            }
            co += sizes[t];
        }
        ro += sizes[s];
    }
    crate::linalg::hermitize(&g)
}

/// Absorption report.
#[derive(Clone, Debug, Serialize)]
pub struct AbsorptionReport {
    pub report: CheckReport,
    pub pi_dim: usize,
    pub induced_dim: usize,
    pub nondegenerate: bool,
    pub unit_faithful: bool,
    /// dimension of the algebra generated by π^Λ, when π₁ is faithful
    pub pi_lambda_dim: Option<usize>,
}

impl AbsorptionReport {
    pub fn passed(&self) -> bool {
        self.report.passed()
    }
}

/// Unitarity of U_π and U_π (Λ⊗id)(a δ_s) = π^Λ(a δ_s) U_π on every basis element.
pub fn verify_absorption(b: &FellBundle, rep: &Representation, tol: f64) -> Result<AbsorptionReport> {
    let v = validate_representation(b, rep, tol);
    if let Some(e) = v.error {
        return Err(e);
    }
    if !v.nondegenerate {
        return Err(FellError::Degenerate);
    }
    let abs = build_pi_lambda(b, rep)?;
    let mut report = CheckReport::new(tol);
    let mut dims = Worst::default();
    dims.see(abs.fiber_dim_mismatch as f64 + abs.pi_dim().abs_diff(abs.induced_dim()) as f64, (abs.pi_dim(), abs.induced_dim()));
    report.push("dimensions agree", dims);
    let mut esc = Worst::default();
    esc.see(abs.expectation_escape, (0, 0));
    report.push("P(ξ*η) lies in the unit fiber", esc);
    let (mut uu, mut uu2) = (Worst::default(), Worst::default());
    if abs.pi_dim() == abs.induced_dim() {
        let r = abs.pi_dim();
        let id = CMat::identity(r, r);
        uu.see(opnorm(&(mm(&adj(&abs.u), &abs.u) - &id)), (0, 0));
        uu2.see(opnorm(&(mm(&abs.u, &adj(&abs.u)) - &id)), (0, 0));
    } else {
        uu.see(f64::INFINITY, (0, 0));
        uu2.see(f64::INFINITY, (0, 0));
    }
    report.push("U*U = 1", uu);
    report.push("UU* = 1", uu2);
    let labels = b.labeled_basis();
    let d = rep.dim_h;
    let inter = Worst::merge_all(par::map_slice(&labels, |&(s, i)| {
        let mut w = Worst::default();
        if abs.pi_dim() != abs.induced_dim() {
            w.see(f64::INFINITY, (s, i));
            return w;
        }
        let mut cf = vec![ZERO; b.fiber(s).dim()];
        cf[i] = ONE;
        let lhs = mm(&abs.pi_lambda(b, rep, s, &cf), &abs.u);
        let rhs = mm(&abs.u, &abs.induced_lambda(b, d, s, &cf));
        w.see(opnorm(&(lhs - rhs)) / (1.0 + opnorm(&b.fiber(s).basis()[i])), (s, i));
        w
    }));
    report.push("U (Λ⊗id)(x) = π^Λ(x) U", inter);
    let pi_lambda_dim = v.unit_faithful.then(|| abs.pi_lambda_algebra(b, rep).dim());
    Ok(AbsorptionReport {
        report,
        pi_dim: abs.pi_dim(),
        induced_dim: abs.induced_dim(),
        nondegenerate: v.nondegenerate,
        unit_faithful: v.unit_faithful,
        pi_lambda_dim,
    })
}

/// Irreducible subrepresentations of the regular representation, one per
/// simple block of C*_red, from which random representations are assembled.
#[derive(Clone, Debug)]
pub struct RepSampler {
    /// per irreducible: π_s(b_i) for every labeled basis element
    irreps: Vec<Vec<Vec<CMat>>>,
    sizes: Vec<usize>,
}

impl RepSampler {
    /// For each block with central projection c, the top eigenvector v of
    /// a random Hermitian element compressed to cH lies under a minimal
    /// projection, so the cyclic subspace C*_red·v is irreducible.
    pub fn new(b: &FellBundle, red: &ReducedAlgebra, blocks: &[ConcreteBlock], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = red.algebra.basis();
        let labels = b.labeled_basis();
        let lambdas = par::map_slice(&labels, |&(s, i)| red.rep.lambda_basis(b, s, i));
        let mut irreps = Vec::with_capacity(blocks.len());
        let mut sizes = Vec::with_capacity(blocks.len());
        for blk in blocks {
            let (cv, cvec) = herm_eig(&blk.central);
            let range: Vec<usize> = (0..cv.len()).filter(|&i| cv[i] > 0.5).collect();
            let mut vc = CMat::zeros(blk.central.nrows(), range.len());
            for (k, &i) in range.iter().enumerate() {
                vc.set_column(k, &cvec.column(i));
            }
            let x = red.algebra.random_element(&mut rng);
            let h = mm3(&adj(&vc), &(&x + adj(&x)), &vc);
            let (_, hv) = herm_eig(&h);
            let top = hv.column(hv.ncols() - 1).into_owned();
            let v: Vec<C64> = (&vc * top).iter().copied().collect();
            let mut span = SpanBasis::new(v.len(), 1e-9);
            for m in &basis {
                span.push_scaled(&matvec(m, &v), 1.0);
            }
            if span.rank() != blk.size {
                return Err(FellError::GenericityFailure(format!("cyclic subspace of rank {} in a block of size {}", span.rank(), blk.size)));
            }
            let w = span.to_matrix();
            let wa = adj(&w);
            let mut maps: Vec<Vec<CMat>> = b.fibers().iter().map(|f| Vec::with_capacity(f.dim())).collect();
            for (&(s, _), l) in labels.iter().zip(&lambdas) {
                maps[s].push(mm3(&wa, l, &w));
            }
            irreps.push(maps);
            sizes.push(blk.size);
        }
        Ok(RepSampler { irreps, sizes })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn irrep(&self, k: usize) -> Representation {
        Representation { dim_h: self.sizes[k], maps: self.irreps[k].clone() }
    }

    /// The direct sum of the irreducibles in `chosen`.
    pub fn sum_of(&self, chosen: &[usize]) -> Representation {
        let dim_h = chosen.iter().map(|&k| self.sizes[k]).sum();
        let maps = (0..self.irreps.first().map_or(0, |r| r.len()))
            .map(|s| {
                (0..self.irreps[0][s].len())
                    .map(|i| block_diag(&chosen.iter().map(|&k| self.irreps[k][s][i].clone()).collect::<Vec<_>>()))
                    .collect()
            })
            .collect();
        Representation { dim_h, maps }
    }

    /// A random direct sum of irreducibles of total dimension at most
    /// `max_dim`, conjugated by a random unitary. None when every
    /// irreducible is larger than `max_dim`.
    pub fn sample(&self, max_dim: usize, seed: u64) -> Option<Representation> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fitting: Vec<usize> = (0..self.sizes.len()).filter(|&k| self.sizes[k] <= max_dim).collect();
        if fitting.is_empty() {
            return None;
        }
        let mut chosen = vec![fitting[rng.gen_range(0..fitting.len())]];
        let mut total = self.sizes[chosen[0]];
        for _ in 0..4 {
            let k = fitting[rng.gen_range(0..fitting.len())];
            if total + self.sizes[k] <= max_dim && rng.gen_bool(0.6) {
                chosen.push(k);
                total += self.sizes[k];
            }
        }
        let u = random_unitary(total, &mut rng);
        Some(self.sum_of(&chosen).conjugated(&u))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn carrier_rep_of_i2_is_absorbed() {
        let e = corpus::symmetric_inverse_monoid(2).unwrap();
        let rep = Representation::carrier(&e.bundle);
        let v = validate_representation(&e.bundle, &rep, 1e-9);
        assert!(v.passed() && v.nondegenerate && v.unit_faithful);
        let r = verify_absorption(&e.bundle, &rep, 1e-8).unwrap();
        assert!(r.passed(), "{:?}", r.report);
        assert_eq!(r.pi_dim, r.induced_dim);
        assert_eq!(r.pi_lambda_dim, Some(7));
    }

    #[test]
    fn zero_rep_is_valid_but_degenerate() {
        let e = corpus::trivial_group(2).unwrap();
        let rep = Representation::zero(&e.bundle, 2);
        let v = validate_representation(&e.bundle, &rep, 1e-9);
        assert!(v.passed());
        assert!(!v.nondegenerate);
        assert_eq!(verify_absorption(&e.bundle, &rep, 1e-8).unwrap_err(), FellError::Degenerate);
    }

    #[test]
    fn direct_sum_of_carrier_is_valid() {
        let e = corpus::pair_groupoid(3).unwrap();
        let c = Representation::carrier(&e.bundle);
        let rep = c.direct_sum(&c);
        assert!(validate_representation(&e.bundle, &rep, 1e-9).passed());
        let r = verify_absorption(&e.bundle, &rep, 1e-8).unwrap();
        assert!(r.passed(), "{:?}", r.report);
    }

    #[test]
    fn group_case_is_direct_sum_of_translates() {
        // for a group every H_g = H and ℓ²_π = ⊕_g H
        let e = corpus::trivial_group(3).unwrap();
        let rep = Representation::carrier(&e.bundle);
        let abs = build_pi_lambda(&e.bundle, &rep).unwrap();
        assert_eq!(abs.pi_dim(), 3);
        assert_eq!(abs.induced_dim(), 3);
    }

    #[test]
    fn broken_rep_is_rejected() {
        let e = corpus::trivial_group(2).unwrap();
        let mut rep = Representation::carrier(&e.bundle);
        rep.maps[1][0] = rep.maps[1][0].scale(2.0);
        let v = validate_representation(&e.bundle, &rep, 1e-9);
        assert!(matches!(v.error, Some(FellError::RepAxiomFails { .. })));
    }

    #[test]
    fn random_reps_are_absorbed() {
        let e = corpus::symmetric_inverse_monoid(2).unwrap();
        let red = crate::cross_sectional::reduced_algebra(&e.bundle).unwrap();
        let blocks = red.algebra.decompose(1).unwrap();
        let sampler = RepSampler::new(&e.bundle, &red, &blocks, 5).unwrap();
        assert_eq!(sampler.sizes(), &[1, 1, 1, 2]);
        for seed in 0..4 {
            let rep = sampler.sample(8, seed).unwrap();
            let r = verify_absorption(&e.bundle, &rep, 1e-8).unwrap();
            assert!(r.passed(), "{:?}", r.report);
        }
    }
}
