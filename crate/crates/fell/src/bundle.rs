//! Concrete Fell bundles: one carrier M_N and, for every element s, a
//! subspace F_s ⊆ M_N given by a basis. Multiplication, inclusion and
//! involution are the matrix operations.

use std::collections::HashMap;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envelope::SVec;
use crate::action::{germ_groupoid, validate_action, wide_failure, Action, FiniteGroupoid, GermGroupoid};
use crate::error::{FellError, Result};
use crate::linalg::{
    adj, fro, kron, lin_comb, mm, mm3, random_c64, support_projection, unflatten, CMat, SpanBasis, C64, ONE, ZERO,
};
use crate::par;
use crate::report::{CheckReport, Worst};
use crate::semigroup::InverseSemigroup;

/// Relative threshold for linear independence of fiber bases.
pub const BASIS_TOL: f64 = 1e-9;
/// Default tolerance for structural equalities.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A subspace of M_N with a fixed basis.
#[derive(Clone, Debug)]
pub struct Fiber {
    n: usize,
    basis: Vec<CMat>,
    span: SpanBasis,
    /// coordinates in `basis` = rinv · (orthonormal coordinates)
    rinv: CMat,
}

impl Fiber {
    /// Fails when the basis is dependent.
    pub fn new(n: usize, basis: Vec<CMat>) -> std::result::Result<Self, ()> {
        let mut span = SpanBasis::new(n * n, BASIS_TOL);
        let scale = basis.iter().map(fro).fold(0.0, f64::max);
        for b in &basis {
            if b.nrows() != n || b.ncols() != n || !span.push_scaled(b.as_slice(), scale) {
                return Err(());
            }
        }
        let k = basis.len();
        let mut r = CMat::zeros(k, k);
        for (j, b) in basis.iter().enumerate() {
            let cf = span.coords(b.as_slice());
            for i in 0..k {
                r[(i, j)] = cf[i];
            }
        }
        let rinv = if k == 0 { CMat::zeros(0, 0) } else { r.try_inverse().ok_or(())? };
        Ok(Fiber { n, basis, span, rinv })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    /// Orthonormal (Frobenius) basis, flattened.
    pub fn orthonormal(&self) -> &[Vec<C64>] {
        self.span.vectors()
    }

    pub fn orthonormal_matrices(&self) -> Vec<CMat> {
        self.span.vectors().iter().map(|v| unflatten(v, self.n)).collect()
    }

    /// Coordinates of (the projection of) m in the fiber basis.
    pub fn coords(&self, m: &CMat) -> Vec<C64> {
        let oc = self.span.coords(m.as_slice());
        let k = self.dim();
        (0..k).map(|i| (0..k).map(|j| self.rinv[(i, j)] * oc[j]).sum()).collect()
    }

    pub fn from_coords(&self, cf: &[C64]) -> CMat {
        lin_comb(cf, &self.basis, self.n, self.n)
    }

    /// Orthogonal projection onto the fiber.
    pub fn project(&self, m: &CMat) -> CMat {
        let oc = self.span.coords(m.as_slice());
        let mut out = vec![ZERO; self.n * self.n];
        for (cf, q) in oc.iter().zip(self.span.vectors()) {
            crate::linalg::axpy(*cf, q, &mut out);
        }
        unflatten(&out, self.n)
    }

    /// Frobenius distance from m to the fiber.
    pub fn distance(&self, m: &CMat) -> f64 {
        self.span.residual_norm(m.as_slice())
    }
}

/// The ideal I_{s,t} of A₁ with its unit projection.
#[derive(Clone, Debug)]
pub struct IdealWithUnit {
    pub ideal_basis: Vec<CMat>,
    pub unit_projection: CMat,
    /// distance of the unit projection from the ideal span
    pub membership_defect: f64,
}

#[derive(Clone, Debug)]
pub struct FellBundle {
    name: String,
    semigroup: InverseSemigroup,
    n: usize,
    fibers: Vec<Fiber>,
    /// 1_w = 1_{w,1}, the unit of the ideal generated by F_e, e ≤ w
    units: Vec<CMat>,
    /// set when the bundle is 𝒜 ⊗ B for a known 𝒜 and block list of B
    tensor: Option<Arc<TensorOrigin>>,
}

#[derive(Debug)]
pub struct TensorOrigin {
    pub base: FellBundle,
    pub blocks: Vec<usize>,
    /// (block offset, block size) of every matrix unit, in basis order
    units: Vec<(usize, usize, usize)>,
}

impl FellBundle {
    pub fn new(name: &str, semigroup: InverseSemigroup, n: usize, bases: Vec<Vec<CMat>>) -> Result<Self> {
        if bases.len() != semigroup.size() {
            return Err(FellError::Shape(format!(
                "{} fibers for a semigroup of size {}",
                bases.len(),
                semigroup.size()
            )));
        }
        let mut fibers = Vec::with_capacity(bases.len());
        for (s, b) in bases.into_iter().enumerate() {
            if b.iter().any(|m| m.nrows() != n || m.ncols() != n) {
                return Err(FellError::Shape(format!("fiber {s} has a matrix of the wrong size")));
            }
            fibers.push(Fiber::new(n, b).map_err(|_| FellError::DependentBasis(s))?);
        }
        let mut bundle = FellBundle { name: name.to_string(), semigroup, n, fibers, units: Vec::new(), tensor: None };
        bundle.units = bundle.compute_units();
        Ok(bundle)
    }

    fn compute_units(&self) -> Vec<CMat> {
        let s = &self.semigroup;
        let mut cache: HashMap<Vec<usize>, CMat> = HashMap::new();
        (0..s.size())
            .map(|w| {
                let key = s.down_idempotents(w);
                cache
                    .entry(key.clone())
                    .or_insert_with(|| {
                        let gens: Vec<&CMat> = key.iter().flat_map(|&e| self.fibers[e].basis()).collect();
                        self.support_of_span(&gens).0
                    })
                    .clone()
            })
            .collect()
    }

    /// Support projection of the span of some matrices in A₁, with the span basis.
    fn support_of_span(&self, gens: &[&CMat]) -> (CMat, Vec<CMat>) {
        let n = self.n;
        let scale = gens.iter().map(|g| fro(g)).fold(0.0, f64::max);
        let mut sb = SpanBasis::new(n * n, BASIS_TOL);
        for g in gens {
            sb.push_scaled(g.as_slice(), scale);
        }
        let qs: Vec<CMat> = sb.vectors().iter().map(|v| unflatten(v, n)).collect();
        let mut x = CMat::zeros(n, n);
        for q in &qs {
            x += mm(q, &adj(q));
        }
        (support_projection(&x, 1e-12), qs)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn semigroup(&self) -> &InverseSemigroup {
        &self.semigroup
    }

    pub fn carrier_dim(&self) -> usize {
        self.n
    }

    pub fn fiber(&self, s: usize) -> &Fiber {
        &self.fibers[s]
    }

    pub fn fibers(&self) -> &[Fiber] {
        &self.fibers
    }

    pub fn unit_fiber(&self) -> &Fiber {
        &self.fibers[self.semigroup.unit()]
    }

    /// 1_w = 1_{w,1}.
    pub fn unit_of(&self, w: usize) -> &CMat {
        &self.units[w]
    }

    /// 1_{s,t} through the identity I_{s,t} = I_{s*t,1}.
    pub fn unit_st(&self, s: usize, t: usize) -> &CMat {
        &self.units[self.semigroup.mul(self.semigroup.star(s), t)]
    }

    /// dim C_c = Σ dim F_s.
    pub fn total_dim(&self) -> usize {
        self.fibers.iter().map(Fiber::dim).sum()
    }

    /// (element, index in fiber basis) in canonical order.
    pub fn labeled_basis(&self) -> Vec<(usize, usize)> {
        (0..self.fibers.len()).flat_map(|s| (0..self.fibers[s].dim()).map(move |i| (s, i))).collect()
    }

    pub fn bases(&self) -> Vec<Vec<CMat>> {
        self.fibers.iter().map(|f| f.basis().to_vec()).collect()
    }

    /// The ideal of A₁ generated by F_{v*v} for v ≤ s, t, found by span
    /// closure under multiplication by A₁ on both sides.
    pub fn ideal_unit(&self, s: usize, t: usize) -> IdealWithUnit {
        let sg = &self.semigroup;
        let n = self.n;
        let mut gens: Vec<CMat> = Vec::new();
        for v in sg.common_lower(s, t) {
            gens.extend(self.fibers[sg.source_idem(v)].basis().iter().cloned());
        }
        let a1 = self.unit_fiber().basis();
        let scale = gens.iter().chain(a1.iter()).map(fro).fold(1.0, f64::max);
        let mut sb = SpanBasis::new(n * n, BASIS_TOL);
        let mut current: Vec<CMat> = Vec::new();
        for g in gens {
            if sb.push_scaled(g.as_slice(), scale) {
                current.push(g);
            }
        }
        for _round in 0..=a1.len() {
            let before = sb.rank();
            let snapshot = current.clone();
            for x in &snapshot {
                for a in a1 {
                    for y in [mm(a, x), mm(x, a)] {
                        if sb.push_scaled(y.as_slice(), scale * fro(a).max(1.0) * fro(x).max(1.0)) {
                            current.push(y);
                        }
                    }
                }
            }
            if sb.rank() == before {
                break;
            }
        }
        let refs: Vec<&CMat> = current.iter().collect();
        let (p, qs) = self.support_of_span(&refs);
        let membership_defect = sb.residual_norm(p.as_slice()) / (1.0 + fro(&p));
        IdealWithUnit { ideal_basis: qs, unit_projection: p, membership_defect }
    }

    pub fn tensor_origin(&self) -> Option<&TensorOrigin> {
        self.tensor.as_deref()
    }

    /// Coordinates of b_i b_j (b_i ∈ F_s, b_j ∈ F_t) in the basis of F_st.
    pub fn basis_product_coords(&self, s: usize, i: usize, t: usize, j: usize) -> SVec {
        if let Some(o) = &self.tensor {
            let u = o.units.len();
            let (bi, ui) = (i / u, i % u);
            let (bj, uj) = (j / u, j % u);
            let Some(k) = o.unit_product(ui, uj) else { return Vec::new() };
            return o.base.basis_product_coords(s, bi, t, bj).into_iter().map(|(a, z)| (a * u + k, z)).collect();
        }
        let st = self.semigroup.mul(s, t);
        let p = mm(&self.fibers[s].basis()[i], &self.fibers[t].basis()[j]);
        crate::envelope::sparsify(&self.fibers[st].coords(&p))
    }

    /// basis_product_coords for every ordered pair of `labels`, row-major.
    /// Tensored bundles compute each base product once.
    pub fn basis_product_table(&self, labels: &[(usize, usize)]) -> Vec<SVec> {
        let d = labels.len();
        if let Some(o) = &self.tensor {
            let u = o.units.len();
            let mut base_idx: HashMap<(usize, usize), usize> = HashMap::new();
            let mut base_labels = Vec::new();
            for &(s, i) in labels {
                base_idx.entry((s, i / u)).or_insert_with(|| {
                    base_labels.push((s, i / u));
                    base_labels.len() - 1
                });
            }
            let base = o.base.basis_product_table(&base_labels);
            let nb = base_labels.len();
            return crate::par::map_range(d * d, |pq| {
                let (s, i) = labels[pq / d];
                let (t, j) = labels[pq % d];
                let Some(k) = o.unit_product(i % u, j % u) else { return Vec::new() };
                let (bi, bj) = (base_idx[&(s, i / u)], base_idx[&(t, j / u)]);
                base[bi * nb + bj].iter().map(|&(a, z)| (a * u + k, z)).collect()
            });
        }
        crate::par::map_range(d * d, |pq| {
            let (s, i) = labels[pq / d];
            let (t, j) = labels[pq % d];
            self.basis_product_coords(s, i, t, j)
        })
    }

    /// Coordinates of b_i* (b_i ∈ F_s) in the basis of F_s*.
    pub fn basis_star_coords(&self, s: usize, i: usize) -> SVec {
        if let Some(o) = &self.tensor {
            let u = o.units.len();
            let (bi, ui) = (i / u, i % u);
            let k = o.unit_adjoint(ui);
            return o.base.basis_star_coords(s, bi).into_iter().map(|(a, z)| (a * u + k, z)).collect();
        }
        let a = adj(&self.fibers[s].basis()[i]);
        crate::envelope::sparsify(&self.fibers[self.semigroup.star(s)].coords(&a))
    }

    /// Columns: coordinates of the basis of F_v inside F_m, for v ≤ m.
    pub fn inclusion_matrix(&self, v: usize, m: usize) -> CMat {
        if v == m {
            let k = self.fibers[v].dim();
            return CMat::identity(k, k);
        }
        if let Some(o) = &self.tensor {
            let base = o.base.inclusion_matrix(v, m);
            return kron(&base, &CMat::identity(o.units.len(), o.units.len()));
        }
        let (fv, fm) = (&self.fibers[v], &self.fibers[m]);
        let mut out = CMat::zeros(fm.dim(), fv.dim());
        for (j, b) in fv.basis().iter().enumerate() {
            let cf = fm.coords(b);
            for i in 0..fm.dim() {
                out[(i, j)] = cf[i];
            }
        }
        out
    }

    /// Conjugate every fiber by a unitary.
    pub fn conjugated(&self, u: &CMat) -> Result<Self> {
        let ua = adj(u);
        let bases = self.fibers.iter().map(|f| f.basis().iter().map(|b| mm3(u, b, &ua)).collect()).collect();
        FellBundle::new(&self.name, self.semigroup.clone(), self.n, bases)
    }

    /// Replace each fiber basis by an invertible recombination of itself.
    pub fn remixed(&self, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.n;
        let bases = self
            .fibers
            .iter()
            .map(|f| {
                let k = f.dim();
                // identity plus a small random part stays invertible
                (0..k)
                    .map(|i| {
                        let cf: Vec<C64> = (0..k)
                            .map(|j| if i == j { ONE + random_c64(&mut rng) * 0.3 } else { random_c64(&mut rng) * 0.3 })
                            .collect();
                        lin_comb(&cf, f.basis(), n, n)
                    })
                    .collect()
            })
            .collect();
        FellBundle::new(&self.name, self.semigroup.clone(), n, bases)
    }
}

/// Matrix units E_{ab} of a block-diagonal algebra ⊕ M_{n_j}.
pub fn block_matrix_units(blocks: &[usize]) -> Vec<CMat> {
    let d: usize = blocks.iter().sum();
    let mut out = Vec::new();
    let mut off = 0;
    for &k in blocks {
        for a in 0..k {
            for b in 0..k {
                let mut e = CMat::zeros(d, d);
                e[(off + a, off + b)] = ONE;
                out.push(e);
            }
        }
        off += k;
    }
    out
}

/// 𝒜 ⊗ B for B = ⊕ M_{n_j}: F'_s = F_s ⊗ B.
pub fn tensor_with(bundle: &FellBundle, blocks: &[usize]) -> Result<FellBundle> {
    let units = block_matrix_units(blocks);
    let d: usize = blocks.iter().sum();
    let bases = bundle
        .fibers()
        .iter()
        .map(|f| f.basis().iter().flat_map(|a| units.iter().map(move |e| kron(a, e))).collect())
        .collect();
    let label: Vec<String> = blocks.iter().map(|k| k.to_string()).collect();
    let mut out = FellBundle::new(
        &format!("{}⊗[{}]", bundle.name(), label.join(",")),
        bundle.semigroup().clone(),
        bundle.carrier_dim() * d,
        bases,
    )?;
    let mut unit_meta = Vec::new();
    let mut off = 0;
    for &k in blocks {
        for a in 0..k {
            for b in 0..k {
                unit_meta.push((off, a, b));
            }
        }
        off += k;
    }
    out.tensor = Some(Arc::new(TensorOrigin { base: bundle.clone(), blocks: blocks.to_vec(), units: unit_meta }));
    Ok(out)
}

impl TensorOrigin {
    fn index_of(&self, off: usize, a: usize, b: usize) -> usize {
        self.units.iter().position(|&(o, x, y)| o == off && x == a && y == b).unwrap()
    }

    /// E_{ab} E_{cd} = δ_bc E_{ad} inside one block.
    fn unit_product(&self, i: usize, j: usize) -> Option<usize> {
        let (oi, a, b) = self.units[i];
        let (oj, c2, d) = self.units[j];
        (oi == oj && b == c2).then(|| self.index_of(oi, a, d))
    }

    fn unit_adjoint(&self, i: usize) -> usize {
        let (o, a, b) = self.units[i];
        self.index_of(o, b, a)
    }
}

/// The bundle of an action by partial bijections: F_s = span{T_s D : D diagonal on dom(s)}.
pub fn from_isg_action(name: &str, s: &InverseSemigroup, action: &Action) -> Result<FellBundle> {
    validate_action(s, action)?;
    let m = action.space_size;
    let bases = action
        .maps
        .iter()
        .map(|map| {
            map.pairs()
                .into_iter()
                .map(|(x, y)| {
                    let mut e = CMat::zeros(m, m);
                    e[(y, x)] = ONE;
                    e
                })
                .collect()
        })
        .collect();
    FellBundle::new(name, s.clone(), m, bases)
}

/// The bundle of the canonical action of S on its characters.
pub fn trivial_bundle(name: &str, s: &InverseSemigroup) -> Result<FellBundle> {
    let chars = s.characters();
    from_isg_action(name, s, &Action::new(chars.len(), s.character_action()))
}

/// Fiber data over a finite groupoid: unit fibers M_{n_x} and, for each arrow
/// g, a basis of A_g ⊆ M_{n_{r(g)} × n_{s(g)}}.
#[derive(Clone, Debug)]
pub struct GroupoidFibers {
    pub unit_dims: Vec<usize>,
    pub arrow_spaces: Vec<Vec<CMat>>,
}

impl GroupoidFibers {
    pub fn trivial_lines(g: &FiniteGroupoid) -> Self {
        GroupoidFibers {
            unit_dims: vec![1; g.unit_count],
            arrow_spaces: (0..g.arrow_count()).map(|_| vec![CMat::from_element(1, 1, ONE)]).collect(),
        }
    }

    /// A_g = all n_{r(g)} × n_{s(g)} matrices.
    pub fn full_blocks(g: &FiniteGroupoid, unit_dims: &[usize]) -> Self {
        let arrow_spaces = (0..g.arrow_count())
            .map(|a| {
                let (r, s) = (unit_dims[g.tgt[a]], unit_dims[g.src[a]]);
                let mut v = Vec::new();
                for i in 0..r {
                    for j in 0..s {
                        let mut e = CMat::zeros(r, s);
                        e[(i, j)] = ONE;
                        v.push(e);
                    }
                }
                v
            })
            .collect();
        GroupoidFibers { unit_dims: unit_dims.to_vec(), arrow_spaces }
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0; self.unit_dims.len() + 1];
        for x in 0..self.unit_dims.len() {
            off[x + 1] = off[x] + self.unit_dims[x];
        }
        off
    }

    pub fn carrier_dim(&self) -> usize {
        self.unit_dims.iter().sum()
    }

    /// Shapes, closure under composition and adjoint, at the groupoid level.
    pub fn check(&self, g: &FiniteGroupoid) -> Result<()> {
        if self.unit_dims.len() != g.unit_count || self.arrow_spaces.len() != g.arrow_count() {
            return Err(FellError::Shape("fiber data does not match the groupoid".into()));
        }
        let fibers: Vec<(usize, usize, SpanBasis)> = (0..g.arrow_count())
            .map(|a| {
                let (r, s) = (self.unit_dims[g.tgt[a]], self.unit_dims[g.src[a]]);
                let mut sb = SpanBasis::new(r * s, BASIS_TOL);
                for m in &self.arrow_spaces[a] {
                    sb.push(m.as_slice());
                }
                (r, s, sb)
            })
            .collect();
        for a in 0..g.arrow_count() {
            let (r, s, sb) = &fibers[a];
            if self.arrow_spaces[a].iter().any(|m| m.nrows() != *r || m.ncols() != *s) || sb.rank() != self.arrow_spaces[a].len() {
                return Err(FellError::FiberIncompatible(a));
            }
            let ai = g.inverse[a];
            for m in &self.arrow_spaces[a] {
                let ma = adj(m);
                if !fibers[ai].2.contains(ma.as_slice(), 1.0 + fro(m)) {
                    return Err(FellError::FiberIncompatible(a));
                }
            }
            for b in 0..g.arrow_count() {
                let Some(ab) = g.compose(a, b) else { continue };
                for x in &self.arrow_spaces[a] {
                    for y in &self.arrow_spaces[b] {
                        let p = mm(x, y);
                        if !fibers[ab].2.contains(p.as_slice(), 1.0 + fro(x) * fro(y)) {
                            return Err(FellError::FiberIncompatible(a));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// A_g placed at block (r(g), s(g)) of the carrier.
    pub fn embed(&self, g: &FiniteGroupoid, a: usize, m: &CMat) -> CMat {
        let off = self.offsets();
        let n = self.carrier_dim();
        let mut out = CMat::zeros(n, n);
        out.view_mut((off[g.tgt[a]], off[g.src[a]]), (m.nrows(), m.ncols())).copy_from(m);
        out
    }

    /// Projection onto the block of unit x.
    pub fn unit_block(&self, x: usize) -> CMat {
        let off = self.offsets();
        let n = self.carrier_dim();
        let mut out = CMat::zeros(n, n);
        for i in off[x]..off[x + 1] {
            out[(i, i)] = ONE;
        }
        out
    }
}

/// The bundle over a wide product-closed family of bisections with
/// F_u = ⊕_{g∈u} A_g. Returns the bundle and the family (G⁰ at index 0).
pub fn from_groupoid_bundle(g: &FiniteGroupoid, family: &[Vec<usize>], fibers: &GroupoidFibers) -> Result<(FellBundle, Vec<Vec<usize>>)> {
    if let Some(a) = wide_failure(g, family)? {
        return Err(FellError::NotWide(a));
    }
    fibers.check(g)?;
    let (s, fam, _) = crate::action::family_semigroup(g, family)?;
    let bases = fam
        .iter()
        .map(|u| u.iter().flat_map(|&a| fibers.arrow_spaces[a].iter().map(move |m| fibers.embed(g, a, m))).collect())
        .collect();
    let b = FellBundle::new("groupoid-bundle", s, fibers.carrier_dim(), bases)?;
    Ok((b, fam))
}

/// Everything needed to move between a bundle built from germs and its groupoid.
#[derive(Clone, Debug)]
pub struct GermContext {
    pub action: Action,
    pub germs: GermGroupoid,
    /// projection onto the block of each point, as carrier matrices
    pub point_proj: Vec<CMat>,
    /// basis of A_g for every germ arrow, as carrier matrices
    pub arrow_spaces: Vec<Vec<CMat>>,
}

impl GermContext {
    pub fn groupoid(&self) -> &FiniteGroupoid {
        &self.germs.groupoid
    }

    pub fn conjugated(&self, u: &CMat) -> GermContext {
        let ua = adj(u);
        GermContext {
            action: self.action.clone(),
            germs: self.germs.clone(),
            point_proj: self.point_proj.iter().map(|p| mm3(u, p, &ua)).collect(),
            arrow_spaces: self.arrow_spaces.iter().map(|v| v.iter().map(|m| mm3(u, m, &ua)).collect()).collect(),
        }
    }
}

/// Bundle over S from an action and fiber data on its germ groupoid:
/// F_s = ⊕_{x ∈ dom s} A_{[s,x]}.
pub fn germ_bundle(name: &str, s: &InverseSemigroup, action: &Action, unit_dims: &[usize]) -> Result<(FellBundle, GermContext)> {
    let germs = germ_groupoid(s, action)?;
    let g = &germs.groupoid;
    if unit_dims.len() != action.space_size || unit_dims.iter().any(|&d| d == 0) {
        return Err(FellError::Shape("unit dimensions must be positive, one per point".into()));
    }
    let fibers = GroupoidFibers::full_blocks(g, unit_dims);
    fibers.check(g)?;
    let arrow_spaces: Vec<Vec<CMat>> =
        (0..g.arrow_count()).map(|a| fibers.arrow_spaces[a].iter().map(|m| fibers.embed(g, a, m)).collect()).collect();
    let bases = (0..s.size())
        .map(|e| {
            action.maps[e]
                .domain()
                .into_iter()
                .flat_map(|x| arrow_spaces[germs.germ(e, x).unwrap()].iter().cloned())
                .collect()
        })
        .collect();
    let bundle = FellBundle::new(name, s.clone(), fibers.carrier_dim(), bases)?;
    let point_proj = (0..action.space_size).map(|x| fibers.unit_block(x)).collect();
    Ok((bundle, GermContext { action: action.clone(), germs, point_proj, arrow_spaces }))
}

/// Bundle validation outcome.
#[derive(Clone, Debug, Serialize)]
pub struct BundleValidation {
    pub report: CheckReport,
    pub exhaustive: bool,
    #[serde(skip)]
    pub error: Option<FellError>,
}

impl BundleValidation {
    pub fn passed(&self) -> bool {
        self.error.is_none()
    }

    pub fn into_result(self) -> Result<CheckReport> {
        match self.error {
            Some(e) => Err(e),
            None => Ok(self.report),
        }
    }
}

/// Pairs with more basis products than this are checked on random combinations.
pub const EXHAUSTIVE_PRODUCTS: usize = 400_000;

/// Verify the Fell bundle axioms of the concrete model.
pub fn validate_bundle(b: &FellBundle, tol: f64) -> BundleValidation {
    let sg = b.semigroup();
    let n = sg.size();
    let unit = sg.unit();
    let total = b.total_dim();
    let exhaustive = total * total <= EXHAUSTIVE_PRODUCTS;
    let mut report = CheckReport::new(tol);
    let mut error = None;

    // adjoint closure
    let adj_w = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        let ts = sg.star(s);
        if b.fiber(s).dim() != b.fiber(ts).dim() {
            w.see(f64::INFINITY, (s, ts));
        }
        for a in b.fiber(s).basis() {
            w.see(b.fiber(ts).distance(&adj(a)) / (1.0 + fro(a)), (s, ts));
        }
        w
    }));
    if !report.push("adjoint", adj_w) && error.is_none() {
        let (s, _) = adj_w.at.unwrap();
        error = Some(if s == unit {
            FellError::UnitFiberNotStarAlgebra("not closed under adjoint".into())
        } else {
            FellError::AdjointMismatch { s, defect: adj_w.defect }
        });
    }

    // products
    let prod_w = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ s as u64);
        for t in 0..n {
            let st = sg.mul(s, t);
            let (fs, ft) = (b.fiber(s), b.fiber(t));
            if fs.dim() == 0 || ft.dim() == 0 {
                continue;
            }
            if exhaustive {
                for x in fs.basis() {
                    for y in ft.basis() {
                        let p = mm(x, y);
                        w.see(b.fiber(st).distance(&p) / (1.0 + fro(x) * fro(y)), (s, t));
                    }
                }
            } else {
                for _ in 0..2 {
                    let x = random_element(fs, &mut rng);
                    let y = random_element(ft, &mut rng);
                    let p = mm(&x, &y);
                    w.see(b.fiber(st).distance(&p) / (1.0 + fro(&x) * fro(&y)), (s, t));
                }
            }
        }
        w
    }));
    if !report.push("product", prod_w) && error.is_none() {
        let (s, t) = prod_w.at.unwrap();
        error = Some(if s == unit && t == unit {
            FellError::UnitFiberNotStarAlgebra("not closed under product".into())
        } else {
            FellError::ProductEscapesFiber { s, t, defect: prod_w.defect }
        });
    }

    // inclusion along the order
    let inc_w = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        for t in 0..n {
            if s != t && sg.leq(s, t) {
                for a in b.fiber(s).basis() {
                    w.see(b.fiber(t).distance(a) / (1.0 + fro(a)), (s, t));
                }
            }
        }
        w
    }));
    if !report.push("inclusion", inc_w) && error.is_none() {
        let (s, t) = inc_w.at.unwrap();
        error = Some(FellError::InclusionFails { s, t, defect: inc_w.defect });
    }

    // F_s F_s* F_s spans F_s
    let sat_w = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        let f = b.fiber(s);
        if f.dim() == 0 {
            return w;
        }
        let got = saturation_rank(f);
        w.see(if got == f.dim() { 0.0 } else { f64::INFINITY }, (s, s));
        w
    }));
    if !report.push("saturation", sat_w) && error.is_none() {
        error = Some(FellError::NotSaturatedOnDiagonal(sat_w.at.unwrap().0));
    }
    BundleValidation { report, exhaustive, error }
}

fn random_element(f: &Fiber, rng: &mut ChaCha8Rng) -> CMat {
    let cf: Vec<C64> = (0..f.dim()).map(|_| random_c64(rng)).collect();
    f.from_coords(&cf)
}

/// Rank of span{a b* c : a, b, c ∈ F_s}, stopping once it reaches dim F_s.
fn saturation_rank(f: &Fiber) -> usize {
    let k = f.dim();
    let bs = f.basis();
    let scale = bs.iter().map(fro).fold(0.0, f64::max).powi(3);
    let n = bs[0].nrows();
    let mut sb = SpanBasis::new(n * n, BASIS_TOL);
    let adjs: Vec<CMat> = bs.iter().map(adj).collect();
    // diagonal triples first: a a* a already spans for partial isometries
    for i in 0..k {
        sb.push_scaled(mm3(&bs[i], &adjs[i], &bs[i]).as_slice(), scale);
    }
    'outer: for i in 0..k {
        for j in 0..k {
            if sb.rank() == k {
                break 'outer;
            }
            let ab = mm(&bs[i], &adjs[j]);
            for l in 0..k {
                sb.push_scaled(mm(&ab, &bs[l]).as_slice(), scale);
                if sb.rank() == k {
                    break 'outer;
                }
            }
        }
    }
    sb.rank()
}

/// Inclusion–exclusion p_F = Σ_{∅≠K⊆F} (−1)^{|K|+1} Π_{e∈K} 1_e.
pub fn join_by_inclusion_exclusion(projs: &[&CMat], n: usize) -> CMat {
    let k = projs.len();
    let mut out = CMat::zeros(n, n);
    for mask in 1u32..(1u32 << k) {
        let mut prod = crate::linalg::eye(n);
        for (i, p) in projs.iter().enumerate() {
            if mask & (1 << i) != 0 {
                prod = mm(&prod, p);
            }
        }
        let sign = if mask.count_ones() % 2 == 1 { 1.0 } else { -1.0 };
        out += prod.scale(sign);
    }
    out
}

/// Commutation identities of the ideal units, each as a defect table.
pub fn check_commutation(b: &FellBundle, tol: f64) -> CheckReport {
    let sg = b.semigroup();
    let n = sg.size();
    let nn = b.carrier_dim();
    let mut report = CheckReport::new(tol);

    // a 1_{s*t} = 1_{st*} a
    let w1 = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        for t in 0..n {
            let left = b.unit_of(sg.mul(sg.star(s), t));
            let right = b.unit_of(sg.mul(s, sg.star(t)));
            for a in b.fiber(s).basis() {
                let d = fro(&(mm(a, left) - mm(right, a))) / (1.0 + fro(a));
                w.see(d, (s, t));
            }
        }
        w
    }));
    report.push("a 1_{s*t} = 1_{st*} a", w1);

    // a 1_e = 1_{ses*} a for e ≤ s*s
    let w2 = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        let d = sg.source_idem(s);
        for &e in sg.idempotents() {
            if !sg.leq(e, d) {
                continue;
            }
            let conj = sg.mul3(s, e, sg.star(s));
            for a in b.fiber(s).basis() {
                let dd = fro(&(mm(a, b.unit_of(e)) - mm(b.unit_of(conj), a))) / (1.0 + fro(a));
                w.see(dd, (s, e));
            }
        }
        w
    }));
    report.push("a 1_e = 1_{ses*} a", w2);

    // A_se = span(A_s A_e)
    let w3 = Worst::merge_all(par::map_range(n, |s| {
        let mut w = Worst::default();
        for &e in sg.idempotents() {
            let se = sg.mul(s, e);
            let target = b.fiber(se);
            let mut sb = SpanBasis::new(nn * nn, BASIS_TOL);
            let mut esc: f64 = 0.0;
            let scale = b.fiber(s).basis().iter().map(fro).fold(0.0, f64::max)
                * b.fiber(e).basis().iter().map(fro).fold(0.0, f64::max);
            for x in b.fiber(s).basis() {
                for y in b.fiber(e).basis() {
                    let p = mm(x, y);
                    esc = esc.max(target.distance(&p) / (1.0 + scale));
                    if sb.rank() < target.dim() {
                        sb.push_scaled(p.as_slice(), scale);
                    }
                }
            }
            let d = if sb.rank() == target.dim() { esc } else { f64::INFINITY };
            w.see(d, (s, e));
        }
        w
    }));
    report.push("A_se = span A_s A_e", w3);

    // centrality of every 1_w in A₁
    let a1 = b.unit_fiber().basis();
    let w4 = Worst::merge_all(par::map_range(n, |v| {
        let mut w = Worst::default();
        let p = b.unit_of(v);
        for a in a1 {
            w.see(fro(&(mm(p, a) - mm(a, p))) / (1.0 + fro(a)), (v, v));
        }
        w
    }));
    report.push("1_w central", w4);

    // the unit projections are projections lying in their ideals
    let w5 = Worst::merge_all(par::map_range(n, |v| {
        let mut w = Worst::default();
        let p = b.unit_of(v);
        let d = fro(&(mm(p, p) - p)) + fro(&(adj(p) - p));
        let mut span = SpanBasis::new(nn * nn, BASIS_TOL);
        for &e in sg.down_idempotents(v).iter() {
            for m in b.fiber(e).basis() {
                span.push(m.as_slice());
            }
        }
        let member = span.residual_norm(p.as_slice()) / (1.0 + fro(p));
        w.see(d.max(member), (v, v));
        w
    }));
    report.push("1_w projection in ideal", w5);

    // join identity on the maximal idempotents below each element
    let w6 = Worst::merge_all(par::map_range(n, |v| {
        let mut w = Worst::default();
        let down = sg.down_idempotents(v);
        let maxs: Vec<usize> = down
            .iter()
            .copied()
            .filter(|&e| !down.iter().any(|&f| f != e && sg.leq(e, f)))
            .take(6)
            .collect();
        if maxs.is_empty() {
            w.see(fro(b.unit_of(v)), (v, v));
            return w;
        }
        let projs: Vec<&CMat> = maxs.iter().map(|&e| b.unit_of(e)).collect();
        let ie = join_by_inclusion_exclusion(&projs, nn);
        let mut sum = CMat::zeros(nn, nn);
        for p in &projs {
            sum += *p;
        }
        let join = support_projection(&sum, 1e-12);
        let d = fro(&(ie.clone() - &join)) + fro(&(ie - b.unit_of(v)));
        w.see(d, (v, v));
        w
    }));
    report.push("join by inclusion-exclusion", w6);
    report
}

/// Expand a coordinate vector with the matching fiber basis.
pub fn fiber_element(b: &FellBundle, s: usize, cf: &[C64]) -> CMat {
    b.fiber(s).from_coords(cf)
}

/// A random element of F_s.
pub fn random_fiber_element(b: &FellBundle, s: usize, rng: &mut ChaCha8Rng) -> CMat {
    random_element(b.fiber(s), rng)
}

/// Perturb one fiber basis by random noise (used to exercise failures).
pub fn perturbed(b: &FellBundle, s: usize, noise: f64, seed: u64) -> Result<FellBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = b.carrier_dim();
    let mut bases = b.bases();
    for m in bases[s].iter_mut() {
        let r = CMat::from_fn(n, n, |_, _| random_c64(&mut rng) * noise);
        *m += r;
    }
    FellBundle::new(b.name(), b.semigroup().clone(), n, bases)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semigroup::InverseSemigroup;

    #[test]
    fn trivial_bundle_of_one_point() {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(1).unwrap();
        let b = trivial_bundle("I1", &s).unwrap();
        // two idempotents, two characters
        assert_eq!(b.carrier_dim(), 2);
        assert_eq!(b.fiber(s.unit()).dim(), 2);
        assert!(validate_bundle(&b, DEFAULT_TOL).passed());
    }

    #[test]
    fn group_swap_has_two_dimensional_fibers() {
        let s = InverseSemigroup::cyclic_group(2).unwrap();
        let g = FiniteGroupoid::from_group(&s).unwrap();
        let fam = vec![vec![0], vec![1]];
        let fibers = GroupoidFibers::full_blocks(&g, &[2]);
        let (b, _) = from_groupoid_bundle(&g, &fam, &fibers).unwrap();
        assert_eq!(b.fiber(1).dim(), 4);
        assert!(validate_bundle(&b, DEFAULT_TOL).passed());
    }

    #[test]
    fn tensor_multiplies_fiber_dims() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let b = from_isg_action("I2", &s, &Action::new(2, maps)).unwrap();
        let t = tensor_with(&b, &[2]).unwrap();
        for x in 0..s.size() {
            assert_eq!(t.fiber(x).dim(), 4 * b.fiber(x).dim());
        }
        assert!(validate_bundle(&t, DEFAULT_TOL).passed());
        assert!(check_commutation(&t, 1e-8).passed());
    }

    #[test]
    fn ideal_units_match_definition() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let b = from_isg_action("I2", &s, &Action::new(2, maps)).unwrap();
        for x in 0..s.size() {
            for y in 0..s.size() {
                let id = b.ideal_unit(x, y);
                assert!(id.membership_defect < 1e-9);
                let cached = b.unit_st(x, y);
                assert!(fro(&(cached - &id.unit_projection)) < 1e-9, "{x} {y}");
            }
        }
        assert!(check_commutation(&b, 1e-9).passed());
    }

    #[test]
    fn perturbed_fiber_is_rejected() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let b = from_isg_action("I2", &s, &Action::new(2, maps)).unwrap();
        let e = (0..s.size()).find(|&x| x != s.unit() && b.fiber(x).dim() == 1 && !s.is_idempotent(x)).unwrap();
        let p = perturbed(&b, e, 0.1, 3).unwrap();
        let v = validate_bundle(&p, DEFAULT_TOL);
        assert!(matches!(
            v.error,
            Some(FellError::ProductEscapesFiber { .. }) | Some(FellError::AdjointMismatch { .. }) | Some(FellError::InclusionFails { .. })
        ));
    }

    #[test]
    fn conjugation_and_remix_preserve_validity() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let b = from_isg_action("I2", &s, &Action::new(2, maps)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = crate::linalg::random_unitary(2, &mut rng);
        let c = b.conjugated(&u).unwrap().remixed(5).unwrap();
        assert!(validate_bundle(&c, DEFAULT_TOL).passed());
        assert!(check_commutation(&c, 1e-8).passed());
    }

    #[test]
    fn germ_bundle_over_i2() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let (b, ctx) = germ_bundle("I2-germ", &s, &Action::new(2, maps), &[1, 2]).unwrap();
        assert_eq!(ctx.point_proj.len(), 2);
        assert_eq!(b.carrier_dim(), 3);
        assert!(validate_bundle(&b, DEFAULT_TOL).passed());
    }
}
