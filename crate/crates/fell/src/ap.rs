//! The approximation property: checking witnesses, synthesizing one from the
//! amenability of a finite germ groupoid, moving sections between the
//! groupoid and the semigroup, and the completely positive map Ψ_ξ.

use serde::Serialize;

use crate::absorption::{Absorption, Representation};
use crate::action::{amenability_witness, germ_groupoid, Action};
use crate::bundle::{FellBundle, GermContext};
use crate::concrete::MatrixAlgebra;
use crate::error::{FellError, Result};
use crate::linalg::{adj, eye, fro, kron, mm, mm3, opnorm, CMat, C64, ONE, ZERO};
use crate::par;
use crate::report::{CheckReport, Worst};

/// A finite net of sections ξ: s ↦ ξ(s) ∈ F_{ss*}, each finitely supported.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Witness {
    pub sections: Vec<Vec<(usize, CMat)>>,
}

impl Witness {
    pub fn single(section: Vec<(usize, CMat)>) -> Self {
        Witness { sections: vec![section] }
    }

    /// ζ = ξ ⊗ 1 for the bundle tensored with M_k.
    pub fn tensor_identity(&self, k: usize) -> Witness {
        let one = eye(k);
        Witness {
            sections: self.sections.iter().map(|sec| sec.iter().map(|(s, m)| (*s, kron(m, &one))).collect()).collect(),
        }
    }
}

/// Bound and defect of a witness.
#[derive(Clone, Debug, Serialize)]
pub struct ApReport {
    pub bound: f64,
    pub defect: f64,
    /// index of the section realizing the defect
    pub best_section: usize,
    pub tol: f64,
    pub passed: bool,
}

/// Reject sections whose values leave F_{ss*} or whose labels are out of range.
pub fn check_sections(b: &FellBundle, w: &Witness) -> Result<()> {
    let sg = b.semigroup();
    let n = b.carrier_dim();
    for sec in &w.sections {
        for (s, m) in sec {
            if *s >= sg.size() {
                return Err(FellError::NotASection(*s));
            }
            if m.nrows() != n || m.ncols() != n {
                return Err(FellError::Shape(format!("section value at {s} is not {n}×{n}")));
            }
            let e = sg.mul(*s, sg.star(*s));
            if b.fiber(e).distance(m) > 1e-9 * (1.0 + fro(m)) {
                return Err(FellError::NotASection(*s));
            }
        }
    }
    Ok(())
}

/// Merge repeated labels of a section into one value per element.
fn dense(b: &FellBundle, sec: &[(usize, CMat)]) -> Vec<(usize, CMat)> {
    let mut acc: Vec<Option<CMat>> = vec![None; b.semigroup().size()];
    for (s, m) in sec {
        match &mut acc[*s] {
            Some(x) => *x += m,
            slot => *slot = Some(m.clone()),
        }
    }
    acc.into_iter().enumerate().filter_map(|(s, m)| m.map(|m| (s, m))).collect()
}

/// ‖Σ_{p,t} ξ(p)*ξ(t)1_{pt*}‖ for one section.
pub fn section_bound(b: &FellBundle, sec: &[(usize, CMat)]) -> f64 {
    let sec = dense(b, sec);
    let sg = b.semigroup();
    let n = b.carrier_dim();
    let mut total = CMat::zeros(n, n);
    for (p, xp) in &sec {
        let xpa = adj(xp);
        for (t, xt) in &sec {
            total += mm3(&xpa, xt, b.unit_of(sg.mul(*p, sg.star(*t))));
        }
    }
    opnorm(&total)
}

/// Σ_{p,t} 1_{p(st)*} ξ(p)* a ξ(t) for every s at once: with
/// L_w = Σ_p 1_{pw*} ξ(p)* the sum is Σ_t L_{st} a ξ(t).
pub struct ApSums {
    sec: Vec<(usize, CMat)>,
    left: Vec<CMat>,
}

impl ApSums {
    pub fn new(b: &FellBundle, sec: &[(usize, CMat)]) -> Self {
        let sec = dense(b, sec);
        let sg = b.semigroup();
        let n = b.carrier_dim();
        let left = par::map_range(sg.size(), |w| {
            let mut l = CMat::zeros(n, n);
            for (p, xp) in &sec {
                l += mm(b.unit_of(sg.mul(*p, sg.star(w))), &adj(xp));
            }
            l
        });
        ApSums { sec, left }
    }

    pub fn apply(&self, b: &FellBundle, s: usize, a: &CMat) -> CMat {
        let sg = b.semigroup();
        let n = b.carrier_dim();
        let mut out = CMat::zeros(n, n);
        for (t, xt) in &self.sec {
            out += mm3(&self.left[sg.mul(s, *t)], a, xt);
        }
        out
    }
}

/// max over s and basis a ∈ F_s of ‖Σ 1_{p(st)*}ξ(p)*aξ(t) − a‖ / (1+‖a‖).
pub fn section_defect(b: &FellBundle, sec: &[(usize, CMat)]) -> f64 {
    let sums = ApSums::new(b, sec);
    let labels = b.labeled_basis();
    par::map_slice(&labels, |&(s, i)| {
        let a = &b.fiber(s).basis()[i];
        opnorm(&(sums.apply(b, s, a) - a)) / (1.0 + opnorm(a))
    })
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn ap_check(b: &FellBundle, w: &Witness, tol: f64) -> Result<ApReport> {
    check_sections(b, w)?;
    if w.sections.is_empty() {
        return Err(FellError::Shape("empty witness".into()));
    }
    let mut bound: f64 = 0.0;
    let mut defect = f64::INFINITY;
    let mut best_section = 0;
    for (i, sec) in w.sections.iter().enumerate() {
        bound = bound.max(section_bound(b, sec));
        let d = section_defect(b, sec);
        if d < defect {
            defect = d;
            best_section = i;
        }
    }
    Ok(ApReport { bound, defect, best_section, tol, passed: defect <= tol })
}

/// A section of the bundle over the germ groupoid: η(g) lives in the unit
/// block at r(g), as a carrier matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupoidSection {
    pub values: Vec<CMat>,
}

impl GroupoidSection {
    /// η(g)·1_{r(g)} for a scalar function on arrows.
    pub fn from_scalars(ctx: &GermContext, eta: &[f64]) -> Self {
        let g = ctx.groupoid();
        let values = (0..g.arrow_count()).map(|a| &ctx.point_proj[g.tgt[a]] * C64::new(eta[a], 0.0)).collect();
        GroupoidSection { values }
    }

    pub fn zero(ctx: &GermContext, n: usize) -> Self {
        GroupoidSection { values: vec![CMat::zeros(n, n); ctx.groupoid().arrow_count()] }
    }

    pub fn max_distance(&self, other: &GroupoidSection) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, c)| opnorm(&(a - c))).fold(0.0, f64::max)
    }
}

/// Groupoid-level bound sup_x ‖Σ_{h∈G^x} η(h)*η(h)‖ and defect
/// max over g and a ∈ A_g of ‖Σ_{h∈G^{r(g)}} η(h)* a η(g⁻¹h) − a‖ / (1+‖a‖).
pub fn groupoid_ap_defects(ctx: &GermContext, eta: &GroupoidSection) -> (f64, f64) {
    let g = ctx.groupoid();
    let n = ctx.point_proj.first().map(|p| p.nrows()).unwrap_or(0);
    let mut bound: f64 = 0.0;
    for x in 0..g.unit_count {
        let mut acc = CMat::zeros(n, n);
        for h in g.range_fiber(x) {
            acc += mm(&adj(&eta.values[h]), &eta.values[h]);
        }
        bound = bound.max(opnorm(&acc));
    }
    let mut defect: f64 = 0.0;
    for a in 0..g.arrow_count() {
        let ai = g.inverse[a];
        for m in &ctx.arrow_spaces[a] {
            let mut acc = CMat::zeros(n, n);
            for h in g.range_fiber(g.tgt[a]) {
                let k = g.compose(ai, h).expect("h and g share a range");
                acc += mm3(&adj(&eta.values[h]), m, &eta.values[k]);
            }
            defect = defect.max(opnorm(&(acc - m)) / (1.0 + opnorm(m)));
        }
    }
    (bound, defect)
}

fn check_context(b: &FellBundle, ctx: &GermContext) -> Result<()> {
    let sg = b.semigroup();
    if ctx.action.maps.len() != sg.size() {
        return Err(FellError::NotGermBundle("action does not match the semigroup".into()));
    }
    if ctx.point_proj.iter().any(|p| p.nrows() != b.carrier_dim()) {
        return Err(FellError::NotGermBundle("point projections do not match the carrier".into()));
    }
    Ok(())
}

/// Which direction witness_transfer goes.
#[derive(Clone, Debug)]
pub enum Transfer {
    ToSemigroup(GroupoidSection),
    ToGroupoid(Vec<(usize, CMat)>),
}

#[derive(Clone, Debug)]
pub enum Transferred {
    Semigroup(Vec<(usize, CMat)>),
    Groupoid(GroupoidSection),
}

/// For every arrow g, the pair (s, x) with [s, x] = g and |dom s| least
/// (ties to the smaller s): the smallest bisection through g.
pub fn minimal_representatives(ctx: &GermContext) -> Vec<(usize, usize)> {
    let g = ctx.groupoid();
    let mut best: Vec<Option<(usize, usize, usize)>> = vec![None; g.arrow_count()];
    for (s, map) in ctx.action.maps.iter().enumerate() {
        let rank = map.rank();
        for x in map.domain() {
            let Some(a) = ctx.germs.germ(s, x) else { continue };
            if best[a].map_or(true, |(r, _, _)| rank < r) {
                best[a] = Some((rank, s, x));
            }
        }
    }
    best.into_iter().map(|b| b.map(|(_, s, x)| (s, x)).expect("every arrow is a germ")).collect()
}

/// Groupoid → semigroup puts η(g) at the smallest bisection through g:
/// ξ(s) = Σ η(g) over the arrows g whose minimal representative is (s, x).
/// Semigroup → groupoid reads every germ: η(g) = Σ_{[s,x] = g} ξ(s)·1_{r(g)}.
/// Since s is injective, ξ(s)·1_{s(x)} only sees the germ at x, so the
/// round trip from the groupoid is exact.
pub fn witness_transfer(b: &FellBundle, ctx: &GermContext, data: Transfer) -> Result<Transferred> {
    check_context(b, ctx)?;
    let g = ctx.groupoid();
    let n = b.carrier_dim();
    match data {
        Transfer::ToSemigroup(eta) => {
            if eta.values.len() != g.arrow_count() {
                return Err(FellError::Shape(format!("{} arrows, {} values", g.arrow_count(), eta.values.len())));
            }
            let mut acc: Vec<Option<CMat>> = vec![None; b.semigroup().size()];
            for (a, &(s, _)) in minimal_representatives(ctx).iter().enumerate() {
                if eta.values[a].iter().all(|z| *z == ZERO) {
                    continue;
                }
                let v = acc[s].get_or_insert_with(|| CMat::zeros(n, n));
                *v += &eta.values[a];
            }
            Ok(Transferred::Semigroup(acc.into_iter().enumerate().filter_map(|(s, m)| m.map(|m| (s, m))).collect()))
        }
        Transfer::ToGroupoid(sec) => {
            check_sections(b, &Witness::single(sec.clone()))?;
            let mut out = GroupoidSection::zero(ctx, n);
            for (s, m) in &sec {
                for x in ctx.action.maps[*s].domain() {
                    let a = ctx.germs.germ(*s, x).expect("x lies in the domain");
                    out.values[a] += mm(m, &ctx.point_proj[g.tgt[a]]);
                }
            }
            Ok(Transferred::Groupoid(out))
        }
    }
}

/// ξ(s) = Σ η(g)·1_{r(g)} over germs g whose minimal representative is
/// (s, x), with η the amenability witness of the germ groupoid.
pub fn ap_synthesize(b: &FellBundle, ctx: &GermContext) -> Result<Witness> {
    let eta = GroupoidSection::from_scalars(ctx, &amenability_witness(ctx.groupoid()));
    match witness_transfer(b, ctx, Transfer::ToSemigroup(eta))? {
        Transferred::Semigroup(sec) => Ok(Witness::single(sec)),
        Transferred::Groupoid(_) => unreachable!(),
    }
}

/// Recover the germ context of a bundle from an action of its semigroup:
/// the minimal central projections of A₁ are matched to points so that
/// x ∈ dom s iff 1_x ≤ 1_{s*s}, and F_s 1_x = 1_{s(x)} F_s 1_x.
pub fn infer_context(b: &FellBundle, action: &Action) -> Result<GermContext> {
    let sg = b.semigroup();
    let germs = germ_groupoid(sg, action).map_err(|e| FellError::NotGermBundle(e.to_string()))?;
    let m = action.space_size;
    let unit = sg.unit();
    let a1 = MatrixAlgebra::spanned_by(b.carrier_dim(), b.fiber(unit).basis().iter(), 1e-9);
    let blocks = a1.decompose(crate::envelope::env_seed())?;
    if blocks.len() != m {
        return Err(FellError::NotGermBundle(format!("unit fiber has {} blocks for {m} points", blocks.len())));
    }
    let proj: Vec<CMat> = blocks.iter().map(|c| c.central.clone()).collect();
    let close = |x: &CMat, y: &CMat| fro(&(x - y)) <= 1e-8 * (1.0 + fro(y));
    // compat[x][q]: block q may sit at point x as far as domains go
    let compat: Vec<Vec<bool>> = (0..m)
        .map(|x| {
            (0..proj.len())
                .map(|q| {
                    (0..sg.size()).all(|s| {
                        let e = b.unit_of(sg.mul(sg.star(s), s));
                        close(&mm(e, &proj[q]), &proj[q]) == action.maps[s].get(x).is_some()
                    })
                })
                .collect()
        })
        .collect();
    let moves = |assign: &[Option<usize>], x: usize, q: usize| -> bool {
        (0..sg.size()).all(|s| {
            let Some(y) = action.maps[s].get(x) else { return true };
            let Some(qy) = assign[y] else { return true };
            b.fiber(s).basis().iter().all(|f| {
                let fq = mm(f, &proj[q]);
                close(&mm(&proj[qy], &fq), &fq)
            })
        })
    };
    let mut assign: Vec<Option<usize>> = vec![None; m];
    let mut used = vec![false; proj.len()];
    fn search(
        x: usize,
        assign: &mut Vec<Option<usize>>,
        used: &mut Vec<bool>,
        compat: &[Vec<bool>],
        ok: &dyn Fn(&[Option<usize>], usize, usize) -> bool,
    ) -> bool {
        if x == assign.len() {
            return true;
        }
        for q in 0..used.len() {
            if used[q] || !compat[x][q] {
                continue;
            }
            assign[x] = Some(q);
            used[q] = true;
            if ok(assign, x, q) && search(x + 1, assign, used, compat, ok) {
                return true;
            }
            assign[x] = None;
            used[q] = false;
        }
        false
    }
    // consistency is checked in both directions once both ends are placed
    let ok = |assign: &[Option<usize>], x: usize, q: usize| -> bool {
        moves(assign, x, q)
            && (0..x).all(|y| match assign[y] {
                Some(qy) => moves(assign, y, qy),
                None => true,
            })
    };
    if !search(0, &mut assign, &mut used, &compat, &ok) {
        return Err(FellError::NotGermBundle("no matching of unit blocks to points".into()));
    }
    let point_proj: Vec<CMat> = assign.iter().map(|q| proj[q.unwrap()].clone()).collect();
    let g = &germs.groupoid;
    let mut arrow_spaces = Vec::with_capacity(g.arrow_count());
    for a in 0..g.arrow_count() {
        let (s, x) = germs.rep[a];
        let (pr, ps) = (&point_proj[g.tgt[a]], &point_proj[x]);
        let mut span = crate::linalg::SpanBasis::new(b.carrier_dim().pow(2), 1e-9);
        let mut mats = Vec::new();
        for f in b.fiber(s).basis() {
            let piece = mm3(pr, f, ps);
            if span.push(piece.as_slice()) {
                mats.push(piece);
            }
        }
        arrow_spaces.push(mats);
    }
    Ok(GermContext { action: action.clone(), germs, point_proj, arrow_spaces })
}

/// The Ψ_ξ data for one section and one representation.
#[derive(Clone, Debug, Serialize)]
pub struct PsiReport {
    pub report: CheckReport,
    pub t_norm_sq: f64,
    pub bound: f64,
}

impl PsiReport {
    pub fn passed(&self) -> bool {
        self.report.passed() && self.t_norm_sq <= self.bound + self.report.tol
    }
}

/// T_ξ: v ↦ Σ_t π₁(ξ(t)) v δ_t as a matrix H → ℓ²_π.
pub fn t_xi(b: &FellBundle, rep: &Representation, abs: &Absorption, sec: &[(usize, CMat)]) -> CMat {
    let sg = b.semigroup();
    let d = rep.dim_h;
    let sec = dense(b, sec);
    let mut t = CMat::zeros(abs.pi_dim(), d);
    for (s, x) in &sec {
        let px = rep.image(b, sg.mul(*s, sg.star(*s)), x);
        for k in 0..d {
            let v: Vec<C64> = px.column(k).iter().copied().collect();
            let col = abs.pi_vector(*s, &v);
            for (o, z) in t.column_mut(k).iter_mut().zip(col) {
                *o += z;
            }
        }
    }
    t
}

/// Ψ_ξ(x) = T_ξ* x T_ξ. Checks ‖T_ξ‖² against the bound, the identity
/// Ψ_ξ(π^Λ(aδ_s)) = π_s(Σ 1_{p(st)*}ξ(p)*aξ(t)), and the distance of
/// Φ = Ψ_ξ∘π^Λ from π on every basis element.
pub fn psi_map(b: &FellBundle, rep: &Representation, abs: &Absorption, sec: &[(usize, CMat)], tol: f64) -> PsiReport {
    let t = t_xi(b, rep, abs, sec);
    let ta = adj(&t);
    let nt = opnorm(&t);
    let bound = section_bound(b, sec);
    let sums = ApSums::new(b, sec);
    let labels = b.labeled_basis();
    let rows = par::map_slice(&labels, |&(s, i)| {
        let a = &b.fiber(s).basis()[i];
        let mut cf = vec![ZERO; b.fiber(s).dim()];
        cf[i] = ONE;
        let psi = mm3(&ta, &abs.pi_lambda(b, rep, s, &cf), &t);
        let want = rep.image(b, s, &sums.apply(b, s, a));
        let scale = 1.0 + opnorm(a);
        let (mut w1, mut w2) = (Worst::default(), Worst::default());
        w1.see(opnorm(&(&psi - want)) / scale, (s, i));
        w2.see(opnorm(&(psi - &rep.maps[s][i])) / scale, (s, i));
        (w1, w2)
    });
    let (w1, w2) = rows.into_iter().fold((Worst::default(), Worst::default()), |(a, c), (x, y)| (a.merge(x), c.merge(y)));
    let mut report = CheckReport::new(tol);
    let mut wn = Worst::default();
    wn.see((nt * nt - bound).max(0.0), (0, 0));
    report.push("‖T_ξ‖² ≤ bound", wn);
    report.push("Ψ(π^Λ(aδ_s)) = π_s(Σ ξ*aξ)", w1);
    report.push("Φ(aδ_s) = aδ_s", w2);
    PsiReport { report, t_norm_sq: nt * nt, bound }
}

/// A group bundle's uniform witness ξ ≡ |G|^{-1/2}·1.
pub fn uniform_group_witness(b: &FellBundle) -> Witness {
    let n = b.semigroup().size();
    let c = C64::new(1.0 / (n as f64).sqrt(), 0.0);
    let one = b.unit_of(b.semigroup().unit()).clone();
    Witness::single((0..n).map(|s| (s, &one * c)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::absorption::build_pi_lambda;
    use crate::corpus;

    #[test]
    fn uniform_group_witness_is_exact() {
        let e = corpus::trivial_group(4).unwrap();
        let r = ap_check(&e.bundle, &uniform_group_witness(&e.bundle), 1e-9).unwrap();
        assert!((r.bound - 1.0).abs() < 1e-12);
        assert!(r.defect < 1e-12);
    }

    #[test]
    fn delta_at_unit_is_not_a_witness() {
        let e = corpus::trivial_group(3).unwrap();
        let b = &e.bundle;
        let w = Witness::single(vec![(b.semigroup().unit(), b.unit_of(b.semigroup().unit()).clone())]);
        let r = ap_check(b, &w, 1e-9).unwrap();
        assert!(r.defect > 0.1);
    }

    #[test]
    fn synthesized_group_witness_is_uniform() {
        let e = corpus::trivial_group(3).unwrap();
        let w = ap_synthesize(&e.bundle, &e.context).unwrap();
        assert_eq!(w.sections[0].len(), 3);
        for (_, m) in &w.sections[0] {
            assert!((m[(0, 0)].re - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_groupoid_witness_values() {
        let e = corpus::pair_groupoid(3).unwrap();
        let w = ap_synthesize(&e.bundle, &e.context).unwrap();
        for (s, m) in &w.sections[0] {
            // every arrow of the pair groupoid has a rank-one bisection
            assert_eq!(e.context.action.maps[*s].rank(), 1);
            assert!((opnorm(m) - 1.0 / 3f64.sqrt()).abs() < 1e-12);
        }
        let r = ap_check(&e.bundle, &w, 1e-8).unwrap();
        assert!(r.passed && r.bound <= 1.0 + 1e-9, "{r:?}");
    }

    #[test]
    fn synthesized_witness_passes_on_i2_and_chain() {
        for e in [corpus::symmetric_inverse_monoid(2).unwrap(), corpus::semilattice_chain(3).unwrap(), corpus::group_zero_line(2, 2).unwrap()] {
            let w = ap_synthesize(&e.bundle, &e.context).unwrap();
            let r = ap_check(&e.bundle, &w, 1e-8).unwrap();
            assert!(r.passed && r.bound <= 1.0 + 1e-9, "{} {r:?}", e.name());
        }
    }

    #[test]
    fn bad_section_is_rejected() {
        let e = corpus::trivial_group(2).unwrap();
        let w = Witness::single(vec![(7, CMat::zeros(1, 1))]);
        assert_eq!(ap_check(&e.bundle, &w, 1e-9).unwrap_err(), FellError::NotASection(7));
    }

    #[test]
    fn transfer_round_trip() {
        let e = corpus::symmetric_inverse_monoid(2).unwrap();
        let (b, ctx) = (&e.bundle, &e.context);
        let eta = GroupoidSection::from_scalars(ctx, &amenability_witness(ctx.groupoid()));
        let Transferred::Semigroup(xi) = witness_transfer(b, ctx, Transfer::ToSemigroup(eta.clone())).unwrap() else { panic!() };
        let Transferred::Groupoid(back) = witness_transfer(b, ctx, Transfer::ToGroupoid(xi.clone())).unwrap() else { panic!() };
        assert!(eta.max_distance(&back) < 1e-12);
        let (gb, gd) = groupoid_ap_defects(ctx, &back);
        let r = ap_check(b, &Witness::single(xi), 1e-8).unwrap();
        assert!((gb - r.bound).abs() < 1e-9 && (gd - r.defect).abs() < 1e-9);
    }

    #[test]
    fn zero_section_transfers_to_zero() {
        let e = corpus::pair_groupoid(2).unwrap();
        let z = GroupoidSection::zero(&e.context, e.bundle.carrier_dim());
        let Transferred::Semigroup(xi) = witness_transfer(&e.bundle, &e.context, Transfer::ToSemigroup(z)).unwrap() else { panic!() };
        assert!(xi.is_empty());
    }

    #[test]
    fn inferred_context_matches() {
        let e = corpus::random_bundle(3).unwrap();
        let ctx = infer_context(&e.bundle, &e.context.action).unwrap();
        for (p, q) in ctx.point_proj.iter().zip(&e.context.point_proj) {
            assert!(fro(&(p - q)) < 1e-8);
        }
        let w = ap_synthesize(&e.bundle, &ctx).unwrap();
        assert!(ap_check(&e.bundle, &w, 1e-8).unwrap().passed);
    }

    #[test]
    fn psi_of_exact_witness_is_identity() {
        let e = corpus::symmetric_inverse_monoid(2).unwrap();
        let b = &e.bundle;
        let rep = Representation::carrier(b);
        let abs = build_pi_lambda(b, &rep).unwrap();
        let w = ap_synthesize(b, &e.context).unwrap();
        let p = psi_map(b, &rep, &abs, &w.sections[0], 1e-8);
        assert!(p.passed(), "{p:?}");
    }
}
