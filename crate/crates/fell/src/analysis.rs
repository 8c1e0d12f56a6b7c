//! The two routes to the cross-sectional algebras of a bundle and the
//! comparison between them: envelope of Q_c on one side, the regular
//! representation on the other, joined by the canonical map.

use serde::Serialize;

use crate::bundle::{tensor_with, FellBundle};
use crate::concrete::{block_multiset, ConcreteBlock};
use crate::cross_sectional::{
    crossed_product, cyclic_rank, expectation_p, lambda_report, lift_defect, red_generators,
    reduced_algebra, universal_quotient, CcElement, CrossedProduct, ReducedAlgebra, RegularRep, UniversalQuotient,
};
use crate::envelope::{envelope, Envelope};
use crate::error::Result;
use crate::linalg::{fro, kron, rank_of, SpanBasis, C64};

/// Which side of the comparison to compute.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Full,
    Reduced,
    Both,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AlgebraSummary {
    pub name: String,
    pub cc_dim: usize,
    pub null_dim: Option<usize>,
    pub calg_dim: Option<usize>,
    pub dual_rank: Option<usize>,
    pub gram_ratio: Option<f64>,
    pub gram_min_eigenvalue: Option<f64>,
    pub ideal_defect: Option<f64>,
    pub unit_expectation_defect: Option<f64>,
    pub red_dim: Option<usize>,
    pub red_blocks: Option<Vec<usize>>,
    pub hilbert_dim: Option<usize>,
    pub lambda_defect: Option<f64>,
    pub qc_dim: Option<usize>,
    pub qc_radical_dim: Option<usize>,
    pub env_dim: Option<usize>,
    pub env_blocks: Option<Vec<usize>>,
    pub env_hom_defect: Option<f64>,
    pub canonical_map_invertible: Option<bool>,
    pub weak_containment: Option<bool>,
}

/// Everything computed for one bundle.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub summary: AlgebraSummary,
    pub crossed: Option<CrossedProduct>,
    pub reduced: Option<ReducedAlgebra>,
    pub red_blocks: Option<Vec<ConcreteBlock>>,
    pub quotient: Option<UniversalQuotient>,
    pub envelope: Option<Envelope>,
}

/// max ‖P(a δ_1) − a‖ over the unit fiber basis.
pub fn unit_expectation_defect(b: &FellBundle) -> f64 {
    let u = b.semigroup().unit();
    b.fiber(u)
        .basis()
        .iter()
        .map(|a| fro(&(expectation_p(b, &CcElement::single(u, a.clone())) - a)))
        .fold(0.0, f64::max)
}

/// Rank of the stacked columns (b δ_s) ⊗ e_k inside ℓ²(𝒜) ⊗ C^N: the second
/// route to dim C_alg.
pub fn dual_rank(b: &FellBundle, red: &ReducedAlgebra) -> usize {
    let cols: Vec<Vec<C64>> = b.labeled_basis().iter().map(|&(s, i)| red.rep.stacked_column(b, s, i)).collect();
    rank_of(&cols, 1e-9)
}

/// Whether Q_c → C*_red factors through the envelope as an isomorphism:
/// the stacked images [env(x); Λ(x)] have the rank of either side, and
/// both sides have full rank.
pub fn canonical_map_invertible(b: &FellBundle, q: &UniversalQuotient, env: &Envelope, red: &ReducedAlgebra) -> bool {
    let dq = q.dim();
    let red_cols: Vec<Vec<C64>> = q
        .basis_labels
        .iter()
        .map(|&(m, i)| red.algebra.coords(&red.rep.lambda_basis(b, m, i)))
        .collect();
    let env_cols: Vec<Vec<C64>> = (0..dq).map(|j| env.map_matrix().column(j).iter().copied().collect()).collect();
    let scale = |cols: &[Vec<C64>]| cols.iter().map(|c| crate::linalg::vnorm(c)).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let (se, sr) = (scale(&env_cols), scale(&red_cols));
    let mut stack = SpanBasis::new(env.dim() + red.algebra.dim(), 1e-9);
    for j in 0..dq {
        let v: Vec<C64> = env_cols[j].iter().map(|z| z / se).chain(red_cols[j].iter().map(|z| z / sr)).collect();
        stack.push_scaled(&v, 1.0);
    }
    let re = rank_of(&env_cols, 1e-9);
    let rr = rank_of(&red_cols, 1e-9);
    stack.rank() == re && re == rr && re == env.dim() && rr == red.algebra.dim()
}

pub fn analyze(b: &FellBundle, which: Which) -> Result<Analysis> {
    let mut s = AlgebraSummary { name: b.name().to_string(), cc_dim: b.total_dim(), ..Default::default() };
    let mut out = Analysis { summary: AlgebraSummary::default(), crossed: None, reduced: None, red_blocks: None, quotient: None, envelope: None };
    if which != Which::Full {
        let cp = crossed_product(b)?;
        s.null_dim = Some(cp.gram.kernel_basis.len());
        s.calg_dim = Some(cp.dim());
        s.gram_ratio = Some(cp.gram.quotient_ratio);
        s.gram_min_eigenvalue = Some(cp.gram.min_eigenvalue);
        s.ideal_defect = Some(cp.ideal_defect);
        s.unit_expectation_defect = Some(unit_expectation_defect(b));
        let red = reduced_algebra(b)?;
        let blocks = red.algebra.decompose(crate::envelope::env_seed())?;
        s.red_dim = Some(red.algebra.dim());
        s.red_blocks = Some(block_multiset(&blocks));
        s.hilbert_dim = Some(red.rep.dim_h());
        if b.tensor_origin().is_none() {
            s.dual_rank = Some(dual_rank(b, &red));
            s.lambda_defect = Some(lambda_report(b, &red.rep, 1e-9, 3).max_defect());
        }
        out.crossed = Some(cp);
        out.reduced = Some(red);
        out.red_blocks = Some(blocks);
    }
    if which != Which::Reduced {
        let q = universal_quotient(b)?;
        let env = envelope(&q.algebra)?;
        s.qc_dim = Some(q.dim());
        s.qc_radical_dim = Some(env.radical_dim);
        s.env_dim = Some(env.dim());
        s.env_blocks = Some(env.block_multiset());
        s.env_hom_defect = Some(env.check_homomorphism(&q.algebra, 1e-9).max_defect());
        out.quotient = Some(q);
        out.envelope = Some(env);
    }
    if let (Some(q), Some(env), Some(red)) = (&out.quotient, &out.envelope, &out.reduced) {
        let inv = canonical_map_invertible(b, q, env, red);
        s.canonical_map_invertible = Some(inv);
        let dims_equal = s.env_dim == s.calg_dim && s.calg_dim == s.red_dim;
        s.weak_containment = Some(inv && dims_equal && s.env_blocks == s.red_blocks);
    }
    out.summary = s;
    Ok(out)
}

/// Comparison of a bundle with its tensor product by M_k.
#[derive(Clone, Debug, Serialize)]
pub struct TensorComparison {
    pub k: usize,
    pub red_dim: usize,
    pub red_dim_tensor: usize,
    pub env_blocks: Vec<usize>,
    pub env_blocks_tensor: Vec<usize>,
    pub expectation_defect: f64,
    pub lift_defect: f64,
}

impl TensorComparison {
    pub fn passed(&self) -> bool {
        let scaled: Vec<usize> = self.env_blocks.iter().map(|n| n * self.k).collect();
        self.red_dim_tensor == self.k * self.k * self.red_dim
            && scaled == self.env_blocks_tensor
            && self.expectation_defect <= 1e-10
            && self.lift_defect <= 1e-9
    }
}

/// max ‖P(a⊗E δ_s) − P(a δ_s) ⊗ E‖ over fiber basis elements a and matrix units E.
pub fn tensor_expectation_defect(b: &FellBundle, t: &FellBundle, k: usize) -> f64 {
    let units = crate::bundle::block_matrix_units(&[k]);
    let mut worst: f64 = 0.0;
    for s in 0..b.semigroup().size() {
        for a in b.fiber(s).basis() {
            let pa = expectation_p(b, &CcElement::single(s, a.clone()));
            for e in &units {
                let lhs = expectation_p(t, &CcElement::single(s, kron(a, e)));
                worst = worst.max(fro(&(lhs - kron(&pa, e))));
            }
        }
    }
    worst
}

pub fn compare_tensor(b: &FellBundle, base: &Analysis, k: usize) -> Result<TensorComparison> {
    let t = tensor_with(b, &[k])?;
    // the concrete algebra of t has k² times as many generators on a k times
    // larger space, so its dimension is taken from the cyclic columns
    let rep = RegularRep::new(&t)?;
    let red_dim_tensor = cyclic_rank(&t, &rep, &red_generators(&t));
    let q = universal_quotient(&t)?;
    let env = envelope(&q.algebra)?;
    let base_red = match &base.summary.red_dim {
        Some(d) => *d,
        None => reduced_algebra(b)?.algebra.dim(),
    };
    let base_env = match &base.summary.env_blocks {
        Some(v) => v.clone(),
        None => envelope(&universal_quotient(b)?.algebra)?.block_multiset(),
    };
    Ok(TensorComparison {
        k,
        red_dim: base_red,
        red_dim_tensor,
        env_blocks: base_env,
        env_blocks_tensor: env.block_multiset(),
        expectation_defect: tensor_expectation_defect(b, &t, k),
        lift_defect: lift_defect(&t, &rep),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::trivial_bundle;
    use crate::semigroup::InverseSemigroup;

    #[test]
    fn i2_weak_containment() {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let b = trivial_bundle("I2", &s).unwrap();
        let a = analyze(&b, Which::Both).unwrap();
        let sm = &a.summary;
        assert_eq!(sm.env_dim, Some(7));
        assert_eq!(sm.red_dim, Some(7));
        assert_eq!(sm.calg_dim, Some(7));
        assert_eq!(sm.dual_rank, Some(7));
        assert_eq!(sm.env_blocks, Some(vec![1, 1, 1, 2]));
        assert_eq!(sm.weak_containment, Some(true));
    }

    #[test]
    fn tensor_comparison_of_group() {
        let s = InverseSemigroup::cyclic_group(2).unwrap();
        let b = trivial_bundle("Z2", &s).unwrap();
        let a = analyze(&b, Which::Both).unwrap();
        let c = compare_tensor(&b, &a, 2).unwrap();
        assert!(c.passed(), "{c:?}");
    }
}
