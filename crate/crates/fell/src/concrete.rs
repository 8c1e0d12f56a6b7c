//! *-algebras of matrices acting on a fixed space, and their Wedderburn
//! decomposition from the spectrum of a random self-adjoint element.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{FellError, Result};
use crate::linalg::{adj, fro, herm_eig, mm, mm3, random_c64, support_projection, unflatten, CMat, SpanBasis, C64};

/// A concrete *-algebra: the span of some matrices on C^dim_h.
#[derive(Clone, Debug)]
pub struct MatrixAlgebra {
    dim_h: usize,
    span: SpanBasis,
}

/// One simple summand: M_size repeated `multiplicity` times on H.
#[derive(Clone, Debug, Serialize)]
pub struct ConcreteBlock {
    pub size: usize,
    pub multiplicity: usize,
    #[serde(skip)]
    pub central: CMat,
}

impl MatrixAlgebra {
    /// The span of `mats`, which is assumed (and can be checked) to be a *-algebra.
    pub fn spanned_by<'a, I>(dim_h: usize, mats: I, rel_tol: f64) -> Self
    where
        I: IntoIterator<Item = &'a CMat>,
    {
        let mats: Vec<&CMat> = mats.into_iter().collect();
        let scale = mats.iter().map(|m| fro(m)).fold(0.0, f64::max);
        let mut span = SpanBasis::new(dim_h * dim_h, rel_tol);
        for m in mats {
            span.push_scaled(m.as_slice(), scale);
        }
        MatrixAlgebra { dim_h, span }
    }

    /// The *-algebra generated by `gens`, by span closure.
    pub fn generated_by(dim_h: usize, gens: &[CMat], rel_tol: f64) -> Self {
        let scale = gens.iter().map(fro).fold(0.0, f64::max);
        let mut span = SpanBasis::new(dim_h * dim_h, rel_tol);
        let mut words: Vec<CMat> = Vec::new();
        for g in gens {
            for m in [g.clone(), adj(g)] {
                if span.push_scaled(m.as_slice(), scale) {
                    words.push(m);
                }
            }
        }
        let gens: Vec<CMat> = gens.iter().flat_map(|g| [g.clone(), adj(g)]).collect();
        let mut frontier = words.clone();
        while !frontier.is_empty() {
            let mut next = Vec::new();
            for w in &frontier {
                for g in &gens {
                    for m in [mm(w, g), mm(g, w)] {
                        let s = fro(&m).max(scale);
                        if span.push_scaled(m.as_slice(), s) {
                            next.push(m);
                        }
                    }
                }
            }
            frontier = next;
        }
        MatrixAlgebra { dim_h, span }
    }

    pub(crate) fn from_span(dim_h: usize, span: SpanBasis) -> Self {
        MatrixAlgebra { dim_h, span }
    }

    pub fn dim(&self) -> usize {
        self.span.rank()
    }

    pub fn dim_h(&self) -> usize {
        self.dim_h
    }

    pub fn borderline(&self) -> usize {
        self.span.borderline
    }

    /// Orthonormal (Frobenius) basis.
    pub fn basis(&self) -> Vec<CMat> {
        self.span.vectors().iter().map(|v| unflatten(v, self.dim_h)).collect()
    }

    /// Coordinates in the orthonormal basis.
    pub fn coords(&self, m: &CMat) -> Vec<C64> {
        self.span.coords(m.as_slice())
    }

    pub fn contains(&self, m: &CMat, scale: f64) -> bool {
        self.span.contains(m.as_slice(), scale)
    }

    pub fn distance(&self, m: &CMat) -> f64 {
        self.span.residual_norm(m.as_slice())
    }

    pub fn random_element(&self, rng: &mut ChaCha8Rng) -> CMat {
        let mut x = CMat::zeros(self.dim_h, self.dim_h);
        for v in self.span.vectors() {
            let cf = random_c64(rng);
            for (o, z) in x.as_mut_slice().iter_mut().zip(v) {
                *o += cf * z;
            }
        }
        x
    }

    /// Worst relative distance of products and adjoints of random elements from the span.
    pub fn closure_defect(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let x = self.random_element(&mut rng);
            let y = self.random_element(&mut rng);
            let p = mm(&x, &y);
            worst = worst.max(self.distance(&p) / (1.0 + fro(&x) * fro(&y)));
            worst = worst.max(self.distance(&adj(&x)) / (1.0 + fro(&x)));
        }
        worst
    }

    /// Projection onto span A·H.
    pub fn unit_projection(&self) -> CMat {
        let mut x = CMat::zeros(self.dim_h, self.dim_h);
        for b in self.basis() {
            x += mm(&b, &adj(&b));
        }
        support_projection(&x, 1e-12)
    }

    /// Wedderburn blocks with their multiplicities on H and central projections.
    pub fn decompose(&self, seed: u64) -> Result<Vec<ConcreteBlock>> {
        if self.dim() == 0 {
            return Ok(vec![]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc0c0);
        let one = self.unit_projection();
        let (vals1, vecs1) = herm_eig(&one);
        let cols: Vec<usize> = (0..vals1.len()).filter(|&i| vals1[i] > 0.5).collect();
        let mut v = CMat::zeros(self.dim_h, cols.len());
        for (k, &i) in cols.iter().enumerate() {
            v.set_column(k, &vecs1.column(i));
        }
        let va = adj(&v);
        let mut last = String::new();
        for _attempt in 0..6 {
            let x = self.random_element(&mut rng);
            let h = mm3(&va, &(x.clone() + adj(&x)), &v);
            let (vals, vecs) = herm_eig(&h);
            let Some(clusters) = cluster_sorted(&vals, 1e-8, 1e-5) else {
                last = "eigenvalue clusters too close".into();
                continue;
            };
            let projs: Vec<CMat> = clusters
                .iter()
                .map(|cl| {
                    let mut w = CMat::zeros(v.ncols(), cl.len());
                    for (k, &i) in cl.iter().enumerate() {
                        w.set_column(k, &vecs.column(i));
                    }
                    let full = mm(&v, &w);
                    mm(&full, &adj(&full))
                })
                .collect();
            // clusters linked by the algebra belong to the same block
            let k = clusters.len();
            let mut parent: Vec<usize> = (0..k).collect();
            fn find(p: &mut [usize], mut i: usize) -> usize {
                while p[i] != i {
                    p[i] = p[p[i]];
                    i = p[i];
                }
                i
            }
            for _ in 0..2 {
                let y = self.random_element(&mut rng);
                let scale = fro(&y);
                let py: Vec<CMat> = projs.iter().map(|p| mm(p, &y)).collect();
                for i in 0..k {
                    for j in i + 1..k {
                        if fro(&mm(&py[i], &projs[j])) > 1e-7 * scale {
                            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                            parent[a] = b;
                        }
                    }
                }
            }
            let mut comps: Vec<Vec<usize>> = Vec::new();
            let mut root_pos = std::collections::HashMap::new();
            for i in 0..k {
                let r = find(&mut parent, i);
                let pos = *root_pos.entry(r).or_insert_with(|| {
                    comps.push(Vec::new());
                    comps.len() - 1
                });
                comps[pos].push(i);
            }
            let mut blocks = Vec::new();
            let mut ok = true;
            for comp in &comps {
                let m = clusters[comp[0]].len();
                if comp.iter().any(|&i| clusters[i].len() != m) {
                    ok = false;
                    break;
                }
                let mut central = CMat::zeros(self.dim_h, self.dim_h);
                for &i in comp {
                    central += &projs[i];
                }
                blocks.push(ConcreteBlock { size: comp.len(), multiplicity: m, central });
            }
            let total: usize = blocks.iter().map(|b| b.size * b.size).sum();
            if ok && total == self.dim() {
                blocks.sort_by_key(|b| b.size);
                return Ok(blocks);
            }
            last = format!("block dimensions sum to {total}, algebra has {}", self.dim());
        }
        Err(FellError::GenericityFailure(last))
    }
}

/// Cluster ascending real values by gaps: a gap ≤ tight·scale joins, a gap
/// between tight and loose is ambiguous.
fn cluster_sorted(vals: &[f64], tight: f64, loose: f64) -> Option<Vec<Vec<usize>>> {
    let scale = vals.iter().map(|v| v.abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut out: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        match out.last_mut() {
            Some(cl) if (v - vals[*cl.last().unwrap()]).abs() <= tight * scale => cl.push(i),
            Some(cl) if (v - vals[*cl.last().unwrap()]).abs() <= loose * scale => return None,
            _ => out.push(vec![i]),
        }
    }
    Some(out)
}

/// Sorted block sizes.
pub fn block_multiset(blocks: &[ConcreteBlock]) -> Vec<usize> {
    let mut v: Vec<usize> = blocks.iter().map(|b| b.size).collect();
    v.sort_unstable();
    v
}

/// Rank of a family of matrices.
pub fn rank_of_matrices(mats: &[CMat], rel_tol: f64) -> usize {
    let v: Vec<Vec<C64>> = mats.iter().map(|m| m.as_slice().to_vec()).collect();
    crate::linalg::rank_of(&v, rel_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::block_matrix_units;
    use crate::linalg::{kron, random_unitary};

    #[test]
    fn blocks_with_multiplicity() {
        // M_2 ⊗ 1_2 ⊕ M_1, conjugated
        let mut units = Vec::new();
        for e in block_matrix_units(&[2]) {
            units.push(crate::linalg::block_diag(&[kron(&e, &CMat::identity(2, 2)), CMat::zeros(1, 1)]));
        }
        let mut p = CMat::zeros(5, 5);
        p[(4, 4)] = crate::linalg::ONE;
        units.push(p);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = random_unitary(5, &mut rng);
        let conj: Vec<CMat> = units.iter().map(|m| mm3(&u, m, &adj(&u))).collect();
        let alg = MatrixAlgebra::spanned_by(5, conj.iter(), 1e-9);
        assert_eq!(alg.dim(), 5);
        let blocks = alg.decompose(0).unwrap();
        assert_eq!(block_multiset(&blocks), vec![1, 2]);
        assert_eq!(blocks[1].multiplicity, 2);
        assert!(alg.closure_defect(4, 1) < 1e-10);
    }

    #[test]
    fn generated_full_matrix_algebra() {
        let mut a = CMat::zeros(3, 3);
        a[(0, 1)] = crate::linalg::ONE;
        a[(1, 2)] = crate::linalg::ONE;
        let alg = MatrixAlgebra::generated_by(3, &[a], 1e-9);
        assert_eq!(alg.dim(), 9);
        assert_eq!(block_multiset(&alg.decompose(0).unwrap()), vec![3]);
    }

    #[test]
    fn degenerate_algebra_uses_its_range() {
        let mut e = CMat::zeros(3, 3);
        e[(0, 0)] = crate::linalg::ONE;
        let alg = MatrixAlgebra::spanned_by(3, [&e], 1e-9);
        let blocks = alg.decompose(0).unwrap();
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].size, 1);
        assert_eq!(blocks[0].multiplicity, 1);
    }
}
