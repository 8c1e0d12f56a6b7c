//! Finite inverse semigroups given by multiplication tables.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::action::PartialBijection;
use crate::error::{FellError, Result};

/// A finite inverse semigroup with unit. Elements are the indices `0..size`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseSemigroup {
    size: usize,
    mult: Vec<usize>,
    unit: usize,
    star: Vec<usize>,
    idempotents: Vec<usize>,
    is_idem: Vec<bool>,
    leq: Vec<bool>,
    zero: Option<usize>,
    names: Option<Vec<String>>,
}

/// A nonzero multiplicative map E → {0,1}, stored over the idempotent list.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Character {
    pub values: Vec<bool>,
}

/// Largest table handled without complaint.
pub const MAX_TABLE: usize = 2000;

impl InverseSemigroup {
    /// Validate a table and derive the involution, idempotents and order.
    pub fn from_mult_table(table: &[Vec<usize>], unit: usize) -> Result<Self> {
        let n = table.len();
        if n == 0 {
            return Err(FellError::Shape("empty multiplication table".into()));
        }
        if n > MAX_TABLE {
            return Err(FellError::TooLarge(format!("table of size {n}")));
        }
        for row in table {
            if row.len() != n {
                return Err(FellError::Shape("table is not square".into()));
            }
            if row.iter().any(|&x| x >= n) {
                return Err(FellError::Shape("table entry out of range".into()));
            }
        }
        if unit >= n {
            return Err(FellError::BadUnit);
        }
        let mult: Vec<usize> = table.iter().flatten().copied().collect();
        let m = |a: usize, b: usize| mult[a * n + b];
        for s in 0..n {
            if m(unit, s) != s || m(s, unit) != s {
                return Err(FellError::BadUnit);
            }
        }
        for a in 0..n {
            for b in 0..n {
                let ab = m(a, b);
                for cc in 0..n {
                    if m(ab, cc) != m(a, m(b, cc)) {
                        return Err(FellError::NotAssociative(a, b, cc));
                    }
                }
            }
        }
        let mut star = vec![0; n];
        for s in 0..n {
            let cands: Vec<usize> = (0..n)
                .filter(|&x| m(m(s, x), s) == s && m(m(x, s), x) == x)
                .collect();
            if cands.len() != 1 {
                return Err(FellError::NoUniqueInverse(s));
            }
            star[s] = cands[0];
        }
        Ok(Self::with_star(n, mult, unit, star))
    }

    /// Build from a table known to be an inverse monoid with the given involution.
    pub(crate) fn with_star(n: usize, mult: Vec<usize>, unit: usize, star: Vec<usize>) -> Self {
        let is_idem: Vec<bool> = (0..n).map(|s| mult[s * n + s] == s).collect();
        let idempotents: Vec<usize> = (0..n).filter(|&s| is_idem[s]).collect();
        let mut leq = vec![false; n * n];
        for s in 0..n {
            let d = mult[star[s] * n + s];
            for t in 0..n {
                leq[s * n + t] = mult[t * n + d] == s;
            }
        }
        let zero = (0..n).find(|&z| (0..n).all(|s| mult[z * n + s] == z && mult[s * n + z] == z));
        InverseSemigroup { size: n, mult, unit, star, idempotents, is_idem, leq, zero, names: None }
    }

    /// Adjoin a fresh unit to a raw table that lacks one. The new unit gets index `n`.
    pub fn adjoin_unit(table: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let n = table.len();
        let mut out: Vec<Vec<usize>> = table
            .iter()
            .enumerate()
            .map(|(a, row)| {
                let mut r = row.clone();
                r.push(a);
                r
            })
            .collect();
        out.push((0..=n).collect());
        out
    }

    pub fn with_names(mut self, names: Vec<String>) -> Self {
        if names.len() == self.size {
            self.names = Some(names);
        }
        self
    }

    pub fn name(&self, s: usize) -> String {
        match &self.names {
            Some(v) => v[s].clone(),
            None => s.to_string(),
        }
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn unit(&self) -> usize {
        self.unit
    }

    pub fn zero(&self) -> Option<usize> {
        self.zero
    }

    #[inline]
    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.mult[a * self.size + b]
    }

    pub fn mul3(&self, a: usize, b: usize, c: usize) -> usize {
        self.mul(self.mul(a, b), c)
    }

    #[inline]
    pub fn star(&self, s: usize) -> usize {
        self.star[s]
    }

    /// s* s
    pub fn source_idem(&self, s: usize) -> usize {
        self.mul(self.star[s], s)
    }

    /// s s*
    pub fn range_idem(&self, s: usize) -> usize {
        self.mul(s, self.star[s])
    }

    pub fn table(&self) -> Vec<Vec<usize>> {
        self.mult.chunks(self.size).map(|r| r.to_vec()).collect()
    }

    pub fn idempotents(&self) -> &[usize] {
        &self.idempotents
    }

    pub fn is_idempotent(&self, s: usize) -> bool {
        self.is_idem[s]
    }

    /// Natural partial order: s ≤ t iff t·(s*s) = s.
    #[inline]
    pub fn leq(&self, s: usize, t: usize) -> bool {
        self.leq[s * self.size + t]
    }

    pub fn is_group(&self) -> bool {
        self.idempotents.len() == 1
    }

    /// E_s = {e ∈ E : e ≤ s}.
    pub fn down_idempotents(&self, s: usize) -> Vec<usize> {
        self.idempotents.iter().copied().filter(|&e| self.leq(e, s)).collect()
    }

    /// Elements below both s and t.
    pub fn common_lower(&self, s: usize, t: usize) -> Vec<usize> {
        (0..self.size).filter(|&v| self.leq(v, s) && self.leq(v, t)).collect()
    }

    /// Elements not strictly below any other element.
    pub fn maximal_elements(&self) -> Vec<usize> {
        (0..self.size)
            .filter(|&s| !(0..self.size).any(|t| t != s && self.leq(s, t)))
            .collect()
    }

    /// For every element, the least-index maximal element above it.
    pub fn maximal_lift(&self) -> Vec<usize> {
        let maxs = self.maximal_elements();
        (0..self.size)
            .map(|s| *maxs.iter().find(|&&m| self.leq(s, m)).expect("finite order has maximal elements"))
            .collect()
    }

    /// All characters of E. In a finite semilattice every filter is principal,
    /// so they are the up-sets of the idempotents, listed in idempotent order.
    pub fn characters(&self) -> Vec<Character> {
        self.idempotents
            .iter()
            .map(|&f| Character {
                values: self.idempotents.iter().map(|&e| self.leq(f, e)).collect(),
            })
            .collect()
    }

    /// Position of an idempotent within `idempotents()`.
    pub fn idem_position(&self, e: usize) -> Option<usize> {
        self.idempotents.binary_search(&e).ok()
    }

    /// The canonical action of S on its characters: χ ∈ dom(s) iff χ(s*s) = 1,
    /// and (s·χ)(e) = χ(s* e s).
    pub fn character_action(&self) -> Vec<PartialBijection> {
        let chars = self.characters();
        let index: HashMap<&Character, usize> = chars.iter().enumerate().map(|(i, ch)| (ch, i)).collect();
        let ne = self.idempotents.len();
        (0..self.size)
            .map(|s| {
                let d = self.idem_position(self.source_idem(s)).unwrap();
                let ss = self.star(s);
                let map = chars
                    .iter()
                    .map(|ch| {
                        if !ch.values[d] {
                            return None;
                        }
                        let values = (0..ne)
                            .map(|k| {
                                let e = self.idempotents[k];
                                let conj = self.mul3(ss, e, s);
                                ch.values[self.idem_position(conj).unwrap()]
                            })
                            .collect();
                        Some(index[&Character { values }])
                    })
                    .collect();
                PartialBijection::from_map(map)
            })
            .collect()
    }

    /// Cyclic group Z/n.
    pub fn cyclic_group(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(FellError::Shape("group of order 0".into()));
        }
        let table: Vec<Vec<usize>> = (0..n).map(|a| (0..n).map(|b| (a + b) % n).collect()).collect();
        Ok(Self::from_mult_table(&table, 0)?.with_names((0..n).map(|g| format!("g{g}")).collect()))
    }

    /// Chain semilattice 1 = e0 > e1 > ... > e_{k-1}.
    pub fn chain(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(FellError::Shape("empty chain".into()));
        }
        let table: Vec<Vec<usize>> = (0..k).map(|a| (0..k).map(|b| a.max(b)).collect()).collect();
        Ok(Self::from_mult_table(&table, 0)?.with_names((0..k).map(|i| format!("e{i}")).collect()))
    }

    /// Z/g with an adjoined zero; the zero gets index g.
    pub fn cyclic_with_zero(g: usize) -> Result<Self> {
        if g == 0 {
            return Err(FellError::Shape("group of order 0".into()));
        }
        let table: Vec<Vec<usize>> = (0..=g)
            .map(|a| (0..=g).map(|b| if a == g || b == g { g } else { (a + b) % g }).collect())
            .collect();
        let mut names: Vec<String> = (0..g).map(|x| format!("g{x}")).collect();
        names.push("0".into());
        Ok(Self::from_mult_table(&table, 0)?.with_names(names))
    }

    /// The symmetric inverse monoid I_n with its defining action on n points.
    pub fn symmetric_inverse_monoid(n: usize) -> Result<(Self, Vec<PartialBijection>)> {
        if n == 0 {
            return Err(FellError::Shape("I_0 is not supported".into()));
        }
        if n > 5 {
            return Err(FellError::TooLarge(format!("I_{n}")));
        }
        let mut maps = Vec::new();
        let mut cur = vec![None; n];
        let mut used = vec![false; n];
        enumerate_partial(0, n, &mut cur, &mut used, &mut maps);
        // identity first, empty map last
        maps.sort_by_key(|m: &Vec<Option<usize>>| {
            let rank = m.iter().filter(|x| x.is_some()).count();
            (std::cmp::Reverse(rank), m.iter().map(|x| x.map_or(usize::MAX, |v| v)).collect::<Vec<_>>())
        });
        let pbs: Vec<PartialBijection> = maps.into_iter().map(PartialBijection::from_map).collect();
        let (s, pbs) = Self::from_partial_maps(n, pbs)?;
        Ok((s, pbs))
    }

    /// The inverse monoid generated by the given partial bijections of
    /// {0..points-1} together with the identity.
    pub fn generated_by(points: usize, gens: &[PartialBijection], cap: usize) -> Result<(Self, Vec<PartialBijection>)> {
        let id = PartialBijection::identity(points);
        let mut elems = vec![id];
        let mut index: HashMap<PartialBijection, usize> = HashMap::new();
        index.insert(elems[0].clone(), 0);
        let mut gset: Vec<PartialBijection> = Vec::new();
        for g in gens {
            if g.size() != points {
                return Err(FellError::Shape("generator acts on the wrong set".into()));
            }
            gset.push(g.clone());
            gset.push(g.inverse());
        }
        let mut frontier = vec![0usize];
        while let Some(i) = frontier.pop() {
            for g in &gset {
                let prod = g.compose(&elems[i]);
                if !index.contains_key(&prod) {
                    if elems.len() >= cap {
                        return Err(FellError::TooLarge(format!("generated semigroup exceeds {cap}")));
                    }
                    index.insert(prod.clone(), elems.len());
                    elems.push(prod);
                    frontier.push(elems.len() - 1);
                }
            }
        }
        Self::from_partial_maps(points, elems)
    }

    /// Multiplication table of a family of partial bijections closed under
    /// composition and inverse, with the identity at index 0.
    pub fn from_partial_maps(points: usize, maps: Vec<PartialBijection>) -> Result<(Self, Vec<PartialBijection>)> {
        let n = maps.len();
        let index: HashMap<&PartialBijection, usize> = maps.iter().enumerate().map(|(i, m)| (m, i)).collect();
        let unit = *index
            .get(&PartialBijection::identity(points))
            .ok_or_else(|| FellError::Shape("family lacks the identity".into()))?;
        let mut mult = vec![0; n * n];
        for a in 0..n {
            for b in 0..n {
                let ab = maps[a].compose(&maps[b]);
                mult[a * n + b] = *index
                    .get(&ab)
                    .ok_or_else(|| FellError::Shape("family not closed under composition".into()))?;
            }
        }
        let mut star = vec![0; n];
        for a in 0..n {
            star[a] = *index
                .get(&maps[a].inverse())
                .ok_or_else(|| FellError::Shape("family not closed under inverse".into()))?;
        }
        let names = maps.iter().map(|m| m.label()).collect();
        let s = Self::with_star(n, mult, unit, star).with_names(names);
        Ok((s, maps))
    }
}

fn enumerate_partial(i: usize, n: usize, cur: &mut Vec<Option<usize>>, used: &mut [bool], out: &mut Vec<Vec<Option<usize>>>) {
    if i == n {
        out.push(cur.clone());
        return;
    }
    cur[i] = None;
    enumerate_partial(i + 1, n, cur, used, out);
    for t in 0..n {
        if !used[t] {
            used[t] = true;
            cur[i] = Some(t);
            enumerate_partial(i + 1, n, cur, used, out);
            used[t] = false;
        }
    }
    cur[i] = None;
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    #[test]
    fn trivial_group() {
        let s = InverseSemigroup::from_mult_table(&[vec![0]], 0).unwrap();
        assert_eq!(s.idempotents(), &[0]);
        assert_eq!(s.star(0), 0);
    }

    #[test]
    fn z2_order_is_equality() {
        let s = InverseSemigroup::from_mult_table(&[vec![0, 1], vec![1, 0]], 0).unwrap();
        assert_eq!(s.idempotents(), &[0]);
        assert!(s.leq(0, 0) && s.leq(1, 1) && !s.leq(0, 1) && !s.leq(1, 0));
    }

    #[test]
    fn two_element_semilattice() {
        // 0 = 1, 1 = e
        let s = InverseSemigroup::from_mult_table(&[vec![0, 1], vec![1, 1]], 0).unwrap();
        assert_eq!(s.idempotents(), &[0, 1]);
        assert!(s.leq(1, 1) && s.leq(1, 0) && s.leq(0, 0) && !s.leq(0, 1));
        assert_eq!(s.zero(), Some(1));
        assert_eq!(s.characters().len(), 2);
    }

    #[test]
    fn rejects_non_inverse() {
        // left-zero band {a, b} with adjoined unit: a·x = a, b·x = b
        let t = InverseSemigroup::adjoin_unit(&[vec![0, 0], vec![1, 1]]);
        assert!(matches!(
            InverseSemigroup::from_mult_table(&t, 2),
            Err(FellError::NoUniqueInverse(_))
        ));
    }

    #[test]
    fn rejects_bad_unit_and_assoc() {
        assert_eq!(InverseSemigroup::from_mult_table(&[vec![0, 1], vec![1, 1]], 1), Err(FellError::BadUnit));
        // unit 0, then a table that is not associative on {1,2}
        let t = vec![vec![0, 1, 2], vec![1, 2, 1], vec![2, 1, 1]];
        assert!(matches!(InverseSemigroup::from_mult_table(&t, 0), Err(FellError::NotAssociative(..))));
    }

    #[test]
    fn symmetric_inverse_monoid_sizes() {
        for n in 1..=4 {
            let (s, _) = InverseSemigroup::symmetric_inverse_monoid(n).unwrap();
            let want: usize = (0..=n).map(|k| binom(n, k) * binom(n, k) * (1..=k).product::<usize>()).sum();
            assert_eq!(s.size(), want);
            assert_eq!(s.idempotents().len(), 1 << n);
            assert_eq!(s.unit(), 0);
            assert!(s.zero().is_some());
        }
        let (s1, _) = InverseSemigroup::symmetric_inverse_monoid(1).unwrap();
        assert_eq!(s1.size(), 2);
    }

    #[test]
    fn i2_matches_validated_table() {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let v = InverseSemigroup::from_mult_table(&s.table(), s.unit()).unwrap();
        for x in 0..s.size() {
            assert_eq!(s.star(x), v.star(x));
        }
        assert_eq!(s.size(), 7);
        assert_eq!(s.idempotents().len(), 4);
    }

    #[test]
    fn swap_has_full_domain() {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let swap = maps.iter().position(|m| m.get(0) == Some(1) && m.get(1) == Some(0)).unwrap();
        assert_eq!(s.source_idem(swap), s.unit());
    }

    #[test]
    fn down_idempotents_examples() {
        let g = InverseSemigroup::cyclic_group(3).unwrap();
        assert!(g.down_idempotents(1).is_empty());
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let id1 = maps.iter().position(|m| m.get(0) == Some(0) && m.get(1).is_none()).unwrap();
        let empty = s.zero().unwrap();
        let mut d = s.down_idempotents(id1);
        d.sort();
        let mut want = vec![id1, empty];
        want.sort();
        assert_eq!(d, want);
    }

    #[test]
    fn characters_match_brute_force_filters() {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let e = s.idempotents().to_vec();
        let k = e.len();
        let mut brute = Vec::new();
        for mask in 1u32..(1 << k) {
            let inside = |i: usize| mask & (1 << i) != 0;
            let upward = (0..k).all(|i| !inside(i) || (0..k).all(|j| !s.leq(e[i], e[j]) || inside(j)));
            let meets = (0..k).all(|i| {
                (0..k).all(|j| !(inside(i) && inside(j)) || inside(e.iter().position(|&x| x == s.mul(e[i], e[j])).unwrap()))
            });
            if upward && meets {
                brute.push(Character { values: (0..k).map(inside).collect() });
            }
        }
        let mut got = s.characters();
        got.sort();
        brute.sort();
        assert_eq!(got, brute);
    }

    #[test]
    fn maximal_lift_is_above() {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(3).unwrap();
        let mu = s.maximal_lift();
        for x in 0..s.size() {
            assert!(s.leq(x, mu[x]));
        }
        assert_eq!(s.maximal_elements().len(), 6);
    }
}
