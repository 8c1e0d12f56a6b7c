//! Actions on finite sets, groupoids of germs, bisections, and exact
//! amenability witnesses for finite groupoids.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{FellError, Result};
use crate::semigroup::InverseSemigroup;

/// A partial injective map of {0..m-1}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartialBijection {
    map: Vec<Option<usize>>,
}

impl PartialBijection {
    /// Panics if the map is not injective or leaves the set.
    pub fn from_map(map: Vec<Option<usize>>) -> Self {
        let m = map.len();
        let mut seen = vec![false; m];
        for t in map.iter().flatten() {
            assert!(*t < m && !seen[*t], "not a partial bijection");
            seen[*t] = true;
        }
        PartialBijection { map }
    }

    pub fn from_pairs(m: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut map = vec![None; m];
        let mut seen = vec![false; m];
        for &(x, y) in pairs {
            if x >= m || y >= m {
                return Err(FellError::Shape(format!("pair ({x}, {y}) outside a set of size {m}")));
            }
            if map[x].is_some() || seen[y] {
                return Err(FellError::Shape(format!("pair ({x}, {y}) breaks injectivity")));
            }
            map[x] = Some(y);
            seen[y] = true;
        }
        Ok(PartialBijection { map })
    }

    pub fn identity(m: usize) -> Self {
        PartialBijection { map: (0..m).map(Some).collect() }
    }

    pub fn size(&self) -> usize {
        self.map.len()
    }

    pub fn get(&self, x: usize) -> Option<usize> {
        self.map.get(x).copied().flatten()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.map.iter().enumerate().filter_map(|(x, y)| y.map(|y| (x, y))).collect()
    }

    pub fn domain(&self) -> Vec<usize> {
        (0..self.map.len()).filter(|&x| self.map[x].is_some()).collect()
    }

    pub fn rank(&self) -> usize {
        self.map.iter().filter(|y| y.is_some()).count()
    }

    /// self ∘ other: apply `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        PartialBijection { map: other.map.iter().map(|y| y.and_then(|y| self.map[y])).collect() }
    }

    pub fn inverse(&self) -> Self {
        let mut map = vec![None; self.map.len()];
        for (x, y) in self.pairs() {
            map[y] = Some(x);
        }
        PartialBijection { map }
    }

    pub fn is_partial_identity(&self) -> bool {
        self.pairs().iter().all(|(x, y)| x == y)
    }

    pub fn label(&self) -> String {
        let body: Vec<String> = self
            .map
            .iter()
            .map(|y| y.map_or_else(|| "-".to_string(), |y| (y + 1).to_string()))
            .collect();
        format!("[{}]", body.join(" "))
    }
}

/// An action of an inverse semigroup on {0..space_size-1} by partial bijections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub space_size: usize,
    pub maps: Vec<PartialBijection>,
}

impl Action {
    pub fn new(space_size: usize, maps: Vec<PartialBijection>) -> Self {
        Action { space_size, maps }
    }
}

/// Exhaustive check of the action axioms.
pub fn validate_action(s: &InverseSemigroup, action: &Action) -> Result<()> {
    if action.maps.len() != s.size() {
        return Err(FellError::Shape(format!(
            "action has {} maps for a semigroup of size {}",
            action.maps.len(),
            s.size()
        )));
    }
    if action.maps.iter().any(|m| m.size() != action.space_size) {
        return Err(FellError::Shape("action map on the wrong set".into()));
    }
    let n = s.size();
    for &e in s.idempotents() {
        if !action.maps[e].is_partial_identity() {
            return Err(FellError::IdempotentNotIdentity(e));
        }
    }
    if action.maps[s.unit()] != PartialBijection::identity(action.space_size) {
        return Err(FellError::IdempotentNotIdentity(s.unit()));
    }
    for a in 0..n {
        if action.maps[s.star(a)] != action.maps[a].inverse() {
            return Err(FellError::InverseMismatch(a));
        }
    }
    for a in 0..n {
        for b in 0..n {
            if action.maps[s.mul(a, b)] != action.maps[a].compose(&action.maps[b]) {
                return Err(FellError::NotFunctorial(a, b));
            }
        }
    }
    Ok(())
}

/// A finite groupoid. Units are `0..unit_count`; `unit_arrow[x]` is the
/// identity arrow at unit x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteGroupoid {
    pub unit_count: usize,
    pub src: Vec<usize>,
    pub tgt: Vec<usize>,
    pub inverse: Vec<usize>,
    pub unit_arrow: Vec<usize>,
    compose: Vec<Option<usize>>,
}

impl FiniteGroupoid {
    pub fn arrow_count(&self) -> usize {
        self.src.len()
    }

    /// g·h, defined when src(g) = tgt(h).
    pub fn compose(&self, g: usize, h: usize) -> Option<usize> {
        self.compose[g * self.arrow_count() + h]
    }

    pub fn is_unit_arrow(&self, g: usize) -> bool {
        self.unit_arrow[self.src[g]] == g
    }

    /// Arrows with target x.
    pub fn range_fiber(&self, x: usize) -> Vec<usize> {
        (0..self.arrow_count()).filter(|&g| self.tgt[g] == x).collect()
    }

    /// Build from explicit tables; checks the groupoid axioms.
    pub fn from_tables(
        unit_count: usize,
        src: Vec<usize>,
        tgt: Vec<usize>,
        inverse: Vec<usize>,
        unit_arrow: Vec<usize>,
        compose: Vec<Option<usize>>,
    ) -> Result<Self> {
        let g = FiniteGroupoid { unit_count, src, tgt, inverse, unit_arrow, compose };
        g.check_axioms()?;
        Ok(g)
    }

    /// The group G as a groupoid with one unit.
    pub fn from_group(s: &InverseSemigroup) -> Result<Self> {
        if !s.is_group() {
            return Err(FellError::Shape("not a group".into()));
        }
        let n = s.size();
        let mut compose = vec![None; n * n];
        for a in 0..n {
            for b in 0..n {
                compose[a * n + b] = Some(s.mul(a, b));
            }
        }
        Self::from_tables(1, vec![0; n], vec![0; n], (0..n).map(|a| s.star(a)).collect(), vec![s.unit()], compose)
    }

    /// Pair groupoid on m points; arrow (i, j) ↦ index i*m + j with target i, source j.
    pub fn pair(m: usize) -> Self {
        let n = m * m;
        let mut compose = vec![None; n * n];
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    compose[(i * m + j) * n + (j * m + k)] = Some(i * m + k);
                }
            }
        }
        FiniteGroupoid {
            unit_count: m,
            src: (0..n).map(|a| a % m).collect(),
            tgt: (0..n).map(|a| a / m).collect(),
            inverse: (0..n).map(|a| (a % m) * m + a / m).collect(),
            unit_arrow: (0..m).map(|i| i * m + i).collect(),
            compose,
        }
    }

    /// Disjoint union.
    pub fn disjoint_union(&self, other: &Self) -> Self {
        let (n1, n2) = (self.arrow_count(), other.arrow_count());
        let n = n1 + n2;
        let u1 = self.unit_count;
        let mut compose = vec![None; n * n];
        for a in 0..n1 {
            for b in 0..n1 {
                compose[a * n + b] = self.compose(a, b);
            }
        }
        for a in 0..n2 {
            for b in 0..n2 {
                compose[(a + n1) * n + b + n1] = other.compose(a, b).map(|x| x + n1);
            }
        }
        FiniteGroupoid {
            unit_count: u1 + other.unit_count,
            src: self.src.iter().copied().chain(other.src.iter().map(|x| x + u1)).collect(),
            tgt: self.tgt.iter().copied().chain(other.tgt.iter().map(|x| x + u1)).collect(),
            inverse: self.inverse.iter().copied().chain(other.inverse.iter().map(|x| x + n1)).collect(),
            unit_arrow: self.unit_arrow.iter().copied().chain(other.unit_arrow.iter().map(|x| x + n1)).collect(),
            compose,
        }
    }

    pub fn check_axioms(&self) -> Result<()> {
        let n = self.arrow_count();
        let bad = |msg: String| Err(FellError::Shape(msg));
        if self.tgt.len() != n || self.inverse.len() != n || self.compose.len() != n * n {
            return bad("groupoid tables have inconsistent lengths".into());
        }
        for x in 0..self.unit_count {
            let u = self.unit_arrow[x];
            if self.src[u] != x || self.tgt[u] != x {
                return bad(format!("unit arrow of {x} misplaced"));
            }
        }
        for g in 0..n {
            let gi = self.inverse[g];
            if self.inverse[gi] != g || self.src[gi] != self.tgt[g] || self.tgt[gi] != self.src[g] {
                return bad(format!("inverse of arrow {g}"));
            }
            if self.compose(gi, g) != Some(self.unit_arrow[self.src[g]]) {
                return bad(format!("g⁻¹g is not a unit at arrow {g}"));
            }
            for h in 0..n {
                let defined = self.src[g] == self.tgt[h];
                match (defined, self.compose(g, h)) {
                    (true, Some(gh)) => {
                        if self.src[gh] != self.src[h] || self.tgt[gh] != self.tgt[g] {
                            return bad(format!("composite ({g}, {h}) has wrong ends"));
                        }
                    }
                    (false, None) => {}
                    _ => return bad(format!("composability of ({g}, {h})")),
                }
            }
        }
        for g in 0..n {
            for h in 0..n {
                let Some(gh) = self.compose(g, h) else { continue };
                for k in 0..n {
                    if let Some(hk) = self.compose(h, k) {
                        if self.compose(gh, k) != self.compose(g, hk) {
                            return bad(format!("associativity at ({g}, {h}, {k})"));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// The groupoid of germs of an action together with its labeling.
#[derive(Clone, Debug)]
pub struct GermGroupoid {
    pub groupoid: FiniteGroupoid,
    /// canonical representative (element, point) of each arrow
    pub rep: Vec<(usize, usize)>,
    /// germ_of[s * m + x] = arrow of [s, x] when x ∈ dom(s)
    germ_of: Vec<Option<usize>>,
    space_size: usize,
}

impl GermGroupoid {
    pub fn germ(&self, s: usize, x: usize) -> Option<usize> {
        self.germ_of[s * self.space_size + x]
    }

    /// Arrows of the bisection induced by s.
    pub fn bisection_of(&self, s: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.space_size).filter_map(|x| self.germ(s, x)).collect();
        v.sort_unstable();
        v
    }
}

/// Germs [s,x] = [t,x] iff some idempotent e with x ∈ dom(e) has se = te.
pub fn germ_groupoid(s: &InverseSemigroup, action: &Action) -> Result<GermGroupoid> {
    validate_action(s, action)?;
    let m = action.space_size;
    let n = s.size();
    let mut germ_of = vec![None; n * m];
    let mut rep: Vec<(usize, usize)> = Vec::new();
    for x in 0..m {
        let es: Vec<usize> = s.idempotents().iter().copied().filter(|&e| action.maps[e].get(x).is_some()).collect();
        for a in 0..n {
            if action.maps[a].get(x).is_none() || germ_of[a * m + x].is_some() {
                continue;
            }
            // a is the least element of a new class at x
            let id = rep.len();
            rep.push((a, x));
            for b in a..n {
                if action.maps[b].get(x).is_some() && es.iter().any(|&e| s.mul(a, e) == s.mul(b, e)) {
                    germ_of[b * m + x] = Some(id);
                }
            }
        }
    }
    // classes sorted by (point, element) would be just as deterministic; keep (element, point) order
    let mut order: Vec<usize> = (0..rep.len()).collect();
    order.sort_by_key(|&i| rep[i]);
    let mut relabel = vec![0; rep.len()];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    let rep: Vec<(usize, usize)> = order.iter().map(|&i| rep[i]).collect();
    for g in germ_of.iter_mut().flatten() {
        *g = relabel[*g];
    }
    let na = rep.len();
    let src: Vec<usize> = rep.iter().map(|&(_, x)| x).collect();
    let tgt: Vec<usize> = rep.iter().map(|&(a, x)| action.maps[a].get(x).unwrap()).collect();
    let germ = |a: usize, x: usize| germ_of[a * m + x];
    let inverse: Vec<usize> = rep
        .iter()
        .map(|&(a, x)| germ(s.star(a), action.maps[a].get(x).unwrap()).unwrap())
        .collect();
    let unit_arrow: Vec<usize> = (0..m).map(|x| germ(s.unit(), x).unwrap()).collect();
    let mut compose = vec![None; na * na];
    for g in 0..na {
        for h in 0..na {
            if src[g] == tgt[h] {
                let (a, _) = rep[g];
                let (b, y) = rep[h];
                compose[g * na + h] = germ(s.mul(a, b), y);
            }
        }
    }
    let groupoid = FiniteGroupoid::from_tables(m, src, tgt, inverse, unit_arrow, compose)?;
    Ok(GermGroupoid { groupoid, rep, germ_of, space_size: m })
}

/// Check that composition of germs does not depend on representatives.
pub fn germ_composition_well_defined(s: &InverseSemigroup, action: &Action, gg: &GermGroupoid) -> bool {
    let m = action.space_size;
    for a in 0..s.size() {
        for y in 0..m {
            let Some(ty) = action.maps[a].get(y) else { continue };
            let h = gg.germ(a, y).unwrap();
            for b in 0..s.size() {
                let Some(g) = gg.germ(b, ty) else { continue };
                let composed = gg.groupoid.compose(g, h);
                if composed != gg.germ(s.mul(b, a), y) {
                    return false;
                }
            }
        }
    }
    true
}

fn is_bisection(g: &FiniteGroupoid, set: &[usize]) -> bool {
    let mut srcs = BTreeSet::new();
    let mut tgts = BTreeSet::new();
    set.iter().all(|&a| a < g.arrow_count() && srcs.insert(g.src[a]) && tgts.insert(g.tgt[a]))
}

fn normalized(set: &[usize]) -> Vec<usize> {
    let mut v = set.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// First arrow violating wideness, if any.
pub fn wide_failure(g: &FiniteGroupoid, family: &[Vec<usize>]) -> Result<Option<usize>> {
    let fam: Vec<Vec<usize>> = family.iter().map(|u| normalized(u)).collect();
    for (i, u) in fam.iter().enumerate() {
        if !is_bisection(g, u) {
            return Err(FellError::NotABisection(i));
        }
    }
    let sets: Vec<BTreeSet<usize>> = fam.iter().map(|u| u.iter().copied().collect()).collect();
    for a in 0..g.arrow_count() {
        let holders: Vec<usize> = (0..sets.len()).filter(|&i| sets[i].contains(&a)).collect();
        if holders.is_empty() {
            return Ok(Some(a));
        }
        for &i in &holders {
            for &j in &holders {
                let ok = holders.iter().any(|&k| sets[k].is_subset(&sets[i]) && sets[k].is_subset(&sets[j]));
                if !ok {
                    return Ok(Some(a));
                }
            }
        }
    }
    Ok(None)
}

pub fn is_wide(g: &FiniteGroupoid, family: &[Vec<usize>]) -> Result<bool> {
    Ok(wide_failure(g, family)?.is_none())
}

/// All bisections (including the empty one). Only for |arrows| ≤ 16.
pub fn all_bisections(g: &FiniteGroupoid) -> Result<Vec<Vec<usize>>> {
    let n = g.arrow_count();
    if n > 16 {
        return Err(FellError::TooLarge(format!("{n} arrows; supply the family explicitly")));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1u32 << n) {
        let set: Vec<usize> = (0..n).filter(|&a| mask & (1 << a) != 0).collect();
        if is_bisection(g, &set) {
            out.push(set);
        }
    }
    Ok(out)
}

pub fn bisection_product(g: &FiniteGroupoid, u: &[usize], v: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = u.iter().flat_map(|&a| v.iter().filter_map(move |&b| g.compose(a, b))).collect();
    out.sort_unstable();
    out.dedup();
    out
}

pub fn bisection_inverse(g: &FiniteGroupoid, u: &[usize]) -> Vec<usize> {
    normalized(&u.iter().map(|&a| g.inverse[a]).collect::<Vec<_>>())
}

/// Outcome of comparing G with the germ groupoid of a family of bisections.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub isomorphic: bool,
    /// arrow of G that is uncovered or where the comparison broke
    pub counterexample: Option<usize>,
    /// the family semigroup (G⁰ inserted as unit if absent)
    pub family: Vec<Vec<usize>>,
    /// for each germ arrow, the corresponding arrow of G
    pub iso: Vec<usize>,
}

/// The family semigroup of a product-closed family of bisections.
pub fn family_semigroup(g: &FiniteGroupoid, family: &[Vec<usize>]) -> Result<(InverseSemigroup, Vec<Vec<usize>>, Action)> {
    let mut fam: Vec<Vec<usize>> = Vec::new();
    let units = normalized(&g.unit_arrow);
    fam.push(units);
    for u in family {
        let u = normalized(u);
        if !fam.contains(&u) {
            fam.push(u);
        }
    }
    for (i, u) in fam.iter().enumerate() {
        if !is_bisection(g, u) {
            return Err(FellError::NotABisection(i));
        }
    }
    let index: HashMap<Vec<usize>, usize> = fam.iter().enumerate().map(|(i, u)| (u.clone(), i)).collect();
    let n = fam.len();
    let mut mult = vec![0; n * n];
    for i in 0..n {
        for j in 0..n {
            let p = bisection_product(g, &fam[i], &fam[j]);
            mult[i * n + j] = *index.get(&p).ok_or(FellError::NotClosedUnderProduct(i, j))?;
        }
    }
    let mut star = vec![0; n];
    for i in 0..n {
        star[i] = *index.get(&bisection_inverse(g, &fam[i])).ok_or(FellError::NotClosedUnderProduct(i, i))?;
    }
    let s = InverseSemigroup::with_star(n, mult, 0, star);
    let maps = fam
        .iter()
        .map(|u| {
            let mut map = vec![None; g.unit_count];
            for &a in u {
                map[g.src[a]] = Some(g.tgt[a]);
            }
            PartialBijection::from_map(map)
        })
        .collect();
    Ok((s, fam, Action::new(g.unit_count, maps)))
}

/// Compare G with the groupoid of germs of the canonical action of a wide,
/// product-closed family of bisections on G⁰.
pub fn reconstruct_check(g: &FiniteGroupoid, family: &[Vec<usize>]) -> Result<Reconstruction> {
    if let Some(a) = wide_failure(g, family)? {
        return Ok(Reconstruction { isomorphic: false, counterexample: Some(a), family: family.to_vec(), iso: vec![] });
    }
    let (s, fam, action) = family_semigroup(g, family)?;
    let gg = germ_groupoid(&s, &action)?;
    let h = &gg.groupoid;
    let pick = |u: usize, x: usize| fam[u].iter().copied().find(|&a| g.src[a] == x);
    let fail = |a: Option<usize>, fam: Vec<Vec<usize>>| Reconstruction { isomorphic: false, counterexample: a, family: fam, iso: vec![] };
    let iso: Vec<usize> = gg.rep.iter().map(|&(u, x)| pick(u, x).unwrap()).collect();
    // well defined on classes
    for u in 0..s.size() {
        for x in 0..g.unit_count {
            if let Some(germ) = gg.germ(u, x) {
                if pick(u, x) != Some(iso[germ]) {
                    return Ok(fail(pick(u, x), fam));
                }
            }
        }
    }
    let mut hit = vec![false; g.arrow_count()];
    for &a in &iso {
        if hit[a] {
            return Ok(fail(Some(a), fam));
        }
        hit[a] = true;
    }
    if let Some(a) = hit.iter().position(|&b| !b) {
        return Ok(fail(Some(a), fam));
    }
    for p in 0..h.arrow_count() {
        if g.src[iso[p]] != h.src[p] || g.tgt[iso[p]] != h.tgt[p] || iso[h.inverse[p]] != g.inverse[iso[p]] {
            return Ok(fail(Some(iso[p]), fam));
        }
        for q in 0..h.arrow_count() {
            if let Some(pq) = h.compose(p, q) {
                if g.compose(iso[p], iso[q]) != Some(iso[pq]) {
                    return Ok(fail(Some(iso[p]), fam));
                }
            }
        }
    }
    Ok(Reconstruction { isomorphic: true, counterexample: None, family: fam, iso })
}

/// Connected components: (component of each unit, units per component).
pub fn components(g: &FiniteGroupoid) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut parent: Vec<usize> = (0..g.unit_count).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        let mut y = x;
        while p[y] != r {
            let nx = p[y];
            p[y] = r;
            y = nx;
        }
        r
    }
    for a in 0..g.arrow_count() {
        let (x, y) = (find(&mut parent, g.src[a]), find(&mut parent, g.tgt[a]));
        if x != y {
            parent[x.max(y)] = x.min(y);
        }
    }
    let mut comp_of = vec![0; g.unit_count];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut root_id: HashMap<usize, usize> = HashMap::new();
    for x in 0..g.unit_count {
        let r = find(&mut parent, x);
        let id = *root_id.entry(r).or_insert_with(|| {
            comps.push(Vec::new());
            comps.len() - 1
        });
        comp_of[x] = id;
        comps[id].push(x);
    }
    (comp_of, comps)
}

/// η(h) = (|O|·|K|)^{-1/2} on each component with orbit O and isotropy K.
pub fn amenability_witness(g: &FiniteGroupoid) -> Vec<f64> {
    let (comp_of, comps) = components(g);
    let weights: Vec<f64> = comps
        .iter()
        .map(|units| {
            let x0 = units[0];
            let iso = (0..g.arrow_count()).filter(|&a| g.src[a] == x0 && g.tgt[a] == x0).count();
            1.0 / ((units.len() * iso) as f64).sqrt()
        })
        .collect();
    (0..g.arrow_count()).map(|a| weights[comp_of[g.src[a]]]).collect()
}

/// Largest deviations of the two amenability sums from 1:
/// sup_x |Σ_{h∈G^x} η(h)² − 1| and sup_g |Σ_{h∈G^{r(g)}} η(h)η(g⁻¹h) − 1|.
pub fn amenability_defects(g: &FiniteGroupoid, eta: &[f64]) -> (f64, f64) {
    let mut d1: f64 = 0.0;
    for x in 0..g.unit_count {
        let s: f64 = g.range_fiber(x).iter().map(|&h| eta[h] * eta[h]).sum();
        d1 = d1.max((s - 1.0).abs());
    }
    let mut d2: f64 = 0.0;
    for a in 0..g.arrow_count() {
        let ai = g.inverse[a];
        let s: f64 = g
            .range_fiber(g.tgt[a])
            .iter()
            .map(|&h| eta[h] * eta[g.compose(ai, h).unwrap()])
            .sum();
        d2 = d2.max((s - 1.0).abs());
    }
    (d1, d2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wagner_preston(n: usize) -> (InverseSemigroup, Action) {
        let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(n).unwrap();
        (s, Action::new(n, maps))
    }

    #[test]
    fn wagner_preston_valid_and_reproduces_table() {
        let (s, a) = wagner_preston(3);
        validate_action(&s, &a).unwrap();
    }

    #[test]
    fn z2_swap_valid() {
        let s = InverseSemigroup::cyclic_group(2).unwrap();
        let swap = PartialBijection::from_pairs(2, &[(0, 1), (1, 0)]).unwrap();
        let a = Action::new(2, vec![PartialBijection::identity(2), swap]);
        validate_action(&s, &a).unwrap();
    }

    #[test]
    fn moving_idempotent_rejected() {
        let s = InverseSemigroup::chain(2).unwrap();
        let swap = PartialBijection::from_pairs(2, &[(0, 1), (1, 0)]).unwrap();
        let a = Action::new(2, vec![PartialBijection::identity(2), swap]);
        assert_eq!(validate_action(&s, &a), Err(FellError::IdempotentNotIdentity(1)));
    }

    #[test]
    fn germs_of_group_on_point() {
        let s = InverseSemigroup::cyclic_group(4).unwrap();
        let a = Action::new(1, vec![PartialBijection::identity(1); 4]);
        let gg = germ_groupoid(&s, &a).unwrap();
        assert_eq!(gg.groupoid.arrow_count(), 4);
        assert_eq!(gg.groupoid.unit_count, 1);
    }

    #[test]
    fn germs_of_i1_on_characters() {
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(1).unwrap();
        let a = Action::new(2, s.character_action());
        let gg = germ_groupoid(&s, &a).unwrap();
        assert_eq!(gg.groupoid.unit_count, 2);
        assert_eq!(gg.groupoid.arrow_count(), 2);
        assert!((0..2).all(|g| gg.groupoid.is_unit_arrow(g)));
    }

    #[test]
    fn germs_of_i3_natural_is_pair_groupoid() {
        let (s, a) = wagner_preston(3);
        let gg = germ_groupoid(&s, &a).unwrap();
        let g = &gg.groupoid;
        assert_eq!(g.arrow_count(), 9);
        let pairs: BTreeSet<(usize, usize)> = (0..9).map(|x| (g.tgt[x], g.src[x])).collect();
        assert_eq!(pairs.len(), 9);
        assert!(germ_composition_well_defined(&s, &a, &gg));
    }

    #[test]
    fn singletons_are_wide() {
        let g = FiniteGroupoid::pair(3);
        let fam: Vec<Vec<usize>> = (0..9).map(|a| vec![a]).collect();
        assert!(is_wide(&g, &fam).unwrap());
    }

    #[test]
    fn group_as_one_set() {
        let s1 = InverseSemigroup::cyclic_group(1).unwrap();
        let g1 = FiniteGroupoid::from_group(&s1).unwrap();
        assert!(is_wide(&g1, &[vec![0]]).unwrap());
        let s2 = InverseSemigroup::cyclic_group(2).unwrap();
        let g2 = FiniteGroupoid::from_group(&s2).unwrap();
        assert_eq!(is_wide(&g2, &[vec![0, 1]]), Err(FellError::NotABisection(0)));
    }

    #[test]
    fn induced_bisections_of_i3_are_wide_and_reconstruct() {
        let (s, a) = wagner_preston(3);
        let gg = germ_groupoid(&s, &a).unwrap();
        let fam: Vec<Vec<usize>> = (0..s.size()).map(|x| gg.bisection_of(x)).collect();
        assert!(is_wide(&gg.groupoid, &fam).unwrap());
        let r = reconstruct_check(&gg.groupoid, &fam).unwrap();
        assert!(r.isomorphic);
    }

    #[test]
    fn all_bisections_reconstruct_small() {
        let g = FiniteGroupoid::pair(2);
        let fam = all_bisections(&g).unwrap();
        let r = reconstruct_check(&g, &fam).unwrap();
        assert!(r.isomorphic);
        let s = InverseSemigroup::cyclic_group(3).unwrap();
        let gz = FiniteGroupoid::from_group(&s).unwrap();
        let r = reconstruct_check(&gz, &all_bisections(&gz).unwrap()).unwrap();
        assert!(r.isomorphic);
        // group case: the germ of the singleton {g} at the point goes to g
        let h = germ_groupoid(&family_semigroup(&gz, &r.family).unwrap().0, &family_semigroup(&gz, &r.family).unwrap().2).unwrap();
        for (p, &a) in r.iso.iter().enumerate() {
            let (u, _) = h.rep[p];
            assert!(r.family[u].contains(&a));
        }
    }

    #[test]
    fn dropping_cover_flips_verdict() {
        let g = FiniteGroupoid::pair(2);
        let fam: Vec<Vec<usize>> = all_bisections(&g).unwrap().into_iter().filter(|u| !u.contains(&1)).collect();
        let r = reconstruct_check(&g, &fam).unwrap();
        assert!(!r.isomorphic);
        assert_eq!(r.counterexample, Some(1));
    }

    #[test]
    fn non_closed_family_rejected() {
        let g = FiniteGroupoid::pair(2);
        // singletons without the empty bisection: {(0,1)}·{(0,1)} = ∅ is missing
        let fam = vec![vec![0], vec![3], vec![1], vec![2]];
        assert!(matches!(reconstruct_check(&g, &fam), Err(FellError::NotClosedUnderProduct(..))));
        let fam = vec![vec![], vec![0], vec![3], vec![1], vec![2]];
        assert!(reconstruct_check(&g, &fam).unwrap().isomorphic);
    }

    #[test]
    fn amenability_examples() {
        let g = FiniteGroupoid::pair(4);
        let eta = amenability_witness(&g);
        assert!(eta.iter().all(|&v| (v - 0.5).abs() < 1e-15));
        let (d1, d2) = amenability_defects(&g, &eta);
        assert!(d1 < 1e-12 && d2 < 1e-12);
        let z3 = FiniteGroupoid::from_group(&InverseSemigroup::cyclic_group(3).unwrap()).unwrap();
        let u = FiniteGroupoid::pair(2).disjoint_union(&z3);
        u.check_axioms().unwrap();
        let eta = amenability_witness(&u);
        for a in 0..4 {
            assert!((eta[a] - 0.5f64.sqrt()).abs() < 1e-15);
        }
        for a in 4..7 {
            assert!((eta[a] - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        }
        let (d1, d2) = amenability_defects(&u, &eta);
        assert!(d1 < 1e-12 && d2 < 1e-12);
    }
}
