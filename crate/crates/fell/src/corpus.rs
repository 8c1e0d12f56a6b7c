//! Preset bundles and the randomized test corpus. Every entry is built from
//! an action on points, so its groupoid of germs is available.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::action::{Action, PartialBijection};
use crate::bundle::{germ_bundle, FellBundle, GermContext};
use crate::error::{FellError, Result};
use crate::linalg::random_unitary;
use crate::semigroup::InverseSemigroup;

#[derive(Clone, Debug)]
pub struct CorpusEntry {
    pub bundle: FellBundle,
    pub context: GermContext,
}

impl CorpusEntry {
    pub fn name(&self) -> &str {
        self.bundle.name()
    }
}

fn build(name: &str, s: &InverseSemigroup, action: Action, unit_dims: &[usize]) -> Result<CorpusEntry> {
    let (bundle, context) = germ_bundle(name, s, &action, unit_dims)?;
    Ok(CorpusEntry { bundle, context })
}

/// Line bundle of Z/n acting on a single point; C*_red = C[Z/n].
pub fn trivial_group(n: usize) -> Result<CorpusEntry> {
    if n > 12 {
        return Err(FellError::TooLarge(format!("trivial-group {n}")));
    }
    let s = InverseSemigroup::cyclic_group(n)?;
    let maps = vec![PartialBijection::identity(1); n];
    build(&format!("trivial-group-{n}"), &s, Action::new(1, maps), &[1])
}

/// Trivial line bundle over I_n, acting on its characters.
pub fn symmetric_inverse_monoid(n: usize) -> Result<CorpusEntry> {
    if n > 3 {
        return Err(FellError::TooLarge(format!("symmetric-inverse-monoid {n}")));
    }
    let (s, _) = InverseSemigroup::symmetric_inverse_monoid(n)?;
    let chars = s.characters().len();
    build(&format!("symmetric-inverse-monoid-{n}"), &s, Action::new(chars, s.character_action()), &vec![1; chars])
}

/// Line bundle over the pair groupoid on m points, through the natural action of I_m.
pub fn pair_groupoid(m: usize) -> Result<CorpusEntry> {
    if m > 4 {
        return Err(FellError::TooLarge(format!("pair-groupoid {m}")));
    }
    let (s, maps) = InverseSemigroup::symmetric_inverse_monoid(m)?;
    build(&format!("pair-groupoid-{m}"), &s, Action::new(m, maps), &vec![1; m])
}

/// Trivial line bundle over the chain 1 > e1 > ... > e_{k-1}.
pub fn semilattice_chain(k: usize) -> Result<CorpusEntry> {
    if k > 8 {
        return Err(FellError::TooLarge(format!("semilattice-chain {k}")));
    }
    let s = InverseSemigroup::chain(k)?;
    let chars = s.characters().len();
    build(&format!("semilattice-chain-{k}"), &s, Action::new(chars, s.character_action()), &vec![1; chars])
}

/// Z/g ∪ {0} on the points {0..m}: the group fixes every point and 0 is the
/// identity on {1..m}. Germs at x ≥ 1 identify every group element with 0,
/// so C*_red = C^m ⊕ C[Z/g].
pub fn group_zero_line(g: usize, m: usize) -> Result<CorpusEntry> {
    if g > 6 || m > 6 {
        return Err(FellError::TooLarge(format!("group-zero-line {g} {m}")));
    }
    let s = InverseSemigroup::cyclic_with_zero(g)?;
    let zero_map: Vec<Option<usize>> = (0..=m).map(|x| (x >= 1).then_some(x)).collect();
    let mut maps = vec![PartialBijection::identity(m + 1); g];
    maps.push(PartialBijection::from_map(zero_map));
    build(&format!("group-zero-line-{g}-{m}"), &s, Action::new(m + 1, maps), &vec![1; m + 1])
}

fn random_partial(n: usize, rng: &mut ChaCha8Rng) -> PartialBijection {
    let mut targets: Vec<usize> = (0..n).collect();
    targets.shuffle(rng);
    let map = (0..n).map(|x| rng.gen_bool(0.75).then_some(targets[x])).collect();
    PartialBijection::from_map(map)
}

/// Random germ bundle: an inverse submonoid of I_n (n in 2..=4, at most 40
/// elements) from 2 or 3 random generators, unit blocks of size 1 or 2, full
/// arrow fibers, then a random unitary change of carrier basis and a random
/// invertible mixing of every fiber basis.
pub fn random_bundle(seed: u64) -> Result<CorpusEntry> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..64 {
        let n = rng.gen_range(2..=4);
        let k = rng.gen_range(2..=3);
        let gens: Vec<PartialBijection> = (0..k).map(|_| random_partial(n, &mut rng)).collect();
        let Ok((s, maps)) = InverseSemigroup::generated_by(n, &gens, 40) else { continue };
        let dims: Vec<usize> = (0..n).map(|_| rng.gen_range(1..=2)).collect();
        let name = format!("random-{seed}");
        let e = build(&name, &s, Action::new(n, maps), &dims)?;
        let u = random_unitary(e.bundle.carrier_dim(), &mut rng);
        let bundle = e.bundle.conjugated(&u)?.remixed(rng.gen())?;
        return Ok(CorpusEntry { bundle, context: e.context.conjugated(&u) });
    }
    Err(FellError::GenericityFailure(format!("no small random semigroup for seed {seed}")))
}

/// Preset by name, as accepted on the command line.
pub fn preset(name: &str, params: &[usize]) -> Result<CorpusEntry> {
    let want = |k: usize| -> Result<()> {
        if params.len() == k {
            Ok(())
        } else {
            Err(FellError::Shape(format!("preset {name} takes {k} parameter(s)")))
        }
    };
    match name {
        "trivial-group" => want(1).and_then(|_| trivial_group(params[0])),
        "symmetric-inverse-monoid" => want(1).and_then(|_| symmetric_inverse_monoid(params[0])),
        "pair-groupoid" => want(1).and_then(|_| pair_groupoid(params[0])),
        "semilattice-chain" => want(1).and_then(|_| semilattice_chain(params[0])),
        "group-zero-line" => want(2).and_then(|_| group_zero_line(params[0], params[1])),
        "random" => want(1).and_then(|_| random_bundle(params[0] as u64)),
        _ => Err(FellError::Shape(format!("unknown preset {name}"))),
    }
}

/// The deterministic presets used by the test suite.
pub fn presets() -> Result<Vec<CorpusEntry>> {
    let mut out = Vec::new();
    for n in 1..=6 {
        out.push(trivial_group(n)?);
    }
    for n in 1..=3 {
        out.push(symmetric_inverse_monoid(n)?);
    }
    for m in 2..=4 {
        out.push(pair_groupoid(m)?);
    }
    for k in 1..=5 {
        out.push(semilattice_chain(k)?);
    }
    for g in 1..=4 {
        for m in 1..=4 {
            out.push(group_zero_line(g, m)?);
        }
    }
    Ok(out)
}

/// Randomized bundles with seeds 0..count.
pub fn random_corpus(count: usize) -> Result<Vec<CorpusEntry>> {
    (0..count as u64).map(random_bundle).collect()
}

/// Presets followed by 50 random bundles.
pub fn full_corpus() -> Result<Vec<CorpusEntry>> {
    let mut out = presets()?;
    out.extend(random_corpus(50)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundle::trivial_bundle;

    #[test]
    fn characters_bundle_matches_trivial_bundle() {
        let e = symmetric_inverse_monoid(2).unwrap();
        let (s, _) = InverseSemigroup::symmetric_inverse_monoid(2).unwrap();
        let t = trivial_bundle("I2", &s).unwrap();
        assert_eq!(e.bundle.total_dim(), t.total_dim());
        for x in 0..s.size() {
            for a in t.fiber(x).basis() {
                assert!(e.bundle.fiber(x).distance(a) < 1e-12);
            }
        }
    }

    #[test]
    fn random_bundles_are_reproducible() {
        let a = random_bundle(7).unwrap();
        let b = random_bundle(7).unwrap();
        assert_eq!(a.bundle.bases(), b.bundle.bases());
        assert!(a.bundle.semigroup().size() <= 40);
    }

    #[test]
    fn unknown_preset_is_rejected() {
        assert!(preset("nope", &[1]).is_err());
        assert!(preset("pair-groupoid", &[]).is_err());
        assert!(matches!(preset("pair-groupoid", &[9]), Err(FellError::TooLarge(_))));
    }
}
