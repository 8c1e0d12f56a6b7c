//! End-to-end acceptance run over the full corpus. Prints one verdict line
//! per criterion and exits non-zero if any criterion fails.

use std::time::{Duration, Instant};

use fell::absorption::{build_pi_lambda, verify_absorption, RepSampler, Representation};
use fell::action::{all_bisections, reconstruct_check};
use fell::analysis::{analyze, compare_tensor, Analysis, Which};
use fell::ap::{
    ap_check, ap_synthesize, groupoid_ap_defects, psi_map, witness_transfer, Transfer, Transferred, Witness,
};
use fell::bundle::{check_commutation, tensor_with, validate_bundle};
use fell::corpus::{full_corpus, CorpusEntry};
use fell::envelope::{envelope, samples};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, summary: String) -> Outcome {
    match failures.first() {
        None => Outcome { pass: true, detail: summary },
        Some(f) => Outcome { pass: false, detail: format!("{} failure(s), first: {f}", failures.len()) },
    }
}

fn bundles_and_axioms(limit: Duration) -> (Vec<CorpusEntry>, Outcome) {
    let t = Instant::now();
    let corpus = full_corpus().expect("corpus builds");
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for e in &corpus {
        let b = &e.bundle;
        let v = validate_bundle(b, 1e-9);
        let c = check_commutation(b, 1e-9);
        let d = v.report.max_defect().max(c.max_defect());
        worst = worst.max(d);
        if !v.passed() || !c.passed() || d >= 1e-9 {
            failures.push(format!("{}: {:?}", b.name(), v.error));
        }
    }
    let el = t.elapsed();
    if el > limit {
        failures.push(format!("took {el:.1?}"));
    }
    let o = outcome(failures, format!("{} bundles, max defect {worst:.1e}, {el:.1?}", corpus.len()));
    (corpus, o)
}

fn expectation(analyses: &[Analysis]) -> Outcome {
    let mut failures = Vec::new();
    let mut min_ratio = f64::INFINITY;
    for a in analyses {
        let s = &a.summary;
        let ratio = s.gram_ratio.unwrap();
        min_ratio = min_ratio.min(ratio);
        if ratio <= 1e-10 {
            failures.push(format!("{}: Gram ratio {ratio:.1e}", s.name));
        }
        if s.unit_expectation_defect.unwrap() > 1e-12 {
            failures.push(format!("{}: P(a δ_1) ≠ a", s.name));
        }
        if s.dual_rank.is_some() && s.dual_rank != s.calg_dim {
            failures.push(format!("{}: dual rank {:?} vs {:?}", s.name, s.dual_rank, s.calg_dim));
        }
    }
    outcome(failures, format!("min λmin/λmax {min_ratio:.2e}"))
}

fn sorted(v: &Option<Vec<usize>>) -> Vec<usize> {
    let mut v = v.clone().unwrap_or_default();
    v.sort_unstable_by(|a, b| b.cmp(a));
    v
}

fn weak_containment(analyses: &[Analysis]) -> Outcome {
    let mut failures = Vec::new();
    for a in analyses {
        let s = &a.summary;
        if s.weak_containment != Some(true) {
            failures.push(format!(
                "{}: env {:?} calg {:?} red {:?} blocks {:?}/{:?}",
                s.name, s.env_dim, s.calg_dim, s.red_dim, s.env_blocks, s.red_blocks
            ));
        }
        let anchor = match s.name.as_str() {
            "symmetric-inverse-monoid-2" => Some(vec![2, 1, 1, 1]),
            "pair-groupoid-3" => Some(vec![3]),
            n if n.starts_with("trivial-group-") => {
                let g: usize = n["trivial-group-".len()..].parse().unwrap();
                Some(vec![1; g])
            }
            _ => None,
        };
        if let Some(want) = anchor {
            if sorted(&s.env_blocks) != want || sorted(&s.red_blocks) != want {
                failures.push(format!("{}: anchor blocks {want:?}, got {:?}", s.name, s.env_blocks));
            }
        }
    }
    outcome(failures, format!("{} bundles, anchors I_2 / pair-groupoid-3 / Z_n hold", analyses.len()))
}

fn absorption(corpus: &[CorpusEntry], analyses: &[Analysis]) -> Outcome {
    let mut failures = Vec::new();
    let (mut reps, mut worst, mut faithful): (usize, f64, usize) = (0, 0.0, 0);
    for (e, a) in corpus.iter().zip(analyses) {
        let b = &e.bundle;
        let red = a.reduced.as_ref().unwrap();
        let sampler = match RepSampler::new(b, red, a.red_blocks.as_ref().unwrap(), 5) {
            Ok(s) => s,
            Err(err) => {
                failures.push(format!("{}: sampler {err}", b.name()));
                continue;
            }
        };
        let mut all = vec![Representation::carrier(b)];
        all.extend((0..20).filter_map(|seed| sampler.sample(8, seed)));
        for rep in &all {
            reps += 1;
            match verify_absorption(b, rep, 1e-8) {
                Ok(r) => {
                    worst = worst.max(r.report.max_defect());
                    if !r.passed() {
                        failures.push(format!("{}: {:?}", b.name(), r.report.first_failure().map(|l| &l.name)));
                    }
                    if let Some(d) = r.pi_lambda_dim {
                        faithful += 1;
                        if d != red.algebra.dim() {
                            failures.push(format!("{}: π^Λ algebra dim {d} vs {}", b.name(), red.algebra.dim()));
                        }
                    }
                }
                Err(err) => failures.push(format!("{}: {err}", b.name())),
            }
        }
    }
    outcome(failures, format!("{reps} representations ({faithful} with faithful π₁), max defect {worst:.1e}"))
}

/// Synthesized witnesses, computed once and shared by the later criteria.
fn ap_synthesis(corpus: &[CorpusEntry]) -> (Vec<Option<Witness>>, Outcome) {
    let mut failures = Vec::new();
    let mut witnesses = Vec::new();
    let (mut bound, mut defect, mut drift): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for e in corpus {
        let (b, ctx) = (&e.bundle, &e.context);
        let w = match ap_synthesize(b, ctx) {
            Ok(w) => w,
            Err(err) => {
                failures.push(format!("{}: {err}", b.name()));
                witnesses.push(None);
                continue;
            }
        };
        let r = ap_check(b, &w, 1e-8).unwrap();
        bound = bound.max(r.bound);
        defect = defect.max(r.defect);
        if r.bound > 1.0 + 1e-9 || r.defect > 1e-8 {
            failures.push(format!("{}: bound {} defect {:.1e}", b.name(), r.bound, r.defect));
        }
        let Ok(Transferred::Groupoid(eta)) = witness_transfer(b, ctx, Transfer::ToGroupoid(w.sections[0].clone()))
        else {
            failures.push(format!("{}: transfer to the groupoid failed", b.name()));
            witnesses.push(Some(w));
            continue;
        };
        let (gb, gd) = groupoid_ap_defects(ctx, &eta);
        let Ok(Transferred::Semigroup(back)) = witness_transfer(b, ctx, Transfer::ToSemigroup(eta)) else {
            failures.push(format!("{}: transfer back failed", b.name()));
            witnesses.push(Some(w));
            continue;
        };
        let r2 = ap_check(b, &Witness::single(back), 1e-8).unwrap();
        let d = [(r2.bound - r.bound).abs(), (r2.defect - r.defect).abs(), (gb - r.bound).abs(), (gd - r.defect).abs()]
            .into_iter()
            .fold(0.0, f64::max);
        drift = drift.max(d);
        if d > 1e-9 {
            failures.push(format!("{}: round trip drift {d:.1e}", b.name()));
        }
        witnesses.push(Some(w));
    }
    let o = outcome(failures, format!("max bound {bound:.12}, max defect {defect:.1e}, round-trip drift {drift:.1e}"));
    (witnesses, o)
}

fn psi(corpus: &[CorpusEntry], witnesses: &[Option<Witness>]) -> Outcome {
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (e, w) in corpus.iter().zip(witnesses) {
        let b = &e.bundle;
        let Some(w) = w else {
            failures.push(format!("{}: no witness", b.name()));
            continue;
        };
        let rep = Representation::carrier(b);
        let abs = build_pi_lambda(b, &rep).unwrap();
        let p = psi_map(b, &rep, &abs, &w.sections[0], 1e-8);
        worst = worst.max(p.report.max_defect());
        if !p.passed() || p.t_norm_sq > p.bound + 1e-9 {
            failures.push(format!("{}: ‖T‖² {} bound {} {:?}", b.name(), p.t_norm_sq, p.bound, p.report.first_failure()));
        }
    }
    outcome(failures, format!("max Φ defect {worst:.1e}"))
}

fn tensors(corpus: &[CorpusEntry], analyses: &[Analysis], witnesses: &[Option<Witness>]) -> Outcome {
    let mut failures = Vec::new();
    let mut p_defect: f64 = 0.0;
    for ((e, a), w) in corpus.iter().zip(analyses).zip(witnesses) {
        let b = &e.bundle;
        for k in [2, 3] {
            match compare_tensor(b, a, k) {
                Ok(c) => {
                    p_defect = p_defect.max(c.expectation_defect);
                    if !c.passed() {
                        failures.push(format!("{} ⊗ M_{k}: {c:?}", b.name()));
                    }
                }
                Err(err) => failures.push(format!("{} ⊗ M_{k}: {err}", b.name())),
            }
            if let Some(w) = w {
                let t = tensor_with(b, &[k]).unwrap();
                let r = ap_check(&t, &w.tensor_identity(k), 1e-8).unwrap();
                if !r.passed || r.bound > 1.0 + 1e-9 {
                    failures.push(format!("{} ⊗ M_{k}: ζ bound {} defect {:.1e}", b.name(), r.bound, r.defect));
                }
            }
        }
    }
    outcome(failures, format!("k ∈ {{2,3}}, max P compatibility defect {p_defect:.1e}"))
}

fn envelope_oracles(limit: Duration) -> Outcome {
    let t = Instant::now();
    let mut failures = Vec::new();
    let dims = [
        ("dual numbers", envelope(&samples::dual_numbers()).unwrap().dim(), 1),
        ("swapped M_2 ⊕ M_2", envelope(&samples::swapped_pair(2)).unwrap().dim(), 0),
        (
            "twisted M_2",
            envelope(&samples::twisted_matrix(&samples::diag(&[1.0, -1.0]))).unwrap().dim(),
            0,
        ),
    ];
    for (name, got, want) in dims {
        if got != want {
            failures.push(format!("{name}: dim {got}, expected {want}"));
        }
    }
    for sizes in [vec![1], vec![2, 1], vec![3, 2, 2]] {
        let env = envelope(&samples::matrix_blocks(&sizes)).unwrap();
        let want: usize = sizes.iter().map(|n| n * n).sum();
        if env.dim() != want || env.radical_dim != 0 || sorted(&Some(env.block_multiset())) != sizes {
            failures.push(format!("blocks {sizes:?}: got {:?}", env.block_multiset()));
        }
    }
    let el = t.elapsed();
    if el > limit {
        failures.push(format!("took {el:.1?}"));
    }
    outcome(failures, format!("{el:.1?}"))
}

fn reconstruction(corpus: &[CorpusEntry]) -> Outcome {
    let mut failures = Vec::new();
    let mut checked = 0;
    for e in corpus {
        let g = e.context.groupoid();
        if g.arrow_count() > 12 {
            continue;
        }
        checked += 1;
        let s = e.bundle.semigroup();
        let germs: Vec<Vec<usize>> = (0..s.size()).map(|x| e.context.germs.bisection_of(x)).collect();
        for (kind, fam) in [("germ", germs.clone()), ("all", all_bisections(g).unwrap())] {
            match reconstruct_check(g, &fam) {
                Ok(r) if r.isomorphic => {}
                other => failures.push(format!("{} ({kind} bisections): {:?}", e.name(), other.map(|r| r.counterexample))),
            }
        }
        // drop every bisection covering the last arrow
        let a = g.arrow_count() - 1;
        let dropped: Vec<Vec<usize>> = germs.into_iter().filter(|u| !u.contains(&a)).collect();
        match reconstruct_check(g, &dropped) {
            Ok(r) if !r.isomorphic && r.counterexample.is_some() => {}
            other => failures.push(format!("{}: dropping cover of {a} kept {:?}", e.name(), other.map(|r| r.isomorphic))),
        }
    }
    outcome(failures, format!("{checked} groupoids with ≤ 12 arrows"))
}

fn report(n: usize, name: &str, t: Instant, o: &Outcome) {
    let v = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} {v} {name}: {} [{:.1?}]", o.detail, t.elapsed());
}

fn main() {
    let mut all = true;
    let t = Instant::now();
    let (corpus, o) = bundles_and_axioms(Duration::from_secs(120));
    report(1, "bundle axioms", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let analyses: Vec<Analysis> =
        corpus.iter().map(|e| analyze(&e.bundle, Which::Both).expect("analysis succeeds")).collect();
    let o = expectation(&analyses);
    report(2, "conditional expectation", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let o = weak_containment(&analyses);
    report(3, "weak containment", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let o = absorption(&corpus, &analyses);
    report(4, "absorption", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let (witnesses, o) = ap_synthesis(&corpus);
    report(5, "approximation property", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let o = psi(&corpus, &witnesses);
    report(6, "Ψ_ξ mechanism", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let o = tensors(&corpus, &analyses, &witnesses);
    report(7, "tensor compatibility", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let o = envelope_oracles(Duration::from_secs(5));
    report(8, "envelope oracles", t, &o);
    all &= o.pass;

    let t = Instant::now();
    let o = reconstruction(&corpus);
    report(9, "germ reconstruction", t, &o);
    all &= o.pass;

    if !all {
        std::process::exit(1);
    }
}
