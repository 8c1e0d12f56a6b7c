use std::collections::BTreeMap;
use std::path::Path;

use fell::absorption::{verify_absorption, Representation};
use fell::analysis::{analyze, Which};
use fell::ap::{ap_check, ap_synthesize, infer_context};
use fell::bundle::{check_commutation, validate_bundle, FellBundle};
use fell::corpus;
use fell::cross_sectional::reduced_algebra;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::io::{self, ActionFile, BundleFile, RepFile, WitnessFile};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub command: &'static str,
    pub inputs_digest: String,
    pub verdict: Verdict,
    pub metrics: Value,
    pub seed: u64,
    pub tolerances: BTreeMap<&'static str, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct Outcome {
    pub report: Report,
}

/// sha256 over the inputs in order, each prefixed by its length.
struct Inputs {
    hasher: Sha256,
}

impl Inputs {
    fn new() -> Self {
        Inputs { hasher: Sha256::new() }
    }

    fn read(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = io::read_text(path)?;
        self.hasher.update((bytes.len() as u64).to_le_bytes());
        self.hasher.update(&bytes);
        Ok(bytes)
    }

    fn add(&mut self, text: &str) {
        self.hasher.update((text.len() as u64).to_le_bytes());
        self.hasher.update(text.as_bytes());
    }

    fn digest(self) -> String {
        let d = self.hasher.finalize();
        let hex: String = d.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }
}

fn load_bundle(inputs: &mut Inputs, path: &Path) -> Result<FellBundle, CliError> {
    let bytes = inputs.read(path)?;
    io::parse::<BundleFile>(&bytes, path)?.to_bundle()
}

/// Semantic failures become failing reports; input errors propagate.
fn finish(
    command: &'static str,
    inputs: Inputs,
    seed: u64,
    tolerances: BTreeMap<&'static str, f64>,
    body: Result<(Value, bool), CliError>,
) -> Result<Outcome, CliError> {
    let (metrics, pass, error) = match body {
        Ok((m, p)) => (m, p, None),
        Err(e) if e.exit_code() == 1 => (Value::Null, false, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    Ok(Outcome { report: Report { command, inputs_digest: inputs.digest(), verdict, metrics, seed, tolerances, error } })
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("metrics serialize")
}

/// Bundle validation as a precondition of the other commands.
fn require_valid(b: &FellBundle, tol: f64) -> Result<(), CliError> {
    validate_bundle(b, tol).into_result()?;
    Ok(())
}

pub fn validate(path: &Path, tol: f64, seed: u64) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::new();
    let b = load_bundle(&mut inputs, path)?;
    let v = validate_bundle(&b, tol);
    let c = check_commutation(&b, tol);
    let pass = v.passed() && c.passed();
    let metrics = json!({
        "name": b.name(),
        "semigroup_size": b.semigroup().size(),
        "carrier_dim": b.carrier_dim(),
        "total_dim": b.total_dim(),
        "validation": to_value(&v.report),
        "exhaustive": v.exhaustive,
        "commutation": to_value(&c),
        "first_failure": v.error.as_ref().map(|e| e.to_string()),
    });
    finish("validate", inputs, seed, BTreeMap::from([("tol", tol)]), Ok((metrics, pass)))
}

pub fn algebras(path: &Path, which: Which, tol: f64, seed: u64) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::new();
    let b = load_bundle(&mut inputs, path)?;
    inputs.add(&format!("{which:?}"));
    let body = (|| {
        require_valid(&b, tol)?;
        let a = analyze(&b, which)?;
        let s = &a.summary;
        let within = |x: Option<f64>| x.map_or(true, |d| d <= tol);
        let mut pass = within(s.env_hom_defect) && within(s.lambda_defect) && within(s.unit_expectation_defect);
        if which == Which::Both {
            pass &= s.weak_containment == Some(true);
        }
        Ok((json!({ "which": which, "summary": to_value(s) }), pass))
    })();
    finish("algebras", inputs, seed, BTreeMap::from([("tol", tol)]), body)
}

pub fn ap(
    path: &Path,
    witness: Option<&Path>,
    synth: Option<&Path>,
    emit: Option<&Path>,
    tol: f64,
    seed: u64,
) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::new();
    let b = load_bundle(&mut inputs, path)?;
    let (w, mode) = match (witness, synth) {
        (Some(wp), _) => {
            let bytes = inputs.read(wp)?;
            (Ok(io::parse::<WitnessFile>(&bytes, wp)?.to_witness(b.carrier_dim())?), "witness")
        }
        (None, Some(ap)) => {
            let bytes = inputs.read(ap)?;
            let action = io::parse::<ActionFile>(&bytes, ap)?.to_action()?;
            (infer_context(&b, &action).and_then(|ctx| ap_synthesize(&b, &ctx)).map_err(CliError::from), "synthesized")
        }
        (None, None) => return Err(CliError::Input("one of --witness or --synth is required".into())),
    };
    let body = (|| {
        require_valid(&b, 1e-9)?;
        let w = w?;
        if let Some(out) = emit {
            io::write_json(out, &WitnessFile::from_witness(&w))?;
        }
        let r = ap_check(&b, &w, tol)?;
        let metrics = json!({
            "mode": mode,
            "sections": w.sections.len(),
            "support": w.sections.iter().map(Vec::len).collect::<Vec<_>>(),
            "bound": r.bound,
            "defect": r.defect,
            "best_section": r.best_section,
        });
        Ok((metrics, r.passed))
    })();
    finish("ap", inputs, seed, BTreeMap::from([("tol", tol)]), body)
}

pub fn absorb(path: &Path, rep_path: &Path, tol: f64, seed: u64) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::new();
    let b = load_bundle(&mut inputs, path)?;
    let bytes = inputs.read(rep_path)?;
    let rep: Representation = io::parse::<RepFile>(&bytes, rep_path)?.to_rep(&b)?;
    let body = (|| {
        require_valid(&b, 1e-9)?;
        let r = verify_absorption(&b, &rep, tol)?;
        let mut pass = r.passed();
        let red_dim = match r.pi_lambda_dim {
            Some(d) => {
                let red = reduced_algebra(&b)?.algebra.dim();
                pass &= d == red;
                Some(red)
            }
            None => None,
        };
        let metrics = json!({
            "report": to_value(&r.report),
            "pi_dim": r.pi_dim,
            "induced_dim": r.induced_dim,
            "unit_faithful": r.unit_faithful,
            "pi_lambda_dim": r.pi_lambda_dim,
            "reduced_dim": red_dim,
        });
        Ok((metrics, pass))
    })();
    finish("absorb", inputs, seed, BTreeMap::from([("tol", tol), ("rep_axioms", tol)]), body)
}

/// `random` takes its seed from the parameters or, if none, from --seed/FB_SEED.
pub fn gen(preset: &str, params: &[usize], seed: u64, out: &Path) -> Result<Outcome, CliError> {
    let mut inputs = Inputs::new();
    inputs.add(preset);
    inputs.add(&format!("{params:?}"));
    let entry = if preset == "random" && params.is_empty() {
        corpus::random_bundle(seed)?
    } else {
        corpus::preset(preset, params)?
    };
    let b = &entry.bundle;
    std::fs::create_dir_all(out).map_err(|e| CliError::Input(format!("{}: {e}", out.display())))?;
    let stem = b.name().to_string();
    let paths = [
        out.join(format!("{stem}.bundle.json")),
        out.join(format!("{stem}.action.json")),
        out.join(format!("{stem}.rep.json")),
    ];
    io::write_json(&paths[0], &BundleFile::from_bundle(b))?;
    io::write_json(&paths[1], &ActionFile::from_action(&entry.context.action))?;
    io::write_json(&paths[2], &RepFile::from_rep(&Representation::carrier(b)))?;
    let v = validate_bundle(b, 1e-9);
    let metrics = json!({
        "name": stem,
        "semigroup_size": b.semigroup().size(),
        "carrier_dim": b.carrier_dim(),
        "total_dim": b.total_dim(),
        "files": paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "validates": v.passed(),
    });
    let pass = v.passed();
    finish("gen", inputs, seed, BTreeMap::from([("tol", 1e-9)]), Ok((metrics, pass)))
}
