//! File formats. Every file is JSON; a complex number is a pair [re, im]
//! and a matrix is a list of rows.

use std::path::Path;

use fell::action::{Action, PartialBijection};
use fell::ap::Witness;
use fell::absorption::Representation;
use fell::bundle::FellBundle;
use fell::linalg::{CMat, C64};
use fell::semigroup::InverseSemigroup;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub type MatrixRepr = Vec<Vec<[f64; 2]>>;

pub fn matrix_to_repr(m: &CMat) -> MatrixRepr {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn matrix_from_repr(r: &MatrixRepr, n: usize, what: &str) -> Result<CMat, CliError> {
    if r.len() != n || r.iter().any(|row| row.len() != n) {
        return Err(CliError::Input(format!("{what}: expected a {n}×{n} matrix")));
    }
    if r.iter().flatten().any(|z| !z[0].is_finite() || !z[1].is_finite()) {
        return Err(CliError::Input(format!("{what}: non-finite entry")));
    }
    Ok(CMat::from_fn(n, n, |i, j| C64::new(r[i][j][0], r[i][j][1])))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemigroupRepr {
    pub size: usize,
    pub unit: usize,
    pub mult: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FiberRepr {
    pub s: usize,
    pub basis: Vec<MatrixRepr>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BundleFile {
    pub name: String,
    pub semigroup: SemigroupRepr,
    pub carrier_dim: usize,
    pub fibers: Vec<FiberRepr>,
}

impl BundleFile {
    pub fn from_bundle(b: &FellBundle) -> Self {
        let sg = b.semigroup();
        BundleFile {
            name: b.name().to_string(),
            semigroup: SemigroupRepr { size: sg.size(), unit: sg.unit(), mult: sg.table() },
            carrier_dim: b.carrier_dim(),
            fibers: (0..sg.size())
                .map(|s| FiberRepr { s, basis: b.fiber(s).basis().iter().map(matrix_to_repr).collect() })
                .collect(),
        }
    }

    pub fn to_bundle(&self) -> Result<FellBundle, CliError> {
        let sg = &self.semigroup;
        if sg.mult.len() != sg.size || sg.mult.iter().any(|r| r.len() != sg.size) {
            return Err(CliError::Input(format!("multiplication table is not {0}×{0}", sg.size)));
        }
        let s = InverseSemigroup::from_mult_table(&sg.mult, sg.unit)?;
        let n = self.carrier_dim;
        let mut bases: Vec<Option<Vec<CMat>>> = vec![None; sg.size];
        for f in &self.fibers {
            if f.s >= sg.size {
                return Err(CliError::Input(format!("fiber label {} out of range", f.s)));
            }
            if bases[f.s].is_some() {
                return Err(CliError::Input(format!("fiber {} given twice", f.s)));
            }
            let mats = f
                .basis
                .iter()
                .enumerate()
                .map(|(i, m)| matrix_from_repr(m, n, &format!("fiber {} basis {i}", f.s)))
                .collect::<Result<Vec<_>, _>>()?;
            bases[f.s] = Some(mats);
        }
        let bases = bases.into_iter().map(Option::unwrap_or_default).collect();
        Ok(FellBundle::new(&self.name, s, n, bases)?)
    }
}

/// An action on points 0..space_size: for each element, the image of each
/// point or null where undefined.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActionFile {
    pub space_size: usize,
    pub maps: Vec<Vec<Option<usize>>>,
}

impl ActionFile {
    pub fn from_action(a: &Action) -> Self {
        ActionFile {
            space_size: a.space_size,
            maps: a.maps.iter().map(|m| (0..m.size()).map(|x| m.get(x)).collect()).collect(),
        }
    }

    pub fn to_action(&self) -> Result<Action, CliError> {
        for (s, m) in self.maps.iter().enumerate() {
            if m.len() != self.space_size || m.iter().flatten().any(|&y| y >= self.space_size) {
                return Err(CliError::Input(format!("map of element {s} does not act on {} points", self.space_size)));
            }
            let mut seen = vec![false; self.space_size];
            for &y in m.iter().flatten() {
                if std::mem::replace(&mut seen[y], true) {
                    return Err(CliError::Input(format!("map of element {s} is not injective")));
                }
            }
        }
        Ok(Action::new(self.space_size, self.maps.iter().map(|m| PartialBijection::from_map(m.clone())).collect()))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepImages {
    pub s: usize,
    pub images: Vec<MatrixRepr>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RepFile {
    pub dim_h: usize,
    pub maps: Vec<RepImages>,
}

impl RepFile {
    pub fn from_rep(r: &Representation) -> Self {
        RepFile {
            dim_h: r.dim_h,
            maps: r.maps.iter().enumerate().map(|(s, v)| RepImages { s, images: v.iter().map(matrix_to_repr).collect() }).collect(),
        }
    }

    pub fn to_rep(&self, b: &FellBundle) -> Result<Representation, CliError> {
        let n_el = b.semigroup().size();
        let mut maps: Vec<Option<Vec<CMat>>> = vec![None; n_el];
        for e in &self.maps {
            if e.s >= n_el {
                return Err(CliError::Input(format!("representation label {} out of range", e.s)));
            }
            let mats = e
                .images
                .iter()
                .enumerate()
                .map(|(i, m)| matrix_from_repr(m, self.dim_h, &format!("image {i} at {}", e.s)))
                .collect::<Result<Vec<_>, _>>()?;
            maps[e.s] = Some(mats);
        }
        let maps = maps.into_iter().map(Option::unwrap_or_default).collect();
        let rep = Representation { dim_h: self.dim_h, maps };
        rep.check_shape(b)?;
        Ok(rep)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionValue {
    pub s: usize,
    pub value: MatrixRepr,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WitnessFile {
    pub sections: Vec<Vec<SectionValue>>,
}

impl WitnessFile {
    pub fn from_witness(w: &Witness) -> Self {
        WitnessFile {
            sections: w
                .sections
                .iter()
                .map(|sec| sec.iter().map(|(s, m)| SectionValue { s: *s, value: matrix_to_repr(m) }).collect())
                .collect(),
        }
    }

    /// Labels are not range-checked here: an unknown element is a
    /// NotASection failure, reported by the checker.
    pub fn to_witness(&self, n: usize) -> Result<Witness, CliError> {
        let sections = self
            .sections
            .iter()
            .map(|sec| {
                sec.iter()
                    .map(|v| Ok((v.s, matrix_from_repr(&v.value, n, &format!("section value at {}", v.s))?)))
                    .collect::<Result<Vec<_>, CliError>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Witness { sections })
    }
}

pub fn read_text(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub fn parse<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Write through a temporary file and rename, so readers never see a partial file.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("file types serialize");
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, text + "\n").map_err(|e| CliError::Input(format!("{}: {e}", tmp.display())))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
