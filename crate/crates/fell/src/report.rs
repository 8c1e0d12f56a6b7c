//! Defect tables shared by the validators.

use serde::Serialize;

/// One identity family: its worst defect and where it occurred.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub checked: usize,
    pub max_defect: f64,
    pub worst: Option<(usize, usize)>,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, Serialize, PartialEq)]
pub struct CheckReport {
    pub tol: f64,
    pub lines: Vec<CheckLine>,
}

/// Running maximum of (defect, location).
#[derive(Clone, Copy, Debug, Default)]
pub struct Worst {
    pub defect: f64,
    pub at: Option<(usize, usize)>,
    pub count: usize,
}

impl Worst {
    pub fn see(&mut self, defect: f64, at: (usize, usize)) {
        self.count += 1;
        let d = if defect.is_nan() { f64::INFINITY } else { defect };
        if self.at.is_none() || d > self.defect {
            self.defect = d;
            self.at = Some(at);
        }
    }

    pub fn merge(mut self, other: Worst) -> Worst {
        self.count += other.count;
        if other.at.is_some() && (self.at.is_none() || other.defect > self.defect) {
            self.defect = other.defect;
            self.at = other.at;
        }
        self
    }

    pub fn merge_all<I: IntoIterator<Item = Worst>>(it: I) -> Worst {
        it.into_iter().fold(Worst::default(), Worst::merge)
    }
}

impl CheckReport {
    pub fn new(tol: f64) -> Self {
        CheckReport { tol, lines: Vec::new() }
    }

    pub fn push(&mut self, name: &str, w: Worst) -> bool {
        let pass = w.defect <= self.tol;
        self.lines.push(CheckLine {
            name: name.to_string(),
            checked: w.count,
            max_defect: w.defect,
            worst: w.at,
            pass,
        });
        pass
    }

    pub fn passed(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn max_defect(&self) -> f64 {
        self.lines.iter().map(|l| l.max_defect).fold(0.0, f64::max)
    }

    pub fn line(&self, name: &str) -> Option<&CheckLine> {
        self.lines.iter().find(|l| l.name == name)
    }

    pub fn first_failure(&self) -> Option<&CheckLine> {
        self.lines.iter().find(|l| !l.pass)
    }
}
