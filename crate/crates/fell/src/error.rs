use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FellError {
    #[error("malformed input: {0}")]
    Shape(String),
    #[error("too large: {0}")]
    TooLarge(String),

    #[error("multiplication is not associative at ({0}, {1}, {2})")]
    NotAssociative(usize, usize, usize),
    #[error("element {0} has no unique inverse")]
    NoUniqueInverse(usize),
    #[error("declared unit is not a two-sided identity")]
    BadUnit,

    #[error("action is not functorial at ({0}, {1})")]
    NotFunctorial(usize, usize),
    #[error("action of the inverse of {0} is not the inverse map")]
    InverseMismatch(usize),
    #[error("idempotent {0} does not act as a partial identity")]
    IdempotentNotIdentity(usize),

    #[error("family member {0} is not a bisection")]
    NotABisection(usize),
    #[error("family is not closed under product ({0}, {1})")]
    NotClosedUnderProduct(usize, usize),
    #[error("family is not wide (arrow {0})")]
    NotWide(usize),
    #[error("fiber data incompatible at arrow {0}")]
    FiberIncompatible(usize),

    #[error("fiber basis of {0} is linearly dependent")]
    DependentBasis(usize),
    #[error("product of fibers {s} and {t} escapes the target fiber (defect {defect:.3e})")]
    ProductEscapesFiber { s: usize, t: usize, defect: f64 },
    #[error("adjoint of fiber {s} is not the fiber of its inverse (defect {defect:.3e})")]
    AdjointMismatch { s: usize, defect: f64 },
    #[error("fiber {s} is not contained in fiber {t} (defect {defect:.3e})")]
    InclusionFails { s: usize, t: usize, defect: f64 },
    #[error("fiber {0} is not saturated: span F_s F_s* F_s differs from F_s")]
    NotSaturatedOnDiagonal(usize),
    #[error("unit fiber is not a *-algebra: {0}")]
    UnitFiberNotStarAlgebra(String),

    #[error("Gram matrix is not positive semidefinite (min eigenvalue {0:.3e})")]
    GramNotPSD(f64),
    #[error("null ideal is not two-sided (defect {0:.3e})")]
    IdealNotTwoSided(f64),
    #[error("rank decision ambiguous at both tolerance tiers: {0}")]
    IllConditioned(String),
    #[error("central element failed to separate blocks: {0}")]
    GenericityFailure(String),

    #[error("representation axiom {which} fails at ({s}, {t}) with defect {defect:.3e}")]
    RepAxiomFails { which: String, s: usize, t: usize, defect: f64 },
    #[error("representation is degenerate")]
    Degenerate,
    #[error("witness value at {0} is not in the fiber over s s*")]
    NotASection(usize),
    #[error("bundle is not built from a groupoid of germs: {0}")]
    NotGermBundle(String),
}

pub type Result<T> = std::result::Result<T, FellError>;
