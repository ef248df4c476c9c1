use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("instance `{0}` has no annotations")]
    EmptyAnnotations(String),
    #[error("dataset holds numeric scores; binarize it before computing categorical statistics")]
    NumericMode,
    #[error("input is empty")]
    EmptyInput,
    #[error("label set needs at least two labels, got {0}")]
    TooFewLabels(usize),
    #[error("label `{0}` appears twice in the label set")]
    DuplicateLabel(String),
    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("label index {index} is out of range for {k} labels")]
    LabelOutOfRange { index: usize, k: usize },
    #[error("invalid soft label: {0}")]
    InvalidSoftLabel(String),
    #[error("duplicate instance id `{0}`")]
    DuplicateId(String),
    #[error("instance `{instance}` carries two annotations by `{annotator}`")]
    DuplicateAnnotator { instance: String, annotator: String },
    #[error("duplicate annotator profile `{0}`")]
    DuplicateProfile(String),
    #[error("annotation on `{0}` does not match the dataset label mode")]
    LabelModeMismatch(String),
    #[error("instance `{0}`: iteration must be present exactly when the dataset is iterative")]
    IterationMismatch(String),
    #[error("row {row} sums to {found}, expected {expected}")]
    RowSumMismatch { row: usize, expected: usize, found: usize },
    #[error("need at least two annotators per item, got {0}")]
    TooFewAnnotators(usize),
    #[error("items carry differing annotator counts ({min}..={max}); fleiss' kappa needs a constant count")]
    RaggedCounts { min: usize, max: usize },
    #[error("no item carries two or more annotations")]
    NoPairableValues,
    #[error("predictions are missing for {} instance(s), first `{}`", .0.len(), .0.first().map(String::as_str).unwrap_or(""))]
    CoverageGap(Vec<String>),
    #[error("pairing is not a bijection: {0}")]
    PairingNotBijective(String),
    #[error("probability vector has length {found}, expected {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("unknown group `{0}`")]
    UnknownGroup(String),
    #[error("no annotator carries dimension `{0}`")]
    DimensionMissing(String),
    #[error("dataset is not in iterative mode")]
    NotIterative,
    #[error("iteration {0} has no annotated instances")]
    EmptyIteration(u32),
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("embedding has a non-finite component")]
    NonFiniteEmbedding,
    #[error("training data is empty")]
    EmptyTraining,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no bias component for instance `{0}`")]
    MissingBiasComponent(String),
    #[error("holdout split has no annotated instances")]
    EmptyHoldout,
    #[error("score {0} is outside [-3, 1]")]
    ScoreOutOfRange(f64),
    #[error("dialogue has no turns")]
    EmptyDialogue,
}
