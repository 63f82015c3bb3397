//! Crate-wide error types, one enum per pipeline stage.

use thiserror::Error;

/// Syntax error with source position.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("syntax error at line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ParseError { line, column, message: message.into() }
    }
}

/// Static program validation errors.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ValidateError {
    #[error("undeclared tensor atom: tensor({atom}, {indices}) has no matching index_list declaration")]
    UndeclaredTensorAtom { atom: String, indices: String },
    #[error("index list mismatch for tensor atom {atom}: {indices} is not among the declared index lists for its pattern")]
    IndexListMismatch { atom: String, indices: String },
    #[error("index {index} has no range")]
    MissingRange { index: String },
    #[error("operator argument must be a constant: operator({arg})")]
    OperatorArgNotConstant { arg: String },
}

/// Errors raised while building an explanation graph.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExplainError {
    #[error("unprovable goal: {goal}")]
    Unprovable { goal: String },
    #[error("goal is not ground: {goal}")]
    NonGroundGoal { goal: String },
    #[error("search budget exceeded after {steps} steps (budget {budget})")]
    BudgetExceeded { steps: usize, budget: usize },
    #[error("tensor atom key is not ground after solving clause for {goal}: {key}")]
    NonGroundTensorKey { goal: String, key: String },
    #[error("tensor index list is not a ground list of index symbols in clause for {goal}: {list}")]
    BadIndexList { goal: String, list: String },
    #[error("operator argument is not a constant in clause for {goal}: {arg}")]
    BadOperatorArg { goal: String, arg: String },
    #[error("subgoal answer is not ground while solving {goal}: {answer}")]
    NonGroundAnswer { goal: String, answer: String },
}

/// Errors raised while lowering a graph to tensor equations.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum CompileError {
    #[error("disjunct signature conflict at goal {goal}: disjunct {disjunct} infers [{found}], goal signature is [{expected}]")]
    SignatureConflict { goal: String, disjunct: usize, found: String, expected: String },
    #[error("unresolvable recursive signature: goal {goal} in a cyclic component has no disjunct with a derivable signature")]
    UnresolvableRecursiveSignature { goal: String },
    #[error("unknown operator: operator({name})")]
    UnknownOperator { name: String },
    #[error("operator applied where no operand exists at goal {goal}")]
    OperatorWithoutOperand { goal: String },
    #[error("dimension mismatch at goal {goal}, disjunct {disjunct}, operand {operand}, axis {axis}: expected {expected}, found {found}")]
    DimMismatch { goal: String, disjunct: usize, operand: usize, axis: usize, expected: usize, found: usize },
    #[error("too many distinct index symbols for a textual einsum spec (max 52)")]
    TooManyIndices,
}

/// Numerical evaluation errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum RuntimeError {
    #[error("einsum operand count mismatch: spec has {spec}, got {got}")]
    OperandCountMismatch { spec: usize, got: usize },
    #[error("einsum shape mismatch: operand {operand} axis {axis} has size {found}, index {index} requires {expected}")]
    ShapeMismatch { operand: usize, axis: usize, index: String, expected: usize, found: usize },
    #[error("no extent known for output index {index}")]
    MissingExtent { index: String },
    #[error("fixpoint did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("non-finite value produced while evaluating goal {goal}")]
    NonFinite { goal: String },
    #[error("differentiation through fixpoints unsupported: equation set contains a cyclic component ({goal})")]
    CyclicBackward { goal: String },
    #[error("no value for goal {goal} in the parameter store or trace")]
    MissingValue { goal: String },
    #[error("tensor atom {key} does not match any declaration")]
    UndeclaredKey { key: String },
}

/// Training-stage errors.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum TrainError {
    #[error("negative log likelihood undefined for goal {goal}: q = {value} is not positive")]
    NllDomain { goal: String, value: f64 },
    #[error("loss for goal {goal} requires a scalar value, got shape {shape:?}")]
    NonScalarGoal { goal: String, shape: Vec<usize> },
    #[error("margin-ranking loss requires a goal scored over the entity axis or a scalar score; goal {goal} has shape {shape:?} but there are {entities} entities")]
    BadScoreShape { goal: String, shape: Vec<usize>, entities: usize },
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("goal predicate {pred}/{arity} is not a triple: margin-ranking training needs rel(subject, relation, object) goals")]
    NotATriple { pred: String, arity: usize },
}

/// Checkpoint container errors.
#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt manifest: {0}")]
    CorruptManifest(String),
    #[error("unsupported checkpoint format version {0:?}")]
    BadVersion(String),
    #[error("blob length mismatch: manifest expects {expected} bytes, weights.bin has {found}")]
    BlobLength { expected: u64, found: u64 },
    #[error("range mismatch for {name}: checkpoint shape {stored:?}, current program requires {required:?}")]
    RangeMismatch { name: String, stored: Vec<usize>, required: Vec<usize> },
}

/// Knowledge-graph tooling errors.
#[derive(Debug, Error)]
pub enum KgError {
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed triple at {path}:{line}: expected 3 tab-separated fields")]
    MalformedLine { path: String, line: usize },
    #[error("empty train split")]
    EmptyTrain,
    #[error("unknown {kind} {symbol} at {path}:{line} (vocabulary is built from the train split)")]
    UnknownSymbol { kind: String, symbol: String, path: String, line: usize },
    #[error("entity id {id} out of range (vocabulary size {size})")]
    IdOutOfRange { id: usize, size: usize },
    #[error("no queries in the requested split")]
    NoQueries,
    #[error("program signature is not a vector over entities: goal {goal} has shape {shape:?}, expected [{entities}]")]
    NotEntityVector { goal: String, shape: Vec<usize>, entities: usize },
}

/// Any error the pipeline can produce.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Validate(#[from] ValidateError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl Error {
    /// True for results that are semantically negative but not malfunctions,
    /// e.g. an unprovable goal. The CLI maps these to exit code 1.
    pub fn is_unprovable(&self) -> bool {
        matches!(self, Error::Explain(ExplainError::Unprovable { .. }))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
