use thiserror::Error;

/// Library-wide error type. Every variant names the offending input and the
/// precondition it violated so callers can act on the message alone.
#[derive(Debug, Error)]
pub enum Error {
    #[error("model order must be at least 1")]
    OrderZero,

    #[error("signal has {len} samples but order {order} requires more than {} samples", 2 * order)]
    SignalTooShort { len: usize, order: usize },

    #[error("signal is constant ({value}); an autoregressive fit needs a non-degenerate signal")]
    DegenerateSignal { value: f64 },

    #[error("least-squares normal equations are numerically singular (condition ~{condition:.3e}); lower the order or lengthen the signal")]
    SingularFit { condition: f64 },

    #[error("sample value at index {index} is not finite")]
    NonFiniteSample { index: usize },

    #[error("sample rate must be finite and positive, got {value}")]
    BadSampleRate { value: f64 },

    #[error("polynomial leading coefficient is zero; pass coefficients in descending degree order with a nonzero leading term")]
    LeadingCoefficientZero,

    #[error("polynomial coefficient at index {index} is not finite")]
    NonFiniteCoefficient { index: usize },

    #[error("model must have at least one pole")]
    EmptyPoleSet,

    #[error("pole {index} = {re}{im:+}i is not strictly stable (requires a negative real part)")]
    UnstablePole { index: usize, re: f64, im: f64 },

    #[error("pole {index} is not finite")]
    NonFinitePole { index: usize },

    #[error("gain must be finite and positive, got {value}")]
    BadGain { value: f64 },

    #[error("pole scale factor must be finite and positive, got {value}")]
    BadScale { value: f64 },

    #[error("poles {i} and {j} are {separation:.3e} apart, below the simple-pole threshold {threshold:.3e}; residues are undefined for repeated poles")]
    RepeatedPole { i: usize, j: usize, separation: f64, threshold: f64 },

    #[error("model has spectral energy {energy:.6e}; this operation requires a model normalized to unit energy (call normalize_energy first)")]
    NotNormalized { energy: f64 },

    #[error("frequency grid needs at least two points, got {len}")]
    GridTooShort { len: usize },

    #[error("frequency grid must start at 0, got {start}")]
    GridStart { start: f64 },

    #[error("frequency grid must be strictly increasing and finite; violation at index {index}")]
    GridNotIncreasing { index: usize },

    #[error("cumulative spectrum reaches {terminal:.6} at the end of the grid, more than 1e-3 from 1; extend or refine the grid")]
    CumulativeTerminal { terminal: f64 },

    #[error("quantile level {eps} is outside the covered range [0, {max}]")]
    QuantileOutOfRange { eps: f64, max: f64 },

    #[error("measure must contain at least one atom")]
    EmptyMeasure,

    #[error("measure has {atoms} atoms but {masses} masses")]
    MeasureLengthMismatch { atoms: usize, masses: usize },

    #[error("mass at index {index} is {value}; masses must be finite and nonnegative")]
    BadMass { index: usize, value: f64 },

    #[error("atom at index {index} is not finite")]
    NonFiniteAtom { index: usize },

    #[error("total mass is {total}; it must be positive")]
    ZeroTotalMass { total: f64 },

    #[error("total masses differ: {left:.12e} vs {right:.12e}; balanced transport requires equal totals")]
    MassMismatch { left: f64, right: f64 },

    #[error("ground cost exponent must be finite and at least 1, got {value}")]
    BadCostExponent { value: f64 },

    #[error("entropic regularization strength lambda must be finite and positive, got {value}")]
    BadLambda { value: f64 },

    #[error("marginal penalty rho must be positive (finite for unbalanced transport), got {value}")]
    BadMarginalPenalty { value: f64 },

    #[error("solver tolerance must be finite and positive, got {value}")]
    BadTolerance { value: f64 },

    #[error("max_iterations must be at least 1")]
    BadIterationCap,

    #[error("Sinkhorn did not converge: marginal residual {residual:.3e} after {iterations} iterations (tolerance {tolerance:.1e}); raise max_iterations or lower lambda")]
    SinkhornNotConverged { iterations: usize, residual: f64, tolerance: f64 },

    #[error("pole sets have different sizes: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },

    #[error("models have different orders: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("spectrum grids must be sorted strictly increasing; violation at index {index}")]
    UnsortedSpectrumGrid { index: usize },

    #[error("spectrum has zero total mass")]
    ZeroMassSpectrum,

    #[error("spectra carry different total masses ({left:.12e} vs {right:.12e}); normalize them first")]
    SpectrumMassMismatch { left: f64, right: f64 },

    #[error("Welch window length {window} is invalid for a signal of {len} samples (need 4 <= window <= len)")]
    BadWelchWindow { window: usize, len: usize },

    #[error("interpolation parameter t={t} outside [0, 1]")]
    BadInterpolationParameter { t: f64 },

    #[error("barycentric weights must be nonnegative and sum to 1 (got sum {sum:.12e})")]
    BadWeights { sum: f64 },

    #[error("expected {expected} barycentric weights, got {got}")]
    WeightCountMismatch { expected: usize, got: usize },

    #[error("dictionary must contain at least one entry")]
    EmptyDictionary,

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("training point {index} carries no label")]
    UnlabeledTrainingPoint { index: usize },

    #[error("k={k} is invalid for {len} training points (need 1 <= k <= len)")]
    BadNeighborCount { k: usize, len: usize },

    #[error("cannot form {k} clusters from {len} measures")]
    BadClusterCount { k: usize, len: usize },

    #[error("embedding {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, got: usize, expected: usize },

    #[error("requested {components} principal components but data has dimension {dim}")]
    BadComponentCount { components: usize, dim: usize },

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{path}: invalid JSON: {source}")]
    Json { path: String, source: serde_json::Error },

    #[error("{path}: line {line}: cannot parse {content:?} as a sample value")]
    CsvParse { path: String, line: usize, content: String },

    #[error("{path}: unsupported WAV file: {reason}")]
    UnsupportedWav { path: String, reason: String },

    #[error("{path}: declared order {declared} does not match {actual} poles")]
    ModelOrderMismatch { path: String, declared: usize, actual: usize },

    #[error("internal solver invariant violated: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;
