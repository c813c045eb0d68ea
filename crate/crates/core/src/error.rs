use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid channel: {}", .0.join("; "))]
    InvalidChannel(Vec<String>),

    #[error("invalid Q-graph: {0}")]
    InvalidQGraph(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("parameter {name} = {value} outside {range}")]
    ParameterOutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("alphabet mismatch: channel has {channel} outputs, Q-graph has {qgraph}")]
    AlphabetMismatch { channel: usize, qgraph: usize },

    #[error("output symbol {symbol} out of range (alphabet size {size})")]
    SymbolOutOfRange { symbol: usize, size: usize },

    #[error("channel is not strongly connected")]
    NotStronglyConnected,

    #[error("Q-graph is not irreducible")]
    NotIrreducible,

    #[error("policy is outside P_pi: pruned coupled graph has {0} closed classes")]
    NotInPPi(usize),

    #[error("no aperiodic closed class is available")]
    NoAperiodicClass,

    #[error("input is periodic (period {0})")]
    PeriodicInput(usize),

    #[error("node set is not a closed communicating class")]
    NotClosedClass,

    #[error("stationary solve failed: {0}")]
    SingularSystem(String),

    #[error("output {y} has zero probability under the current belief and action")]
    ZeroProbabilityOutput { y: usize },

    #[error("BCJR invariance fails at q={q}, y={y} (gap {gap:.3e})")]
    NotInvariant { q: usize, y: usize, gap: f64 },

    #[error("optimizer found no feasible policy")]
    NoFeasibleStart,

    #[error("Q-graph extraction failed: {0}")]
    Extraction(String),

    #[error("{0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
