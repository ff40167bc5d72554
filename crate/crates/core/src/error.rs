use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(&'static str),

    #[error("memtable size {memtable} is not a multiple of entry size {entry}")]
    NonIntegralWindow { memtable: u64, entry: u64 },

    #[error("compaction never completes under idle foreground")]
    NeverCompletes,

    #[error("run count would drop below one ({runs} runs, {reduced} reduced)")]
    InvalidEvolution { runs: u64, reduced: u64 },

    #[error("empty simulation")]
    EmptySimulation,

    #[error("closed-form parameters inapplicable: {0}")]
    Inapplicable(&'static str),

    #[error("instance exceeds exhaustive bounds: {0}")]
    TooLarge(&'static str),

    #[error("unknown run id {0}")]
    UnknownRun(u64),
}
