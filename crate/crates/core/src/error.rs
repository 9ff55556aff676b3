use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error(
        "RT60 of {rt60} s is too small for a room of volume {volume:.2} m^3; \
         minimum feasible RT60 is {min_rt60:.4} s"
    )]
    Rt60TooSmall { rt60: f64, volume: f64, min_rt60: f64 },

    #[error(
        "no feasible source distance >= {min_distance} m for DOA {doa_deg} deg \
         from array center {center:?} (largest feasible is {max_feasible:.3} m)"
    )]
    InfeasiblePlacement {
        doa_deg: f64,
        center: [f64; 3],
        min_distance: f64,
        max_feasible: f64,
    },

    #[error("empty signal")]
    EmptySignal,

    #[error("silent input: signal power is zero, cannot set an SNR")]
    SilentInput,

    #[error("signal of {len} samples is shorter than one {dft_len}-sample frame")]
    SignalTooShort { len: usize, dft_len: usize },

    #[error("band range {lo}..={hi} outside 0..={max}")]
    BandRange { lo: usize, hi: usize, max: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("bad magic in {what}: expected {expected:?}, found {found:?}")]
    BadMagic {
        what: &'static str,
        expected: [u8; 4],
        found: [u8; 4],
    },

    #[error("unsupported {what} version {found} (expected {expected})")]
    Version {
        what: &'static str,
        expected: u16,
        found: u16,
    },

    #[error("truncated {what}: {detail}")]
    Truncated { what: &'static str, detail: String },

    #[error("record count mismatch: header declares {declared}, file holds {found}")]
    CountMismatch { declared: u64, found: u64 },

    #[error("forward cache is missing or does not match this model")]
    StaleCache,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("need at least 2 distinct source signals, have {0}")]
    NotEnoughSources(usize),

    #[error("unsupported wav format in {path}: {detail}")]
    WavFormat { path: PathBuf, detail: String },

    #[error("mixture id mismatch at row {row}: {left} vs {right}")]
    IdMismatch {
        row: usize,
        left: String,
        right: String,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| Error::Io {
            context: what(),
            source,
        })
    }
}
