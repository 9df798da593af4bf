use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("no species")]
    NoSpecies,
    #[error("duplicate species id {0:?}")]
    DuplicateSpecies(String),
    #[error("species index {index} out of range for {n_species} species")]
    SpeciesOutOfRange { index: usize, n_species: usize },
    #[error("invalid location ({x}, {y}) for lon/lat coordinates")]
    InvalidLocation { x: f64, y: f64 },
    #[error("mixed coordinate reference tags within one dataset")]
    MixedCrs,
    #[error("survey {0:?} has an empty species set")]
    EmptySurvey(String),
    #[error("probability {value} at species {index} is outside [0, 1]")]
    InvalidProbability { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("duplicate grid name {0:?}")]
    DuplicateGrid(String),
    #[error("malformed raster {name:?}: {reason}")]
    MalformedRaster { name: String, reason: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("world too sparse: no non-empty species set after {0} draws")]
    WorldTooSparse(usize),
    #[error("cannot split: all surveys fall in one block")]
    CannotSplit,
    #[error("empty train side after split")]
    EmptyTrain,
    #[error("duplicate survey id {0:?}")]
    DuplicateSurvey(String),
    #[error("no surveys to evaluate")]
    NoSurveys,
    #[error("empty {0} data")]
    EmptyData(&'static str),
    #[error("k = {k} is invalid for {n} reference points")]
    InvalidK { k: usize, n: usize },
    #[error("species {0} has no presences")]
    NoPresences(usize),
    #[error("training diverged in stage {stage}, epoch {epoch}")]
    Divergence { stage: usize, epoch: usize },
}

impl Error {
    /// True for errors caused by configuration rather than input data.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::InvalidK { .. }
                | Error::DuplicateGrid(_)
                | Error::DimensionMismatch { .. }
        )
    }
}
