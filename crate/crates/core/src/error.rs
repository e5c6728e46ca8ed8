use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: &'static str, expected: usize, got: usize },

    #[error("grid mismatch: operands do not share an evaluation grid")]
    GridMismatch,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid parameters: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("data error at line {line}: {message}")]
    Data { line: usize, message: String },

    #[error("window error at x0 = {x0:?}: {message}")]
    Window { x0: Vec<f64>, message: String },

    #[error("degenerate local design at x0 = {x0:?} (bandwidth {bandwidth}, {in_window} points in window)")]
    DegenerateWindow { x0: Vec<f64>, bandwidth: f64, in_window: usize },

    #[error("ill-conditioned basis Gram matrix at x0 = {x0:?}, h = {h}, k = {k}: min eigenvalue {min_eigenvalue:e}")]
    IllConditioned { x0: Vec<f64>, h: f64, k: usize, min_eigenvalue: f64 },

    #[error("singular design matrix (condition number {condition:e})")]
    SingularDesign { condition: f64 },

    #[error("standard deviation undefined: all smoother weights are zero")]
    UndefinedSigma,

    #[error("degenerate band: every grid cell has zero standard error")]
    DegenerateBand,

    #[error("estimator failure: {0}")]
    Estimator(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code: 2 for user/configuration problems, 3 for numerical
    /// or estimator failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape { .. }
            | Error::GridMismatch
            | Error::Config(_)
            | Error::Parameter(_)
            | Error::Data { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::Domain(_)
            | Error::Window { .. }
            | Error::DegenerateWindow { .. }
            | Error::IllConditioned { .. }
            | Error::SingularDesign { .. }
            | Error::UndefinedSigma
            | Error::DegenerateBand
            | Error::Estimator(_) => 3,
        }
    }
}
