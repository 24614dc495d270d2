use thiserror::Error;

/// Errors raised by the numerical kernels and the orchestration layer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("point lies on the divisor (|s|^2 = {0:e})")]
    OnDivisor(f64),
    #[error("bad chart: {0}")]
    BadChart(String),
    #[error("symplectic form is degenerate (|det| = {0:e})")]
    Degenerate(f64),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("unknown scene `{0}`")]
    UnknownScene(String),
    #[error("bad scene parameters: {0}")]
    BadParams(String),
    #[error("scene has an empty singular stratum")]
    EmptyStratum,
    #[error("stratum sampling exhausted {0} attempts near the base locus")]
    AllNearB(usize),
    #[error("track lost at eps = {0}")]
    TrackLost(f64),
    #[error("no stratum critical point within {0} of the track limit")]
    NoMatch(f64),
    #[error("fiber map drops rank (|dpi| = {0:e})")]
    SingularFiber(f64),
    #[error("adaptive step collapsed to {0:e}")]
    StepCollapse(f64),
    #[error("fiber re-projection failed (residual {0:e})")]
    FiberLost(f64),
    #[error("flow reached the divisor")]
    FlowEscaped,
    #[error("scene is not the two-dimensional local model: {0}")]
    NotLocalModel(String),
    #[error("Darboux frame construction failed: {0}")]
    FrameFailure(String),
    #[error("primitive H depends on the integration path (discrepancy {0:e})")]
    PathDependence(f64),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, LabError>;

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}
