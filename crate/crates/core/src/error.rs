use alloc::string::String;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("label out of range: {0}")]
    Index(String),
    #[error("flux {phi} outside the monotone branch |phi| < 0.5")]
    OutOfBranch { phi: f64 },
    #[error("frequency {target} GHz unreachable, valid range ({lo}, {hi}]")]
    Unreachable { target: f64, lo: f64, hi: f64 },
    #[error("configuration: {0}")]
    Config(String),
    #[error("singular detuning: {0}")]
    SingularDetuning(String),
    #[error("resonant denominator in {0}")]
    Resonance(String),
    #[error("cannot identify dressed state {label}: best overlap {overlap:.3}")]
    StateIdentification { label: String, overlap: f64 },
    #[error("no coupler off point in [{lo}, {hi}] GHz")]
    NoOffPoint { lo: f64, hi: f64 },
    #[error("invalid pulse: {0}")]
    InvalidPulse(String),
    #[error("ramp of {ramp} ns is shorter than two samples of {dt} ns")]
    TooFastRamp { ramp: f64, dt: f64 },
    #[error("DDR track infeasible at sample {sample}")]
    DdrInfeasible { sample: usize },
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("incompatible grids: {0}")]
    IncompatibleGrid(String),
    #[error("integrator failure: norm drift {drift:e}, try a smaller dt")]
    Integrator { drift: f64 },
    #[error("fringe contrast {0:.3} below 0.1")]
    LowContrast(f64),
    #[error("infeasible gate: {0}")]
    Infeasible(String),
    #[error("calibration did not converge: {0}")]
    Calibration(String),
    #[error("nonadiabatic evolution: {0}")]
    Nonadiabatic(String),
    #[error("tomography: {0}")]
    Tomography(String),
    #[error("benchmarking fit failed: {0}")]
    Benchmarking(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

pub type Result<T> = core::result::Result<T, Error>;
