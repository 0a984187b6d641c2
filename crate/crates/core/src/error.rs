use thiserror::Error;

use crate::model::Vec2;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("position ({x:.4e}, {z:.4e}) m is outside the field domain")]
    OutOfRange { x: f64, z: f64 },

    #[error("line {line}: {reason}")]
    Grid { line: usize, reason: String },

    #[error("static deflection did not converge after {iterations} iterations (last iterate ({:.4e}, {:.4e}) m, step {step:.3e} m)", last.x, last.z)]
    StaticNonConvergence { last: Vec2, step: f64, iterations: usize },

    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    FitNonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("no resonance found above {threshold:.3e} m^2/Hz")]
    NoResonance { threshold: f64 },

    #[error("degenerate readout: |beta| = {magnitude:.3e} V/m is below the floor {floor:.3e} V/m")]
    DegenerateReadout { magnitude: f64, floor: f64 },

    #[error("degenerate sampling: {0}")]
    DegenerateSampling(String),

    #[error("force projection on mode {mode} is unconstrained (|e{mode}.e_beta| = {overlap:.3e})")]
    Unconstrained {
        mode: usize,
        overlap: f64,
        /// Projection of the force onto the other mode, when it could be recovered.
        partial: Option<f64>,
    },

    #[error("series of {len} samples is shorter than one segment of {segment_len}")]
    SeriesTooShort { len: usize, segment_len: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
