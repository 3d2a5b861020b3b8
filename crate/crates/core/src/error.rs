use thiserror::Error;

/// Errors raised while configuring or running a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    /// A scenario, cost model, or call argument is invalid.
    #[error("configuration error: {0}")]
    Config(String),

    /// The simulated application or runtime reached an impossible state.
    #[error("runtime logic error: {0}")]
    Logic(String),

    /// The event-count watchdog fired.
    #[error("livelock: {fired} events fired without the queue draining (most active entity: {entity})")]
    Livelock { fired: u64, entity: String },

    /// The event queue drained while simulated work was still blocked.
    #[error("deadlock: {0}")]
    Deadlock(String),

    /// A NaN or infinity appeared in block data.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The simulated grid disagrees with the serial reference.
    #[error("oracle mismatch: {0}")]
    OracleMismatch(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl SimError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        SimError::Config(msg.into())
    }

    pub(crate) fn logic(msg: impl Into<String>) -> Self {
        SimError::Logic(msg.into())
    }

    /// Process exit status for this error: 1 for invalid input, 3 for an
    /// oracle mismatch, 2 for everything that went wrong while simulating.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 1,
            SimError::OracleMismatch(_) => 3,
            _ => 2,
        }
    }

    /// Prefix the message with some context, keeping the variant.
    pub fn context(self, ctx: &str) -> Self {
        match self {
            SimError::Config(m) => SimError::Config(format!("{ctx}: {m}")),
            SimError::Logic(m) => SimError::Logic(format!("{ctx}: {m}")),
            SimError::Livelock { fired, entity } => SimError::Livelock {
                fired,
                entity: format!("{entity} [{ctx}]"),
            },
            SimError::Deadlock(m) => SimError::Deadlock(format!("{ctx}: {m}")),
            SimError::Numerical(m) => SimError::Numerical(format!("{ctx}: {m}")),
            SimError::OracleMismatch(m) => SimError::OracleMismatch(format!("{ctx}: {m}")),
            SimError::Io(m) => SimError::Io(format!("{ctx}: {m}")),
        }
    }
}

impl From<std::io::Error> for SimError {
    fn from(e: std::io::Error) -> Self {
        SimError::Io(e.to_string())
    }
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
