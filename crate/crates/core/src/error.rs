use std::fmt;

/// Pipeline stage that produced an error, used to tag propagated failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Detection,
    DomainClassification,
    EntityTracking,
    Ranking,
    Generation,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Detection => "detection",
            Stage::DomainClassification => "domain",
            Stage::EntityTracking => "entity",
            Stage::Ranking => "ranking",
            Stage::Generation => "generation",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("parse error at {path}: {message}")]
    Parse { path: String, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("lookup error: {0}")]
    Lookup(String),

    #[error("alignment error: {left} vs {right} elements")]
    Alignment { left: usize, right: usize },

    #[error("dialogue context is empty")]
    EmptyContext,

    #[error("candidate list is empty")]
    EmptyCandidates,

    #[error("validation set needs at least one positive and one negative label")]
    DegenerateValidation,

    #[error("degenerate training data: {0}")]
    DegenerateTraining(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("knowledge base has no '{0}' domain")]
    MissingDomain(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),

    #[error("generator unavailable: {0}")]
    GeneratorUnavailable(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at(self, stage: Stage) -> Error {
        match self {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }

    /// Innermost error, skipping stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Error::Stage { stage, .. } => Some(*stage),
            _ => None,
        }
    }

    /// True when the failure was caused by bad user input rather than an
    /// internal fault. The CLI maps this onto exit code 2.
    pub fn is_user_error(&self) -> bool {
        !matches!(
            self.root(),
            Error::ScorerUnavailable(_) | Error::GeneratorUnavailable(_) | Error::Protocol(_)
        )
    }

    pub(crate) fn parse(path: impl Into<String>, message: impl fmt::Display) -> Error {
        Error::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Deserialize JSON from a byte stream, reporting the path of the first
/// offending element on failure.
pub(crate) fn from_json_reader<T, R>(reader: R) -> Result<T>
where
    T: serde::de::DeserializeOwned,
    R: std::io::Read,
{
    let mut de = serde_json::Deserializer::from_reader(reader);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::parse(path, e.into_inner())
    })?;
    de.end().map_err(|e| Error::parse(".", e))?;
    Ok(value)
}
