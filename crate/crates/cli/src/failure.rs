use std::fmt;

/// Machine-readable failure class, printed as `error[<category>]: ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Usage,
    Argument,
    MissingInput,
    Io,
    Numeric,
    /// Category reported by the library error.
    Library(&'static str),
}

impl Kind {
    pub fn as_str(self) -> &'static str {
        match self {
            Kind::Usage => "usage",
            Kind::Argument => "argument",
            Kind::MissingInput => "missing-input",
            Kind::Io => "io",
            Kind::Numeric => "numeric",
            Kind::Library(c) => c,
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Kind,
    pub message: String,
}

impl Failure {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        Failure {
            kind,
            message: message.into(),
        }
    }

    /// `error[category]: message` on a single line.
    pub fn line(&self) -> String {
        let flat: Vec<&str> = self.message.split_whitespace().collect();
        format!("error[{}]: {}", self.kind.as_str(), flat.join(" "))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<achords::Error> for Failure {
    fn from(e: achords::Error) -> Self {
        Failure::new(Kind::Library(e.category()), e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(Kind::Io, e.to_string())
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;
