//! Token generators standing in for a translation decoder.

use std::fmt;

use crate::error::{Error, Result};

/// What an agent sees when asked for the next token.
#[derive(Debug, Clone, Copy)]
pub struct AgentContext<'a> {
    pub frames_read: usize,
    pub num_frames: usize,
    pub units_read: usize,
    pub tokens: &'a [String],
    /// Features of the frames read so far, row-major, when the stream has them.
    pub features: Option<&'a [f32]>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AgentOutput {
    Token(String),
    End,
}

/// Produces target tokens on WRITE. Must be deterministic given its context.
pub trait Agent: Send {
    fn next_token(&mut self, ctx: &AgentContext<'_>) -> Result<AgentOutput>;

    /// Whether the agent reads acoustic features; the CLI skips loading them otherwise.
    fn wants_features(&self) -> bool {
        false
    }
}

/// Emits the reference verbatim, then END.
#[derive(Debug, Clone)]
pub struct OracleAgent {
    reference: Vec<String>,
    next: usize,
    ended: bool,
}

impl OracleAgent {
    pub fn new(reference: Vec<String>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::input("oracle agent needs a non-empty reference"));
        }
        Ok(OracleAgent {
            reference,
            next: 0,
            ended: false,
        })
    }
}

impl Agent for OracleAgent {
    fn next_token(&mut self, _ctx: &AgentContext<'_>) -> Result<AgentOutput> {
        if self.ended {
            return Err(Error::Agent("oracle agent called after END".into()));
        }
        match self.reference.get(self.next) {
            Some(tok) => {
                self.next += 1;
                Ok(AgentOutput::Token(tok.clone()))
            }
            None => {
                self.ended = true;
                Ok(AgentOutput::End)
            }
        }
    }
}

/// Emits reference token `i` only once `ceil(i / |ref| * |X|)` frames have
/// been read, otherwise a placeholder. Quality then grows with the amount of
/// source each token waited for.
#[derive(Debug, Clone)]
pub struct CoverageOracleAgent {
    reference: Vec<String>,
    num_frames: usize,
    placeholder: String,
    next: usize,
    ended: bool,
}

impl CoverageOracleAgent {
    pub fn new(reference: Vec<String>, num_frames: usize, placeholder: impl Into<String>) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::input("coverage oracle needs a non-empty reference"));
        }
        if num_frames == 0 {
            return Err(Error::input("coverage oracle needs at least one source frame"));
        }
        Ok(CoverageOracleAgent {
            reference,
            num_frames,
            placeholder: placeholder.into(),
            next: 0,
            ended: false,
        })
    }

    /// Frames required before target position `i` (1-based) is emitted correctly.
    pub fn required_frames(&self, position: usize) -> usize {
        (position * self.num_frames).div_ceil(self.reference.len())
    }
}

impl Agent for CoverageOracleAgent {
    fn next_token(&mut self, ctx: &AgentContext<'_>) -> Result<AgentOutput> {
        if self.ended {
            return Err(Error::Agent("coverage oracle called after END".into()));
        }
        if self.next == self.reference.len() {
            self.ended = true;
            return Ok(AgentOutput::End);
        }
        let position = self.next + 1;
        let token = if ctx.frames_read >= self.required_frames(position) {
            self.reference[self.next].clone()
        } else {
            self.placeholder.clone()
        };
        self.next += 1;
        Ok(AgentOutput::Token(token))
    }
}

/// Built-in agent selection; one agent instance is built per stream.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum AgentSpec {
    Oracle,
    Coverage { placeholder: String },
}

impl AgentSpec {
    pub const DEFAULT_PLACEHOLDER: &'static str = "<unk>";

    pub fn coverage() -> Self {
        AgentSpec::Coverage {
            placeholder: Self::DEFAULT_PLACEHOLDER.to_string(),
        }
    }

    /// Whether agents of this kind read acoustic features.
    pub fn wants_features(&self) -> bool {
        false
    }

    pub fn build(&self, reference: &[String], num_frames: usize) -> Result<Box<dyn Agent>> {
        Ok(match self {
            AgentSpec::Oracle => Box::new(OracleAgent::new(reference.to_vec())?),
            AgentSpec::Coverage { placeholder } => Box::new(CoverageOracleAgent::new(
                reference.to_vec(),
                num_frames,
                placeholder.clone(),
            )?),
        })
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentSpec::Oracle => f.write_str("oracle"),
            AgentSpec::Coverage { .. } => f.write_str("coverage"),
        }
    }
}
