//! Source positions and front-end errors.

use std::fmt;

/// A byte range in the input, with the line and columns of its start.
/// Columns count characters from 1; `col_end` is exclusive and refers to
/// the start line (a span crossing lines ends at the line end).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub line: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl Span {
    pub fn new(text: &str, start: usize, end: usize) -> Span {
        let start = start.min(text.len());
        let end = end.clamp(start, text.len());
        let line_start = text[..start].rfind('\n').map_or(0, |i| i + 1);
        let line = text[..start].matches('\n').count() + 1;
        let col_start = text[line_start..start].chars().count() + 1;
        let line_end = text[start..].find('\n').map_or(text.len(), |i| start + i);
        let col_end = col_start + text[start..end.min(line_end)].chars().count();
        Span { start, end, line, col_start, col_end }
    }

    /// Smallest span covering both.
    pub fn join(self, other: Span) -> Span {
        let (a, b) = if self.start <= other.start { (self, other) } else { (other, self) };
        let same_line = a.line == b.line;
        Span {
            start: a.start,
            end: a.end.max(b.end),
            line: a.line,
            col_start: a.col_start,
            col_end: if same_line { a.col_end.max(b.col_end) } else { a.col_end },
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col_start)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FrontendError {
    #[error("{span}: syntax error: found {found}, expected {}", expected.join(", "))]
    Syntax { span: Span, found: String, expected: Vec<String> },
    #[error("{span}: {name} is already defined (first at {previous})")]
    Duplicate { span: Span, name: String, previous: Span },
    #[error("{span}: unknown setting {name} (known: duration, dt, max_dt, tol, zc_precision, scheme, scope_xy)")]
    UnknownSetting { span: Span, name: String },
    #[error("{span}: {message}")]
    Model { span: Span, message: String },
    #[error("{pointer}: {message}")]
    Json { pointer: String, message: String },
}

impl FrontendError {
    /// Position in the DSL text, when the error comes from DSL input.
    pub fn span(&self) -> Option<Span> {
        match self {
            FrontendError::Syntax { span, .. }
            | FrontendError::Duplicate { span, .. }
            | FrontendError::UnknownSetting { span, .. }
            | FrontendError::Model { span, .. } => Some(*span),
            FrontendError::Json { .. } => None,
        }
    }

    /// Multi-line rendering with the offending source line and a caret.
    pub fn render(&self, file: &str, text: &str) -> String {
        let Some(span) = self.span() else {
            return format!("{file}: {self}");
        };
        let line_text = text.lines().nth(span.line - 1).unwrap_or("");
        let width = span.col_end.saturating_sub(span.col_start).max(1);
        format!(
            "{file}:{self}\n  {line_text}\n  {}{}",
            " ".repeat(span.col_start - 1),
            "^".repeat(width)
        )
    }
}

pub type FrontResult<T> = std::result::Result<T, FrontendError>;
