use alloc::string::String;

/// Errors raised by the numeric, pattern and builder layers.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    /// Operand shapes do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// A value that must stay finite was NaN or infinite.
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    /// Every position of a softmax row was masked out.
    #[error("row {0} has no unmasked positions")]
    DegenerateRow(usize),
    /// Pattern parameters violate their invariants.
    #[error("invalid attention pattern: {0}")]
    Pattern(String),
    /// The example cannot be built for this task.
    #[error("ineligible example: {0}")]
    Ineligible(Reason),
}

/// Why a candidate page, section or image produced no example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reason {
    /// URL contains `list_of`.
    ListHeavy,
    MissingDescription,
    TooFewContentSections,
    /// Section 0, usually the page description.
    Root,
    TableOrList,
    /// Fewer than five sentences.
    TooShort,
    NotInQualitySet,
    /// Image type other than JPEG or PNG.
    Mime,
    /// Reference description under three words.
    ShortReference,
    OutOfRange,
    /// Target text would appear verbatim among the inputs.
    TargetLeak,
    ParseError,
    DuplicateUrl,
}

impl Reason {
    /// Stable snake_case code used in reports.
    pub fn code(self) -> &'static str {
        match self {
            Reason::ListHeavy => "list_heavy",
            Reason::MissingDescription => "missing_description",
            Reason::TooFewContentSections => "too_few_content_sections",
            Reason::Root => "root",
            Reason::TableOrList => "table_or_list",
            Reason::TooShort => "too_short",
            Reason::NotInQualitySet => "not_in_quality_set",
            Reason::Mime => "mime",
            Reason::ShortReference => "short_reference",
            Reason::OutOfRange => "out_of_range",
            Reason::TargetLeak => "target_leak",
            Reason::ParseError => "parse_error",
            Reason::DuplicateUrl => "duplicate_url",
        }
    }
}

impl core::fmt::Display for Reason {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.code())
    }
}

/// Shorthand for results carrying [`Error`].
pub type Result<T> = core::result::Result<T, Error>;
