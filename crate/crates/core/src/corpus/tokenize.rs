use std::fmt;
use std::str::FromStr;

/// How raw document text is split into unigram tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Tokenizer {
    /// Lowercase, then split on every maximal run of characters that are not
    /// letters, digits or `_`. Punctuation runs are discarded.
    #[default]
    UnicodeWords,
    /// Input is already tokenized: one token per whitespace-separated field,
    /// taken verbatim.
    Pretokenized,
}

impl Tokenizer {
    pub fn id(self) -> &'static str {
        match self {
            Tokenizer::UnicodeWords => "unicode-words",
            Tokenizer::Pretokenized => "pretok",
        }
    }

    /// Calls `emit` once per token of `text`, in order.
    pub fn for_each_token(self, text: &str, mut emit: impl FnMut(&str)) {
        match self {
            Tokenizer::UnicodeWords => {
                let lowered = text.to_lowercase();
                lowered
                    .split(|c: char| !(c.is_alphanumeric() || c == '_'))
                    .filter(|t| !t.is_empty())
                    .for_each(&mut emit);
            }
            Tokenizer::Pretokenized => text.split_whitespace().for_each(emit),
        }
    }

    pub fn tokenize(self, text: &str) -> Vec<String> {
        let mut out = Vec::new();
        self.for_each_token(text, |t| out.push(t.to_owned()));
        out
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Tokenizer {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "unicode-words" => Ok(Tokenizer::UnicodeWords),
            "pretok" => Ok(Tokenizer::Pretokenized),
            other => Err(format!(
                "unknown tokenizer `{other}` (expected `unicode-words` or `pretok`)"
            )),
        }
    }
}
