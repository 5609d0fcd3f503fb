//! `#UDIST v1` distribution files.
//!
//! ```text
//! #UDIST v1 name=<name> total=<u64> tokenizer=<id> seed=<u64>
//! <token>\t<count>
//! ...
//! ```
//!
//! Tokens are sorted by their bytes; tab, newline and backslash inside a token
//! are written as `\t`, `\n` and `\\`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use super::{check_name, CorpusError, TokenDistribution};

const MAGIC: &str = "#UDIST";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdistHeader {
    pub name: String,
    pub total: u64,
    pub tokenizer: String,
    pub seed: u64,
}

fn escape_token(token: &str, out: &mut String) {
    for c in token.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
}

fn unescape_token(raw: &str) -> Result<String, String> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some(other) => return Err(format!("unknown escape `\\{other}`")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// Writes `dist` in the UDIST format. The distribution must carry counts.
pub fn write_udist<W: Write>(
    mut out: W,
    dist: &TokenDistribution,
    tokenizer_id: &str,
    seed: u64,
) -> Result<(), CorpusError> {
    check_name(dist.name()).map_err(CorpusError::InvalidDistribution)?;
    check_name(tokenizer_id).map_err(CorpusError::InvalidDistribution)?;
    let (Some(counts), Some(total)) = (dist.counts(), dist.total()) else {
        return Err(CorpusError::InvalidDistribution(format!(
            "`{}` has no exact counts (mixtures are not serialized)",
            dist.name()
        )));
    };
    let mut text = format!(
        "{MAGIC} {VERSION} name={} total={total} tokenizer={tokenizer_id} seed={seed}\n",
        dist.name()
    );
    for (token, count) in counts {
        escape_token(token, &mut text);
        text.push('\t');
        text.push_str(&count.to_string());
        text.push('\n');
    }
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn parse_header(line: &str) -> Result<UdistHeader, String> {
    let fields: Vec<&str> = line.split(' ').collect();
    let [magic, version, name, total, tokenizer, seed] = fields.as_slice() else {
        return Err(format!("expected 6 header fields, found {}", fields.len()));
    };
    if *magic != MAGIC || *version != VERSION {
        return Err(format!("not a `{MAGIC} {VERSION}` file"));
    }
    let value = |field: &str, key: &str| -> Result<String, String> {
        field
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .map(str::to_owned)
            .ok_or_else(|| format!("expected `{key}=...`, found `{field}`"))
    };
    let number = |field: &str, key: &str| -> Result<u64, String> {
        value(field, key)?.parse().map_err(|e| format!("bad `{key}`: {e}"))
    };
    Ok(UdistHeader {
        name: value(name, "name")?,
        total: number(total, "total")?,
        tokenizer: value(tokenizer, "tokenizer")?,
        seed: number(seed, "seed")?,
    })
}

/// Reads a UDIST file, checking sort order, uniqueness and the header total.
pub fn read_udist<R: BufRead>(input: R) -> Result<(UdistHeader, TokenDistribution), CorpusError> {
    let malformed = |line: usize, reason: String| CorpusError::MalformedDistribution { line, reason };
    let mut lines = input.split(b'\n');
    let header = match lines.next() {
        Some(line) => {
            let bytes = line?;
            let text = String::from_utf8(bytes).map_err(|e| malformed(1, e.to_string()))?;
            parse_header(&text).map_err(|r| malformed(1, r))?
        }
        None => return Err(malformed(1, "empty file".into())),
    };

    let mut counts = BTreeMap::new();
    let mut previous: Option<String> = None;
    let mut sum = 0u64;
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let bytes = line?;
        let text = String::from_utf8(bytes).map_err(|e| malformed(line_no, e.to_string()))?;
        let (raw, count) = text
            .rsplit_once('\t')
            .ok_or_else(|| malformed(line_no, "missing tab separator".into()))?;
        let token = unescape_token(raw).map_err(|r| malformed(line_no, r))?;
        let count: u64 = count
            .parse()
            .map_err(|e| malformed(line_no, format!("bad count: {e}")))?;
        if count == 0 {
            return Err(malformed(line_no, "zero count".into()));
        }
        if previous.as_deref().is_some_and(|p| p >= token.as_str()) {
            return Err(malformed(line_no, "tokens not strictly ascending".into()));
        }
        sum = sum
            .checked_add(count)
            .ok_or_else(|| malformed(line_no, "total overflows u64".into()))?;
        previous = Some(token.clone());
        counts.insert(token, count);
    }
    if sum != header.total {
        return Err(malformed(
            1,
            format!("header total {} disagrees with counts {sum}", header.total),
        ));
    }
    let dist = TokenDistribution::from_counts(header.name.clone(), counts)?;
    Ok((header, dist))
}
