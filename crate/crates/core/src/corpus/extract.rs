//! Heuristic C/C++ function scanner.
//!
//! Comments, string/char literals and preprocessor directives are blanked
//! out first (byte offsets preserved), then braces are matched on the masked
//! text. A `{` at file or namespace scope whose statement head looks like
//! `name(params) [qualifiers]` opens a function body.

use super::{ExtractWarning, FunctionRecord};

/// Functions found in one file plus any recoverable problems.
#[derive(Debug, Clone, Default)]
pub struct FileExtraction {
    pub records: Vec<FunctionRecord>,
    pub warnings: Vec<ExtractWarning>,
}

const NOT_A_NAME: &[&str] = &[
    "__attribute__",
    "__declspec",
    "alignas",
    "asm",
    "__asm__",
    "catch",
    "decltype",
    "defined",
    "do",
    "else",
    "for",
    "if",
    "noexcept",
    "return",
    "sizeof",
    "switch",
    "throw",
    "while",
];

enum Scope {
    /// File scope, `namespace x {` or `extern "C" {`.
    Transparent,
    Function {
        start: usize,
        open: usize,
        name: String,
        param_count: usize,
    },
    Opaque { open: usize },
}

enum Head {
    Transparent,
    Function {
        start: usize,
        name: String,
        name_span: (usize, usize),
        param_count: usize,
    },
    Other,
}

/// Extracts function definitions from one file's text.
///
/// Returned records carry `id = 0` and `label = 0`; ids are assigned once the
/// whole corpus is ordered.
pub fn extract_functions(file_text: &str, file_path: &str) -> FileExtraction {
    let masked = mask_source(file_text.as_bytes());
    let lines = LineIndex::new(file_text.as_bytes());
    let mut out = FileExtraction::default();
    let mut stack: Vec<Scope> = Vec::new();

    for (pos, &b) in masked.iter().enumerate() {
        match b {
            b'{' => {
                let transparent = stack.iter().all(|s| matches!(s, Scope::Transparent));
                if !transparent {
                    stack.push(Scope::Opaque { open: pos });
                    continue;
                }
                let head_start = masked[..pos]
                    .iter()
                    .rposition(|&c| c == b';' || c == b'{' || c == b'}')
                    .map_or(0, |p| p + 1);
                match classify_head(&masked, head_start, pos) {
                    Head::Transparent => stack.push(Scope::Transparent),
                    Head::Function {
                        start,
                        name,
                        param_count,
                        ..
                    } => stack.push(Scope::Function {
                        start,
                        open: pos,
                        name,
                        param_count,
                    }),
                    Head::Other => stack.push(Scope::Opaque { open: pos }),
                }
            }
            b'}' => match stack.pop() {
                Some(Scope::Function {
                    start,
                    name,
                    param_count,
                    ..
                }) => {
                    out.records.push(FunctionRecord {
                        id: 0,
                        name,
                        file_path: file_path.to_string(),
                        line_start: lines.line_of(start),
                        line_end: lines.line_of(pos),
                        body: file_text[start..=pos].to_string(),
                        param_count,
                        label: 0,
                    });
                }
                Some(_) => {}
                None => out.warnings.push(ExtractWarning {
                    file_path: file_path.to_string(),
                    line: lines.line_of(pos),
                    message: "unmatched closing brace ignored".to_string(),
                }),
            },
            _ => {}
        }
    }

    if let Some(first) = stack.iter().find(|s| !matches!(s, Scope::Transparent)) {
        let (open, what) = match first {
            Scope::Function { open, name, .. } => (*open, format!("function `{name}`")),
            Scope::Opaque { open } => (*open, "block".to_string()),
            Scope::Transparent => unreachable!(),
        };
        out.warnings.push(ExtractWarning {
            file_path: file_path.to_string(),
            line: lines.line_of(open),
            message: format!("unbalanced braces at end of file: {what} never closed; remainder skipped"),
        });
    }
    out
}

fn is_ident(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_'
}

fn classify_head(masked: &[u8], from: usize, brace: usize) -> Head {
    let head = &masked[from..brace];
    let Some(lead) = head.iter().position(|b| !b.is_ascii_whitespace()) else {
        return Head::Other;
    };
    let start = from + lead;
    let text = String::from_utf8_lossy(&head[lead..]);
    let first_word: String = text.bytes().take_while(|&b| is_ident(b)).map(char::from).collect();
    let has_paren = head.contains(&b'(');
    if first_word == "namespace"
        || (first_word == "inline" && text["inline".len()..].trim_start().starts_with("namespace"))
        || (first_word == "extern" && !has_paren)
    {
        return Head::Transparent;
    }
    if !has_paren {
        return Head::Other;
    }

    // Top-level paren groups of the head, as absolute (open, close) offsets.
    let mut groups = Vec::new();
    let mut depth = 0usize;
    let mut open = 0usize;
    for i in start..brace {
        match masked[i] {
            b'(' => {
                if depth == 0 {
                    open = i;
                }
                depth += 1;
            }
            b')' if depth > 0 => {
                depth -= 1;
                if depth == 0 {
                    groups.push((open, i));
                }
            }
            _ => {}
        }
    }
    if depth != 0 || groups.is_empty() {
        return Head::Other;
    }

    // A lone ':' after a parameter list starts a constructor initializer list.
    let mut cutoff = brace;
    'scan: for &(_, close) in &groups {
        let mut i = close + 1;
        let mut d = 0i32;
        while i < brace {
            match masked[i] {
                b'(' => d += 1,
                b')' => d -= 1,
                b':' if d == 0 => {
                    let double = masked.get(i + 1) == Some(&b':') || masked[i - 1] == b':';
                    if !double {
                        cutoff = i;
                        break 'scan;
                    }
                    i += 1;
                }
                _ => {}
            }
            i += 1;
        }
    }

    for &(open, close) in groups.iter().rev() {
        if open > cutoff {
            continue;
        }
        let Some((name, name_start)) = name_before(masked, start, open) else {
            continue;
        };
        let bare = name.rsplit("::").next().unwrap_or(&name);
        if NOT_A_NAME.contains(&bare) {
            continue;
        }
        if masked[start..open].iter().any(|&c| c == b'=') && !name.contains("operator") {
            return Head::Other;
        }
        return Head::Function {
            start,
            name,
            name_span: (name_start, trim_end(masked, name_start, open)),
            param_count: count_params(&masked[open + 1..close]),
        };
    }
    Head::Other
}

fn trim_end(masked: &[u8], floor: usize, mut end: usize) -> usize {
    while end > floor && masked[end - 1].is_ascii_whitespace() {
        end -= 1;
    }
    end
}

/// Byte span of the declarator name in a function body's signature, if the
/// body starts with a recognizable definition.
pub(crate) fn signature_name_span(body: &str) -> Option<(usize, usize)> {
    let masked = mask_source(body.as_bytes());
    let brace = masked.iter().position(|&b| b == b'{')?;
    match classify_head(&masked, 0, brace) {
        Head::Function { name_span, .. } => Some(name_span),
        _ => None,
    }
}

/// Reads the (possibly qualified, possibly templated) name ending right before
/// `paren`, returning it normalized together with its start offset.
fn name_before(masked: &[u8], floor: usize, paren: usize) -> Option<(String, usize)> {
    let mut i = paren;
    while i > floor && masked[i - 1].is_ascii_whitespace() {
        i -= 1;
    }
    let end = i;

    // operator==, operator[] and friends
    let mut j = i;
    while j > floor && b"=!<>+-*/%&|^~[],".contains(&masked[j - 1]) {
        j -= 1;
    }
    if j < i {
        let mut k = j;
        while k > floor && masked[k - 1].is_ascii_whitespace() {
            k -= 1;
        }
        if k >= floor + 8 && &masked[k - 8..k] == b"operator" {
            i = k;
        } else if masked[i - 1] != b'>' {
            return None;
        }
    }

    loop {
        if i == floor {
            break;
        }
        let c = masked[i - 1];
        if is_ident(c) || c == b':' || c == b'~' {
            i -= 1;
        } else if c == b'>' {
            let mut depth = 0i32;
            let mut k = i;
            while k > floor {
                k -= 1;
                match masked[k] {
                    b'>' => depth += 1,
                    b'<' => {
                        depth -= 1;
                        if depth == 0 {
                            break;
                        }
                    }
                    b';' | b'{' | b'}' | b'(' | b')' => return None,
                    _ => {}
                }
            }
            if depth != 0 {
                return None;
            }
            i = k;
        } else {
            break;
        }
    }
    let raw = &masked[i..end];
    if !raw.iter().any(|&c| c.is_ascii_alphabetic() || c == b'_') {
        return None;
    }
    Some((normalize_name(&String::from_utf8_lossy(raw)), i))
}

/// Drops whitespace and replaces commas inside template brackets with tabs so
/// a templated qualified name stays a single comma-free unit.
pub(crate) fn normalize_name(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut angle = 0i32;
    for c in raw.chars() {
        match c {
            '<' => {
                angle += 1;
                out.push(c);
            }
            '>' => {
                angle -= 1;
                out.push(c);
            }
            ',' if angle > 0 => out.push('\t'),
            c if c.is_whitespace() => {}
            c => out.push(c),
        }
    }
    out.trim_start_matches("::").to_string()
}

/// Top-level commas plus one; `()` and `(void)` count zero.
fn count_params(params: &[u8]) -> usize {
    let text = String::from_utf8_lossy(params);
    let trimmed = text.trim();
    if trimmed.is_empty() || trimmed == "void" {
        return 0;
    }
    let mut depth = 0i32;
    let mut angle = 0i32;
    let mut commas = 0;
    for b in trimmed.bytes() {
        match b {
            b'(' | b'[' | b'{' => depth += 1,
            b')' | b']' | b'}' => depth -= 1,
            b'<' => angle += 1,
            b'>' if angle > 0 => angle -= 1,
            b',' if depth == 0 && angle == 0 => commas += 1,
            _ => {}
        }
    }
    commas + 1
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum State {
    Code,
    LineComment,
    BlockComment,
    Str,
    Char,
    Directive,
}

/// Blanks comments, literal contents and preprocessor directives with spaces.
///
/// Output has the same length as the input and keeps every newline, so byte
/// offsets and line numbers carry over to the original text.
pub(crate) fn mask_source(src: &[u8]) -> Vec<u8> {
    let mut out = src.to_vec();
    let mut state = State::Code;
    let mut line_blank = true;
    let mut i = 0;
    let blank = |out: &mut Vec<u8>, i: usize| {
        if out[i] != b'\n' {
            out[i] = b' ';
        }
    };
    while i < src.len() {
        let c = src[i];
        let next = src.get(i + 1).copied();
        match state {
            State::Code => {
                if c == b'/' && next == Some(b'/') {
                    state = State::LineComment;
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    i += 2;
                    continue;
                }
                if c == b'/' && next == Some(b'*') {
                    state = State::BlockComment;
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    i += 2;
                    continue;
                }
                if c == b'#' && line_blank {
                    state = State::Directive;
                    blank(&mut out, i);
                    i += 1;
                    continue;
                }
                if c == b'"' {
                    if let Some(end) = raw_string_end(src, i) {
                        for k in i + 1..end.saturating_sub(1) {
                            blank(&mut out, k);
                        }
                        i = end;
                        line_blank = false;
                        continue;
                    }
                    state = State::Str;
                } else if c == b'\'' && !(i > 0 && src[i - 1].is_ascii_hexdigit() && next.is_some_and(|n| n.is_ascii_hexdigit())) {
                    state = State::Char;
                }
                if c == b'\n' {
                    line_blank = true;
                } else if !c.is_ascii_whitespace() {
                    line_blank = false;
                }
            }
            State::LineComment => {
                if c == b'\n' {
                    state = State::Code;
                    line_blank = true;
                } else {
                    blank(&mut out, i);
                }
            }
            State::BlockComment => {
                if c == b'*' && next == Some(b'/') {
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    state = State::Code;
                    i += 2;
                    continue;
                }
                blank(&mut out, i);
            }
            State::Str | State::Char => {
                let close = if state == State::Str { b'"' } else { b'\'' };
                if c == b'\\' {
                    blank(&mut out, i);
                    if next.is_some() {
                        blank(&mut out, i + 1);
                    }
                    i += 2;
                    continue;
                }
                if c == close {
                    state = State::Code;
                } else if c == b'\n' {
                    // unterminated literal: recover at end of line
                    state = State::Code;
                    line_blank = true;
                } else {
                    blank(&mut out, i);
                }
            }
            State::Directive => {
                if c == b'\\' && next == Some(b'\n') {
                    blank(&mut out, i);
                    i += 2;
                    continue;
                }
                if c == b'/' && next == Some(b'*') {
                    state = State::BlockComment;
                    blank(&mut out, i);
                    blank(&mut out, i + 1);
                    i += 2;
                    continue;
                }
                if c == b'\n' {
                    state = State::Code;
                    line_blank = true;
                } else {
                    blank(&mut out, i);
                }
            }
        }
        i += 1;
    }
    out
}

/// If a C++11 raw string literal opens at `quote`, returns the index just past it.
fn raw_string_end(src: &[u8], quote: usize) -> Option<usize> {
    if quote == 0 || src[quote - 1] != b'R' {
        return None;
    }
    if quote >= 2 && is_ident(src[quote - 2]) && !matches!(src[quote - 2], b'L' | b'u' | b'U' | b'8') {
        return None;
    }
    let paren = quote + 1 + src[quote + 1..].iter().position(|&b| b == b'(')?;
    let delim = &src[quote + 1..paren];
    if delim.len() > 16 || delim.iter().any(|&b| b.is_ascii_whitespace() || b == b'\\') {
        return None;
    }
    let mut closing = Vec::with_capacity(delim.len() + 2);
    closing.push(b')');
    closing.extend_from_slice(delim);
    closing.push(b'"');
    let body = &src[paren + 1..];
    let at = body.windows(closing.len()).position(|w| w == closing.as_slice())?;
    Some(paren + 1 + at + closing.len())
}

struct LineIndex {
    starts: Vec<usize>,
}

impl LineIndex {
    fn new(src: &[u8]) -> Self {
        let mut starts = vec![0];
        starts.extend(src.iter().enumerate().filter(|(_, &b)| b == b'\n').map(|(i, _)| i + 1));
        LineIndex { starts }
    }

    /// 1-based line containing byte `pos`.
    fn line_of(&self, pos: usize) -> usize {
        self.starts.partition_point(|&s| s <= pos)
    }
}
