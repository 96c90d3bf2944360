//! Lexical comment/code line classification.
//!
//! A non-blank line is a comment line when its first non-blank token opens a
//! comment in the language's syntax, or when it lies inside an open block
//! comment. Everything else that is non-blank is code.

use crate::model::LanguageName;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineKind {
    Blank,
    Comment,
    Code,
}

struct Syntax {
    line: &'static [&'static str],
    /// `(open, close, nests)`
    block: &'static [(&'static str, &'static str, bool)],
    /// Quote characters that delimit string literals.
    quotes: &'static [char],
}

fn syntax(lang: &LanguageName) -> Syntax {
    match lang {
        LanguageName::Python | LanguageName::R | LanguageName::Bash => Syntax {
            line: &["#"],
            block: &[],
            quotes: &['"', '\''],
        },
        LanguageName::Cpp | LanguageName::Java => Syntax {
            line: &["//"],
            block: &[("/*", "*/", false)],
            quotes: &['"', '\''],
        },
        LanguageName::D => Syntax {
            line: &["//"],
            block: &[("/*", "*/", false), ("/+", "+/", true)],
            quotes: &['"', '\'', '`'],
        },
        LanguageName::Racket => Syntax {
            line: &[";", "#;"],
            block: &[("#|", "|#", true)],
            quotes: &['"'],
        },
        LanguageName::Other(_) => Syntax {
            line: &["#", "//"],
            block: &[("/*", "*/", false)],
            quotes: &['"', '\''],
        },
    }
}

/// Block-comment scanning state carried across lines.
#[derive(Default)]
struct BlockState {
    /// Index into `Syntax::block` of the open comment and its nesting depth.
    open: Option<(usize, usize)>,
}

impl BlockState {
    fn scan(&mut self, syn: &Syntax, line: &str) {
        let bytes = line.as_bytes();
        let mut i = 0;
        let mut quote: Option<u8> = None;
        while i < bytes.len() {
            let rest = &line[i..];
            if let Some((idx, depth)) = self.open {
                let (open, close, nests) = syn.block[idx];
                if rest.starts_with(close) {
                    self.open = if depth > 1 { Some((idx, depth - 1)) } else { None };
                    i += close.len();
                    continue;
                }
                if nests && rest.starts_with(open) {
                    self.open = Some((idx, depth + 1));
                    i += open.len();
                    continue;
                }
            } else if let Some(q) = quote {
                if bytes[i] == b'\\' {
                    i += 1;
                    i += line[i..].chars().next().map_or(0, char::len_utf8);
                    continue;
                }
                if bytes[i] == q {
                    quote = None;
                }
            } else {
                if syn.line.iter().any(|m| rest.starts_with(m)) {
                    return;
                }
                if let Some(idx) = syn.block.iter().position(|(open, _, _)| rest.starts_with(open)) {
                    self.open = Some((idx, 1));
                    i += syn.block[idx].0.len();
                    continue;
                }
                if syn.quotes.iter().any(|&c| c as u32 == bytes[i] as u32) {
                    quote = Some(bytes[i]);
                }
            }
            i += line[i..].chars().next().map_or(1, char::len_utf8);
        }
    }
}

/// Classifies every line of `code` (split on `\n`).
pub fn classify_lines<'a>(lang: &LanguageName, code: &'a str) -> Vec<(LineKind, &'a str)> {
    let syn = syntax(lang);
    let mut state = BlockState::default();
    code.lines()
        .map(|line| {
            let trimmed = line.trim_start();
            let kind = if trimmed.is_empty() {
                LineKind::Blank
            } else if state.open.is_some()
                || syn.line.iter().any(|m| trimmed.starts_with(m))
                || syn.block.iter().any(|(open, _, _)| trimmed.starts_with(open))
            {
                LineKind::Comment
            } else {
                LineKind::Code
            };
            state.scan(&syn, line);
            (kind, line)
        })
        .collect()
}

/// The prose carried by a comment line, with comment delimiters removed.
pub fn comment_text(lang: &LanguageName, line: &str) -> String {
    let syn = syntax(lang);
    let mut text = line.trim();
    loop {
        let before = text;
        for (open, close, _) in syn.block {
            text = text.strip_prefix(open).unwrap_or(text);
            text = text.strip_prefix(close).unwrap_or(text);
            text = text.strip_suffix(close).unwrap_or(text);
        }
        for marker in syn.line {
            while let Some(rest) = text.strip_prefix(marker) {
                text = rest;
            }
        }
        // Continuation stars of `/** ... */` style blocks.
        if !syn.block.is_empty() {
            text = text.trim_start_matches(['*', '+']);
        }
        text = text.trim();
        if text == before {
            break;
        }
    }
    text.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinds(lang: LanguageName, code: &str) -> Vec<LineKind> {
        classify_lines(&lang, code).into_iter().map(|(k, _)| k).collect()
    }

    use LineKind::*;

    #[test]
    fn python_hash_comments() {
        let code = "# add\nx = 1  # trailing\n\n    # indented\ns = '# not a comment'";
        assert_eq!(kinds(LanguageName::Python, code), vec![Comment, Code, Blank, Comment, Code]);
    }

    #[test]
    fn cpp_block_comment_lines_all_count() {
        let code = "/* header\n * more\n */\nint x = 0; /* opens\nstill comment */\nreturn x;";
        assert_eq!(
            kinds(LanguageName::Cpp, code),
            vec![Comment, Comment, Comment, Code, Comment, Code]
        );
    }

    #[test]
    fn block_opener_inside_string_is_ignored() {
        let code = "String s = \"/*\";\nint y = 1;";
        assert_eq!(kinds(LanguageName::Java, code), vec![Code, Code]);
    }

    #[test]
    fn racket_nested_block() {
        let code = "#| outer\n#| inner |#\nstill |#\n(define x 1) ; tail\n;; doc";
        assert_eq!(
            kinds(LanguageName::Racket, code),
            vec![Comment, Comment, Comment, Code, Comment]
        );
    }

    #[test]
    fn d_nesting_plus_comments() {
        let code = "/+ a /+ b +/\nc +/\nvoid main() {}";
        assert_eq!(kinds(LanguageName::D, code), vec![Comment, Comment, Code]);
    }

    #[test]
    fn comment_text_strips_markers() {
        assert_eq!(comment_text(&LanguageName::Python, "   ## Step 1: read"), "Step 1: read");
        assert_eq!(comment_text(&LanguageName::Java, " * Loop over items */"), "Loop over items");
        assert_eq!(comment_text(&LanguageName::Cpp, "/** Sum values */"), "Sum values");
        assert_eq!(comment_text(&LanguageName::Racket, ";;; helper"), "helper");
    }
}
