//! Fenced code block extraction from model responses.

use crate::model::LanguageName;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeBlock {
    /// First word of the info string, lowercased; empty when absent.
    pub language_hint: String,
    pub text: String,
}

struct Fence {
    marker: char,
    len: usize,
    indent: usize,
}

fn fence_open(line: &str) -> Option<(Fence, &str)> {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return None;
    }
    let rest = &line[indent..];
    let marker = rest.chars().next().filter(|c| *c == '`' || *c == '~')?;
    let len = rest.len() - rest.trim_start_matches(marker).len();
    if len < 3 {
        return None;
    }
    let info = rest[len..].trim();
    if marker == '`' && info.contains('`') {
        return None;
    }
    Some((Fence { marker, len, indent }, info))
}

fn closes(fence: &Fence, line: &str) -> bool {
    let trimmed = line.trim_start_matches(' ');
    if line.len() - trimmed.len() > 3 {
        return false;
    }
    let run = trimmed.len() - trimmed.trim_start_matches(fence.marker).len();
    run >= fence.len && trimmed[run..].trim().is_empty()
}

/// All fenced blocks in document order. An unterminated final block (as in a
/// response cut off at the token limit) is returned as-is.
pub fn extract_code_blocks(raw: &str) -> Vec<CodeBlock> {
    let mut blocks = Vec::new();
    let mut open: Option<(Fence, String, Vec<&str>)> = None;
    for line in raw.lines() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        match open.take() {
            None => {
                if let Some((fence, info)) = fence_open(line) {
                    let hint = info
                        .split_whitespace()
                        .next()
                        .unwrap_or("")
                        .trim_matches(|c| matches!(c, '{' | '}' | '.'))
                        .to_ascii_lowercase();
                    open = Some((fence, hint, Vec::new()));
                }
            }
            Some((fence, hint, mut lines)) => {
                if closes(&fence, line) {
                    blocks.push(CodeBlock { language_hint: hint, text: lines.join("\n") });
                } else {
                    let strip = line.len() - line.trim_start_matches(' ').len();
                    lines.push(&line[strip.min(fence.indent)..]);
                    open = Some((fence, hint, lines));
                }
            }
        }
    }
    if let Some((_, hint, lines)) = open {
        blocks.push(CodeBlock { language_hint: hint, text: lines.join("\n") });
    }
    blocks
}

/// Program text to use from a response: the blocks tagged with `language` if
/// any are, otherwise every block; concatenated in order. `None` when no
/// block carries any non-blank text.
pub fn select_code(blocks: &[CodeBlock], language: &LanguageName) -> Option<String> {
    let tagged: Vec<&CodeBlock> = blocks.iter().filter(|b| language.matches_fence(&b.language_hint)).collect();
    let chosen: Vec<&CodeBlock> = if tagged.is_empty() { blocks.iter().collect() } else { tagged };
    let code = chosen
        .iter()
        .map(|b| b.text.as_str())
        .filter(|t| !t.trim().is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    (!code.trim().is_empty()).then_some(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block() {
        let blocks = extract_code_blocks("Here:\n```python\nx = 1\n```\nDone.");
        assert_eq!(blocks, vec![CodeBlock { language_hint: "python".into(), text: "x = 1".into() }]);
    }

    #[test]
    fn order_is_preserved() {
        let raw = "```\nA\n```\ntext\n~~~racket\nB\n~~~";
        let got: Vec<_> = extract_code_blocks(raw).into_iter().map(|b| (b.language_hint, b.text)).collect();
        assert_eq!(got, vec![("".into(), "A".into()), ("racket".into(), "B".into())]);
    }

    #[test]
    fn no_fence() {
        assert!(extract_code_blocks("Just prose, `inline` only.").is_empty());
    }

    #[test]
    fn longer_fence_holds_shorter_one() {
        let raw = "````md\n```python\nx\n```\n````";
        let blocks = extract_code_blocks(raw);
        assert_eq!(blocks.len(), 1);
        assert_eq!(blocks[0].text, "```python\nx\n```");
    }

    #[test]
    fn unterminated_block_is_kept() {
        let blocks = extract_code_blocks("```racket\n(define (f x)\n  (+ x 1)");
        assert_eq!(blocks[0].text, "(define (f x)\n  (+ x 1)");
    }

    #[test]
    fn indented_fence_content_is_dedented() {
        let blocks = extract_code_blocks("  ```r\n  x <- 1\n    y <- 2\n  ```");
        assert_eq!(blocks[0].text, "x <- 1\n  y <- 2");
    }

    #[test]
    fn select_prefers_tagged_blocks() {
        let raw = "```python\nprint(1)\n```\n```racket\n(display 1)\n```\n```rkt\n(newline)\n```";
        let blocks = extract_code_blocks(raw);
        assert_eq!(select_code(&blocks, &LanguageName::Racket).unwrap(), "(display 1)\n(newline)");
        assert_eq!(select_code(&blocks, &LanguageName::R).unwrap(), "print(1)\n(display 1)\n(newline)");
        assert_eq!(select_code(&[], &LanguageName::R), None);
    }
}
