use std::sync::OnceLock;

use regex::Regex;

const PARAGRAPH: char = '\u{2029}';

fn hidden_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)<script\b.*?</script\s*>|<style\b.*?</style\s*>|<!--.*?-->").unwrap()
    })
}

fn block_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)</?(?:p|div|br|li|ul|ol|h[1-6]|tr|table|section|article|header|footer|blockquote|pre)\b[^>]*>",
        )
        .unwrap()
    })
}

fn tag_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"<[^>]*>").unwrap())
}

/// Converts markup to plain text: drops script and style regions, strips tags,
/// decodes the five standard entities and collapses whitespace. Block-level
/// elements become paragraph breaks (blank lines).
pub fn clean_markup(raw: &str) -> String {
    let text = hidden_re().replace_all(raw, " ");
    let text = block_re().replace_all(&text, PARAGRAPH.to_string());
    let text = tag_re().replace_all(&text, "");
    let text = text
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&apos;", "'")
        .replace("&amp;", "&");
    // Blank lines in the source already separate paragraphs.
    let text = text.replace("\r\n", "\n");
    let text = text
        .split("\n\n")
        .collect::<Vec<_>>()
        .join(&PARAGRAPH.to_string());
    text.split(PARAGRAPH)
        .map(|p| p.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}
