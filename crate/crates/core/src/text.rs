//! Shared text folding used for names, countries and program titles.

use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Case-folds, strips diacritics, maps `&` to `and` and replaces every
/// non-alphanumeric run with a single space.
pub fn fold(input: &str) -> String {
    let mut out = String::with_capacity(input.len());
    let mut pending_space = false;
    for ch in input.nfd().filter(|c| !is_combining_mark(*c)) {
        if ch == '&' {
            push_word(&mut out, "and", &mut pending_space);
            pending_space = true;
            continue;
        }
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else if ch == '\'' || ch == '\u{2019}' {
            // apostrophes join: "king's" -> "kings"
        } else {
            pending_space = true;
        }
    }
    out
}

fn push_word(out: &mut String, word: &str, pending_space: &mut bool) {
    if !out.is_empty() {
        out.push(' ');
    }
    out.push_str(word);
    *pending_space = false;
}

/// Folded whitespace tokens.
pub fn tokens(input: &str) -> Vec<String> {
    fold(input).split(' ').filter(|t| !t.is_empty()).map(str::to_owned).collect()
}

/// Lowercase, hyphen-separated identifier.
pub fn slug(input: &str) -> String {
    fold(input).replace(' ', "-")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_case_diacritics_and_punctuation() {
        assert_eq!(fold("Université de Montréal"), "universite de montreal");
        assert_eq!(fold("  Texas A&M  University "), "texas a and m university");
        assert_eq!(fold("King's College, London!"), "kings college london");
        assert_eq!(fold("ETH Zürich - Swiss"), "eth zurich swiss");
        assert_eq!(fold(""), "");
        assert_eq!(fold("---"), "");
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("South Africa"), "south-africa");
        assert_eq!(slug("Côte d'Ivoire"), "cote-divoire");
    }
}
