//! Shared string normalization for aliases, questions and answers.

/// Lowercases, trims punctuation at token boundaries and splits on
/// whitespace. Tokens that are pure punctuation vanish.
pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|tok| tok.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|tok| !tok.is_empty())
        .collect()
}

/// Canonical form of an alias or answer string: normalized tokens joined
/// by a single space.
pub fn normalize(s: &str) -> String {
    tokenize(s).join(" ")
}

/// Human-readable tokens of a relationship symbol: its final dot-separated
/// segment with underscores mapped to spaces.
pub fn relation_words(symbol: &str) -> String {
    let last = symbol.rsplit('.').next().unwrap_or(symbol);
    normalize(&last.replace('_', " "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization() {
        assert_eq!(normalize("  Fires   Creek "), "fires creek");
        assert_eq!(normalize("Who is X?"), "who is x");
        assert_eq!(normalize("\"Paris,\" France!"), "paris france");
        assert_eq!(normalize("?!"), "");
        assert_eq!(normalize("o'brien"), "o'brien");
    }

    #[test]
    fn relation_symbol_words() {
        assert_eq!(relation_words("location.location.containedby"), "containedby");
        assert_eq!(relation_words("people.person.place_of_birth"), "place of birth");
        assert_eq!(relation_words("plain"), "plain");
    }
}
