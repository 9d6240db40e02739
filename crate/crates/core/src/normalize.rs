//! Answer normalization.
//!
//! Two answers are considered equal iff their normalized strings are
//! equal; there is no symbolic math equivalence. Normalization is a
//! deterministic, idempotent rewrite applied to every extracted candidate
//! answer and every gold answer, so comparisons stay consistent even when
//! the raw forms differ in spacing or LaTeX decoration.

use once_cell::sync::Lazy;
use regex::Regex;

use crate::types::Dataset;

static INT_DOT_ZERO: Lazy<Regex> = Lazy::new(|| Regex::new(r"^(-?\d+)\.0+$").unwrap());

/// Normalizes a raw answer for the given dataset kind.
///
/// MATH answers go through a rewrite loop (strip outer `$`, drop
/// `\left`/`\right`, remove whitespace, trim `.0` from integer-valued
/// decimals, lowercase purely textual answers) applied until fixpoint.
/// MathQA answers reduce to their single option letter, lowercased.
///
/// Returns `None` when the input reduces to nothing comparable.
pub fn normalize_answer(raw: &str, dataset: Dataset) -> Option<String> {
    match dataset {
        Dataset::Math => normalize_math(raw),
        Dataset::MathQa => normalize_mathqa(raw),
    }
}

fn normalize_math(raw: &str) -> Option<String> {
    let mut current = raw.to_string();
    // Every rule either shrinks the string or lowercases it, so this
    // terminates.
    loop {
        let next = rewrite_pass(&current);
        if next == current {
            break;
        }
        current = next;
    }
    if current.is_empty() {
        None
    } else {
        Some(current)
    }
}

fn rewrite_pass(s: &str) -> String {
    let mut out = s.trim().to_string();
    out = strip_outer_dollars(&out);
    out = strip_delimiter_sizing(&out);
    out = remove_whitespace(&out);
    out = strip_integer_decimal_zero(&out);
    lowercase_textual(&out)
}

fn strip_outer_dollars(s: &str) -> String {
    if s.len() >= 2 && s.starts_with('$') && s.ends_with('$') {
        s[1..s.len() - 1].to_string()
    } else {
        s.to_string()
    }
}

/// Removes `\left` and `\right` tokens. A following ASCII letter means the
/// backslash sequence is a longer command (e.g. `\rightarrow`) and is kept.
fn strip_delimiter_sizing(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    'outer: while !rest.is_empty() {
        for token in ["\\left", "\\right"] {
            if let Some(after) = rest.strip_prefix(token) {
                let next_is_letter = after
                    .chars()
                    .next()
                    .is_some_and(|c| c.is_ascii_alphabetic());
                if !next_is_letter {
                    rest = after;
                    continue 'outer;
                }
            }
        }
        let ch = rest.chars().next().unwrap();
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

fn remove_whitespace(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).collect()
}

fn strip_integer_decimal_zero(s: &str) -> String {
    match INT_DOT_ZERO.captures(s) {
        Some(caps) => caps[1].to_string(),
        None => s.to_string(),
    }
}

fn lowercase_textual(s: &str) -> String {
    if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphabetic()) {
        s.to_ascii_lowercase()
    } else {
        s.to_string()
    }
}

fn normalize_mathqa(raw: &str) -> Option<String> {
    let letters: Vec<char> = raw
        .chars()
        .filter(|c| c.is_ascii_alphabetic())
        .map(|c| c.to_ascii_lowercase())
        .collect();
    match letters.as_slice() {
        [letter @ 'a'..='e'] => Some(letter.to_string()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boxed_content_is_already_normal() {
        assert_eq!(normalize_answer("402", Dataset::Math).unwrap(), "402");
    }

    #[test]
    fn mathqa_keeps_the_single_letter() {
        assert_eq!(normalize_answer("  A  ", Dataset::MathQa).unwrap(), "a");
        assert_eq!(normalize_answer("(b)", Dataset::MathQa).unwrap(), "b");
        assert_eq!(normalize_answer("f", Dataset::MathQa), None);
        assert_eq!(normalize_answer("ab", Dataset::MathQa), None);
        assert_eq!(normalize_answer("12", Dataset::MathQa), None);
    }

    #[test]
    fn strips_delimiter_sizing_and_whitespace() {
        assert_eq!(
            normalize_answer("\\left( 3, \\frac{\\pi}{2} \\right)", Dataset::Math).unwrap(),
            "(3,\\frac{\\pi}{2})"
        );
    }

    #[test]
    fn keeps_longer_backslash_commands() {
        assert_eq!(
            normalize_answer("x \\rightarrow 2", Dataset::Math).unwrap(),
            "x\\rightarrow2"
        );
    }

    #[test]
    fn strips_outer_math_mode_dollars() {
        assert_eq!(normalize_answer("$402$", Dataset::Math).unwrap(), "402");
        assert_eq!(normalize_answer("$$402$$", Dataset::Math).unwrap(), "402");
        // An escaped dollar is content, not math-mode markup.
        assert_eq!(normalize_answer("\\$5", Dataset::Math).unwrap(), "\\$5");
    }

    #[test]
    fn trims_integer_valued_decimals() {
        assert_eq!(normalize_answer("402.0", Dataset::Math).unwrap(), "402");
        assert_eq!(normalize_answer("-7.000", Dataset::Math).unwrap(), "-7");
        assert_eq!(normalize_answer("402.50", Dataset::Math).unwrap(), "402.50");
        assert_eq!(normalize_answer("0.5", Dataset::Math).unwrap(), "0.5");
    }

    #[test]
    fn lowercases_textual_answers() {
        assert_eq!(normalize_answer("East", Dataset::Math).unwrap(), "east");
        assert_eq!(
            normalize_answer("Two Apples", Dataset::Math).unwrap(),
            "twoapples"
        );
        // Mixed content is left alone.
        assert_eq!(normalize_answer("3x", Dataset::Math).unwrap(), "3x");
    }

    #[test]
    fn empty_reduction_is_none() {
        assert_eq!(normalize_answer("   ", Dataset::Math), None);
        assert_eq!(normalize_answer("$ $", Dataset::Math), None);
        assert_eq!(normalize_answer("\\left \\right", Dataset::Math), None);
    }

    // Independent reference normalizer: applies each rewrite rule to its
    // own fixpoint, looping over the rule list until nothing changes.
    // Deliberately structured differently from the production pass.
    fn oracle_normalize_math(raw: &str) -> Option<String> {
        type Rule = fn(&str) -> String;
        let rules: [Rule; 6] = [
            |s| s.trim().to_string(),
            strip_outer_dollars,
            strip_delimiter_sizing,
            remove_whitespace,
            strip_integer_decimal_zero,
            lowercase_textual,
        ];
        let mut current = raw.to_string();
        loop {
            let before = current.clone();
            for rule in rules {
                loop {
                    let next = rule(&current);
                    if next == current {
                        break;
                    }
                    current = next;
                }
            }
            if current == before {
                break;
            }
        }
        if current.is_empty() {
            None
        } else {
            Some(current)
        }
    }

    fn corpus() -> Vec<String> {
        let mut raws: Vec<String> = vec![
            "402",
            "  402  ",
            "$402$",
            "$$402$$",
            "402.0",
            "402.000",
            "-7.0",
            "0.5",
            "1,000",
            "\\frac{1}{2}",
            "$\\frac{1}{2}$",
            "\\left( 3, \\frac{\\pi}{2} \\right)",
            "\\left[ 0, 1 \\right)",
            "\\left\\{ 1, 2 \\right\\}",
            "x \\rightarrow \\infty",
            "\\leftarrow",
            "East",
            "TWO",
            "two apples",
            "\\$5",
            "$ 5 $",
            "3x + 2",
            "\\sqrt{2}",
            "2 \\sqrt 3",
            "\\text{odd}",
            "(3, 5]",
            "\\lef t(42\\righ t)",
            "",
            "   ",
            "$",
            "$$",
            "10^{3}",
            "\\pi",
            "-\\frac{11}{2}",
            "90^\\circ",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        // Combinatorial padding to exceed 100 distinct raw strings.
        for core in ["7", "x+1", "\\frac{3}{4}", "\\left(1,2\\right)", "ANS"] {
            for (pre, post) in [
                ("", ""),
                (" ", " "),
                ("$", "$"),
                ("$ ", " $"),
                ("\\left(", "\\right)"),
                ("  $", "$\t"),
            ] {
                for pad in ["", ".0", " .0 "] {
                    raws.push(format!("{pre}{core}{pad}{post}"));
                }
            }
        }
        raws
    }

    #[test]
    fn matches_rule_fixpoint_oracle_over_corpus() {
        let raws = corpus();
        assert!(raws.len() >= 100, "corpus has {} entries", raws.len());
        for raw in &raws {
            assert_eq!(
                normalize_answer(raw, Dataset::Math),
                oracle_normalize_math(raw),
                "diverged on {raw:?}"
            );
        }
    }

    #[test]
    fn idempotent_over_corpus() {
        for raw in corpus() {
            if let Some(once) = normalize_answer(&raw, Dataset::Math) {
                assert_eq!(
                    normalize_answer(&once, Dataset::Math).as_deref(),
                    Some(once.as_str()),
                    "not idempotent on {raw:?}"
                );
            }
            if let Some(once) = normalize_answer(&raw, Dataset::MathQa) {
                assert_eq!(
                    normalize_answer(&once, Dataset::MathQa).as_deref(),
                    Some(once.as_str())
                );
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn idempotent_on_arbitrary_latexish_input(
                raw in r"[ \t$\\{}()a-zA-Z0-9.,^_+-]{0,40}"
            ) {
                if let Some(once) = normalize_answer(&raw, Dataset::Math) {
                    prop_assert_eq!(
                        normalize_answer(&once, Dataset::Math),
                        Some(once.clone())
                    );
                }
            }

            #[test]
            fn agrees_with_oracle_on_arbitrary_input(
                raw in r"[ \t$\\{}()a-zA-Z0-9.,^_+-]{0,40}"
            ) {
                prop_assert_eq!(
                    normalize_answer(&raw, Dataset::Math),
                    oracle_normalize_math(&raw)
                );
            }
        }
    }
}
