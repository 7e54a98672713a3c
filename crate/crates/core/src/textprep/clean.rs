//! Character-level cleaning filters (digits, non-Arabic script, punctuation,
//! diacritics and tatweel).

const TATWEEL: char = '\u{0640}';

/// ASCII, Arabic-Indic and extended Arabic-Indic digits.
pub fn is_digit(c: char) -> bool {
    matches!(c, '0'..='9' | '\u{0660}'..='\u{0669}' | '\u{06F0}'..='\u{06F9}')
}

/// Arabic short vowels, tanween, shadda, sukun, the extended harakat block
/// and the superscript alef.
pub fn is_diacritic(c: char) -> bool {
    matches!(c, '\u{064B}'..='\u{065F}' | '\u{0670}')
}

/// Arabic-script letters. Tatweel sits inside the base block but is a
/// stylistic stretch, not a letter.
pub fn is_arabic_letter(c: char) -> bool {
    match c {
        TATWEEL => false,
        '\u{0621}'..='\u{064A}' | '\u{0671}'..='\u{06D3}' => true,
        _ => false,
    }
}

/// Arabic-specific punctuation plus quotation and bracket characters that
/// are not ASCII.
fn is_extra_punctuation(c: char) -> bool {
    matches!(
        c,
        '\u{060C}' // comma
            | '\u{061B}' // semicolon
            | '\u{061F}' // question mark
            | '\u{066A}' // percent
            | '\u{066B}' // decimal separator
            | '\u{066C}' // thousands separator
            | '\u{066D}' // five-pointed star
            | '\u{06D4}' // full stop
            | '\u{00AB}' | '\u{00BB}' // guillemets
            | '\u{2018}'..='\u{201F}' // curly quotes
            | '\u{2026}' // ellipsis
            | '\u{2013}' | '\u{2014}' // dashes
            | '\u{FD3E}' | '\u{FD3F}' // ornate parentheses
            | '\u{300C}'..='\u{300F}' // corner brackets
    )
}

pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation() || is_extra_punctuation(c)
}

pub fn remove_digits(text: &str) -> String {
    text.chars().filter(|&c| !is_digit(c)).collect()
}

/// Keeps Arabic letters, Arabic diacritics, tatweel and whitespace. The
/// marks survive so that [`normalize`] can strip them as its own step.
pub fn strip_non_arabic(text: &str) -> String {
    text.chars()
        .filter(|&c| is_arabic_letter(c) || is_diacritic(c) || c == TATWEEL || c.is_whitespace())
        .collect()
}

pub fn strip_punctuation(text: &str) -> String {
    text.chars().filter(|&c| !is_punctuation(c)).collect()
}

/// Removes diacritics and tatweel. Letter folding (alef variants, teh
/// marbuta, alef maqsura) is not performed.
pub fn normalize(text: &str) -> String {
    text.chars()
        .filter(|&c| !is_diacritic(c) && c != TATWEEL)
        .collect()
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_of_every_script_are_removed() {
        assert_eq!(remove_digits("طلبت 3 مرات"), "طلبت  مرات");
        assert_eq!(remove_digits(""), "");
        assert_eq!(remove_digits("٢٠٢٣ سنة"), " سنة");
        assert_eq!(remove_digits("۱۲۳abc"), "abc");
    }

    #[test]
    fn non_arabic_characters_are_dropped() {
        assert_eq!(strip_non_arabic("جميل 👍 nice"), "جميل  ");
        assert_eq!(strip_non_arabic("مرحبا"), "مرحبا");
        assert_eq!(strip_non_arabic("ok!"), "");
        // marks and tatweel are kept for normalization
        assert_eq!(strip_non_arabic("جمــيلٌ"), "جمــيلٌ");
    }

    #[test]
    fn punctuation_is_removed_but_whitespace_kept() {
        assert_eq!(strip_punctuation("جيد، جدا؟"), "جيد جدا");
        assert_eq!(strip_punctuation("جيد"), "جيد");
        assert_eq!(strip_punctuation("..."), "");
        assert_eq!(strip_punctuation("«رائع»؛ ٪"), "رائع ");
    }

    #[test]
    fn normalization_strips_marks_only() {
        assert_eq!(normalize("جمــــيل"), "جميل");
        assert_eq!(normalize("مَرْحَبًا"), "مرحبا");
        assert_eq!(normalize("مرحبا"), "مرحبا");
        // no alef or teh marbuta folding
        assert_eq!(normalize("أإآة"), "أإآة");
    }

    #[test]
    fn tokenize_splits_on_whitespace_runs() {
        assert_eq!(tokenize("الخدمة ممتازة"), vec!["الخدمة", "ممتازة"]);
        assert!(tokenize("  ").is_empty());
        assert_eq!(tokenize("جيد"), vec!["جيد"]);
        assert_eq!(tokenize("\tا \u{00A0}ب\n"), vec!["ا", "ب"]);
    }

    #[test]
    fn letter_class_excludes_tatweel_and_marks() {
        assert!(is_arabic_letter('ب'));
        assert!(is_arabic_letter('\u{06A9}'));
        assert!(!is_arabic_letter(TATWEEL));
        assert!(!is_arabic_letter('\u{064E}'));
        assert!(!is_arabic_letter('٣'));
    }
}
