//! Sentence preprocessing: lowercasing, punctuation removal, whitespace
//! tokenisation and a small rule-based lemmatizer.

const EXTRA_PUNCT: &[char] = &['‘', '“', '”', '–', '—', '…', '«', '»', '·'];
const APOSTROPHES: &[char] = &['\'', '’'];

/// Words the suffix rules must leave alone.
const KEEP: &[&str] = &[
    "always", "perhaps", "sometimes", "does", "was", "has", "is", "this", "its", "his", "yes",
    "less", "bus", "plus", "towards", "whereas", "news", "series", "called", "named", "priced",
    "rated", "located", "situated", "need", "feed", "speed", "bed", "red", "during", "bring",
    "thing", "king", "ring", "sing", "wing", "spring", "evening", "morning", "nothing",
    "something", "anything", "everything", "ceiling", "ding",
];

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || EXTRA_PUNCT.contains(&c)
}

fn is_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Suffix-rule lemmatizer.
///
/// Rules, first match wins:
/// * words of three letters or fewer, words in the keep list, and words
///   containing non-ASCII letters are unchanged;
/// * `-ies` -> `-y`; `-sses` -> `-ss`; `-xes`, `-ches`, `-shes`, `-zes` drop `-es`;
/// * `-s` is dropped unless the word ends in `-ss`, `-us`, `-is` or `-ous`;
/// * `-ing` and `-ed` are dropped when at least five letters remain; a
///   doubled final consonant left behind is undoubled.
pub fn lemmatize(word: &str) -> String {
    if word.len() <= 3 || KEEP.contains(&word) || !word.is_ascii() {
        return word.to_string();
    }
    if !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if stem.len() >= 2 {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = word.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    for suffix in ["xes", "ches", "shes", "zes"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            return format!("{stem}{}", &suffix[..suffix.len() - 2]);
        }
    }
    if word.ends_with('s') {
        if ["ss", "us", "is", "ous"].iter().any(|s| word.ends_with(s)) {
            return word.to_string();
        }
        return word[..word.len() - 1].to_string();
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            if stem.len() >= 5 && stem.bytes().any(is_vowel) {
                return undouble(stem);
            }
        }
    }
    word.to_string()
}

fn undouble(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2 && b[n - 1] == b[n - 2] && !is_vowel(b[n - 1]) && !matches!(b[n - 1], b'l' | b's' | b'z') {
        stem[..n - 1].to_string()
    } else {
        stem.to_string()
    }
}

/// Lowercases, strips punctuation (apostrophes join, everything else
/// separates), splits on whitespace and lemmatizes each token.
pub fn preprocess_text(raw: &str) -> Vec<String> {
    let cleaned: String = raw
        .to_lowercase()
        .chars()
        .filter(|c| !APOSTROPHES.contains(c))
        .map(|c| if is_punct(c) { ' ' } else { c })
        .collect();
    cleaned.split_whitespace().map(lemmatize).collect()
}
