//! Porter stemmer (the original 1980 algorithm), used by the METEOR stem
//! stage and CIDEr's n-gram normalization.
//!
//! Words containing non-ASCII-alphabetic characters are returned unchanged;
//! the rules are only meaningful for English.

fn is_vowel(word: &[u8], i: usize) -> bool {
    match word[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        // y preceded by a consonant acts as a vowel
        b'y' => i > 0 && !is_vowel(word, i - 1),
        _ => false,
    }
}

fn is_consonant(word: &[u8], i: usize) -> bool {
    !is_vowel(word, i)
}

/// The measure m of `stem`: number of vowel-consonant sequences, i.e. m in
/// the form [C](VC)^m[V].
fn measure(stem: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..stem.len() {
        let v = is_vowel(stem, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

fn contains_vowel(stem: &[u8]) -> bool {
    (0..stem.len()).any(|i| is_vowel(stem, i))
}

fn ends_double_consonant(stem: &[u8]) -> bool {
    let n = stem.len();
    n >= 2 && stem[n - 1] == stem[n - 2] && is_consonant(stem, n - 1)
}

/// *o: stem ends consonant-vowel-consonant where the final consonant is not
/// w, x or y.
fn ends_cvc(stem: &[u8]) -> bool {
    let n = stem.len();
    n >= 3
        && is_consonant(stem, n - 3)
        && is_vowel(stem, n - 2)
        && is_consonant(stem, n - 1)
        && !matches!(stem[n - 1], b'w' | b'x' | b'y')
}

fn ends_with(word: &[u8], suffix: &str) -> bool {
    word.len() >= suffix.len() && &word[word.len() - suffix.len()..] == suffix.as_bytes()
}

/// Apply the longest matching rule of `rules` to `word`. Each rule is
/// (suffix, replacement, condition on the stem). Once a suffix matches, the
/// step is done whether or not the condition allows the replacement.
fn apply_rules(word: &mut Vec<u8>, rules: &[(&str, &str, fn(&[u8]) -> bool)]) -> bool {
    let mut best: Option<&(&str, &str, fn(&[u8]) -> bool)> = None;
    for rule in rules {
        if ends_with(word, rule.0) && best.map_or(true, |b| rule.0.len() > b.0.len()) {
            best = Some(rule);
        }
    }
    if let Some((suffix, replacement, cond)) = best {
        let stem_len = word.len() - suffix.len();
        if cond(&word[..stem_len]) {
            word.truncate(stem_len);
            word.extend_from_slice(replacement.as_bytes());
            return true;
        }
    }
    false
}

fn m_gt_0(stem: &[u8]) -> bool {
    measure(stem) > 0
}

fn m_gt_1(stem: &[u8]) -> bool {
    measure(stem) > 1
}

fn always(_: &[u8]) -> bool {
    true
}

fn step_1a(word: &mut Vec<u8>) {
    apply_rules(
        word,
        &[
            ("sses", "ss", always),
            ("ies", "i", always),
            ("ss", "ss", always),
            ("s", "", always),
        ],
    );
}

fn step_1b(word: &mut Vec<u8>) {
    if ends_with(word, "eed") {
        let stem_len = word.len() - 3;
        if measure(&word[..stem_len]) > 0 {
            word.truncate(word.len() - 1);
        }
        return;
    }
    let fired = apply_rules(
        word,
        &[("ed", "", contains_vowel), ("ing", "", contains_vowel)],
    );
    if !fired {
        return;
    }
    if ends_with(word, "at") || ends_with(word, "bl") || ends_with(word, "iz") {
        word.push(b'e');
    } else if ends_double_consonant(word) && !matches!(word[word.len() - 1], b'l' | b's' | b'z') {
        word.truncate(word.len() - 1);
    } else if measure(word) == 1 && ends_cvc(word) {
        word.push(b'e');
    }
}

fn step_1c(word: &mut Vec<u8>) {
    if ends_with(word, "y") && contains_vowel(&word[..word.len() - 1]) {
        let n = word.len();
        word[n - 1] = b'i';
    }
}

fn step_2(word: &mut Vec<u8>) {
    apply_rules(
        word,
        &[
            ("ational", "ate", m_gt_0),
            ("tional", "tion", m_gt_0),
            ("enci", "ence", m_gt_0),
            ("anci", "ance", m_gt_0),
            ("izer", "ize", m_gt_0),
            ("abli", "able", m_gt_0),
            ("alli", "al", m_gt_0),
            ("entli", "ent", m_gt_0),
            ("eli", "e", m_gt_0),
            ("ousli", "ous", m_gt_0),
            ("ization", "ize", m_gt_0),
            ("ation", "ate", m_gt_0),
            ("ator", "ate", m_gt_0),
            ("alism", "al", m_gt_0),
            ("iveness", "ive", m_gt_0),
            ("fulness", "ful", m_gt_0),
            ("ousness", "ous", m_gt_0),
            ("aliti", "al", m_gt_0),
            ("iviti", "ive", m_gt_0),
            ("biliti", "ble", m_gt_0),
        ],
    );
}

fn step_3(word: &mut Vec<u8>) {
    apply_rules(
        word,
        &[
            ("icate", "ic", m_gt_0),
            ("ative", "", m_gt_0),
            ("alize", "al", m_gt_0),
            ("iciti", "ic", m_gt_0),
            ("ical", "ic", m_gt_0),
            ("ful", "", m_gt_0),
            ("ness", "", m_gt_0),
        ],
    );
}

fn ion_condition(stem: &[u8]) -> bool {
    m_gt_1(stem) && stem.last().map_or(false, |&c| c == b's' || c == b't')
}

fn step_4(word: &mut Vec<u8>) {
    apply_rules(
        word,
        &[
            ("al", "", m_gt_1),
            ("ance", "", m_gt_1),
            ("ence", "", m_gt_1),
            ("er", "", m_gt_1),
            ("ic", "", m_gt_1),
            ("able", "", m_gt_1),
            ("ible", "", m_gt_1),
            ("ant", "", m_gt_1),
            ("ement", "", m_gt_1),
            ("ment", "", m_gt_1),
            ("ent", "", m_gt_1),
            ("ion", "", ion_condition),
            ("ou", "", m_gt_1),
            ("ism", "", m_gt_1),
            ("ate", "", m_gt_1),
            ("iti", "", m_gt_1),
            ("ous", "", m_gt_1),
            ("ive", "", m_gt_1),
            ("ize", "", m_gt_1),
        ],
    );
}

fn step_5a(word: &mut Vec<u8>) {
    if !ends_with(word, "e") {
        return;
    }
    let stem = &word[..word.len() - 1];
    let m = measure(stem);
    if m > 1 || (m == 1 && !ends_cvc(stem)) {
        word.truncate(word.len() - 1);
    }
}

fn step_5b(word: &mut Vec<u8>) {
    if m_gt_1(word) && ends_double_consonant(word) && word[word.len() - 1] == b'l' {
        word.truncate(word.len() - 1);
    }
}

/// Stem a single lowercase word.
pub fn stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut w = word.as_bytes().to_vec();
    step_1a(&mut w);
    step_1b(&mut w);
    step_1c(&mut w);
    step_2(&mut w);
    step_3(&mut w);
    step_4(&mut w);
    step_5a(&mut w);
    step_5b(&mut w);
    String::from_utf8(w).expect("stemmer operates on ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_pairs() {
        let cases = [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("ties", "ti"),
            ("caress", "caress"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("bled", "bled"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("troubled", "troubl"),
            ("sized", "size"),
            ("hopping", "hop"),
            ("tanned", "tan"),
            ("falling", "fall"),
            ("hissing", "hiss"),
            ("fizzed", "fizz"),
            ("failing", "fail"),
            ("filing", "file"),
            ("happy", "happi"),
            ("sky", "sky"),
            ("relational", "relat"),
            ("conditional", "condit"),
            ("rational", "ration"),
            ("digitizer", "digit"),
            ("operator", "oper"),
            ("feudalism", "feudal"),
            ("decisiveness", "decis"),
            ("hopefulness", "hope"),
            ("formaliti", "formal"),
            ("formative", "form"),
            ("formalize", "formal"),
            ("electriciti", "electr"),
            ("electrical", "electr"),
            ("hopeful", "hope"),
            ("goodness", "good"),
            ("adjustable", "adjust"),
            ("defensible", "defens"),
            ("adoption", "adopt"),
            ("adjustment", "adjust"),
            ("dependent", "depend"),
            ("activate", "activ"),
            ("effective", "effect"),
            ("probate", "probat"),
            ("rate", "rate"),
            ("cease", "ceas"),
            ("controll", "control"),
            ("roll", "roll"),
            ("running", "run"),
            ("runs", "run"),
        ];
        for (input, expected) in cases {
            assert_eq!(stem(input), expected, "stem({input:?})");
        }
    }

    #[test]
    fn short_and_non_ascii_words_unchanged() {
        assert_eq!(stem("is"), "is");
        assert_eq!(stem("a"), "a");
        assert_eq!(stem("café"), "café");
        assert_eq!(stem("катание"), "катание");
    }
}
