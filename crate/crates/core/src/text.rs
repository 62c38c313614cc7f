//! Tokenizers and feature hashing shared by the lexical models and metrics.

/// Lowercased alphanumeric runs. Used by the lexical scorers.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokenization for generation metrics: lowercase, detach punctuation into
/// its own token, split on whitespace.
pub fn metric_tokens(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.chars() {
        if c.is_ascii_punctuation() {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.extend(c.to_lowercase());
        }
    }
    spaced.split_whitespace().map(str::to_string).collect()
}

pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

const ONES: [&str; 20] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven",
    "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: [&str; 10] = [
    "", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety",
];

/// English words for 0..=100; `None` outside that range.
pub fn number_to_words(n: u64) -> Option<String> {
    match n {
        0..=19 => Some(ONES[n as usize].to_string()),
        20..=99 => {
            let tens = TENS[(n / 10) as usize];
            Some(match n % 10 {
                0 => tens.to_string(),
                ones => format!("{tens} {}", ONES[ones as usize]),
            })
        }
        100 => Some("one hundred".to_string()),
        _ => None,
    }
}

/// Replace each maximal ASCII digit run with its English words when it
/// denotes an integer in 0..=100.
pub fn spell_out_numbers(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut digits = String::new();
    let flush = |digits: &mut String, out: &mut String| {
        if digits.is_empty() {
            return;
        }
        let word = if digits.len() <= 3 {
            digits.parse::<u64>().ok().and_then(number_to_words)
        } else {
            None
        };
        match word {
            Some(w) => out.push_str(&w),
            None => out.push_str(digits),
        }
        digits.clear();
    };
    for c in text.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else {
            flush(&mut digits, &mut out);
            out.push(c);
        }
    }
    flush(&mut digits, &mut out);
    out
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike the std hasher.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Sparse feature vector: sorted, deduplicated indices with values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| dense[i as usize] * v)
            .sum()
    }
}

/// Hashed word unigrams, word bigrams and character trigrams, L2-normalized.
pub fn hashed_ngram_features(text: &str, dim: usize) -> SparseVec {
    assert!(dim > 0, "feature dimension must be positive");
    let tokens = word_tokens(text);
    let mut idx: Vec<u32> = Vec::new();
    let mut push = |kind: u8, s: &str| {
        let mut buf = Vec::with_capacity(s.len() + 1);
        buf.push(kind);
        buf.extend_from_slice(s.as_bytes());
        idx.push((fnv1a(&buf) % dim as u64) as u32);
    };
    for t in &tokens {
        push(b'w', t);
    }
    for pair in tokens.windows(2) {
        push(b'b', &format!("{} {}", pair[0], pair[1]));
    }
    for t in &tokens {
        let padded: Vec<char> = format!("<{t}>").chars().collect();
        for tri in padded.windows(3) {
            let s: String = tri.iter().collect();
            push(b'c', &s);
        }
    }
    idx.sort_unstable();
    let mut entries: Vec<(u32, f64)> = Vec::new();
    for i in idx {
        match entries.last_mut() {
            Some((j, v)) if *j == i => *v += 1.0,
            _ => entries.push((i, 1.0)),
        }
    }
    let norm = entries.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, v) in &mut entries {
            *v /= norm;
        }
    }
    SparseVec { entries }
}
