//! Offline language identification from stopword profiles.
//!
//! Every language carries a short list of high-frequency function words.
//! A word contributes `1 / n` to each of the `n` languages whose list
//! contains it, so words shared across languages count for less than
//! distinctive ones. The winner is the highest-scoring language (ties go
//! to the earlier entry in [`PROFILES`]) and its confidence is its share of
//! the total score.
//!
//! Math is removed before counting: dense notation otherwise dilutes the
//! prose signal and produces false negatives on mathematical papers.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::latexnorm::math_spans;

pub struct LanguageProfile {
    pub code: &'static str,
    pub stopwords: &'static [&'static str],
}

pub const UNDETERMINED: &str = "und";

#[rustfmt::skip]
pub static PROFILES: &[LanguageProfile] = &[
    LanguageProfile {
        code: "en",
        stopwords: &[
            "the", "of", "and", "to", "in", "is", "that", "for", "it", "as", "with", "be", "on", "by", "this", "are",
            "we", "from", "at", "which", "or", "an", "not", "can", "have", "has", "these", "its", "their", "there",
            "where", "then", "than", "also", "such", "if", "when", "any", "all", "each", "our", "us", "been", "was",
            "were", "will", "would", "should", "into", "over", "under", "between", "both", "only", "may", "more",
            "most", "other", "some", "so", "thus", "hence", "therefore", "given", "let", "they", "them", "what",
            "who", "how", "one", "two", "follows", "since", "do", "does", "but", "however", "here", "while", "about",
            "through", "without", "within", "same",
        ],
    },
    LanguageProfile {
        code: "fr",
        stopwords: &[
            "le", "la", "les", "de", "des", "du", "un", "une", "et", "est", "que", "qui", "dans", "pour", "par", "sur",
            "avec", "ce", "cette", "ces", "sont", "nous", "il", "elle", "ils", "pas", "plus", "au", "aux", "ou", "où",
            "mais", "donc", "ainsi", "son", "sa", "ses", "leur", "leurs", "été", "être", "avons", "entre", "tout",
            "tous", "toute", "alors", "comme", "si", "lorsque", "chaque", "dont", "lequel", "laquelle", "soit",
            "suivant", "montre", "cas",
        ],
    },
    LanguageProfile {
        code: "de",
        stopwords: &[
            "der", "die", "das", "und", "ist", "von", "zu", "den", "mit", "sich", "des", "auf", "für", "nicht", "ein",
            "eine", "als", "auch", "es", "an", "werden", "aus", "er", "hat", "dass", "sie", "nach", "wird", "bei",
            "einer", "um", "am", "sind", "noch", "wie", "einem", "über", "einen", "so", "zum", "war", "haben", "nur",
            "oder", "aber", "vor", "zur", "bis", "mehr", "durch", "man", "dem", "wir", "ob", "dann", "folgt", "jede",
            "jeder", "sei", "gilt", "damit",
        ],
    },
    LanguageProfile {
        code: "es",
        stopwords: &[
            "el", "la", "los", "las", "de", "del", "y", "en", "que", "es", "un", "una", "por", "con", "para", "se",
            "su", "sus", "al", "lo", "como", "más", "pero", "sobre", "este", "esta", "estos", "entre", "cuando", "muy",
            "sin", "también", "hay", "donde", "son", "fue", "ha", "han", "desde", "todo", "todos", "nos", "ya", "cada",
            "dicho", "tiene", "puede", "sea", "así", "entonces", "mediante",
        ],
    },
    LanguageProfile {
        code: "it",
        stopwords: &[
            "il", "lo", "la", "i", "gli", "le", "di", "da", "in", "con", "su", "per", "tra", "fra", "e", "è", "che",
            "non", "un", "uno", "una", "del", "della", "dei", "delle", "nel", "nella", "alla", "al", "sono", "come",
            "anche", "questo", "questa", "ma", "più", "se", "ogni", "dove", "quindi", "essere", "stato", "abbiamo",
            "sia", "allora", "tutti", "tale", "ciò",
        ],
    },
    LanguageProfile {
        code: "pt",
        stopwords: &[
            "o", "a", "os", "as", "de", "do", "da", "dos", "das", "e", "em", "no", "na", "nos", "nas", "um", "uma",
            "que", "é", "para", "com", "por", "não", "se", "ao", "como", "mais", "mas", "foi", "são", "seu", "sua",
            "pelo", "pela", "entre", "quando", "também", "isso", "este", "esta", "cada", "onde", "então", "ser", "tem",
            "pode", "seja", "assim",
        ],
    },
    LanguageProfile {
        code: "nl",
        stopwords: &[
            "de", "het", "een", "en", "van", "is", "dat", "die", "in", "op", "te", "voor", "met", "zijn", "niet",
            "aan", "er", "om", "ook", "als", "bij", "door", "maar", "naar", "dan", "wordt", "worden", "uit", "kan",
            "dit", "deze", "wij", "we", "zo", "over", "tot", "nog", "geen", "elke", "waar", "volgt", "hebben", "heeft",
            "onder",
        ],
    },
    LanguageProfile {
        code: "sv",
        stopwords: &[
            "och", "att", "det", "som", "en", "är", "av", "för", "på", "med", "till", "den", "har", "inte", "om",
            "ett", "de", "var", "jag", "vi", "men", "från", "kan", "så", "vid", "eller", "sig", "alla", "också",
            "efter", "under", "mellan", "där", "detta", "denna", "dessa", "varje", "eftersom", "följer", "vara",
        ],
    },
    LanguageProfile {
        code: "pl",
        stopwords: &[
            "i", "w", "z", "na", "się", "nie", "do", "to", "że", "jest", "o", "jak", "od", "po", "ale", "za", "dla",
            "co", "tak", "przez", "są", "jego", "jej", "oraz", "może", "być", "który", "która", "które", "tym", "ten",
            "ta", "te", "czy", "gdy", "już", "tylko", "każdy", "więc", "także", "między", "wtedy",
        ],
    },
    LanguageProfile {
        code: "ru",
        stopwords: &[
            "и",
            "в",
            "не",
            "на",
            "что",
            "с",
            "по",
            "как",
            "это",
            "для",
            "из",
            "к",
            "у",
            "от",
            "о",
            "же",
            "но",
            "за",
            "то",
            "при",
            "так",
            "все",
            "его",
            "ее",
            "их",
            "мы",
            "он",
            "она",
            "они",
            "был",
            "была",
            "быть",
            "есть",
            "где",
            "если",
            "или",
            "также",
            "между",
            "каждый",
            "когда",
            "который",
            "которая",
            "которые",
            "этот",
            "эта",
            "следует",
        ],
    },
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub language: String,
    pub confidence: f64,
}

impl Detection {
    fn undetermined() -> Self {
        Detection { language: UNDETERMINED.to_string(), confidence: 0.0 }
    }
}

/// word → indices of the profiles that list it.
fn word_index() -> &'static HashMap<&'static str, Vec<usize>> {
    static INDEX: OnceLock<HashMap<&'static str, Vec<usize>>> = OnceLock::new();
    INDEX.get_or_init(|| {
        let mut idx: HashMap<&'static str, Vec<usize>> = HashMap::new();
        for (i, p) in PROFILES.iter().enumerate() {
            for w in p.stopwords {
                let e = idx.entry(*w).or_default();
                if !e.contains(&i) {
                    e.push(i);
                }
            }
        }
        idx
    })
}

/// Text with math spans and control sequences removed; what the
/// classifier actually sees.
pub fn prose_projection(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for span in math_spans(text) {
        out.push_str(&text[last..span.start]);
        out.push(' ');
        last = span.end;
    }
    out.push_str(&text[last..]);

    // Drop `\command` names; their brace arguments stay as prose.
    let mut cleaned = String::with_capacity(out.len());
    let mut chars = out.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '\\' {
            while chars.peek().is_some_and(|c| c.is_ascii_alphabetic()) {
                chars.next();
            }
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }
    cleaned
}

pub fn words(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphabetic()).filter(|w| !w.is_empty()).map(|w| w.to_lowercase())
}

pub fn detect_language(text: &str) -> Detection {
    let projection = prose_projection(text);
    let index = word_index();
    let mut scores = vec![0.0f64; PROFILES.len()];
    for w in words(&projection) {
        if let Some(langs) = index.get(w.as_str()) {
            let share = 1.0 / langs.len() as f64;
            for &l in langs {
                scores[l] += share;
            }
        }
    }
    let total: f64 = scores.iter().sum();
    if total <= 0.0 {
        return Detection::undetermined();
    }
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    Detection { language: PROFILES[best].code.to_string(), confidence: scores[best] / total }
}
