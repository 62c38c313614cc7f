//! Dialogue logs, gold labels and context-window helpers.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{from_json_reader, Error, Result};
use crate::kb::SnippetRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Speaker {
    #[serde(rename = "U")]
    User,
    #[serde(rename = "S")]
    Agent,
}

impl Speaker {
    pub fn tag(self) -> &'static str {
        match self {
            Speaker::User => "User",
            Speaker::Agent => "Agent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

impl Turn {
    pub fn user(text: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::User,
            text: text.into(),
        }
    }

    pub fn agent(text: impl Into<String>) -> Self {
        Turn {
            speaker: Speaker::Agent,
            text: text.into(),
        }
    }
}

/// A non-empty list of turns ending with a user turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Dialogue {
    turns: Vec<Turn>,
}

impl Dialogue {
    pub fn new(turns: Vec<Turn>) -> Result<Self> {
        if let Some(i) = turns.iter().position(|t| t.text.trim().is_empty()) {
            return Err(Error::Validation(format!("turn {i} has empty text")));
        }
        match turns.last() {
            None => Err(Error::EmptyContext),
            Some(t) if t.speaker != Speaker::User => Err(Error::EmptyContext),
            Some(_) => Ok(Dialogue { turns }),
        }
    }

    pub fn turns(&self) -> &[Turn] {
        &self.turns
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }

    /// Text of the final (user) turn.
    pub fn last_user_utterance(&self) -> &str {
        &self.turns[self.turns.len() - 1].text
    }

    /// Longest suffix of turns whose whitespace-token total fits in
    /// `max_tokens`. The final turn is always kept; if it alone is over
    /// budget only its last `max_tokens` tokens survive.
    pub fn context_window(&self, max_tokens: usize) -> Vec<Turn> {
        let max_tokens = max_tokens.max(1);
        let mut out = Vec::new();
        let mut used = 0;
        for turn in self.turns.iter().rev() {
            let n = turn.text.split_whitespace().count();
            if out.is_empty() && n > max_tokens {
                let tokens: Vec<&str> = turn.text.split_whitespace().collect();
                out.push(Turn {
                    speaker: turn.speaker,
                    text: tokens[tokens.len() - max_tokens..].join(" "),
                });
                break;
            }
            if used + n > max_tokens {
                break;
            }
            used += n;
            out.push(turn.clone());
        }
        out.reverse();
        out
    }

    /// Whole dialogue rendered one `Speaker: text` line per turn.
    pub fn render(&self) -> String {
        render_turns(&self.turns)
    }
}

pub fn render_turns(turns: &[Turn]) -> String {
    let mut out = String::new();
    for (i, t) in turns.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(t.speaker.tag());
        out.push_str(": ");
        out.push_str(&t.text);
    }
    out
}

impl<'de> Deserialize<'de> for Dialogue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let turns = Vec::<Turn>::deserialize(d)?;
        Dialogue::new(turns).map_err(serde::de::Error::custom)
    }
}

/// Gold annotation (or prediction) for the final turn of a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnLabel {
    pub target: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knowledge: Option<Vec<SnippetRef>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
}

impl TurnLabel {
    pub fn negative() -> Self {
        TurnLabel {
            target: false,
            knowledge: None,
            response: None,
        }
    }

    pub fn positive(knowledge: Vec<SnippetRef>, response: impl Into<String>) -> Self {
        TurnLabel {
            target: true,
            knowledge: Some(knowledge),
            response: Some(response.into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.target, &self.knowledge, &self.response) {
            (false, None, None) => Ok(()),
            (true, Some(k), Some(_)) if !k.is_empty() => Ok(()),
            (true, Some(_), Some(_)) => Err(Error::Validation("knowledge list is empty".into())),
            _ => Err(Error::Validation(
                "knowledge and response must be present exactly when target is true".into(),
            )),
        }
    }

    pub fn gold_knowledge(&self) -> &[SnippetRef] {
        self.knowledge.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabeledCorpus {
    pub pairs: Vec<(Dialogue, TurnLabel)>,
}

impl LabeledCorpus {
    pub fn new(dialogues: Vec<Dialogue>, labels: Vec<TurnLabel>) -> Result<Self> {
        if dialogues.len() != labels.len() {
            return Err(Error::Alignment {
                left: dialogues.len(),
                right: labels.len(),
            });
        }
        for (i, l) in labels.iter().enumerate() {
            l.validate()
                .map_err(|e| Error::Validation(format!("label {i}: {e}")))?;
        }
        Ok(LabeledCorpus {
            pairs: dialogues.into_iter().zip(labels).collect(),
        })
    }

    pub fn load<L: Read, B: Read>(logs: L, labels: B) -> Result<Self> {
        let dialogues = load_logs(logs)?;
        let labels = load_labels(labels)?;
        Self::new(dialogues, labels)
    }

    pub fn load_paths(logs: impl AsRef<std::path::Path>, labels: impl AsRef<std::path::Path>) -> Result<Self> {
        let logs = std::io::BufReader::new(std::fs::File::open(logs)?);
        let labels = std::io::BufReader::new(std::fs::File::open(labels)?);
        Self::load(logs, labels)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dialogues(&self) -> impl Iterator<Item = &Dialogue> {
        self.pairs.iter().map(|(d, _)| d)
    }

    pub fn labels(&self) -> impl Iterator<Item = &TurnLabel> {
        self.pairs.iter().map(|(_, l)| l)
    }

    pub fn knowledge_seeking_count(&self) -> usize {
        self.labels().filter(|l| l.target).count()
    }

    pub fn logs_json(&self) -> String {
        let d: Vec<&Dialogue> = self.dialogues().collect();
        serde_json::to_string(&d).expect("dialogues serialize")
    }

    pub fn labels_json(&self) -> String {
        let l: Vec<&TurnLabel> = self.labels().collect();
        serde_json::to_string(&l).expect("labels serialize")
    }
}

pub fn load_logs<R: Read>(source: R) -> Result<Vec<Dialogue>> {
    from_json_reader(source)
}

pub fn load_labels<R: Read>(source: R) -> Result<Vec<TurnLabel>> {
    from_json_reader(source)
}
