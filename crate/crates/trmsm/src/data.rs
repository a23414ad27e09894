//! Conversation data model, JSONL ingestion, splits, and the synthetic
//! corpus generator used by the learnability experiments.
//!
//! The on-disk format is one conversation per line:
//!
//! ```text
//! {"id":"d1","utterances":[{"speaker":"A","text":"hi there","label":"neutral"}]}
//! ```
//!
//! Labels are resolved against a label map (a JSON list of class names).
//! Text is tokenized by whitespace splitting and lowercased.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One speaker turn: tokens, a speaker tag, and an optional emotion label.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub speaker: String,
    pub tokens: Vec<String>,
    pub label: Option<usize>,
}

/// An ordered sequence of utterances.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Conversation {
    pub id: String,
    pub utterances: Vec<Utterance>,
}

impl Conversation {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn speakers(&self) -> Vec<&str> {
        self.utterances.iter().map(|u| u.speaker.as_str()).collect()
    }

    pub fn labels(&self) -> Option<Vec<usize>> {
        self.utterances.iter().map(|u| u.label).collect()
    }
}

/// Bijection between emotion names and indices `0..K`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelMap {
    pub fn new<S: Into<String>>(names: Vec<S>) -> Result<LabelMap> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate label name {n:?}")));
            }
        }
        Ok(LabelMap { names, index })
    }

    pub fn load(path: &Path) -> Result<LabelMap> {
        let names: Vec<String> = serde_json::from_reader(std::fs::File::open(path)?)?;
        LabelMap::new(names)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        serde_json::to_writer_pretty(std::fs::File::create(path)?, &self.names)?;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// Train / dev / test conversation lists.
#[derive(Clone, Debug, Default)]
pub struct DatasetSplit {
    pub train: Vec<Conversation>,
    pub dev: Vec<Conversation>,
    pub test: Vec<Conversation>,
}

#[derive(Serialize, Deserialize)]
struct RawUtterance {
    speaker: String,
    text: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct RawConversation {
    id: String,
    utterances: Vec<RawUtterance>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace().map(|t| t.to_lowercase()).collect()
}

/// Read one conversation per JSONL line, preserving order.
pub fn load_jsonl(path: &Path, label_map: &LabelMap) -> Result<Vec<Conversation>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawConversation = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: format!("malformed conversation record: {e}"),
        })?;
        if raw.utterances.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("conversation {:?} has no utterances", raw.id),
            });
        }
        let mut utterances = Vec::with_capacity(raw.utterances.len());
        for u in raw.utterances {
            let label = match u.label {
                None => None,
                Some(name) => Some(label_map.index_of(&name).ok_or_else(|| Error::Parse {
                    line: lineno,
                    msg: format!("unknown label {name:?}"),
                })?),
            };
            let tokens = tokenize(&u.text);
            if tokens.is_empty() {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("empty utterance text in conversation {:?}", raw.id),
                });
            }
            utterances.push(Utterance {
                speaker: u.speaker,
                tokens,
                label,
            });
        }
        out.push(Conversation {
            id: raw.id,
            utterances,
        });
    }
    Ok(out)
}

pub fn save_jsonl(path: &Path, conversations: &[Conversation], label_map: &LabelMap) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    for c in conversations {
        let raw = RawConversation {
            id: c.id.clone(),
            utterances: c
                .utterances
                .iter()
                .map(|u| RawUtterance {
                    speaker: u.speaker.clone(),
                    text: u.tokens.join(" "),
                    label: u.label.map(|l| label_map.name(l).to_string()),
                })
                .collect(),
        };
        serde_json::to_writer(&mut f, &raw)?;
        f.write_all(b"\n")?;
    }
    Ok(())
}

/// Seeded shuffle then split; `|train| = round(ratio * total)`.
pub fn split_train_dev(
    conversations: &[Conversation],
    ratio: f64,
    seed: u64,
) -> Result<(Vec<Conversation>, Vec<Conversation>)> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio {ratio} not in (0, 1)")));
    }
    if conversations.len() < 2 {
        return Err(Error::Data(format!(
            "need at least 2 conversations to split, got {}",
            conversations.len()
        )));
    }
    let mut order: Vec<usize> = (0..conversations.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_train = (ratio * conversations.len() as f64).round() as usize;
    let train = order[..n_train]
        .iter()
        .map(|&i| conversations[i].clone())
        .collect();
    let dev = order[n_train..]
        .iter()
        .map(|&i| conversations[i].clone())
        .collect();
    Ok((train, dev))
}

/// Labeling rules for the synthetic corpus.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticRule {
    /// Label = content class of the most recent earlier utterance by the
    /// same speaker; first utterance of a speaker keeps its own content.
    SameSpeakerPrevious,
    /// Label = majority content class among earlier utterances by other
    /// speakers (ties to the lowest class); none yet keeps own content.
    OtherSpeakerMajority,
    /// Label = the utterance's own content class.
    ContentOnly,
}

impl std::str::FromStr for SyntheticRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<SyntheticRule> {
        match s {
            "same-speaker-previous" => Ok(SyntheticRule::SameSpeakerPrevious),
            "other-speaker-majority" => Ok(SyntheticRule::OtherSpeakerMajority),
            "content-only" => Ok(SyntheticRule::ContentOnly),
            other => Err(Error::Config(format!("unknown synthetic rule {other:?}"))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticConfig {
    pub train_convs: usize,
    pub dev_convs: usize,
    pub test_convs: usize,
    pub speakers_per_conv: usize,
    pub utterances_per_conv: usize,
    pub num_classes: usize,
    pub rule: SyntheticRule,
    pub seed: u64,
}

/// Apply a labeling rule to explicit speaker and content sequences.
pub fn apply_rule(rule: SyntheticRule, speakers: &[usize], contents: &[usize]) -> Vec<usize> {
    let n = speakers.len();
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = match rule {
            SyntheticRule::ContentOnly => contents[i],
            SyntheticRule::SameSpeakerPrevious => (0..i)
                .rev()
                .find(|&j| speakers[j] == speakers[i])
                .map(|j| contents[j])
                .unwrap_or(contents[i]),
            SyntheticRule::OtherSpeakerMajority => {
                let mut counts: HashMap<usize, usize> = HashMap::new();
                for j in 0..i {
                    if speakers[j] != speakers[i] {
                        *counts.entry(contents[j]).or_insert(0) += 1;
                    }
                }
                if counts.is_empty() {
                    contents[i]
                } else {
                    let max = counts.values().max().copied().unwrap();
                    counts
                        .iter()
                        .filter(|(_, &c)| c == max)
                        .map(|(&k, _)| k)
                        .min()
                        .unwrap()
                }
            }
        };
        labels.push(label);
    }
    labels
}

/// Label names for a K-class synthetic corpus.
pub fn synthetic_label_map(num_classes: usize) -> LabelMap {
    LabelMap::new((0..num_classes).map(|k| format!("e{k}")).collect::<Vec<_>>()).unwrap()
}

/// Generate a deterministic corpus where each utterance's text encodes a
/// content class and labels follow the configured rule. Speaker identity
/// never appears in the tokens.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let gen_split = |prefix: &str, count: usize, rng: &mut ChaCha8Rng| {
        (0..count)
            .map(|c| {
                let speakers: Vec<usize> = (0..cfg.utterances_per_conv)
                    .map(|_| rng.gen_range(0..cfg.speakers_per_conv))
                    .collect();
                let contents: Vec<usize> = (0..cfg.utterances_per_conv)
                    .map(|_| rng.gen_range(0..cfg.num_classes))
                    .collect();
                let labels = apply_rule(cfg.rule, &speakers, &contents);
                Conversation {
                    id: format!("{prefix}-{c}"),
                    utterances: (0..cfg.utterances_per_conv)
                        .map(|i| Utterance {
                            speaker: format!("p{}", speakers[i]),
                            tokens: vec![format!("c{}", contents[i])],
                            label: Some(labels[i]),
                        })
                        .collect(),
                }
            })
            .collect::<Vec<_>>()
    };
    DatasetSplit {
        train: gen_split("train", cfg.train_convs, &mut rng),
        dev: gen_split("dev", cfg.dev_convs, &mut rng),
        test: gen_split("test", cfg.test_convs, &mut rng),
    }
}
