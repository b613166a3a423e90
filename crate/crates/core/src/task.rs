//! The two classification tasks and how corpus pairs become instances.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::taxonomy::ClassLabel;
use crate::text::{encode, Vocabulary};
use crate::training::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Seven-way strategy label of the complex sentence.
    #[default]
    Strategy,
    /// Binary simple / complex sentence difficulty.
    Complexity,
}

pub const SIMPLE: usize = 0;
pub const COMPLEX: usize = 1;

impl Task {
    pub fn class_names(self) -> Vec<String> {
        match self {
            Task::Strategy => ClassLabel::display_names(),
            Task::Complexity => vec!["Simple".into(), "Complex".into()],
        }
    }

    pub fn num_classes(self) -> usize {
        self.class_names().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Strategy => "strategy",
            Task::Complexity => "complexity",
        }
    }

    /// Labeled instances with a stable identifier each.
    ///
    /// Strategy: every labeled pair's complex sentence. Complexity: every
    /// complex sentence is `Complex`, every simplified sentence `Simple`.
    pub fn instances(self, corpus: &Corpus, vocab: &Vocabulary, max_len: usize) -> Vec<(String, Instance)> {
        let mk = |text: &str, label: usize| Instance {
            encoded: encode(text, vocab, max_len),
            label,
        };
        match self {
            Task::Strategy => corpus
                .labeled()
                .map(|(p, l)| (p.id.clone(), mk(&p.complex_text, l.index())))
                .collect(),
            Task::Complexity => corpus
                .pairs
                .iter()
                .flat_map(|p| {
                    let simple = p
                        .simple_texts
                        .iter()
                        .enumerate()
                        .map(move |(j, s)| (format!("{}#s{j}", p.id), mk(s, SIMPLE)));
                    std::iter::once((format!("{}#c", p.id), mk(&p.complex_text, COMPLEX))).chain(simple)
                })
                .collect(),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strategy" => Ok(Task::Strategy),
            "complexity" => Ok(Task::Complexity),
            other => Err(Error::InvalidConfig(format!("unknown task `{other}`"))),
        }
    }
}
