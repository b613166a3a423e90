//! Simplification-strategy taxonomy.
//!
//! Fine-grained annotation codes (`OmiSen`, `ExplWor`, ...) belong to one of
//! ten macro-strategies and map onto the seven labels the classifier predicts.
//! Macro-strategies sit on an addition/deduction continuum from -4 (most text
//! removed) to +4 (most text added).

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MacroStrategy {
    Transcription,
    Synonymy,
    Explanation,
    SyntacticChange,
    Transposition,
    Modulation,
    Anaphora,
    Omission,
    IllocutionaryChange,
    Compression,
}

impl MacroStrategy {
    pub const ALL: [MacroStrategy; 10] = [
        MacroStrategy::Transcription,
        MacroStrategy::Synonymy,
        MacroStrategy::Explanation,
        MacroStrategy::SyntacticChange,
        MacroStrategy::Transposition,
        MacroStrategy::Modulation,
        MacroStrategy::Anaphora,
        MacroStrategy::Omission,
        MacroStrategy::IllocutionaryChange,
        MacroStrategy::Compression,
    ];
}

pub const CONTINUUM_MIN: i8 = -4;
pub const CONTINUUM_MAX: i8 = 4;

/// Default position of a macro-strategy on the deduction (-4) to addition
/// (+4) continuum. Only Omission, Transcription and Explanation are fixed;
/// the rest are defaults that a taxonomy file may override.
pub fn continuum_position(macro_strategy: MacroStrategy) -> i8 {
    match macro_strategy {
        MacroStrategy::Omission => -4,
        MacroStrategy::Compression => -3,
        MacroStrategy::IllocutionaryChange => -2,
        MacroStrategy::Anaphora => -1,
        MacroStrategy::Transcription => 0,
        MacroStrategy::SyntacticChange => 1,
        MacroStrategy::Transposition | MacroStrategy::Synonymy => 2,
        MacroStrategy::Modulation => 3,
        MacroStrategy::Explanation => 4,
    }
}

/// The seven labels predicted by the strategy classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    Explanation,
    GrammaticalAdjustments,
    Modulation,
    Omission,
    Substitution,
    Transposition,
    SyntacticChanges,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 7] = [
        ClassLabel::Explanation,
        ClassLabel::GrammaticalAdjustments,
        ClassLabel::Modulation,
        ClassLabel::Omission,
        ClassLabel::Substitution,
        ClassLabel::Transposition,
        ClassLabel::SyntacticChanges,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<ClassLabel> {
        Self::ALL.get(index).copied()
    }

    /// Human-readable name, as printed in reports.
    pub fn display_name(self) -> &'static str {
        match self {
            ClassLabel::Explanation => "Explanation",
            ClassLabel::GrammaticalAdjustments => "Grammatical Adjustments",
            ClassLabel::Modulation => "Modulation",
            ClassLabel::Omission => "Omission",
            ClassLabel::Substitution => "Substitution",
            ClassLabel::Transposition => "Transposition",
            ClassLabel::SyntacticChanges => "Syntactic Changes",
        }
    }

    pub fn display_names() -> Vec<String> {
        Self::ALL.iter().map(|c| c.display_name().to_string()).collect()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.display_name())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    /// Accepts both the variant name (`SyntacticChanges`) and the display
    /// name (`Syntactic Changes`).
    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .iter()
            .copied()
            .find(|c| c.display_name() == s || format!("{c:?}") == s)
            .ok_or_else(|| Error::UnknownCode(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyCode {
    pub code: String,
    #[serde(rename = "macro")]
    pub macro_strategy: MacroStrategy,
    pub description: String,
}

/// On-disk form of a [`TaxonomyTable`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct TaxonomyFile {
    codes: Vec<StrategyCode>,
    code_to_class: Vec<(String, ClassLabel)>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    continuum: BTreeMap<MacroStrategy, i8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaxonomyTable {
    codes: Vec<StrategyCode>,
    by_code: BTreeMap<String, usize>,
    code_to_class: BTreeMap<String, ClassLabel>,
    continuum: BTreeMap<MacroStrategy, i8>,
}

const DEFAULT_CODES: &[(&str, MacroStrategy, &str, Option<ClassLabel>)] = {
    use ClassLabel as C;
    use MacroStrategy as M;
    &[
        ("OmiSen", M::Omission, "omission of a sentence", Some(C::Omission)),
        ("OmiWor", M::Omission, "omission of words", Some(C::Omission)),
        ("OmiClau", M::Omission, "omission of a clause", Some(C::Omission)),
        ("OmiRhet", M::Omission, "omission of a rhetorical structure", Some(C::Omission)),
        ("SinGram", M::Compression, "grammatical construct simplified", None),
        ("SimGram", M::Compression, "grammatical construct simplified", None),
        ("SinSem", M::Compression, "semantic construct simplified", None),
        ("SinPrag", M::Compression, "pragmatic construct simplified", None),
        ("ExplWor", M::Explanation, "word explained", Some(C::Explanation)),
        ("ExplCont", M::Explanation, "context explained", Some(C::Explanation)),
        ("ExplExpr", M::Explanation, "expression explained", Some(C::Explanation)),
        ("HidCont", M::Explanation, "hidden concept made explicit", Some(C::Explanation)),
        ("HidGram", M::Explanation, "hidden grammar made explicit", Some(C::Explanation)),
        ("WordExpl", M::Explanation, "words given for known", Some(C::Explanation)),
        ("SynChange", M::SyntacticChange, "syntactic change", Some(C::SyntacticChanges)),
        ("Clause2Word", M::SyntacticChange, "clause to word", Some(C::SyntacticChanges)),
        ("WordsOrder", M::SyntacticChange, "word order changed", Some(C::SyntacticChanges)),
        ("GroupOrder", M::SyntacticChange, "group order changed", Some(C::SyntacticChanges)),
        ("LinearOrderSen", M::SyntacticChange, "sentence-level linear order", Some(C::SyntacticChanges)),
        ("LinearOrderCla", M::SyntacticChange, "clause-level linear order", Some(C::SyntacticChanges)),
        ("Anaph", M::Anaphora, "repetition replaces synonyms", Some(C::Substitution)),
        ("SynSem", M::Synonymy, "semantic synonym", Some(C::Substitution)),
        ("SemStereo", M::Synonymy, "semantic stereotype", Some(C::Substitution)),
        ("TranspNoun", M::Transposition, "noun transposition", Some(C::Transposition)),
        ("ModInfo", M::Modulation, "information order modulated", Some(C::Modulation)),
    ]
};

impl Default for TaxonomyTable {
    /// The built-in table. Compression codes carry no classifier label;
    /// supply one through a taxonomy file to make them trainable.
    fn default() -> Self {
        let codes = DEFAULT_CODES
            .iter()
            .map(|&(code, macro_strategy, description, _)| StrategyCode {
                code: code.to_string(),
                macro_strategy,
                description: description.to_string(),
            })
            .collect();
        let mapping = DEFAULT_CODES
            .iter()
            .filter_map(|&(code, _, _, class)| class.map(|c| (code.to_string(), c)))
            .collect();
        TaxonomyTable::new(codes, mapping, BTreeMap::new()).expect("built-in taxonomy is valid")
    }
}

impl TaxonomyTable {
    pub fn new(
        codes: Vec<StrategyCode>,
        code_to_class: Vec<(String, ClassLabel)>,
        continuum: BTreeMap<MacroStrategy, i8>,
    ) -> Result<Self> {
        let mut by_code = BTreeMap::new();
        for (i, c) in codes.iter().enumerate() {
            if c.code.is_empty() || !c.code.is_ascii() {
                return Err(Error::InvalidConfig(format!(
                    "strategy code `{}` must be non-empty ASCII",
                    c.code
                )));
            }
            if by_code.insert(c.code.clone(), i).is_some() {
                return Err(Error::InvalidConfig(format!("duplicate strategy code `{}`", c.code)));
            }
        }
        let mut mapping = BTreeMap::new();
        for (code, class) in code_to_class {
            if !by_code.contains_key(&code) {
                return Err(Error::UnknownCode(code));
            }
            if mapping.insert(code.clone(), class).is_some() {
                return Err(Error::InvalidConfig(format!("code `{code}` mapped twice")));
            }
        }
        validate_continuum(&continuum)?;
        Ok(TaxonomyTable {
            codes,
            by_code,
            code_to_class: mapping,
            continuum,
        })
    }

    pub fn codes(&self) -> &[StrategyCode] {
        &self.codes
    }

    /// Case-sensitive lookup of an annotation code.
    pub fn parse_strategy_code(&self, code: &str) -> Result<&StrategyCode> {
        self.by_code
            .get(code)
            .map(|&i| &self.codes[i])
            .ok_or_else(|| Error::UnknownCode(code.to_string()))
    }

    pub fn class_label_of(&self, code: &StrategyCode) -> Result<ClassLabel> {
        self.code_to_class
            .get(&code.code)
            .copied()
            .ok_or_else(|| Error::UnknownCode(code.code.clone()))
    }

    /// Resolves a corpus label that is either a class name or a fine code.
    pub fn resolve_label(&self, label: &str) -> Result<ClassLabel> {
        if let Ok(class) = label.parse::<ClassLabel>() {
            return Ok(class);
        }
        let code = self.parse_strategy_code(label)?;
        self.class_label_of(code)
    }

    /// Codes present in the table but without a classifier label.
    pub fn unmapped_codes(&self) -> Vec<&str> {
        self.codes
            .iter()
            .filter(|c| !self.code_to_class.contains_key(&c.code))
            .map(|c| c.code.as_str())
            .collect()
    }

    pub fn continuum_position(&self, macro_strategy: MacroStrategy) -> i8 {
        self.continuum
            .get(&macro_strategy)
            .copied()
            .unwrap_or_else(|| continuum_position(macro_strategy))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = TaxonomyFile {
            codes: self.codes.clone(),
            code_to_class: self
                .code_to_class
                .iter()
                .map(|(k, v)| (k.clone(), *v))
                .collect(),
            continuum: self.continuum.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: TaxonomyFile = serde_json::from_str(text)?;
        TaxonomyTable::new(file.codes, file.code_to_class, file.continuum)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn validate_continuum(overrides: &BTreeMap<MacroStrategy, i8>) -> Result<()> {
    for (&m, &pos) in overrides {
        if !(CONTINUUM_MIN..=CONTINUUM_MAX).contains(&pos) {
            return Err(Error::InvalidConfig(format!(
                "continuum position {pos} for {m:?} outside [-4, 4]"
            )));
        }
        let fixed = match m {
            MacroStrategy::Omission | MacroStrategy::Transcription | MacroStrategy::Explanation => {
                Some(continuum_position(m))
            }
            _ => None,
        };
        if let Some(expected) = fixed.filter(|&e| e != pos) {
            return Err(Error::InvalidConfig(format!(
                "{m:?} is fixed at continuum position {expected}"
            )));
        }
    }
    Ok(())
}
