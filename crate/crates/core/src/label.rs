use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Image class. The derived ordering is the canonical class order used for
/// tensor indices, confusion matrices and response keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelClass {
    Abnormal,
    NoStool,
    Normal,
}

impl LabelClass {
    pub const ALL: [LabelClass; 3] = [LabelClass::Abnormal, LabelClass::NoStool, LabelClass::Normal];

    pub fn as_str(self) -> &'static str {
        match self {
            LabelClass::Abnormal => "abnormal",
            LabelClass::NoStool => "no_stool",
            LabelClass::Normal => "normal",
        }
    }
}

impl fmt::Display for LabelClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LabelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "abnormal" => Ok(LabelClass::Abnormal),
            "no_stool" => Ok(LabelClass::NoStool),
            "normal" => Ok(LabelClass::Normal),
            other => Err(Error::InvalidInput(format!("unknown class `{other}`"))),
        }
    }
}

/// The active classes of a task, in index order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<LabelClass>", into = "Vec<LabelClass>")]
pub struct ClassSet(Vec<LabelClass>);

impl ClassSet {
    pub fn three() -> Self {
        ClassSet(LabelClass::ALL.to_vec())
    }

    /// Abnormal versus normal.
    pub fn two() -> Self {
        ClassSet(vec![LabelClass::Abnormal, LabelClass::Normal])
    }

    pub fn for_count(n: usize) -> Result<Self, Error> {
        match n {
            2 => Ok(Self::two()),
            3 => Ok(Self::three()),
            _ => Err(Error::InvalidInput(format!("class count must be 2 or 3, got {n}"))),
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn classes(&self) -> &[LabelClass] {
        &self.0
    }

    pub fn index_of(&self, c: LabelClass) -> Option<usize> {
        self.0.iter().position(|&x| x == c)
    }

    pub fn get(&self, i: usize) -> Option<LabelClass> {
        self.0.get(i).copied()
    }

    pub fn contains(&self, c: LabelClass) -> bool {
        self.0.contains(&c)
    }
}

impl TryFrom<Vec<LabelClass>> for ClassSet {
    type Error = Error;

    fn try_from(mut v: Vec<LabelClass>) -> Result<Self, Error> {
        let n = v.len();
        v.sort();
        v.dedup();
        if v.len() != n || !(2..=3).contains(&n) {
            return Err(Error::InvalidInput(format!("invalid class set {v:?}")));
        }
        Ok(ClassSet(v))
    }
}

impl From<ClassSet> for Vec<LabelClass> {
    fn from(c: ClassSet) -> Self {
        c.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn string_forms_round_trip() {
        for c in LabelClass::ALL {
            assert_eq!(c.as_str().parse::<LabelClass>().unwrap(), c);
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
        }
        assert!("Normal".parse::<LabelClass>().is_err());
    }

    #[test]
    fn class_order_is_alphabetical() {
        let s = ClassSet::three();
        assert_eq!(s.index_of(LabelClass::NoStool), Some(1));
        assert_eq!(ClassSet::two().index_of(LabelClass::Normal), Some(1));
    }
}
