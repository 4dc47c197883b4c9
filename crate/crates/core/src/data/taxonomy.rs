//! Stage-of-development code → class mapping.

use std::path::Path;

use super::{io_err, DataError, Result, INVALID_CODE};

const DEFAULT_TABLE: &str = include_str!("../../data/sa_codes.txt");
const SPLIT_OLD_TABLE: &str = include_str!("../../data/sa_codes_split_old.txt");

/// Ordered class names plus a lookup from SA code to class index.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassTaxonomy {
    names: Vec<String>,
    table: Vec<Option<usize>>,
}

impl ClassTaxonomy {
    /// Six classes: Water, New Ice, Young Ice, First-Year Ice,
    /// Old/Multi-Year Ice, Glacier Ice.
    pub fn default_sigrid3() -> Self {
        Self::parse(DEFAULT_TABLE).expect("bundled table is valid")
    }

    /// Seven classes, with old ice separate from second/multi-year ice.
    pub fn split_old_ice() -> Self {
        Self::parse(SPLIT_OLD_TABLE).expect("bundled table is valid")
    }

    /// Parses `code,class_name` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut names: Vec<String> = Vec::new();
        let mut table = vec![None; 256];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| DataError::Format(format!("taxonomy line {}: {msg}", lineno + 1));
            let (code, name) = line.split_once(',').ok_or_else(|| bad("expected code,class_name"))?;
            let code: u8 = code.trim().parse().map_err(|_| bad("code must be 0..=254"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(bad("empty class name"));
            }
            if code == INVALID_CODE {
                return Err(bad("code 255 is reserved for invalid pixels"));
            }
            if table[code as usize].is_some() {
                return Err(bad(&format!("code {code} listed twice")));
            }
            let idx = match names.iter().position(|n| n == name) {
                Some(i) => i,
                None => {
                    names.push(name.to_string());
                    names.len() - 1
                }
            };
            table[code as usize] = Some(idx);
        }
        if names.is_empty() {
            return Err(DataError::Format("taxonomy defines no classes".into()));
        }
        Ok(Self { names, table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }

    /// Serializes back to the text table format, grouped by class.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (idx, name) in self.names.iter().enumerate() {
            for code in self.codes_for(idx) {
                out.push_str(&format!("{code},{name}\n"));
            }
        }
        out
    }

    pub fn num_classes(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Class for an SA code; `None` for 255 and for unlisted codes.
    pub fn map_sa_code(&self, code: u8) -> Option<usize> {
        self.table[code as usize]
    }

    pub fn codes_for(&self, class: usize) -> Vec<u8> {
        (0..=254u8).filter(|&c| self.table[c as usize] == Some(class)).collect()
    }
}
