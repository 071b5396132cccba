//! A partition of classes into named modules, shared by ground truth and
//! recovered output.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Module name → member fqcns. `BTreeMap`/`BTreeSet` keep the JSON form
/// canonical (sorted keys and members).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub modules: BTreeMap<String, BTreeSet<String>>,
}

impl Architecture {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an architecture and checks the partition property.
    pub fn from_modules<I, S, M>(modules: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, M)>,
        S: Into<String>,
        M: IntoIterator,
        M::Item: Into<String>,
    {
        let mut arch = Architecture::new();
        for (name, members) in modules {
            let name = name.into();
            let set: BTreeSet<String> = members.into_iter().map(Into::into).collect();
            if arch.modules.insert(name.clone(), set).is_some() {
                return Err(Error::InvalidInput(format!("duplicate module name `{name}`")));
            }
        }
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (name, members) in &self.modules {
            if members.is_empty() {
                return Err(Error::InvalidInput(format!("module `{name}` is empty")));
            }
            for fqcn in members {
                if !seen.insert(fqcn.as_str()) {
                    return Err(Error::InvalidInput(format!(
                        "class `{fqcn}` appears in more than one module"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn module_count(&self) -> usize {
        self.modules.len()
    }

    pub fn entity_count(&self) -> usize {
        self.modules.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.modules.is_empty()
    }

    pub fn entities(&self) -> BTreeSet<&str> {
        self.modules
            .values()
            .flat_map(|m| m.iter().map(String::as_str))
            .collect()
    }

    /// fqcn → owning module name.
    pub fn membership(&self) -> BTreeMap<&str, &str> {
        let mut out = BTreeMap::new();
        for (name, members) in &self.modules {
            for fqcn in members {
                out.insert(fqcn.as_str(), name.as_str());
            }
        }
        out
    }

    pub fn module_of(&self, fqcn: &str) -> Option<&str> {
        self.modules
            .iter()
            .find(|(_, m)| m.contains(fqcn))
            .map(|(n, _)| n.as_str())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("architecture serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let arch = Self::from_json(&text).map_err(|e| Error::json(path, e))?;
        arch.validate()?;
        Ok(arch)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_is_canonical() {
        let arch = Architecture::from_modules([("b", vec!["z.Y", "a.X"]), ("a", vec!["m.N"])]).unwrap();
        let json = arch.to_json();
        let a = json.find("\"a\"").unwrap();
        let b = json.find("\"b\"").unwrap();
        assert!(a < b);
        assert!(json.find("a.X").unwrap() < json.find("z.Y").unwrap());
        assert_eq!(Architecture::from_json(&json).unwrap(), arch);
    }

    #[test]
    fn rejects_overlap_and_empty_modules() {
        assert!(Architecture::from_modules([("a", vec!["x.A"]), ("b", vec!["x.A"])]).is_err());
        assert!(Architecture::from_modules([("a", Vec::<String>::new())]).is_err());
    }
}
