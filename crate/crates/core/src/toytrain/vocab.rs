//! Toy vocabulary: tokens with bias roles and target-pair structure.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::Value;

use crate::error::{Error, Result};

/// Bias role of a vocabulary token. Target roles come in counterpart pairs
/// (e.g. "woman"/"man"); attribute roles name the two concept classes the
/// corpus associates targets with; everything else is neutral filler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Role {
    Target1,
    Target2,
    Attr1,
    Attr2,
    Neutral,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Target1 => "target_1",
            Role::Target2 => "target_2",
            Role::Attr1 => "attr_1",
            Role::Attr2 => "attr_2",
            Role::Neutral => "neutral",
        }
    }

    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "target_1" => Some(Role::Target1),
            "target_2" => Some(Role::Target2),
            "attr_1" => Some(Role::Attr1),
            "attr_2" => Some(Role::Attr2),
            "neutral" => Some(Role::Neutral),
            _ => None,
        }
    }

    pub fn is_special(self) -> bool {
        self != Role::Neutral
    }
}

/// An immutable vocabulary with token ids assigned lexicographically, so the
/// id space is independent of file or insertion order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyVocab {
    tokens: Vec<String>,
    roles: Vec<Role>,
    /// Partner id for target tokens, `None` for attributes and neutrals.
    pair: Vec<Option<u32>>,
    index: BTreeMap<String, u32>,
}

impl ToyVocab {
    /// Build a vocabulary from per-token roles plus the (target_1, target_2)
    /// pair list. Every target token must appear in exactly one pair.
    pub fn new(roles: BTreeMap<String, Role>, pairs: &[(String, String)]) -> Result<Self> {
        for token in roles.keys() {
            if token.is_empty() || token.split_whitespace().count() != 1 {
                return Err(Error::InvalidConfig {
                    reason: format!("token '{token}' is empty or contains whitespace"),
                });
            }
            if token == "pairs" {
                return Err(Error::InvalidConfig {
                    reason: "'pairs' is reserved by the vocabulary file format".into(),
                });
            }
        }
        let tokens: Vec<String> = roles.keys().cloned().collect(); // BTreeMap: sorted
        let index: BTreeMap<String, u32> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        let role_vec: Vec<Role> = tokens.iter().map(|t| roles[t]).collect();

        let mut pair = vec![None; tokens.len()];
        for (t1, t2) in pairs {
            let (i1, i2) = match (index.get(t1), index.get(t2)) {
                (Some(&i1), Some(&i2)) => (i1, i2),
                _ => {
                    return Err(Error::InvalidConfig {
                        reason: format!("pair ({t1}, {t2}) names a token without a role entry"),
                    })
                }
            };
            if role_vec[i1 as usize] != Role::Target1 || role_vec[i2 as usize] != Role::Target2 {
                return Err(Error::InvalidConfig {
                    reason: format!(
                        "pair ({t1}, {t2}) must be (target_1, target_2), got ({}, {})",
                        role_vec[i1 as usize].as_str(),
                        role_vec[i2 as usize].as_str()
                    ),
                });
            }
            for &i in [i1, i2].iter() {
                if pair[i as usize].is_some() {
                    return Err(Error::InvalidConfig {
                        reason: format!("token '{}' appears in more than one pair", tokens[i as usize]),
                    });
                }
            }
            pair[i1 as usize] = Some(i2);
            pair[i2 as usize] = Some(i1);
        }
        for (i, role) in role_vec.iter().enumerate() {
            if matches!(role, Role::Target1 | Role::Target2) && pair[i].is_none() {
                return Err(Error::InvalidConfig {
                    reason: format!("target token '{}' has no pair", tokens[i]),
                });
            }
        }
        Ok(ToyVocab { tokens, roles: role_vec, pair, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn id(&self, token: &str) -> Result<u32> {
        self.index
            .get(token)
            .copied()
            .ok_or_else(|| Error::OutOfVocab { token: token.to_string() })
    }

    pub fn role(&self, id: u32) -> Role {
        self.roles[id as usize]
    }

    /// Counterpart target id, if `id` is a target token.
    pub fn pair_of(&self, id: u32) -> Option<u32> {
        self.pair[id as usize]
    }

    pub fn ids_with_role(&self, role: Role) -> Vec<u32> {
        (0..self.tokens.len() as u32).filter(|&i| self.roles[i as usize] == role).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    // -- file format --------------------------------------------------------

    /// Parse the JSON vocabulary format: one top-level object whose `pairs`
    /// key lists `[target_1, target_2]` pairs and whose every other key maps
    /// a token to its role name.
    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let bad = |reason: String| Error::BadInputFile { path: origin.to_path_buf(), reason };
        let value: Value =
            serde_json::from_str(text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
        let object = value.as_object().ok_or_else(|| bad("expected a JSON object".into()))?;

        let mut roles = BTreeMap::new();
        let mut pairs = Vec::new();
        for (key, value) in object {
            if key == "pairs" {
                let list = value
                    .as_array()
                    .ok_or_else(|| bad("'pairs' must be an array of 2-element arrays".into()))?;
                for entry in list {
                    match entry.as_array().map(Vec::as_slice) {
                        Some([Value::String(t1), Value::String(t2)]) => {
                            pairs.push((t1.clone(), t2.clone()));
                        }
                        _ => return Err(bad(format!("malformed pair entry {entry}"))),
                    }
                }
            } else {
                let role_name = value
                    .as_str()
                    .ok_or_else(|| bad(format!("role for '{key}' must be a string")))?;
                let role = Role::parse(role_name)
                    .ok_or_else(|| bad(format!("unknown role '{role_name}' for '{key}'")))?;
                roles.insert(key.clone(), role);
            }
        }
        ToyVocab::new(roles, &pairs)
    }

    pub fn to_json(&self) -> String {
        let mut object = serde_json::Map::new();
        for (token, &id) in &self.index {
            object.insert(token.clone(), Value::String(self.roles[id as usize].as_str().into()));
        }
        let pairs: Vec<Value> = (0..self.tokens.len() as u32)
            .filter(|&i| self.roles[i as usize] == Role::Target1)
            .map(|i| {
                let j = self.pair[i as usize].expect("validated: every target has a pair");
                Value::Array(vec![
                    Value::String(self.tokens[i as usize].clone()),
                    Value::String(self.tokens[j as usize].clone()),
                ])
            })
            .collect();
        object.insert("pairs".into(), Value::Array(pairs));
        serde_json::to_string_pretty(&Value::Object(object)).expect("JSON maps always serialize")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ToyVocab::from_json(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// A 12-token vocabulary shared by tests across the toytrain submodules.
#[cfg(test)]
pub(crate) fn tiny_vocab() -> ToyVocab {
    let mut roles = BTreeMap::new();
    for (token, role) in [
        ("woman", Role::Target1),
        ("man", Role::Target2),
        ("girl", Role::Target1),
        ("boy", Role::Target2),
        ("art", Role::Attr1),
        ("dance", Role::Attr1),
        ("math", Role::Attr2),
        ("science", Role::Attr2),
        ("the", Role::Neutral),
        ("walked", Role::Neutral),
        ("green", Role::Neutral),
        ("house", Role::Neutral),
    ] {
        roles.insert(token.to_string(), role);
    }
    let pairs =
        vec![("woman".to_string(), "man".to_string()), ("girl".to_string(), "boy".to_string())];
    ToyVocab::new(roles, &pairs).unwrap()
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
