//! Role taxonomy and prompt rendering.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ResultExt};

/// Healthcare role hierarchy shipped with the tool (33 roles).
pub const DEFAULT_TAXONOMY_JSON: &str = include_str!("../../data/taxonomy.json");

pub const PROMPT_PREFIX: &str = "Photo of a ";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Role {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subcategory {
    /// `None` where the hierarchy has no subcategory level.
    pub name: Option<String>,
    pub roles: Vec<Role>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub subcategories: Vec<Subcategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Taxonomy {
    pub categories: Vec<Category>,
}

/// On-disk shape: roles are plain strings or `{name, aliases}`, and a category
/// may list roles directly instead of through subcategories.
mod raw {
    use serde::Deserialize;

    #[derive(Deserialize)]
    #[serde(untagged)]
    pub enum Role {
        Name(String),
        Full {
            name: String,
            #[serde(default)]
            aliases: Vec<String>,
        },
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Subcategory {
        #[serde(default)]
        pub name: Option<String>,
        pub roles: Vec<Role>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct Category {
        pub name: String,
        #[serde(default)]
        pub roles: Vec<Role>,
        #[serde(default)]
        pub subcategories: Vec<Subcategory>,
    }

    #[derive(Deserialize)]
    pub struct Taxonomy {
        pub categories: Vec<Category>,
    }
}

impl From<raw::Role> for Role {
    fn from(r: raw::Role) -> Self {
        match r {
            raw::Role::Name(name) => Role { name, aliases: vec![] },
            raw::Role::Full { name, aliases } => Role { name, aliases },
        }
    }
}

impl<'de> Deserialize<'de> for Taxonomy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = raw::Taxonomy::deserialize(d)?;
        let categories = raw
            .categories
            .into_iter()
            .map(|c| {
                let mut subcategories = Vec::new();
                if !c.roles.is_empty() {
                    subcategories.push(Subcategory {
                        name: None,
                        roles: c.roles.into_iter().map(Role::from).collect(),
                    });
                }
                subcategories.extend(c.subcategories.into_iter().map(|s| Subcategory {
                    name: s.name.filter(|n| n != "--"),
                    roles: s.roles.into_iter().map(Role::from).collect(),
                }));
                Category {
                    name: c.name,
                    subcategories,
                }
            })
            .collect();
        Ok(Taxonomy { categories })
    }
}

/// A role with its position in the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoleEntry<'a> {
    pub category: &'a str,
    pub subcategory: Option<&'a str>,
    pub role: &'a Role,
}

impl Taxonomy {
    pub fn default_healthcare() -> Self {
        Self::from_json(DEFAULT_TAXONOMY_JSON).expect("bundled taxonomy is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: Taxonomy = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::from_json(&text).at(path)
    }

    /// A flat taxonomy with one category and no subcategories.
    pub fn flat(category: &str, roles: &[&str]) -> Result<Self> {
        let t = Taxonomy {
            categories: vec![Category {
                name: category.to_string(),
                subcategories: vec![Subcategory {
                    name: None,
                    roles: roles
                        .iter()
                        .map(|r| Role {
                            name: r.to_string(),
                            aliases: vec![],
                        })
                        .collect(),
                }],
            }],
        };
        t.validate()?;
        Ok(t)
    }

    /// Role names and aliases must be non-empty and globally unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for entry in self.entries() {
            for name in std::iter::once(&entry.role.name).chain(&entry.role.aliases) {
                if name.trim().is_empty() {
                    return Err(Error::EmptyRoleName);
                }
                if !seen.insert(name.to_lowercase()) {
                    return Err(Error::DuplicateRole(name.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> impl Iterator<Item = RoleEntry<'_>> {
        self.categories.iter().flat_map(|c| {
            c.subcategories.iter().flat_map(move |s| {
                s.roles.iter().map(move |role| RoleEntry {
                    category: &c.name,
                    subcategory: s.name.as_deref(),
                    role,
                })
            })
        })
    }

    pub fn role_names(&self) -> Vec<&str> {
        self.entries().map(|e| e.role.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Resolves a name or alias to the canonical role name (case-insensitive).
    pub fn canonical(&self, name: &str) -> Option<&str> {
        let wanted = name.trim().to_lowercase();
        self.entries()
            .find(|e| {
                e.role.name.to_lowercase() == wanted
                    || e.role.aliases.iter().any(|a| a.to_lowercase() == wanted)
            })
            .map(|e| e.role.name.as_str())
    }

    pub fn entry(&self, canonical_name: &str) -> Option<RoleEntry<'_>> {
        self.entries().find(|e| e.role.name == canonical_name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("taxonomy serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub role: String,
    pub prompt_text: String,
}

pub type PromptSet = Vec<Prompt>;

pub fn render_prompt(role: &str) -> String {
    format!("{PROMPT_PREFIX}{}", role.to_lowercase())
}

/// One prompt per role, in taxonomy order.
pub fn render_prompts(taxonomy: &Taxonomy) -> PromptSet {
    taxonomy
        .entries()
        .map(|e| Prompt {
            role: e.role.name.clone(),
            prompt_text: render_prompt(&e.role.name),
        })
        .collect()
}
