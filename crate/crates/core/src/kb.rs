//! FAQ knowledge base: domains → entities → question/answer snippets.
//!
//! The on-disk layout is the DSTC9 Track 1 `knowledge.json` shape:
//!
//! ```text
//! { "<domain>": { "<entity_id>": { "name": <string|null>,
//!                                  "docs": { "<doc_id>": {"title": Q, "body": A} } } } }
//! ```
//!
//! Domain-level knowledge (train, taxi) hangs off the pseudo-entity `"*"`,
//! which has no name. Insertion order of domains, entities and snippets is
//! preserved and is the deterministic tie-break order everywhere downstream.

use std::fmt;
use std::io::{Read, Write};

use indexmap::IndexMap;
use serde::de::{MapAccess, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{from_json_reader, Error, Result};

/// Entity id used for domain-level knowledge.
pub const DOMAIN_LEVEL_ENTITY: &str = "*";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snippet {
    pub question: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityRecord {
    pub entity_id: String,
    pub name: Option<String>,
    pub docs: IndexMap<String, Snippet>,
}

impl EntityRecord {
    pub fn is_domain_level(&self) -> bool {
        self.entity_id == DOMAIN_LEVEL_ENTITY
    }
}

/// Addresses one FAQ pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SnippetRef {
    pub domain: String,
    #[serde(with = "id_repr")]
    pub entity_id: String,
    #[serde(with = "id_repr")]
    pub doc_id: String,
}

impl SnippetRef {
    pub fn new(domain: impl Into<String>, entity_id: impl Into<String>, doc_id: impl Into<String>) -> Self {
        SnippetRef {
            domain: domain.into(),
            entity_id: entity_id.into(),
            doc_id: doc_id.into(),
        }
    }

    pub fn entity(&self) -> EntityRef {
        EntityRef::new(self.domain.clone(), self.entity_id.clone())
    }
}

impl fmt::Display for SnippetRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.domain, self.entity_id, self.doc_id)
    }
}

/// Addresses one entity (or the `"*"` pseudo-entity) within a domain.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityRef {
    pub domain: String,
    #[serde(with = "id_repr")]
    pub entity_id: String,
}

impl EntityRef {
    pub fn new(domain: impl Into<String>, entity_id: impl Into<String>) -> Self {
        EntityRef {
            domain: domain.into(),
            entity_id: entity_id.into(),
        }
    }
}

impl fmt::Display for EntityRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.domain, self.entity_id)
    }
}

/// DSTC9 label files write numeric ids as JSON integers and `"*"` as a
/// string. Accept either; write digit-only ids back as integers.
mod id_repr {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Str(String),
    }

    pub fn serialize<S: Serializer>(id: &str, s: S) -> Result<S::Ok, S::Error> {
        let numeric = !id.is_empty()
            && id.bytes().all(|b| b.is_ascii_digit())
            && (id == "0" || !id.starts_with('0'));
        match id.parse::<u64>() {
            Ok(n) if numeric => s.serialize_u64(n),
            _ => s.serialize_str(id),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
        Ok(match Raw::deserialize(d)? {
            Raw::Int(n) => n.to_string(),
            Raw::Str(s) => s,
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeBase {
    domains: IndexMap<String, IndexMap<String, EntityRecord>>,
    snippet_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DomainStats {
    pub domain: String,
    pub entities: usize,
    pub snippets: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct KbStats {
    pub domains: Vec<DomainStats>,
    pub total_entities: usize,
    pub total_snippets: usize,
}

impl fmt::Display for KbStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<14}{:>10}{:>12}", "domain", "entities", "snippets")?;
        for d in &self.domains {
            writeln!(f, "{:<14}{:>10}{:>12}", d.domain, d.entities, d.snippets)?;
        }
        write!(
            f,
            "{:<14}{:>10}{:>12}",
            "total", self.total_entities, self.total_snippets
        )
    }
}

impl KnowledgeBase {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parse and validate a knowledge file.
    pub fn load<R: Read>(source: R) -> Result<Self> {
        let raw: Entries<Entries<RawEntity>> = from_json_reader(source)?;
        let mut kb = KnowledgeBase::new();
        for (domain, entities) in raw.0 {
            let domain = domain.to_lowercase();
            if kb.domains.contains_key(&domain) {
                return Err(Error::Validation(format!(
                    "domain '{domain}' appears more than once (after case folding)"
                )));
            }
            kb.domains.insert(domain.clone(), IndexMap::new());
            for (entity_id, entity) in entities.0 {
                if kb.domains[&domain].contains_key(&entity_id) {
                    return Err(Error::Validation(format!(
                        "duplicate entity id {domain}/{entity_id}"
                    )));
                }
                kb.add_entity(&domain, &entity_id, entity.name)?;
                for (doc_id, doc) in entity.docs.0 {
                    kb.insert_snippet(
                        &domain,
                        &entity_id,
                        &doc_id,
                        Snippet {
                            question: doc.title,
                            answer: doc.body,
                        },
                    )?;
                }
            }
        }
        Ok(kb)
    }

    pub fn load_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::load(std::io::BufReader::new(file))
    }

    /// Register an entity. Re-adding an existing entity with the same name
    /// is a no-op.
    pub fn add_entity(&mut self, domain: &str, entity_id: &str, name: Option<String>) -> Result<()> {
        validate_domain_name(domain)?;
        if entity_id.is_empty() {
            return Err(Error::Validation(format!("empty entity id in domain '{domain}'")));
        }
        let name = name.filter(|n| !n.trim().is_empty());
        if (entity_id == DOMAIN_LEVEL_ENTITY) != name.is_none() {
            return Err(Error::Validation(format!(
                "entity {domain}/{entity_id}: name must be null exactly for the '*' pseudo-entity"
            )));
        }
        let entities = self.domains.entry(domain.to_string()).or_default();
        match entities.get(entity_id) {
            Some(existing) if existing.name == name => Ok(()),
            Some(_) => Err(Error::Validation(format!(
                "entity {domain}/{entity_id} registered twice with different names"
            ))),
            None => {
                entities.insert(
                    entity_id.to_string(),
                    EntityRecord {
                        entity_id: entity_id.to_string(),
                        name,
                        docs: IndexMap::new(),
                    },
                );
                Ok(())
            }
        }
    }

    pub fn insert_snippet(&mut self, domain: &str, entity_id: &str, doc_id: &str, snippet: Snippet) -> Result<()> {
        if snippet.question.trim().is_empty() || snippet.answer.trim().is_empty() {
            return Err(Error::Validation(format!(
                "snippet {domain}/{entity_id}/{doc_id} has an empty question or answer"
            )));
        }
        let entity = self
            .domains
            .get_mut(domain)
            .and_then(|e| e.get_mut(entity_id))
            .ok_or_else(|| Error::Lookup(format!("unknown entity {domain}/{entity_id}")))?;
        if entity.docs.contains_key(doc_id) {
            return Err(Error::Validation(format!(
                "duplicate doc id {domain}/{entity_id}/{doc_id}"
            )));
        }
        entity.docs.insert(doc_id.to_string(), snippet);
        self.snippet_count += 1;
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.snippet_count == 0
    }

    /// Total number of snippets.
    pub fn len(&self) -> usize {
        self.snippet_count
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    pub fn has_domain(&self, domain: &str) -> bool {
        self.domains.contains_key(domain)
    }

    pub fn entities(&self, domain: &str) -> Option<impl Iterator<Item = &EntityRecord>> {
        self.domains.get(domain).map(|e| e.values())
    }

    pub fn entity(&self, domain: &str, entity_id: &str) -> Option<&EntityRecord> {
        self.domains.get(domain)?.get(entity_id)
    }

    /// Every named entity, in insertion order.
    pub fn named_entities(&self) -> impl Iterator<Item = (&str, &EntityRecord)> {
        self.domains.iter().flat_map(|(domain, entities)| {
            entities
                .values()
                .filter(|e| !e.is_domain_level())
                .map(move |e| (domain.as_str(), e))
        })
    }

    pub fn resolve(&self, r: &SnippetRef) -> Result<&Snippet> {
        self.entity(&r.domain, &r.entity_id)
            .and_then(|e| e.docs.get(&r.doc_id))
            .ok_or_else(|| Error::Lookup(format!("snippet {r} does not exist")))
    }

    /// Every snippet, in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (SnippetRef, &EntityRecord, &Snippet)> {
        self.domains.iter().flat_map(|(domain, entities)| {
            entities.values().flat_map(move |entity| {
                entity.docs.iter().map(move |(doc_id, snippet)| {
                    (
                        SnippetRef::new(domain.clone(), entity.entity_id.clone(), doc_id.clone()),
                        entity,
                        snippet,
                    )
                })
            })
        })
    }

    pub fn all_refs(&self) -> Vec<SnippetRef> {
        self.iter().map(|(r, _, _)| r).collect()
    }

    /// Snippet refs of one entity, in insertion order.
    pub fn entity_refs(&self, entity: &EntityRef) -> Result<Vec<SnippetRef>> {
        let record = self
            .entity(&entity.domain, &entity.entity_id)
            .ok_or_else(|| Error::Lookup(format!("unknown entity {entity}")))?;
        Ok(record
            .docs
            .keys()
            .map(|doc| SnippetRef::new(entity.domain.clone(), entity.entity_id.clone(), doc.clone()))
            .collect())
    }

    /// All snippets under `domain`, optionally restricted to `entity_ids`.
    /// Output follows the given entity order, then snippet insertion order.
    pub fn candidates_for(&self, domain: &str, entity_ids: Option<&[String]>) -> Result<Vec<SnippetRef>> {
        let entities = self
            .domains
            .get(domain)
            .ok_or_else(|| Error::Lookup(format!("unknown domain '{domain}'")))?;
        let mut out = Vec::new();
        match entity_ids {
            None => {
                for id in entities.keys() {
                    out.extend(self.entity_refs(&EntityRef::new(domain, id.clone()))?);
                }
            }
            Some(ids) => {
                for id in ids {
                    out.extend(self.entity_refs(&EntityRef::new(domain, id.clone()))?);
                }
            }
        }
        Ok(out)
    }

    pub fn stats(&self) -> KbStats {
        let mut stats = KbStats::default();
        for (domain, entities) in &self.domains {
            let named = entities.values().filter(|e| !e.is_domain_level()).count();
            let snippets = entities.values().map(|e| e.docs.len()).sum();
            stats.total_entities += named;
            stats.total_snippets += snippets;
            stats.domains.push(DomainStats {
                domain: domain.clone(),
                entities: named,
                snippets,
            });
        }
        stats
    }

    /// Write the knowledge base back out in the same layout it was read from.
    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer(writer, self).map_err(|e| Error::Io(e.into()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("knowledge base serializes")
    }
}

fn validate_domain_name(domain: &str) -> Result<()> {
    let ok = !domain.is_empty()
        && domain
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '-');
    if ok {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "domain name '{domain}' must be a lowercase token"
        )))
    }
}

impl Serialize for KnowledgeBase {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Doc<'a> {
            title: &'a str,
            body: &'a str,
        }
        #[derive(Serialize)]
        struct Ent<'a> {
            name: Option<&'a str>,
            docs: IndexMap<&'a str, Doc<'a>>,
        }
        let out: IndexMap<&str, IndexMap<&str, Ent<'_>>> = self
            .domains
            .iter()
            .map(|(domain, entities)| {
                let ents = entities
                    .iter()
                    .map(|(id, e)| {
                        let docs = e
                            .docs
                            .iter()
                            .map(|(doc_id, sn)| {
                                (
                                    doc_id.as_str(),
                                    Doc {
                                        title: &sn.question,
                                        body: &sn.answer,
                                    },
                                )
                            })
                            .collect();
                        (
                            id.as_str(),
                            Ent {
                                name: e.name.as_deref(),
                                docs,
                            },
                        )
                    })
                    .collect();
                (domain.as_str(), ents)
            })
            .collect();
        out.serialize(s)
    }
}

#[derive(Deserialize)]
struct RawEntity {
    #[serde(default)]
    name: Option<String>,
    docs: Entries<RawDoc>,
}

#[derive(Deserialize)]
struct RawDoc {
    title: String,
    body: String,
}

/// JSON object read as an ordered list of entries, keeping duplicate keys so
/// that validation can reject them instead of silently overwriting.
struct Entries<T>(Vec<(String, T)>);

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Entries<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: Deserialize<'de>> Visitor<'de> for V<T> {
            type Value = Entries<T>;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
                let mut out = Vec::with_capacity(map.size_hint().unwrap_or(0));
                while let Some((k, v)) = map.next_entry::<String, T>()? {
                    out.push((k, v));
                }
                Ok(Entries(out))
            }
        }
        d.deserialize_map(V(std::marker::PhantomData))
    }
}
