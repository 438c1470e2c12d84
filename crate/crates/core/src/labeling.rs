//! Domain labelings: the mapping from tables, columns and joins to entities,
//! typed attributes and relationships.
//!
//! A labeling document has three sections: metadata (`id`, `name`,
//! `description`), the physical schema (`dataSource`) and the abstraction
//! layer (`dataAbstraction`). Parsing validates every cross-reference and
//! reports offending elements by path.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::taxonomy::{AttributeType, TypeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageType {
    Integer,
    Float,
    Text,
    Datetime,
    Boolean,
}

impl StorageType {
    pub fn name(self) -> &'static str {
        match self {
            StorageType::Integer => "integer",
            StorageType::Float => "float",
            StorageType::Text => "text",
            StorageType::Datetime => "datetime",
            StorageType::Boolean => "boolean",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(rename = "type")]
    pub storage: StorageType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSchema {
    pub name: String,
    #[serde(rename = "primaryKey")]
    pub primary_key: String,
    pub columns: Vec<ColumnSchema>,
}

impl TableSchema {
    pub fn column(&self, name: &str) -> Option<&ColumnSchema> {
        self.columns.iter().find(|c| c.name == name)
    }
}

/// A join between two tables: equality of each `(from column, to column)`
/// pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JoinDef {
    pub name: String,
    #[serde(rename = "from")]
    pub from_table: String,
    #[serde(rename = "to")]
    pub to_table: String,
    pub on: Vec<(String, String)>,
}

impl JoinDef {
    /// The table on the other side of this join from `table`.
    pub fn other_side(&self, table: &str) -> Option<&str> {
        if self.from_table == table {
            Some(&self.to_table)
        } else if self.to_table == table {
            Some(&self.from_table)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub tables: Vec<TableSchema>,
    #[serde(default)]
    pub joins: Vec<JoinDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub nicename: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    #[serde(rename = "type")]
    pub storage: StorageType,
    #[serde(rename = "isa")]
    pub attribute_types: TypeSet,
    pub source: ColumnRef,
    #[serde(rename = "viaJoins", default, skip_serializing_if = "Option::is_none")]
    pub via_joins: Option<Vec<String>>,
}

impl AttributeDef {
    /// Display name used in questions. Falls back to the column name with
    /// underscores turned into spaces, lowercased.
    pub fn display_name(&self) -> String {
        if self.nicename.is_empty() {
            self.source.column.replace('_', " ").to_lowercase()
        } else {
            self.nicename.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntityDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub nicename: String,
    #[serde(rename = "primaryTable")]
    pub primary_table: String,
    #[serde(rename = "identifierAttribute", default, skip_serializing_if = "Option::is_none")]
    pub identifier_attribute: Option<String>,
    pub attributes: Vec<AttributeDef>,
}

impl EntityDef {
    pub fn attribute(&self, name: &str) -> Option<&AttributeDef> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn identifier(&self) -> Option<&AttributeDef> {
        self.identifier_attribute.as_deref().and_then(|n| self.attribute(n))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cardinality {
    #[serde(rename = "o2o")]
    OneToOne,
    #[serde(rename = "o2m")]
    OneToMany,
    #[serde(rename = "m2m")]
    ManyToMany,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationshipDef {
    pub name: String,
    #[serde(rename = "from")]
    pub from_entity: String,
    #[serde(rename = "to")]
    pub to_entity: String,
    #[serde(rename = "relation")]
    pub cardinality: Cardinality,
    #[serde(rename = "joinChain")]
    pub join_chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataAbstraction {
    pub entities: Vec<EntityDef>,
    #[serde(default)]
    pub relationships: Vec<RelationshipDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainLabeling {
    pub id: String,
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "dataSource")]
    pub data_source: DataSource,
    #[serde(rename = "dataAbstraction")]
    pub data_abstraction: DataAbstraction,
}

/// One validation problem, located by a path into the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelingError {
    #[error("malformed labeling document: {0}")]
    Structural(String),
    #[error("invalid labeling: {}", join_issues(.0))]
    Invalid(Vec<Issue>),
    #[error("unknown entity `{0}`")]
    UnknownEntity(String),
    #[error("empty type set")]
    EmptyTypeSet,
    #[error("entities `{0}` and `{1}` are not connected")]
    NotConnected(String, String),
}

impl LabelingError {
    pub fn issues(&self) -> &[Issue] {
        match self {
            LabelingError::Invalid(issues) => issues,
            _ => &[],
        }
    }
}

fn join_issues(issues: &[Issue]) -> String {
    issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

/// Parses and validates a labeling document.
pub fn parse_labeling(document: &str) -> Result<DomainLabeling, LabelingError> {
    let labeling: DomainLabeling =
        serde_json::from_str(document).map_err(|e| LabelingError::Structural(e.to_string()))?;
    labeling.validate()?;
    Ok(labeling)
}

impl DomainLabeling {
    /// Serializes back to the document format.
    pub fn to_document(&self) -> String {
        serde_json::to_string_pretty(self).expect("labeling serializes")
    }

    pub fn entities(&self) -> &[EntityDef] {
        &self.data_abstraction.entities
    }

    pub fn relationships(&self) -> &[RelationshipDef] {
        &self.data_abstraction.relationships
    }

    pub fn entity(&self, name: &str) -> Option<&EntityDef> {
        self.entities().iter().find(|e| e.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&TableSchema> {
        self.data_source.tables.iter().find(|t| t.name == name)
    }

    pub fn join(&self, name: &str) -> Option<&JoinDef> {
        self.data_source.joins.iter().find(|j| j.name == name)
    }

    /// Attributes of `entity` whose types intersect `wanted`, in declaration
    /// order.
    pub fn attributes_of_type(
        &self,
        entity: &str,
        wanted: TypeSet,
    ) -> Result<Vec<&AttributeDef>, LabelingError> {
        let entity = self
            .entity(entity)
            .ok_or_else(|| LabelingError::UnknownEntity(entity.into()))?;
        if wanted.is_empty() {
            return Err(LabelingError::EmptyTypeSet);
        }
        Ok(entity
            .attributes
            .iter()
            .filter(|a| a.attribute_types.intersects(wanted))
            .collect())
    }

    /// Shortest chain of relationships between two entities in the undirected
    /// relationship graph. Among equally short chains the one whose sequence
    /// of relationship names is lexicographically smallest wins.
    pub fn relationship_path(
        &self,
        from: &str,
        to: &str,
    ) -> Result<Vec<&RelationshipDef>, LabelingError> {
        for name in [from, to] {
            if self.entity(name).is_none() {
                return Err(LabelingError::UnknownEntity(name.into()));
            }
        }
        if from == to {
            return Ok(Vec::new());
        }
        // Distances to the target drive a greedy walk from the source that
        // always takes the smallest-named edge that stays on a shortest path.
        let mut adjacency: BTreeMap<&str, Vec<(&str, &RelationshipDef)>> = BTreeMap::new();
        for rel in self.relationships() {
            adjacency
                .entry(&rel.from_entity)
                .or_default()
                .push((&rel.to_entity, rel));
            adjacency
                .entry(&rel.to_entity)
                .or_default()
                .push((&rel.from_entity, rel));
        }
        let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(to, 0);
        queue.push_back(to);
        while let Some(node) = queue.pop_front() {
            let d = dist[node];
            for (next, _) in adjacency.get(node).into_iter().flatten() {
                if !dist.contains_key(next) {
                    dist.insert(next, d + 1);
                    queue.push_back(next);
                }
            }
        }
        let Some(&total) = dist.get(from) else {
            return Err(LabelingError::NotConnected(from.into(), to.into()));
        };
        let mut path = Vec::with_capacity(total);
        let mut current = from;
        while current != to {
            let want = dist[current] - 1;
            let (next, rel) = adjacency[current]
                .iter()
                .filter(|(n, _)| dist.get(n) == Some(&want))
                .min_by(|a, b| a.1.name.cmp(&b.1.name))
                .expect("a shortest-path successor exists");
            path.push(*rel);
            current = next;
        }
        Ok(path)
    }

    /// Checks every structural and referential invariant.
    pub fn validate(&self) -> Result<(), LabelingError> {
        let mut issues = Vec::new();
        let mut issue = |path: String, message: String| issues.push(Issue { path, message });

        let mut table_names = BTreeSet::new();
        for (ti, table) in self.data_source.tables.iter().enumerate() {
            let path = format!("dataSource.tables[{ti}]");
            if !table_names.insert(table.name.as_str()) {
                issue(path.clone(), format!("duplicate table `{}`", table.name));
            }
            let mut cols = BTreeSet::new();
            for (ci, col) in table.columns.iter().enumerate() {
                if !cols.insert(col.name.as_str()) {
                    issue(format!("{path}.columns[{ci}]"), format!("duplicate column `{}`", col.name));
                }
            }
            if table.column(&table.primary_key).is_none() {
                issue(
                    format!("{path}.primaryKey"),
                    format!("primary key `{}` is not a column of `{}`", table.primary_key, table.name),
                );
            }
        }

        let mut join_names = BTreeSet::new();
        for (ji, join) in self.data_source.joins.iter().enumerate() {
            let path = format!("dataSource.joins[{ji}]");
            if !join_names.insert(join.name.as_str()) {
                issue(path.clone(), format!("duplicate join `{}`", join.name));
            }
            if join.on.is_empty() {
                issue(format!("{path}.on"), "join has no column pairs".into());
            }
            let from = self.table(&join.from_table);
            let to = self.table(&join.to_table);
            if from.is_none() {
                issue(format!("{path}.from"), format!("unknown table `{}`", join.from_table));
            }
            if to.is_none() {
                issue(format!("{path}.to"), format!("unknown table `{}`", join.to_table));
            }
            for (pi, (fc, tc)) in join.on.iter().enumerate() {
                if let Some(t) = from {
                    if t.column(fc).is_none() {
                        issue(format!("{path}.on[{pi}][0]"), format!("unknown column `{}.{fc}`", t.name));
                    }
                }
                if let Some(t) = to {
                    if t.column(tc).is_none() {
                        issue(format!("{path}.on[{pi}][1]"), format!("unknown column `{}.{tc}`", t.name));
                    }
                }
            }
        }

        let mut entity_names = BTreeSet::new();
        for (ei, entity) in self.entities().iter().enumerate() {
            let path = format!("dataAbstraction.entities[{ei}]");
            if !entity_names.insert(entity.name.as_str()) {
                issue(path.clone(), format!("duplicate entity `{}`", entity.name));
            }
            let primary_known = self.table(&entity.primary_table).is_some();
            if !primary_known {
                issue(
                    format!("{path}.primaryTable"),
                    format!("unknown table `{}`", entity.primary_table),
                );
            }
            let mut attr_names = BTreeSet::new();
            for (ai, attr) in entity.attributes.iter().enumerate() {
                let apath = format!("{path}.attributes[{ai}]");
                if !attr_names.insert(attr.name.as_str()) {
                    issue(apath.clone(), format!("duplicate attribute `{}`", attr.name));
                }
                if attr.attribute_types.is_empty() {
                    issue(format!("{apath}.isa"), "attribute has no attribute types".into());
                } else if !attr.attribute_types.only_base() {
                    let derived: Vec<_> =
                        attr.attribute_types.iter().filter(|t| !t.is_base()).map(AttributeType::name).collect();
                    issue(
                        format!("{apath}.isa"),
                        format!("derived types are not allowed on labeled attributes: {}", derived.join(", ")),
                    );
                }
                match self.table(&attr.source.table) {
                    None => issue(
                        format!("{apath}.source.table"),
                        format!("unknown table `{}`", attr.source.table),
                    ),
                    Some(t) => match t.column(&attr.source.column) {
                        None => issue(
                            format!("{apath}.source.column"),
                            format!("unknown column `{}.{}`", t.name, attr.source.column),
                        ),
                        Some(c) if c.storage != attr.storage => issue(
                            format!("{apath}.type"),
                            format!(
                                "declared `{}` but column `{}.{}` is `{}`",
                                attr.storage.name(),
                                t.name,
                                c.name,
                                c.storage.name()
                            ),
                        ),
                        Some(_) => {}
                    },
                }
                if primary_known {
                    match &attr.via_joins {
                        None if attr.source.table != entity.primary_table => issue(
                            format!("{apath}.viaJoins"),
                            format!(
                                "source table `{}` differs from primary table `{}` and no join chain is given",
                                attr.source.table, entity.primary_table
                            ),
                        ),
                        None => {}
                        Some(chain) => {
                            if let Err((i, msg)) =
                                self.walk_chain(&entity.primary_table, &attr.source.table, chain)
                            {
                                issue(format!("{apath}.viaJoins[{i}]"), msg);
                            }
                        }
                    }
                }
            }
            if let Some(id) = &entity.identifier_attribute {
                match entity.attribute(id) {
                    None => issue(
                        format!("{path}.identifierAttribute"),
                        format!("unknown attribute `{id}`"),
                    ),
                    Some(a) if !a.attribute_types.contains(AttributeType::Identifier) => issue(
                        format!("{path}.identifierAttribute"),
                        format!("attribute `{id}` is not typed Identifier"),
                    ),
                    Some(_) => {}
                }
            }
        }

        let mut rel_names = BTreeSet::new();
        for (ri, rel) in self.relationships().iter().enumerate() {
            let path = format!("dataAbstraction.relationships[{ri}]");
            if !rel_names.insert(rel.name.as_str()) {
                issue(path.clone(), format!("duplicate relationship `{}`", rel.name));
            }
            let from = self.entity(&rel.from_entity);
            let to = self.entity(&rel.to_entity);
            if from.is_none() {
                issue(format!("{path}.from"), format!("unknown entity `{}`", rel.from_entity));
            }
            if to.is_none() {
                issue(format!("{path}.to"), format!("unknown entity `{}`", rel.to_entity));
            }
            let min = match rel.cardinality {
                Cardinality::ManyToMany => 2,
                _ => 1,
            };
            if rel.join_chain.len() < min {
                issue(
                    format!("{path}.joinChain"),
                    format!("a {:?} relationship needs at least {min} join(s)", rel.cardinality),
                );
            }
            if let (Some(from), Some(to)) = (from, to) {
                if let Err((i, msg)) = self.walk_chain(&from.primary_table, &to.primary_table, &rel.join_chain) {
                    issue(format!("{path}.joinChain[{i}]"), msg);
                }
            } else {
                for (i, j) in rel.join_chain.iter().enumerate() {
                    if self.join(j).is_none() {
                        issue(format!("{path}.joinChain[{i}]"), format!("unknown join `{j}`"));
                    }
                }
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(LabelingError::Invalid(issues))
        }
    }

    /// Follows a chain of joins from `start`, which must end at `end`.
    fn walk_chain(&self, start: &str, end: &str, chain: &[String]) -> Result<(), (usize, String)> {
        let mut current = start;
        for (i, name) in chain.iter().enumerate() {
            let join = self.join(name).ok_or_else(|| (i, format!("unknown join `{name}`")))?;
            current = join.other_side(current).ok_or_else(|| {
                (i, format!("join `{name}` does not touch table `{current}`"))
            })?;
        }
        if current != end {
            let last = chain.len().saturating_sub(1);
            return Err((last, format!("join chain ends at `{current}`, expected `{end}`")));
        }
        Ok(())
    }
}
