//! Attribute types and the registry of analytic operations.
//!
//! Every operation is described by a typed, arity-constrained signature. The
//! signatures are what let the checker decide whether an operation may be
//! applied to a given attribute, and what derived type the result carries.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::util::closest_match;

/// Semantic type of a data column or of a derived value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttributeType {
    Arithmetic,
    Categorical,
    Datetime,
    Document,
    Identifier,
    Metric,
    Entity,
    Attribute,
    AttributeCollection,
    Grouping,
    Filter,
    Sort,
    Limit,
    String,
}

impl AttributeType {
    pub const ALL: [AttributeType; 14] = [
        AttributeType::Arithmetic,
        AttributeType::Categorical,
        AttributeType::Datetime,
        AttributeType::Document,
        AttributeType::Identifier,
        AttributeType::Metric,
        AttributeType::Entity,
        AttributeType::Attribute,
        AttributeType::AttributeCollection,
        AttributeType::Grouping,
        AttributeType::Filter,
        AttributeType::Sort,
        AttributeType::Limit,
        AttributeType::String,
    ];

    pub const BASE: [AttributeType; 6] = [
        AttributeType::Arithmetic,
        AttributeType::Categorical,
        AttributeType::Datetime,
        AttributeType::Document,
        AttributeType::Identifier,
        AttributeType::Metric,
    ];

    pub const DERIVED: [AttributeType; 8] = [
        AttributeType::Entity,
        AttributeType::Attribute,
        AttributeType::AttributeCollection,
        AttributeType::Grouping,
        AttributeType::Filter,
        AttributeType::Sort,
        AttributeType::Limit,
        AttributeType::String,
    ];

    pub fn is_base(self) -> bool {
        (self as u16) < 6
    }

    pub fn name(self) -> &'static str {
        match self {
            AttributeType::Arithmetic => "Arithmetic",
            AttributeType::Categorical => "Categorical",
            AttributeType::Datetime => "Datetime",
            AttributeType::Document => "Document",
            AttributeType::Identifier => "Identifier",
            AttributeType::Metric => "Metric",
            AttributeType::Entity => "Entity",
            AttributeType::Attribute => "Attribute",
            AttributeType::AttributeCollection => "AttributeCollection",
            AttributeType::Grouping => "Grouping",
            AttributeType::Filter => "Filter",
            AttributeType::Sort => "Sort",
            AttributeType::Limit => "Limit",
            AttributeType::String => "String",
        }
    }

    /// Parses a type name. `Group` is accepted as a spelling of `Grouping`.
    pub fn from_name(name: &str) -> Option<AttributeType> {
        if name == "Group" {
            return Some(AttributeType::Grouping);
        }
        AttributeType::ALL.iter().copied().find(|t| t.name() == name)
    }

    fn bit(self) -> u16 {
        1 << (self as u16)
    }
}

impl fmt::Display for AttributeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for AttributeType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for AttributeType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        AttributeType::from_name(&name)
            .ok_or_else(|| serde::de::Error::custom(format!("unknown attribute type `{name}`")))
    }
}

/// A set of attribute types, stored as a bitset.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeSet(u16);

impl TypeSet {
    pub const EMPTY: TypeSet = TypeSet(0);

    pub fn of(types: &[AttributeType]) -> TypeSet {
        types.iter().copied().collect()
    }

    pub fn single(t: AttributeType) -> TypeSet {
        TypeSet(t.bit())
    }

    pub fn contains(self, t: AttributeType) -> bool {
        self.0 & t.bit() != 0
    }

    pub fn insert(&mut self, t: AttributeType) {
        self.0 |= t.bit();
    }

    pub fn union(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 | other.0)
    }

    pub fn intersection(self, other: TypeSet) -> TypeSet {
        TypeSet(self.0 & other.0)
    }

    pub fn intersects(self, other: TypeSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn only_base(self) -> bool {
        self.iter().all(AttributeType::is_base)
    }

    pub fn iter(self) -> impl Iterator<Item = AttributeType> {
        AttributeType::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl FromIterator<AttributeType> for TypeSet {
    fn from_iter<I: IntoIterator<Item = AttributeType>>(iter: I) -> Self {
        let mut set = TypeSet::EMPTY;
        for t in iter {
            set.insert(t);
        }
        set
    }
}

impl fmt::Debug for TypeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for TypeSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, t) in self.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(t.name())?;
        }
        f.write_str("]")
    }
}

impl Serialize for TypeSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for TypeSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let types = Vec::<AttributeType>::deserialize(d)?;
        Ok(types.into_iter().collect())
    }
}

/// An argument is admissible for a slot when it carries at least one type the
/// slot accepts.
pub fn types_accept(slot_types: TypeSet, value_types: TypeSet) -> bool {
    slot_types.intersects(value_types)
}

/// How many arguments a slot consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arity {
    Exactly(u8),
    AtLeast(u8),
    AtMost(u8),
}

impl Arity {
    pub const SURFACE_FORMS: [&'static str; 5] = ["1", "2", ">=1", ">=2", "<=1"];

    pub fn parse(s: &str) -> Result<Arity, TaxonomyError> {
        match s.trim() {
            "1" => Ok(Arity::Exactly(1)),
            "2" => Ok(Arity::Exactly(2)),
            ">=1" => Ok(Arity::AtLeast(1)),
            ">=2" => Ok(Arity::AtLeast(2)),
            "<=1" => Ok(Arity::AtMost(1)),
            other => Err(TaxonomyError::MalformedArity(other.to_owned())),
        }
    }

    pub fn min(self) -> usize {
        match self {
            Arity::Exactly(n) | Arity::AtLeast(n) => n as usize,
            Arity::AtMost(_) => 0,
        }
    }

    pub fn max(self) -> Option<usize> {
        match self {
            Arity::Exactly(n) | Arity::AtMost(n) => Some(n as usize),
            Arity::AtLeast(_) => None,
        }
    }

    pub fn is_optional(self) -> bool {
        matches!(self, Arity::AtMost(_))
    }

    /// Number of language-template placeholders this slot may fill. A
    /// variadic slot counts one position beyond its minimum.
    fn template_positions(self) -> usize {
        match self {
            Arity::Exactly(n) | Arity::AtMost(n) => n as usize,
            Arity::AtLeast(n) => n as usize + 1,
        }
    }
}

impl fmt::Display for Arity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arity::Exactly(n) => write!(f, "{n}"),
            Arity::AtLeast(n) => write!(f, ">={n}"),
            Arity::AtMost(n) => write!(f, "<={n}"),
        }
    }
}

impl Serialize for Arity {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Arity {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Arity::parse(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    Aggregation,
    Boolean,
    Arithmetic,
    DataOperation,
    Retrieval,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Aggregation => "Aggregation",
            Category::Boolean => "Boolean",
            Category::Arithmetic => "Arithmetic",
            Category::DataOperation => "DataOperation",
            Category::Retrieval => "Retrieval",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Slot {
    pub arity: Arity,
    pub types: TypeSet,
}

impl Slot {
    pub fn new(arity: Arity, types: &[AttributeType]) -> Slot {
        Slot { arity, types: TypeSet::of(types) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationSignature {
    pub name: String,
    pub category: Category,
    pub inputs: Vec<Slot>,
    pub outputs: Vec<Slot>,
    pub language_template: String,
}

impl OperationSignature {
    /// The type set of the (single) output slot.
    pub fn output_types(&self) -> TypeSet {
        self.outputs.iter().fold(TypeSet::EMPTY, |acc, s| acc.union(s.types))
    }

    /// Fills `{i}` placeholders in the language template.
    pub fn fill_template(&self, args: &[&str]) -> String {
        fill_placeholders(&self.language_template, args)
    }
}

pub(crate) fn fill_placeholders(template: &str, args: &[&str]) -> String {
    let mut out = String::with_capacity(template.len() + 16);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => match after[..close].parse::<usize>() {
                Ok(i) => {
                    out.push_str(args.get(i).copied().unwrap_or(""));
                    rest = &after[close + 1..];
                }
                Err(_) => {
                    out.push('{');
                    rest = after;
                }
            },
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

fn placeholder_indices(template: &str) -> Result<Vec<usize>, String> {
    let mut found = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| format!("unterminated placeholder in `{template}`"))?;
        let idx = after[..close]
            .parse::<usize>()
            .map_err(|_| format!("non-numeric placeholder `{{{}}}`", &after[..close]))?;
        found.push(idx);
        rest = &after[close + 1..];
    }
    found.sort_unstable();
    found.dedup();
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TaxonomyError {
    #[error("duplicate operation `{0}`")]
    DuplicateOperation(String),
    #[error("unknown attribute type `{0}`")]
    UnknownAttributeType(String),
    #[error("malformed arity `{0}` (accepted: 1, 2, >=1, >=2, <=1)")]
    MalformedArity(String),
    #[error("operation `{name}`: placeholder index out of range: {detail}")]
    PlaceholderOutOfRange { name: String, detail: String },
    #[error("operation `{name}`: {detail}")]
    InvalidSignature { name: String, detail: String },
    #[error("unknown operation `{name}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownOperation { name: String, suggestion: Option<String> },
    #[error("malformed operation document: {0}")]
    Malformed(String),
}

/// One argument group in an operation-definition document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArgDocument {
    pub arity: String,
    pub types: Vec<String>,
}

/// An operation-definition document: name, input argument types, output
/// argument types and language template. `category` is optional; when absent
/// it is inherited from a built-in of the same name or inferred from the
/// signature shape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperationDocument {
    pub name: String,
    pub input_args: Vec<ArgDocument>,
    pub output_args: Vec<ArgDocument>,
    pub language_template: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

impl OperationDocument {
    /// Parses one document, or a JSON array of documents.
    pub fn parse_many(text: &str) -> Result<Vec<OperationDocument>, TaxonomyError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| TaxonomyError::Malformed(e.to_string()))?;
        let docs = if value.is_array() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(value).map(|d| alloc::vec![d])
        };
        docs.map_err(|e| TaxonomyError::Malformed(e.to_string()))
    }

    fn to_slots(args: &[ArgDocument]) -> Result<Vec<Slot>, TaxonomyError> {
        args.iter()
            .map(|a| {
                let arity = Arity::parse(&a.arity)?;
                let types = a
                    .types
                    .iter()
                    .map(|t| {
                        AttributeType::from_name(t)
                            .ok_or_else(|| TaxonomyError::UnknownAttributeType(t.clone()))
                    })
                    .collect::<Result<TypeSet, _>>()?;
                Ok(Slot { arity, types })
            })
            .collect()
    }
}

impl From<&OperationSignature> for OperationDocument {
    fn from(sig: &OperationSignature) -> Self {
        let docs = |slots: &[Slot]| {
            slots
                .iter()
                .map(|s| ArgDocument {
                    arity: s.arity.to_string(),
                    types: s.types.iter().map(|t| t.name().to_owned()).collect(),
                })
                .collect()
        };
        OperationDocument {
            name: sig.name.clone(),
            input_args: docs(&sig.inputs),
            output_args: docs(&sig.outputs),
            language_template: sig.language_template.clone(),
            category: Some(sig.category),
        }
    }
}

fn infer_category(inputs: &[Slot], outputs: &[Slot]) -> Category {
    let out = outputs.iter().fold(TypeSet::EMPTY, |acc, s| acc.union(s.types));
    if out.contains(AttributeType::Filter) {
        Category::Boolean
    } else if inputs
        .iter()
        .any(|s| s.arity.is_optional() && s.types.contains(AttributeType::Grouping))
    {
        Category::Aggregation
    } else if out.contains(AttributeType::Arithmetic) || out.contains(AttributeType::Metric) {
        Category::Arithmetic
    } else {
        Category::DataOperation
    }
}

fn validate_signature(sig: &OperationSignature) -> Result<(), TaxonomyError> {
    let invalid = |detail: &str| TaxonomyError::InvalidSignature {
        name: sig.name.clone(),
        detail: detail.to_owned(),
    };
    if sig.name.is_empty() {
        return Err(invalid("empty name"));
    }
    if sig.outputs.is_empty() {
        return Err(invalid("no output slots"));
    }
    if sig.inputs.iter().chain(&sig.outputs).any(|s| s.types.is_empty()) {
        return Err(invalid("slot with an empty type set"));
    }
    let positions: usize = sig.inputs.iter().map(|s| s.arity.template_positions()).sum();
    let used = placeholder_indices(&sig.language_template).map_err(|detail| {
        TaxonomyError::PlaceholderOutOfRange { name: sig.name.clone(), detail }
    })?;
    if let Some(&max) = used.last() {
        if max >= positions {
            return Err(TaxonomyError::PlaceholderOutOfRange {
                name: sig.name.clone(),
                detail: format!("{{{max}}} but the signature has {positions} argument positions"),
            });
        }
        if used.len() != max + 1 {
            return Err(TaxonomyError::PlaceholderOutOfRange {
                name: sig.name.clone(),
                detail: "placeholder indices are not dense from {0}".to_owned(),
            });
        }
    }
    Ok(())
}

/// Immutable name-to-signature map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperationRegistry {
    operations: BTreeMap<String, OperationSignature>,
}

impl OperationRegistry {
    /// The registry of built-in operations.
    pub fn builtin() -> OperationRegistry {
        let operations = builtin_signatures()
            .into_iter()
            .map(|s| (s.name.clone(), s))
            .collect();
        OperationRegistry { operations }
    }

    /// Built-ins merged with the supplied documents. A document named like a
    /// built-in replaces it; two documents with the same name are an error.
    pub fn load(documents: &[OperationDocument]) -> Result<OperationRegistry, TaxonomyError> {
        let mut registry = OperationRegistry::builtin();
        let mut seen = BTreeMap::new();
        for doc in documents {
            let name = doc.name.trim().to_lowercase();
            if seen.insert(name.clone(), ()).is_some() {
                return Err(TaxonomyError::DuplicateOperation(name));
            }
            let inputs = OperationDocument::to_slots(&doc.input_args)?;
            let outputs = OperationDocument::to_slots(&doc.output_args)?;
            let category = doc
                .category
                .or_else(|| registry.operations.get(&name).map(|s| s.category))
                .unwrap_or_else(|| infer_category(&inputs, &outputs));
            let sig = OperationSignature {
                name: name.clone(),
                category,
                inputs,
                outputs,
                language_template: doc.language_template.clone(),
            };
            validate_signature(&sig)?;
            registry.operations.insert(name, sig);
        }
        Ok(registry)
    }

    /// Looks an operation up by (case-insensitive) name.
    pub fn signature_of(&self, name: &str) -> Result<&OperationSignature, TaxonomyError> {
        let canonical = name.trim().to_lowercase();
        self.operations.get(&canonical).ok_or_else(|| TaxonomyError::UnknownOperation {
            name: name.to_owned(),
            suggestion: closest_match(&canonical, self.operations.keys().map(String::as_str))
                .map(ToOwned::to_owned),
        })
    }

    pub fn get(&self, name: &str) -> Option<&OperationSignature> {
        self.operations.get(name)
    }

    pub fn len(&self) -> usize {
        self.operations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operations.is_empty()
    }

    /// Signatures in name order.
    pub fn iter(&self) -> impl Iterator<Item = &OperationSignature> {
        self.operations.values()
    }
}

impl Default for OperationRegistry {
    fn default() -> Self {
        OperationRegistry::builtin()
    }
}

fn builtin_signatures() -> Vec<OperationSignature> {
    use AttributeType::*;
    let one = Arity::Exactly(1);
    let two = Arity::Exactly(2);
    let some = Arity::AtLeast(1);
    let several = Arity::AtLeast(2);
    let optional = Arity::AtMost(1);

    let sig = |name: &str, category, inputs: Vec<Slot>, output: &[AttributeType], template: &str| {
        OperationSignature {
            name: name.to_owned(),
            category,
            inputs,
            outputs: alloc::vec![Slot::new(one, output)],
            language_template: template.to_owned(),
        }
    };
    let agg = |name: &str, arity, types: &[AttributeType], output: &[AttributeType], template: &str| {
        sig(
            name,
            Category::Aggregation,
            alloc::vec![Slot::new(arity, types), Slot::new(optional, &[Grouping])],
            output,
            template,
        )
    };
    let numeric = [Arithmetic, Metric];
    let ordered = [Arithmetic, Metric, Datetime];
    let comparable = [Arithmetic, Metric, Categorical, String, Datetime, Identifier];

    alloc::vec![
        agg("average", one, &numeric, &numeric, "average {0}"),
        agg("correlation", two, &ordered, &ordered, "correlation between {0} and {1}"),
        agg("count", one, &numeric, &numeric, "count of {0}"),
        agg("count_unique", one, &numeric, &numeric, "count of unique {0}"),
        agg("get_one", one, &ordered, &ordered, "one {0}"),
        agg("max", one, &ordered, &ordered, "max {0}"),
        agg("median", one, &ordered, &ordered, "median {0}"),
        agg("min", one, &ordered, &ordered, "min {0}"),
        agg("standard_deviation", one, &numeric, &numeric, "standard deviation of {0}"),
        agg("string_aggregation", one, &ordered, &ordered, "list of {0}"),
        agg("sum", one, &[Arithmetic], &numeric, "sum of {0}"),
        sig("and", Category::Boolean, alloc::vec![Slot::new(some, &[Filter])], &[Filter], "{0} and {1}"),
        sig(
            "contains",
            Category::Boolean,
            alloc::vec![Slot::new(one, &[Attribute]), Slot::new(one, &[String])],
            &[Filter],
            "{0} containing {1}",
        ),
        sig("exact", Category::Boolean, alloc::vec![Slot::new(two, &comparable)], &[Filter], "{0} of {1}"),
        sig("greaterthan", Category::Boolean, alloc::vec![Slot::new(two, &ordered)], &[Filter], "{0} greater than {1}"),
        sig(
            "greaterthan_eq",
            Category::Boolean,
            alloc::vec![Slot::new(two, &ordered)],
            &[Filter],
            "{0} greater than or equal to {1}",
        ),
        sig("lessthan", Category::Boolean, alloc::vec![Slot::new(two, &ordered)], &[Filter], "{0} less than {1}"),
        sig(
            "lessthan_eq",
            Category::Boolean,
            alloc::vec![Slot::new(two, &ordered)],
            &[Filter],
            "{0} less than or equal to {1}",
        ),
        sig("not", Category::Boolean, alloc::vec![Slot::new(one, &[Filter])], &[Filter], "not {0}"),
        sig("or", Category::Boolean, alloc::vec![Slot::new(some, &[Filter])], &[Filter], "{0} or {1}"),
        sig("add", Category::Arithmetic, alloc::vec![Slot::new(several, &numeric)], &ordered, "{0} plus {1}"),
        sig("divide", Category::Arithmetic, alloc::vec![Slot::new(several, &numeric)], &ordered, "{0} divided by {1}"),
        sig(
            "multiply",
            Category::Arithmetic,
            alloc::vec![Slot::new(several, &numeric)],
            &ordered,
            "{0} multiplied by {1}",
        ),
        sig(
            "percent_change",
            Category::Arithmetic,
            alloc::vec![Slot::new(two, &numeric)],
            &numeric,
            "percent change from {0} to {1}",
        ),
        sig("square_root", Category::Arithmetic, alloc::vec![Slot::new(one, &ordered)], &ordered, "square root of {0}"),
        sig("subtract", Category::Arithmetic, alloc::vec![Slot::new(several, &ordered)], &ordered, "{0} minus {1}"),
        sig(
            "collect",
            Category::DataOperation,
            alloc::vec![Slot::new(some, &[Attribute])],
            &[AttributeCollection],
            "{0}",
        ),
        sig(
            "groupby",
            Category::DataOperation,
            alloc::vec![Slot::new(some, &[Categorical, Datetime])],
            &[Grouping],
            "grouped by {0}",
        ),
        sig(
            "limit",
            Category::DataOperation,
            alloc::vec![Slot::new(one, &[Arithmetic])],
            &[Limit],
            "limited to the top results",
        ),
        sig(
            "return",
            Category::DataOperation,
            alloc::vec![
                Slot::new(one, &[AttributeCollection]),
                Slot::new(optional, &[Filter]),
                Slot::new(optional, &[Sort]),
                Slot::new(optional, &[Limit]),
            ],
            &[Entity],
            "{0}",
        ),
        sig(
            "sort",
            Category::DataOperation,
            alloc::vec![Slot::new(some, &[Attribute]), Slot::new(one, &[String])],
            &[Sort],
            "{0} sorted {1}",
        ),
        sig(
            "retrieve_attribute",
            Category::Retrieval,
            alloc::vec![Slot::new(one, &[Entity]), Slot::new(one, &[String])],
            &[Attribute],
            "{1} of {0}",
        ),
        sig("retrieve_entity", Category::Retrieval, alloc::vec![Slot::new(one, &[String])], &[Entity], "{0}"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn base_and_derived_partition_the_vocabulary() {
        assert_eq!(AttributeType::BASE.len(), 6);
        assert_eq!(AttributeType::DERIVED.len(), 8);
        for t in AttributeType::ALL {
            assert_eq!(t.is_base(), AttributeType::BASE.contains(&t), "{t}");
            assert_eq!(AttributeType::from_name(t.name()), Some(t));
        }
        assert_eq!(AttributeType::from_name("Group"), Some(AttributeType::Grouping));
        assert_eq!(AttributeType::from_name("metric"), None);
    }

    #[test]
    fn acceptance_is_nonempty_intersection() {
        use AttributeType::*;
        assert!(types_accept(TypeSet::of(&[Arithmetic, Metric]), TypeSet::of(&[Metric])));
        assert!(!types_accept(TypeSet::of(&[Arithmetic]), TypeSet::of(&[Metric])));
    }

    #[test]
    fn arity_accepts_only_the_known_surface_forms() {
        for form in Arity::SURFACE_FORMS {
            assert_eq!(Arity::parse(form).unwrap().to_string(), form);
        }
        for bad in ["3", "0", ">=3", "<=2", "", "one", ">1", "=>1", "1.0", "-1", "<1"] {
            assert_eq!(Arity::parse(bad), Err(TaxonomyError::MalformedArity(bad.trim().into())), "{bad}");
        }
    }

    #[test]
    fn lookups_are_case_insensitive_and_suggest() {
        let reg = OperationRegistry::builtin();
        assert_eq!(reg.signature_of("SUM").unwrap().name, "sum");
        match reg.signature_of("summ") {
            Err(TaxonomyError::UnknownOperation { suggestion, .. }) => {
                assert_eq!(suggestion.as_deref(), Some("sum"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn template_filling() {
        let reg = OperationRegistry::builtin();
        let gte = reg.signature_of("greaterthan_eq").unwrap();
        assert_eq!(gte.fill_template(&["a", "b"]), "a greater than or equal to b");
        assert_eq!(fill_placeholders("x {7} {y}", &["a"]), "x  {y}");
    }

    #[test]
    fn placeholder_beyond_positions_is_rejected() {
        let doc = OperationDocument {
            name: "twice".into(),
            input_args: vec![ArgDocument { arity: "1".into(), types: vec!["Metric".into()] }],
            output_args: vec![ArgDocument { arity: "1".into(), types: vec!["Metric".into()] }],
            language_template: "{0} and {1}".into(),
            category: None,
        };
        assert!(matches!(
            OperationRegistry::load(&[doc]),
            Err(TaxonomyError::PlaceholderOutOfRange { .. })
        ));
    }

    #[test]
    fn gapped_placeholders_are_rejected() {
        let doc = OperationDocument {
            name: "gap".into(),
            input_args: vec![ArgDocument { arity: ">=2".into(), types: vec!["Metric".into()] }],
            output_args: vec![ArgDocument { arity: "1".into(), types: vec!["Metric".into()] }],
            language_template: "{0} then {2}".into(),
            category: None,
        };
        assert!(matches!(
            OperationRegistry::load(&[doc]),
            Err(TaxonomyError::PlaceholderOutOfRange { .. })
        ));
    }

    #[test]
    fn category_inference() {
        let doc = |name: &str, out: &str, grouping: bool| OperationDocument {
            name: name.into(),
            input_args: {
                let mut v = vec![ArgDocument { arity: "1".into(), types: vec!["Metric".into()] }];
                if grouping {
                    v.push(ArgDocument { arity: "<=1".into(), types: vec!["Grouping".into()] });
                }
                v
            },
            output_args: vec![ArgDocument { arity: "1".into(), types: vec![out.into()] }],
            language_template: "{0}".into(),
            category: None,
        };
        let reg = OperationRegistry::load(&[
            doc("mode", "Metric", true),
            doc("is_big", "Filter", false),
            doc("log", "Arithmetic", false),
            doc("average", "Metric", false),
        ])
        .unwrap();
        assert_eq!(reg.get("mode").unwrap().category, Category::Aggregation);
        assert_eq!(reg.get("is_big").unwrap().category, Category::Boolean);
        assert_eq!(reg.get("log").unwrap().category, Category::Arithmetic);
        assert_eq!(reg.get("average").unwrap().category, Category::Aggregation);
    }
}
