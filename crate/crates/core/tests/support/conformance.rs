//! Checks a registry against the operation table in `data/operations.tsv`.

use infospace_core::taxonomy::{Arity, AttributeType, OperationRegistry, TypeSet};

pub const TABLE: &str = include_str!("../data/operations.tsv");

pub struct Row {
    pub name: String,
    pub category: String,
    pub inputs: Vec<(Arity, TypeSet)>,
    pub outputs: TypeSet,
    /// How the published table differs, or `None` when it agrees.
    pub table_differs: Option<String>,
}

fn types(list: &str) -> TypeSet {
    list.split(',')
        .map(|t| AttributeType::from_name(t.trim()).unwrap_or_else(|| panic!("unknown type {t}")))
        .collect()
}

fn slots(list: &str) -> Vec<(Arity, TypeSet)> {
    list.split(';')
        .map(|s| {
            let (arity, ts) = s.trim().split_once(':').expect("arity:types");
            (Arity::parse(arity).expect("arity"), types(ts))
        })
        .collect()
}

pub fn rows() -> Vec<Row> {
    TABLE
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 5, "malformed row {l:?}");
            Row {
                name: f[0].to_owned(),
                category: f[1].to_owned(),
                inputs: slots(f[2]),
                outputs: types(f[3]),
                table_differs: (f[4] != "=").then(|| f[4].to_owned()),
            }
        })
        .collect()
}

/// Every mismatch between the table and the registry, one line each.
pub fn mismatches(registry: &OperationRegistry) -> Vec<String> {
    let rows = rows();
    let mut out = Vec::new();
    if registry.len() != rows.len() {
        out.push(format!("registry has {} operations, table has {}", registry.len(), rows.len()));
    }
    for row in &rows {
        let Some(sig) = registry.get(&row.name) else {
            out.push(format!("{}: missing", row.name));
            continue;
        };
        if sig.category.name() != row.category {
            out.push(format!("{}: category {} != {}", row.name, sig.category.name(), row.category));
        }
        let inputs: Vec<(Arity, TypeSet)> = sig.inputs.iter().map(|s| (s.arity, s.types)).collect();
        if inputs != row.inputs {
            out.push(format!("{}: inputs {inputs:?} != {:?}", row.name, row.inputs));
        }
        if sig.outputs.len() != 1 || sig.output_types() != row.outputs {
            out.push(format!("{}: outputs {} != {}", row.name, sig.output_types(), row.outputs));
        }
    }
    out
}
