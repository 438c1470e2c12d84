use infospace_core::compiler::{instance_query, CompileError};
use infospace_core::labeling::DomainLabeling;
use infospace_core::post::Scalar;
use infospace_core::spacegen::InstanceSource;
use infospace_core::taxonomy::{AttributeType, TypeSet};
use rusqlite::Connection;

use crate::executor::{execute, ExecError};

pub const DEFAULT_INSTANCE_CAP: usize = 200;

#[derive(Debug, thiserror::Error)]
pub enum HarvestError {
    #[error("unknown attribute {0}.{1}")]
    UnknownAttribute(String, String),
    #[error("{0}.{1} is neither Identifier nor Categorical")]
    DisallowedType(String, String),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instances {
    pub values: Vec<Scalar>,
    pub truncated: bool,
}

/// Distinct non-null values of an Identifier or Categorical attribute,
/// ascending, at most `cap` of them.
pub fn harvest_instances(
    conn: &Connection,
    labeling: &DomainLabeling,
    entity: &str,
    attribute: &str,
    cap: usize,
) -> Result<Instances, HarvestError> {
    let attr = labeling
        .entity(entity)
        .and_then(|e| e.attribute(attribute))
        .ok_or_else(|| HarvestError::UnknownAttribute(entity.into(), attribute.into()))?;
    let allowed = TypeSet::of(&[AttributeType::Identifier, AttributeType::Categorical]);
    if !attr.attribute_types.intersects(allowed) {
        return Err(HarvestError::DisallowedType(entity.into(), attribute.into()));
    }
    let query = instance_query(labeling, entity, attribute, cap.saturating_add(1))?;
    let mut table = execute(conn, &query, usize::MAX)?;
    let truncated = table.rows.len() > cap;
    table.rows.truncate(cap);
    let values = table.rows.into_iter().filter_map(|mut r| r.pop()).collect();
    Ok(Instances { values, truncated })
}

/// Instance values read from a live database.
pub struct DbInstances<'a> {
    pub conn: &'a Connection,
    pub labeling: &'a DomainLabeling,
}

impl InstanceSource for DbInstances<'_> {
    fn instances(&mut self, entity: &str, attribute: &str, cap: usize) -> Result<Vec<Scalar>, String> {
        harvest_instances(self.conn, self.labeling, entity, attribute, cap)
            .map(|i| i.values)
            .map_err(|e| e.to_string())
    }
}
