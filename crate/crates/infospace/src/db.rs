use std::path::Path;

use infospace_core::compiler::{Dialect, SqlParam};
use rusqlite::{Connection, OpenFlags};

/// Opens a database file for reading only. Writes fail at the SQLite level.
pub fn open_read_only(path: &Path) -> rusqlite::Result<Connection> {
    let conn = Connection::open_with_flags(
        path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX | OpenFlags::SQLITE_OPEN_URI,
    )?;
    conn.pragma_update(None, "query_only", true)?;
    Ok(conn)
}

/// SQLite capabilities of this connection.
pub fn probe_dialect(conn: &Connection) -> Dialect {
    let sqrt = conn.query_row("SELECT SQRT(4.0)", [], |r| r.get::<_, f64>(0)).is_ok();
    Dialect { sqrt, ..Dialect::SQLITE }
}

pub(crate) fn to_sql(p: &SqlParam) -> rusqlite::types::Value {
    use rusqlite::types::Value;
    match p {
        SqlParam::Integer(i) => Value::Integer(*i),
        SqlParam::Real(r) => Value::Real(*r),
        SqlParam::Text(t) => Value::Text(t.clone()),
    }
}
