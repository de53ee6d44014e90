//! Shared fixtures for the criterion benches.

use std::collections::BTreeMap;

use hazardline::knowledge::{load_structured_store, ColumnType, SchemaDecl, TableDecl};
use hazardline::{StructuredStore, Value};

/// The evacuation table plus a keyed outage table, `rows` rows each.
pub fn evacuation_store(rows: usize) -> StructuredStore {
    let schema = SchemaDecl {
        tables: vec![
            TableDecl::new(
                "harvey_evacuation_data",
                &[("zip_code", ColumnType::Integer), ("evacuation_rate", ColumnType::Real)],
            ),
            TableDecl::new("outages", &[("zip_code", ColumnType::Integer), ("customers_out", ColumnType::Integer)]),
        ],
        join_keys: vec!["zip_code".into()],
    };
    let zip = |i: usize| Value::Integer(77000 + i as i64);
    let mut data = BTreeMap::new();
    data.insert(
        "harvey_evacuation_data".to_owned(),
        (0..rows).map(|i| vec![zip(i), Value::Real((i * 37 % 100) as f64 + 0.5)]).collect(),
    );
    data.insert(
        "outages".to_owned(),
        (0..rows).map(|i| vec![zip(i), Value::Integer((i * 131 % 5000) as i64)]).collect(),
    );
    load_structured_store(schema, data).expect("bench store is well formed")
}
