use std::fmt;

use serde::{Deserialize, Serialize};

use crate::knowledge::StructuredStore;
use crate::llm::TASK_MARKER;
use crate::understanding::StructuredQueryRepresentation;

pub const TASK_TEXT_TO_SQL: &str = "text-to-sql";

/// Expression-to-operator exemplars shown to the model.
pub const DOMAIN_MAPPINGS: [(&str, &str); 4] = [
    ("largest evacuation rate", "MAX(evacuation_rate)"),
    ("total building damage", "SUM(Adj_damage_amount)"),
    ("average outage", "AVG(Customers_Out)"),
    ("group by area", "GROUP BY geographic identifier"),
];

const INSTRUCTIONS: &str = "\
Task: Generate an executable SQL query from a natural-language disaster information request.
Instructions: You are a disaster-data database expert. Translate the user query into a valid SQL statement using the provided schema and domain guidance.
- Use only the provided tables and columns
- Map disaster-related expressions to appropriate SQL operations
- Apply aggregation, ranking, and filtering when required
- Use valid join keys for cross-table queries
- Follow schema-aware query construction
- Use event-consistent temporal filtering when supported by the query and schema
- Do not use unsupported SQL operations (DROP, DELETE, UPDATE, INSERT)
- Output only the SQL query";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SqlPrompt {
    pub instruction_block: String,
    pub schema_block: String,
    pub question: String,
}

impl fmt::Display for SqlPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{TASK_MARKER}{TASK_TEXT_TO_SQL}\n{}\n\n{}\n\nQuestion: {}",
            self.instruction_block, self.schema_block, self.question
        )
    }
}

pub fn build_sql_prompt(sqr: &StructuredQueryRepresentation, store: &StructuredStore) -> SqlPrompt {
    let mut schema = String::from("Schema:\n");
    for t in store.tables() {
        let cols: Vec<&str> = t.decl.columns.iter().map(|c| c.name.as_str()).collect();
        schema.push_str(&format!("{}({})\n", t.decl.name, cols.join(", ")));
    }
    schema.push_str(&format!("\nAvailable join keys: {}\n\nDomain mappings:\n", store.join_keys().join(", ")));
    for (phrase, op) in DOMAIN_MAPPINGS {
        schema.push_str(&format!("\"{phrase}\" → {op}\n"));
    }
    SqlPrompt {
        instruction_block: INSTRUCTIONS.to_owned(),
        schema_block: schema.trim_end().to_owned(),
        question: sqr.rewritten_query.clone(),
    }
}
