//! Library surface of the radipose command-line tool: the method-spec
//! grammar, the JSONL file schemas, report assembly, and the glue that runs
//! methods over benchmark pairs.

pub mod method;
pub mod report;
pub mod runner;
pub mod schema;
