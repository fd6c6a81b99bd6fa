//! Runtime linked by generated inference programs: memoised storage,
//! distributions, bookkeeping for children sets and reference counts, and
//! the inference drivers.

pub mod cli;
pub mod conjugate;
pub mod dist;
pub mod driver;
pub mod memo;
pub mod model;
pub mod record;
pub mod rng;
pub mod rt;
pub mod state;
pub mod stats;
pub mod value;

pub use dist::{CatTable, Dist, ValueKind};
pub use memo::{DynamicTable, MemoCell, Table2, NEVER};
pub use model::{ArgMap, CompiledModel, Edge, QueryInfo, TemplateInfo, TemplateKind, TypeInfo};
pub use rt::{Flags, RefList, Rt};
pub use stats::RunStats;
pub use value::{Value, VarId};
pub use conjugate::ConjugatePair;
