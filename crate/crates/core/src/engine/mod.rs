//! Planning, per-partition fragment execution, and merging.

mod exec;
mod hash;
mod local;
mod merge;
mod plan;

pub use exec::{execute_fragment, metadata_fragment, FragmentPayload, FragmentResult};
pub use hash::{build_hash_index, HashIndex};
pub use local::{build_side_index, execute_local, EngineOptions, LocalEngine};
pub use merge::{merge, QueryResult};
pub use plan::{
    plan, ColumnSource, FilterSpec, JoinSpec, OutputSpec, PhysicalPlan, PlanOptions, ScanSpec,
    DEFAULT_BROADCAST_THRESHOLD, DEFAULT_ROW_CAP,
};
