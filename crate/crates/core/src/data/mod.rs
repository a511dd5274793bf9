//! Dataset ingest, canonical storage, splits and batching.

pub mod batch;
pub mod canonical;
pub mod raw;
pub mod record;
pub mod split;
pub mod synthetic;

pub use batch::{assemble, make_batches, plan_batches, Batch};
pub use canonical::{load_canonical, read_canonical, save_canonical, write_canonical};
pub use raw::{load_raw_matrix, write_raw_matrix, RawHeader};
pub use record::{logistic_rescale, Dataset, ProteinRecord, SEQ_LEN};
pub use split::{split_cullpdb6133, split_cullpdb6133_filtered, DatasetSplit, SplitMode, Splits};
pub use synthetic::{synthetic_dataset, SyntheticSpec};
