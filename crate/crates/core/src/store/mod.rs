//! Activation shards on disk, the shuffled training buffer, and sample pooling.

mod buffer;
mod format;
mod pool;

pub use buffer::{shuffled_batches, ShuffledBatches};
pub use format::{
    load_matrix, load_shard, read_header, read_matrix, read_shard, save_matrix, save_shard, sidecar_path, write_header,
    write_matrix, write_shard, ActivationShard, Header, Modality, RowReader, TokenMeta, TokenRole, FORMAT_VERSION,
    HEADER_LEN, MAGIC,
};
pub use pool::{pool_sample, pool_shard, PooledEmbedding, PoolingStrategy, RoleMask};
