//! Bit-exact storage: bf16 conversion, mask packing, and the `.cospadi` container.

mod bf16;
mod container;
mod pack;

pub use bf16::{to_bf16, truncate_mantissa, Bf16Word, MANTISSA_BITS};
pub use container::{deserialize, payload_offset, read_container, serialize, write_container, FORMAT_VERSION, MAGIC};
pub use pack::{pack, unpack, ConversionReport, PackedFactorization};
