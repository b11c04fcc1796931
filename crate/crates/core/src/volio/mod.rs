//! Volume and model file I/O.

mod model;
mod nifti;

pub use model::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use nifti::{
    decode_volume, encode_volume, read_volume, write_volume, Datatype, NiftiHeaderSubset, DEFAULT_VOX_OFFSET,
    HEADER_SIZE,
};
