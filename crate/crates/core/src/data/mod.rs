//! Tokenization, the multi-task sample format, dataset files, batch layout
//! and the synthetic corpus generator.

pub mod batch;
pub mod io;
pub mod sample;
pub mod synth;
pub mod tokenizer;

pub use batch::{build_batch, build_row, Batch, DEFAULT_SEQ_CAP};
pub use io::{load_dataset, read_image, write_dataset, write_image};
pub use sample::{parse_box, Image2D, ImagePayload, Modality, MultimodalSample, Task, Volume3D};
pub use synth::{make_synthetic_corpus, CorpusSpec, SyntheticCorpus};
pub use tokenizer::{decode, decode_string, encode_text, BOS, EOS, IMG, PAD, VOCAB_SIZE};
