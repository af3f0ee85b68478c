//! Sequence encoders (fastText, fastVideo, Conv1D, LSTM/BiLSTM, poster head)
//! and their training loop.

mod model;
pub mod sequence;
pub mod train;

pub use model::{
    encode_fasttext, encode_fastvideo, encode_poster, Aggregator, Encoder, EncoderConfig,
    FeatureSequence, Ngram, FRAME_DIM, MEL_DIM, TEXT_DIM, TEXT_MAX_LEN, VIDEO_MAX_FRAMES,
};
pub use sequence::{
    clip_eval_lstm, clip_layout, prepare_plot, subsample_frames, subsample_indices,
};
pub use train::{
    bucket_batches, dataset_loss, train_encoder, Dataset, Targets, TrainHistory, TrainParams,
};
