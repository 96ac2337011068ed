//! A small convolutional engine: exactly the layers the multi-patch
//! similarity network needs, with hand-written backward passes.

pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod weights_io;

pub use layers::{conv2d_valid, maxpool2, relu_act, tanh_act, ConvLayer};
pub use loss::softmax_xent;
pub use network::{
    fuse, score_extent, Example, Fusion, GradientSet, NetworkConfig, NetworkWeights, PATCH_SIDE,
    SCORE_STRIDE,
};
pub use optim::{sgd_step, LrSchedule, Sgd};
pub use weights_io::{decode_weights, encode_weights, load_weights, save_weights};
