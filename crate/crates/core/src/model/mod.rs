//! The collaborative transformer: two modality encoders that exchange
//! states every layer, balancing layers that pool each modality into a
//! shared latent space, and a classifier, all with exact gradients.

pub mod checkpoint;
pub mod config;
pub mod fixtures;
pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod ops;
pub mod params;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use network::{
    argmax, classify, collaborative_forward, encoder_layer, mal, mhia, multi_head_attention, Model,
};
pub use params::Parameters;
pub use tensor::Mat;
