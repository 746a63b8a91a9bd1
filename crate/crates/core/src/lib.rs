//! Desk-scale training stack for ViT encoders with masked-autoencoder
//! pretraining on multispectral tiles, plus the machinery around it:
//! transfer weight surgery, optimizer/schedule stack, deterministic
//! data-parallel simulation, diversity-stratified manifest sampling,
//! and downstream probing/segmentation evaluation.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod dist;
pub mod element;
pub mod error;
pub mod mae;
pub mod optim;
pub mod seeds;
pub mod tasks;
pub mod trainer;
pub mod tensor;
pub mod transfer;
pub mod vit;

pub use element::{Dtype, Element};
pub use error::{Error, Result};
pub use tensor::Tensor;
