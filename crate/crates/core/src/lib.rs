//! Segmentation-free word spotting for scanned handwritten pages.
//!
//! The crate is `no_std` and only needs `alloc`. It contains the pure
//! algorithmic parts of the search engine: text embeddings (PHOC, DCToW),
//! box geometry, raster primitives, dilated text proposals, the training
//! losses, a small dense embedding network with ADAM, data augmentation,
//! the query pipeline and retrieval evaluation. File formats, the CLI and
//! the HTTP service live in the `wordspot` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod augment;
pub mod dtp;
pub mod embedder;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod image;
pub mod index;
pub mod losses;
pub mod text;

pub use error::{Error, Result};
pub use geometry::BBox;
pub use image::{BinaryImage, GrayImage};
