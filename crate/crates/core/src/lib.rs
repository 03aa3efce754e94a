//! 3D wound documentation from a reconstructed mesh, camera poses and
//! per-view segmentation masks.

pub mod camera;
pub mod config;
pub mod cover;
pub mod curve;
pub mod depthmap;
pub mod document;
pub mod error;
pub mod eval;
pub mod frame;
pub mod fusion;
pub mod io;
pub mod labels;
pub mod measure;
pub mod mesh;
pub mod raster;
pub mod scalar;
pub mod scale;
pub mod synth;
pub mod triangulate;

pub use error::{Error, Result};
pub use labels::{Label, LabelField};
pub use scalar::Real;

pub type Mesh = mesh::TriangleMesh<f64>;
pub type Camera = camera::CameraView<f64>;
