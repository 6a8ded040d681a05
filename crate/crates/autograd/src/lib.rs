//! Dense CPU tensors with tape-based reverse-mode differentiation.
//!
//! Small by design: contiguous row-major storage, a handful of layers, and
//! Adam. Generic over `f32` and `f64` so models can be gradient-checked in
//! double precision and trained in single precision.

pub mod conv;
pub mod float;
pub mod gradcheck;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

pub use conv::ConvGeom;
pub use float::Float;
pub use ops::{concat, stack};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamKind, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
