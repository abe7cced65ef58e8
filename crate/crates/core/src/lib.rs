//! Order-aware sequential indoor scene synthesis.
//!
//! Scenes are parsed into a hierarchy of object groups using a
//! rotation-aware box distance and DBSCAN, turned into forests of possible
//! trees, and linearized into object sequences that train an autoregressive
//! layout model.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`.

pub mod data;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod ordering;
pub mod render;
pub mod scalar;
pub mod scene;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type SceneObject = geometry::SceneObject<f64>;
pub type Box2D = geometry::Box2D<f64>;
pub type DistanceMatrix = geometry::DistanceMatrix<f64>;
pub type Scene = scene::Scene<f64>;
pub type Tensor = numerics::Tensor<f64>;
pub type ParamStore = numerics::ParamStore<f64>;
pub type Model = model::Model<f64>;
