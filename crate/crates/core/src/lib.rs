pub mod autodiff;
pub mod dag;
pub mod data;
pub mod error;
pub mod graph;
pub mod model;
pub mod rng;
pub mod scalar;
pub mod train;

pub use autodiff::{GateMode, Tape, Tensor, Var};
pub use dag::ArchitectureDag;
pub use data::{BatchPlan, Dataset, DatasetPaths, Normalization, Split};
pub use error::{Error, Result};
pub use graph::{GraphStats, UndirectedGraph};
pub use model::{Classifier, DcnModel, Mode, ModelConfig};
pub use rng::Rng;
pub use scalar::Scalar;
pub use train::{RunMetrics, Session, TrainConfig};

pub type Tensor32 = Tensor<f32>;
pub type Tensor64 = Tensor<f64>;
pub type DcnModel32 = DcnModel<f32>;
pub type DcnModel64 = DcnModel<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Session32 = Session<f32>;
