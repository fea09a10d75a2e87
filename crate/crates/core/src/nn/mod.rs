pub mod activation;
pub mod adam;
pub mod checkpoint;
pub mod layer;
pub mod mlp;
pub mod train;

pub use activation::Activation;
pub use adam::{adam_step, OptimState};
pub use layer::{Conv2d, DenseLayer, ParamHolder};
pub use mlp::{init_params, mlp_forward, Mlp, MlpSpec};
pub use train::{train_loop, Objective, Schedule, Trace};
