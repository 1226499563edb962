//! A desk-scale training loop: synthetic scenes with engineered
//! features, three linear heads, hand-derived gradients, and ablation
//! sweeps that exercise every knob of the pipeline end to end.

pub mod ablation;
pub mod model;
pub mod scene;
pub mod trainer;

pub use ablation::{run_ablation, AblationAxis, AblationRow, AblationTable};
pub use model::{ForwardPass, LinearHead, ModelDims, ToyModel};
pub use scene::{generate_dataset, generate_scene, SceneConfig, SyntheticScene};
pub use trainer::{ToyTrainer, TrainConfig};
