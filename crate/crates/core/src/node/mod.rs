//! Stabilized neural ODEs: right-hand-side variants, fixed-step RK4 with a
//! discrete adjoint, and the training loop.

mod checkpoint;
mod integrate;
mod model;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub use integrate::{
    advance_rows, integrate, integrate_batch, rk4_backward, rk4_forward_traced, rollout, rollout_batch, stable_substeps,
    Rk4Trace, Rollout, VectorField,
};
pub(crate) use integrate::intervals as intervals_of;
pub use model::{rhs_eval, LinearBranch, ModelGrad, RhsModel, RhsTape, Variant};
pub use train::{
    evaluate_loss, l1_loss, loss, loss_gradient, train, train_from, Adam, EpochRecord, PairSet, TrainConfig, TrainOutcome,
    TrainState,
};
