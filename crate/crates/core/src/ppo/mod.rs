//! Actor-critic PPO written against the loop environment.

mod adam;
mod eval;
mod mlp;
mod policy;
mod toy;
mod train;
mod update;

pub use adam::Adam;
pub use eval::{active_steps, evaluate, summarize, EpisodeFit, EvalConfig, EvalReport, Histogram};
pub use mlp::{Cache, Grads, Init, Mlp};
pub use policy::{gaussian_log_prob, squash, Policy, PolicySample, SampleMode};
pub use toy::{solve_toy, ToyProblem, ToyRun};
pub use train::{load_policy, write_curve_csv, CurvePoint, Trainer, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use update::{compute_gae, loss_and_grad, normalize_advantages, ppo_update, Batch, LossTerms, PpoHyperparams, UpdateMetrics};
