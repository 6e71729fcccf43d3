//! Butterfly: dual-checking quadruple training for domain adaptation from
//! noisy source labels.

pub mod bundle;
pub mod checking;
pub mod pseudo;
pub mod schedule;
pub mod selection;
pub mod train;
pub mod variant;

pub use bundle::{average_probs, EvalHead, HeadPair, ModelBundle, ModelConfig};
pub use checking::{checking_step, weight_product_penalty, CheckingOptions, CheckingOutcome, Regularizer, RegularizerNorm};
pub use pseudo::{assign_pseudo_labels, label_by_agreement, PseudoLabelPolicy, PseudoLabeled};
pub use schedule::{pseudo_quota, remember_rate, Branch, ScheduleParams};
pub use selection::{selection_count, selection_loss, small_loss_select, small_loss_select_among, SelectionMask};
pub use train::{
    co_teach_source, relabel_with_branch1, train_butterfly, train_two_step, EpochSummary, NullProbe, Origin, Pool,
    Probe, TrainConfig, TrainInputs, TwoStepOutcome,
};
pub use variant::ButterflyVariant;
