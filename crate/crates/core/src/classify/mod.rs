//! Dataset classification: featurize samples, train a softmax classifier to
//! predict the dataset of origin, and report repeated-trial accuracy.

mod features;
mod harness;
mod saliency;
mod softmax;

pub use features::{
    bag_of_objects, image_features, stack_rows, FeatureKind, FeatureSpec, Standardizer, WordVocabulary,
};
pub use harness::{
    mean_std, DiskImages, Experiment, ImageSource, MeanRgbRow, MemoryImages, PseudoRow, SweepAxis, SweepRow,
    TrialConfig, TrialDetail, TrialReport, DEFAULT_RESIZE,
};
pub use saliency::{linear_saliency, SaliencyMap};
pub use softmax::{
    argmax, evaluate, fit_softmax, loss_and_gradient, softmax_rows, Evaluation, Fit, SoftmaxModel, TrainConfig,
};
