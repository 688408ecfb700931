//! Reproduction runners: mixture threshold sweep, toy BNN with an exact
//! grid posterior, MNIST, and the mode-proximity check.

mod idx;
mod jobs;
mod mnist;
mod mode_seeking;
mod output;
mod proximity;
mod toy;

pub use idx::{
    encode_idx, load_mnist_idx, load_split, mnist_paths, parse_idx, read_idx, read_maybe_gzip, write_idx, IdxArray,
    MnistDataset, MnistSplit, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use jobs::parallel_map;
pub use mnist::{run_mnist, MnistConfig, MnistRow, MnistSummary};
pub use mode_seeking::{estimate_threshold, run_mode_seeking, ModeSeekingConfig, ModeSeekingRow, THRESHOLD_LEVEL};
pub use output::{version_string, write_csv, ManifestWriter, RunManifest, RunStatus};
pub use proximity::{run_proximity, search_mode_for, ProximityConfig, ProximityRow};
pub use toy::{
    analyze_fit, density_grids, exact_toy_posterior, local_maxima, make_toy_dataset, run_toy_bnn, FitAnalysis,
    GridDump, GridDumpRow, GridPosterior, GridSpec, Method, ToyConfig, ToyResults, ToyRow, ToySummary,
};
