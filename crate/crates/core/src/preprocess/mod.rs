//! Data preparation: outlier removal, grid resampling, imputation and PCA.

mod clean;
mod pca;

pub use clean::{
    clamp_outliers, fit_imputer, impute, impute_dataset, resample_forward_fill, ImputationModel, Observation,
};
pub use pca::{apply_pca, fit_pca, PcaModel};
