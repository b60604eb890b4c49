//! Imputation, feature selection, normalisation, windowing, splitting.

mod impute;
mod normalize;
mod select;
mod window;

pub use impute::{
    column_means, impute, impute_matrix, impute_unit_nonresponse, imputation_rmse, mean, median, most_frequent,
    ImputeMethod, ImputeOptions, ImputeWarning, MaskedMatrix,
};
pub use normalize::{zscore_normalize, PrepStats};
pub use select::{
    correlation_filter, feature_variances, lasso_fit, near_zero_variance_filter, ols_r2, pearson, ridge_fit,
    select_columns, soft_threshold, spd_solve, standardize_columns, support, wrapper_select, LassoFit, RankedFeature,
    WrapperMode, SUPPORT_EPS,
};
pub use window::{chronological_split, make_windows, LabelMode, SplitSpec, WindowedDataset};
