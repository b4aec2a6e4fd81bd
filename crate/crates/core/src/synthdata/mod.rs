//! Synthetic benchmark datasets and train/validation/test splitting.

mod dataset;
mod images;
mod surfaces;

pub use dataset::{max_mass_defect, split, split_indices, DataSet, Meta, SplitSpec, MASS_TOL};
pub use images::{gen_phantom, gen_rotated_images, load_grayscale, rotate_normalized, rotated_images_at, GrayImage};
pub use surfaces::{
    gen_scurve_20d, gen_swiss_roll, scurve_from_params, scurve_point, scurve_projection, swiss_roll_from_params,
    swiss_roll_point,
};
