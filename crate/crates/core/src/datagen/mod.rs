//! Seeded generators for every synthetic distribution used by the
//! experiments. Each generator is a pure function of its arguments and seed.

pub mod container;
pub mod lines;
pub mod parity;
pub mod pwl;
pub mod step;
pub mod stocks;

pub use container::{Dataset, DatasetTag, Flatten};
pub use lines::{
    gen_line_image, gen_tuple, line_label, rasterize, sample_line_image, sample_tuple, LineImage,
    TupleSample, DEFAULT_IMAGE_SIZE,
};
pub use parity::{
    enumerate_bits, gen_parity, parity_label, parity_tensors, random_bits, ParitySample,
};
pub use pwl::{gen_pwl, gen_pwl_slope_pm1, PwlCurve};
pub use step::{
    check_levels, default_levels, gen_step_task, step_class, step_u, step_u_tilde,
    step_u_tilde_deriv, StepTask,
};
pub use stocks::{gen_stock_sample, StockSample, StockTask};
