//! Image-space ("liquid") noise manipulation: flow maps, nearest-neighbour
//! warping, and the statistical corrections applied around the autoencoder
//! round trip.

mod correction;
mod flow;
mod warp;

pub use correction::{
    adjust_kurtosis, inject_noise, match_stats, reduce_variance, KurtosisSpec,
    VarianceReductionSpec,
};
pub use flow::{
    displacement_at, hsv_to_rgb, parse_flow_map, parse_flow_map_raw, render_flow_map, rgb_to_hsv,
    Displacement, FlowCalibration, FlowField, MotionPrimitive,
};
pub use warp::warp;
