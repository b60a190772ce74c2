//! Backend contract, the mock backend, and the generation loops.

mod backend;
pub mod bridge;
mod composite;
mod generate;
mod mock;
mod schedule;
mod tracking;

pub use backend::{Accounted, Backend, CallLedger, Capabilities, ConditioningHandle, Segment};
pub use bridge::BridgeBackend;
pub use composite::{composite_seeds, seamless_upscale, Window};
pub use generate::{
    generate_crystal, generate_liquid, generate_single, CrystalOptions, Generation, Injection,
    InjectionSide, LiquidOptions, Scene, LIQUID_MIN_SWITCH,
};
pub use mock::{MockBackend, MockCalls, MockConfig};
pub use schedule::{alphas_cumprod, DenoiseSchedule, TRAIN_TIMESTEPS};
pub use tracking::{
    animate_layers, image_res_noise, image_to_video, motion_compensated_residual, to_latent_grid,
    vid2vid_tracked, Layer, TrackingOptions,
};
