//! Multi-agent path finding with discrete-diffusion warm starts.
//!
//! A D3PM sampler proposes joint action plans, each draft is completed into
//! goal-terminated paths and handed to an LNS2 repair loop, and the cheapest
//! feasible repair of the first successful round wins.

pub mod bench;
pub mod d3pm;
pub mod denoiser;
pub mod error;
pub mod grid;
pub mod instance_gen;
pub mod lns2;
pub mod pipeline;
pub mod seed;
pub mod single_agent;
pub mod task_losses;

pub use error::{Error, Result};
