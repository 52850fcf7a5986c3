//! Planning and simulation for a planar single-leg hopper crossing a course
//! of box obstacles.

pub mod env;
pub mod leg;
pub mod planner;
pub mod mppc;
pub mod scenario;
pub mod sim;
pub mod bench;
pub mod trace;
