//! Caging-guided co-optimization of planar manipulator morphology and control.
//!
//! The crate is `no_std` with `alloc`. It contains the numerical pieces of
//! the pipeline:
//!
//! * [`geom`], [`collision`] and [`world`]: a deterministic quasi-static
//!   planar world with convex shapes and Gaussian disturbance forces.
//! * [`cage`]: minimum escape energy estimation by batch-sampled roadmaps,
//!   and a grid Dijkstra oracle used to validate it.
//! * [`policy`]: a morphology- and shape-conditioned Gaussian policy trained
//!   with PPO on an escape-energy shaped reward.
//! * [`morph`]: multi-task GP surrogate (ICM kernel), UCB acquisition and the
//!   MTBO / BO / GA morphology optimizers.
//! * [`tasks`]: the `Catch`, `VPush` and `UPush` task definitions.
//!
//! File formats, experiment orchestration and the CLI live in the `cagecoopt`
//! crate.
#![no_std]
#![forbid(unsafe_code)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod cage;
pub mod collision;
pub mod geom;
pub mod morph;
pub mod policy;
pub mod rng;
pub mod tasks;
pub mod world;

pub use cage::{EnergyModel, MeeQuery, MeeResult, MeeStatus};
pub use collision::{collide, Contact, ContactSet};
pub use geom::{ConfigSE2, GeomError, ShapeGeom, Vec2};
pub use world::{WorldConfig, WorldState};
