//! Constrained stabilization on the unit n-sphere.
//!
//! Conic keep-out zones on S^n are mapped by the stereographic projection to
//! a Euclidean sphere world. A navigation-function controller designed there
//! is pulled back to the sphere through the pseudo-inverse of
//! `Σ(x) = ∇ψ(x) Π(x)`, which makes the chart coordinates obey `ξ̇ = v`.
//!
//! - [`sphere`]: unit vectors, geodesic distance, frame alignment
//! - [`stereographic`]: the chart, its inverse and Jacobian
//! - [`world`]: conic constraints and their sphere-world image
//! - [`navigation`]: navigation function and Euclidean controllers
//! - [`controller`]: dynamics models and the lifted control law
//! - [`simulator`]: RK4 closed-loop integration and trajectory metrics
//! - [`scenario`]: JSON scenario files and trajectory output
//! - [`selfcheck`]: built-in numerical identity suites
//! - [`cli`]: command-line entry point

pub mod cli;
pub mod controller;
pub mod error;
pub mod navigation;
pub mod scenario;
pub mod selfcheck;
pub mod simulator;
pub mod sphere;
pub mod stereographic;
pub mod world;

pub use error::{Error, Result};
