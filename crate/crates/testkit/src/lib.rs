//! Independent, deliberately naive reference implementations.
//!
//! Nothing here calls into the engine. Each oracle recomputes a quantity the
//! slow, obvious way so the tests can compare against it.

pub mod fd;
pub mod metrics;
pub mod neighbors;
pub mod curve;
pub mod screen;
