//! Energy-optimal gear selection for multi-speed electric vehicles.
//!
//! The crate models a two-speed EV driveline, poses gear selection over a
//! short preview horizon as a mixed-integer optimal control problem, and
//! offers three ways of answering it online:
//!
//! * [`ocp::exhaustive_solve`] enumerates every gear sequence;
//! * [`nn`] trains a small network whose soft-argmax heads emit relaxed
//!   gear selectors, learned by differentiating through the energy rollout;
//! * [`ocp::RuleBased`] is a plain speed-threshold schedule.
//!
//! [`mpc`] closes the loop over a driving cycle and compares them.
//!
//! ```
//! use ecogear::{cycle, ocp, vehicle::Powertrain};
//!
//! let pt = Powertrain::default();
//! let nedc = cycle::gen_nedc(1.0).unwrap();
//! let window = &cycle::windows(&nedc, 8, 1).unwrap()[150];
//! let best = ocp::exhaustive_solve(window, &pt).unwrap();
//! assert_eq!(best.evaluated, 256);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod cycle;
pub mod error;
pub mod mpc;
pub mod nn;
pub mod ocp;
pub mod vehicle;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/powertrain.md")]
    mod powertrain {}
    #[doc = include_str!("../../../book/src/cycles.md")]
    mod cycles {}
    #[doc = include_str!("../../../book/src/relaxation.md")]
    mod relaxation {}
    #[doc = include_str!("../../../book/src/network.md")]
    mod network {}
    #[doc = include_str!("../../../book/src/closed_loop.md")]
    mod closed_loop {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
