#![no_std]

extern crate alloc;

pub mod affine;
pub mod automaton;
pub mod error;
pub mod engine;
pub mod event;
pub mod expr;
pub mod graph;
pub mod integrator;
pub mod interp;
pub mod interval;
mod rounding;
pub mod trivalent;
pub mod validate;

pub use affine::{AffineForm, NoiseAlloc, NoiseId, NoiseSource, Rel, SlackOnly};
pub use error::{Error, Result};
pub use interval::Interval;
pub use trivalent::Trivalent;
pub use expr::{BinOp, EnvAff, Expr, Guard, Reset, UnaryFn};
pub use graph::{ExprGraph, NodeId, Tape, Wrt};
