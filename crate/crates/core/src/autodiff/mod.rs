//! Minimal reverse-mode differentiation over dense matrices.
//!
//! Build a computation on a [`Tape`] (each op is evaluated as it is pushed),
//! then call [`Tape::backward`] from a 1x1 node. Parameter leaves created with
//! [`Tape::param`] accumulate their gradient into the [`ParamStore`] they came
//! from; everything else is available through [`Gradients`].
//!
//! ```
//! use cipnn_core::autodiff::{ParamStore, Tape};
//! use cipnn_core::Matrix;
//!
//! let mut store = ParamStore::new();
//! let x = store.add(Matrix::scalar(3.0));
//! let mut tape = Tape::new();
//! let xv = tape.param(&store, x);
//! let y = tape.square(xv);
//! let y = tape.sum(y);
//! tape.backward(y, &mut store).unwrap();
//! assert_eq!(store.get(x).grad().item(), 6.0);
//! ```

mod backward;
pub mod check;
mod param;
mod tape;

pub use backward::Gradients;
pub use check::{grad_check, grad_check_params, GradCheck};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
