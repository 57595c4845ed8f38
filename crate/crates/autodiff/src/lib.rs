//! Minimal reverse-mode automatic differentiation over dense `f64`
//! matrices, plus the layers (MLP, GRU) and the Adam optimizer that RawNP
//! is built from.
//!
//! ```
//! use autodiff::{Graph, Matrix};
//!
//! let mut g = Graph::new();
//! let x = g.input(Matrix::from_elem((1, 2), 3.0)).unwrap();
//! let sq = g.square(x).unwrap();
//! let loss = g.sum(sq).unwrap();
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(x).unwrap()[[0, 1]], 6.0);
//! ```

pub mod adam;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod gru;
pub mod nn;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::Checkpoint;
pub use error::{AutodiffError, Result};
pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Matrix, Var};
pub use gru::GruCell;
pub use nn::{Mlp, Mode};
pub use params::{ParamId, ParamStore};
