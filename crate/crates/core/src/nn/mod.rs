//! Numerical building blocks: matrices, a reverse-mode tape, recurrent
//! layers, and the Adam optimiser.

mod adam;
mod gru;
mod mat;
mod tape;

pub use adam::Adam;
pub(crate) use gru::uniform;
pub use gru::{GruParams, GruVars};
pub use mat::Mat;
pub use tape::{softmax_rows, Gradients, Tape, Var};
