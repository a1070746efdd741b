//! Chebyshev bases on model compact sets and the zero statistics of random
//! polynomials expanded in them.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bergman;
pub mod chebyshev;
pub mod compactset;
pub mod currents;
pub mod ensemble;
pub mod error;
pub mod frame;
pub mod multiindex;
pub mod stats;
pub mod zeros;

pub use error::{Error, Result};
