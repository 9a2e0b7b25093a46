// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod closedform;
pub mod density;
pub mod error;
pub mod induced;
pub mod model;
pub mod moments;
pub mod montecarlo;
pub mod quad;
pub mod specfun;
