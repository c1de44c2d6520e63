//! Free boundary KPP dynamics under time almost periodic forcing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod forcing;
pub mod freeboundary;
pub mod harness;
pub mod kinetics;
pub mod semiwave;
pub mod spectral;
pub mod speed;
pub mod tridiag;
