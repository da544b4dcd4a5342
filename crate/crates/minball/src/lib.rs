pub mod fr;
pub mod geometry;
pub mod kernels;
pub mod operators;
pub mod sampling;
pub mod special;
