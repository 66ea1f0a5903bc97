extern crate openblas_src;

pub mod analysis;
pub mod baseline;
pub mod explore;
pub mod io;
pub mod lfr;
pub mod partition;
pub mod random;
pub mod sdp;
pub mod synthesis;
