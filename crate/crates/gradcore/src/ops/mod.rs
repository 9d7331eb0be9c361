pub mod complex;
pub mod conv;
pub mod elementwise;
pub mod fft;
pub mod layout;
pub mod norm;
pub mod pool;
pub mod reduce;

pub use elementwise::{elementwise, Elementwise, LEAKY_SLOPE};
