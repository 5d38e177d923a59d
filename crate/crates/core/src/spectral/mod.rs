//! Spectral building blocks: periodic Fourier on the square torus and
//! Chebyshev–Gauss–Lobatto collocation on [-1, 1].

pub mod chebyshev;
pub mod fourier;

pub use chebyshev::Chebyshev;
pub use fourier::Fourier2;
