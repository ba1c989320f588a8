//! Evaluation statistics: spectra, ensemble errors, derivative PDFs, KL
//! divergence, noise injection and Lyapunov exponents.

mod error;
mod lyapunov;
mod noise;
mod pdf;

pub use error::{attractor_scale, energy_spectrum, energy_spectrum_rows, relative_error, EnsembleError, Normalization};
pub use lyapunov::{lyapunov_exponent, LyapunovConfig, LyapunovEstimate, Propagator};
pub use noise::{add_noise_fourier, add_noise_grid, fourier_noise_spectrum};
pub use pdf::{derivative_counts, joint_pdf, kl_divergence, kl_overlap, JointPdf2D, PdfGrid};
