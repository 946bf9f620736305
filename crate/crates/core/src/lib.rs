//! Information dimension rate of stationary multivariate Gaussian processes:
//! exact rank integrals of spectral densities, simulation, uniform
//! quantization, empirical dimension estimators and rate-distortion curves.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dimension;
pub mod entropy;
pub mod error;
pub mod numeric;
pub mod quant;
pub mod rd;
pub mod report;
pub mod rng;
pub mod sim;
pub mod spectral;
pub mod suite;

pub use dimension::{
    idr_slope_estimate, idr_slope_from_batch, invariance_suite, surrogate_from_batch,
    surrogate_idr_estimate, DimensionEstimate, DimensionMethod, InvarianceReport, SlopeSettings,
    SurrogateSettings, Transform,
};
pub use entropy::{
    block_entropy, cell_probabilities, exact_cell_entropy, kl_bound_check, kl_constant,
    plugin_entropy, CellTable, EntropyEstimate, EntropyMethod, KlReport,
};
pub use error::{Error, Result};
pub use quant::{
    bussgang_coefficient, dither, lemma4_spectrum_check, quantization_error, quantize,
    BussgangReport, Lemma4Report, QuantizedPathBatch,
};
pub use rd::{rd_curve, rd_dimension_estimate, waterfill_rate, EigenSpectrum, RdCurve, RdPoint};
pub use report::EstimateReport;
pub use sim::{
    autocovariance_from_spectrum, sample_paths, sample_paths_spectral, welch_psd,
    AutocovarianceSequence, SamplePathBatch, WelchEstimate, WelchSettings, Window,
};
pub use spectral::{
    complex_to_bivariate, corollary_bound, eval_spectrum, normalize_components, properness_check,
    rank_integral, rank_profile, ArmaTerm, Band, ComplexSpectrum, CorollaryBound, FrequencyGrid,
    GridSpectrum, ModelDocument, Normalization, Properness, RankIntegral, RankProfile,
    RankTolerance, SpectralLine, SpectralMatrix, SpectralModel,
};
