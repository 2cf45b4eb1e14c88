//! Transform-domain single-image super-resolution.
//!
//! The pipeline runs a bicubic-enlarged low-resolution image through a
//! convolutional transform layer (initialized as, and verifiably equivalent
//! to, a strided block DCT), restores the high-frequency maps with a small
//! residual CNN, and inverts the transform to produce the output image. The
//! transform layer itself can be trained, regularized toward pairwise
//! orthogonality and toward the complexity profile of the DCT family.
//!
//! Everything is computed in f64 with hand-derived gradients that are
//! cross-checked against central finite differences.

pub mod cdct;
pub mod error;
pub mod imaging;
pub mod nn;
pub mod container;
pub mod objective;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod tensor;
pub mod trainer;
pub mod transform;

pub use cdct::{
    block_dct_oracle, cdct_forward, cdct_inverse, cdct_inverse_unweighted, gram_matrix,
    off_diagonal_energy, split_cube, CubeSplit, DctCube,
};
pub use error::{Error, Result};
pub use imaging::{
    bicubic_resize, bicubic_scale, psnr, rgb_to_ycbcr, spectrum_profile, ssim, ycbcr_to_rgb,
    ColorImage, LumaImage, QualityReport,
};
pub use nn::{
    activation_memory, architecture, cnn_forward, conv2d_same, count_parameters,
    vdsr_reference_weights, xavier_init, Activation, ConvLayer, Network, ParameterCount, Variant,
};
pub use tensor::{Dtype, Tensor};
pub use transform::{
    dct_basis, filter_variance, random_orthonormal_bank, zigzag, BasisIndex2D, Filter, FilterBank,
    FilterTag, ZigZag,
};
