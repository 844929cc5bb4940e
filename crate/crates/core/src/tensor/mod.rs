//! Numerical kernel: vectors, distances, robust statistics, Gram-route PCA,
//! and seeded randomness.

mod buffer;
mod eigen;
mod pca;
mod rng;
mod stats;
mod vector;

pub use buffer::BufferMatrix;
pub use eigen::{symmetric_eigen, SymmetricEigen};
pub use pca::{orthogonal_energy, pca_topk, PrincipalBasis, SubspaceModel};
pub use rng::{derive_seed, Rng};
pub use stats::{coordinate_median, median, nearest_rank_index, quantile};
pub use vector::{
    axpy, common_dim, coordinate_std, dot, mean, mean_of, norm, pairwise_sq_distances, sq_distance,
    UpdateVector,
};

pub(crate) use stats::median_of_sorted;
pub(crate) use vector::pairwise_unchecked;
