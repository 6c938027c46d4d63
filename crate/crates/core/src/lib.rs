//! Simulated process tomography of a dual-rail polarization quantum memory.
//!
//! The crate models the memory as a lossy single-qubit channel, synthesizes
//! photon counts for the 36 preparation/analysis settings of six-state
//! polarization tomography, and reconstructs the process matrix by linear
//! inversion or Poisson maximum likelihood. [`sweep`] ties these together
//! into a fidelity-and-efficiency versus storage-time study.

pub mod channel;
pub mod matrix;
pub mod polarization;
pub mod rng;
pub mod sweep;
pub mod tomography;

pub use channel::{
    apply_chi, chi_from_kraus, efficiency_decay, memory_chi, off_chi, simulate_dataset, transmitted_chi, unitary_chi,
    ChannelError, ChannelTag, MemoryChannelParams, MemoryModel, ProcessMatrix, ShotConfig, TomographyDataset,
};
pub use matrix::{ComplexMatrix, C64};
pub use polarization::{DensityMatrix, Label};
pub use tomography::{
    efficiency_of, linear_inversion, mle_reconstruct, monte_carlo_errors, process_fidelity, CountTable,
    FidelityEstimate, Method, MleOptions, ReconstructionResult, TomographyError,
};
