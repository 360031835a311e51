//! Numerical core for the relativistic Vlasov-Maxwell system at small `eps = 1/c`
//! and its Vlasov-Poisson and higher-order Vlasov-Darwin approximations.
//!
//! Geometry is reduced to one space dimension with one or two velocity
//! dimensions (1D1V, 1D2V). All solvers work in perturbation variables
//! `f_total = mu + delta * f` unless a field is tagged [`Role::Full`].

pub mod equilibria;
pub mod error;
pub mod linear_response;
pub mod penrose;
pub mod phase_space;
pub mod solvers;
pub mod spectral_fields;
pub mod transport;

mod quad;

pub use equilibria::{Descriptor, Equilibrium, MomentConstants, Profile, VelocityGrid};
pub use error::{Error, Result};
pub use phase_space::{DistField, MomentSet, PhaseGrid, Role};
pub use spectral_fields::{EMState, Spectral, VectorField};

pub use num_complex::Complex64;
