//! Spectral simulator for a Klein-Gordon vector field linearly coupled to a
//! harmonic particle on a periodic box, with the resolvent, Gaussian
//! measure and scattering machinery used to study its statistical
//! equilibrium. Numerics are generic over [`real::Real`]; the aliases below
//! fix the usual double-precision instantiation.

pub mod dynamics;
pub mod error;
pub mod io;
pub mod measures;
pub mod model;
pub mod quad;
pub mod radial;
pub mod real;
pub mod resolvent;
pub mod scattering;
pub mod spectral;

pub use error::{Error, Result};

pub type Model = model::DiscreteModel<f64>;
pub type Grid = spectral::GridSpec<f64>;
pub type State = dynamics::FullState<f64>;
pub type Spectral = dynamics::SpectralState<f64>;
pub type Functional = dynamics::TestFunctional<f64>;
pub type Plan = scattering::ScatteringPlan<f64>;
pub type Profiles = scattering::ScatteringProfiles<f64>;
