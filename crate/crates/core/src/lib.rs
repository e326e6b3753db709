pub mod calibration;
pub mod cli;
pub mod entanglement;
pub mod langevin_noise;
pub mod linalg;
pub mod ode;
pub mod params;
pub mod pipeline;
pub mod propagation;
pub mod steady_state;
pub mod sweeps;
pub mod verification;
