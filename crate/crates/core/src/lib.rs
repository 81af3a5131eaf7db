pub mod ces;
pub mod config;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod innovation;
pub mod scenario;
pub mod thermo;
pub mod trajectory;
pub mod verify;
