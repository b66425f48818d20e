pub mod constitutive;
pub mod fields;
pub mod kinematics;
pub mod momentum;
pub mod transport;
pub mod engine;
pub mod verify;
pub mod shell;
