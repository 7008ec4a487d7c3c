pub mod audio;
pub mod checkpoint;
pub mod data;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod smp;
pub mod tensor;
pub mod verify;
