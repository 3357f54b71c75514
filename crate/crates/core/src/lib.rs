pub mod asm;
pub mod campaign;
pub mod bus;
pub mod config;
pub mod coverage;
pub mod engine;
pub mod events;
pub mod firmware;
pub mod harness;
pub mod inject;
pub mod isa;
pub mod machine;
pub mod mutate;
pub mod periph;
pub mod protocol;
pub mod stats;
