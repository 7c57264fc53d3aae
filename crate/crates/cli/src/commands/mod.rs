pub mod calibrate;
pub mod gaussian;
pub mod kl;
pub mod select;
pub mod sweep;
