pub mod bootstrap;
pub mod decay;
pub mod did;
pub mod error;
pub mod geo;
pub mod io;
pub mod panel;
pub mod report;
pub mod simulate;
pub mod spectral;
