pub mod specfun;
pub mod mesh;
pub mod potential;
pub mod linalg;
pub mod assembly;
pub mod sim;
pub mod oracle;
pub mod cli;
