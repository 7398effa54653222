pub mod assembly;
pub mod chebyshev;
pub mod clustering;
pub mod cqm_solver;
pub mod htensor;
pub mod kernels;
pub mod maca;
pub mod mesh;
pub mod quadrature;
