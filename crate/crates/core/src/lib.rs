//! Backend-pluggable time integration toolkit: vectors with interchangeable
//! execution backends, a memory-space arbiter, composite and distributed
//! vectors, sparse and block-diagonal matrices, linear and nonlinear solvers,
//! and an adaptive IMEX Runge-Kutta integrator.

pub mod distvec;
pub mod integrator;
pub mod memory;
pub mod nvector;
pub mod solvers;
pub mod sunmatrix;
