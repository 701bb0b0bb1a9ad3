//! Core library for the social perception workbench: deterministic gridworld
//! simulation, Bayesian belief filtering, Monte-Carlo planning, trajectory
//! dataset generation, multitask perception networks, and evaluation.

pub mod belief;
pub mod datagen;
pub mod eval;
pub mod gridworld;
pub mod io;
pub mod planner;
pub mod rng;
pub mod sps;
